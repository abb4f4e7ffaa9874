"""Conformal metrics ``h * g`` on meshes.

The base metric is given by per-edge lengths (usually pulled back from an
immersion); the conformal factor ``h`` lives on vertices. Over a triangle the
factor is integrated with the arithmetic mean of its vertex values, and a
boundary edge is stretched by the square root of the mean of its end values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from core.errors import DegenerateMetricError, InvalidParameterError
from core.utils.fingerprint import hash_array
from geometry.mesh import Immersion, Mesh, degenerate_triangles

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ConformalMetric:
    """Base edge lengths plus a positive per-vertex conformal factor."""

    base_edge_lengths: np.ndarray
    factor: np.ndarray

    def __post_init__(self) -> None:
        lengths = np.array(self.base_edge_lengths, dtype=float)
        factor = np.array(self.factor, dtype=float)
        if lengths.ndim != 1 or factor.ndim != 1:
            raise InvalidParameterError("edge lengths and factor must be 1-D arrays")
        if not np.all(lengths > 0):
            raise InvalidParameterError("base edge lengths must be positive")
        if not np.all(np.isfinite(factor)) or not np.all(factor > 0):
            raise InvalidParameterError("conformal factor must be finite and positive")
        lengths.setflags(write=False)
        factor.setflags(write=False)
        object.__setattr__(self, "base_edge_lengths", lengths)
        object.__setattr__(self, "factor", factor)

    def with_factor(self, factor: np.ndarray) -> "ConformalMetric":
        """Same base metric, new conformal factor."""
        return ConformalMetric(self.base_edge_lengths, factor)

    def scaled(self, c: float) -> "ConformalMetric":
        return ConformalMetric(self.base_edge_lengths, self.factor * c)

    @cached_property
    def fingerprint(self) -> str:
        return hash_array(self.base_edge_lengths, self.factor)

    @cached_property
    def class_fingerprint(self) -> str:
        """Identifies the conformal class: base lengths up to a global scale."""
        return hash_array(np.round(self.base_edge_lengths / self.base_edge_lengths.max(), 12))


@dataclass(frozen=True, eq=False)
class BoundaryDensity:
    """Per-vertex density; only boundary values are used."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, mesh: Mesh, c: float = 1.0) -> "BoundaryDensity":
        if not c > 0:
            raise InvalidParameterError(f"density must be positive, got {c}")
        return cls(np.full(mesh.n_vertices, float(c)))

    def check(self, mesh: Mesh) -> None:
        if len(self.values) != mesh.n_vertices:
            raise InvalidParameterError("density must have one value per vertex")
        b = self.values[mesh.boundary_vertices]
        if not np.all(np.isfinite(b)) or not np.all(b > 0):
            raise InvalidParameterError("density must be positive on every boundary vertex")

    @cached_property
    def fingerprint(self) -> str:
        return hash_array(self.values)


# ----------------------------------------------------------------------
# Construction
# ----------------------------------------------------------------------
def pullback(immersion: Immersion, mesh: Mesh) -> ConformalMetric:
    """Metric induced on *mesh* by *immersion*, with factor 1."""
    x = immersion.coords
    if len(x) != mesh.n_vertices:
        raise InvalidParameterError("immersion and mesh differ in vertex count")
    bad = degenerate_triangles(x, mesh.triangles)
    if len(bad):
        raise DegenerateMetricError(f"{len(bad)} immersed triangles are degenerate (first: {bad[0]})")
    e = mesh.edges
    lengths = np.linalg.norm(x[e[:, 1]] - x[e[:, 0]], axis=1)
    return ConformalMetric(lengths, np.ones(mesh.n_vertices))


def identity_metric(mesh: Mesh) -> ConformalMetric:
    return pullback(Immersion.identity(mesh), mesh)


def sphere_factor(x: np.ndarray) -> np.ndarray:
    """Conformal factor 4 / (1 + |x|^2)^2 of the round metric in the stereographic chart."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        sq = x * x
    else:
        sq = np.sum(x * x, axis=-1)
    return 4.0 / (1.0 + sq) ** 2


def random_smooth_factor(
    mesh: Mesh,
    rng: np.random.Generator,
    low: float,
    high: float,
    modes: int = 6,
) -> np.ndarray:
    """Smooth positive factor whose vertex values span exactly [low, high].

    A sum of random plane waves is rescaled to [0, 1] and mapped
    exponentially, so log h is smooth and both extremes are attained.
    """
    if not 0 < low < high:
        raise InvalidParameterError(f"need 0 < low < high, got {low}, {high}")
    x = mesh.vertices
    diameter = float(np.ptp(x, axis=0).max()) or 1.0
    freq = rng.normal(scale=2.0 * np.pi / diameter, size=(modes, mesh.dim))
    phase = rng.uniform(0, 2 * np.pi, size=modes)
    amp = rng.uniform(0.5, 1.0, size=modes)
    s = np.cos(x @ freq.T + phase) @ amp
    s = (s - s.min()) / (s.max() - s.min())
    return low * (high / low) ** s


# ----------------------------------------------------------------------
# Measures
# ----------------------------------------------------------------------
def corner_lengths(mesh: Mesh, metric: ConformalMetric) -> np.ndarray:
    """Base length of the edge opposite each triangle corner, shape (F, 3)."""
    if len(metric.base_edge_lengths) != len(mesh.edges):
        raise InvalidParameterError("metric does not match the mesh edge set")
    return metric.base_edge_lengths[mesh.triangle_edges]


def base_triangle_areas(mesh: Mesh, metric: ConformalMetric) -> np.ndarray:
    """Heron areas from edge lengths (Kahan's stable ordering)."""
    lengths = np.sort(corner_lengths(mesh, metric), axis=1)[:, ::-1]
    a, b, c = lengths[:, 0], lengths[:, 1], lengths[:, 2]
    terms = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    # strict triangle inequality, with a relative floor for round-off
    bad = (c - (a - b) <= 1e-14 * a) | (terms <= 0)
    if np.any(bad):
        raise DegenerateMetricError(
            f"{int(bad.sum())} triangles violate the strict triangle inequality"
        )
    return 0.25 * np.sqrt(terms)


def triangle_factor(mesh: Mesh, metric: ConformalMetric) -> np.ndarray:
    """Mean conformal factor per triangle."""
    return metric.factor[mesh.triangles].mean(axis=1)


def area(mesh: Mesh, metric: ConformalMetric) -> float:
    """Total area of *mesh* under ``h * g``."""
    return float(np.sum(base_triangle_areas(mesh, metric) * triangle_factor(mesh, metric)))


def boundary_edge_data(mesh: Mesh, metric: ConformalMetric, rho: Optional[BoundaryDensity] = None):
    """Boundary edges with their stretched lengths and mean densities."""
    ids = mesh.boundary_edge_ids
    e = mesh.edges[ids]
    h = metric.factor
    lengths = metric.base_edge_lengths[ids] * np.sqrt(0.5 * (h[e[:, 0]] + h[e[:, 1]]))
    if rho is None:
        dens = np.ones(len(ids))
    else:
        rho.check(mesh)
        dens = 0.5 * (rho.values[e[:, 0]] + rho.values[e[:, 1]])
    return e, lengths, dens


def boundary_mass(mesh: Mesh, metric: ConformalMetric, rho: BoundaryDensity) -> float:
    """Total mass of the density over the boundary under ``h * g``."""
    _, lengths, dens = boundary_edge_data(mesh, metric, rho)
    return float(np.sum(lengths * dens))


def immersion_conformality(mesh: Mesh, metric: ConformalMetric, immersion: Immersion) -> np.ndarray:
    """Per-triangle deviation of the pulled-back metric from a multiple of *metric*.

    For each triangle the squared length ratios of the three edges are
    compared; 0 means the immersion is conformal on that triangle.
    """
    x = immersion.coords
    e = mesh.edges
    image = np.linalg.norm(x[e[:, 1]] - x[e[:, 0]], axis=1)
    ratio = (image / metric.base_edge_lengths)[mesh.triangle_edges] ** 2
    mean = ratio.mean(axis=1)
    return (ratio.max(axis=1) - ratio.min(axis=1)) / mean


# ----------------------------------------------------------------------
# CSV sidecars
# ----------------------------------------------------------------------
def write_vertex_values(path: Path, values: np.ndarray, indices: Optional[np.ndarray] = None) -> None:
    """Write ``vertex_index,value`` rows."""
    values = np.asarray(values, dtype=float)
    if indices is None:
        indices = np.arange(len(values))
        column = values
    else:
        column = values[indices]
    rows = np.column_stack([indices, column])
    np.savetxt(Path(path), rows, delimiter=",", fmt=["%d", "%.17g"],
               header="vertex_index,value", comments="")


def read_vertex_values(path: Path, n_vertices: int, fill: float = np.nan) -> np.ndarray:
    """Read a ``vertex_index,value`` sidecar; missing vertices get *fill*."""
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    idx = data[:, 0].astype(np.int64)
    if idx.min() < 0 or idx.max() >= n_vertices:
        raise InvalidParameterError(f"{path}: vertex index out of range")
    out = np.full(n_vertices, fill, dtype=float)
    out[idx] = data[:, 1]
    return out

"""Linear finite elements for a conformal metric on a triangle mesh.

The stiffness matrix is the cotangent Laplacian computed from base edge
lengths only; in two dimensions the Dirichlet energy does not see the
conformal factor. Mass matrices carry the factor through the per-triangle
mean ``h_T`` and boundary masses through the stretched edge lengths and the
density.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np
from cachetools import LRUCache, cached
from cachetools.keys import hashkey
from scipy import sparse

from geometry.mesh import Mesh
from geometry.metric import (
    BoundaryDensity,
    ConformalMetric,
    base_triangle_areas,
    boundary_edge_data,
    corner_lengths,
    triangle_factor,
)

logger = logging.getLogger(__name__)

_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
_LOCAL_EDGE_MASS = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0


@dataclass(frozen=True, eq=False)
class FemSystem:
    """Assembled P1 matrices for one (mesh, metric, density) triple."""

    stiffness: sparse.csr_matrix
    interior_mass: sparse.csr_matrix
    boundary_mass: sparse.csr_matrix
    triangles: np.ndarray
    triangle_weights: np.ndarray
    boundary_vertices: np.ndarray
    interior_vertices: np.ndarray
    mesh_fingerprint: str
    metric_fingerprint: str
    lumped: bool = False

    @property
    def n_dof(self) -> int:
        return self.stiffness.shape[0]

    @property
    def dof_map(self) -> np.ndarray:
        """Vertex index of each degree of freedom (P1: the identity)."""
        return np.arange(self.n_dof)

    def weighted_mass(self, values: np.ndarray) -> sparse.csr_matrix:
        """Mass matrix with the per-triangle mean of *values* folded in."""
        mean = np.asarray(values, dtype=float)[self.triangles].mean(axis=1)
        return _mass_matrix(self.triangles, self.triangle_weights * mean, self.n_dof, self.lumped)


def _mass_matrix(triangles: np.ndarray, weights: np.ndarray, n: int, lumped: bool) -> sparse.csr_matrix:
    if lumped:
        diag = np.bincount(triangles.ravel(), weights=np.repeat(weights / 3.0, 3), minlength=n)
        return sparse.diags(diag, format="csr")
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    vals = (weights[:, None, None] * _LOCAL_MASS[None]).ravel()
    return sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def cotangent_stiffness(mesh: Mesh, metric: ConformalMetric) -> sparse.csr_matrix:
    """Cotangent Laplacian from edge lengths (positive semi-definite)."""
    lengths = corner_lengths(mesh, metric)
    areas = base_triangle_areas(mesh, metric)
    sq = lengths ** 2
    # cot of the corner angle opposite edge i
    cot = (sq[:, [1, 2, 0]] + sq[:, [2, 0, 1]] - sq) / (4.0 * areas[:, None])
    t = mesh.triangles
    i = t[:, [1, 2, 0]].ravel()
    j = t[:, [2, 0, 1]].ravel()
    w = 0.5 * cot.ravel()
    n = mesh.n_vertices
    off = sparse.coo_matrix((np.concatenate([-w, -w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                            shape=(n, n)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sparse.diags(diag)).tocsr()


def assemble(mesh: Mesh, metric: ConformalMetric, rho: Optional[BoundaryDensity] = None,
             lumped: bool = False) -> FemSystem:
    """Stiffness, interior mass and boundary mass for ``(mesh, h*g, rho)``."""
    stiffness = cotangent_stiffness(mesh, metric)
    weights = base_triangle_areas(mesh, metric) * triangle_factor(mesh, metric)
    n = mesh.n_vertices
    mass = _mass_matrix(mesh.triangles, weights, n, lumped)

    e, lengths, dens = boundary_edge_data(mesh, metric, rho)
    if len(e):
        local = (lengths * dens)[:, None, None] * _LOCAL_EDGE_MASS[None]
        rows = np.repeat(e, 2, axis=1).ravel()
        cols = np.tile(e, (1, 2)).ravel()
        bmass = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    else:
        bmass = sparse.csr_matrix((n, n))

    logger.debug("Assembled %d DOF (%d boundary), lumped=%s", n, len(mesh.boundary_vertices), lumped)
    return FemSystem(
        stiffness=stiffness,
        interior_mass=mass,
        boundary_mass=bmass,
        triangles=mesh.triangles,
        triangle_weights=weights,
        boundary_vertices=mesh.boundary_vertices,
        interior_vertices=mesh.interior_vertices,
        mesh_fingerprint=mesh.fingerprint,
        metric_fingerprint=metric.fingerprint,
        lumped=lumped,
    )


_SYSTEM_CACHE: LRUCache = LRUCache(maxsize=16)
_SYSTEM_LOCK = threading.RLock()


def _system_key(mesh, metric, rho=None, lumped=False):
    return hashkey(mesh.fingerprint, metric.fingerprint, rho.fingerprint if rho is not None else None, lumped)


@cached(_SYSTEM_CACHE, key=_system_key, lock=_SYSTEM_LOCK)
def cached_assemble(mesh: Mesh, metric: ConformalMetric, rho: Optional[BoundaryDensity] = None,
                    lumped: bool = False) -> FemSystem:
    """:func:`assemble`, memoized on content fingerprints."""
    return assemble(mesh, metric, rho, lumped)


def dirichlet_energy(system: FemSystem, values: np.ndarray) -> float:
    """Sum over coordinate columns of ``f^T K f``."""
    f = np.asarray(values, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    return float(np.einsum("ik,ik->", f, system.stiffness @ f))

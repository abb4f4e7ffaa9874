"""Cylinder deformation at a boundary point and the Dirichlet blow-up sweep.

``h_eps`` turns a flat half-ball of radius eps around a boundary vertex into
a half-cylinder of length L capped by a round piece; the metric factor is
multiplied by ``h_eps**2``. Area grows like ``pi * eps * L`` while the first
Dirichlet eigenvalue stays bounded below, so their product is unbounded in
the conformal class.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import (
    ConstraintViolationError,
    InvalidParameterError,
    InvariantViolationError,
    RefinementNeededError,
)
from geometry.mesh import Mesh, generate_boundary_graded_disk
from geometry.metric import ConformalMetric, area, identity_metric
from spectral.eigen import dirichlet_spectrum, neumann_spectrum
from spectral.fem import assemble

logger = logging.getLogger(__name__)

DIMENSION = 2
MIN_TIP_VERTICES = 8


@dataclass(frozen=True)
class CylinderDeformation:
    center: int
    epsilon: float
    length: float

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise InvalidParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not self.length >= 0:
            raise InvalidParameterError(f"length must be non-negative, got {self.length}")

    @property
    def tip_radius(self) -> float:
        return self.epsilon * math.exp(-self.length / self.epsilon)


def cylinder_factor(r, d: CylinderDeformation):
    """``1`` beyond eps, ``eps/r`` down to the tip radius, ``exp(L/eps)`` inside it."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise InvalidParameterError("radial distance must be non-negative")
    eps, tip = d.epsilon, d.tip_radius
    inner = math.exp(d.length / eps)
    h = np.where(r >= eps, 1.0, np.where(r >= tip, eps / np.maximum(r, tip), inner))
    return h if h.ndim else float(h)


def _check_flat(mesh: Mesh, metric: ConformalMetric, d: CylinderDeformation, dist: np.ndarray) -> None:
    inside = dist < d.epsilon
    h = metric.factor[inside]
    if np.ptp(h) > 1e-8 * h.max():
        raise ConstraintViolationError("conformal factor is not constant near the deformation center")
    e = mesh.edges
    near = inside[e[:, 0]] & inside[e[:, 1]]
    chart = np.linalg.norm(mesh.vertices[e[near, 1]] - mesh.vertices[e[near, 0]], axis=1)
    ratio = metric.base_edge_lengths[near] / chart
    if len(ratio) and np.ptp(ratio) > 1e-8 * ratio.max():
        raise ConstraintViolationError("base metric is not flat near the deformation center")
    if mesh.dim > 2 and inside.sum() >= 3:
        pts = mesh.vertices[inside] - mesh.vertices[inside].mean(axis=0)
        sv = np.linalg.svd(pts, compute_uv=False)
        if sv[2] > 1e-8 * sv[0]:
            raise ConstraintViolationError("mesh is not planar near the deformation center")


def apply_cylinder(mesh: Mesh, metric: ConformalMetric, d: CylinderDeformation) -> ConformalMetric:
    """Multiply the factor by ``h_eps(|x - center|)**2``."""
    if d.center not in set(mesh.boundary_vertices.tolist()):
        raise InvalidParameterError(f"vertex {d.center} is not on the boundary")
    dist = np.linalg.norm(mesh.vertices - mesh.vertices[d.center], axis=1)
    _check_flat(mesh, metric, d, dist)
    if d.length > 0:
        tip = d.tip_radius
        count = int(np.count_nonzero(dist <= tip))
        if count < MIN_TIP_VERTICES:
            raise RefinementNeededError(
                f"only {count} vertices within the tip radius {tip:.3e}", tip / 4.0
            )
    h = cylinder_factor(dist, d)
    return metric.with_factor(metric.factor * h * h)


# ----------------------------------------------------------------------
# Blow-up sweep
# ----------------------------------------------------------------------
@dataclass
class BlowupRow:
    length: float
    lambda_d: float
    lambda_n: float
    area: float

    @property
    def prod_d(self) -> float:
        return self.lambda_d * self.area ** (2 / DIMENSION)

    @property
    def prod_n(self) -> float:
        return self.lambda_n * self.area ** (2 / DIMENSION)


@dataclass
class BlowupTable:
    epsilon: float
    rows: List[BlowupRow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("L,lambda_D,lambda_N,area,prod_D,prod_N\n")
        for r in self.rows:
            values = (r.length, r.lambda_d, r.lambda_n, r.area, r.prod_d, r.prod_n)
            buf.write(",".join(repr(float(v)) for v in values) + "\n")
        return buf.getvalue()

    def check(self, neumann_limit: float = 8 * math.pi) -> None:
        """Raise if a Neumann product reaches the limit or Dirichlet collapses."""
        for r in self.rows:
            if not r.prod_n < neumann_limit:
                raise InvariantViolationError(f"lambda_N * area = {r.prod_n:.6f} at L={r.length}")
        first = self.rows[0].lambda_d
        low = min(r.lambda_d for r in self.rows)
        if low < 0.1 * first:
            raise InvariantViolationError(f"Dirichlet eigenvalue dropped to {low:.4g}")


def blowup_point(mesh: Mesh, metric: ConformalMetric, center: int, eps: float, length: float) -> BlowupRow:
    deformed = apply_cylinder(mesh, metric, CylinderDeformation(center, eps, length))
    system = assemble(mesh, deformed)
    lam_d = float(dirichlet_spectrum(system, 1, keep_vectors=False).eigenvalues[0])
    lam_n = float(neumann_spectrum(system, 1, keep_vectors=False).eigenvalues[1])
    row = BlowupRow(length, lam_d, lam_n, area(mesh, deformed))
    logger.info("L=%g: lambda_D=%.6f lambda_N=%.6f area=%.6f", length, lam_d, lam_n, row.area)
    return row


def blowup_experiment(
    mesh: Mesh,
    metric: ConformalMetric,
    eps: float,
    schedule: Sequence[float],
    center: int = 0,
    mapper: Callable[[Callable, Iterable], Iterable] = map,
) -> BlowupTable:
    """Dirichlet and Neumann eigenvalues of ``g_L`` for each L of *schedule*.

    The mesh must resolve the largest L; a mesh graded for it resolves every
    smaller one too. *mapper* may evaluate the points concurrently as long as
    it preserves order.
    """
    lengths = [float(L) for L in schedule]
    if not lengths or any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise InvalidParameterError("L schedule must be non-empty and strictly increasing")
    rows = list(mapper(lambda L: blowup_point(mesh, metric, center, eps, L), lengths))
    return BlowupTable(eps, rows)


def graded_disk_source(eps: float, max_length: float, radius: float = 1.0,
                       resolution: int = 32) -> Tuple[Mesh, ConformalMetric, int]:
    """Flat disk graded toward a boundary vertex for lengths up to *max_length*."""
    mesh, center = generate_boundary_graded_disk(radius, eps, max_length, resolution)
    return mesh, identity_metric(mesh), center


# ----------------------------------------------------------------------
# Lipschitz comparison
# ----------------------------------------------------------------------
@dataclass
class LipschitzReport:
    tau: float
    ratio: float
    area_ratio: float

    @property
    def conformal_window(self) -> Tuple[float, float]:
        return 1.0 / self.tau, self.tau

    @property
    def general_window(self) -> Tuple[float, float]:
        p = 3 * DIMENSION - 1
        return self.tau ** -p, self.tau ** p

    @property
    def area_window(self) -> Tuple[float, float]:
        p = DIMENSION / 2
        return self.tau ** -p, self.tau ** p

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "ratio": self.ratio,
            "area_ratio": self.area_ratio,
            "conformal_window": list(self.conformal_window),
            "general_window": list(self.general_window),
            "area_window": list(self.area_window),
        }


def _inside(value: float, window: Tuple[float, float], rel: float = 1e-9) -> bool:
    return window[0] * (1 - rel) <= value <= window[1] * (1 + rel)


def lipschitz_comparison_check(mesh: Mesh, metric: ConformalMetric, h: np.ndarray, tau: float,
                               eigen_tol: Optional[float] = 1e-9) -> LipschitzReport:
    """Compare λ_1 and area of ``h * g`` with those of ``g`` for ``1/τ <= h <= τ``."""
    h = np.asarray(h, dtype=float)
    if not tau >= 1:
        raise InvalidParameterError(f"tau must be >= 1, got {tau}")
    if h.shape != metric.factor.shape:
        raise InvalidParameterError("factor must have one value per vertex")
    if np.any(h < (1 / tau) * (1 - 1e-12)) or np.any(h > tau * (1 + 1e-12)):
        raise InvalidParameterError(f"factor range [{h.min():.4g}, {h.max():.4g}] exceeds [1/tau, tau]")
    lam = float(neumann_spectrum(assemble(mesh, metric), 1, keep_vectors=False).eigenvalues[1])
    deformed = metric.with_factor(metric.factor * h)
    lam_h = float(neumann_spectrum(assemble(mesh, deformed), 1, keep_vectors=False).eigenvalues[1])
    report = LipschitzReport(tau, lam_h / lam, area(mesh, deformed) / area(mesh, metric))
    rel = eigen_tol or 0.0
    if not _inside(report.ratio, report.conformal_window, rel):
        raise InvariantViolationError(f"eigenvalue ratio {report.ratio:.6f} outside [1/tau, tau]")
    if not _inside(report.ratio, report.general_window, rel):
        raise InvariantViolationError(f"eigenvalue ratio {report.ratio:.6f} outside [tau^-5, tau^5]")
    if not _inside(report.area_ratio, report.area_window, rel):
        raise InvariantViolationError(f"area ratio {report.area_ratio:.6f} outside the volume window")
    return report

"""Möbius transformations acting on immersed surfaces.

Immersions are given in the stereographic chart ``R^m`` of ``S^m``; the round
metric pulls back to ``sphere_factor(x) * g_eucl``. Modulo rotations of the
sphere the Möbius group is generated by homotheties and translations of the
chart, which is the search space of :func:`sup_volume_search`. Conformal
dilations of the sphere are used for balancing and reduced back to that family
by :func:`reduce_dilation`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import optimize

from core.errors import (
    ConvergenceError,
    DegenerateMetricError,
    InvalidImmersionError,
    InvalidParameterError,
    PointAtInfinityError,
)
from core.utils.metrics import EvaluationBudget
from geometry.mesh import Immersion, Mesh, degenerate_triangles, triangle_areas
from geometry.metric import (
    BoundaryDensity,
    ConformalMetric,
    base_triangle_areas,
    boundary_edge_data,
    sphere_factor,
    triangle_factor,
)

logger = logging.getLogger(__name__)

SPHERE_AREA = 4.0 * np.pi


# ----------------------------------------------------------------------
# Stereographic chart
# ----------------------------------------------------------------------
def stereographic_to_sphere(x: np.ndarray) -> np.ndarray:
    """Inverse stereographic projection ``R^m -> S^m``; 0 goes to the south pole."""
    x = np.asarray(x, dtype=float)
    sq = np.sum(x * x, axis=-1, keepdims=True)
    return np.concatenate([2.0 * x / (1.0 + sq), (sq - 1.0) / (1.0 + sq)], axis=-1)


def sphere_to_stereographic(y: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Stereographic projection from the north pole ``S^m -> R^m``."""
    y = np.asarray(y, dtype=float)
    denom = 1.0 - y[..., -1:]
    if np.any(np.abs(denom) <= tol):
        raise PointAtInfinityError("the north pole has no stereographic image")
    return y[..., :-1] / denom


# ----------------------------------------------------------------------
# Reduced Möbius family
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class MoebiusElement:
    """Chart similarity ``x -> scale * x + translation``."""

    scale: float
    translation: np.ndarray

    def __post_init__(self) -> None:
        t = np.array(self.translation, dtype=float).reshape(-1)
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise InvalidParameterError(f"scale must be finite and positive, got {self.scale}")
        if not np.all(np.isfinite(t)):
            raise InvalidParameterError("translation must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls, m: int) -> "MoebiusElement":
        return cls(1.0, np.zeros(m))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(x, dtype=float) + self.translation

    def compose(self, inner: "MoebiusElement") -> "MoebiusElement":
        """``self ∘ inner``."""
        return MoebiusElement(self.scale * inner.scale, self.scale * inner.translation + self.translation)

    def inverse(self) -> "MoebiusElement":
        return MoebiusElement(1.0 / self.scale, -self.translation / self.scale)

    def to_dict(self) -> dict:
        return {"scale": self.scale, "translation": [float(v) for v in self.translation]}


def apply(gamma: MoebiusElement, phi: Immersion) -> Immersion:
    if len(gamma.translation) != phi.dim:
        raise InvalidParameterError("Möbius element and immersion differ in dimension")
    return Immersion(gamma(phi.coords))


def rotate_in_chart(phi: Immersion, rotation: np.ndarray) -> Immersion:
    """Action of a sphere rotation fixing both poles, i.e. a linear chart rotation."""
    return Immersion(phi.coords @ np.asarray(rotation).T)


# ----------------------------------------------------------------------
# Spherical image volume
# ----------------------------------------------------------------------
def _planar_cap_integral(z: np.ndarray) -> np.ndarray:
    """Integral of 4/(1+|x|^2)^2 over planar triangles, shape (F, 3, 2).

    Uses Stokes: the integrand is the Gauss curvature density of the round
    metric, so the integral equals the boundary flux of log(1+|x|^2).
    """
    e1 = z[:, 1] - z[:, 0]
    e2 = z[:, 2] - z[:, 0]
    clockwise = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    z = z.copy()
    z[clockwise] = z[clockwise][:, [0, 2, 1]]
    total = np.zeros(len(z))
    for k in range(3):
        p, q = z[:, k], z[:, (k + 1) % 3]
        edge = q - p
        length = np.linalg.norm(edge, axis=1)
        e = edge / length[:, None]
        normal = np.column_stack([e[:, 1], -e[:, 0]])
        d = np.einsum("ij,ij->i", p, normal)
        s0 = np.einsum("ij,ij->i", p, e)
        s1 = s0 + length
        c = np.sqrt(1.0 + d * d)
        total += 2.0 * d / c * np.arctan2(length / c, 1.0 + s0 * s1 / (c * c))
    return total


def _exact_volumes(corners: np.ndarray) -> np.ndarray:
    """Spherical area of each flat chart triangle, corners shape (F, 3, m)."""
    a = corners[:, 0]
    u = corners[:, 1] - a
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    w = corners[:, 2] - a
    w -= np.einsum("ij,ij->i", w, u)[:, None] * u
    v = w / np.linalg.norm(w, axis=1, keepdims=True)
    zu = np.einsum("fkm,fm->fk", corners, u)
    zv = np.einsum("fkm,fm->fk", corners, v)
    au, av = zu[:, 0], zv[:, 0]
    # squared distance from the origin to the triangle's plane
    delta2 = np.maximum(np.einsum("ij,ij->i", a, a) - au * au - av * av, 0.0)
    c2 = 1.0 + delta2
    z = np.stack([zu, zv], axis=2) / np.sqrt(c2)[:, None, None]
    return _planar_cap_integral(z) / c2


def _midpoint_volumes(corners: np.ndarray) -> np.ndarray:
    mids = 0.5 * (corners + np.roll(corners, -1, axis=1))
    areas = triangle_areas(corners.reshape(-1, corners.shape[2]), np.arange(3 * len(corners)).reshape(-1, 3))
    return areas * sphere_factor(mids).mean(axis=1)


def triangle_spherical_volumes(points: np.ndarray, triangles: np.ndarray, quadrature: str = "centroid") -> np.ndarray:
    corners = points[triangles]
    if quadrature == "centroid":
        return triangle_areas(points, triangles) * sphere_factor(corners.mean(axis=1))
    if quadrature != "exact":
        raise InvalidParameterError(f"unknown quadrature {quadrature!r}")
    centroid = corners.mean(axis=1)
    diameter = np.linalg.norm(corners - np.roll(corners, 1, axis=1), axis=2).max(axis=1)
    # the closed form cancels badly on triangles much smaller than the factor's length scale
    small = diameter <= 1e-3 * np.sqrt(1.0 + np.sum(centroid ** 2, axis=1))
    out = np.empty(len(corners))
    if np.any(small):
        out[small] = _midpoint_volumes(corners[small])
    if np.any(~small):
        out[~small] = _exact_volumes(corners[~small])
    return out


def spherical_volume(phi: Immersion, mesh: Mesh, quadrature: str = "centroid") -> float:
    """Area of the immersed surface in the round metric of the chart.

    ``"centroid"`` evaluates the factor at each triangle centroid.
    ``"exact"`` integrates it exactly over each flat triangle, which stays
    bounded by 4*pi under arbitrary dilation.
    """
    bad = degenerate_triangles(phi.coords, mesh.triangles)
    if len(bad):
        raise DegenerateMetricError(f"{len(bad)} immersed triangles are degenerate")
    return float(triangle_spherical_volumes(phi.coords, mesh.triangles, quadrature).sum())


# ----------------------------------------------------------------------
# Sup-volume search
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class SearchBudget:
    r_min: float = 1e-2
    r_max: float = 1e3
    n_scales: int = 25
    n_anchors: int = 16
    multistarts: int = 4
    max_evaluations: int = 10_000
    xatol: float = 1e-6
    fatol: float = 1e-10
    quadrature: str = "exact"

    def __post_init__(self) -> None:
        if not 0 < self.r_min <= self.r_max:
            raise InvalidParameterError("need 0 < r_min <= r_max")
        if self.n_scales < 1 or self.n_anchors < 0 or self.multistarts < 0:
            raise InvalidParameterError("grid sizes must be non-negative")
        if self.max_evaluations < 1:
            raise InvalidParameterError("max_evaluations must be positive")


@dataclass
class SearchResult:
    best: MoebiusElement
    volume: float
    trace: np.ndarray
    evaluations: int
    grid_volume: float

    def trace_csv(self) -> str:
        m = self.trace.shape[1] - 2
        head = "R," + ",".join(f"t_{i + 1}" for i in range(m)) + ",volume"
        rows = [",".join(repr(float(v)) for v in row) for row in self.trace]
        return "\n".join([head] + rows) + "\n"

    def to_dict(self) -> dict:
        return {
            "best": self.best.to_dict(),
            "volume": self.volume,
            "grid_volume": self.grid_volume,
            "evaluations": self.evaluations,
            "sphere_area": SPHERE_AREA,
            "margin": SPHERE_AREA - self.volume,
        }


class _BudgetExhausted(Exception):
    pass


def sup_volume_search(phi: Immersion, mesh: Mesh, budget: SearchBudget = SearchBudget(),
                      seed: int = 0) -> SearchResult:
    """Lower bound on ``sup_γ Vol(γ∘φ)`` over homotheties and translations.

    A log-spaced grid of scales is combined with translations that bring
    anchor vertices to the origin; the best grid points seed Nelder–Mead
    refinements in ``(log R, t)``. Every evaluation counts against the budget
    and is recorded in the trace.
    """
    x = phi.coords
    tri = mesh.triangles
    bad = degenerate_triangles(x, tri)
    if len(bad):
        raise DegenerateMetricError(f"{len(bad)} immersed triangles are degenerate")
    m = phi.dim
    counter = EvaluationBudget(budget.max_evaluations)
    trace: List[List[float]] = []

    def evaluate(scale: float, t: np.ndarray) -> float:
        if not counter.take():
            raise _BudgetExhausted
        vol = float(triangle_spherical_volumes(scale * x + t, tri, budget.quadrature).sum())
        trace.append([scale, *map(float, t), vol])
        return vol

    rng = np.random.default_rng(seed)
    order = rng.permutation(mesh.n_vertices)[: budget.n_anchors]
    anchors = np.vstack([np.zeros((1, m)), x[order]])
    scales = np.geomspace(budget.r_min, budget.r_max, budget.n_scales)

    grid: List[Tuple[float, float, np.ndarray]] = []
    try:
        for scale in scales:
            for anchor in anchors:
                t = -scale * anchor
                grid.append((evaluate(scale, t), scale, t))
    except _BudgetExhausted:
        logger.warning("Budget exhausted during the grid phase after %d evaluations", counter.get())
    grid_volume = max((g[0] for g in grid), default=0.0)

    ranked = sorted(range(len(grid)), key=lambda k: -grid[k][0])[: budget.multistarts]
    diameter = float(np.ptp(x, axis=0).max())
    for rank, k in enumerate(ranked):
        if counter.exhausted:
            break
        _, scale, t = grid[k]
        x0 = np.concatenate([[np.log(scale)], t])
        steps = np.concatenate([[0.25], np.full(m, 0.05 * (1.0 + scale * diameter))])
        simplex = np.vstack([x0, x0 + np.diag(steps)])

        def objective(p: np.ndarray) -> float:
            return -evaluate(float(np.exp(min(p[0], np.log(budget.r_max)))), p[1:])

        starts_left = len(ranked) - rank
        try:
            optimize.minimize(
                objective, x0, method="Nelder-Mead",
                options=dict(maxfev=max(counter.remaining // starts_left, 1),
                             xatol=budget.xatol, fatol=budget.fatol, initial_simplex=simplex),
            )
        except _BudgetExhausted:
            break

    rows = np.asarray(trace)
    best_row = rows[int(np.argmax(rows[:, -1]))]
    best = MoebiusElement(best_row[0], best_row[1:-1])
    logger.info(
        "Sup search: %d evaluations, grid best %.6f, refined best %.6f (4*pi=%.6f)",
        counter.get(), grid_volume, best_row[-1], SPHERE_AREA,
    )
    return SearchResult(best, float(best_row[-1]), rows, counter.get(), grid_volume)


# ----------------------------------------------------------------------
# Conformal dilations and balancing
# ----------------------------------------------------------------------
def dilate(xi: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Conformal automorphism of the closed ball taking 0 to *xi*.

    On the sphere it reads ``xi + (1-|xi|^2)(y+xi)/|y+xi|^2`` and pushes mass
    toward ``xi/|xi|``.
    """
    xi = np.asarray(xi, dtype=float)
    y = np.asarray(y, dtype=float)
    s2 = float(xi @ xi)
    w = y + xi
    num = (1.0 - s2) * w + np.sum(w * w, axis=-1, keepdims=True) * xi
    den = 1.0 + 2.0 * (y @ xi) + np.sum(y * y, axis=-1) * s2
    return num / den[..., None]


def _center_and_jacobian(xi: np.ndarray, y: np.ndarray, w: np.ndarray, jacobian: bool = True):
    s2 = float(xi @ xi)
    v = y + xi
    D = np.sum(v * v, axis=1)
    g = xi + (1.0 - s2) * v / D[:, None]
    center = w @ g
    if not jacobian:
        return center, None
    d = len(xi)
    J = np.eye(d) * np.sum(w * (1.0 + (1.0 - s2) / D))
    J -= 2.0 * np.outer((w / D) @ v, xi)
    J -= 2.0 * (1.0 - s2) * np.einsum("k,ki,kj->ij", w / D ** 2, v, v)
    return center, J


@dataclass
class BalanceResult:
    dilation_center: np.ndarray
    dilation_parameter: float
    residual: float
    iterations: int
    xi: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "dilation_center": [float(v) for v in self.dilation_center],
            "dilation_parameter": self.dilation_parameter,
            "residual": self.residual,
            "iterations": self.iterations,
        }


def hersch_balance(phi: Immersion, measure: np.ndarray, tol: float = 1e-8,
                   max_iter: int = 200) -> Tuple[BalanceResult, Immersion]:
    """Find a dilation whose image has zero weighted center of mass.

    *phi* maps into the closed unit ball of ``R^{m+1}``; vertices carrying
    positive weight must lie on the sphere. The iteration is a damped Newton
    method on the dilation vector, halving the step whenever the residual
    would grow or the vector would leave the open ball.
    """
    y = phi.coords
    weights = np.asarray(measure, dtype=float)
    if weights.shape != (len(y),) or np.any(weights < 0):
        raise InvalidParameterError("measure must be one non-negative weight per vertex")
    mass = float(weights.sum())
    if not mass > 0:
        raise InvalidParameterError("measure has no mass")
    support = weights > 0
    radii = np.linalg.norm(y[support], axis=1)
    if np.max(np.abs(radii - 1.0)) > 1e-6:
        raise InvalidImmersionError("weighted vertices must lie on the unit sphere")
    ys = y[support]
    w = weights[support] / mass

    d = y.shape[1]
    xi = np.zeros(d)
    center, _ = _center_and_jacobian(xi, ys, w, jacobian=False)
    residual = float(np.linalg.norm(center))
    iterations = 0
    while residual > tol:
        if iterations >= max_iter:
            raise ConvergenceError("balancing did not converge", residual, iterations)
        center, J = _center_and_jacobian(xi, ys, w)
        try:
            step = -np.linalg.solve(J, center)
        except np.linalg.LinAlgError:
            step = -center
        alpha = 1.0
        for _ in range(60):
            trial = xi + alpha * step
            if np.linalg.norm(trial) < 1.0 - 1e-12:
                trial_center, _ = _center_and_jacobian(trial, ys, w, jacobian=False)
                trial_residual = float(np.linalg.norm(trial_center))
                if trial_residual < residual:
                    break
            alpha *= 0.5
        else:
            raise ConvergenceError("balancing step search stalled (measure close to a point mass?)",
                                   residual, iterations)
        xi, residual = trial, trial_residual
        iterations += 1
        logger.debug("balance it=%d |xi|=%.6f residual=%.3e alpha=%.3g", iterations,
                     np.linalg.norm(xi), residual, alpha)

    s = float(np.linalg.norm(xi))
    direction = xi / s if s > 0 else np.eye(d)[-1]
    result = BalanceResult(direction, s, residual, iterations, xi)
    logger.info("Balanced in %d iterations, s=%.6f, residual=%.3e", iterations, s, residual)
    return result, Immersion(dilate(xi, y))


def _rotation_taking(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Rotation in the plane of two unit vectors taking *source* to *target*."""
    d = len(source)
    cos = float(source @ target)
    ortho = target - cos * source
    sin = float(np.linalg.norm(ortho))
    if sin < 1e-14:
        if cos > 0:
            return np.eye(d)
        r = np.eye(d)
        r[0, 0] = -1.0
        r[-1, -1] = -1.0
        return r
    v = ortho / sin
    u = source
    return (np.eye(d) + sin * (np.outer(v, u) - np.outer(u, v))
            + (cos - 1.0) * (np.outer(u, u) + np.outer(v, v)))


def reduce_dilation(xi: np.ndarray) -> Tuple[MoebiusElement, np.ndarray, np.ndarray]:
    """Chart form of the dilation with vector *xi*.

    Returns ``(gamma, Q, r)`` with ``r`` a rotation of the sphere such that
    ``r⁻¹ ∘ dilation ∘ σ = σ ∘ Q ∘ gamma`` where σ is the inverse
    stereographic map and Q a chart rotation fixing both poles.
    """
    xi = np.asarray(xi, dtype=float)
    d = len(xi)
    m = d - 1
    north = np.eye(d)[-1]
    r = _rotation_taking(north, dilate(xi, north[None, :])[0])

    def chart_map(x: np.ndarray) -> np.ndarray:
        return sphere_to_stereographic(dilate(xi, stereographic_to_sphere(x)) @ r)

    offset = chart_map(np.zeros((1, m)))[0]
    columns = (chart_map(np.eye(m)) - offset).T
    scale = abs(np.linalg.det(columns)) ** (1.0 / m)
    Q = columns / scale
    return MoebiusElement(scale, Q.T @ offset), Q, r


# ----------------------------------------------------------------------
# Balancing measures
# ----------------------------------------------------------------------
def volume_measure(mesh: Mesh, metric: ConformalMetric) -> np.ndarray:
    """Lumped area weights of ``h * g`` per vertex."""
    w = base_triangle_areas(mesh, metric) * triangle_factor(mesh, metric) / 3.0
    return np.bincount(mesh.triangles.ravel(), weights=np.repeat(w, 3), minlength=mesh.n_vertices)


def boundary_measure(mesh: Mesh, metric: ConformalMetric, rho: Optional[BoundaryDensity] = None) -> np.ndarray:
    """Lumped boundary weights of ``rho dv`` per vertex."""
    e, lengths, dens = boundary_edge_data(mesh, metric, rho)
    w = 0.5 * lengths * dens
    return np.bincount(e.ravel(), weights=np.repeat(w, 2), minlength=mesh.n_vertices)

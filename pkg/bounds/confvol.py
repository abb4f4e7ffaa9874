"""Conformal-volume eigenvalue bounds and their numerical witnesses.

Reports compare a spectral left-hand side with two right-hand sides: the
volume of a balanced Möbius image of the immersion (the lemma form) and the
universal sphere constant (the global form). All reports are two-dimensional;
the exponents of the general formulas are kept in :func:`_volume_power`.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import InvalidImmersionError, InvalidParameterError
from geometry.mesh import Immersion, Mesh, triangle_areas
from geometry.metric import (
    BoundaryDensity,
    ConformalMetric,
    area,
    boundary_mass,
    immersion_conformality,
    identity_metric,
    sphere_factor,
)
from geometry.moebius import (
    SPHERE_AREA,
    SearchResult,
    apply,
    boundary_measure,
    hersch_balance,
    reduce_dilation,
    spherical_volume,
    stereographic_to_sphere,
    volume_measure,
)
from spectral.eigen import neumann_spectrum, schrodinger_neumann_spectrum, steklov_spectrum
from spectral.fem import FemSystem, assemble, dirichlet_energy

logger = logging.getLogger(__name__)

DIMENSION = 2
CONFORMALITY_WARNING = 0.02


def _volume_power(volume: float, exponent_num: int, n: int = DIMENSION) -> float:
    """``volume ** (exponent_num / n)``; the reports use 2/n and (2-n)/n."""
    return volume ** (exponent_num / n)


def sphere_constant(n: int = DIMENSION) -> float:
    """``n * ω_n^(2/n)``; 8π for surfaces."""
    omega = 2 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)
    return n * _volume_power(omega, 2, n)


@dataclass
class BoundReport:
    kind: str
    left_hand: float
    right_lemma: Optional[float]
    right_global: float
    witness: dict = field(default_factory=dict)
    conformal_class: str = ""
    details: dict = field(default_factory=dict)

    @property
    def margin_lemma(self) -> Optional[float]:
        return None if self.right_lemma is None else self.right_lemma - self.left_hand

    @property
    def margin_global(self) -> float:
        return self.right_global - self.left_hand

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "left_hand": self.left_hand,
            "right_lemma": self.right_lemma,
            "right_global": self.right_global,
            "margin_lemma": self.margin_lemma,
            "margin_global": self.margin_global,
            "witness": self.witness,
            "conformal_class": self.conformal_class,
            "details": self.details,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ----------------------------------------------------------------------
# Neumann
# ----------------------------------------------------------------------
def balanced_chart_volume(mesh: Mesh, phi: Immersion, weights: np.ndarray, tol: float = 1e-8):
    """Balance ``σ∘φ`` for *weights* and return its spherical volume and witness."""
    on_sphere = Immersion(stereographic_to_sphere(phi.coords))
    balance, _ = hersch_balance(on_sphere, weights, tol=tol)
    gamma, _, _ = reduce_dilation(balance.xi)
    volume = spherical_volume(apply(gamma, phi), mesh, quadrature="exact")
    witness = {"moebius": gamma.to_dict(), "balance": balance.to_dict()}
    return volume, witness


def neumann_bound_report(mesh: Mesh, metric: ConformalMetric, immersion: Immersion,
                         measure: str = "volume", tol: float = 1e-8) -> BoundReport:
    """``λ_1 Vol`` against ``2 Vol(γ*φ)`` and ``8π``.

    The immersion lives in the stereographic chart. γ* balances it for the
    area measure of the metric (``measure="volume"``) or for the boundary
    length measure (``measure="boundary"``).
    """
    deviation = float(immersion_conformality(mesh, metric, immersion).max())
    if deviation > CONFORMALITY_WARNING:
        logger.warning("Immersion is not conformal to the metric (max deviation %.3f)", deviation)
    system = assemble(mesh, metric)
    lam1 = float(neumann_spectrum(system, 1, keep_vectors=False).eigenvalues[1])
    vol = area(mesh, metric)
    if measure == "volume":
        weights = volume_measure(mesh, metric)
    elif measure == "boundary":
        weights = boundary_measure(mesh, metric)
    else:
        raise InvalidParameterError(f"unknown balancing measure {measure!r}")
    image_volume, witness = balanced_chart_volume(mesh, immersion, weights, tol)
    left = lam1 * _volume_power(vol, 2)
    right = DIMENSION * _volume_power(image_volume, 2)
    report = BoundReport(
        kind="neumann",
        left_hand=left,
        right_lemma=right,
        right_global=sphere_constant(),
        witness=witness,
        conformal_class=metric.class_fingerprint,
        details={"lambda_1": lam1, "area": vol, "image_volume": image_volume,
                 "conformality_deviation": deviation, "measure": measure},
    )
    logger.info("Neumann bound: left=%.6f lemma=%.6f global=%.6f", left, right, report.right_global)
    return report


def schrodinger_bound_report(mesh: Mesh, metric: ConformalMetric, potential: np.ndarray,
                             immersion: Optional[Immersion] = None) -> BoundReport:
    """Second eigenvalue of ``Δ + V`` against ``n (ω_n / Vol)^(2/n) + mean(V)``."""
    system = assemble(mesh, metric)
    V = np.asarray(potential, dtype=float)
    lam2 = float(schrodinger_neumann_spectrum(system, V, 1, keep_vectors=False).eigenvalues[1])
    vol = area(mesh, metric)
    mean_v = float(np.ones(mesh.n_vertices) @ (system.interior_mass @ V)) / vol
    right_global = sphere_constant() / _volume_power(vol, 2) + mean_v
    right_lemma = None
    witness: dict = {}
    if immersion is not None:
        image_volume, witness = balanced_chart_volume(mesh, immersion, volume_measure(mesh, metric))
        right_lemma = DIMENSION * _volume_power(image_volume, 2) / _volume_power(vol, 2) + mean_v
    return BoundReport(
        kind="schrodinger",
        left_hand=lam2,
        right_lemma=right_lemma,
        right_global=right_global,
        witness=witness,
        conformal_class=metric.class_fingerprint,
        details={"lambda_2": lam2, "area": vol, "mean_potential": mean_v},
    )


# ----------------------------------------------------------------------
# Steklov
# ----------------------------------------------------------------------
def steklov_bound_report(mesh: Mesh, metric: ConformalMetric, rho: BoundaryDensity,
                         ball_immersion: Immersion, tol: float = 1e-8) -> BoundReport:
    """``σ_1 M(∂M)`` against ``2 Area(γ*φ)`` and ``8π``.

    *ball_immersion* maps the mesh into the closed unit ball with every
    boundary vertex on the sphere; γ* balances the boundary density.
    """
    y = ball_immersion.coords
    if len(y) != mesh.n_vertices:
        raise InvalidImmersionError("immersion and mesh differ in vertex count")
    radii = np.linalg.norm(y, axis=1)
    bnd = mesh.boundary_vertices
    if np.max(np.abs(radii[bnd] - 1.0)) > 1e-6:
        raise InvalidImmersionError("boundary vertices must lie on the unit sphere")
    if np.max(radii) > 1.0 + 1e-6:
        raise InvalidImmersionError("immersion leaves the closed unit ball")

    system = assemble(mesh, metric, rho)
    sigma1 = float(steklov_spectrum(system, 1, keep_vectors=False).eigenvalues[1])
    mass = boundary_mass(mesh, metric, rho)
    vol = area(mesh, metric)
    left = sigma1 * mass * _volume_power(vol, 2 - DIMENSION)

    weights = np.zeros(mesh.n_vertices)
    weights[bnd] = boundary_measure(mesh, metric, rho)[bnd]
    balance, balanced = hersch_balance(ball_immersion, weights, tol=tol)
    image_area = float(triangle_areas(balanced.coords, mesh.triangles).sum())
    right = DIMENSION * _volume_power(image_area, 2)

    energy, quotient = steklov_chain(system, balanced.coords)
    report = BoundReport(
        kind="steklov",
        left_hand=left,
        right_lemma=right,
        right_global=sphere_constant(),
        witness={"balance": balance.to_dict()},
        conformal_class=metric.class_fingerprint,
        details={"sigma_1": sigma1, "boundary_mass": mass, "image_area": image_area,
                 "chain_energy": energy, "chain_quotient": quotient},
    )
    logger.info("Steklov bound: left=%.6f lemma=%.6f chain=%.6f", left, right, quotient)
    return report


def steklov_chain(system: FemSystem, coords: np.ndarray) -> Tuple[float, float]:
    """Dirichlet energy of balanced ball coordinates and their boundary Rayleigh quotient.

    The quotient bounds σ_1 from above when every coordinate is orthogonal to
    the constants in the boundary mass.
    """
    coords = np.asarray(coords, dtype=float)
    energy = dirichlet_energy(system, coords)
    boundary = float(np.einsum("ik,ik->", coords, system.boundary_mass @ coords))
    if boundary <= 0:
        raise InvalidImmersionError("coordinates vanish on the boundary")
    return energy, energy / boundary


def equatorial_ball_immersion(mesh: Mesh) -> Immersion:
    """Planar mesh placed in the equatorial plane of the unit ball."""
    if mesh.dim != 2:
        raise InvalidParameterError("expected a planar mesh")
    return Immersion(np.column_stack([mesh.vertices, np.zeros(mesh.n_vertices)]))


def radial_ball_immersion(mesh: Mesh, r_in: float, r_out: float) -> Immersion:
    """Conformal lift of a planar annulus onto a cylinder in the unit ball.

    ``log r`` becomes height, so both boundary circles land on the sphere and
    angles are preserved.
    """
    if not 0 < r_in < r_out:
        raise InvalidParameterError("need 0 < r_in < r_out")
    x = mesh.vertices
    r = np.linalg.norm(x, axis=1)
    log_ratio = np.log(r_out / r_in)
    c = 1.0 / np.sqrt(1.0 + 0.25 * log_ratio ** 2)
    z = c * (np.log(r / r_in) - 0.5 * log_ratio)
    return Immersion(np.column_stack([c * x[:, 0] / r, c * x[:, 1] / r, z]))


# ----------------------------------------------------------------------
# Energy identity
# ----------------------------------------------------------------------
@dataclass
class EnergyReport:
    energy: float
    image_area: float

    @property
    def deviation(self) -> float:
        return abs(self.energy - 2.0 * self.image_area) / self.energy


def conformal_energy(phi: Immersion, mesh: Mesh, metric: ConformalMetric) -> EnergyReport:
    """Dirichlet energy of the coordinates of *phi* and its image area."""
    system = assemble(mesh, metric)
    energy = dirichlet_energy(system, phi.coords)
    return EnergyReport(energy, float(triangle_areas(phi.coords, mesh.triangles).sum()))


def cap_metric_family(mesh: Mesh, scales: Sequence[float]) -> List[ConformalMetric]:
    """Round-cap metrics ``R^2 * sphere_factor(R x)`` on a planar domain.

    For the unit disk, scale R gives the cap of area ``4πR²/(1+R²)``.
    """
    base = identity_metric(mesh)
    return [base.with_factor(s * s * sphere_factor(s * mesh.vertices)) for s in scales]


# ----------------------------------------------------------------------
# Witnesses
# ----------------------------------------------------------------------
@dataclass
class WitnessRow:
    side: str
    invariant: str
    value: float
    limit: float
    source: str

    @property
    def consistent(self) -> bool:
        return self.value < self.limit


@dataclass
class WitnessTable:
    rows: List[WitnessRow] = field(default_factory=list)

    def best(self, side: str) -> Optional[WitnessRow]:
        candidates = [r for r in self.rows if r.side == side]
        return max(candidates, key=lambda r: r.value) if candidates else None

    @property
    def consistent(self) -> bool:
        return all(r.consistent for r in self.rows)

    def to_dict(self) -> dict:
        lower, upper = self.best("lower"), self.best("upper")
        return {
            "note": "one-sided numerical evidence, not values of the invariants",
            "rows": [vars(r) | {"consistent": r.consistent} for r in self.rows],
            "best_lower": None if lower is None else lower.value,
            "best_upper": None if upper is None else upper.value,
            "consistent": self.consistent,
        }


def witness_summary(items: Iterable[Union[BoundReport, SearchResult]]) -> WitnessTable:
    """Collect lower witnesses (λ·Vol values) and upper ones (sup-volumes found)."""
    table = WitnessTable()
    for k, item in enumerate(items):
        if isinstance(item, SearchResult):
            table.rows.append(WitnessRow("upper", "V_M", item.volume, SPHERE_AREA, f"search[{k}]"))
        elif item.kind in ("neumann", "steklov"):
            invariant = "nu" if item.kind == "neumann" else "sigma"
            table.rows.append(WitnessRow("lower", invariant, item.left_hand, item.right_global, f"{item.kind}[{k}]"))
    return table

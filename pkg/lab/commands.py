"""Batch experiments behind the ``csl`` subcommands.

Each command reads an :class:`ExperimentConfig`, computes, and stages its
artifacts in an :class:`ArtifactWriter`; :func:`run` turns errors into exit
codes (2 bad input, 3 numerical failure, 4 violated invariant).
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from bounds.confvol import (
    equatorial_ball_immersion,
    neumann_bound_report,
    radial_ball_immersion,
    schrodinger_bound_report,
    steklov_bound_report,
    witness_summary,
)
from bounds.deform import blowup_experiment, graded_disk_source, lipschitz_comparison_check
from core.errors import ConfigError, InvariantViolationError, LabError
from core.event_bus import EventBus
from core.mesh_store import MeshStore
from geometry.mesh import Immersion, Mesh, format_mesh, validate
from geometry.metric import (
    BoundaryDensity,
    ConformalMetric,
    identity_metric,
    random_smooth_factor,
    read_vertex_values,
)
from geometry.moebius import (
    SearchBudget,
    apply,
    boundary_measure,
    hersch_balance,
    reduce_dilation,
    spherical_volume,
    sphere_to_stereographic,
    stereographic_to_sphere,
    sup_volume_search,
    volume_measure,
)
from lab.artifacts import ArtifactWriter, make_header
from lab.compare import compare
from lab.config import ExperimentConfig, config_hash
from lab.sweep import SweepRunner
from spectral.eigen import (
    Problem,
    dirichlet_spectrum,
    neumann_spectrum,
    schrodinger_neumann_spectrum,
    steklov_spectrum,
)
from spectral.fem import cached_assemble

logger = logging.getLogger(__name__)

# lemma checks allow this much discretization error
LEMMA_SLACK = 0.02
SPHERE_TOL = 1e-9


class Lab:
    """Shared services for one invocation."""

    def __init__(self, config: ExperimentConfig, store: Optional[MeshStore] = None,
                 event_bus: Optional[EventBus] = None) -> None:
        self.config = config
        self.event_bus = event_bus or EventBus()
        self.store = store or MeshStore(event_bus=self.event_bus)
        self.runner = SweepRunner(self.event_bus, max_workers=config.workers, name=config.kind)

    # ------------------------------------------------------------------
    # Inputs
    # ------------------------------------------------------------------
    def mesh(self) -> Mesh:
        try:
            return self.store.load_mesh(self.config.mesh)
        except KeyError as exc:
            raise ConfigError(f"unknown mesh {self.config.mesh!r}") from exc

    def metric(self, mesh: Mesh) -> ConformalMetric:
        base = identity_metric(mesh)
        if self.config.metric is None:
            return base
        factor = read_vertex_values(Path(self.config.metric), mesh.n_vertices)
        if np.any(np.isnan(factor)):
            raise ConfigError(f"{self.config.metric} does not give a factor for every vertex")
        return base.with_factor(factor)

    def rho(self, mesh: Mesh) -> Optional[BoundaryDensity]:
        if self.config.rho is None:
            return None
        density = BoundaryDensity(read_vertex_values(Path(self.config.rho), mesh.n_vertices, fill=0.0))
        density.check(mesh)
        return density

    def potential(self, mesh: Mesh) -> np.ndarray:
        if self.config.potential is None:
            # first coordinate: a non-constant potential with zero mean on symmetric domains
            return mesh.vertices[:, 0].copy()
        values = read_vertex_values(Path(self.config.potential), mesh.n_vertices)
        if np.any(np.isnan(values)):
            raise ConfigError(f"{self.config.potential} does not give a value for every vertex")
        return values

    def writer(self, mesh_fingerprint: str = "") -> ArtifactWriter:
        header = make_header(config_hash(self.config), mesh_fingerprint, self.config.seed, self.config.stamp)
        return ArtifactWriter(Path(self.config.out), header)

    def budget(self) -> SearchBudget:
        c = self.config
        return SearchBudget(r_min=c.r_min, r_max=c.r_max, n_scales=c.n_scales, n_anchors=c.n_anchors,
                            multistarts=c.multistarts, max_evaluations=c.budget)


def chart_immersion(mesh: Mesh) -> Immersion:
    """Vertices as chart coordinates; meshes lying on the unit sphere are projected first."""
    radii = np.linalg.norm(mesh.vertices, axis=1)
    if mesh.dim == 3 and np.max(np.abs(radii - 1.0)) < SPHERE_TOL:
        return Immersion(sphere_to_stereographic(mesh.vertices))
    return Immersion.identity(mesh)


def ball_immersion(mesh: Mesh) -> Optional[Immersion]:
    """An immersion into the unit ball with boundary on the sphere, when one is known."""
    if mesh.dim != 2:
        return None
    radii = np.linalg.norm(mesh.vertices, axis=1)
    outer = radii[mesh.boundary_vertices]
    if np.max(np.abs(outer - 1.0)) < SPHERE_TOL and radii.max() <= 1.0 + SPHERE_TOL:
        return equatorial_ball_immersion(mesh)
    if mesh.family == "annulus":
        return radial_ball_immersion(mesh, float(outer.min()), float(outer.max()))
    return None


def _identity(config: ExperimentConfig, mesh: Optional[Mesh]) -> Dict[str, object]:
    return {"kind": config.kind, "family": mesh.family if mesh is not None else "", "seed": config.seed}


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------
def mesh_gen(lab: Lab) -> None:
    mesh = lab.mesh()
    report = validate(mesh)
    with lab.writer(mesh.fingerprint) as w:
        w.write_annotated(f"{Path(lab.config.mesh).stem}.cslmesh", format_mesh(mesh), after_first_line=True)
        w.write_json("validation.json", _identity(lab.config, mesh) | {
            "fingerprint": mesh.fingerprint,
            "n_vertices": mesh.n_vertices,
            "n_triangles": mesh.n_triangles,
            "validation": report.to_dict(),
        })
    if not report.passed:
        raise InvariantViolationError(f"mesh validation failed: {', '.join(report.failures)}")


def spectrum(lab: Lab) -> None:
    mesh = lab.mesh()
    metric = lab.metric(mesh)
    problem = Problem(lab.config.problem)
    k = lab.config.k
    system = cached_assemble(mesh, metric, lab.rho(mesh))
    if problem is Problem.NEUMANN:
        result = neumann_spectrum(system, k, keep_vectors=False)
    elif problem is Problem.DIRICHLET:
        result = dirichlet_spectrum(system, k, keep_vectors=False)
    elif problem is Problem.STEKLOV:
        result = steklov_spectrum(system, k, keep_vectors=False)
    else:
        result = schrodinger_neumann_spectrum(system, lab.potential(mesh), k, keep_vectors=False)
    with lab.writer(mesh.fingerprint) as w:
        w.write_json("spectrum.json", _identity(lab.config, mesh) | result.to_dict()
                     | {"multiplicities": result.multiplicities()})


def moebius_sup(lab: Lab) -> None:
    mesh = lab.mesh()
    result = sup_volume_search(chart_immersion(mesh), mesh, lab.budget(), seed=lab.config.seed)
    with lab.writer(mesh.fingerprint) as w:
        w.write_json("sup.json", _identity(lab.config, mesh) | result.to_dict())
        w.write_csv("trace.csv", result.trace_csv())


def balance(lab: Lab) -> None:
    mesh = lab.mesh()
    metric = lab.metric(mesh)
    if lab.config.measure == "volume":
        weights = volume_measure(mesh, metric)
    else:
        weights = boundary_measure(mesh, metric, lab.rho(mesh))
    phi = chart_immersion(mesh)
    result, _ = hersch_balance(Immersion(stereographic_to_sphere(phi.coords)), weights)
    gamma, _, _ = reduce_dilation(result.xi)
    volume = spherical_volume(apply(gamma, phi), mesh, quadrature="exact")
    with lab.writer(mesh.fingerprint) as w:
        w.write_json("balance.json", _identity(lab.config, mesh) | result.to_dict() | {
            "measure": lab.config.measure,
            "moebius": gamma.to_dict(),
            "balanced_volume": volume,
            "total_mass": float(weights.sum()),
        })


def verify_bounds(lab: Lab) -> None:
    c = lab.config
    mesh = lab.mesh()
    metric = lab.metric(mesh)
    phi = chart_immersion(mesh)
    reports = [neumann_bound_report(mesh, metric, phi, measure=c.measure)]
    reports.append(schrodinger_bound_report(mesh, metric, lab.potential(mesh), phi))
    ball = ball_immersion(mesh)
    if ball is not None:
        rho = lab.rho(mesh) or BoundaryDensity.constant(mesh)
        reports.append(steklov_bound_report(mesh, metric, rho, ball))
    else:
        logger.info("No ball immersion known for %s; skipping the Steklov report", c.mesh)

    rng = np.random.default_rng(c.seed)
    factors = [random_smooth_factor(mesh, rng, 1.0 / c.tau, c.tau) for _ in range(c.samples)]

    def sweep_point(h: np.ndarray):
        deformed = metric.with_factor(metric.factor * h)
        report = neumann_bound_report(mesh, deformed, phi, measure=c.measure)
        lipschitz = lipschitz_comparison_check(mesh, metric, h, c.tau)
        return report, lipschitz

    points = lab.runner.map(sweep_point, factors)
    logger.info("%d factor points delivered", lab.event_bus.count(f"{lab.runner.name}.point"))
    rows = ["h_id,left,right_lemma,right_global,margin"]
    for i, (report, _) in enumerate(points):
        rows.append(",".join([str(i)] + [repr(float(v)) for v in
                                         (report.left_hand, report.right_lemma, report.right_global,
                                          report.margin_global)]))
    table = witness_summary(reports + [p[0] for p in points])

    violations: List[str] = []
    for report in reports + [p[0] for p in points]:
        if not report.left_hand < report.right_global:
            violations.append(f"{report.kind}: {report.left_hand:.6f} >= {report.right_global:.6f}")
        if report.right_lemma is not None and report.left_hand > report.right_lemma * (1 + LEMMA_SLACK):
            violations.append(f"{report.kind}: lemma exceeded ({report.left_hand:.6f} > {report.right_lemma:.6f})")

    with lab.writer(mesh.fingerprint) as w:
        w.write_json("bounds.json", _identity(lab.config, mesh) | {
            "reports": [r.to_dict() for r in reports],
            "lipschitz": [p[1].to_dict() for p in points],
            "witnesses": table.to_dict(),
            "violations": violations,
        })
        w.write_csv("sweep.csv", "\n".join(rows) + "\n")
    if violations:
        raise InvariantViolationError("; ".join(violations))


def blowup(lab: Lab) -> None:
    c = lab.config
    lengths = sorted(c.lengths)
    mesh, metric, center = graded_disk_source(c.eps, lengths[-1], resolution=c.resolution)
    table = blowup_experiment(mesh, metric, c.eps, c.lengths, center=center, mapper=lab.runner.map)
    logger.info("%d blow-up lengths delivered", lab.event_bus.count(f"{lab.runner.name}.point"))
    with lab.writer(mesh.fingerprint) as w:
        w.write_csv("blowup.csv", table.to_csv())
    table.check()


def compare_results(lab: Lab) -> None:
    c = lab.config
    report = compare(Path(c.inputs[0]), Path(c.inputs[1]), c.tolerance, c.force)
    with lab.writer() as w:
        w.write_json("compare.json", {"kind": "compare"} | report.to_dict())
    if not report.passed:
        raise InvariantViolationError(
            f"max relative difference {report.max_difference:.3e} exceeds {c.tolerance}"
        )


COMMANDS: Dict[str, Callable[[Lab], None]] = {
    "mesh-gen": mesh_gen,
    "spectrum": spectrum,
    "moebius-sup": moebius_sup,
    "balance": balance,
    "verify-bounds": verify_bounds,
    "blowup": blowup,
    "compare": compare_results,
}


def run(config: ExperimentConfig, store: Optional[MeshStore] = None) -> int:
    """Execute one experiment and return the process exit status."""
    try:
        COMMANDS[config.kind](Lab(config, store))
    except LabError as exc:
        logger.error("%s failed: %s", config.kind, exc)
        return exc.exit_code
    return 0

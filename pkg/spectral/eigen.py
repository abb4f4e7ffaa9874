"""Eigenvalue problems on an assembled :class:`FemSystem`.

Below ``DENSE_LIMIT`` degrees of freedom the generalized pencil is solved
densely with LAPACK; above it with ARPACK in shift-invert mode around a small
negative shift. Either way each returned pair must satisfy the residual
contract, otherwise :class:`ConvergenceError` is raised.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh, splu

from core.errors import ConvergenceError, InvalidParameterError, LabError
from core.utils.telemetry import Stopwatch
from spectral.fem import FemSystem

logger = logging.getLogger(__name__)

DENSE_LIMIT = 3000
RESIDUAL_TOL = 1e-6
ZERO_TOL = 1e-8


class Problem(str, Enum):
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"
    STEKLOV = "steklov"
    SCHRODINGER = "schrodinger"


@dataclass
class SpectrumResult:
    problem: Problem
    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray] = field(default=None, repr=False)
    mesh_fingerprint: str = ""
    metric_fingerprint: str = ""
    solver: str = ""
    residual_tol: float = RESIDUAL_TOL
    zero_tol: float = 0.0
    max_residual: float = 0.0
    n_dof: int = 0

    def to_dict(self) -> dict:
        return {
            "problem": self.problem.value,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "mesh_fingerprint": self.mesh_fingerprint,
            "metric_fingerprint": self.metric_fingerprint,
            "solver": self.solver,
            "residual_tol": self.residual_tol,
            "zero_tol": self.zero_tol,
            "max_residual": self.max_residual,
            "n_dof": self.n_dof,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SpectrumResult":
        data = json.loads(text)
        data["problem"] = Problem(data["problem"])
        data["eigenvalues"] = np.asarray(data["eigenvalues"])
        return cls(**data)

    def multiplicities(self, rel_tol: float = 0.01) -> list:
        """Group consecutive eigenvalues that agree within *rel_tol*."""
        groups: list = []
        for value in self.eigenvalues:
            if groups and abs(value - groups[-1][-1]) <= rel_tol * max(abs(value), 1e-300):
                groups[-1].append(value)
            else:
                groups.append([value])
        return [len(g) for g in groups]


# ----------------------------------------------------------------------
# Pencil solver
# ----------------------------------------------------------------------
def _inf_norm(a) -> float:
    if sparse.issparse(a):
        return float(abs(a).sum(axis=1).max())
    return float(np.abs(a).sum(axis=1).max())


def _check_residuals(K, M, values: np.ndarray, vectors: np.ndarray, label: str) -> float:
    nk, nm = _inf_norm(K), _inf_norm(M)
    r = K @ vectors - (M @ vectors) * values[None, :]
    res = np.linalg.norm(r, axis=0)
    bound = RESIDUAL_TOL * (nk + np.abs(values) * nm) * np.linalg.norm(vectors, axis=0)
    ratio = float(np.max(res / bound))
    if ratio > 1.0:
        raise ConvergenceError(f"{label}: eigenpair residual above contract", float(res.max()))
    return float(res.max())


def solve_pencil(K, M, count: int, label: str, shift: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray, str, float]:
    """Smallest *count* eigenpairs of ``K v = λ M v``."""
    n = K.shape[0]
    count = min(count, n)
    if count < 1:
        raise InvalidParameterError("nothing to solve")
    if n < DENSE_LIMIT or count >= n - 1:
        Kd = K.toarray() if sparse.issparse(K) else np.asarray(K)
        Md = M.toarray() if sparse.issparse(M) else np.asarray(M)
        values, vectors = linalg.eigh(Kd, Md, subset_by_index=[0, count - 1])
        solver = "dense"
    else:
        if shift is None:
            shift = -0.1 * (K.diagonal().sum() / M.diagonal().sum()) / n
        v0 = np.random.default_rng(n).standard_normal(n)
        try:
            values, vectors = eigsh(K.tocsc(), k=count, M=M.tocsc(), sigma=shift, which="LM", v0=v0)
        except ArpackNoConvergence as exc:
            raise ConvergenceError(f"{label}: ARPACK did not converge", float("nan")) from exc
        solver = "shift-invert"
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]
    max_res = _check_residuals(K, M, values, vectors, label)
    return values, vectors, solver, max_res


def _snap_zeros(values: np.ndarray) -> Tuple[np.ndarray, float]:
    tol = ZERO_TOL * max(float(np.max(np.abs(values))), 1.0)
    values = values.copy()
    values[np.abs(values) <= tol] = 0.0
    return values, tol


def _result(problem: Problem, system: FemSystem, values, vectors, solver, max_res, keep_vectors) -> SpectrumResult:
    values, tol = _snap_zeros(values)
    return SpectrumResult(
        problem=problem,
        eigenvalues=values,
        eigenvectors=vectors if keep_vectors else None,
        mesh_fingerprint=system.mesh_fingerprint,
        metric_fingerprint=system.metric_fingerprint,
        solver=solver,
        zero_tol=tol,
        max_residual=max_res,
        n_dof=system.n_dof,
    )


# ----------------------------------------------------------------------
# Problems
# ----------------------------------------------------------------------
def neumann_spectrum(system: FemSystem, k: int, keep_vectors: bool = True) -> SpectrumResult:
    """``λ_0 = 0 <= λ_1 <= ... <= λ_k`` of ``K v = λ A v``."""
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    watch = Stopwatch()
    values, vectors, solver, res = solve_pencil(system.stiffness, system.interior_mass, k + 1, "neumann")
    logger.info("Neumann: %d DOF via %s in %.2fs, lambda_1=%.6g", system.n_dof, solver, watch.elapsed, values[1])
    return _result(Problem.NEUMANN, system, values, vectors, solver, res, keep_vectors)


def dirichlet_spectrum(system: FemSystem, k: int, keep_vectors: bool = True) -> SpectrumResult:
    """First *k* eigenvalues with boundary values clamped to zero."""
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    if len(system.boundary_vertices) == 0:
        raise InvalidParameterError("Dirichlet problem needs a non-empty boundary")
    inner = system.interior_vertices
    if len(inner) == 0:
        raise InvalidParameterError("mesh has no interior vertices")
    K = system.stiffness[inner][:, inner]
    M = system.interior_mass[inner][:, inner]
    watch = Stopwatch()
    values, sub, solver, res = solve_pencil(K, M, k, "dirichlet", shift=0.0)
    vectors = np.zeros((system.n_dof, sub.shape[1]))
    vectors[inner] = sub
    logger.info("Dirichlet: %d DOF via %s in %.2fs, lambda_1=%.6g", len(inner), solver, watch.elapsed, values[0])
    return _result(Problem.DIRICHLET, system, values, vectors, solver, res, keep_vectors)


def steklov_spectrum(system: FemSystem, k: int, keep_vectors: bool = True) -> SpectrumResult:
    """``σ_0 = 0 <= σ_1 <= ... <= σ_k`` of the discrete Dirichlet-to-Neumann map.

    Eigenvectors are extended harmonically into the interior.
    """
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    bnd = system.boundary_vertices
    inner = system.interior_vertices
    if len(bnd) == 0:
        raise InvalidParameterError("Steklov problem needs a non-empty boundary")
    K = system.stiffness.tocsr()
    Kbb = K[bnd][:, bnd].toarray()
    B = system.boundary_mass[bnd][:, bnd].toarray()
    if np.any(np.diag(B) <= 0):
        raise InvalidParameterError("boundary density must be positive")
    watch = Stopwatch()
    if len(inner):
        Kib = K[inner][:, bnd].toarray()
        try:
            lu = splu(K[inner][:, inner].tocsc())
        except RuntimeError as exc:
            raise LabError(f"interior stiffness block is singular: {exc}") from exc
        harmonic = lu.solve(Kib)
        S = Kbb - Kib.T @ harmonic
    else:
        harmonic = np.zeros((0, len(bnd)))
        S = Kbb
    S = 0.5 * (S + S.T)
    count = min(k + 1, len(bnd))
    values, ub = linalg.eigh(S, B, subset_by_index=[0, count - 1])
    res = _check_residuals(S, B, values, ub, "steklov")
    vectors = np.zeros((system.n_dof, count))
    vectors[bnd] = ub
    if len(inner):
        vectors[inner] = -harmonic @ ub
    logger.info("Steklov: %d boundary DOF in %.2fs, sigma_1=%.6g", len(bnd), watch.elapsed, values[min(1, count - 1)])
    return _result(Problem.STEKLOV, system, values, vectors, "schur-dense", res, keep_vectors)


def schrodinger_neumann_spectrum(system: FemSystem, potential: np.ndarray, k: int,
                                 keep_vectors: bool = True) -> SpectrumResult:
    """Neumann eigenvalues of ``Δ + V``: ``(K + A_V) v = λ A v``."""
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    V = np.asarray(potential, dtype=float)
    if V.shape != (system.n_dof,):
        raise InvalidParameterError("potential must have one value per vertex")
    KV = (system.stiffness + system.weighted_mass(V)).tocsr()
    A = system.interior_mass
    trace_ratio = system.stiffness.diagonal().sum() / A.diagonal().sum()
    shift = min(float(V.min()), 0.0) - 0.1 * trace_ratio / system.n_dof
    values, vectors, solver, res = solve_pencil(KV, A, k + 1, "schrodinger", shift=shift)
    logger.info("Schrodinger: %d DOF via %s, second eigenvalue %.6g", system.n_dof, solver, values[1])
    return _result(Problem.SCHRODINGER, system, values, vectors, solver, res, keep_vectors)


def rayleigh_quotient(numerator, denominator, f: np.ndarray) -> float:
    """Summed ``f^T N f / f^T D f`` over the columns of *f*."""
    f = np.asarray(f, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    return float(np.einsum("ik,ik->", f, numerator @ f) / np.einsum("ik,ik->", f, denominator @ f))

"""Regression comparison of two JSON result artifacts."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, Tuple

from core.errors import InvalidComparisonError
from lab.artifacts import read_json_artifact

logger = logging.getLogger(__name__)

IDENTITY_KEYS = ("kind", "problem", "family")
# solver bookkeeping that legitimately changes with resolution
BOOKKEEPING_KEYS = {"n_dof", "max_residual", "zero_tol", "residual_tol", "evaluations", "iterations", "seed"}


@dataclass
class CompareReport:
    tolerance: float
    differences: Dict[str, float] = field(default_factory=dict)
    forced: bool = False

    @property
    def max_difference(self) -> float:
        return max(self.differences.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_difference <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "max_difference": self.max_difference,
            "passed": self.passed,
            "forced": self.forced,
            "differences": dict(sorted(self.differences.items())),
        }


def _leaves(node, prefix: str = "") -> Iterator[Tuple[str, float]]:
    if isinstance(node, dict):
        for key in sorted(node):
            yield from _leaves(node[key], f"{prefix}.{key}" if prefix else str(key))
    elif isinstance(node, list):
        for i, item in enumerate(node):
            yield from _leaves(item, f"{prefix}[{i}]")
    elif isinstance(node, (int, float)) and not isinstance(node, bool):
        if prefix.rsplit(".", 1)[-1] not in BOOKKEEPING_KEYS:
            yield prefix, float(node)


def relative_difference(a: float, b: float) -> float:
    if a == b:
        return 0.0
    if not (math.isfinite(a) and math.isfinite(b)):
        return math.inf
    return abs(a - b) / max(abs(a), abs(b), 1e-12)


def compare(path_a: Path, path_b: Path, tolerance: float = 0.01, force: bool = False) -> CompareReport:
    """Relative difference of every numeric field of the two ``result`` sections.

    Files from different experiment kinds, problems or mesh families are
    refused unless *force* is set. Fields present in only one file count as
    an infinite difference.
    """
    a = read_json_artifact(path_a).get("result", {})
    b = read_json_artifact(path_b).get("result", {})
    mismatched = [key for key in IDENTITY_KEYS if a.get(key) != b.get(key)]
    if mismatched and not force:
        raise InvalidComparisonError(
            f"results differ in {', '.join(mismatched)}: "
            + ", ".join(f"{a.get(k)!r} vs {b.get(k)!r}" for k in mismatched)
        )
    left, right = dict(_leaves(a)), dict(_leaves(b))
    report = CompareReport(tolerance, forced=bool(mismatched))
    for key in left.keys() | right.keys():
        if key in left and key in right:
            report.differences[key] = relative_difference(left[key], right[key])
        else:
            report.differences[key] = math.inf
    logger.info("Compared %d fields, max relative difference %.3e", len(report.differences),
                report.max_difference)
    return report

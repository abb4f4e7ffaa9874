"""Experiment configuration: INI file, command-line overrides, defaults.

Precedence is command line over file over the dataclass defaults. Keys of the
``[experiment]`` section map onto :class:`ExperimentConfig` fields; the
optional ``[budget]`` section holds the sup-search limits.
"""

from __future__ import annotations

import configparser
import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from core.errors import ConfigError
from core.utils.fingerprint import sha256

logger = logging.getLogger(__name__)

KINDS = ("mesh-gen", "spectrum", "moebius-sup", "balance", "verify-bounds", "blowup", "compare")
PROBLEMS = ("neumann", "dirichlet", "steklov", "schrodinger")
BUDGET_KEYS = {"budget", "r_min", "r_max", "n_scales", "n_anchors", "multistarts"}


@dataclass
class ExperimentConfig:
    kind: str = "spectrum"
    mesh: str = "disk32"
    metric: Optional[str] = None
    rho: Optional[str] = None
    potential: Optional[str] = None
    problem: str = "neumann"
    k: int = 5
    eps: float = 0.2
    lengths: Tuple[float, ...] = (0.0, 0.5, 1.0, 2.0, 4.0)
    tau: float = 2.0
    budget: int = 10_000
    r_min: float = 1e-2
    r_max: float = 1e3
    n_scales: int = 25
    n_anchors: int = 16
    multistarts: int = 4
    measure: str = "volume"
    samples: int = 10
    resolution: int = 32
    tolerance: float = 0.01
    seed: int = 0
    out: str = "out"
    inputs: Tuple[str, ...] = ()
    force: bool = False
    stamp: bool = False
    workers: Optional[int] = None

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.measure not in ("volume", "boundary"):
            raise ConfigError(f"unknown balancing measure {self.measure!r}")
        if self.k < 1 or self.budget < 1 or self.samples < 1 or self.resolution < 1:
            raise ConfigError("k, budget, samples and resolution must be positive")
        if not self.eps > 0 or not self.tau >= 1 or not self.tolerance >= 0:
            raise ConfigError("need eps > 0, tau >= 1 and tolerance >= 0")
        if not 0 < self.r_min <= self.r_max:
            raise ConfigError("need 0 < r_min <= r_max")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        for name in (self.metric, self.rho, self.potential, *self.inputs):
            if name is not None and not Path(name).is_file():
                raise ConfigError(f"input file {name} does not exist")
        if self.kind == "compare" and len(self.inputs) != 2:
            raise ConfigError("compare needs exactly two input files")
        return self

    def to_dict(self) -> dict:
        data = asdict(self)
        data.pop("workers")
        data["lengths"] = list(self.lengths)
        data["inputs"] = list(self.inputs)
        return data


def config_hash(config: ExperimentConfig) -> str:
    """Hash of every setting that can change an artifact body."""
    data = config.to_dict()
    for key in ("out", "force", "stamp"):
        data.pop(key)
    return sha256(json.dumps(data, sort_keys=True).encode("utf-8"))


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _coerce(name: str, raw: Any) -> Any:
    default = getattr(ExperimentConfig(), name)
    if raw is None or not isinstance(raw, str):
        if name in ("lengths", "inputs") and raw is not None:
            return tuple(float(v) for v in raw) if name == "lengths" else tuple(str(v) for v in raw)
        return raw
    text = raw.strip()
    try:
        if name == "lengths":
            return tuple(float(v) for v in text.replace(",", " ").split())
        if name == "inputs":
            return tuple(text.split())
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int) or name == "workers":
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return text


def read_config_file(path: Path) -> Dict[str, Any]:
    parser = configparser.ConfigParser()
    try:
        with Path(path).open("r", encoding="utf-8") as f:
            parser.read_file(f)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values: Dict[str, Any] = {}
    for section in parser.sections():
        if section not in ("experiment", "budget"):
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            key = key.replace("-", "_")
            if section == "budget" and key not in BUDGET_KEYS:
                raise ConfigError(f"unknown budget key {key!r}")
            if key not in _FIELDS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _coerce(key, raw)
    return values


def load_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Defaults, then *path*, then the non-``None`` *overrides*."""
    values: Dict[str, Any] = {}
    if path is not None:
        values.update(read_config_file(path))
        logger.debug("Read %d settings from %s", len(values), path)
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown setting {key!r}")
        values[key] = _coerce(key, raw)
    try:
        config = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return config.validate()

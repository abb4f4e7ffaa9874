"""Named meshes: built-in generators plus ``*.cslmesh`` files on disk.

Names such as ``disk64`` or ``mobius128`` are generated on request; any other
name is looked up among the files discovered under ``data_dir`` (the
``CSL_DATA_DIR`` environment variable by default) or taken as a file path.
Loaded meshes are kept in a small LRU cache.
"""

from __future__ import annotations

import logging
import math
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional

from cachetools import LRUCache

from core.event_bus import EventBus
from core.utils.fingerprint import hash_file
from geometry.mesh import Mesh, generate_annulus, generate_disk, generate_spherical_cap, read_mesh
from geometry.ribbon import RibbonSpec, circle_skeleton, generate_ribbon

logger = logging.getLogger(__name__)

MESH_SUFFIX = ".cslmesh"
RIBBON_WIDTH = 0.05


def _ribbon(resolution: int, half_twists: int) -> Mesh:
    skeleton = circle_skeleton(1.0, 4 * resolution)
    spec = RibbonSpec(skeleton, RIBBON_WIDTH, half_twists=half_twists,
                      n_along=4 * resolution, n_across=3)
    return generate_ribbon(spec)


def _sphere_minus_cap(resolution: int) -> Mesh:
    # complement of a small polar cap, seen from the opposite pole
    return generate_spherical_cap(math.pi - 0.3, resolution)


BUILTIN: Dict[str, Callable[[int], Mesh]] = {
    "disk": lambda n: generate_disk(1.0, n),
    "annulus": lambda n: generate_annulus(0.5, 1.0, n),
    "cap": lambda n: generate_spherical_cap(math.pi / 2, n),
    "ribbon": lambda n: _ribbon(n, 0),
    "mobius": lambda n: _ribbon(n, 1),
    "sphere-minus-cap": _sphere_minus_cap,
}
_BUILTIN_RE = re.compile(r"^(?P<family>[a-z-]+?)(?P<resolution>\d+)$")


@dataclass
class MeshMeta:
    """Where a named mesh comes from."""

    name: str
    source: str
    path: str = ""
    sha256: str = ""


class MeshStore:
    """Thread-safe lookup of meshes by name."""

    def __init__(
        self,
        data_dir: Optional[str] = None,
        event_bus: Optional[EventBus] = None,
        cache_size: int = 8,
    ) -> None:
        self.data_dir = Path(data_dir or os.environ.get("CSL_DATA_DIR", "meshes"))
        self.event_bus = event_bus or EventBus()
        self._lock = threading.RLock()
        self._cache: LRUCache = LRUCache(maxsize=cache_size)
        self._meta: Dict[str, MeshMeta] = {}
        self.discover_meshes()

    # ------------------------------------------------------------------
    # Discovery
    # ------------------------------------------------------------------
    def discover_meshes(self) -> None:
        """Scan ``data_dir`` for mesh files; missing directories are fine."""
        if not self.data_dir.is_dir():
            logger.debug("Mesh directory %s does not exist", self.data_dir)
            return
        with self._lock:
            for file in sorted(self.data_dir.iterdir()):
                if not file.is_file() or file.suffix.lower() != MESH_SUFFIX:
                    continue
                if file.stem not in self._meta:
                    self._meta[file.stem] = MeshMeta(file.stem, "file", str(file), hash_file(file))
        logger.debug("Discovered %d mesh files under %s", len(self._meta), self.data_dir)

    def _resolve(self, name: str) -> MeshMeta:
        if name in self._meta:
            return self._meta[name]
        match = _BUILTIN_RE.match(name)
        if match and match.group("family") in BUILTIN:
            return MeshMeta(name, "builtin")
        path = Path(name)
        if path.is_file():
            return MeshMeta(path.stem, "file", str(path), hash_file(path))
        raise KeyError(f"Mesh '{name}' not found")

    # ------------------------------------------------------------------
    # Public API
    # ------------------------------------------------------------------
    def list_meshes(self) -> Dict[str, MeshMeta]:
        with self._lock:
            return dict(self._meta)

    def describe(self, name: str) -> MeshMeta:
        with self._lock:
            return self._resolve(name)

    def load_mesh(self, name: str) -> Mesh:
        """Return the mesh called *name*, generating or reading it once."""
        with self._lock:
            if name in self._cache:
                return self._cache[name]
            meta = self._resolve(name)
            if meta.source == "builtin":
                match = _BUILTIN_RE.match(name)
                mesh = BUILTIN[match.group("family")](int(match.group("resolution")))
            else:
                mesh = read_mesh(Path(meta.path))
            self._cache[name] = mesh
        logger.info("Loaded mesh %s: %d vertices, %d triangles", name, mesh.n_vertices, mesh.n_triangles)
        self.event_bus.publish_nowait("mesh.loaded", name)
        return mesh

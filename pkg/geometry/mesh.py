"""Triangulated surfaces with boundary.

A :class:`Mesh` is an immutable pair of vertex coordinates and triangle index
triples. Edges, boundary edges and boundary loops are derived from the
triangle list on first use and cached on the instance.

Generators cover the planar domains, spherical caps and the boundary-graded
disk used by the cylinder deformation. Ribbon surfaces live in
:mod:`geometry.ribbon`.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from core.errors import ConfigError, InvalidParameterError
from core.utils.fingerprint import sha256

logger = logging.getLogger(__name__)

MAGIC = "CSLMESH 1"


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulated compact surface, possibly with boundary, in R^m."""

    vertices: np.ndarray
    triangles: np.ndarray
    family: str = "custom"

    def __post_init__(self) -> None:
        v = np.array(self.vertices, dtype=float)
        t = np.array(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] < 2:
            raise InvalidParameterError(f"vertices must have shape (V, m>=2), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3 or len(t) == 0:
            raise InvalidParameterError(f"triangles must have shape (F, 3), got {t.shape}")
        if t.min() < 0 or t.max() >= len(v):
            raise InvalidParameterError("triangle index out of range")
        object.__setattr__(self, "vertices", _readonly(v))
        object.__setattr__(self, "triangles", _readonly(t))

    # ------------------------------------------------------------------
    # Sizes
    # ------------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    # ------------------------------------------------------------------
    # Combinatorics
    # ------------------------------------------------------------------
    @cached_property
    def _edge_table(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = self.triangles
        # edge opposite local vertex i joins the other two
        half = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1).reshape(-1, 2)
        undirected = np.sort(half, axis=1)
        edges, inverse, counts = np.unique(
            undirected, axis=0, return_inverse=True, return_counts=True
        )
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted, shape (E, 2)."""
        return self._edge_table[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """Index into :attr:`edges` of the edge opposite each triangle corner."""
        return self._edge_table[1]

    @property
    def edge_face_counts(self) -> np.ndarray:
        return self._edge_table[2]

    @cached_property
    def boundary_edge_ids(self) -> np.ndarray:
        return _readonly(np.flatnonzero(self.edge_face_counts == 1))

    @property
    def boundary_edges(self) -> np.ndarray:
        return self.edges[self.boundary_edge_ids]

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return _readonly(np.unique(self.boundary_edges))

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary_vertices] = False
        return _readonly(np.flatnonzero(mask))

    @cached_property
    def boundary_loops(self) -> List[np.ndarray]:
        """Closed cycles of boundary vertices.

        Each loop follows the orientation of the triangle owning its first
        edge. Loops are walked on the undirected boundary graph so that
        non-orientable surfaces (Möbius bands) are handled too.
        """
        bedges = self.boundary_edges
        if len(bedges) == 0:
            return []
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        key = {tuple(e) for e in map(tuple, np.sort(bedges, axis=1))}
        forward = {}
        for a, b in directed:
            if (min(a, b), max(a, b)) in key:
                forward.setdefault(int(a), []).append(int(b))
        incident: Dict[int, List[int]] = {}
        for k, (a, b) in enumerate(bedges):
            incident.setdefault(int(a), []).append(k)
            incident.setdefault(int(b), []).append(k)

        used = np.zeros(len(bedges), dtype=bool)
        loops: List[np.ndarray] = []
        for start_edge in range(len(bedges)):
            if used[start_edge]:
                continue
            a, b = (int(x) for x in bedges[start_edge])
            if b not in forward.get(a, []):
                a, b = b, a
            used[start_edge] = True
            loop = [a]
            cur = b
            while cur != a:
                loop.append(cur)
                candidates = [k for k in incident[cur] if not used[k]]
                if not candidates:
                    break
                # at a pinched vertex prefer the edge that leaves along a triangle
                nxt_k = candidates[0]
                for k in candidates:
                    other = int(bedges[k][0] + bedges[k][1] - cur)
                    if other in forward.get(cur, []):
                        nxt_k = k
                        break
                used[nxt_k] = True
                cur = int(bedges[nxt_k][0] + bedges[nxt_k][1] - cur)
            loops.append(_readonly(np.asarray(loop, dtype=np.int64)))
        return loops

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + self.n_triangles

    @cached_property
    def n_components(self) -> int:
        e = self.edges
        n = self.n_vertices
        adj = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        count, _ = connected_components(adj, directed=False)
        return int(count)

    # ------------------------------------------------------------------
    # Euclidean geometry of the embedding
    # ------------------------------------------------------------------
    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return _readonly(np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1))

    @cached_property
    def triangle_areas(self) -> np.ndarray:
        return _readonly(triangle_areas(self.vertices, self.triangles))

    @property
    def area(self) -> float:
        return float(self.triangle_areas.sum())

    @property
    def max_edge_length(self) -> float:
        return float(self.edge_lengths.max())

    def boundary_length(self, loop: Optional[int] = None) -> float:
        if loop is None:
            return float(self.edge_lengths[self.boundary_edge_ids].sum())
        ids = self.boundary_loops[loop]
        p = self.vertices[ids]
        return float(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1).sum())

    def triangle_qualities(self) -> np.ndarray:
        """Inradius over circumradius per triangle (0.5 for equilateral)."""
        return triangle_qualities(self.vertices, self.triangles)

    # ------------------------------------------------------------------
    # Identity
    # ------------------------------------------------------------------
    @cached_property
    def fingerprint(self) -> str:
        """SHA256 of the canonical CSLMESH text."""
        return sha256(format_mesh(self, comments=False).encode("ascii"))


@dataclass(frozen=True, eq=False)
class Immersion:
    """Per-vertex coordinates realizing a map of a mesh into R^m."""

    coords: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.coords, dtype=float)
        if c.ndim != 2:
            raise InvalidParameterError(f"immersion coordinates must be 2-D, got {c.shape}")
        object.__setattr__(self, "coords", _readonly(c))

    @classmethod
    def identity(cls, mesh: Mesh) -> "Immersion":
        return cls(mesh.vertices)

    @property
    def dim(self) -> int:
        return self.coords.shape[1]


# ----------------------------------------------------------------------
# Per-triangle helpers
# ----------------------------------------------------------------------
def triangle_areas(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Euclidean areas of flat triangles in any dimension."""
    a = points[triangles[:, 0]]
    u = points[triangles[:, 1]] - a
    w = points[triangles[:, 2]] - a
    uu = np.einsum("ij,ij->i", u, u)
    ww = np.einsum("ij,ij->i", w, w)
    uw = np.einsum("ij,ij->i", u, w)
    return 0.5 * np.sqrt(np.maximum(uu * ww - uw * uw, 0.0))


def degenerate_triangles(points: np.ndarray, triangles: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """Indices of triangles whose area is negligible relative to their size."""
    area = triangle_areas(points, triangles)
    p = points[triangles]
    longest = np.max(np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2), axis=1)
    return np.flatnonzero(area <= rel_tol * longest ** 2)


def triangle_qualities(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = points[triangles]
    lengths = np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2)
    area = triangle_areas(points, triangles)
    semi = lengths.sum(axis=1) / 2
    prod = lengths.prod(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = 4.0 * area ** 2 / (semi * prod)
    return np.nan_to_num(q, nan=0.0)


# ----------------------------------------------------------------------
# Validation
# ----------------------------------------------------------------------
@dataclass
class ValidationReport:
    """Outcome of :func:`validate`; never raises, carries flags instead."""

    euler_characteristic: int
    boundary_loops: int
    min_quality: float
    connected: bool
    degenerate_triangles: int
    non_manifold_edges: int
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "euler_characteristic": self.euler_characteristic,
            "boundary_loops": self.boundary_loops,
            "min_quality": self.min_quality,
            "connected": self.connected,
            "degenerate_triangles": self.degenerate_triangles,
            "non_manifold_edges": self.non_manifold_edges,
            "passed": self.passed,
            "failures": list(self.failures),
        }


def validate(mesh: Mesh, expected_euler: Optional[int] = None) -> ValidationReport:
    """Check the structural invariants of *mesh* and report them."""
    failures: List[str] = []
    non_manifold = int(np.count_nonzero(mesh.edge_face_counts > 2))
    if non_manifold:
        failures.append(f"{non_manifold} edges shared by more than two triangles")
    degenerate = degenerate_triangles(mesh.vertices, mesh.triangles)
    if len(degenerate):
        failures.append(f"{len(degenerate)} degenerate triangles")
    connected = mesh.n_components == 1
    if not connected:
        failures.append(f"mesh has {mesh.n_components} connected components")

    loops = mesh.boundary_loops
    walked = sum(len(loop) for loop in loops)
    if walked != len(mesh.boundary_edges):
        failures.append("boundary edges do not form closed loops")
    chi = mesh.euler_characteristic
    if expected_euler is not None and chi != expected_euler:
        failures.append(f"Euler characteristic {chi}, expected {expected_euler}")

    quality = mesh.triangle_qualities()
    report = ValidationReport(
        euler_characteristic=chi,
        boundary_loops=len(loops),
        min_quality=float(quality.min()),
        connected=connected,
        degenerate_triangles=int(len(degenerate)),
        non_manifold_edges=non_manifold,
        failures=failures,
    )
    if failures:
        logger.warning("Mesh validation failed: %s", "; ".join(failures))
    return report


# ----------------------------------------------------------------------
# Generators
# ----------------------------------------------------------------------
def _merge_arcs(inner: np.ndarray, inner_angles: np.ndarray,
                outer: np.ndarray, outer_angles: np.ndarray) -> List[Tuple[int, int, int]]:
    """Triangulate the strip between two arcs sorted by increasing angle.

    ``inner`` and ``outer`` hold vertex indices; closed rings repeat their
    first vertex at the end with the angle shifted by 2*pi.
    """
    tris: List[Tuple[int, int, int]] = []
    i = j = 0
    ni, no = len(inner) - 1, len(outer) - 1
    while i < ni or j < no:
        advance_outer = j < no and (i == ni or outer_angles[j + 1] <= inner_angles[i + 1])
        if advance_outer:
            tris.append((inner[i], outer[j], outer[j + 1]))
            j += 1
        else:
            tris.append((inner[i], outer[j], inner[i + 1]))
            i += 1
    return tris


def _ring_mesh(ring_radii: Sequence[float], counts: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center vertex plus concentric closed rings, returned as polar data."""
    radii = [0.0]
    angles = [0.0]
    rings: List[Tuple[np.ndarray, np.ndarray]] = []
    tris: List[Tuple[int, int, int]] = []
    next_index = 1
    for r, n in zip(ring_radii, counts):
        idx = np.arange(next_index, next_index + n)
        theta = 2 * np.pi * np.arange(n) / n
        radii.extend([r] * n)
        angles.extend(theta)
        next_index += n
        closed_idx = np.append(idx, idx[0])
        closed_theta = np.append(theta, 2 * np.pi)
        if not rings:
            tris.extend((0, int(closed_idx[k]), int(closed_idx[k + 1])) for k in range(n))
        else:
            prev_idx, prev_theta = rings[-1]
            tris.extend(_merge_arcs(prev_idx, prev_theta, closed_idx, closed_theta))
        rings.append((closed_idx, closed_theta))
    return np.asarray(radii), np.asarray(angles), np.asarray(tris, dtype=np.int64)


def generate_disk(radius: float, resolution: int) -> Mesh:
    """Planar disk centered at the origin.

    Ring ``k`` of ``resolution`` concentric rings carries ``6k`` vertices, so
    resolution 1 is the six-triangle fan.
    """
    if not radius > 0:
        raise InvalidParameterError(f"radius must be positive, got {radius}")
    if int(resolution) < 1:
        raise InvalidParameterError(f"resolution must be >= 1, got {resolution}")
    n = int(resolution)
    ring_radii = [radius * k / n for k in range(1, n + 1)]
    counts = [6 * k for k in range(1, n + 1)]
    r, theta, tris = _ring_mesh(ring_radii, counts)
    vertices = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    logger.debug("Disk r=%g res=%d: %d vertices", radius, n, len(vertices))
    return Mesh(vertices, tris, family="disk")


def generate_spherical_cap(theta: float, resolution: int) -> Mesh:
    """Cap of the unit sphere in R^3 around the south pole, polar radius *theta*."""
    if not 0 < theta < np.pi:
        raise InvalidParameterError(f"cap angle must lie in (0, pi), got {theta}")
    if int(resolution) < 1:
        raise InvalidParameterError(f"resolution must be >= 1, got {resolution}")
    n = int(resolution)
    polar = [theta * k / n for k in range(1, n + 1)]
    counts = [6 * k for k in range(1, n + 1)]
    psi, phi, tris = _ring_mesh(polar, counts)
    vertices = np.column_stack([
        np.sin(psi) * np.cos(phi),
        np.sin(psi) * np.sin(phi),
        -np.cos(psi),
    ])
    return Mesh(vertices, tris, family="cap")


def generate_annulus(r_in: float, r_out: float, resolution: int) -> Mesh:
    """Planar annulus with ``6 * resolution`` angular segments.

    The radial layer count keeps cells close to square at the mean radius.
    """
    if not 0 < r_in < r_out:
        raise InvalidParameterError(f"need 0 < r_in < r_out, got {r_in}, {r_out}")
    if int(resolution) < 1:
        raise InvalidParameterError(f"resolution must be >= 1, got {resolution}")
    n_theta = 6 * int(resolution)
    n_r = max(1, math.ceil(n_theta * (r_out - r_in) / (np.pi * (r_in + r_out))))
    radii = np.linspace(r_in, r_out, n_r + 1)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    vertices = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])

    i, j = np.meshgrid(np.arange(n_r), np.arange(n_theta), indexing="ij")
    i, j = i.ravel(), j.ravel()
    a = i * n_theta + j
    b = i * n_theta + (j + 1) % n_theta
    c = (i + 1) * n_theta + (j + 1) % n_theta
    d = (i + 1) * n_theta + j
    tris = np.concatenate([np.column_stack([a, d, c]), np.column_stack([a, c, b])])
    return Mesh(vertices, tris, family="annulus")


def generate_boundary_graded_disk(
    radius: float,
    eps: float,
    length: float,
    resolution: int,
    arc_segments: int = 24,
) -> Tuple[Mesh, int]:
    """Disk whose mesh is graded toward a boundary point.

    The disk of the given radius is centered at ``(-radius, 0)`` so its
    boundary passes through the origin, which is vertex 0. Vertices sit on
    arcs of circles about the origin: uniformly spaced inside
    ``eps * exp(-length / eps)``, geometrically spaced up to ``eps`` and
    graded back to a spacing of ``radius / resolution`` further out. Under
    the cylinder factor every region then has comparable resolution.

    Returns the mesh and the index of the graded boundary vertex.
    """
    if not radius > 0 or not eps > 0 or length < 0:
        raise InvalidParameterError("radius and eps must be positive, length non-negative")
    if not eps < radius:
        raise InvalidParameterError(f"eps={eps} must be smaller than radius={radius}")
    if int(resolution) < 1 or int(arc_segments) < 3:
        raise InvalidParameterError("resolution >= 1 and arc_segments >= 3 required")

    step_log = np.pi / arc_segments
    r_tip = eps * math.exp(-length / eps)
    n_tip = max(2, math.ceil(1.0 / step_log))
    delta_max = radius / int(resolution)

    radii = list(r_tip * np.arange(1, n_tip + 1) / n_tip)
    r = r_tip
    while r < eps * (1 - 1e-12):
        r = min(r * math.exp(step_log), eps)
        radii.append(r)
    while True:
        step = min(delta_max, r * step_log)
        if r + 1.5 * step >= 2 * radius:
            break
        r += step
        radii.append(r)
    radii = np.asarray(radii)
    spacing = np.diff(np.concatenate([[0.0], radii]))

    coords = [np.zeros(2)]
    arcs: List[Tuple[np.ndarray, np.ndarray]] = []
    next_index = 1
    for rk, dk in zip(radii, spacing):
        half = math.acos(min(rk / (2 * radius), 1.0))
        segments = max(1, math.ceil(2 * half * rk / dk))
        theta = np.pi + np.linspace(-half, half, segments + 1)
        coords.append(np.column_stack([rk * np.cos(theta), rk * np.sin(theta)]))
        idx = np.arange(next_index, next_index + len(theta))
        next_index += len(theta)
        arcs.append((idx, theta))
    far = next_index
    coords.append(np.array([[-2 * radius, 0.0]]))

    tris: List[Tuple[int, int, int]] = []
    idx0, _ = arcs[0]
    tris.extend((0, int(idx0[k]), int(idx0[k + 1])) for k in range(len(idx0) - 1))
    for (a_idx, a_th), (b_idx, b_th) in zip(arcs[:-1], arcs[1:]):
        tris.extend(_merge_arcs(a_idx, a_th, b_idx, b_th))
    last_idx, _ = arcs[-1]
    tris.extend((int(last_idx[k]), far, int(last_idx[k + 1])) for k in range(len(last_idx) - 1))

    vertices = np.vstack([np.atleast_2d(c) for c in coords])
    logger.info(
        "Graded disk R=%g eps=%g L=%g: %d vertices, %d arcs, tip radius %.3e",
        radius, eps, length, len(vertices), len(arcs), r_tip,
    )
    return Mesh(vertices, np.asarray(tris, dtype=np.int64), family="graded-disk"), 0


# ----------------------------------------------------------------------
# Text format
# ----------------------------------------------------------------------
def format_mesh(mesh: Mesh, comments: bool = True) -> str:
    buf = io.StringIO()
    buf.write(MAGIC + "\n")
    if comments:
        buf.write(f"# family {mesh.family}\n")
    buf.write(f"{mesh.n_vertices} {mesh.n_triangles} {mesh.dim}\n")
    for row in mesh.vertices:
        buf.write(" ".join(repr(float(x)) for x in row) + "\n")
    for a, b, c in mesh.triangles:
        buf.write(f"{a} {b} {c}\n")
    return buf.getvalue()


def parse_mesh(text: str) -> Mesh:
    """Parse CSLMESH text; ``# family <name>`` comments set the family.

    The magic line must come first; comments may follow anywhere after it.
    """
    family = "custom"
    lines = []
    raw_lines = text.splitlines()
    if not raw_lines or raw_lines[0].strip() != MAGIC:
        raise ConfigError("not a CSLMESH 1 file (the first line must be the magic)")
    for raw in raw_lines:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "family":
                family = parts[1]
            continue
        lines.append(line)
    try:
        n_v, n_f, m = (int(x) for x in lines[1].split())
        vertices = np.array([[float(x) for x in ln.split()] for ln in lines[2:2 + n_v]])
        triangles = np.array([[int(x) for x in ln.split()] for ln in lines[2 + n_v:2 + n_v + n_f]])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"malformed CSLMESH body: {exc}") from exc
    if vertices.shape != (n_v, m) or triangles.shape != (n_f, 3):
        raise ConfigError("CSLMESH header does not match body")
    return Mesh(vertices, triangles, family)


def write_mesh(mesh: Mesh, path: Path) -> None:
    Path(path).write_text(format_mesh(mesh), encoding="ascii")


def read_mesh(path: Path) -> Mesh:
    try:
        text = Path(path).read_text(encoding="ascii")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: CSLMESH files are ASCII ({exc.reason} at byte {exc.start})") from exc
    return parse_mesh(text)

"""Ribbon surfaces in R^3.

A ribbon is swept along a skeleton polyline by a segment of fixed Euclidean
width. The segment direction is parallel-transported along the skeleton and
then turned by ``pi * half_twists`` over the whole length; on a closed
skeleton an odd number of half twists glues the seam with a flip and gives a
Möbius band. Several ribbons and flat junction patches can be welded into a
single surface.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from core.errors import ConstraintViolationError, EmbeddingFailureError, InvalidParameterError
from geometry.mesh import Mesh

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RibbonSpec:
    skeleton: np.ndarray
    width: float
    half_twists: int = 0
    n_along: int = 128
    n_across: int = 3
    closed: bool = True

    def __post_init__(self) -> None:
        sk = np.array(self.skeleton, dtype=float)
        if sk.ndim != 2 or sk.shape[1] != 3:
            raise InvalidParameterError(f"skeleton must be a (P, 3) polyline, got {sk.shape}")
        if len(sk) < (3 if self.closed else 2):
            raise InvalidParameterError("skeleton has too few points")
        if not self.width > 0:
            raise InvalidParameterError(f"width must be positive, got {self.width}")
        if self.n_along < 3 or self.n_across < 3:
            raise InvalidParameterError("resolution must be >= 3 in each direction")
        object.__setattr__(self, "skeleton", sk)


def circle_skeleton(radius: float = 1.0, samples: int = 256, arc: Tuple[float, float] = (0.0, 2 * np.pi),
                    closed: bool = True) -> np.ndarray:
    """Points on a circle in the xy-plane; closed circles omit the repeated end."""
    t = np.linspace(arc[0], arc[1], samples, endpoint=not closed)
    return np.column_stack([radius * np.cos(t), radius * np.sin(t), np.zeros_like(t)])


# ----------------------------------------------------------------------
# Skeleton processing
# ----------------------------------------------------------------------
def _resample(skeleton: np.ndarray, n: int, closed: bool) -> Tuple[np.ndarray, np.ndarray, float]:
    pts = np.vstack([skeleton, skeleton[:1]]) if closed else skeleton
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(s[-1])
    if closed:
        targets = total * np.arange(n) / n
    else:
        targets = np.linspace(0.0, total, n)
    out = np.column_stack([np.interp(targets, s, pts[:, k]) for k in range(3)])
    return out, targets, total


def _tangents(points: np.ndarray, closed: bool) -> np.ndarray:
    if closed:
        t = np.roll(points, -1, axis=0) - np.roll(points, 1, axis=0)
    else:
        t = np.gradient(points, axis=0, edge_order=2)
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def min_curvature_radius(points: np.ndarray, closed: bool) -> float:
    """Smallest circumradius of consecutive sample triples."""
    if closed:
        a, b, c = np.roll(points, 1, axis=0), points, np.roll(points, -1, axis=0)
    else:
        a, b, c = points[:-2], points[1:-1], points[2:]
    ab = np.linalg.norm(b - a, axis=1)
    bc = np.linalg.norm(c - b, axis=1)
    ca = np.linalg.norm(a - c, axis=1)
    twice_area = np.linalg.norm(np.cross(b - a, c - a), axis=1)
    with np.errstate(divide="ignore"):
        radius = np.where(twice_area > 1e-15 * ab * bc, ab * bc * ca / (2 * twice_area), np.inf)
    return float(radius.min()) if len(radius) else np.inf


def _rotate_about(v: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    return (v * np.cos(angle) + np.cross(axis, v) * np.sin(angle)
            + axis * np.dot(axis, v) * (1 - np.cos(angle)))


def _transport_frame(tangents: np.ndarray) -> np.ndarray:
    """Parallel-transported unit normals along the tangents (rotation minimizing)."""
    t0 = tangents[0]
    helper = np.eye(3)[np.argmin(np.abs(t0))]
    n0 = np.cross(t0, helper)
    normals = np.empty_like(tangents)
    normals[0] = n0 / np.linalg.norm(n0)
    for i in range(1, len(tangents)):
        a, b = tangents[i - 1], tangents[i]
        axis = np.cross(a, b)
        sin = np.linalg.norm(axis)
        n = normals[i - 1]
        if sin > 1e-14:
            n = _rotate_about(n, axis / sin, np.arctan2(sin, np.dot(a, b)))
        n = n - np.dot(n, b) * b
        normals[i] = n / np.linalg.norm(n)
    return normals


# ----------------------------------------------------------------------
# Generation
# ----------------------------------------------------------------------
def generate_ribbon(spec: RibbonSpec, check_embedding: bool = True) -> Mesh:
    """Mesh a ribbon of Euclidean width ``spec.width`` along the skeleton."""
    pts, s, total = _resample(spec.skeleton, spec.n_along, spec.closed)
    r_min = min_curvature_radius(pts, spec.closed)
    if spec.width >= r_min:
        raise ConstraintViolationError(
            f"ribbon width {spec.width} is not below the skeleton curvature radius {r_min:.4g}"
        )
    tangents = _tangents(pts, spec.closed)
    normals = _transport_frame(tangents)

    correction = np.zeros(len(pts))
    if spec.closed:
        # rotate the transported frame back onto itself after one turn
        last = _transport_frame(np.vstack([tangents, tangents[:1]]))[-1]
        holonomy = np.arctan2(np.dot(np.cross(normals[0], last), tangents[0]), np.dot(normals[0], last))
        correction = -holonomy * s / total
        length = total
    else:
        length = total if total > 0 else 1.0
    twist = np.pi * spec.half_twists * s / length + correction

    binormals = np.cross(tangents, normals)
    across = normals * np.cos(twist)[:, None] + binormals * np.sin(twist)[:, None]
    offsets = spec.width * np.linspace(-0.5, 0.5, spec.n_across)
    vertices = (pts[:, None, :] + offsets[None, :, None] * across[:, None, :]).reshape(-1, 3)

    m = spec.n_across
    n_rows = spec.n_along if spec.closed else spec.n_along - 1
    i, j = np.meshgrid(np.arange(n_rows), np.arange(m - 1), indexing="ij")
    i, j = i.ravel(), j.ravel()
    i_next = (i + 1) % spec.n_along
    j_next_row, j1_next_row = j.copy(), j + 1
    if spec.closed and spec.half_twists % 2:
        seam = i == spec.n_along - 1
        j_next_row[seam] = m - 1 - j[seam]
        j1_next_row[seam] = m - 2 - j[seam]
    a = i * m + j
    b = i * m + j + 1
    c = i_next * m + j1_next_row
    d = i_next * m + j_next_row
    tris = np.concatenate([np.column_stack([a, d, c]), np.column_stack([a, c, b])])

    family = "mobius" if spec.closed and spec.half_twists % 2 else "ribbon"
    mesh = Mesh(vertices, tris, family=family)
    logger.info("Ribbon width=%g twists=%d: %d vertices", spec.width, spec.half_twists, mesh.n_vertices)
    if check_embedding:
        hits = self_intersections(mesh)
        if len(hits):
            raise EmbeddingFailureError(
                f"ribbon intersects itself ({len(hits)} triangle pairs, first {tuple(hits[0])})"
            )
    return mesh


# ----------------------------------------------------------------------
# Self-intersection scan
# ----------------------------------------------------------------------
def segment_hits_triangle(p0, p1, a, b, c, eps: float = 1e-12) -> np.ndarray:
    """Vectorized Möller–Trumbore test for segments against triangles.

    Touching within *eps* of an edge or an endpoint does not count.
    """
    d = p1 - p0
    e1 = b - a
    e2 = c - a
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1) * np.linalg.norm(d, axis=1)
    ok = np.abs(det) > 1e-12 * scale
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = p0 - a
    u = np.einsum("ij,ij->i", tvec, p) * inv
    q = np.cross(tvec, e1)
    v = np.einsum("ij,ij->i", d, q) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    return ok & (u > eps) & (v > eps) & (u + v < 1 - eps) & (t > eps) & (t < 1 - eps)


def coplanar_overlaps(A: np.ndarray, B: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    """Separating-axis test for pairs of coplanar triangles, corners shape (P, 3, 3).

    Pairs that are not coplanar, or only touch along an edge or a corner, give
    ``False``.
    """
    e1 = A[:, 1] - A[:, 0]
    normal = np.cross(e1, A[:, 2] - A[:, 0])
    n_len = np.linalg.norm(normal, axis=1)
    scale = np.maximum(np.linalg.norm(A - np.roll(A, 1, axis=1), axis=2).max(axis=1),
                       np.linalg.norm(B - np.roll(B, 1, axis=1), axis=2).max(axis=1))
    ok = n_len > eps * scale ** 2
    n = normal / np.where(ok, n_len, 1.0)[:, None]
    offset = np.abs(np.einsum("pkj,pj->pk", B - A[:, :1], n)).max(axis=1)
    overlap = ok & (offset <= eps * scale)
    if not overlap.any():
        return overlap
    u = e1 / np.maximum(np.linalg.norm(e1, axis=1, keepdims=True), np.finfo(float).tiny)
    v = np.cross(n, u)

    def flat(T: np.ndarray) -> np.ndarray:
        rel = T - A[:, :1]
        return np.stack([np.einsum("pkj,pj->pk", rel, u), np.einsum("pkj,pj->pk", rel, v)], axis=2)

    pa, pb = flat(A), flat(B)
    for poly in (pa, pb):
        for k in range(3):
            edge = poly[:, (k + 1) % 3] - poly[:, k]
            axis = np.column_stack([-edge[:, 1], edge[:, 0]])
            sa = np.einsum("pkj,pj->pk", pa, axis)
            sb = np.einsum("pkj,pj->pk", pb, axis)
            tol = eps * scale * np.linalg.norm(axis, axis=1)
            separated = (sa.max(axis=1) <= sb.min(axis=1) + tol) | (sb.max(axis=1) <= sa.min(axis=1) + tol)
            overlap &= ~separated
    return overlap


def self_intersections(mesh: Mesh) -> np.ndarray:
    """Pairs of triangles without a shared vertex whose interiors cross or overlap.

    Planar meshes are scanned in the plane ``z = 0``.
    """
    x = mesh.vertices
    if mesh.dim == 2:
        x = np.column_stack([x, np.zeros(len(x))])
    tri = mesh.triangles
    corners = x[tri]
    centroids = corners.mean(axis=1)
    reach = np.linalg.norm(corners - centroids[:, None, :], axis=2).max()
    pairs = cKDTree(centroids).query_pairs(2 * reach, output_type="ndarray")
    if len(pairs) == 0:
        return pairs
    ta, tb = tri[pairs[:, 0]], tri[pairs[:, 1]]
    shared = (ta[:, :, None] == tb[:, None, :]).any(axis=(1, 2))
    pairs = pairs[~shared]
    if len(pairs) == 0:
        return pairs
    A, B = corners[pairs[:, 0]], corners[pairs[:, 1]]
    hit = np.zeros(len(pairs), dtype=bool)
    for first, second in ((A, B), (B, A)):
        for k in range(3):
            hit |= segment_hits_triangle(
                first[:, k], first[:, (k + 1) % 3], second[:, 0], second[:, 1], second[:, 2]
            )
    hit |= coplanar_overlaps(A, B)
    return pairs[hit]


# ----------------------------------------------------------------------
# Multi-ribbon surfaces
# ----------------------------------------------------------------------
def weld(parts: Iterable[Mesh], tol: float = 1e-9, family: Optional[str] = None) -> Mesh:
    """Concatenate meshes and merge vertices closer than *tol*.

    Triangles that collapse after merging are dropped and unused vertices
    removed, so junction patches can simply share boundary points with the
    ribbons they connect.
    """
    parts = list(parts)
    if not parts:
        raise InvalidParameterError("nothing to weld")
    dims = {p.dim for p in parts}
    if len(dims) != 1:
        raise InvalidParameterError(f"cannot weld meshes of dimensions {sorted(dims)}")
    vertices = np.vstack([p.vertices for p in parts])
    offsets = np.cumsum([0] + [p.n_vertices for p in parts[:-1]])
    triangles = np.vstack([p.triangles + off for p, off in zip(parts, offsets)])

    n = len(vertices)
    pairs = cKDTree(vertices).query_pairs(tol, output_type="ndarray")
    graph = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)) \
        if len(pairs) else sparse.coo_matrix((n, n))
    _, labels = connected_components(graph, directed=False)
    representative = np.full(labels.max() + 1, n, dtype=np.int64)
    np.minimum.at(representative, labels, np.arange(n))
    triangles = representative[labels][triangles]
    keep = (triangles[:, 0] != triangles[:, 1]) & (triangles[:, 1] != triangles[:, 2]) \
        & (triangles[:, 0] != triangles[:, 2])
    triangles = triangles[keep]

    used, compact = np.unique(triangles, return_inverse=True)
    logger.debug("Welded %d parts: %d -> %d vertices", len(parts), n, len(used))
    return Mesh(vertices[used], compact.reshape(-1, 3), family or parts[0].family)


def assemble_surface(specs: Iterable[RibbonSpec], patches: Iterable[Mesh] = (), tol: float = 1e-9,
                     check_embedding: bool = True) -> Mesh:
    """Union of ribbons joined by explicit junction patches."""
    ribbons = [generate_ribbon(spec, check_embedding=False) for spec in specs]
    surface = weld(ribbons + list(patches), tol=tol, family="ribbon-surface")
    if check_embedding:
        hits = self_intersections(surface)
        if len(hits):
            raise EmbeddingFailureError(f"assembled surface intersects itself ({len(hits)} pairs)")
    return surface

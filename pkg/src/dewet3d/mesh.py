"""Triangulated film/vapor surfaces with contact loops on the substrate z = 0.

A :class:`SurfaceMesh` is an open (or closed) oriented triangle mesh whose
boundary edges chain into closed loops lying in the substrate plane.  Meshes
are immutable once built: the vertex and triangle arrays are flagged
read-only, and time stepping produces new meshes via
:meth:`SurfaceMesh.with_vertices`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ContactLineOffSubstrate,
    DegenerateTriangle,
    InvalidDimension,
    IsolatedVertex,
    NonManifoldEdge,
    OpenBoundaryChain,
    OrientationError,
    SizeMismatch,
)

logger = logging.getLogger(__name__)

AREA_RTOL = 1e-14
Z_RTOL = 1e-12


@dataclass(frozen=True)
class ContactLoop:
    """Closed, oriented cycle of boundary vertices (a contact line)."""

    vertex_indices: np.ndarray
    # triangle adjacent to segment (vertex_indices[i], vertex_indices[i+1])
    segment_triangles: np.ndarray

    @property
    def segment_count(self) -> int:
        return len(self.vertex_indices)

    def segments(self) -> np.ndarray:
        """(N_seg, 2) array of directed segments ``(p1, p2)``."""
        v = self.vertex_indices
        return np.column_stack((v, np.roll(v, -1)))


@dataclass(frozen=True)
class SurfaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_loops: tuple = ()
    eps_area: float = 0.0
    _segments: np.ndarray = field(default=None, repr=False, compare=False)
    _segment_triangles: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._segments is None:
            if self.boundary_loops:
                segs = np.vstack([lp.segments() for lp in self.boundary_loops])
                stri = np.concatenate([lp.segment_triangles for lp in self.boundary_loops])
            else:
                segs = np.zeros((0, 2), dtype=np.int64)
                stri = np.zeros(0, dtype=np.int64)
            segs.setflags(write=False)
            stri.setflags(write=False)
            object.__setattr__(self, "_segments", segs)
            object.__setattr__(self, "_segment_triangles", stri)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def boundary_segments(self) -> np.ndarray:
        """All directed boundary segments of all loops, loop by loop."""
        return self._segments

    @property
    def boundary_segment_triangles(self) -> np.ndarray:
        return self._segment_triangles

    @property
    def boundary_vertices(self) -> np.ndarray:
        if not self.boundary_loops:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([lp.vertex_indices for lp in self.boundary_loops])

    def with_vertices(self, vertices) -> "SurfaceMesh":
        """Same connectivity, new positions; boundary heights are re-pinned to 0."""
        vertices = np.array(vertices, dtype=float)
        if vertices.shape != self.vertices.shape:
            raise SizeMismatch(
                f"expected vertices of shape {self.vertices.shape}, got {vertices.shape}"
            )
        vertices[self.boundary_vertices, 2] = 0.0
        vertices.setflags(write=False)
        return SurfaceMesh(
            vertices,
            self.triangles,
            self.boundary_loops,
            self.eps_area,
            self._segments,
            self._segment_triangles,
        )


def _triangle_areas(vertices, triangles):
    a = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - a
    e2 = vertices[triangles[:, 2]] - a
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def build_mesh(vertices, triangles) -> SurfaceMesh:
    """Validate raw arrays and extract the oriented contact loops.

    Raises
    ------
    DegenerateTriangle
        A triangle repeats a vertex, or its area is below the tolerance.
    NonManifoldEdge
        An edge is shared by more than two triangles.
    OrientationError
        Neighbouring triangles wind inconsistently, or the contact loops
        enclose negative substrate area (inside-out surface).
    OpenBoundaryChain
        Boundary edges do not form disjoint simple loops.
    ContactLineOffSubstrate
        A boundary vertex does not lie on z = 0.
    """
    vertices = np.array(vertices, dtype=float)
    triangles = np.array(triangles, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise SizeMismatch("vertices must have shape (K, 3)")
    if triangles.ndim != 2 or triangles.shape[1] != 3 or len(triangles) == 0:
        raise SizeMismatch("triangles must have shape (N, 3) with N >= 1")
    K = len(vertices)
    if triangles.min() < 0 or triangles.max() >= K:
        raise SizeMismatch("triangle vertex index out of range")

    t0, t1, t2 = triangles.T
    repeated = np.flatnonzero((t0 == t1) | (t1 == t2) | (t2 == t0))
    if repeated.size:
        raise DegenerateTriangle(f"triangle {repeated[0]} repeats a vertex")

    used = np.zeros(K, dtype=bool)
    used[triangles.ravel()] = True
    if not used.all():
        raise IsolatedVertex(f"vertex {np.flatnonzero(~used)[0]} belongs to no triangle")

    diag = float(np.linalg.norm(vertices.max(axis=0) - vertices.min(axis=0)))
    eps_area = AREA_RTOL * diag**2
    areas = _triangle_areas(vertices, triangles)
    bad = np.flatnonzero(areas <= eps_area)
    if bad.size:
        raise DegenerateTriangle(
            f"triangle {bad[0]} has area {areas[bad[0]]:.3e} <= {eps_area:.3e}"
        )

    # directed half-edges (a -> b), one per triangle corner
    heads = np.concatenate((t0, t1, t2))
    tails = np.concatenate((t1, t2, t0))
    owner = np.tile(np.arange(len(triangles)), 3)
    lo = np.minimum(heads, tails)
    hi = np.maximum(heads, tails)
    ukey, ucount = np.unique(lo * K + hi, return_counts=True)
    if (ucount > 2).any():
        k = ukey[np.argmax(ucount)]
        raise NonManifoldEdge(f"edge ({k // K}, {k % K}) is shared by {ucount.max()} triangles")
    dkey, dcount = np.unique(heads * K + tails, return_counts=True)
    if (dcount > 1).any():
        k = dkey[np.argmax(dcount)]
        raise OrientationError(
            f"edge ({k // K}, {k % K}) is traversed in the same direction by two triangles"
        )

    # a half-edge is on the boundary when its reverse is absent
    reverse = np.isin(tails * K + heads, dkey, assume_unique=False)
    bmask = ~reverse
    b_from, b_to, b_tri = heads[bmask], tails[bmask], owner[bmask]

    loops = []
    if b_from.size:
        out_deg = np.bincount(b_from, minlength=K)
        in_deg = np.bincount(b_to, minlength=K)
        bverts = np.flatnonzero((out_deg > 0) | (in_deg > 0))
        if (out_deg[bverts] != 1).any() or (in_deg[bverts] != 1).any():
            v = bverts[(out_deg[bverts] != 1) | (in_deg[bverts] != 1)][0]
            raise OpenBoundaryChain(
                f"boundary vertex {v} has {in_deg[v]} incoming and {out_deg[v]} outgoing "
                "boundary edges"
            )
        nxt = dict(zip(b_from.tolist(), zip(b_to.tolist(), b_tri.tolist())))
        remaining = set(nxt)
        # deterministic traversal: start each loop at its smallest free vertex
        for start in sorted(nxt):
            if start not in remaining:
                continue
            cycle, tris = [], []
            v = start
            while True:
                remaining.discard(v)
                w, tri = nxt[v]
                cycle.append(v)
                tris.append(tri)
                v = w
                if v == start:
                    break
                if v not in remaining:
                    raise OpenBoundaryChain(f"boundary chain through vertex {v} does not close")
            if len(cycle) < 3:
                raise OpenBoundaryChain(f"contact loop through vertex {start} has < 3 segments")
            loops.append(ContactLoop(np.array(cycle), np.array(tris)))

        zscale = diag if diag > 0 else 1.0
        bz = np.abs(vertices[bverts, 2])
        if (bz > Z_RTOL * zscale).any():
            v = bverts[np.argmax(bz)]
            raise ContactLineOffSubstrate(
                f"boundary vertex {v} has z = {vertices[v, 2]:.6g}, expected 0"
            )
        vertices[bverts, 2] = 0.0

        total = sum(_loop_signed_area(vertices, lp.vertex_indices) for lp in loops)
        if total <= 0:
            raise OrientationError(
                "contact loops enclose non-positive substrate area; triangles appear to be "
                "ordered clockwise as seen from outside"
            )

    for lp in loops:
        lp.vertex_indices.setflags(write=False)
        lp.segment_triangles.setflags(write=False)
    vertices.setflags(write=False)
    triangles.setflags(write=False)
    return SurfaceMesh(vertices, triangles, tuple(loops), eps_area)


def _loop_signed_area(vertices, cycle):
    x = vertices[cycle, 0]
    y = vertices[cycle, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def mesh_size(mesh: SurfaceMesh) -> float:
    """h = max_j sqrt(|sigma_j|)."""
    return float(np.sqrt(_triangle_areas(mesh.vertices, mesh.triangles).max()))


# -- generators -------------------------------------------------------------


def _breaks(points, target_h):
    """Grid coordinates subdividing each interval into cells of side <= 2h.

    Each cell is later split into four triangles around its centre, so a
    cell of side 2h yields triangles of area h**2.
    """
    out = [points[0]]
    for a, b in zip(points[:-1], points[1:]):
        n = max(1, math.ceil((b - a) / (2.0 * target_h) - 1e-9))
        out.extend(np.linspace(a, b, n + 1)[1:].tolist())
    return np.array(out)


class _QuadSurface:
    """Accumulates outward-oriented quads, each split into 4 triangles."""

    def __init__(self):
        self.index = {}
        self.points = []
        self.tris = []

    def vertex(self, p):
        key = tuple(round(float(c), 12) for c in p)
        k = self.index.get(key)
        if k is None:
            k = self.index[key] = len(self.points)
            self.points.append([float(c) for c in p])
        return k

    def quad(self, corners, outward):
        corners = [np.asarray(c, dtype=float) for c in corners]
        normal = np.cross(corners[2] - corners[0], corners[3] - corners[1])
        if np.dot(normal, outward) < 0:
            corners = corners[::-1]
        centre = self.vertex(sum(corners) / 4.0)
        ids = [self.vertex(c) for c in corners]
        for i in range(4):
            self.tris.append((centre, ids[i], ids[(i + 1) % 4]))


def _prism_over_cells(xb, yb, solid, zb):
    """Exposed surface of the solid {cells marked in ``solid``} x [0, height].

    The bottom (substrate) face is omitted; side walls are emitted wherever a
    solid cell borders an empty cell or the grid exterior.
    """
    surf = _QuadSurface()
    nx, ny = solid.shape
    top = zb[-1]
    for i in range(nx):
        for j in range(ny):
            if not solid[i, j]:
                continue
            x0, x1, y0, y1 = xb[i], xb[i + 1], yb[j], yb[j + 1]
            surf.quad([(x0, y0, top), (x1, y0, top), (x1, y1, top), (x0, y1, top)], (0, 0, 1))
            walls = []
            if i == 0 or not solid[i - 1, j]:
                walls.append(((x0, y0), (x0, y1), (-1, 0, 0)))
            if i == nx - 1 or not solid[i + 1, j]:
                walls.append(((x1, y0), (x1, y1), (1, 0, 0)))
            if j == 0 or not solid[i, j - 1]:
                walls.append(((x0, y0), (x1, y0), (0, -1, 0)))
            if j == ny - 1 or not solid[i, j + 1]:
                walls.append(((x0, y1), (x1, y1), (0, 1, 0)))
            for (ax, ay), (bx, by), outward in walls:
                for z0, z1 in zip(zb[:-1], zb[1:]):
                    surf.quad([(ax, ay, z0), (bx, by, z0), (bx, by, z1), (ax, ay, z1)], outward)
    return build_mesh(np.array(surf.points), np.array(surf.tris))


def _check_positive(**dims):
    for name, value in dims.items():
        if not (value > 0) or not math.isfinite(value):
            raise InvalidDimension(f"{name} must be positive, got {value!r}")


def generate_cuboid_island(length, width, height, target_h) -> SurfaceMesh:
    """Five exposed faces of [-L/2, L/2] x [-W/2, W/2] x [0, height]."""
    _check_positive(length=length, width=width, height=height, target_h=target_h)
    xb = _breaks([-length / 2, length / 2], target_h)
    yb = _breaks([-width / 2, width / 2], target_h)
    zb = _breaks([0.0, height], target_h)
    solid = np.ones((len(xb) - 1, len(yb) - 1), dtype=bool)
    return _prism_over_cells(xb, yb, solid, zb)


def generate_ring_island(outer_l, outer_w, inner_l, inner_w, height, target_h) -> SurfaceMesh:
    """Square-ring island: an outer cuboid with a centred inner cuboid removed."""
    _check_positive(
        outer_l=outer_l, outer_w=outer_w, inner_l=inner_l, inner_w=inner_w,
        height=height, target_h=target_h,
    )
    if not (inner_l < outer_l and inner_w < outer_w):
        raise InvalidDimension("inner rectangle must lie strictly inside the outer one")
    xb = _breaks([-outer_l / 2, -inner_l / 2, inner_l / 2, outer_l / 2], target_h)
    yb = _breaks([-outer_w / 2, -inner_w / 2, inner_w / 2, outer_w / 2], target_h)
    zb = _breaks([0.0, height], target_h)
    xc = 0.5 * (xb[:-1] + xb[1:])
    yc = 0.5 * (yb[:-1] + yb[1:])
    hole = (np.abs(xc)[:, None] < inner_l / 2) & (np.abs(yc)[None, :] < inner_w / 2)
    return _prism_over_cells(xb, yb, ~hole, zb)


def unique_edges(triangles) -> np.ndarray:
    """Sorted (E, 2) array of undirected edges."""
    t = np.asarray(triangles)
    e = np.vstack((t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]))
    e.sort(axis=1)
    return np.unique(e, axis=0)


def refine(mesh: SurfaceMesh) -> SurfaceMesh:
    """Split every triangle into four through its edge midpoints."""
    V, T = mesh.vertices, mesh.triangles
    K = len(V)
    edges = unique_edges(T)
    mids = 0.5 * (V[edges[:, 0]] + V[edges[:, 1]])
    lookup = {(int(a), int(b)): K + i for i, (a, b) in enumerate(edges)}

    def mid(a, b):
        return np.array([lookup[(min(p, q), max(p, q))] for p, q in zip(a.tolist(), b.tolist())])

    a, b, c = T.T
    mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
    new_t = np.vstack(
        (
            np.column_stack((a, mab, mca)),
            np.column_stack((mab, b, mbc)),
            np.column_stack((mca, mbc, c)),
            np.column_stack((mab, mbc, mca)),
        )
    )
    # interleave so children of triangle j stay adjacent
    n = len(T)
    order = np.arange(4 * n).reshape(4, n).T.ravel()
    new_v = np.vstack((V, mids))
    seg = mesh.boundary_segments
    if len(seg):
        bmid = mid(seg[:, 0], seg[:, 1])
        new_v[bmid, 2] = 0.0
    return build_mesh(new_v, new_t[order])

"""Per-element geometric operators on a polygonal surface.

Everything here is a pure function of an immutable :class:`SurfaceMesh`.
The vectorised :func:`compute_geometry` is what the time stepper uses; the
single-entity helpers (:func:`triangle_normal_area`,
:func:`boundary_segment_geometry`, :func:`weighted_vertex_normal`) exist for
inspection and testing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTriangle, IsolatedVertex, NotABoundarySegment, SizeMismatch
from .mesh import SurfaceMesh

logger = logging.getLogger(__name__)

E_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class TriangleGeometry:
    normal: np.ndarray
    area: float
    # row a is the (constant) surface gradient of the hat function at vertex a
    gradients: np.ndarray


@dataclass(frozen=True)
class BoundarySegmentGeometry:
    length: float
    substrate_conormal: np.ndarray
    surface_conormal: np.ndarray


@dataclass(frozen=True)
class MeshGeometry:
    """Cached element quantities for one mesh configuration."""

    normals: np.ndarray  # (N, 3)
    areas: np.ndarray  # (N,)
    gradients: np.ndarray  # (N, 3, 3): triangle, local vertex, component
    mass_normals: np.ndarray  # (K, 3): sum_j |sigma_j| n_j / 3 over incident triangles
    segment_vectors: np.ndarray  # (M, 3): p2 - p1
    segment_lengths: np.ndarray  # (M,)
    substrate_conormals: np.ndarray  # (M, 3)
    surface_conormals: np.ndarray  # (M, 3)
    vertex_areas: np.ndarray = field(default=None)  # (K,): sum of incident areas


def _gradients(p0, p1, p2, normals, dbl_area):
    # grad phi_a = n x (opposite edge, oriented anti-clockwise) / (2 |sigma|)
    opp = np.stack((p2 - p1, p0 - p2, p1 - p0), axis=-2)
    return np.cross(normals[..., None, :], opp) / dbl_area[..., None, None]


def triangle_normal_area(q1, q2, q3) -> TriangleGeometry:
    q1, q2, q3 = (np.asarray(q, dtype=float) for q in (q1, q2, q3))
    cr = np.cross(q2 - q1, q3 - q1)
    dbl = float(np.linalg.norm(cr))
    scale = max(np.linalg.norm(q2 - q1), np.linalg.norm(q3 - q1), np.linalg.norm(q3 - q2))
    if dbl <= 1e-14 * scale**2 or scale == 0.0:
        raise DegenerateTriangle("points are collinear or coincident")
    n = cr / dbl
    grads = _gradients(q1, q2, q3, n, np.asarray(dbl))
    return TriangleGeometry(n, 0.5 * dbl, grads)


def compute_geometry(mesh: SurfaceMesh) -> MeshGeometry:
    V, T = mesh.vertices, mesh.triangles
    p0, p1, p2 = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    cr = np.cross(p1 - p0, p2 - p0)
    dbl = np.linalg.norm(cr, axis=1)
    if (dbl <= 0).any():
        j = int(np.argmin(dbl))
        raise DegenerateTriangle(f"triangle {j} has zero area")
    normals = cr / dbl[:, None]
    areas = 0.5 * dbl
    grads = _gradients(p0, p1, p2, normals, dbl)

    K = len(V)
    w = areas[:, None] * normals / 3.0
    mass_normals = np.zeros((K, 3))
    vertex_areas = np.zeros(K)
    for a in range(3):
        np.add.at(mass_normals, T[:, a], w)
        np.add.at(vertex_areas, T[:, a], areas)

    seg = mesh.boundary_segments
    d = V[seg[:, 1]] - V[seg[:, 0]]
    lengths = np.linalg.norm(d, axis=1)
    if len(seg) and (lengths <= 0).any():
        raise NotABoundarySegment(f"boundary segment {int(np.argmin(lengths))} has zero length")
    ng = np.cross(d, E_Z)
    ng /= np.linalg.norm(ng, axis=1)[:, None]
    tang = d / lengths[:, None] if len(seg) else d
    cg = np.cross(tang, normals[mesh.boundary_segment_triangles])
    if len(seg):
        cg /= np.linalg.norm(cg, axis=1)[:, None]
    return MeshGeometry(normals, areas, grads, mass_normals, d, lengths, ng, cg, vertex_areas)


def surface_area(mesh: SurfaceMesh, geom: MeshGeometry | None = None) -> float:
    geom = geom or compute_geometry(mesh)
    return float(np.sum(geom.areas))


def _as_corner_values(mesh, f, per_corner):
    f = np.asarray(f, dtype=float)
    N, K = mesh.n_triangles, mesh.n_vertices
    if per_corner:
        if f.shape[:2] != (N, 3):
            raise SizeMismatch(f"per-corner values need leading shape ({N}, 3), got {f.shape}")
        return f
    if f.shape[0] != K:
        raise SizeMismatch(f"nodal values need leading dimension {K}, got {f.shape}")
    return f[mesh.triangles]


def lumped_inner_product(mesh, f, g, *, per_corner=False, geom=None) -> float:
    """Mass-lumped product (1/3) sum_j |sigma_j| sum_k f(q_jk^-) . g(q_jk^-).

    ``f`` and ``g`` are nodal arrays of shape (K,) or (K, d), or, with
    ``per_corner=True``, one-sided corner values of shape (N, 3) or (N, 3, d).
    """
    geom = geom or compute_geometry(mesh)
    fc = _as_corner_values(mesh, f, per_corner)
    gc = _as_corner_values(mesh, g, per_corner)
    if fc.shape != gc.shape:
        raise SizeMismatch(f"shapes differ: {fc.shape} vs {gc.shape}")
    prod = fc * gc
    if prod.ndim == 3:
        prod = prod.sum(axis=2)
    return float(np.sum(geom.areas * prod.sum(axis=1)) / 3.0)


def surface_gradient(mesh, f, geom=None) -> np.ndarray:
    """Per-triangle surface gradient of a P1 field: (N, 3) or (N, d, 3)."""
    geom = geom or compute_geometry(mesh)
    f = np.asarray(f, dtype=float)
    if f.shape[0] != mesh.n_vertices:
        raise SizeMismatch(f"nodal values need leading dimension {mesh.n_vertices}")
    fc = f[mesh.triangles]  # (N, 3) or (N, 3, d)
    if fc.ndim == 2:
        return np.einsum("ja,jac->jc", fc, geom.gradients)
    return np.einsum("jad,jac->jdc", fc, geom.gradients)


def stiffness_apply(mesh, f, g, geom=None) -> float:
    """(grad_S f, grad_S g) over the surface; exact for P1 fields."""
    geom = geom or compute_geometry(mesh)
    gf = surface_gradient(mesh, f, geom)
    gg = surface_gradient(mesh, g, geom)
    if gf.shape != gg.shape:
        raise SizeMismatch(f"shapes differ: {gf.shape} vs {gg.shape}")
    dots = (gf * gg).reshape(len(geom.areas), -1).sum(axis=1)
    return float(np.sum(geom.areas * dots))


def _segment_index(mesh, segment):
    seg = mesh.boundary_segments
    if isinstance(segment, (int, np.integer)):
        if not 0 <= segment < len(seg):
            raise NotABoundarySegment(f"segment index {segment} out of range")
        return int(segment)
    p1, p2 = (int(v) for v in segment)
    hit = np.flatnonzero((seg[:, 0] == p1) & (seg[:, 1] == p2))
    if hit.size == 0:
        raise NotABoundarySegment(f"({p1}, {p2}) is not a directed boundary segment")
    return int(hit[0])


def boundary_segment_geometry(mesh, segment) -> BoundarySegmentGeometry:
    """Length and conormals of one boundary segment.

    ``segment`` is an index into ``mesh.boundary_segments`` or a directed
    vertex pair ``(p1, p2)`` in loop orientation.
    """
    j = _segment_index(mesh, segment)
    p1, p2 = mesh.boundary_segments[j]
    d = mesh.vertices[p2] - mesh.vertices[p1]
    length = float(np.linalg.norm(d))
    if length <= 0.0:
        raise NotABoundarySegment(f"boundary segment {j} is degenerate (zero length)")
    ng = np.cross(d, E_Z)
    ng /= np.linalg.norm(ng)
    tri = mesh.vertices[mesh.triangles[mesh.boundary_segment_triangles[j]]]
    n_sigma = triangle_normal_area(*tri).normal
    cg = np.cross(d / length, n_sigma)
    cg /= np.linalg.norm(cg)
    return BoundarySegmentGeometry(length, ng, cg)


def weighted_vertex_normals(mesh, geom=None) -> np.ndarray:
    """Area-weighted average of incident triangle normals, for every vertex."""
    geom = geom or compute_geometry(mesh)
    if (geom.vertex_areas <= 0).any():
        raise IsolatedVertex(f"vertex {int(np.argmin(geom.vertex_areas))} is in no triangle")
    return 3.0 * geom.mass_normals / geom.vertex_areas[:, None]


def weighted_vertex_normal(mesh, k, geom=None) -> np.ndarray:
    if not 0 <= k < mesh.n_vertices:
        raise IsolatedVertex(f"vertex index {k} out of range")
    geom = geom or compute_geometry(mesh)
    if geom.vertex_areas[k] <= 0:
        raise IsolatedVertex(f"vertex {k} is in no triangle")
    return 3.0 * geom.mass_normals[k] / geom.vertex_areas[k]


@dataclass
class WellposednessReport:
    ok: bool
    min_area: float
    area_ok: bool
    horizontal_normal_ok: bool
    max_horizontal_weight: float
    degenerate_triangles: list
    warnings: list

    def summary(self) -> str:
        lines = [
            f"min triangle area          : {self.min_area:.6e} ({'ok' if self.area_ok else 'FAIL'})",
            f"max boundary |omega_xy|^2  : {self.max_horizontal_weight:.6e} "
            f"({'ok' if self.horizontal_normal_ok else 'FAIL'})",
        ]
        if self.degenerate_triangles:
            lines.append(f"degenerate triangles       : {self.degenerate_triangles[:10]}")
        lines.extend(f"warning: {w}" for w in self.warnings)
        lines.append("well-posedness assumptions: " + ("satisfied" if self.ok else "VIOLATED"))
        return "\n".join(lines)


def wellposedness_check(mesh, theta_i, *, eps=1e-12) -> WellposednessReport:
    """Check the hypotheses under which each time step is uniquely solvable.

    (i) every triangle has area above the mesh tolerance; (ii) some contact
    line vertex has a weighted normal with a non-vanishing horizontal part.
    Uniqueness is only guaranteed for a right Young angle, so other angles
    produce a warning rather than a failure.
    """
    V, T = mesh.vertices, mesh.triangles
    p0 = V[T[:, 0]]
    areas = 0.5 * np.linalg.norm(np.cross(V[T[:, 1]] - p0, V[T[:, 2]] - p0), axis=1)
    bad = np.flatnonzero(areas <= mesh.eps_area).tolist()
    area_ok = not bad
    warnings = []

    bverts = mesh.boundary_vertices
    max_h = 0.0
    if bverts.size and area_ok:
        omega = weighted_vertex_normals(mesh)[bverts]
        max_h = float(np.max(omega[:, 0] ** 2 + omega[:, 1] ** 2))
    elif not bverts.size:
        warnings.append("mesh has no contact line")
    horizontal_ok = max_h > eps
    if abs(math.cos(theta_i)) > 1e-12:
        warnings.append(
            f"Young angle {theta_i:.6g} differs from pi/2: unique solvability is not guaranteed"
        )
    for w in warnings:
        logger.warning(w)
    return WellposednessReport(
        ok=area_ok and horizontal_ok,
        min_area=float(areas.min()),
        area_ok=area_ok,
        horizontal_normal_ok=horizontal_ok,
        max_horizontal_weight=max_h,
        degenerate_triangles=bad,
        warnings=warnings,
    )


def enclosed_volume(mesh, geom=None) -> float:
    """Volume between the surface and the substrate via the flux of (0, 0, z)."""
    geom = geom or compute_geometry(mesh)
    zbar = mesh.vertices[mesh.triangles, 2].mean(axis=1)
    return float(np.sum(geom.areas * geom.normals[:, 2] * zbar))


def substrate_area(mesh) -> float:
    """Signed area enclosed by the contact loops (holes count negative).

    This is the trapezoidal evaluation of (1/2) (n_Gamma, X)_Gamma, which
    for straight segments reduces to the shoelace formula.
    """
    seg = mesh.boundary_segments
    if not len(seg):
        return 0.0
    p1 = mesh.vertices[seg[:, 0]]
    p2 = mesh.vertices[seg[:, 1]]
    d = p2 - p1
    # (d x e_z) . (p1 + p2) / 4, summed
    s = p1 + p2
    return float(np.sum(d[:, 1] * s[:, 0] - d[:, 0] * s[:, 1]) / 4.0)

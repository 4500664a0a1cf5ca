"""Surface energies given by sums of weighted vector norms.

    gamma(n) = sum_i sqrt(n^T G_i n),   G_i symmetric positive definite.

Besides evaluating gamma and the Cahn-Hoffman vector, this module provides
the per-triangle ingredients of the anisotropic stiffness form: the
surface metrics G~_i = det(G_i)^(1/2) G_i^(-1) and G~-orthonormal tangent
bases.

G~_i is the metric in which the area of a planar patch with unit normal n
equals its Euclidean area times gamma_i(n).  That identity is what makes the
stiffness form dominate the new surface energy and hence what gives
unconditional energy stability; the scaled matrix det(G)^(-1/2) G itself
only has that property when G is a multiple of the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CuspSingularity,
    DegenerateTangentSpace,
    NotOrthogonal,
    NotSPD,
    SizeMismatch,
    ZeroVector,
)

SPD_TOL = 1e-10
SYM_TOL = 1e-14
CUSP_TOL = 1e-14


@dataclass(frozen=True)
class Anisotropy:
    matrices: tuple
    determinants: tuple
    normalized: tuple  # G~_i = det(G_i)^(1/2) G_i^(-1)
    kind: str = "matrices"

    @classmethod
    def from_matrices(cls, matrices, kind="matrices"):
        mats = []
        for i, G in enumerate(matrices):
            G = np.array(G, dtype=float)
            if G.shape != (3, 3):
                raise SizeMismatch(f"G_{i} must be 3x3, got {G.shape}")
            scale = max(1.0, float(np.abs(G).max()))
            if np.abs(G - G.T).max() > SYM_TOL * scale:
                raise NotSPD(f"G_{i} is not symmetric")
            G = 0.5 * (G + G.T)
            if np.linalg.eigvalsh(G).min() <= SPD_TOL:
                raise NotSPD(f"G_{i} is not positive definite")
            G.setflags(write=False)
            mats.append(G)
        if not mats:
            raise NotSPD("at least one matrix is required")
        dets = tuple(float(np.linalg.det(G)) for G in mats)
        norm = []
        for G, d in zip(mats, dets):
            Gt = np.sqrt(d) * np.linalg.inv(G)
            Gt = 0.5 * (Gt + Gt.T)
            Gt.setflags(write=False)
            norm.append(Gt)
        return cls(tuple(mats), dets, tuple(norm), kind)

    @property
    def n_terms(self) -> int:
        return len(self.matrices)

    @property
    def is_isotropic(self) -> bool:
        return self.n_terms == 1 and np.array_equal(self.matrices[0], np.eye(3))

    def stacked(self) -> np.ndarray:
        return np.stack(self.matrices)


def make_isotropic() -> Anisotropy:
    return Anisotropy.from_matrices([np.eye(3)], kind="isotropic")


def make_ellipsoidal(a1, a2, a3) -> Anisotropy:
    a = np.array([a1, a2, a3], dtype=float)
    if (a <= 0).any():
        raise NotSPD("ellipsoidal semi-axes must be positive")
    return Anisotropy.from_matrices([np.diag(a**2)], kind="ellipsoidal")


def make_cusped(delta) -> Anisotropy:
    """Smoothed l1 energy sum_i sqrt((1 - delta^2) n_i^2 + delta^2 |n|^2)."""
    if not 0 < delta <= 1:
        raise NotSPD(f"delta must lie in (0, 1], got {delta!r}")
    d2 = delta**2
    mats = []
    for i in range(3):
        diag = np.full(3, d2)
        diag[i] = 1.0
        mats.append(np.diag(diag))
    return Anisotropy.from_matrices(mats, kind="cusped")


def make_rotated(aniso: Anisotropy, R) -> Anisotropy:
    """Energy n -> gamma(R n), realised as G_i -> R^T G_i R."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or np.abs(R.T @ R - np.eye(3)).max() > 1e-12:
        raise NotOrthogonal("rotation matrix must be orthogonal")
    return Anisotropy.from_matrices([R.T @ G @ R for G in aniso.matrices], kind=aniso.kind)


def rotation_matrix(axis, angle) -> np.ndarray:
    """Right-handed rotation by ``angle`` about the coordinate axis 'x', 'y' or 'z'."""
    c, s = np.cos(angle), np.sin(angle)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    if axis == "z":
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    raise ValueError(f"unknown rotation axis {axis!r}")


def _check_nonzero(n):
    norms = np.linalg.norm(n, axis=-1)
    if (norms == 0).any():
        raise ZeroVector("gamma is undefined for the zero vector")


def gamma_terms(aniso: Anisotropy, n) -> np.ndarray:
    """gamma_i(n) = sqrt(n^T G_i n); shape (..., L)."""
    n = np.asarray(n, dtype=float)
    _check_nonzero(n)
    G = aniso.stacked()
    q = np.einsum("...a,iab,...b->...i", n, G, n)
    return np.sqrt(np.maximum(q, 0.0))


def gamma(aniso: Anisotropy, n):
    """Surface energy density; works on a single vector or a (..., 3) stack."""
    g = gamma_terms(aniso, n).sum(axis=-1)
    return float(g) if np.ndim(g) == 0 else g


def xi_vector(aniso: Anisotropy, n) -> np.ndarray:
    """Cahn-Hoffman vector sum_i G_i n / gamma_i(n)."""
    n = np.asarray(n, dtype=float)
    gi = gamma_terms(aniso, n)
    if (gi < CUSP_TOL).any():
        raise CuspSingularity("a weighted norm vanishes at this normal")
    G = aniso.stacked()
    Gn = np.einsum("iab,...b->...ia", G, n)
    return np.sum(Gn / gi[..., None], axis=-2)


def gtilde_tangent_basis(Gt, n, reference_edge):
    """Return (t1, t2) with t_a . n = 0 and t_a . (Gt t_b) = delta_ab.

    ``Gt`` may be a single 3x3 matrix or a stack broadcastable against ``n``
    and ``reference_edge`` of shape (..., 3).  The basis is obtained by
    Gram-Schmidt in the Gt inner product, starting from the tangential part
    of ``reference_edge`` and its in-plane perpendicular.
    """
    Gt = np.asarray(Gt, dtype=float)
    n = np.asarray(n, dtype=float)
    e = np.asarray(reference_edge, dtype=float)
    u1 = e - np.sum(e * n, axis=-1, keepdims=True) * n
    scale = np.linalg.norm(e, axis=-1)
    if (np.linalg.norm(u1, axis=-1) <= 1e-12 * np.maximum(scale, 1e-300)).any():
        raise DegenerateTangentSpace("reference edge is parallel to the normal")
    u2 = np.cross(n, u1)

    def gdot(a, b):
        return np.einsum("...a,...ab,...b->...", a, Gt, b)

    t1 = u1 / np.sqrt(gdot(u1, u1))[..., None]
    u2 = u2 - gdot(u2, t1)[..., None] * t1
    t2 = u2 / np.sqrt(gdot(u2, u2))[..., None]
    return t1, t2


def tangent_projectors(aniso: Anisotropy, normals, edges) -> np.ndarray:
    """P_i = t1 t1^T + t2 t2^T per triangle and term; shape (N, L, 3, 3).

    P_i is independent of which G~_i-orthonormal tangent basis is used.
    """
    out = np.empty((len(normals), aniso.n_terms, 3, 3))
    for i, Gt in enumerate(aniso.normalized):
        t1, t2 = gtilde_tangent_basis(Gt, normals, edges)
        out[:, i] = np.einsum("ja,jb->jab", t1, t1) + np.einsum("ja,jb->jab", t2, t2)
    return out


def anisotropic_stiffness_apply(mesh, term, f, g, aniso: Anisotropy, geom=None) -> float:
    """(gamma_i(n), (grad^G~ f, grad^G~ g)_G~) over the surface for one term.

    ``f`` and ``g`` are nodal vector fields of shape (K, 3).
    """
    from .geometry import compute_geometry, surface_gradient

    geom = geom or compute_geometry(mesh)
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != (mesh.n_vertices, 3) or g.shape != f.shape:
        raise SizeMismatch(f"vector fields must have shape ({mesh.n_vertices}, 3)")
    Gt = aniso.normalized[term]
    V, T = mesh.vertices, mesh.triangles
    edges = V[T[:, 1]] - V[T[:, 0]]
    t1, t2 = gtilde_tangent_basis(Gt, geom.normals, edges)
    Df = surface_gradient(mesh, f, geom)  # (N, 3 comps, 3 dirs)
    Dg = surface_gradient(mesh, g, geom)
    total = np.zeros(len(geom.areas))
    for t in (t1, t2):
        df = np.einsum("jcd,jd->jc", Df, t)  # directional derivative of each component
        dg = np.einsum("jcd,jd->jc", Dg, t)
        total += np.einsum("jc,cd,jd->j", df, Gt, dg)
    gi = gamma_terms(aniso, geom.normals)[:, term]
    return float(np.sum(geom.areas * gi * total))

"""Semi-implicit parametric finite element step for surface diffusion with
moving contact lines.

Each step solves one linear system for the displacement dX = X^{m+1} - X^m
(with zero vertical displacement on the contact line) and the new curvature
or chemical potential, using geometry frozen at X^m.  With the
semi-implicit treatment of the substrate conormal the discrete energy
(see :func:`dewet3d.diagnostics.total_energy`) is non-increasing for every
time step size.

Unknowns are ordered as ``[dX_0x, dX_0y, dX_0z, dX_1x, ..., H_0, ..., H_{K-1}]``
before the constrained vertical contact-line components are removed.  The
system is written in the symmetric form

    [ A_X + R/(eta tau) - cos(theta) C     -N^T  ] [dX]   [ -A_X X^m + cos(theta) c ]
    [ -N                                   -tau A] [H ] = [ 0                        ]

where A is the P1 stiffness matrix, A_X its (possibly anisotropic) vector
counterpart, N the lumped normal mass matrix, R the contact-line friction
term and C the implicit half of the substrate conormal.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import linsolve
from .anisotropy import Anisotropy, gamma_terms, make_isotropic, tangent_projectors
from .errors import AssemblyFailure, Dewet3DError, MeshInverted, SingularMatrix, ValidationError
from .geometry import MeshGeometry, compute_geometry
from .mesh import SurfaceMesh

logger = logging.getLogger(__name__)

SEMI_IMPLICIT = "semi_implicit"
EXPLICIT = "explicit"


@dataclass(frozen=True)
class SchemeParams:
    tau: float
    theta_i: float
    eta: float = 100.0
    boundary_term: str = SEMI_IMPLICIT
    energy: Anisotropy = field(default_factory=make_isotropic)
    tol: float = linsolve.DEFAULT_TOL
    max_iter: int | None = None
    solver: str = "auto"

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValidationError("tau", f"must be positive, got {self.tau!r}")
        if not (0 < self.theta_i < math.pi):
            raise ValidationError("theta_i", f"must lie in (0, pi), got {self.theta_i!r}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValidationError("eta", f"must be positive, got {self.eta!r}")
        if self.boundary_term not in (SEMI_IMPLICIT, EXPLICIT):
            raise ValidationError("boundary_term", f"unknown variant {self.boundary_term!r}")
        if not self.tol > 0:
            raise ValidationError("tol", "must be positive")
        if self.solver not in ("auto", "direct", "gmres"):
            raise ValidationError("solver", f"unknown method {self.solver!r}")


@dataclass(frozen=True)
class SchemeState:
    mesh: SurfaceMesh
    potential: np.ndarray | None = None  # None before the first solve
    time: float = 0.0
    step: int = 0
    residual: float = 0.0
    dissipation: float = 0.0  # tau ||grad H||^2 + ||dX_G . n_G||^2 / (eta tau) of the last step
    boundary_term: str | None = None  # variant actually used in the last step
    max_displacement: float = 0.0  # max_k |dX_k| of the last step, an equilibrium indicator


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray  # positions of the retained unknowns in the full vector
    n_vertices: int
    geometry: MeshGeometry
    stiffness: sp.csr_matrix
    boundary_term: str

    @property
    def n_position_dofs(self) -> int:
        return len(self.free) - self.n_vertices

    def expand(self, y):
        """Full-length (dX (K, 3), H (K,)) from a reduced solution vector."""
        K = self.n_vertices
        full = np.zeros(4 * K)
        full[self.free] = y
        return full[: 3 * K].reshape(K, 3), full[3 * K :]


def stiffness_matrix(mesh: SurfaceMesh, geom: MeshGeometry) -> sp.csr_matrix:
    """Scalar P1 stiffness matrix A_kl = (grad phi_k, grad phi_l)."""
    T = mesh.triangles
    loc = geom.areas[:, None, None] * np.einsum("jac,jbc->jab", geom.gradients, geom.gradients)
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    K = mesh.n_vertices
    return linsolve.compile_triplets(rows, cols, loc.ravel(), (K, K))


def isotropic_position_matrix(A: sp.csr_matrix) -> sp.csr_matrix:
    return sp.kron(A, sp.identity(3), format="csr")


def anisotropic_position_matrix(mesh, geom, aniso: Anisotropy) -> sp.csr_matrix:
    """Sum over terms of (gamma_i(n), (grad^G~_i X, grad^G~_i g)_G~_i) as a matrix.

    On triangle j the (a, b) block is |sigma_j| gamma_i(n_j)
    (grad phi_a . P_i grad phi_b) G~_i with P_i = t1 t1^T + t2 t2^T.
    """
    V, T = mesh.vertices, mesh.triangles
    edges = V[T[:, 1]] - V[T[:, 0]]
    P = tangent_projectors(aniso, geom.normals, edges)  # (N, L, 3, 3)
    gi = gamma_terms(aniso, geom.normals)  # (N, L)
    G = np.stack(aniso.normalized)  # (L, 3, 3)
    # s[j, i, a, b] = |sigma| gamma_i grad_a . P_i grad_b
    s = np.einsum("jac,jicd,jbd->jiab", geom.gradients, P, geom.gradients)
    s *= (geom.areas[:, None] * gi)[:, :, None, None]
    blocks = np.einsum("jiab,icd->jacbd", s, G)  # (N, a, c, b, d)
    node_r = 3 * T[:, :, None] + np.arange(3)[None, None, :]  # (N, a, c)
    rows = np.broadcast_to(node_r[:, :, :, None, None], blocks.shape).ravel()
    cols = np.broadcast_to(node_r[:, None, None, :, :], blocks.shape).ravel()
    K3 = 3 * mesh.n_vertices
    return linsolve.compile_triplets(rows, cols, blocks.ravel(), (K3, K3))


def normal_mass_matrix(mesh, geom) -> sp.csr_matrix:
    """N (K x 3K): row k holds the lumped weights sum_j |sigma_j| n_j / 3."""
    K = mesh.n_vertices
    rows = np.repeat(np.arange(K), 3)
    cols = np.arange(3 * K)
    return sp.csr_matrix((geom.mass_normals.ravel(), (rows, cols)), shape=(K, 3 * K))


def _boundary_terms(mesh, geom, implicit_conormal):
    """Friction matrix R, implicit conormal matrix C and explicit conormal load c."""
    K3 = 3 * mesh.n_vertices
    seg = mesh.boundary_segments
    load = np.zeros(K3)
    if not len(seg):
        empty = sp.csr_matrix((K3, K3))
        return empty, empty, load
    a, b = seg[:, 0], seg[:, 1]
    ng = geom.substrate_conormals[:, :2]
    # exact integral of (dX . n_G)(g . n_G) over each segment: n_G is constant
    # there and both factors are linear, giving the mass matrix |l|/6 [[2, 1], [1, 2]]
    w = (geom.segment_lengths / 6.0)[:, None, None] * ng[:, :, None] * ng[:, None, :]
    rr, cc, vv = [], [], []
    for v, u, mult in ((a, a, 2.0), (b, b, 2.0), (a, b, 1.0), (b, a, 1.0)):
        for c in range(2):
            for d in range(2):
                rr.append(3 * v + c)
                cc.append(3 * u + d)
                vv.append(mult * w[:, c, d])
    R = linsolve.compile_triplets(np.concatenate(rr), np.concatenate(cc), np.concatenate(vv), (K3, K3))

    # explicit part (d/|l|) x e_z = (d_y, -d_x, 0)/|l|; trapezoidal weight |l|/2
    # per endpoint.  The semi-implicit variant adds half of the same term
    # evaluated on the displacement, which is the matrix C below.
    d = geom.segment_vectors
    for v in (a, b):
        np.add.at(load, 3 * v, 0.5 * d[:, 1])
        np.add.at(load, 3 * v + 1, -0.5 * d[:, 0])
    if not implicit_conormal:
        return R, sp.csr_matrix((K3, K3)), load
    q = np.full(len(seg), 0.25)
    rr, cc, vv = [], [], []
    for v in (a, b):
        # row x: +1/4 (db_y - da_y); row y: -1/4 (db_x - da_x)
        rr += [3 * v, 3 * v, 3 * v + 1, 3 * v + 1]
        cc += [3 * b + 1, 3 * a + 1, 3 * b, 3 * a]
        vv += [q, -q, -q, q]
    C = linsolve.compile_triplets(np.concatenate(rr), np.concatenate(cc), np.concatenate(vv), (K3, K3))
    return R, C, load


def assemble_step(state: SchemeState, params: SchemeParams, *, boundary_term=None,
                  anisotropic_path=None) -> LinearSystem:
    """Build the reduced linear system for one time step from ``state.mesh``.

    ``anisotropic_path`` forces (True) or suppresses (False) the weighted-norm
    assembly; by default it is used unless the energy is exactly isotropic.
    """
    mesh = state.mesh
    boundary_term = boundary_term or params.boundary_term
    try:
        geom = compute_geometry(mesh)
    except Exception as exc:
        raise AssemblyFailure(f"step {state.step}: invalid geometry: {exc}") from exc
    K = mesh.n_vertices
    tau, eta = params.tau, params.eta
    cos_t = math.cos(params.theta_i)

    A = stiffness_matrix(mesh, geom)
    if anisotropic_path is None:
        anisotropic_path = not params.energy.is_isotropic
    if anisotropic_path:
        AX = anisotropic_position_matrix(mesh, geom, params.energy)
    else:
        AX = isotropic_position_matrix(A)
    N = normal_mass_matrix(mesh, geom)
    R, C, load = _boundary_terms(mesh, geom, boundary_term == SEMI_IMPLICIT)

    top_left = AX + R * (1.0 / (eta * tau))
    if cos_t != 0.0:
        top_left = top_left - cos_t * C
    M = sp.bmat([[top_left, -N.T], [-N, -tau * A]], format="csr")
    rhs = np.concatenate((-(AX @ mesh.vertices.ravel()) + cos_t * load, np.zeros(K)))

    keep = np.ones(4 * K, dtype=bool)
    keep[3 * mesh.boundary_vertices + 2] = False
    free = np.flatnonzero(keep)
    M = M[free][:, free]
    if not np.isfinite(M.data).all():
        raise AssemblyFailure(f"step {state.step}: non-finite matrix entries")
    return LinearSystem(M.tocsr(), rhs[free], free, K, geom, A, boundary_term)


def _step_dissipation(system: LinearSystem, mesh, dX, H, params):
    A = system.stiffness
    diss = params.tau * float(H @ (A @ H))
    seg = mesh.boundary_segments
    if len(seg):
        g = system.geometry
        ng = g.substrate_conormals
        vn_a = np.sum(dX[seg[:, 0]] * ng, axis=1)
        vn_b = np.sum(dX[seg[:, 1]] * ng, axis=1)
        L = g.segment_lengths
        diss += float(np.sum(L * (vn_a**2 + vn_a * vn_b + vn_b**2))) / (3.0 * params.eta * params.tau)
    return diss


def advance(state: SchemeState, params: SchemeParams) -> SchemeState:
    """One time step; returns the new state on the updated mesh."""
    system = assemble_step(state, params)
    try:
        y, info = linsolve.solve(system.matrix, system.rhs, params.tol, params.max_iter, params.solver)
    except SingularMatrix:
        if system.boundary_term == SEMI_IMPLICIT and math.cos(params.theta_i) != 0.0:
            logger.warning(
                "step %d: singular semi-implicit system, retrying with explicit contact-line term",
                state.step,
            )
            system = assemble_step(state, params, boundary_term=EXPLICIT)
            y, info = linsolve.solve(
                system.matrix, system.rhs, params.tol, params.max_iter, params.solver
            )
        else:
            raise
    dX, H = system.expand(y)
    mesh = state.mesh
    new_mesh = mesh.with_vertices(mesh.vertices + dX)

    V, T = new_mesh.vertices, new_mesh.triangles
    p0 = V[T[:, 0]]
    areas = 0.5 * np.linalg.norm(np.cross(V[T[:, 1]] - p0, V[T[:, 2]] - p0), axis=1)
    if areas.min() <= mesh.eps_area:
        j = int(np.argmin(areas))
        raise MeshInverted(
            f"step {state.step + 1}: triangle {j} area {areas[j]:.3e} fell below tolerance"
        )
    return SchemeState(
        mesh=new_mesh,
        potential=H,
        time=state.time + params.tau,
        step=state.step + 1,
        residual=info.residual,
        dissipation=_step_dissipation(system, mesh, dX, H, params),
        boundary_term=system.boundary_term,
        max_displacement=float(np.abs(dX).max()),
    )


@dataclass
class RunResult:
    final: SchemeState
    records: list
    truncated: bool
    # running sums of the per-step dissipation terms
    dissipation_total: float = 0.0

    def energies(self) -> np.ndarray:
        return np.array([r.W for r in self.records])

    def energy_bound_holds(self, slack=1e-10) -> bool:
        """sum of dissipation <= W^0 - W^M (up to roundoff slack)."""
        W = self.energies()
        return self.dissipation_total <= W[0] - W[-1] + slack * abs(W[0])


def run(initial_mesh: SurfaceMesh, params: SchemeParams, t_final, observers=(), every=1,
        initial_state: SchemeState | None = None) -> RunResult:
    """Advance from ``initial_mesh`` to ``t_final``.

    A diagnostics record is taken after every step; each observer is called
    as ``observer(state, record)`` at step 0, every ``every`` steps and at the
    final step.  If ``t_final`` is not a multiple of ``tau`` the last step is
    shortened and the result is flagged ``truncated``.  When resuming from
    ``initial_state``, ``t_final`` is the absolute end time.
    """
    from .diagnostics import make_record

    state = initial_state or SchemeState(initial_mesh)
    duration = t_final - state.time
    n_full = int(math.floor(duration / params.tau + 1e-9))
    remainder = duration - n_full * params.tau
    truncated = remainder > 1e-9 * max(1.0, abs(t_final))
    n_steps = n_full + (1 if truncated else 0)

    V0 = None
    rec = make_record(state, params, V0)
    V0 = rec.V
    records = [rec]
    for obs in observers:
        obs(state, rec)
    total = 0.0
    t_start = state.time
    for m in range(n_steps):
        p = params
        if truncated and m == n_steps - 1:
            p = replace(params, tau=remainder)
        try:
            state = advance(state, p)
        except Dewet3DError as exc:
            exc.step = state.step + 1
            raise
        if not truncated or m < n_steps - 1:
            state = replace(state, time=t_start + (m + 1) * params.tau)
        else:
            state = replace(state, time=t_final)
        total += state.dissipation
        rec = make_record(state, params, V0)
        if rec.W > records[-1].W + 1e-10 * abs(records[-1].W):
            logger.warning("step %d: energy increased from %.15g to %.15g", state.step,
                           records[-1].W, rec.W)
        records.append(rec)
        if observers and (state.step % every == 0 or m == n_steps - 1):
            for obs in observers:
                obs(state, rec)
    return RunResult(state, records, truncated, total)

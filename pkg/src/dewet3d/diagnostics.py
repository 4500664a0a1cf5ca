"""Measurements taken along a run and the mesh-convergence harness."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, replace

import numpy as np

from .anisotropy import Anisotropy, gamma
from .errors import NoBoundary, ValidationError, ZeroInitialVolume
from .geometry import compute_geometry, enclosed_volume, substrate_area
from .mesh import SurfaceMesh, mesh_size, refine

logger = logging.getLogger(__name__)

CSV_HEADER = ("t", "W", "V", "dV", "theta_bar", "residual", "min_area", "max_area")
CONVERGENCE_HEADER = ("level", "h", "tau", "time", "error", "order")


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    W: float
    V: float
    dV: float
    theta_bar: float
    residual: float
    min_area: float
    max_area: float


def total_energy(mesh: SurfaceMesh, anisotropy: Anisotropy, theta_i, geom=None) -> float:
    """W = sum_j gamma(n_j) |sigma_j| - cos(theta_i) |S_1|."""
    geom = geom or compute_geometry(mesh)
    surf = float(np.sum(gamma(anisotropy, geom.normals) * geom.areas))
    return surf - math.cos(theta_i) * substrate_area(mesh)


def relative_volume_loss(volumes) -> np.ndarray:
    """(V(t) - V(0)) / |V(0)| for a volume series or a list of records."""
    vols = np.array([getattr(v, "V", v) for v in volumes], dtype=float)
    if vols[0] == 0:
        raise ZeroInitialVolume("initial volume is zero")
    return (vols - vols[0]) / abs(vols[0])


def contact_angles(mesh, geom=None) -> np.ndarray:
    geom = geom or compute_geometry(mesh)
    if not len(mesh.boundary_segments):
        raise NoBoundary("mesh has no contact line")
    cosines = np.sum(geom.surface_conormals * geom.substrate_conormals, axis=1)
    return np.arccos(np.clip(cosines, -1.0, 1.0))


def average_contact_angle(mesh, geom=None) -> float:
    """Uniform average over all boundary segments of arccos(c_G . n_G)."""
    return float(np.mean(contact_angles(mesh, geom)))


def make_record(state, params, V0=None) -> DiagnosticsRecord:
    mesh = state.mesh
    geom = compute_geometry(mesh)
    W = total_energy(mesh, params.energy, params.theta_i, geom)
    V = enclosed_volume(mesh, geom)
    dV = 0.0 if V0 is None else (V - V0) / abs(V0)
    theta = average_contact_angle(mesh, geom) if len(mesh.boundary_segments) else float("nan")
    return DiagnosticsRecord(
        t=state.time, W=W, V=V, dV=dV, theta_bar=theta, residual=state.residual,
        min_area=float(geom.areas.min()), max_area=float(geom.areas.max()),
    )


def records_to_csv(records, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([repr(float(x)) for x in astuple(r)])


class CsvRecorder:
    """Run observer appending one diagnostics row per invocation."""

    def __init__(self, fh):
        self._w = csv.writer(fh, lineterminator="\n")
        self._fh = fh
        self._w.writerow(CSV_HEADER)

    def __call__(self, state, record):
        self._w.writerow([repr(float(x)) for x in astuple(record)])
        self._fh.flush()


# -- manifold distance ----------------------------------------------------


def point_triangle_distance(p, a, b, c) -> np.ndarray:
    """Exact Euclidean distance from points to triangles (broadcasting).

    Classifies the closest point into the face, edge or vertex Voronoi
    regions of each triangle.
    """
    p, a, b, c = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (p, a, b, c)))
    ab, ac, ap = b - a, c - a, p - a

    def dot(u, v):
        return np.einsum("...i,...i->...", u, v)

    d1, d2 = dot(ab, ap), dot(ac, ap)
    bp = p - b
    d3, d4 = dot(ab, bp), dot(ac, bp)
    cp = p - c
    d5, d6 = dot(ab, cp), dot(ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    q = np.empty_like(p)
    done = np.zeros(p.shape[:-1], dtype=bool)

    def put(mask, val):
        nonlocal done
        m = mask & ~done
        if m.any():
            q[m] = val[m] if val.shape == q.shape else np.broadcast_to(val, q.shape)[m]
        done = done | m

    with np.errstate(divide="ignore", invalid="ignore"):
        put((d1 <= 0) & (d2 <= 0), a)
        put((d3 >= 0) & (d4 <= d3), b)
        v = d1 / (d1 - d3)
        put((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[..., None] * ab)
        put((d6 >= 0) & (d5 <= d6), c)
        w = d2 / (d2 - d6)
        put((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[..., None] * ac)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        put((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w[..., None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        put(np.ones_like(done), a + v[..., None] * ab + w[..., None] * ac)
    return np.linalg.norm(p - q, axis=-1)


def _one_sided(points, mesh, chunk, threads):
    V, T = mesh.vertices, mesh.triangles
    a, b, c = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    # bound the number of point-triangle pairs held in memory at once
    step = max(1, int(chunk // max(1, len(T))))

    def block(start):
        P = points[start : start + step, None, :]
        return point_triangle_distance(P, a[None], b[None], c[None]).min(axis=1).max()

    starts = range(0, len(points), step)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return float(max(ex.map(block, starts)))
    return float(max(block(s) for s in starts))


def manifold_distance(mesh_a: SurfaceMesh, mesh_b: SurfaceMesh, *, threads=1,
                      chunk=2_000_000) -> float:
    """Symmetrised max-min vertex-to-triangle distance between two meshes."""
    ab = _one_sided(mesh_b.vertices, mesh_a, chunk, threads)
    ba = _one_sided(mesh_a.vertices, mesh_b, chunk, threads)
    return 0.5 * (ab + ba)


# -- misc shape measures --------------------------------------------------


def fit_sphere(points):
    """Least-squares sphere |x - c|^2 = r^2 through the points; returns (c, r)."""
    P = np.asarray(points, dtype=float)
    M = np.column_stack((2 * P, np.ones(len(P))))
    rhs = np.sum(P * P, axis=1)
    sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    centre = sol[:3]
    return centre, float(np.sqrt(sol[3] + centre @ centre))


# -- convergence harness --------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    level: int
    h: float
    tau: float
    time: float
    error: float
    order: float  # nan on the first level


@dataclass
class ConvergenceTable:
    rows: list

    def errors(self, time) -> list:
        return [r.error for r in self.rows if math.isclose(r.time, time, rel_tol=1e-12)]

    def orders(self, time) -> list:
        return [r.order for r in self.rows
                if math.isclose(r.time, time, rel_tol=1e-12) and not math.isnan(r.order)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CONVERGENCE_HEADER)
        for r in self.rows:
            order = "" if math.isnan(r.order) else repr(r.order)
            w.writerow([r.level, repr(r.h), repr(r.tau), repr(r.time), repr(r.error), order])
        return buf.getvalue()


def _steps_for(times, tau):
    out = []
    for t in times:
        k = round(t / tau)
        if k < 0 or abs(k * tau - t) > 1e-9 * max(1.0, abs(t)):
            raise ValidationError("times", f"t = {t} is not a multiple of tau = {tau}")
        out.append(k)
    return out


def run_snapshots(mesh, params, times):
    """Run to max(times) and return {time: mesh} at the requested times."""
    from .scheme import run

    wanted = dict(zip(_steps_for(times, params.tau), times))
    snaps = {}

    def grab(state, _record):
        if state.step in wanted:
            snaps[wanted[state.step]] = state.mesh

    if 0 in wanted:
        snaps[wanted[0]] = mesh
    run(mesh, params, max(times), observers=[grab], every=1)
    return snaps


def convergence_study(base_mesh, params, depth, times, *, threads=1, progress=None):
    """Errors e_{h,tau}(t) = M(X_{h,tau}, X_{h/2,tau/4}) along a refinement ladder.

    ``depth`` error levels need ``depth + 1`` runs: level l uses the base mesh
    refined l times and time step tau / 4**l.
    """
    if depth < 1:
        raise ValidationError("depth", "must be at least 1")
    times = sorted(float(t) for t in times)
    meshes = [base_mesh]
    for _ in range(depth):
        meshes.append(refine(meshes[-1]))
    taus = [params.tau / 4**l for l in range(depth + 1)]
    for tau in taus:
        _steps_for(times, tau)

    snapshots = []
    for level, (mesh, tau) in enumerate(zip(meshes, taus)):
        if progress:
            progress(f"level {level}: N={mesh.n_triangles} tau={tau:g}")
        snapshots.append(run_snapshots(mesh, replace(params, tau=tau), times))

    rows = []
    for t in times:
        prev = None
        for level in range(depth):
            e = manifold_distance(snapshots[level][t], snapshots[level + 1][t], threads=threads)
            order = math.log2(prev / e) if prev is not None and e > 0 else float("nan")
            rows.append(ConvergenceRow(level, mesh_size(meshes[level]), taus[level], t, e, order))
            prev = e
    rows.sort(key=lambda r: (r.level, r.time))
    return ConvergenceTable(rows)


@dataclass(frozen=True)
class ContactAngleRow:
    level: int
    h: float
    tau: float
    theta_bar: float
    error: float  # |theta_bar - theta_i|
    order: float


def contact_angle_study(base_mesh, params, levels, t_final, *, progress=None):
    """|theta_bar - theta_i| at ``t_final`` on ``levels`` meshes (h/2^l, tau/4^l)."""
    from .scheme import run

    if levels < 1:
        raise ValidationError("levels", "must be at least 1")
    rows = []
    mesh = base_mesh
    prev = None
    for level in range(levels):
        if level:
            mesh = refine(mesh)
        tau = params.tau / 4**level
        _steps_for([t_final], tau)
        if progress:
            progress(f"level {level}: N={mesh.n_triangles} tau={tau:g}")
        final = run(mesh, replace(params, tau=tau), t_final).final
        theta = average_contact_angle(final.mesh)
        err = abs(theta - params.theta_i)
        order = math.log2(prev / err) if prev is not None and err > 0 else float("nan")
        rows.append(ContactAngleRow(level, mesh_size(mesh), tau, theta, err, order))
        prev = err
    return rows


def contact_angle_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("level", "h", "tau", "theta_bar", "error", "order"))
    for r in rows:
        order = "" if math.isnan(r.order) else repr(r.order)
        w.writerow([r.level, repr(r.h), repr(r.tau), repr(r.theta_bar), repr(r.error), order])
    return buf.getvalue()

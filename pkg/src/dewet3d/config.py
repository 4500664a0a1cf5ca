"""JSON run configuration: parsing, validation and experiment presets.

Schema (keys not listed are rejected)::

    {
      "geometry": {"kind": "cuboid", "size": [L, W, H], "target_h": h, "refine": 0}
                | {"kind": "ring", "outer": [L, W], "inner": [l, w], "height": H,
                   "target_h": h, "refine": 0}
                | {"kind": "mesh", "path": "surface.obj", "refine": 0},
      "tau": 0.01, "theta_i": 2.0944, "t_final": 2.0,
      "eta": 100, "boundary_term": "semi_implicit" | "explicit",
      "anisotropy": {"kind": "isotropic"}
                  | {"kind": "ellipsoidal", "a": [a1, a2, a3]}
                  | {"kind": "cusped", "delta": 0.1}
                  | {"kind": "matrices", "matrices": [[[...]]]},
                    each optionally with "rotate": {"axis": "z", "angle": 0.785},
      "output_every": 100, "output_dir": "out",
      "solver": {"tol": 1e-10, "max_iter": null, "method": "auto"},
      "threads": 1,
      "convergence": {"depth": 2, "times": [0.5, 1.0, 2.0]}
    }

Angles may also be given as strings of the form "2pi/3" or "pi/2".
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import asdict, dataclass, field
from importlib import resources

from . import anisotropy as an
from .errors import AnisotropyError, IoError, ParseError, ValidationError
from .mesh import build_mesh, generate_cuboid_island, generate_ring_island, refine
from .scheme import EXPLICIT, SEMI_IMPLICIT, SchemeParams

THREADS_ENV = "DEWET3D_THREADS"
PRESET_PREFIX = "preset:"

_TOP_KEYS = {"geometry", "tau", "theta_i", "t_final", "eta", "boundary_term", "anisotropy",
             "output_every", "output_dir", "solver", "threads", "convergence", "description"}


@dataclass(frozen=True)
class GeometrySpec:
    kind: str
    size: tuple = ()
    outer: tuple = ()
    inner: tuple = ()
    height: float = 0.0
    target_h: float = 0.5
    refine: int = 0
    path: str = ""


@dataclass(frozen=True)
class AnisotropySpec:
    kind: str = "isotropic"
    a: tuple = ()
    delta: float = 0.0
    matrices: tuple = ()
    rotate_axis: str | None = None
    rotate_angle: float = 0.0


@dataclass(frozen=True)
class SolverSpec:
    tol: float = 1e-10
    max_iter: int | None = None
    method: str = "auto"


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometrySpec
    tau: float
    theta_i: float
    t_final: float
    eta: float = 100.0
    boundary_term: str = SEMI_IMPLICIT
    anisotropy: AnisotropySpec = field(default_factory=AnisotropySpec)
    output_every: int = 100
    output_dir: str = "out"
    solver: SolverSpec = field(default_factory=SolverSpec)
    threads: int = 1
    convergence_depth: int = 2
    convergence_times: tuple = (0.5, 1.0, 2.0)
    description: str = ""

    def scheme_params(self) -> SchemeParams:
        return SchemeParams(
            tau=self.tau, theta_i=self.theta_i, eta=self.eta, boundary_term=self.boundary_term,
            energy=build_anisotropy(self.anisotropy), tol=self.solver.tol,
            max_iter=self.solver.max_iter, solver=self.solver.method,
        )

    def build_mesh(self):
        return build_geometry(self.geometry)

    def to_dict(self) -> dict:
        """Resolved configuration (defaults included) in the input schema."""
        g = self.geometry
        geo = {"kind": g.kind, "refine": g.refine}
        if g.kind == "cuboid":
            geo.update(size=list(g.size), target_h=g.target_h)
        elif g.kind == "ring":
            geo.update(outer=list(g.outer), inner=list(g.inner), height=g.height,
                       target_h=g.target_h)
        else:
            geo.update(path=g.path)
        a = self.anisotropy
        aniso = {"kind": a.kind}
        if a.kind == "ellipsoidal":
            aniso["a"] = list(a.a)
        elif a.kind == "cusped":
            aniso["delta"] = a.delta
        elif a.kind == "matrices":
            aniso["matrices"] = [[list(r) for r in m] for m in a.matrices]
        if a.rotate_axis is not None:
            aniso["rotate"] = {"axis": a.rotate_axis, "angle": a.rotate_angle}
        return {
            "description": self.description,
            "geometry": geo, "tau": self.tau, "theta_i": self.theta_i, "t_final": self.t_final,
            "eta": self.eta, "boundary_term": self.boundary_term, "anisotropy": aniso,
            "output_every": self.output_every, "output_dir": self.output_dir,
            "solver": asdict(self.solver), "threads": self.threads,
            "convergence": {"depth": self.convergence_depth,
                            "times": list(self.convergence_times)},
        }


# -- value helpers ----------------------------------------------------------

_ANGLE_RE = re.compile(r"^\s*([0-9.]*)\s*\*?\s*pi\s*(?:/\s*([0-9.]+))?\s*$")


def _angle(value, name):
    if isinstance(value, str):
        m = _ANGLE_RE.match(value)
        if not m:
            raise ValidationError(name, f"cannot interpret angle {value!r}")
        num = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        return num * math.pi / den
    return _number(value, name)


def _number(value, name, *, positive=False, integer=False, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(name, f"expected a number, got {value!r}")
    if integer and not float(value).is_integer():
        raise ValidationError(name, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ValidationError(name, "must be finite")
    if positive and value <= 0:
        raise ValidationError(name, f"must be positive, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(name, f"must be at least {minimum}, got {value!r}")
    return int(value) if integer else float(value)


def _vector(value, name, n):
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise ValidationError(name, f"expected a list of {n} numbers")
    return tuple(_number(v, f"{name}[{i}]", positive=True) for i, v in enumerate(value))


def _check_keys(obj, allowed, name):
    if not isinstance(obj, dict):
        raise ValidationError(name, "expected an object")
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ValidationError(f"{name}.{extra[0]}" if name else extra[0], "unknown key")


# -- sections ---------------------------------------------------------------


def _geometry(obj, base_dir):
    if "kind" not in (obj if isinstance(obj, dict) else {}):
        raise ValidationError("geometry.kind", "missing")
    kind = obj["kind"]
    common = {"kind", "refine"}
    ref = _number(obj.get("refine", 0), "geometry.refine", integer=True, minimum=0)
    if kind == "cuboid":
        _check_keys(obj, common | {"size", "target_h"}, "geometry")
        if "size" not in obj:
            raise ValidationError("geometry.size", "missing")
        return GeometrySpec(kind, size=_vector(obj["size"], "geometry.size", 3),
                            target_h=_number(obj.get("target_h", 0.5), "geometry.target_h",
                                             positive=True), refine=ref)
    if kind == "ring":
        _check_keys(obj, common | {"outer", "inner", "height", "target_h"}, "geometry")
        for key in ("outer", "inner", "height"):
            if key not in obj:
                raise ValidationError(f"geometry.{key}", "missing")
        spec = GeometrySpec(
            kind, outer=_vector(obj["outer"], "geometry.outer", 2),
            inner=_vector(obj["inner"], "geometry.inner", 2),
            height=_number(obj["height"], "geometry.height", positive=True),
            target_h=_number(obj.get("target_h", 0.5), "geometry.target_h", positive=True),
            refine=ref,
        )
        if not all(i < o for i, o in zip(spec.inner, spec.outer)):
            raise ValidationError("geometry.inner", "inner rectangle must fit inside the outer one")
        return spec
    if kind == "mesh":
        _check_keys(obj, common | {"path"}, "geometry")
        path = obj.get("path")
        if not isinstance(path, str):
            raise ValidationError("geometry.path", "expected a file path")
        full = path if os.path.isabs(path) or base_dir is None else os.path.join(base_dir, path)
        if not os.path.exists(full):
            raise ValidationError("geometry.path", f"file not found: {full}")
        return GeometrySpec(kind, path=full, refine=ref)
    raise ValidationError("geometry.kind", f"unknown kind {kind!r}")


def _anisotropy(obj):
    if obj is None:
        return AnisotropySpec()
    _check_keys(obj, {"kind", "a", "delta", "matrices", "rotate"}, "anisotropy")
    kind = obj.get("kind", "isotropic")
    rot_axis, rot_angle = None, 0.0
    if "rotate" in obj:
        rot = obj["rotate"]
        _check_keys(rot, {"axis", "angle"}, "anisotropy.rotate")
        rot_axis = rot.get("axis", "z")
        if rot_axis not in ("x", "y", "z"):
            raise ValidationError("anisotropy.rotate.axis", f"unknown axis {rot_axis!r}")
        rot_angle = _angle(rot.get("angle", 0.0), "anisotropy.rotate.angle")
    if kind == "isotropic":
        spec = AnisotropySpec(kind)
    elif kind == "ellipsoidal":
        spec = AnisotropySpec(kind, a=_vector(obj.get("a"), "anisotropy.a", 3))
    elif kind == "cusped":
        delta = _number(obj.get("delta"), "anisotropy.delta", positive=True)
        if delta > 1:
            raise ValidationError("anisotropy.delta", "must lie in (0, 1]")
        spec = AnisotropySpec(kind, delta=delta)
    elif kind == "matrices":
        mats = obj.get("matrices")
        if not isinstance(mats, list) or not mats:
            raise ValidationError("anisotropy.matrices", "expected a non-empty list of 3x3 matrices")
        try:
            mats = tuple(tuple(tuple(float(x) for x in row) for row in m) for m in mats)
        except (TypeError, ValueError) as exc:
            raise ValidationError("anisotropy.matrices", "entries must be numbers") from exc
        spec = AnisotropySpec(kind, matrices=mats)
    else:
        raise ValidationError("anisotropy.kind", f"unknown kind {kind!r}")
    spec = AnisotropySpec(spec.kind, spec.a, spec.delta, spec.matrices, rot_axis, rot_angle)
    try:
        build_anisotropy(spec)
    except AnisotropyError as exc:
        raise ValidationError("anisotropy", str(exc)) from exc
    except ValueError as exc:
        raise ValidationError("anisotropy.matrices", str(exc)) from exc
    return spec


def build_anisotropy(spec: AnisotropySpec):
    if spec.kind == "isotropic":
        aniso = an.make_isotropic()
    elif spec.kind == "ellipsoidal":
        aniso = an.make_ellipsoidal(*spec.a)
    elif spec.kind == "cusped":
        aniso = an.make_cusped(spec.delta)
    else:
        aniso = an.Anisotropy.from_matrices(spec.matrices)
    if spec.rotate_axis is not None:
        aniso = an.make_rotated(aniso, an.rotation_matrix(spec.rotate_axis, spec.rotate_angle))
    return aniso


def build_geometry(spec: GeometrySpec):
    if spec.kind == "cuboid":
        mesh = generate_cuboid_island(*spec.size, spec.target_h)
    elif spec.kind == "ring":
        mesh = generate_ring_island(*spec.outer, *spec.inner, spec.height, spec.target_h)
    else:
        from .io import read_obj

        mesh = read_obj(spec.path)
    for _ in range(spec.refine):
        mesh = refine(mesh)
    return mesh


def config_from_dict(obj, base_dir=None) -> RunConfig:
    _check_keys(obj, _TOP_KEYS, "")
    for key in ("geometry", "tau", "theta_i", "t_final"):
        if key not in obj:
            raise ValidationError(key, "missing")
    theta = _angle(obj["theta_i"], "theta_i")
    if not 0 < theta < math.pi:
        raise ValidationError("theta_i", f"must lie in (0, pi), got {theta!r}")
    bt = obj.get("boundary_term", SEMI_IMPLICIT)
    if bt not in (SEMI_IMPLICIT, EXPLICIT):
        raise ValidationError("boundary_term", f"unknown variant {bt!r}")

    solver = obj.get("solver", {})
    _check_keys(solver, {"tol", "max_iter", "method"}, "solver")
    method = solver.get("method", "auto")
    if method not in ("auto", "direct", "gmres"):
        raise ValidationError("solver.method", f"unknown method {method!r}")
    max_iter = solver.get("max_iter")
    if max_iter is not None:
        max_iter = _number(max_iter, "solver.max_iter", integer=True, minimum=1)
    solver = SolverSpec(_number(solver.get("tol", 1e-10), "solver.tol", positive=True),
                        max_iter, method)

    conv = obj.get("convergence", {})
    _check_keys(conv, {"depth", "times"}, "convergence")
    times = conv.get("times", [0.5, 1.0, 2.0])
    if not isinstance(times, list) or not times:
        raise ValidationError("convergence.times", "expected a non-empty list")
    times = tuple(_number(t, f"convergence.times[{i}]", minimum=0) for i, t in enumerate(times))

    output_dir = obj.get("output_dir", "out")
    if not isinstance(output_dir, str):
        raise ValidationError("output_dir", "expected a path")
    description = obj.get("description", "")
    if not isinstance(description, str):
        raise ValidationError("description", "expected a string")

    return RunConfig(
        geometry=_geometry(obj["geometry"], base_dir),
        tau=_number(obj["tau"], "tau", positive=True),
        theta_i=theta,
        t_final=_number(obj["t_final"], "t_final", minimum=0),
        eta=_number(obj.get("eta", 100.0), "eta", positive=True),
        boundary_term=bt,
        anisotropy=_anisotropy(obj.get("anisotropy")),
        output_every=_number(obj.get("output_every", 100), "output_every", integer=True, minimum=1),
        output_dir=output_dir,
        solver=solver,
        threads=_number(obj.get("threads", 1), "threads", integer=True, minimum=1),
        convergence_depth=_number(conv.get("depth", 2), "convergence.depth", integer=True,
                                  minimum=1),
        convergence_times=times,
        description=description,
    )


def parse_config_text(text, base_dir=None) -> RunConfig:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
    return config_from_dict(obj, base_dir)


def preset_names() -> list:
    files = resources.files("dewet3d").joinpath("presets").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".json"))


def parse_config(source) -> RunConfig:
    """Parse a config file path, ``preset:<name>``, or a JSON document string."""
    source = os.fspath(source)
    if source.startswith(PRESET_PREFIX):
        name = source[len(PRESET_PREFIX):]
        res = resources.files("dewet3d").joinpath("presets", f"{name}.json")
        if not res.is_file():
            raise IoError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
        return parse_config_text(res.read_text(), None)
    if source.lstrip().startswith("{"):
        return parse_config_text(source)
    try:
        with open(source) as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read config {source}: {exc}") from exc
    return parse_config_text(text, os.path.dirname(os.path.abspath(source)))


def resolve_threads(config_threads) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ValidationError(THREADS_ENV, f"expected an integer, got {env!r}") from exc
        if n < 1:
            raise ValidationError(THREADS_ENV, "must be at least 1")
        return n
    return config_threads

"""Command-line entry point: ``dewet3d simulate | converge | distance | validate``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .config import parse_config, preset_names, resolve_threads
from .diagnostics import (
    CsvRecorder,
    contact_angle_csv,
    contact_angle_study,
    convergence_study,
    manifold_distance,
)
from .errors import Dewet3DError
from .geometry import wellposedness_check
from .io import read_obj, write_obj, write_vtk

logger = logging.getLogger("dewet3d")


def _write_manifest(out_dir, cfg, command, extra=None):
    os.makedirs(out_dir, exist_ok=True)
    manifest = {"command": command, "version": __version__, "config": cfg.to_dict()}
    if extra:
        manifest.update(extra)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(args):
    cfg = parse_config(args.config)
    out = args.out or cfg.output_dir
    mesh = cfg.build_mesh()
    params = cfg.scheme_params()
    t_final = cfg.t_final if args.t_final is None else args.t_final
    every = cfg.output_every if args.every is None else args.every
    _write_manifest(out, cfg, "simulate", {
        "threads": resolve_threads(cfg.threads), "n_vertices": mesh.n_vertices,
        "n_triangles": mesh.n_triangles, "t_final_run": t_final, "output_every_run": every,
    })
    from .scheme import run

    with open(os.path.join(out, "diagnostics.csv"), "w") as fh:
        recorder = CsvRecorder(fh)

        def snapshot(state, _record):
            write_vtk(state.mesh, state.potential, os.path.join(out, f"snapshot_{state.step:06d}.vtk"))

        observers = [recorder] if args.no_vtk else [recorder, snapshot]
        result = run(mesh, params, t_final, observers=observers, every=every)
    write_obj(result.final.mesh, os.path.join(out, "final.obj"))
    last = result.records[-1]
    print(f"t={last.t:.6g} steps={result.final.step} W={last.W:.12g} dV={last.dV:.3e} "
          f"theta_bar={last.theta_bar:.6f} last_max_dX={result.final.max_displacement:.3e}")
    return 0


def cmd_converge(args):
    cfg = parse_config(args.config)
    mesh = cfg.build_mesh()
    params = cfg.scheme_params()
    depth = cfg.convergence_depth if args.levels is None else args.levels
    threads = resolve_threads(cfg.threads)

    def progress(msg):
        print(msg, file=sys.stderr, flush=True)

    if args.metric == "distance":
        table = convergence_study(mesh, params, depth, cfg.convergence_times, threads=threads,
                                  progress=progress)
        text = table.to_csv()
    else:
        rows = contact_angle_study(mesh, params, depth, cfg.t_final, progress=progress)
        text = contact_angle_csv(rows)
    if args.out:
        _write_manifest(args.out, cfg, "converge", {"levels": depth, "metric": args.metric,
                                                     "threads": threads})
        with open(os.path.join(args.out, "convergence.csv"), "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_distance(args):
    a, b = read_obj(args.a), read_obj(args.b)
    threads = resolve_threads(args.threads)
    print(repr(manifold_distance(a, b, threads=threads)))
    return 0


def cmd_validate(args):
    cfg = parse_config(args.config)
    mesh = cfg.build_mesh()
    cfg.scheme_params()
    report = wellposedness_check(mesh, cfg.theta_i)
    print(f"vertices: {mesh.n_vertices}  triangles: {mesh.n_triangles}  "
          f"contact-line loops: {len(mesh.boundary_loops)}")
    print(report.summary())
    return 0 if report.ok else 3


def cmd_presets(_args):
    for name in preset_names():
        print(name)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="dewet3d", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run an experiment, writing VTK snapshots and a CSV log")
    s.add_argument("--config", required=True, help="JSON file, JSON text or preset:<name>")
    s.add_argument("--out", help="output directory (default: output_dir from the config)")
    s.add_argument("--t-final", type=float, help="override the final time")
    s.add_argument("--every", type=int, help="override the output cadence (steps)")
    s.add_argument("--no-vtk", action="store_true", help="write only the diagnostics CSV")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("converge", help="refinement study under (h, tau) -> (h/2, tau/4)")
    c.add_argument("--config", required=True)
    c.add_argument("--levels", type=int, help="number of error levels (default: from config)")
    c.add_argument("--metric", choices=("distance", "contact-angle"), default="distance",
                   help="manifold distance between levels, or |theta_bar - theta_i| at t_final")
    c.add_argument("--out", help="directory for convergence.csv and manifest.json")
    c.set_defaults(func=cmd_converge)

    d = sub.add_parser("distance", help="manifold distance between two OBJ surfaces")
    d.add_argument("a")
    d.add_argument("b")
    d.add_argument("--threads", type=int, default=1)
    d.set_defaults(func=cmd_distance)

    v = sub.add_parser("validate", help="check mesh and solvability assumptions without running")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)

    ls = sub.add_parser("presets", help="list the bundled experiment presets")
    ls.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Dewet3DError as exc:
        step = getattr(exc, "step", None)
        where = f" (step {step})" if step is not None else ""
        print(f"error: {type(exc).__name__}{where}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

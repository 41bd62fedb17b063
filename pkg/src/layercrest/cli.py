"""Command-line entry point: ``layercrest <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, parse_config
from .pipeline import (
    StageError,
    _build,
    _closure_scales,
    _setup,
    _stage,
    diff_reports,
    fmt,
    jobs_cap,
    plan,
    pmap,
    provenance,
    run_pipeline,
    write_csv,
)

EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_DIFF = 1


def parse_points(text: str):
    """``"x,y:b;x,y:i"`` -> flat coordinates and tags."""
    flat, tags = [], []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        xy, _, tag = item.partition(":")
        parts = [float(v) for v in xy.split(",")]
        if len(parts) != 2:
            raise ConfigError(f"bad point {item!r}")
        tag = (tag or "i").strip().lower()
        if tag not in ("b", "i"):
            raise ConfigError(f"point tag must be 'b' or 'i' ({item!r})")
        flat += parts
        tags.append(tag)
    if not tags:
        raise ConfigError("no points given")
    return flat, tags


def parse_schedule(text: str):
    """``"start:stop:count"`` -> geometric eps schedule."""
    try:
        a, b, n = text.split(":")
        return [float(v) for v in np.geomspace(float(a), float(b), int(n))]
    except ValueError as exc:
        raise ConfigError(f"bad continuation {text!r}; expected start:stop:count") from exc


def _load_raw(path):
    import tomli

    if path is None:
        raise ConfigError("--config is required")
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _config(args, **run_overrides):
    raw = _load_raw(args.config)
    run = dict(raw.get("run", {}))
    run.update({k: v for k, v in run_overrides.items() if v is not None})
    if args.out:
        run["output"] = args.out
    raw["run"] = run
    return parse_config(raw)


def _dry(cfg) -> int:
    print(json.dumps(cfg.raw, indent=2, sort_keys=True, default=str))
    print(f"config hash {cfg.digest}")
    for line in plan(cfg):
        print(line)
    return 0


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_green(args) -> int:
    from .greens import GreenSolver, robin, write_field_csv, write_robin_csv
    from .mesh import generate_mesh

    zeta = np.array([float(v) for v in args.zeta.split(",")])
    cfg = _config(args, eps_list=[1.0], scenario="points", points=list(zeta),
                  tags=["b" if args.boundary else "i"])
    if args.dry_run:
        return _dry(cfg)
    os.makedirs(cfg.output, exist_ok=True)
    dom, w, _ = _stage("domain", _setup, cfg)
    size = cfg.h * cfg.grading
    mesh = _stage("greens", generate_mesh, dom, cfg.h, [(zeta, size)])
    solver = GreenSolver(mesh, w)
    gf = _stage("greens", solver.solve, zeta, args.boundary or None)
    foot = provenance(cfg.digest)
    write_field_csv(gf, os.path.join(cfg.output, "green.csv"), foot)
    if args.robin:
        # sweep along the inner normal from the nearest boundary point
        t = dom.foot(zeta)
        dists = np.geomspace(0.4, 0.02, args.robin)
        pts = [dom.point(t) + r * dom.normal(t) for r in dists]
        samples = pmap(lambda p: robin(solver, p), pts, jobs_cap(args.jobs))
        write_robin_csv(samples, os.path.join(cfg.output, "robin.csv"), foot)
    print(f"wrote {cfg.output}/green.csv")
    return 0


def cmd_ansatz(args) -> int:
    from .ansatz import residual_S

    flat, tags = parse_points(args.points)
    cfg = _config(args, eps_list=[args.eps], scenario="points", points=flat, tags=tags)
    if args.dry_run:
        return _dry(cfg)
    os.makedirs(cfg.output, exist_ok=True)
    eps = cfg.eps_list[0]
    dom, w, _ = _stage("domain", _setup, cfg)
    pts, tg = [np.asarray(p) for p in cfg.point_list()], cfg.tag_list()
    d = _stage("greens", _closure_scales, cfg, dom, w, pts, tg, eps, jobs_cap(args.jobs))
    mesh, _, ans = _stage("ansatz", _build, cfg, dom, w, pts, tg, eps, d)
    _, star = _stage("ansatz", residual_S, ans)
    u = ans.u()
    write_csv(os.path.join(cfg.output, "ansatz.csv"), ["x", "y", "u"],
              [(x, y, v) for (x, y), v in zip(mesh.nodes, u)], cfg.digest)
    with open(os.path.join(cfg.output, "report.txt"), "w") as fh:
        fh.write(f"eps {fmt(eps)}\n")
        for i, (p, t, di, r, m) in enumerate(zip(ans.points, ans.tags, ans.d,
                                                ans.closure_residual(), ans.masses())):
            kind = "boundary" if t else "interior"
            fh.write(f"point {i + 1} {kind} {fmt(p[0])} {fmt(p[1])} d {fmt(di)} "
                     f"closure_residual {fmt(r)} bubble_mass {fmt(m)}\n")
        fh.write(f"star_norm {fmt(star)}\n")
        fh.write(provenance(cfg.digest) + "\n")
    print(f"star_norm {star:.6g}; wrote {cfg.output}/ansatz.csv")
    return 0


def cmd_solve(args) -> int:
    flat, tags = parse_points(args.points)
    cont = parse_schedule(args.continuation) if args.continuation else None
    cfg = _config(args, eps_list=[args.eps], scenario="points", points=flat, tags=tags,
                  continuation=cont)
    if args.dry_run:
        return _dry(cfg)
    rep = run_pipeline(cfg, jobs=args.jobs)
    row = rep.rows[-1]
    write_csv(os.path.join(cfg.output, "solution.csv"), ["x", "y", "u"],
              [(x, y, v) for (x, y), v in zip(row.nodes, row.u)], cfg.digest)
    with open(os.path.join(cfg.output, "mass.txt"), "w") as fh:
        fh.write(f"eps {fmt(row.eps)}\nmass {fmt(row.mass)}\ntarget {fmt(row.mass_target)}\n"
                 f"deviation {fmt(row.mass_deviation)}\nweighted_mass {fmt(row.weighted_mass)}\n")
        for i, m in enumerate(row.per_point):
            fh.write(f"point {i + 1} {fmt(m)}\n")
        fh.write(provenance(cfg.digest) + "\n")
    print(f"mass {row.mass / np.pi:.6g} pi (target {row.mass_target / np.pi:.6g} pi), "
          f"{row.iterations} Newton iterations")
    return 0


def _landscape_rows(cfg, dom, w, eps):
    from .landscape import EIGHT_PI, interior_landscape, normal_derivative, tangential_derivative

    if cfg.scenario == "interior":
        s0 = cfg.candidates[0]
        return interior_landscape(dom, w, s0 + np.linspace(-0.2, 0.2, 21), np.linspace(0.25, 8.0, 32))
    L = abs(np.log(eps))
    rows = []
    for s in np.linspace(0.0, 2 * np.pi, 257)[:-1]:
        a = float(w(dom.point(s)))
        rows.append((s, 0.0, EIGHT_PI * L * a, EIGHT_PI * L * float(tangential_derivative(dom, w, s)[0]),
                     float(normal_derivative(dom, w, s)[0])))
    return rows


def cmd_landscape(args) -> int:
    eps_list = [float(v) for v in args.eps_list.split(",")] if args.eps_list else None
    cfg = _config(args, eps_list=eps_list, scenario=args.scenario)
    if args.dry_run:
        return _dry(cfg)
    rep = run_pipeline(cfg, jobs=args.jobs)
    dom, w, _ = _setup(cfg)
    rows = []
    for eps in cfg.eps_list:
        rows += [(eps,) + tuple(r) for r in _landscape_rows(cfg, dom, w, eps)]
    write_csv(os.path.join(cfg.output, "landscape.csv"), ["eps", "s", "t", "F0", "gradS", "gradT"],
              rows, cfg.digest)
    for r in rep.rows:
        print(f"eps {r.eps:g}: points {np.round(np.asarray(r.points), 6).tolist()} "
              f"mass {r.mass / np.pi:.6g} pi")
    return 0


def cmd_lift(args) -> int:
    eps_list = [float(v) for v in args.eps_list.split(",")] if args.eps_list else None
    cfg = _config(args, eps_list=eps_list)
    if args.M:
        cfg.lift = {"n": len(args.M), "M": list(args.M)}
        cfg.raw.setdefault("lift", {}).update(cfg.lift)
    if not cfg.lift:
        raise ConfigError("the lift needs a [lift] section or --M")
    if args.dry_run:
        return _dry(cfg)
    rep = run_pipeline(cfg, jobs=args.jobs)
    rows = [(r.eps, r.lifted_mass, r.lifted_target, r.lifted_mass / r.lifted_target - 1.0) for r in rep.rows]
    write_csv(os.path.join(cfg.output, "lift.csv"), ["eps", "lifted_mass", "target", "deviation"],
              rows, cfg.digest)
    for r in rows:
        print(f"eps {r[0]:g}: lifted mass / target = {r[1] / r[2]:.6g}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    if args.dry_run:
        return _dry(cfg)
    rep = run_pipeline(cfg, jobs=args.jobs)
    for eps, cr in rep.critical:
        print(f"eps {eps:g}: critical points {np.round(np.asarray(cr.points), 6).tolist()}")
    for r in rep.rows:
        print(f"eps {r.eps:g}: star_norm {r.star_norm:.4g} iterations {r.iterations} "
              f"mass {r.mass / np.pi:.6g} pi (target {r.mass_target / np.pi:.6g} pi)")
    return 0


def cmd_diff(args) -> int:
    tols = {}
    for item in args.tol or []:
        k, _, v = item.partition("=")
        tols[k] = float(v)
    cmp_ = diff_reports(args.r1, args.r2, tols, args.default_tol)
    for k, v in cmp_.diffs.items():
        print(f"{k},{fmt(v)}")
    if cmp_.failures:
        print("differs: " + ",".join(cmp_.failures))
        return EXIT_DIFF
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="layercrest")
    p.add_argument("--version", action="version", version=f"layercrest {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", help="output directory (overrides run.output)")
        sp.add_argument("--jobs", type=int, default=None, help="worker cap (env LAYERCREST_JOBS)")
        sp.add_argument("--dry-run", action="store_true")
        return sp

    g = common(sub.add_parser("green", help="Green function for one point"))
    g.add_argument("--zeta", required=True, help="x,y")
    g.add_argument("--boundary", action="store_true")
    g.add_argument("--robin", type=int, default=0, metavar="N", help="also sweep N Robin samples")
    g.set_defaults(fn=cmd_green)

    a = common(sub.add_parser("ansatz", help="multi-bubble ansatz"))
    a.add_argument("--points", required=True, help='"x,y:b;x,y:i"')
    a.add_argument("--eps", type=float, required=True)
    a.set_defaults(fn=cmd_ansatz)

    s = common(sub.add_parser("solve", help="Newton correction of the ansatz"))
    s.add_argument("--points", required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--continuation", help="start:stop:count")
    s.set_defaults(fn=cmd_solve)

    ls = common(sub.add_parser("landscape", help="reduced-energy search and solve"))
    ls.add_argument("--scenario", choices=("interior", "separated", "cluster"), required=True)
    ls.add_argument("--eps-list")
    ls.set_defaults(fn=cmd_landscape)

    lf = common(sub.add_parser("lift", help="lifted mass of a power-weight run"))
    lf.add_argument("--eps-list")
    lf.add_argument("--M", type=int, nargs="+", help="multiplicities of the rotated coordinates")
    lf.set_defaults(fn=cmd_lift)

    pp = common(sub.add_parser("pipeline", help="full scenario run"))
    pp.set_defaults(fn=cmd_pipeline)

    d = sub.add_parser("diff", help="compare two report CSVs")
    d.add_argument("r1")
    d.add_argument("r2")
    d.add_argument("--tol", action="append", metavar="COLUMN=REL")
    d.add_argument("--default-tol", type=float, default=0.0)
    d.set_defaults(fn=cmd_diff)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", None) is not None:
        os.environ["LAYERCREST_JOBS"] = str(max(1, args.jobs))
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"FAILED stage={exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_STAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

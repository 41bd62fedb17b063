"""End-to-end scenario runs and report files."""
from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import RunConfig
from .geometry import LiftSpec, build_domain
from .weights import build_weight, check_positive

log = logging.getLogger(__name__)

STAGES = ("domain", "landscape", "greens", "ansatz", "reduction", "quantize", "energy")


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage
        self.cause = exc


# --------------------------------------------------------------------------
# CSV helpers
# --------------------------------------------------------------------------


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def provenance(digest: str) -> str:
    return f"# layercrest {__version__} {digest}"


def write_csv(path, header, rows, digest: str) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([fmt(v) for v in r])
        fh.write(provenance(digest) + "\n")


def read_csv(path):
    """Header and rows of a report CSV, comment lines dropped."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rd = list(csv.reader(lines))
    if not rd:
        raise ValueError(f"{path} is empty")
    return rd[0], rd[1:]


def jobs_cap(jobs: int | None = None) -> int:
    if jobs is None:
        jobs = int(os.environ.get("LAYERCREST_JOBS", "1") or 1)
    return max(1, int(jobs))


def pmap(fn, items, jobs: int = 1):
    """Ordered map; threads when ``jobs > 1`` (the sparse solves release the GIL)."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------------------
# scenario report
# --------------------------------------------------------------------------


@dataclass
class EpsRow:
    eps: float
    points: list
    tags: list
    d: list
    star_norm: float
    iterations: int
    mass: float
    mass_target: float
    mass_deviation: float
    weighted_mass: float
    F0: float
    J: float
    lifted_mass: float | None = None
    lifted_target: float | None = None
    per_point: list = field(default_factory=list)
    newton_log: list = field(default_factory=list)
    located: bool = False
    peak: tuple = (np.nan, np.nan)
    nodes: np.ndarray = field(default=None, repr=False)
    u: np.ndarray = field(default=None, repr=False)


@dataclass
class ScenarioReport:
    scenario: str
    rows: list
    critical: list
    digest: str
    config: dict

    def header(self):
        m = len(self.rows[0].points) if self.rows else 0
        cols = ["eps", "star_norm", "newton_iterations", "mass", "mass_target", "mass_deviation",
                "weighted_mass", "F0", "J", "lifted_mass", "lifted_target", "peak_x", "peak_y"]
        for i in range(m):
            cols += [f"x{i + 1}", f"y{i + 1}", f"d{i + 1}", f"mass{i + 1}"]
        return cols

    def table(self):
        out = []
        for r in self.rows:
            row = [r.eps, r.star_norm, r.iterations, r.mass, r.mass_target, r.mass_deviation,
                   r.weighted_mass, r.F0, r.J,
                   "" if r.lifted_mass is None else r.lifted_mass,
                   "" if r.lifted_target is None else r.lifted_target, r.peak[0], r.peak[1]]
            for p, d, pm in zip(r.points, r.d, r.per_point):
                row += [p[0], p[1], d, pm]
            out.append(row)
        return out


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:  # every failure is reported with its stage
        raise StageError(name, exc) from exc


def plan(cfg: RunConfig) -> list:
    stages = ["domain", "landscape" if cfg.scenario != "points" else "points"]
    if cfg.solve:
        stages += ["greens", "ansatz", "reduction:" + cfg.method,
                   "quantize" + ("+lift" if cfg.lift else ""), "energy"]
    return [f"eps={e:g}: " + " -> ".join(stages) for e in cfg.eps_list]


def _setup(cfg: RunConfig):
    dom = build_domain(cfg.domain)
    w = build_weight(cfg.weight)
    check_positive(w, dom)
    lift = LiftSpec(int(cfg.lift.get("n", 1)), tuple(cfg.lift.get("M", [2]))) if cfg.lift else None
    return dom, w, lift


def _locate(cfg, dom, w, eps, table_cache):
    from . import landscape as ls

    if cfg.scenario == "points":
        return [np.asarray(p, float) for p in cfg.point_list()], cfg.tag_list(), None
    if cfg.scenario == "separated":
        r = ls.search_boundary_separated(dom, w, cfg.candidates, eps)
        return r.points, [True] * len(r.points), r
    if cfg.scenario == "interior":
        r = ls.search_interior(dom, w, cfg.candidates[0], eps)
        return r.points, [False], r
    # cluster: one Green table per configuration, shared across eps
    if "table" not in table_cache:
        from .greens import GreenSolver
        from .mesh import generate_mesh

        t0 = cfg.candidates[0]
        grid = t0 + np.linspace(-0.9, 0.9, 37)
        mesh = generate_mesh(dom, cfg.h, [(dom.point(t), cfg.h / 8) for t in grid])
        table_cache["table"] = ls.BoundaryGreenTable(GreenSolver(mesh, w), grid)
    r = ls.search_boundary_cluster(table_cache["table"], w, cfg.candidates[0], cfg.m, eps)
    return r.points, [True] * len(r.points), r


def _closure_scales(cfg, dom, w, pts, tags, eps, jobs):
    from .ansatz import solve_closure
    from .greens import GreenSolver
    from .mesh import generate_mesh

    coarse = generate_mesh(dom, cfg.h, [(p, cfg.h / 8) for p in pts])
    s = GreenSolver(coarse, w)
    fields = pmap(lambda pt: s.solve(pt[0], boundary=bool(pt[1])), list(zip(pts, tags)), jobs)
    d, _ = solve_closure(s, pts, tags, eps, fields)
    return d


def _build(cfg, dom, w, pts, tags, eps, d):
    from .ansatz import build_ansatz
    from .greens import GreenSolver
    from .mesh import generate_mesh

    mesh = generate_mesh(dom, cfg.h, [(p, eps * di * cfg.grading) for p, di in zip(pts, d)])
    solver = GreenSolver(mesh, w)
    return mesh, solver, build_ansatz(solver, pts, tags, eps, check=False)


def _reduce(cfg, dom, w, ans, eps):
    """Return ``(u, iterations, log, mesh, ansatz, located)``."""
    from .reduction import NewtonError, locate_concentration, newton_solve_full

    if cfg.method == "projected":
        from .reduction import build_kernel_basis, solve_projected_nonlinear

        st = solve_projected_nonlinear(build_kernel_basis(ans), ans)
        # phi lives on the rescaled copy of the same mesh: nodal values carry over
        return ans.u() + st.phi, st.iterations, st.log_lines, ans.mesh, ans, False
    u0 = ans.u()
    sched = [e for e in cfg.continuation if e > eps]
    if sched:
        # the first continuation stage starts from the ansatz at its own eps
        from .ansatz import build_ansatz

        u0 = build_ansatz(ans.solver, ans.points, ans.tags, sched[0], check=False).u()
    try:
        res = newton_solve_full(ans.mesh, w, u0, eps, max_iter=cfg.max_iter,
                                continuation=sched or None)
        return res.u, res.iterations, res.log_lines, ans.mesh, ans, False
    except NewtonError as exc:
        if not cfg.locate:
            raise
        log.info("plain Newton failed (%s); locating by multipliers", exc)
    loc = locate_concentration(dom, w, ans.points, ans.tags, eps, cfg.h, cfg.grading)
    res = newton_solve_full(loc.mesh, w, loc.u, eps, max_iter=cfg.max_iter)
    lines = [f"located points {np.round(np.asarray(loc.points), 6).tolist()}"] + res.log_lines
    return res.u, res.iterations, lines, loc.mesh, loc.ansatz, True


def run_pipeline(cfg: RunConfig, outdir=None, jobs: int | None = None, write: bool = True) -> ScenarioReport:
    """Domain, landscape search, Green batch, ansatz, reduction, quantization
    and energy for every eps of the configuration."""
    from .ansatz import residual_S
    from .landscape import energy_J, quantize_and_lift, reduced_F0

    jobs = jobs_cap(jobs)
    outdir = outdir or cfg.output
    digest = cfg.digest
    if write:
        os.makedirs(outdir, exist_ok=True)
        failed = os.path.join(outdir, "FAILED")
        if os.path.exists(failed):
            os.remove(failed)
    rows, crit, cache = [], [], {}
    try:
        dom, w, lift = _stage("domain", _setup, cfg)
        for eps in cfg.eps_list:
            pts, tags, cr = _stage("landscape", _locate, cfg, dom, w, eps, cache)
            if cr is not None:
                crit.append((eps, cr))
            if not cfg.solve:
                continue
            d = _stage("greens", _closure_scales, cfg, dom, w, pts, tags, eps, jobs)
            mesh, solver, ans = _stage("ansatz", _build, cfg, dom, w, pts, tags, eps, d)
            _, star = _stage("ansatz", residual_S, ans)
            u, iters, lines, mesh, ans, located = _stage("reduction", _reduce, cfg, dom, w, ans, eps)
            q = _stage("quantize", quantize_and_lift, u, mesh, w, eps, ans.points, ans.tags, lift)
            J = _stage("energy", energy_J, mesh, w, u, eps).J_value
            F0 = _stage("energy", reduced_F0, ans.solver, ans.points, ans.tags, eps, ans.fields)
            rows.append(EpsRow(eps, [tuple(map(float, p)) for p in ans.points], list(ans.tags),
                               [float(x) for x in ans.d], star, iters, q.total_mass, q.target,
                               q.deviation, q.weighted_mass, F0, J, q.lifted_mass, q.lifted_target,
                               q.per_point, lines, located, tuple(map(float, mesh.nodes[int(np.argmax(u))])),
                               mesh.nodes, u))
    except StageError as exc:
        if write:
            _write_outputs(ScenarioReport(cfg.scenario, rows, crit, digest, cfg.raw), outdir)
            with open(os.path.join(outdir, "FAILED"), "w") as fh:
                fh.write(f"stage={exc.stage}\nerror={exc.cause}\n")
        raise
    rep = ScenarioReport(cfg.scenario, rows, crit, digest, cfg.raw)
    if write:
        _write_outputs(rep, outdir)
    return rep


def _write_outputs(rep: ScenarioReport, outdir) -> None:
    if rep.rows:
        write_csv(os.path.join(outdir, "report.csv"), rep.header(), rep.table(), rep.digest)
        qrows = []
        for r in rep.rows:
            for i, (p, t, pm) in enumerate(zip(r.points, r.tags, r.per_point)):
                tgt = 4 * np.pi if t else 8 * np.pi
                qrows.append([r.eps, i + 1, "boundary" if t else "interior", pm, tgt, pm / tgt - 1])
        write_csv(os.path.join(outdir, "quantization.csv"),
                  ["eps", "point", "kind", "mass", "target", "deviation"], qrows, rep.digest)
        with open(os.path.join(outdir, "newton.log"), "w") as fh:
            for r in rep.rows:
                fh.write(f"# eps={fmt(r.eps)}\n")
                fh.writelines(ln + "\n" for ln in r.newton_log)
    with open(os.path.join(outdir, "critical.txt"), "w") as fh:
        for eps, cr in rep.critical:
            fh.write(f"eps={fmt(eps)} scenario={cr.scenario}\n")
            for i, p in enumerate(cr.points):
                fh.write(f"  point {i + 1}: {fmt(p[0])} {fmt(p[1])} param={fmt(cr.params[i])}\n")
            if cr.t_values:
                fh.write(f"  t = {' '.join(fmt(t) for t in cr.t_values)}\n")
            fh.write(f"  certificate: {cr.certificate}\n")
        fh.write(provenance(rep.digest) + "\n")


# --------------------------------------------------------------------------
# regression diffs
# --------------------------------------------------------------------------


@dataclass
class Comparison:
    diffs: dict
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def diff_reports(path1, path2, tolerances: dict | None = None, default_tol: float = 0.0) -> Comparison:
    """Column-wise maximum relative differences of two report CSVs."""
    h1, r1 = read_csv(path1)
    h2, r2 = read_csv(path2)
    if h1 != h2 or len(r1) != len(r2):
        raise ValueError("reports have different schemas")
    tolerances = tolerances or {}
    diffs, fails = {}, []
    for k, name in enumerate(h1):
        worst = 0.0
        for a, b in zip(r1, r2):
            x, y = a[k], b[k]
            if x == y:
                continue
            try:
                fx, fy = float(x), float(y)
            except ValueError:
                worst = np.inf
                continue
            worst = max(worst, abs(fx - fy) / max(abs(fx), abs(fy), 1e-300))
        diffs[name] = worst
        if worst > tolerances.get(name, default_tol):
            fails.append(name)
    return Comparison(diffs, fails)

"""Batch front end.

Every run writes its data files plus ``manifest.json`` (version, options,
runtimes and a sha256 per file) into ``--out``. Options may come from a JSON
file given with ``--config``; flags on the command line win.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 physicality stop.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (ArgumentError, ConvergenceError, NumericalError, PhysicalityError,
                     PreconditionError)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PHYSICALITY = 0, 2, 3, 4


class ConfigError(Exception):
    pass


def _g(x) -> str:
    return format(float(x), ".17g")


# --------------------------------------------------------------------------
# output


class Writer:
    """Single funnel for every file of a run; records hashes for the manifest."""

    def __init__(self, out: Path):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "error.json").unlink(missing_ok=True)
        self.files: dict[str, str] = {}

    def _record(self, name: str) -> Path:
        return self.out / name

    def _hash(self, name: str) -> None:
        self.files[name] = hashlib.sha256((self.out / name).read_bytes()).hexdigest()

    def csv(self, name: str, header, rows) -> None:
        with open(self._record(name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        self._hash(name)

    def json(self, name: str, obj) -> None:
        self._record(name).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
        self._hash(name)

    def text(self, name: str, text: str) -> None:
        self._record(name).write_text(text)
        self._hash(name)

    def via(self, name: str, fn, *args) -> None:
        """Let a module-level writer produce ``name``, then hash it."""
        fn(*args, self._record(name))
        self._hash(name)

    def manifest(self, command: str, options: dict, runtimes: dict, status: str) -> None:
        data = {"version": __version__, "command": command, "options": options,
                "runtimes_s": runtimes, "status": status,
                "files": {k: {"sha256": v} for k, v in sorted(self.files.items())}}
        (self.out / "manifest.json").write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


PLOT_STUB = '''"""Plot the CSV files of this run (generated stub; edit freely)."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent


def load(name):
    with open(here / name) as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) if r[k] not in ("", None) else float("nan") for r in rows]
            for k in rows[0] if k not in ("object", "event", "endpoint_kind", "section", "name")}


fig, ax = plt.subplots()
{body}
ax.legend()
fig.savefig(here / "{stem}.png", dpi=150)
'''

PLOT_BODIES = {
    "simulate": 'd = load("simulate.csv")\nax.plot(d["t"], d["u"], label="u(t)")',
    "stab": 'for n in ("H", "Z", "L"):\n    d = load(n + ".csv")\n    ax.plot(d["alpha"], d["beta"], label=n)',
    "branch": 'd = load("branch.csv")\nax.plot(d["alpha"], d["period"], label="period")',
    "diagram": ('for n in ("H", "Z", "L", "F", "M"):\n    try:\n        d = load(n + ".csv")\n'
                '    except (FileNotFoundError, IndexError):\n        continue\n'
                '    ax.plot(d["alpha"], d["beta"], label=n)'),
    "cmf": 'ax.plot([], [], label="no plot for the expansion")',
    "planar": ('d = load("planar_sweep.csv")\nax.plot(d["p"], d["q"], ".", ms=2, label="sweep samples")'),
}


def write_plot_stub(writer: Writer, command: str) -> None:
    body = PLOT_BODIES[command]
    writer.text(f"plot_{command}.py", PLOT_STUB.replace("{body}", body).replace("{stem}", command))


# --------------------------------------------------------------------------
# options

COMMANDS = ("simulate", "stab", "branch", "diagram", "cmf", "planar")

# option name -> (type, default); None defaults mean "required where used"
OPTIONS = {
    "alpha": (float, None),
    "beta": (str, None),
    "b": (float, 0.0),
    "free": (str, None),
    "period_cap": (float, 500.0),
    "tol": (float, None),
    "order": (int, 5),
    "out": (str, "out"),
    "workers": (int, None),
    "seed": (int, None),
    "t_end": (float, 100.0),
    "u0": (float, 0.5),
    "history": (str, "constant"),
    "samples": (int, 2001),
    "direction": (float, 1.0),
    "max_points": (int, 400),
    "check_lemma": (bool, False),
    "folds": (bool, True),
    "b_grid": (str, None),
    "log_level": (str, "WARNING"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sddebif", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON file with option values (flags override it)")
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--beta", help="value, or comma-separated values for several branches")
    ap.add_argument("--b", type=float)
    ap.add_argument("--free", choices=("alpha", "beta"))
    ap.add_argument("--period-cap", type=float)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--order", type=int)
    ap.add_argument("--out")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--t-end", type=float)
    ap.add_argument("--u0", type=float, help="constant history value")
    ap.add_argument("--history", choices=("constant", "random"))
    ap.add_argument("--samples", type=int)
    ap.add_argument("--direction", type=float)
    ap.add_argument("--max-points", type=int)
    ap.add_argument("--check-lemma", action="store_const", const=True)
    ap.add_argument("--no-folds", dest="folds", action="store_const", const=False)
    ap.add_argument("--b-grid", help="start:stop:step for the planar sweep")
    ap.add_argument("--log-level")
    return ap


def resolve_options(ns: argparse.Namespace) -> dict:
    """Merge defaults, the config file and flags (in that order of precedence, lowest first)."""
    opts = {k: d for k, (_, d) in OPTIONS.items()}
    if ns.config:
        try:
            cfg = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {ns.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(cfg) - set(OPTIONS) - {"command"})
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "command" in cfg and cfg["command"] != ns.command:
            raise ConfigError(f"config is for command {cfg['command']!r}, not {ns.command!r}")
        for k, v in cfg.items():
            if k == "command" or v is None:
                continue
            typ = OPTIONS[k][0]
            try:
                opts[k] = typ(v) if typ is not bool else bool(v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {k}: {v!r}") from exc
    for k in OPTIONS:
        v = getattr(ns, k, None)
        if v is not None:
            opts[k] = v
    if opts["workers"] is None:
        opts["workers"] = os.cpu_count() or 1
    if opts["workers"] < 1:
        raise ConfigError("workers must be positive")
    if opts["free"] not in (None, "alpha", "beta"):
        raise ConfigError("free must be 'alpha' or 'beta'")
    return opts


def _betas(opts) -> list[float]:
    if opts["beta"] is None:
        return []
    try:
        return [float(x) for x in str(opts["beta"]).split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad beta list {opts['beta']!r}") from exc


def _need(opts, *names):
    missing = [n for n in names if opts[n] is None]
    if missing:
        raise ConfigError("missing option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


# --------------------------------------------------------------------------
# commands


def cmd_simulate(opts, w: Writer) -> int:
    from .core import HistorySegment, Params, default_tau_max
    from .simulate import IntegratorOptions, integrate

    _need(opts, "alpha", "beta")
    betas = _betas(opts)
    if len(betas) != 1:
        raise ConfigError("simulate takes a single beta")
    p = Params(opts["alpha"], betas[0], opts["b"])
    u0 = opts["u0"]
    if opts["history"] == "random":
        rng = np.random.default_rng(opts["seed"])
        amp = 0.1 * rng.uniform(-1.0, 1.0, 3)
        phase = rng.uniform(0.0, 2 * math.pi, 3)
        tau = default_tau_max(p.b, abs(u0) + 0.3)

        def hist(s):
            k = np.arange(1, 4)
            return u0 + np.sum(amp * np.sin(np.multiply.outer(s, k) + phase), axis=-1)

        history = HistorySegment.from_callable(hist, tau)
    else:
        history = HistorySegment.constant(u0, b=p.b)
    tol = opts["tol"] or 1e-8
    tr = integrate(p, history, IntegratorOptions(rel_tol=tol, abs_tol=tol * 1e-2, t_end=opts["t_end"]))
    t = np.linspace(tr.t0, tr.t1, opts["samples"])
    w.csv("simulate.csv", ("t", "u"), ((_g(a), _g(b)) for a, b in zip(t, tr(t))))
    w.json("events.json", {"events": [{"t": te, "kind": k} for te, k in tr.events],
                           "t_end_reached": tr.t1, "steps": tr.n_steps, "rejected": tr.n_rejected})
    return EXIT_PHYSICALITY if any(k == "DELAY_ZERO" for _, k in tr.events) else EXIT_OK


def _analytic_curves(w: Writer, b: float) -> None:
    from .core import hopf_point, locus_L, straightline_slope

    theta = np.linspace(1e-3, math.pi - 0.05, 400)
    w.csv("H.csv", ("theta", "alpha", "beta"), ((_g(t), *map(_g, hopf_point(t))) for t in theta))
    alpha = np.linspace(-3.0, 1.0, 401)
    w.csv("Z.csv", ("alpha", "beta"), ((_g(a), _g(-a)) for a in alpha))
    # slanted segment of straight-line orbits, then the half-line alpha = 0 below it
    rows = [(_g(a), _g(locus_L(a, b)), _g(straightline_slope(a, b)), "segment")
            for a in np.linspace(0.0, 1.0, 201)]
    top = locus_L(0.0, b)
    rows += [("0", _g(bt), "", "half_line") for bt in np.linspace(top, -3.0, 101)[1:]]
    w.csv("L.csv", ("alpha", "beta", "k_star", "section"), rows)


def cmd_stab(opts, w: Writer) -> int:
    from .core import Params
    from .linstab import rightmost_roots

    _analytic_curves(w, opts["b"])
    if opts["alpha"] is not None:
        betas = _betas(opts)
        for beta in betas:
            roots = rightmost_roots(Params(opts["alpha"], beta, opts["b"]), 6)
            w.csv(f"roots_beta{beta:g}.csv", ("re", "im", "multiplicity"),
                  ((_g(r.real), _g(r.imag), r.multiplicity) for r in roots))
        scan = []
        for beta in np.linspace(-3.0, 0.0, 61):
            r = rightmost_roots(Params(opts["alpha"], beta, opts["b"]), 2)
            scan.append((_g(beta), _g(max(x.real for x in r))))
        w.csv("scan.csv", ("beta", "max_real"), scan)
    return EXIT_OK


def _branch_jobs(opts):
    from .continuation import ContinuationOptions, start_from_hopf
    from .linstab import hopf_theta_at, hopf_theta_at_beta

    _need(opts, "free")
    copts = ContinuationOptions(period_cap=opts["period_cap"], max_points=opts["max_points"])
    if opts["tol"]:
        copts.newton_tol = opts["tol"]
    jobs = []
    if opts["free"] == "alpha":
        betas = _betas(opts)
        if not betas:
            raise ConfigError("branch with free alpha needs --beta")
        for beta in betas:
            st = start_from_hopf(hopf_theta_at_beta(beta), "alpha", opts["b"])
            jobs.append(("branch", (st, "alpha", opts["direction"], copts), {}))
    else:
        _need(opts, "alpha")
        st = start_from_hopf(hopf_theta_at(opts["alpha"]), "beta", opts["b"])
        jobs.append(("branch", (st, "beta", opts["direction"], copts), {}))
    return jobs


def cmd_branch(opts, w: Writer) -> int:
    from .continuation import run_branches, scaling_diagnostics, write_branch_csv

    branches = run_branches(_branch_jobs(opts), opts["workers"])
    summary = []
    for i, br in enumerate(branches):
        name = "branch.csv" if len(branches) == 1 else f"branch_{i}.csv"
        w.via(name, write_branch_csv, br)
        entry = {"file": name, "status": br.status, "points": len(br.points),
                 "events": [{"kind": e.kind, "interval": list(e.interval), "alpha": e.params.alpha,
                             "beta": e.params.beta, "residual": e.residual} for e in br.events]}
        if len(br.points) >= 10:
            d = scaling_diagnostics(br)
            entry["scaling"] = {k: v for k, v in d.items() if not isinstance(v, np.ndarray)}
        summary.append(entry)
    w.json("branch_summary.json", _jsonable(summary))
    return EXIT_OK


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _joined(curves):
    """Backward curve reversed, then the forward one (sharing the start point)."""
    from .continuation import Curve

    back, fwd = curves
    out = Curve(fwd.kind, fwd.free)
    out.points = list(reversed(back.points)) + fwd.points[1:]
    out.endpoints = back.endpoints + fwd.endpoints
    out.cusps = back.cusps + fwd.cusps
    out.status = f"{back.status}|{fwd.status}"
    return out


def _gh_points(b: float) -> list:
    from .continuation import criticality_indicator, locate_GH

    grid = np.linspace(0.15, 2.8, 14)
    signs = []
    for th in grid:
        try:
            c = criticality_indicator(float(th), b)
            signs.append(math.copysign(1.0, c["c2"]) if c["accepted"] else 0.0)
        except (ConvergenceError, NumericalError, PhysicalityError):
            signs.append(0.0)
    out = []
    for k in range(len(grid) - 1):
        if signs[k] and signs[k + 1] and signs[k] != signs[k + 1]:
            out.append(locate_GH(b, (grid[k], grid[k + 1])))
    return out


def cmd_diagram(opts, w: Writer) -> int:
    from .continuation import (ContinuationOptions, continue_fold, continue_M, continue_po,
                               start_from_hopf, write_curve_csv)
    from .linstab import hopf_theta_at, hopf_theta_at_beta

    b = opts["b"]
    _analytic_curves(w, b)
    points = [("DZ", 1.0, -1.0)]
    copts = ContinuationOptions(period_cap=opts["period_cap"], max_points=opts["max_points"])
    gh = _gh_points(b)
    points += [("GH", a, bt) for a, bt in gh]

    # F from the first fold of a branch on the subcritical side of the first GH
    if gh:
        a_gh, b_gh = gh[0]
        beta_f = b_gh + 0.15 * (-1.0 - b_gh)
        br = continue_po(start_from_hopf(hopf_theta_at_beta(beta_f), "alpha", b), "alpha", 1.0, copts)
        folds = [e for e in br.events_of("FOLD") if e.orbit is not None]
        if folds:
            curves = [continue_fold(folds[0].orbit, direction=d, opts=copts) for d in (-1.0, 1.0)]
            F = _joined(curves)
            w.via("F.csv", write_curve_csv, F)
            for kind, p in F.endpoints:
                if kind == "MF":
                    points.append(("MF", p.alpha, p.beta))
            points += [("CP", p.alpha, p.beta) for p in F.cusps]
        else:
            log.warning("no fold found on the branch at beta=%g", beta_f)

    # M from an orbit with minimum -1; where none is reached, branch ends at the period cap
    m_rows = []
    starts = [("alpha", -2.0), ("beta", 0.4)]
    for free, fixed in starts:
        theta = hopf_theta_at_beta(fixed) if free == "alpha" else hopf_theta_at(fixed)
        br = continue_po(start_from_hopf(theta, free, b), free, 1.0, copts)
        hits = br.events_of("M_HIT")
        if hits and hits[-1].orbit is not None:
            curves = [continue_M(hits[-1].orbit, direction=d, opts=copts) for d in (-1.0, 1.0)]
            w.via("M.csv", write_curve_csv, _joined(curves))
            m_rows = []
            break
        last = br.points[-1]
        m_rows.append((_g(last.params.alpha), _g(last.params.beta), _g(b), _g(last.period),
                       _g(last.metrics["min_u"]), br.status))
    if m_rows:
        w.csv("M.csv", ("alpha", "beta", "b", "period", "min_u", "endpoint_kind"), m_rows)
    w.csv("points.csv", ("name", "alpha", "beta", "b"), ((n, _g(a), _g(bt), _g(b)) for n, a, bt in points))
    return EXIT_OK


def cmd_cmf(opts, w: Writer) -> int:
    from .cmf import emit_planar_vf, expand, second_order_check

    order = opts["order"]
    if not 1 <= order <= 7:
        raise ConfigError("order must lie in 1..7")
    exp = expand(max(order, 2))
    vf = emit_planar_vf(exp, order)
    w.text("planar_vf.json", json.dumps(vf.to_dict(), indent=1, sort_keys=True) + "\n")
    w.text("planar_vf.txt", vf.pretty() + "\n")
    if opts["check_lemma"]:
        rows = second_order_check(emit_planar_vf(exp, 2))
        report = [{"monomial": "y^{}*v^{}*p^{}*q^{}".format(*r["monomial"]), "expected": r["expected"],
                   "computed": r["computed"], "match": r["match"]} for r in rows]
        w.json("lemma_check.json", {"exact_match": all(r["match"] for r in rows), "terms": report})
        for r in report:
            print(f"{r['monomial']:>16}  expected {r['expected']:<28} computed {r['computed']:<28} "
                  f"{'ok' if r['match'] else 'MISMATCH'}")
        if not all(r["match"] for r in rows):
            print("second-order check FAILED")
            return EXIT_NUMERICAL
        print("second-order check: exact match")
    return EXIT_OK


def cmd_planar(opts, w: Writer) -> int:
    from .cmf import emit_planar_vf, expand
    from .planar import extrapolate_gh, planar_bifurcation_sweep, write_sweep_csv

    if opts["order"] < 5:
        raise ConfigError("the planar sweep needs --order 5 or higher")
    vf = emit_planar_vf(expand(opts["order"]))
    if opts["b_grid"]:
        try:
            lo, hi, step = (float(x) for x in opts["b_grid"].split(":"))
        except ValueError as exc:
            raise ConfigError("b-grid must be start:stop:step") from exc
        b_grid = np.round(np.arange(lo, hi + 0.5 * step, step), 10)
    elif opts["b"] and opts["b"] > 0:
        b_grid = [opts["b"]]
    else:
        b_grid = None
    res = planar_bifurcation_sweep(vf, b_grid, folds=opts["folds"], workers=opts["workers"])
    w.via("planar_sweep.csv", write_sweep_csv, res)
    summary = {k: len(v) for k, v in res.items()}
    try:
        summary["gh_b_at_p0"] = extrapolate_gh(res["GH"])
    except PreconditionError as exc:
        summary["gh_b_at_p0"] = None
        summary["gh_note"] = str(exc)
    w.json("planar_summary.json", summary)
    return EXIT_OK


HANDLERS = {"simulate": cmd_simulate, "stab": cmd_stab, "branch": cmd_branch,
            "diagram": cmd_diagram, "cmf": cmd_cmf, "planar": cmd_planar}


def _error_record(out: Path | None, code: int, exc: BaseException) -> int:
    rec = {"exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(rec, indent=1, sort_keys=True) + "\n")
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    out = Path(ns.out) if ns.out else None
    try:
        opts = resolve_options(ns)
        out = Path(opts["out"])
        logging.basicConfig(level=getattr(logging, str(opts["log_level"]).upper(), logging.WARNING))
        w = Writer(out)
        t0 = time.perf_counter()
        code = HANDLERS[ns.command](opts, w)
        runtimes = {"total": time.perf_counter() - t0}
        write_plot_stub(w, ns.command)
        w.manifest(ns.command, opts, runtimes, "ok" if code == EXIT_OK else f"exit {code}")
        return code
    except (ConfigError, ArgumentError, PreconditionError) as exc:
        return _error_record(out, EXIT_CONFIG, exc)
    except PhysicalityError as exc:
        return _error_record(out, EXIT_PHYSICALITY, exc)
    except (ConvergenceError, NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _error_record(out, EXIT_NUMERICAL, exc)


if __name__ == "__main__":
    sys.exit(main())

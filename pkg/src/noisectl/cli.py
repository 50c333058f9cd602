"""Command-line interface.

Exit codes: 0 success, 1 an asserted property failed, 2 validation or
infeasibility, 64 usage, 70 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import CoverageError, DomainError, NumericError, ValidationError, InfeasibleError

EXIT_OK = 0
EXIT_ASSERT = 1
EXIT_VALIDATION = 2
EXIT_USAGE = 64
EXIT_NUMERIC = 70

OUTPUT_DIR_ENV = "NOISECTL_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- helpers


def _read_doc(path, name):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}", name) from None
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ImportError:  # Python < 3.11
            import tomli as tomllib
        try:
            return tomllib.loads(raw.decode("utf-8"))
        except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
            raise ValidationError(f"invalid TOML: {exc}", name) from None
    try:
        return json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ValidationError(f"invalid JSON: {exc}", name) from None


def _load_schedule(path):
    from .schedules import schedule_from_json
    return schedule_from_json(_read_doc(path, "schedule"))


def _load_target(path):
    from .targets import target_from_json
    return target_from_json(_read_doc(path, "target"))


def _json_safe(v):
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, np.ndarray):
        return _json_safe(v.tolist())
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _dump_json(doc, out):
    out.write(json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _emit_rows(rows, columns, fmt, out, extra=None):
    """Write ``rows`` (list of dicts) as JSON, CSV or an aligned table."""
    if fmt == "json":
        doc = dict(extra or {})
        doc["rows"] = rows
        _dump_json(doc, out)
    elif fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
        out.write(buf.getvalue())
    else:
        cells = [[str(c) for c in columns]]
        for r in rows:
            cells.append([("%.6g" % r[c]) if isinstance(r.get(c), float) else _fmt(r.get(c)) for c in columns])
        widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
        for row in cells:
            out.write("  ".join(s.rjust(wd) for s, wd in zip(row, widths)) + "\n")


def _out_dir(arg):
    return arg or os.environ.get(OUTPUT_DIR_ENV) or "."


def _schedule_rows(schedule, m):
    if m < 2:
        raise ValidationError("need at least 2 grid points", "grid")
    rows = []
    for t in np.linspace(0.0, schedule.T, m):
        t = float(t)
        mc = schedule.marginal(t)
        snr = float(schedule.snr(t))
        rows.append({"t": t, "f": float(schedule.f(t)), "g": float(schedule.g(t)), "alpha": mc.alpha,
                     "sigma2": mc.sigma2, "snr": snr if math.isfinite(snr) else None})
    return rows


SCHEDULE_COLUMNS = ["t", "f", "g", "alpha", "sigma2", "snr"]


# ---------------------------------------------------------------- commands


def cmd_schedule_show(args, out):
    sched = _load_schedule(args.config)
    doc = {"schedule": sched.to_dict()} if sched.kind else {}
    _emit_rows(_schedule_rows(sched, args.grid), SCHEDULE_COLUMNS, args.format, out, doc)
    return EXIT_OK


def cmd_schedule_acs(args, out):
    from .control import adaptive_params
    rho = args.omega_frac
    hp = adaptive_params(args.K, args.gamma, args.theta, rho, args.n, args.T)
    sched = hp.schedule()
    doc = {"hparams": hp.to_dict(), "rho": rho, "schedule": sched.to_dict()}
    _emit_rows(_schedule_rows(sched, args.grid), SCHEDULE_COLUMNS, args.format, out, doc)
    return EXIT_OK


def cmd_lambda(args, out):
    from .control import lambda_adaptive
    if not (args.K > 0 and math.isfinite(args.K)):
        raise UsageError("lambda: --K must be positive")
    if args.n < 1:
        raise UsageError("lambda: --n must be a positive integer")
    if not (args.T > 0 and math.isfinite(args.T)):
        raise UsageError("lambda: --T must be positive")
    sol = lambda_adaptive(args.K, args.n, args.T)
    row = {"lambda": sol.lam, "E": sol.energy, "z": sol.z, "K": args.K, "n": args.n, "T": args.T}
    if args.format == "json":
        _dump_json(row, out)
    else:
        _emit_rows([row], list(row), args.format, out)
    return EXIT_OK


def cmd_simulate(args, out):
    from .sampler import SamplerConfig, propagate_gaussian, sample_paths, write_samples_binary, write_samples_csv
    from .targets import GaussianTarget
    sched = _load_schedule(args.schedule)
    target = _load_target(args.target)
    gaussian = isinstance(target, GaussianTarget)
    if args.exact_law and not gaussian:
        raise ValidationError("the exact terminal law is available only for Gaussian targets", "exact-law")
    cfg = SamplerConfig(args.n, sched, target, paths=args.paths, seed=args.seed, delta=args.delta,
                        jobs=args.jobs)
    x = sample_paths(cfg)
    law = propagate_gaussian(cfg) if gaussian else None
    outdir = _out_dir(args.out)
    os.makedirs(outdir, exist_ok=True)
    written = []
    if args.sample_format == "binary":
        path = os.path.join(outdir, "samples.bin")
        write_samples_binary(path, x)
    else:
        path = os.path.join(outdir, "samples.csv")
        write_samples_csv(path, x)
    written.append(path)
    if law is not None:
        path = os.path.join(outdir, "exact_law.json")
        with open(path, "w") as fh:
            _dump_json(law.to_dict(), fh)
        written.append(path)
    summary = {"paths": int(x.shape[0]), "d": int(x.shape[1]), "seed": args.seed, "n": args.n,
               "files": written, "sample_mean": x.mean(axis=0).tolist()}
    if args.format == "json":
        _dump_json(summary, out)
    else:
        for p in written:
            out.write(p + "\n")
    return EXIT_OK


def cmd_experiment(args, out):
    from .evaluation import _csv_text, _json_text, load_spec, run_experiment
    spec = load_spec(args.spec)
    result = run_experiment(spec, jobs=args.jobs)
    outdir = _out_dir(args.out if args.out else spec.output)
    os.makedirs(outdir, exist_ok=True)
    base = os.path.join(outdir, spec.kind)
    # Render fully before touching the filesystem so a failure leaves no partial files.
    csv_text = _csv_text(result)
    meta = result.to_dict()
    meta["timing"] = result.timing
    meta_text = json.dumps(_json_safe(meta), indent=2, sort_keys=True) + "\n"
    with open(base + ".csv", "w", newline="\n") as fh:
        fh.write(csv_text)
    with open(base + ".json", "w", newline="\n") as fh:
        fh.write(meta_text)
    if args.format == "json":
        out.write(_json_text(result))
    else:
        for a in result.assertions:
            out.write(f"{'PASS' if a['passed'] else 'FAIL'} {a['name']}\n")
        out.write(f"wrote {base}.csv and {base}.json\n")
    return EXIT_OK if result.passed else EXIT_ASSERT


def cmd_bounds(args, out):
    from .control import fisher_ode_solve, girsanov_bound_gaussian, kl_upper_bound, legacy_bounds
    if args.bound == "legacy":
        params = _read_doc(args.params, "params") if args.params else {}
        val = legacy_bounds(args.kind, params, args.J_star, args.d, args.kappa, args.T, args.h)
        doc = {"bound_name": f"legacy-{args.kind}", "total": val, "constants_policy": "unit",
               "metadata": {"note": "up to absolute constants"}}
        _dump_json(doc, out) if args.format == "json" else _emit_rows([doc], ["bound_name", "total"], args.format, out)
        return EXIT_OK
    sched = _load_schedule(args.schedule)
    target = _load_target(args.target)
    if args.bound == "girsanov":
        rep = girsanov_bound_gaussian(sched, target, args.n)
    else:
        grid = np.linspace(0.0, sched.T, args.grid)
        traj = fisher_ode_solve(sched, target, grid)
        rep = kl_upper_bound(sched, traj, args.n, target.d, target.second_moment())
    if args.format == "json":
        _dump_json(rep.to_dict(), out)
    else:
        row = dict(rep.terms, total=rep.total)
        _emit_rows([row], list(row), args.format, out)
    return EXIT_OK


def cmd_check(args, out):
    from .targets import inequality_suite
    sched = _load_schedule(args.schedule)
    target = _load_target(args.target)
    grid = np.linspace(0.0, sched.T, args.grid)
    kw = {"method": args.moments} if args.moments else {}
    rep = inequality_suite(target, sched, grid, **kw)
    if args.format == "json":
        _dump_json(rep.to_dict(), out)
    else:
        rows = [c.to_dict() for c in rep.checks]
        _emit_rows(rows, ["name", "t", "lhs", "rhs", "margin", "status"], args.format, out)
    return EXIT_OK if rep.passed else EXIT_ASSERT


# ---------------------------------------------------------------- parser


def build_parser():
    def fmt_parent(default="json"):
        parent = _Parser(add_help=False)
        parent.add_argument("--format", choices=["json", "csv", "table"], default=default)
        return parent

    fmt = fmt_parent()

    p = _Parser(prog="noisectl", description="Noise-schedule design and evaluation for diffusion samplers.")
    p.add_argument("--version", action="store_true", help="print the version and output format, then exit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    sp = sub.add_parser("schedule", help="inspect or build schedules")
    ssub = sp.add_subparsers(dest="action", required=True, parser_class=_Parser)
    show = ssub.add_parser("show", parents=[fmt], help="tabulate a schedule document")
    show.add_argument("--config", required=True)
    show.add_argument("--grid", type=int, default=11)
    show.set_defaults(func=cmd_schedule_show)
    acs = ssub.add_parser("acs", parents=[fmt], help="budget-adaptive affine-coupled schedule")
    acs.add_argument("--theta", type=float, required=True)
    acs.add_argument("--omega-frac", "--rho", dest="omega_frac", type=float, default=0.0)
    acs.add_argument("--gamma", type=float, required=True)
    acs.add_argument("--K", type=float, required=True)
    acs.add_argument("--n", type=int, required=True)
    acs.add_argument("--T", type=float, default=1.0)
    acs.add_argument("--grid", type=int, default=11)
    acs.set_defaults(func=cmd_schedule_acs)

    lp = sub.add_parser("lambda", parents=[fmt], help="budget-dependent optimal rate")
    lp.add_argument("--K", type=float, required=True)
    lp.add_argument("--n", type=int, required=True)
    lp.add_argument("--T", type=float, default=1.0)
    lp.set_defaults(func=cmd_lambda)

    sim = sub.add_parser("simulate", parents=[fmt], help="run the exponential-integrator sampler")
    sim.add_argument("--schedule", required=True)
    sim.add_argument("--target", required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--paths", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--delta", type=float, default=0.0)
    sim.add_argument("--out")
    sim.add_argument("--sample-format", choices=["csv", "binary"], default="binary")
    sim.add_argument("--exact-law", action="store_true", help="require the exact Gaussian terminal law")
    sim.add_argument("--jobs", type=int, default=1)
    sim.set_defaults(func=cmd_simulate)

    ex = sub.add_parser("experiment", parents=[fmt_parent("table")], help="run a declarative experiment spec")
    ex.add_argument("--spec", required=True)
    ex.add_argument("--out")
    ex.add_argument("--jobs", type=int, default=1)
    ex.set_defaults(func=cmd_experiment)

    bp = sub.add_parser("bounds", help="evaluate sampling-error bounds")
    bsub = bp.add_subparsers(dest="bound", required=True, parser_class=_Parser)
    for name in ("girsanov", "thm1"):
        b = bsub.add_parser(name, parents=[fmt])
        b.add_argument("--schedule", required=True)
        b.add_argument("--target", required=True)
        b.add_argument("--n", type=int, required=True)
        if name == "thm1":
            b.add_argument("--grid", type=int, default=4001)
        b.set_defaults(func=cmd_bounds)
    lg = bsub.add_parser("legacy", parents=[fmt])
    lg.add_argument("--kind", choices=["vp-constant", "vp-linear"], required=True)
    lg.add_argument("--params", help="JSON/TOML file with g_const or g_min/g_max")
    lg.add_argument("--J-star", dest="J_star", type=float, required=True)
    lg.add_argument("--d", type=int, required=True)
    lg.add_argument("--kappa", type=float, required=True)
    lg.add_argument("--T", type=float, default=1.0)
    lg.add_argument("--h", type=float, required=True)
    lg.set_defaults(func=cmd_bounds)

    ck = sub.add_parser("check", parents=[fmt_parent("table")], help="run the Fisher-information inequality suite")
    ck.add_argument("--schedule", required=True)
    ck.add_argument("--target", required=True)
    ck.add_argument("--grid", type=int, default=50)
    ck.add_argument("--moments", choices=["quadrature", "monte-carlo"])
    ck.set_defaults(func=cmd_check)
    return p


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.version:
            out.write(f"noisectl {__version__} (format 1)\n")
            return EXIT_OK
        if args.command is None:
            raise UsageError("noisectl: a command is required")
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        return args.func(args, out)
    except UsageError as exc:
        err.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except InfeasibleError as exc:
        err.write(f"error: {exc}\n")
        for name, detail in exc.violations:
            err.write(f"  {name}: {detail}\n")
        return EXIT_VALIDATION
    except (ValidationError, DomainError, CoverageError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    except NumericError as exc:
        err.write(f"numeric failure: {exc}\n")
        return EXIT_NUMERIC
    except OSError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

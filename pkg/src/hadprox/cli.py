"""
Command-line entry point.

Commands
--------
run                 run the proximal method from a JSON config, write CSV/JSON/JSONL
verify-geometry     chart invariant suite on seeded samples
verify-enlargement  ball-element evidence and enlargement algebra
report              recompute monitors from the files written by ``run``

Exit codes
----------
0  success
1  malformed config, usage error, missing or empty trace
2  inner solver failure
3  eps budget exhausted
4  chart invariant violation
5  a verification or monitor check failed
6  max_outer reached without convergence
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .config import TOL
from .fields import FieldError
from .geometry import Chart, GeometryError, InvariantViolation, format_real, point_from_record, point_to_record
from .problems import get_benchmark, problem_from_descriptor
from .solver import (
    POLICIES,
    BudgetExhausted,
    InnerSolverError,
    ProxTrace,
    Schedule,
    SolverError,
    StopRule,
    fejer_slacks,
    quasi_fejer_check,
    run_ippa,
    step_vanishing_slack,
)
from .verify import ACCEPTANCE_CHARTS, DEFAULT_EPS_GRID, verify_algebra, verify_enlargement, verify_geometry

log = logging.getLogger("hadprox")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INNER = 2
EXIT_BUDGET = 3
EXIT_INVARIANT = 4
EXIT_CHECK = 5
EXIT_NOT_CONVERGED = 6

CSV_HEADER = (
    "k",
    "lambda",
    "eps_certified",
    "residual",
    "inner_iters",
    "dist_to_ref",
    "slack_main",
    "slack_fejer",
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Parsed ``run`` configuration; see ``configs/`` for examples."""

    benchmark: str | None = None
    problem: dict | None = None
    schedule: dict = field(default_factory=dict)
    stop: dict = field(default_factory=dict)
    policy: str = "residual_ball"
    R: float | None = None
    max_inner: int = 10_000
    out: str = "trace.csv"
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        if (cfg.benchmark is None) == (cfg.problem is None):
            raise ConfigError("give exactly one of 'benchmark' or 'problem'")
        if cfg.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}")
        if not isinstance(cfg.seed, int) or cfg.seed < 0:
            raise ConfigError("seed must be an unsigned integer")
        if cfg.R is not None and not cfg.R > 0:
            raise ConfigError("R must be positive")
        if not isinstance(cfg.max_inner, int) or cfg.max_inner < 1:
            raise ConfigError("max_inner must be a positive integer")
        cfg.build_schedule()
        cfg.build_stop()
        return cfg

    def build_schedule(self) -> Schedule:
        try:
            return Schedule(**self.schedule)
        except TypeError as exc:
            raise ConfigError(f"bad schedule: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"bad schedule: {exc}") from None

    def build_stop(self) -> StopRule:
        try:
            stop = StopRule(**self.stop)
        except TypeError as exc:
            raise ConfigError(f"bad stop rule: {exc}") from None
        if stop.max_outer < 1 or stop.dist_tol < 0 or stop.residual_tol < 0:
            raise ConfigError("stop rule values out of range")
        return stop

    def build_problem(self):
        if self.benchmark is not None:
            try:
                return get_benchmark(self.benchmark).instance
            except KeyError as exc:
                raise ConfigError(str(exc.args[0])) from None
        try:
            return problem_from_descriptor(self.problem)
        except (FieldError, GeometryError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad problem descriptor: {exc}") from None

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return RunConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# trace files


def _fmt(x) -> str:
    return "" if x is None else format_real(x)


def trace_csv(trace: ProxTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in trace.steps:
        c = s.certificate
        w.writerow(
            [
                s.k,
                _fmt(s.lam),
                _fmt(c.eps_claimed),
                _fmt(c.residual_norm),
                s.inner_iters,
                _fmt(s.dist_to_ref),
                _fmt(s.slack_main),
                _fmt(s.slack_fejer),
            ]
        )
    return buf.getvalue()


def output_paths(out: str | Path) -> tuple[Path, Path, Path]:
    out = Path(out)
    stem = out.with_suffix("")
    return out, Path(f"{stem}.summary.json"), Path(f"{stem}.iterates.jsonl")


def write_trace(trace: ProxTrace, cfg: RunConfig, problem, out: str | Path) -> None:
    csv_path, summary_path, iter_path = output_paths(out)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(trace_csv(trace), encoding="utf-8")
    summary = {
        "summary": trace.summary(),
        "config": cfg.to_dict(),
        "problem": problem.descriptor,
        "R": trace.R,
        "lambda_lo": trace.lambda_lo,
    }
    summary_path.write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    with iter_path.open("w", encoding="utf-8") as fh:
        for k, p in enumerate(trace.points):
            rec = {"k": k, "point": point_to_record(p)}
            if k < len(trace.steps):
                s = trace.steps[k]
                rec.update({"lambda": s.lam, "eps_certified": s.certificate.eps_claimed})
            fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.out = args.out
        problem = cfg.build_problem()
        schedule = cfg.build_schedule()
        stop = cfg.build_stop()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        trace = run_ippa(problem, schedule, stop, cfg.policy, cfg.R, cfg.max_inner)
    except BudgetExhausted as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except InnerSolverError as exc:
        print(f"inner solver failed at outer step {exc.outer}: {exc}", file=sys.stderr)
        return EXIT_INNER
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    write_trace(trace, cfg, problem, cfg.out)
    s = trace.summary()
    print(
        f"{problem.name or 'problem'}: iterations={s['iterations']} reason={s['reason']} "
        f"final_residual={s['final_residual']:.3e} final_dist={_fmt(s['final_dist']) or 'n/a'} "
        f"budget_used={s['budget_used']:.3e}"
    )
    print(f"wrote {cfg.out}")
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def _charts(name: str) -> list[Chart]:
    if name == "all":
        return list(ACCEPTANCE_CHARTS)
    return [Chart.parse(name)]


def cmd_verify_geometry(args) -> int:
    try:
        charts = _charts(args.chart)
    except GeometryError as exc:
        print(f"bad chart: {exc}", file=sys.stderr)
        return EXIT_USAGE
    ok = True
    for chart in charts:
        try:
            rep = verify_geometry(chart, args.samples, args.seed, inject_corruption=args.inject_corruption)
        except InvariantViolation as exc:
            print(f"invariant violation: {exc}", file=sys.stderr)
            return EXIT_INVARIANT
        print(rep.text())
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_CHECK


def _eps_grid(text: str | None) -> list[float]:
    if text is None:
        return list(DEFAULT_EPS_GRID)
    grid = [float(x) for x in text.split(",") if x.strip()]
    if not grid or any(e < 0 for e in grid):
        raise ValueError("eps grid must be a comma-separated list of nonnegative numbers")
    return grid


def cmd_verify_enlargement(args) -> int:
    try:
        charts = _charts(args.chart)
        grid = _eps_grid(args.eps)
    except (GeometryError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    ok = True
    for chart in charts:
        rep = verify_enlargement(chart, grid, args.seed, cases=args.samples)
        print(rep.text())
        ok &= rep.passed
        if any(e > 0 for e in grid):
            alg = verify_algebra([chart], cases=args.algebra_cases, seed=args.seed)
            print(alg.text())
            ok &= alg.passed
    return EXIT_OK if ok else EXIT_CHECK


def load_trace(csv_path: str | Path) -> tuple[dict, list, list[float], list[float]]:
    """Read the summary and iterates written next to ``csv_path``."""
    _, summary_path, iter_path = output_paths(csv_path)
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    chart = Chart(summary["problem"]["chart"]["kind"], int(summary["problem"]["chart"]["n"]))
    points, lambdas, eps = [], [], []
    for line in iter_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        points.append(point_from_record(rec["point"], chart))
        if "lambda" in rec:
            lambdas.append(float(rec["lambda"]))
            eps.append(float(rec["eps_certified"]))
    return summary, points, lambdas, eps


def cmd_report(args) -> int:
    try:
        summary, points, lambdas, eps = load_trace(args.trace)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"cannot read trace: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GeometryError as exc:
        print(f"invariant violation in stored iterate: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    if not lambdas or len(points) != len(lambdas) + 1:
        print("empty or truncated trace", file=sys.stderr)
        return EXIT_USAGE
    ref_rec = summary["problem"].get("reference")
    if ref_rec is None:
        print("trace has no reference solution to monitor against", file=sys.stderr)
        return EXIT_USAGE
    ref = point_from_record(ref_rec, points[0].chart)
    lam_lo = float(summary["lambda_lo"])
    slacks = fejer_slacks(points, lambdas, eps, ref, lam_lo)
    tol = TOL.monitor
    print(f"{'k':>4s} {'slack_main':>14s} {'slack_fejer':>14s}")
    for k, (m, f) in enumerate(slacks):
        flag = "" if min(m, f) >= -tol else "  VIOLATION"
        print(f"{k:4d} {m:14.6e} {f:14.6e}{flag}")
    worst = min(min(m, f) for m, f in slacks)
    quasi = quasi_fejer_check(points, [ref], [e / lam_lo for e in eps], float(summary["R"]), tol)
    vanish = step_vanishing_slack(points, eps, ref, lam_lo)
    print(f"min slack {worst:.3e} (tol {-tol:.0e})")
    print(f"quasi-Fejer with bounded iterates: {'yes' if quasi else 'NO'}")
    print(f"step-vanishing slack {vanish:.3e}")
    ok = worst >= -tol and quasi and vanish >= -tol
    return EXIT_OK if ok else EXIT_CHECK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hadprox",
        description="Inexact proximal point experiments on Hadamard manifolds.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__.split("Exit codes", 1)[1].join(["Exit codes", ""]),
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the proximal method from a JSON config")
    p.add_argument("--config", required=True, help="JSON config path")
    p.add_argument("--out", help="CSV output path (overrides the config)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify-geometry", help="chart invariant suite")
    p.add_argument("--chart", default="all", help="e.g. hyperboloid:2, or 'all'")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-corruption", action="store_true", help="self-test: push one sample off the chart")
    p.set_defaults(func=cmd_verify_geometry)

    p = sub.add_parser("verify-enlargement", help="enlargement ball evidence and algebra")
    p.add_argument("--chart", default="euclidean:2", help="e.g. spd:2, or 'all'")
    p.add_argument("--eps", help="comma-separated eps grid (default 0.125,0.5,2)")
    p.add_argument("--samples", type=int, default=4, help="random cases per eps")
    p.add_argument("--algebra-cases", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_enlargement)

    p = sub.add_parser("report", help="recompute monitors for a stored trace")
    p.add_argument("trace", help="CSV path written by 'run'")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "samples", 1) < 1:
        print("--samples must be positive", file=sys.stderr)
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

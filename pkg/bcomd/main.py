"""
Command-line entry point: generate, run, sweep, measure, check, plot.

Exit codes: 0 success, 1 validation failure, 2 infeasibility.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from bcomd.config import settings
from bcomd.exceptions import BcomdError, InfeasibleError, InvalidInputError

logger = logging.getLogger(__name__)

POLICY_KINDS = ["bcomd-theorem1", "bcomd-manual", "mbcomd", "exp3"]


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON experiment config; flags below override its fields")
    parser.add_argument("--trace", help="trace file written by `generate`")
    parser.add_argument("--policy", choices=POLICY_KINDS)
    parser.add_argument("--preset", help="named manual preset (low, mid, high)")
    parser.add_argument("--rho", type=float)
    parser.add_argument("--seed", type=int, action="append", help="repeatable; default 0..DEFAULT_SEEDS-1")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--name")
    parser.add_argument("--jobs", type=int)
    parser.add_argument("--emit-distributions", action="store_true")
    parser.add_argument("--relax", action="store_true", help="relax infeasible comparator slots instead of failing")
    parser.add_argument("--db", help="results ledger URL, e.g. sqlite:///runs.db")
    parser.add_argument("--record", action="store_true", help="record in the ledger at BCOMD_DATABASE_URL")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcomd", description=settings.APP_NAME)
    parser.add_argument("--log-level", default=settings.LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic trace file")
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--config", help="JSON generator config")
    gen.add_argument("--preset", choices=sorted(settings.TRACE_WINDOWS))
    gen.add_argument("--n", type=int)
    gen.add_argument("--T", type=int)
    gen.add_argument("--window", type=int)
    gen.add_argument("--shift", type=int)
    gen.add_argument("--repetitions", type=int)
    gen.add_argument("--noise-std", type=float)
    gen.add_argument("--index-base", type=int, choices=[0, 1])
    gen.add_argument("--allow-infeasible", action="store_true")
    gen.add_argument("--fixture", choices=["vt_small_pt_large", "vt_large_pt_small"])

    run = sub.add_parser("run", help="run one policy over seeds and write per-seed CSVs")
    _add_experiment_flags(run)

    sw = sub.add_parser("sweep", help="run a grid of configs and aggregate over seeds")
    _add_experiment_flags(sw)
    sw.add_argument("--grid", default="grid", help="manual grid preset expanded over the base config")
    sw.add_argument("--violation-threshold", type=float)
    sw.add_argument("--progress", action="store_true")

    measure = sub.add_parser("measure", help="print P_T, V_T and the Slater margin of a trace")
    measure.add_argument("--trace", required=True)
    measure.add_argument("--relax", action="store_true", help="relax infeasible slots instead of failing")

    check = sub.add_parser("check", help="run the acceptance checks")
    check.add_argument("--full", action="store_true")
    check.add_argument("--only", action="append")
    check.add_argument("--out", help="write the results as JSON")

    plot = sub.add_parser("plot", help="write gnuplot data for cumulative loss/violation curves")
    plot.add_argument("--summary", action="append", required=True, help="summary.json of a run")
    plot.add_argument("--out", required=True)
    return parser


def _experiment_config(args, default_policy: Optional[dict] = None):
    from bcomd.schemas import ExperimentConfig

    data = json.loads(Path(args.config).read_text()) if args.config else {}
    if default_policy is not None and not args.policy:
        data.setdefault("policy", default_policy)
    if args.trace:
        data["trace"] = {"path": args.trace}
    if args.policy or args.preset:
        policy = dict(data.get("policy") or {})
        if args.policy:
            policy["kind"] = args.policy
        if args.preset:
            policy["preset"] = args.preset
        data["policy"] = policy
    for field, value in (("rho", args.rho), ("seeds", args.seed), ("out_dir", args.out),
                         ("name", args.name), ("jobs", args.jobs)):
        if value is not None:
            data[field] = value
    if args.emit_distributions:
        data["emit_distributions"] = True
    if args.relax:
        data["relax_comparator"] = True
    return ExperimentConfig.parse_obj(data)


def _session_factory(args):
    url = args.db or (settings.DATABASE_URL if args.record else None)
    if url is None:
        return None
    from bcomd.database import make_session_factory
    from bcomd.init_db import init_db

    init_db(url)
    return make_session_factory(url)


def cmd_generate(args) -> int:
    from bcomd.environment import generate_incomparability_fixture, generate_shifting_trace, write_trace
    from bcomd.schemas import TraceGenConfig

    if args.fixture:
        if args.T is None:
            raise InvalidInputError("--fixture needs --T")
        trace = generate_incomparability_fixture(args.fixture, args.T, n=args.n or 3)
    else:
        data = json.loads(Path(args.config).read_text()) if args.config else {}
        if args.preset:
            data.setdefault("window", settings.TRACE_WINDOWS[args.preset])
        for field in ("n", "T", "window", "shift", "repetitions", "noise_std", "index_base"):
            value = getattr(args, field)
            if value is not None:
                data[field] = value
        if args.allow_infeasible:
            data["allow_infeasible"] = True
        trace = generate_shifting_trace(TraceGenConfig.parse_obj(data), seed=args.seed)
    path = write_trace(trace, args.out)
    logger.info(f"Wrote {trace.generator} trace n={trace.n} T={trace.T} to {path}")
    return 0


def cmd_run(args) -> int:
    from bcomd.harness import run_experiment

    config = _experiment_config(args)
    summaries, _ = run_experiment(config, session_factory=_session_factory(args))
    print(json.dumps([s.dict(exclude={"extra"}) for s in summaries], indent=2))
    return 0


def cmd_sweep(args) -> int:
    from bcomd.harness import grid_configs, slugify, sweep

    base = _experiment_config(args, default_policy={"kind": "bcomd-manual", "preset": "mid"})
    configs = [base] if args.policy and args.policy != "bcomd-manual" else grid_configs(base, args.grid)
    table, aggregate, best = sweep(
        configs,
        violation_threshold=args.violation_threshold,
        session_factory=_session_factory(args),
        sweep_name=base.name,
        progress=args.progress,
    )
    out = Path(base.out_dir) / slugify(base.name)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "sweep_runs.csv", index=False, float_format=settings.CSV_FLOAT_FORMAT)
    aggregate.to_csv(out / "sweep_summary.csv", index=False, float_format=settings.CSV_FLOAT_FORMAT)
    print(aggregate.to_string(index=False))
    print(f"best: {best}")
    return 0


def cmd_measure(args) -> int:
    from bcomd.environment import read_trace, slater_margin
    from bcomd.oracle import regularity_measures

    trace = read_trace(args.trace)
    _, measures = regularity_measures(trace, relax=args.relax)
    print(json.dumps({"P_T": measures.P_T, "V_T": measures.V_T,
                      "rho_hat": slater_margin(trace.constraints), "n": trace.n, "T": trace.T}))
    return 0


def cmd_check(args) -> int:
    from bcomd.acceptance import run_checks

    results = run_checks(full=args.full or None, only=args.only)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} {json.dumps(r.measured)}")
    if args.out:
        Path(args.out).write_text(json.dumps([r.dict() for r in results], indent=2))
    return 0 if all(r.passed for r in results) else 1


def cmd_plot(args) -> int:
    from bcomd.harness import mean_curves, write_plot_data

    frames = {}
    for summary_path in args.summary:
        rows = json.loads(Path(summary_path).read_text())
        if not rows:
            continue
        frames[rows[0]["policy"]] = mean_curves([row["csv_path"] for row in rows])
    path = write_plot_data(frames, Path(args.out))
    logger.info(f"Wrote plot data for {len(frames)} policies to {path}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "measure": cmd_measure,
    "check": cmd_check,
    "plot": cmd_plot,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except InfeasibleError as e:
        logger.error(f"Infeasible: {str(e)}")
        return e.exit_code
    except BcomdError as e:
        logger.error(f"{type(e).__name__}: {str(e)}")
        return e.exit_code
    except (ValidationError, ValueError, OSError) as e:
        logger.error(f"Invalid input: {str(e)}")
        return 1


if __name__ == "__main__":
    sys.exit(main())

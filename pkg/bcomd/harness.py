"""
Experiment runner: builds the trace and the policy from an ExperimentConfig,
replicates over seeds, writes one CSV per seed plus a summary, and
aggregates sweeps over configurations.
"""
import json
import logging
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError
from tqdm import tqdm

from bcomd.config import settings
from bcomd.environment import (
    Trace,
    generate_incomparability_fixture,
    generate_shifting_trace,
    read_trace,
    slater_margin,
)
from bcomd.exceptions import BcomdError, InfeasibleError, InvalidInputError
from bcomd.oracle import evaluate_run, regularity_measures
from bcomd.policies import BcomdPolicy, MbcomdPolicy, Policy, RoundRecord
from bcomd.policies.bcomd import compute_parameters
from bcomd.schemas import ExperimentConfig, ManualParams, PolicySpec, RegularityMeasures, RunSummary, TraceSource

logger = logging.getLogger(__name__)


def load_trace(source: TraceSource) -> Trace:
    if source.path is not None:
        return read_trace(source.path)
    if source.generator is not None:
        return generate_shifting_trace(source.generator, seed=source.seed)
    fixture = source.fixture
    return generate_incomparability_fixture(fixture.kind, fixture.T, n=fixture.n, rho=fixture.rho)


def manual_from_spec(spec: PolicySpec) -> ManualParams:
    if spec.manual is not None:
        return spec.manual
    preset = settings.MANUAL_PRESETS[spec.preset]
    if "eta" not in preset:
        raise InvalidInputError(f"preset {spec.preset!r} is a grid; expand it with grid_configs")
    return ManualParams(**preset)


def build_policy(
    spec: PolicySpec,
    trace: Trace,
    rho: float,
    seed: int,
    measures: Optional[RegularityMeasures] = None,
) -> Policy:
    n, T = trace.n, trace.T
    if spec.kind == "bcomd-theorem1":
        regularity = spec.regularity or measures
        if regularity is None:
            _, regularity = regularity_measures(trace)
        params = compute_parameters(n, T, rho, regularity=regularity, mode="theorem1")
        return BcomdPolicy(params, seed=seed, name=spec.label())
    if spec.kind == "bcomd-manual":
        params = compute_parameters(n, T, rho, mode="manual", manual=manual_from_spec(spec))
        return BcomdPolicy(params, seed=seed, name=spec.label())
    if spec.kind == "mbcomd":
        return MbcomdPolicy(
            n, T, rho=rho, seed=seed, cap=spec.cap_grid, stabilizer=spec.expert_stabilizer
        )
    return BcomdPolicy.exp3(n, T, seed=seed, eta=spec.exp3_eta)


def execute(policy: Policy, trace: Trace) -> List[RoundRecord]:
    """Play every round of the trace; the policy only sees the played arm"""
    return [policy.step(trace.oracle(t)) for t in range(trace.T)]


def slugify(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", text).strip("_")


def write_run_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame[settings.CSV_COLUMNS].to_csv(
        path, index=False, float_format=settings.CSV_FLOAT_FORMAT, lineterminator="\n"
    )
    return path


def write_distributions(records: Sequence[RoundRecord], path: Path) -> Path:
    """Per-round action distributions as gnuplot matrix blocks (t, arm, prob)"""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write("# t arm prob\n")
        for r in records:
            for a, p in enumerate(r.probs):
                fh.write(f"{r.t} {a} {p:.17g}\n")
            fh.write("\n")
    return path


def _run_seed(args) -> Tuple[RunSummary, Optional[pd.DataFrame]]:
    config, trace, comparator, measures, rho_hat, seed, keep_frame = args
    started = time.perf_counter()
    policy = build_policy(config.policy, trace, config.rho, seed, measures)
    records = execute(policy, trace)
    frame = evaluate_run(trace, records, comparator)
    wall_clock = time.perf_counter() - started

    out = Path(config.out_dir) / slugify(config.name)
    csv_path = write_run_csv(frame, out / f"{slugify(config.policy.label())}_seed{seed}.csv")
    if config.emit_distributions:
        write_distributions(records, out / f"{slugify(config.policy.label())}_seed{seed}_dist.dat")

    summary = RunSummary(
        name=config.name,
        policy=config.policy.label(),
        seed=seed,
        T=trace.T,
        final_regret=float(frame["regret_prefix"].iloc[-1]),
        final_expected_regret=float(frame["expected_regret_prefix"].iloc[-1]),
        final_violation=float(frame["cum_violation"].iloc[-1]),
        max_lambda=float(frame["lambda"].max()),
        P_T=measures.P_T,
        V_T=measures.V_T,
        rho_hat=rho_hat,
        wall_clock=wall_clock,
        csv_path=str(csv_path),
    )
    logger.info(
        f"{summary.policy} seed={seed} T={trace.T}: regret={summary.final_regret:.4g} "
        f"violation={summary.final_violation:.4g} max_lambda={summary.max_lambda:.4g} "
        f"({wall_clock:.2f}s)"
    )
    return summary, frame if keep_frame else None


def prepare(config: ExperimentConfig, trace: Optional[Trace] = None):
    """
    Load the trace and compute its comparator, regularity measures and Slater
    margin. Infeasible slots are relaxed when config.relax holds.
    """
    trace = trace if trace is not None else load_trace(config.trace)
    rho_hat = slater_margin(trace.constraints)
    comparator, measures = regularity_measures(trace, relax=config.relax)
    return trace, comparator, measures, rho_hat


def run_experiment(
    config: ExperimentConfig,
    trace: Optional[Trace] = None,
    session_factory=None,
    keep_frames: bool = False,
    prepared: Optional[tuple] = None,
) -> Tuple[List[RunSummary], Dict[int, pd.DataFrame]]:
    """
    One deterministic run per seed; per-seed CSVs and a <policy>_summary.json in
    out_dir/<name>/. Results are joined in seed order.
    """
    trace, comparator, measures, rho_hat = prepared or prepare(config, trace)
    if config.policy.kind == "bcomd-theorem1" and rho_hat <= 0:
        logger.error(f"Slater check failed for {config.name}: rho_hat={rho_hat:.6g}")
        raise InfeasibleError(f"trace fails the Slater check (rho_hat={rho_hat:.6g})")
    jobs = [(config, trace, comparator, measures, rho_hat, seed, keep_frames) for seed in config.seeds]

    if config.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_run_seed, jobs))
    else:
        results = [_run_seed(job) for job in jobs]

    summaries = [summary for summary, _ in results]
    frames = {summary.seed: frame for summary, frame in results if frame is not None}

    out = Path(config.out_dir) / slugify(config.name)
    write_summary(summaries, out / f"{slugify(config.policy.label())}_summary.json")
    if session_factory is not None:
        record_runs(session_factory, summaries)
    return summaries, frames


def write_summary(summaries: Sequence[RunSummary], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [s.dict() for s in summaries]
    path.write_text(json.dumps(rows, indent=2, sort_keys=True))
    return path


def record_runs(session_factory, summaries: Sequence[RunSummary], sweep_name: Optional[str] = None,
                violation_threshold: Optional[float] = None, best_config: Optional[str] = None):
    """Store run summaries (optionally grouped in a sweep) in the results ledger"""
    from bcomd.database import get_db
    from bcomd.models import ExperimentRun, Sweep

    session = get_db(session_factory)
    db = next(session)
    try:
        sweep = None
        if sweep_name is not None:
            sweep = Sweep(name=sweep_name, violation_threshold=violation_threshold, best_config=best_config)
            db.add(sweep)
        for s in summaries:
            db.add(ExperimentRun(
                sweep=sweep,
                name=s.name,
                policy=s.policy,
                seed=s.seed,
                horizon=s.T,
                final_regret=s.final_regret,
                final_expected_regret=s.final_expected_regret,
                final_violation=s.final_violation,
                max_lambda=s.max_lambda,
                path_length=s.P_T,
                temporal_variation=s.V_T,
                rho_hat=s.rho_hat,
                wall_clock=s.wall_clock,
                csv_path=s.csv_path,
                status=s.status,
                error=s.error,
                extra=s.extra or None,
            ))
        db.commit()
    except Exception as e:
        db.rollback()
        logger.error(f"Error recording runs in the ledger: {str(e)}")
        raise
    finally:
        session.close()


def grid_configs(base: ExperimentConfig, preset: str = "grid") -> List[ExperimentConfig]:
    """Expand a named grid preset (mu = ratio * eta) into manual-mode configs"""
    grid = settings.MANUAL_PRESETS[preset]
    configs = []
    for eta in grid["etas"]:
        for gamma in grid["gammas"]:
            manual = ManualParams(eta=eta, mu=grid["mu_ratio"] * eta, gamma=gamma, omega=grid["omega"])
            policy = PolicySpec(kind="bcomd-manual", manual=manual)
            configs.append(base.copy(update={"policy": policy}))
    return configs


def sweep(
    configs: Sequence[ExperimentConfig],
    violation_threshold: Optional[float] = None,
    session_factory=None,
    sweep_name: str = "sweep",
    progress: bool = False,
) -> Tuple[pd.DataFrame, pd.DataFrame, Optional[str]]:
    """
    Run every config; returns (rows per config x seed, aggregate per config,
    best config label). A failing config is recorded as failed and the sweep
    moves on.
    """
    if not configs:
        raise InvalidInputError("sweep needs at least one configuration")

    rows: List[RunSummary] = []
    traces: Dict[Tuple[str, bool], tuple] = {}
    for config in tqdm(configs, desc="sweep", disable=not progress):
        label = config.policy.label()
        try:
            key = (config.trace.json(), config.relax)
            if key not in traces:
                traces[key] = prepare(config)
            summaries, _ = run_experiment(config, prepared=traces[key])
            rows.extend(summaries)
        except (BcomdError, ValidationError, OSError, ValueError) as e:
            logger.error(f"Sweep entry {label} failed: {str(e)}")
            rows.extend(
                RunSummary(
                    name=config.name, policy=label, seed=seed, T=0,
                    final_regret=math.nan, final_expected_regret=math.nan,
                    final_violation=math.nan, max_lambda=math.nan,
                    P_T=math.nan, V_T=math.nan, rho_hat=math.nan, wall_clock=0.0,
                    status="failed", error=str(e),
                )
                for seed in config.seeds
            )

    table = pd.DataFrame([r.dict() for r in rows]).drop(columns=["extra"])
    aggregate = aggregate_summary(table)
    best = select_best(aggregate, violation_threshold)
    if session_factory is not None:
        record_runs(session_factory, rows, sweep_name=sweep_name,
                    violation_threshold=violation_threshold, best_config=best)
    return table, aggregate, best


def aggregate_summary(table: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard error over seeds, one row per (name, policy)"""
    ok = table[table["status"] == "ok"]
    metrics = ["final_regret", "final_expected_regret", "final_violation", "max_lambda"]
    grouped = ok.groupby(["name", "policy"], sort=False)[metrics]
    mean = grouped.mean().add_suffix("_mean")
    stderr = grouped.sem(ddof=1).fillna(0.0).add_suffix("_stderr")
    counts = grouped.size().rename("seeds")
    aggregate = pd.concat([mean, stderr, counts], axis=1).reset_index()

    failed = table[table["status"] != "ok"][["name", "policy"]].drop_duplicates()
    if not failed.empty:
        failed = failed.assign(status="failed")
        aggregate = aggregate.assign(status="ok")
        aggregate = pd.concat([aggregate, failed], ignore_index=True)
    elif not aggregate.empty:
        aggregate = aggregate.assign(status="ok")
    return aggregate


def select_best(aggregate: pd.DataFrame, violation_threshold: Optional[float] = None) -> Optional[str]:
    """Lowest mean final regret among configs whose mean violation is within the threshold"""
    if aggregate.empty or "final_regret_mean" not in aggregate:
        return None
    candidates = aggregate[aggregate["status"] == "ok"]
    if violation_threshold is not None:
        candidates = candidates[candidates["final_violation_mean"] <= violation_threshold]
    if candidates.empty:
        return None
    return str(candidates.loc[candidates["final_regret_mean"].idxmin(), "policy"])


def fit_loglog_slope(horizons: Iterable[float], values: Iterable[float]) -> float:
    """Least-squares slope of log(value) against log(T)"""
    x = np.log(np.asarray(list(horizons), dtype=float))
    y = np.log(np.asarray(list(values), dtype=float))
    if x.size < 2:
        raise InvalidInputError("need at least two horizons to fit a slope")
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def write_plot_data(frames: Dict[str, pd.DataFrame], path: Path) -> Path:
    """
    Cumulative loss and violation curves, one gnuplot index block per policy
    (mean over the supplied seeds).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for label, frame in frames.items():
            fh.write(f"# {label}\n# t cum_loss cum_violation regret_prefix\n")
            for row in frame[["t", "cum_loss", "cum_violation", "regret_prefix"]].itertuples(index=False):
                fh.write(f"{row.t} {row.cum_loss:.17g} {row.cum_violation:.17g} {row.regret_prefix:.17g}\n")
            fh.write("\n\n")
    return path


def mean_curves(csv_paths: Sequence[str]) -> pd.DataFrame:
    """Average per-seed CSVs round by round"""
    frames = [pd.read_csv(p) for p in csv_paths]
    stacked = pd.concat(frames)
    return stacked.groupby("t", sort=True)[["cum_loss", "cum_violation", "regret_prefix"]].mean().reset_index()

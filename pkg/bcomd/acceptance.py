"""
Acceptance checks shared by `bcomd check` and the test-suite.

Each check returns a CheckResult with the measured quantities. Scale defaults
to the reduced setting unless full=True (or BCOMD_FULL_ACCEPTANCE=1).
"""
import logging
import math
import tempfile
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.optimize import linprog
from scipy.special import rel_entr

from bcomd.config import settings
from bcomd.environment import (
    Trace,
    generate_incomparability_fixture,
    generate_shifting_trace,
    make_trace,
    slater_margin,
    stationary_trace,
)
from bcomd.exceptions import InfeasibleError
from bcomd.harness import build_policy, execute, fit_loglog_slope, run_experiment
from bcomd.oracle import evaluate_run, per_slot_optimum, regularity_measures
from bcomd.policies import BcomdPolicy, make_generator
from bcomd.policies.bcomd import compute_parameters, importance_weighted_estimate
from bcomd.policies.meta import FixedExpert, meta_step, single_phase_state
from bcomd.schemas import ExperimentConfig, PolicySpec, TraceGenConfig, TraceSource
from bcomd.simplex import is_distribution, kl_divergence, project_kl, sample_index

logger = logging.getLogger(__name__)

SCALES: Dict[str, Dict[str, object]] = {
    "full": {
        "estimator_samples": 100_000,
        "projection_cases": 1000,
        "dual_T": 10_000,
        "dual_seeds": 20,
        "slope_horizons": [2 ** 10, 2 ** 11, 2 ** 12, 2 ** 13, 2 ** 14],
        "slope_seeds": 20,
        "baseline_window": settings.TRACE_WINDOWS["long"],
        "baseline_seeds": 20,
        "meta_L": 4096,
        "meta_seeds": 20,
        "mbcomd_T": 2 ** 14,
        "mbcomd_seeds": 20,
        "oracle_slots": 1000,
    },
    "reduced": {
        "estimator_samples": 100_000,
        "projection_cases": 150,
        "dual_T": 2000,
        "dual_seeds": 3,
        "slope_horizons": [2 ** 8, 2 ** 9, 2 ** 10, 2 ** 11],
        "slope_seeds": 5,
        "baseline_window": settings.TRACE_WINDOWS["long"],
        "baseline_seeds": 5,
        "meta_L": 4096,
        "meta_seeds": 5,
        "mbcomd_T": 2 ** 12,
        "mbcomd_seeds": 3,
        "oracle_slots": 300,
    },
}

# stationary slot where arm 0 is both cheaper and feasible
STATIONARY_LOSSES = (0.2, 0.8)
STATIONARY_CONSTRAINTS = (-0.5, 0.5)


class CheckResult(BaseModel):
    name: str
    passed: bool
    measured: Dict[str, float] = {}
    detail: str = ""


def scale(full: Optional[bool] = None) -> Dict[str, object]:
    full = settings.FULL_ACCEPTANCE if full is None else full
    return SCALES["full" if full else "reduced"]


def check_estimator_unbiasedness(samples: int = 100_000, seed: int = 0) -> CheckResult:
    x = np.array([0.2, 0.3, 0.5])
    v = np.array([0.4, 0.6, 0.8])
    rng = make_generator(seed)
    arms = [sample_index(x, u) for u in rng.random(samples)]

    estimates = np.vstack([importance_weighted_estimate(x, a, v[a]) for a in arms])

    mean = estimates.mean(axis=0)
    stderr = estimates.std(axis=0, ddof=1) / math.sqrt(samples)
    z = np.abs(mean - v) / stderr
    return CheckResult(
        name="estimator_unbiasedness",
        passed=bool(np.all(z <= 4.0)),
        measured={f"z_{a}": float(z[a]) for a in range(len(x))},
    )


def _simplex_grid(n: int, gamma: float, step: float, samples: int, rng) -> np.ndarray:
    if n == 2:
        x0 = np.arange(gamma, 1.0 - gamma + step / 2, step)
        return np.column_stack([x0, 1.0 - x0])
    if n == 3:
        axis = np.arange(gamma, 1.0 - 2 * gamma + step / 2, step)
        x0, x1 = np.meshgrid(axis, axis, indexing="ij")
        x0, x1 = x0.ravel(), x1.ravel()
        x2 = 1.0 - x0 - x1
        keep = x2 >= gamma
        return np.column_stack([x0[keep], x1[keep], x2[keep]])
    return gamma + (1.0 - n * gamma) * rng.dirichlet(np.ones(n), size=samples)


def check_projection_optimality(cases: int = 1000, step: float = 1e-3, samples: int = 100_000,
                                seed: int = 0) -> CheckResult:
    rng = make_generator(seed)
    worst_gap = -np.inf
    worst_kkt = 0.0
    for _ in range(cases):
        n = int(rng.integers(2, 5))
        gamma = float(rng.uniform(0.0, 0.9 / n))
        y = np.exp(2.0 * rng.normal(size=n))
        x = project_kl(y, gamma)

        grid = _simplex_grid(n, gamma, step, samples, rng)
        grid_values = rel_entr(grid, y[None, :]).sum(axis=1) - 1.0 + y.sum()
        worst_gap = max(worst_gap, kl_divergence(x, y) - float(grid_values.min()))

        y_norm = y / y.sum()
        free = x > gamma + settings.NORMALIZATION_TOL
        if np.any(free):
            c = float(np.median(x[free] / y_norm[free]))
            worst_kkt = max(worst_kkt, float(np.max(np.abs(x - np.maximum(gamma, c * y_norm)))))
    return CheckResult(
        name="projection_optimality",
        passed=bool(worst_gap <= 1e-4 and worst_kkt <= 1e-10),
        measured={"worst_gap_to_grid": float(worst_gap), "worst_kkt_residual": worst_kkt},
    )


def _feasible_shifting_trace(T: int, seed: int = 0, window: Optional[int] = None) -> Trace:
    window = window or max(1, math.ceil(T / 7))
    return generate_shifting_trace(TraceGenConfig(T=T, window=window), seed=seed)


def check_dual_boundedness(T: int = 10_000, seeds: Sequence[int] = range(20)) -> CheckResult:
    families = {
        "stationary": stationary_trace((0.2, 0.5, 0.8), (-0.5, 0.1, 0.3), T),
        "shifting": _feasible_shifting_trace(T),
        "fixture": generate_incomparability_fixture("vt_small_pt_large", T),
    }
    breaches = 0
    measured = {}
    for family, trace in families.items():
        rho = min(1.0, slater_margin(trace.constraints))
        _, measures = regularity_measures(trace)
        params = compute_parameters(trace.n, trace.T, rho, regularity=measures)
        worst = 0.0
        for seed in seeds:
            records = execute(BcomdPolicy(params, seed=seed), trace)
            peak = max(r.lam for r in records)
            worst = max(worst, peak)
            breaches += int(peak > params.omega)
        measured[f"{family}_max_lambda"] = worst
        measured[f"{family}_omega"] = params.omega
    measured["breaches"] = float(breaches)
    return CheckResult(name="dual_boundedness", passed=breaches == 0, measured=measured)


def _theorem1_means(trace: Trace, seeds: Sequence[int]) -> Tuple[float, float]:
    spec = PolicySpec(kind="bcomd-theorem1")
    comparator, measures = regularity_measures(trace)
    rho = min(1.0, slater_margin(trace.constraints))
    regrets, violations = [], []
    for seed in seeds:
        frame = evaluate_run(trace, execute(build_policy(spec, trace, rho, seed, measures), trace), comparator)
        regrets.append(frame["regret_prefix"].iloc[-1])
        violations.append(frame["cum_violation"].iloc[-1])
    return float(np.mean(regrets)), float(np.mean(violations))


def check_sublinear_slopes(
    horizons: Sequence[int],
    seeds: Sequence[int],
    losses: Sequence[float] = STATIONARY_LOSSES,
    constraints: Sequence[float] = STATIONARY_CONSTRAINTS,
) -> Tuple[CheckResult, CheckResult]:
    """
    Log-log slopes of mean final regret and mean final violation against T
    for the theorem1 schedule on a stationary feasible trace. Both means are
    floored at 1 before taking logs.
    """
    regrets, violations = [], []
    for T in horizons:
        regret, violation = _theorem1_means(stationary_trace(losses, constraints, T), seeds)
        regrets.append(regret)
        violations.append(violation)
        logger.info(f"T={T}: mean regret {regret:.4g}, mean violation {violation:.4g}")
    regret_slope = fit_loglog_slope(horizons, np.maximum(1.0, regrets))
    violation_slope = fit_loglog_slope(horizons, np.maximum(1.0, violations))
    return (
        CheckResult(name="regret_slope", passed=regret_slope <= 0.80,
                    measured={"slope": regret_slope, "largest_T_regret": regrets[-1]}),
        CheckResult(name="violation_slope", passed=violation_slope <= 0.75,
                    measured={"slope": violation_slope, "largest_T_violation": violations[-1]}),
    )


def check_constraint_control(window: int, seeds: Sequence[int], preset: str = "high") -> CheckResult:
    """Manual-mode BCOMD against the unconstrained exp3 baseline on the shifting trace"""
    trace = generate_shifting_trace(TraceGenConfig(window=window), seed=0)
    bcomd = PolicySpec(kind="bcomd-manual", preset=preset)
    exp3 = PolicySpec(kind="exp3")
    totals = {}
    for label, spec in (("bcomd", bcomd), ("exp3", exp3)):
        totals[label] = float(np.mean([
            sum(r.constraint for r in execute(build_policy(spec, trace, 1.0, seed), trace))
            for seed in seeds
        ]))
    return CheckResult(
        name="constraint_control",
        passed=totals["bcomd"] < totals["exp3"] and totals["bcomd"] < 0.5 * totals["exp3"],
        measured={"bcomd_violation": totals["bcomd"], "exp3_violation": totals["exp3"]},
    )


def check_meta_phase_regret(L: int = 4096, seeds: Sequence[int] = range(20)) -> CheckResult:
    """Meta-learner over K = 3 fixed experts on one phase of length L"""
    n = 4
    rng = make_generator(1234)
    means = np.array([0.2, 0.7, 0.7, 0.7])
    losses = np.clip(means + 0.1 * rng.normal(size=(L, n)), 0.0, 1.0)
    trace = make_trace(losses, np.full((L, n), -0.5), generator="meta-phase")
    experts = [
        FixedExpert([0.7, 0.1, 0.1, 0.1]),
        FixedExpert([0.1, 0.7, 0.1, 0.1]),
        FixedExpert(np.full(n, 1.0 / n)),
    ]
    best = min(float(losses.dot(e.distribution).sum()) for e in experts)
    bound = 10.0 * math.sqrt(n * L * math.log(len(experts)))

    worst = -np.inf
    for seed in seeds:
        state = single_phase_state(experts, L, seed=seed)
        total = 0.0
        for t in range(L):
            state, record = meta_step(state, trace.oracle(t))
            total += record.loss
        worst = max(worst, total - best)
    return CheckResult(name="meta_phase_regret", passed=bool(worst <= bound),
                       measured={"worst_regret": float(worst), "bound": bound})


def check_mbcomd_end_to_end(T: int, seeds: Sequence[int]) -> Tuple[CheckResult, CheckResult]:
    """
    MBCOMD without regularity input against the best theorem1 BCOMD over a
    small rho grid, plus the violation slope along the run's own prefixes.
    """
    trace = _feasible_shifting_trace(T)
    comparator, measures = regularity_measures(trace)
    rho_hat = min(1.0, slater_margin(trace.constraints))

    def mean_frame(spec: PolicySpec, rho: float):
        frames = [
            evaluate_run(trace, execute(build_policy(spec, trace, rho, seed, measures), trace), comparator)
            for seed in seeds
        ]
        return sum(f[["regret_prefix", "cum_violation"]] for f in frames) / len(frames)

    best_theorem1 = min(
        mean_frame(PolicySpec(kind="bcomd-theorem1"), rho)["regret_prefix"].iloc[-1]
        for rho in sorted({rho_hat, 1.0})
    )
    meta = mean_frame(PolicySpec(kind="mbcomd"), rho_hat)
    meta_regret = float(meta["regret_prefix"].iloc[-1])

    checkpoints = [t for t in (2 ** k for k in range(6, 20)) if t <= T]
    violation = np.maximum(1.0, meta["cum_violation"].to_numpy()[np.array(checkpoints) - 1])
    slope = fit_loglog_slope(checkpoints, violation)
    return (
        CheckResult(name="mbcomd_regret", passed=meta_regret <= 3.0 * best_theorem1,
                    measured={"mbcomd_regret": meta_regret, "best_theorem1_regret": float(best_theorem1)}),
        CheckResult(name="mbcomd_violation_slope", passed=slope <= 0.75, measured={"slope": slope}),
    )


def _brute_force_value(f: np.ndarray, g: np.ndarray) -> Optional[float]:
    n = len(f)
    result = linprog(f, A_ub=g[None, :], b_ub=[0.0], A_eq=np.ones((1, n)), b_eq=[1.0],
                     bounds=[(0.0, None)] * n, method="highs")
    return float(result.fun) if result.status == 0 else None


def check_oracle_equivalence(slots: int = 1000, seed: int = 0) -> CheckResult:
    rng = make_generator(seed)
    worst = 0.0
    mismatched_feasibility = 0
    infeasible_points = 0
    for _ in range(slots):
        n = int(rng.integers(2, 7))
        f = rng.random(n)
        g = rng.uniform(-1.0, 1.0, size=n)
        expected = _brute_force_value(f, g)
        try:
            point = per_slot_optimum(f, g)
            value = float(f @ point)
        except InfeasibleError:
            mismatched_feasibility += int(expected is not None)
            continue
        if expected is None:
            mismatched_feasibility += 1
            continue
        worst = max(worst, abs(value - expected))
        if not (is_distribution(point) and float(g @ point) <= settings.FEASIBILITY_TOL):
            infeasible_points += 1
    return CheckResult(
        name="oracle_equivalence",
        passed=worst <= 1e-6 and mismatched_feasibility == 0 and infeasible_points == 0,
        measured={
            "worst_value_gap": worst,
            "feasibility_mismatches": float(mismatched_feasibility),
            "infeasible_points": float(infeasible_points),
        },
    )


def check_fixture_measures(T: int = 64) -> CheckResult:
    measured = {}
    exact = True
    for kind in ("vt_small_pt_large", "vt_large_pt_small"):
        trace = generate_incomparability_fixture(kind, T)
        _, measures = regularity_measures(trace)
        analytic = trace.metadata["analytic"]
        exact &= measures.P_T == analytic["P_T"] and measures.V_T == analytic["V_T"]
        measured[f"{kind}_P_T"] = measures.P_T
        measured[f"{kind}_V_T"] = measures.V_T
    return CheckResult(name="fixture_measures", passed=bool(exact), measured=measured)


def check_determinism(T: int = 512, seeds: Sequence[int] = (0, 1)) -> CheckResult:
    trace_source = TraceSource(fixture={"kind": "vt_large_pt_small", "T": T})
    outputs = []
    with tempfile.TemporaryDirectory() as tmp:
        for attempt in ("a", "b"):
            config = ExperimentConfig(
                name="determinism", trace=trace_source, policy=PolicySpec(kind="mbcomd"),
                seeds=list(seeds), out_dir=str(Path(tmp) / attempt),
            )
            summaries, _ = run_experiment(config)
            outputs.append([Path(s.csv_path).read_bytes() for s in summaries])
    return CheckResult(name="determinism", passed=outputs[0] == outputs[1],
                       measured={"files": float(len(outputs[0]))})


def run_checks(full: Optional[bool] = None, only: Optional[Sequence[str]] = None) -> List[CheckResult]:
    """Run the acceptance checks in order; `only` filters by check name"""
    s = scale(full)
    checks: List[Tuple[str, Callable[[], object]]] = [
        ("estimator_unbiasedness", lambda: check_estimator_unbiasedness(s["estimator_samples"])),
        ("projection_optimality", lambda: check_projection_optimality(s["projection_cases"])),
        ("dual_boundedness", lambda: check_dual_boundedness(s["dual_T"], range(s["dual_seeds"]))),
        ("slopes", lambda: check_sublinear_slopes(s["slope_horizons"], range(s["slope_seeds"]))),
        ("constraint_control", lambda: check_constraint_control(s["baseline_window"], range(s["baseline_seeds"]))),
        ("meta_phase_regret", lambda: check_meta_phase_regret(s["meta_L"], range(s["meta_seeds"]))),
        ("mbcomd", lambda: check_mbcomd_end_to_end(s["mbcomd_T"], range(s["mbcomd_seeds"]))),
        ("oracle_equivalence", lambda: check_oracle_equivalence(s["oracle_slots"])),
        ("fixture_measures", check_fixture_measures),
        ("determinism", check_determinism),
    ]
    results: List[CheckResult] = []
    for name, check in checks:
        if only and name not in only:
            continue
        outcome = check()
        for result in outcome if isinstance(outcome, tuple) else (outcome,):
            level = logging.INFO if result.passed else logging.WARNING
            logger.log(level, f"{result.name}: {'pass' if result.passed else 'FAIL'} {result.measured}")
            results.append(result)
    return results

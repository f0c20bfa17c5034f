"""
Ground truth for completed runs: per-slot constrained optima, the comparator
sequence, the regularity measures P_T and V_T, and regret/violation series.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from bcomd.config import settings
from bcomd.environment import Trace
from bcomd.exceptions import InfeasibleError, InvalidInputError
from bcomd.policies.base import RoundRecord
from bcomd.schemas import RegularityMeasures
from bcomd.simplex import truncate_distribution

logger = logging.getLogger(__name__)


@dataclass
class ComparatorSequence:
    points: np.ndarray  # T x n, one feasible distribution per slot
    values: np.ndarray  # f_t . x*_t

    @property
    def T(self) -> int:
        return self.points.shape[0]


def per_slot_optimum(f, g, relax: bool = False) -> np.ndarray:
    """
    Exact minimizer of f.x over {x in simplex : g.x <= 0}.

    The optimum of a one-constraint LP over the simplex sits on a feasible
    vertex or on an edge where the constraint is tight, so the candidates are
    pure arms with g_a <= 0 and the mixtures of a (g_a > 0) with b (g_b < 0)
    at weight -g_b/(g_a - g_b) on a. Ties go to the lowest arm index, then the
    lowest second index. With relax, an infeasible slot returns the pure arm
    of least constraint value instead of raising.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape or f.ndim != 1:
        raise InvalidInputError(f"f and g must be vectors of one length, got {f.shape} and {g.shape}")
    n = f.shape[0]

    pure = np.flatnonzero(g <= 0)
    pos = np.flatnonzero(g > 0)
    neg = np.flatnonzero(g < 0)

    values = [f[pure]]
    first = [pure]
    second = [pure]
    weights = [np.ones(pure.shape[0])]
    pair_a = [pure]
    pair_b = [pure]
    if pos.size and neg.size:
        a, b = np.meshgrid(pos, neg, indexing="ij")
        a, b = a.ravel(), b.ravel()
        p = -g[b] / (g[a] - g[b])
        values.append(p * f[a] + (1.0 - p) * f[b])
        first.append(np.minimum(a, b))
        second.append(np.maximum(a, b))
        weights.append(p)
        pair_a.append(a)
        pair_b.append(b)

    values = np.concatenate(values)
    if values.size == 0:
        if relax:
            logger.warning("Infeasible slot relaxed to the least-violating arm")
            x = np.zeros(n)
            x[int(np.argmin(g))] = 1.0
            return x
        raise InfeasibleError("slot is infeasible: no arm or arm pair satisfies g.x <= 0")

    first = np.concatenate(first)
    second = np.concatenate(second)
    best = np.lexsort((second, first, values))[0]

    p = np.concatenate(weights)[best]
    a = np.concatenate(pair_a)[best]
    b = np.concatenate(pair_b)[best]
    x = np.zeros(n)
    x[a] += p
    x[b] += 1.0 - p
    return x


def comparator_sequence(trace: Trace, relax: bool = False) -> ComparatorSequence:
    points = np.empty((trace.T, trace.n))
    for t in range(trace.T):
        try:
            points[t] = per_slot_optimum(trace.losses[t], trace.constraints[t], relax=relax)
        except InfeasibleError as e:
            logger.error(f"Comparator undefined at slot {t}: {str(e)}")
            raise InfeasibleError(f"slot {t}: {str(e)}") from e
    values = np.einsum("ta,ta->t", points, trace.losses)
    return ComparatorSequence(points=points, values=values)


def regularity_measures(
    trace: Trace, relax: bool = False
) -> Tuple[ComparatorSequence, RegularityMeasures]:
    """
    P_T = sum_{t<T} |x*_t - x*_{t+1}|_1 and V_T = sum_{t<T} |f_t - f_{t+1}|_inf;
    the boundary term at t = T is left out.
    """
    comparator = comparator_sequence(trace, relax=relax)
    P_T = float(np.abs(np.diff(comparator.points, axis=0)).sum()) if trace.T > 1 else 0.0
    V_T = float(np.abs(np.diff(trace.losses, axis=0)).max(axis=1).sum()) if trace.T > 1 else 0.0
    return comparator, RegularityMeasures(P_T=P_T, V_T=V_T)


def certify_comparator(trace: Trace, comparator: ComparatorSequence) -> bool:
    """Every comparator point is a distribution satisfying its slot's constraint"""
    slack = np.einsum("ta,ta->t", comparator.points, trace.constraints)
    sums = comparator.points.sum(axis=1)
    return bool(
        np.all(slack <= settings.FEASIBILITY_TOL)
        and np.all(comparator.points >= 0)
        and np.allclose(sums, 1.0, atol=settings.FEASIBILITY_TOL)
    )


def comparator_on_truncated_simplex(points: np.ndarray, gamma: float) -> np.ndarray:
    """Row-wise KL projection of the comparator onto the truncated simplex"""
    return np.vstack([truncate_distribution(x, gamma) for x in points])


def evaluate_run(
    trace: Trace,
    run_records: Sequence[RoundRecord],
    comparator: Optional[ComparatorSequence] = None,
) -> pd.DataFrame:
    """
    Per-round prefix series of realized loss, violation and dynamic regret.

    Besides the fixed CSV columns the frame carries the expected loss of the
    played distribution x_t and the matching expected-regret prefix.
    """
    T_run = len(run_records)
    if T_run > trace.T:
        raise InvalidInputError(f"run has {T_run} rounds but the trace only {trace.T}")
    if comparator is None:
        comparator = comparator_sequence(trace.truncated(T_run)) if T_run else None
    if comparator is not None and comparator.T < T_run:
        raise InvalidInputError(f"comparator covers {comparator.T} rounds, run has {T_run}")

    t = np.array([r.t for r in run_records], dtype=int)
    actions = np.array([r.action for r in run_records], dtype=int)
    if np.any(t != np.arange(T_run)):
        raise InvalidInputError("run records must cover rounds 0..T-1 in order")
    if np.any((actions < 0) | (actions >= trace.n)):
        raise InvalidInputError(f"run contains actions outside [0, {trace.n})")

    loss = np.array([r.loss for r in run_records], dtype=float)
    constraint = np.array([r.constraint for r in run_records], dtype=float)
    lam = np.array([r.lam for r in run_records], dtype=float)
    comparator_value = comparator.values[:T_run] if comparator is not None else np.zeros(0)
    probs = (
        np.vstack([r.probs for r in run_records]) if T_run else np.zeros((0, trace.n))
    )
    expected_loss = np.einsum("ta,ta->t", probs, trace.losses[:T_run])

    cum_loss = np.cumsum(loss)
    cum_comparator = np.cumsum(comparator_value)
    frame = pd.DataFrame(
        {
            "t": t,
            "action": actions,
            "loss": loss,
            "constraint": constraint,
            "lambda": lam,
            "cum_loss": cum_loss,
            "cum_violation": np.cumsum(constraint),
            "comparator_value": comparator_value,
            "regret_prefix": cum_loss - cum_comparator,
            "expected_loss": expected_loss,
            "expected_regret_prefix": np.cumsum(expected_loss) - cum_comparator,
        }
    )
    return frame


def expected_regret_series(
    trace: Trace,
    run_records: Sequence[RoundRecord],
    comparator: Optional[ComparatorSequence] = None,
) -> np.ndarray:
    """Prefix sums of f_t . x_t - f_t . x*_t over the recorded distributions"""
    return evaluate_run(trace, run_records, comparator)["expected_regret_prefix"].to_numpy()

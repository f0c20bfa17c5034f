"""
Parameter-free doubling meta-learner over a grid of BCOMD experts.

The horizon is cut into phases of length 1, 2, 4, ...; each phase runs a
fresh geometric grid of experts and an entropic meta-learner over them. The
played arm is sampled from the mixture of expert distributions and the shared
importance-weighted estimates use the mixture probability.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from bcomd.config import settings
from bcomd.exceptions import InvalidInputError, NumericalError
from bcomd.policies.base import FeedbackOracle, RoundRecord, check_feedback, make_generator
from bcomd.policies.bcomd import (
    BcomdState,
    apply_estimates,
    dual_bound,
    importance_weighted_estimate,
    slater_constant,
)
from bcomd.schemas import BcomdParams
from bcomd.simplex import multiplicative_step, project_kl, sample_index

logger = logging.getLogger(__name__)


class ExpertSpec(BaseModel):
    c: float
    eta: float
    mu: float
    gamma: float
    omega: float


class PhaseSpec(BaseModel):
    index: int = Field(..., ge=1)
    start: int = Field(..., ge=0)
    length: int = Field(..., ge=1)
    K: int = Field(..., ge=1)
    eta_meta: float = Field(..., gt=0)
    gamma_meta: float = Field(..., ge=0)
    experts: List[ExpertSpec]


class PhasePlan(BaseModel):
    T: int
    n: int
    rho: float
    phases: List[PhaseSpec]

    @property
    def lengths(self) -> List[int]:
        return [p.length for p in self.phases]

    @property
    def expert_counts(self) -> List[int]:
        return [p.K for p in self.phases]


def expert_count(L: int) -> int:
    """max(1, ceil(log2 L))"""
    return max(1, (L - 1).bit_length())


def expert_grid(
    L: int,
    n: int,
    rho: float,
    cap: bool = False,
    stabilizer: bool = True,
    constants: Optional[Dict[str, float]] = None,
) -> List[ExpertSpec]:
    """
    Geometric grid c_k = 2^k, k = 1..K, with eta_k = c_k/(M sqrt L) and a shared
    mu = 1/(M sqrt L). A single-expert grid uses c = 1. With cap, c_k is
    clipped to max(1, sqrt L).
    """
    if L < 1:
        raise InvalidInputError(f"phase length must be >= 1, got {L}")
    if not 0 < rho <= 1:
        raise InvalidInputError(f"rho must lie in (0, 1], got {rho}")
    constants = constants or settings.META_CONSTANTS

    K = expert_count(L)
    cs = [1.0] if K == 1 else [2.0 ** k for k in range(1, K + 1)]
    if cap:
        ceiling = max(1.0, math.sqrt(L))
        cs = [min(c, ceiling) for c in cs]

    M = slater_constant(n, rho)
    root_L = math.sqrt(L)
    mu = 1.0 / (M * root_L)
    gamma = min(1.0 / n, constants["gamma"] / L)

    grid = []
    for c in cs:
        eta = c / (M * root_L)
        omega = dual_bound(n, rho, eta, mu, gamma) if stabilizer else 0.0
        grid.append(ExpertSpec(c=c, eta=eta, mu=mu, gamma=gamma, omega=omega))
    return grid


def phase_schedule(
    T: int,
    n: int = 2,
    rho: float = 1.0,
    cap: bool = False,
    stabilizer: bool = True,
    constants: Optional[Dict[str, float]] = None,
) -> PhasePlan:
    """Phases of length 2^(m-1), the last one truncated so the lengths sum to T"""
    if T < 1:
        raise InvalidInputError(f"horizon must be >= 1, got {T}")
    constants = constants or settings.META_CONSTANTS

    phases = []
    start, m = 0, 1
    while start < T:
        L = min(2 ** (m - 1), T - start)
        K = expert_count(L)
        phases.append(
            PhaseSpec(
                index=m,
                start=start,
                length=L,
                K=K,
                eta_meta=constants["eta_meta"] / math.sqrt(L),
                gamma_meta=min(1.0 / K, constants["gamma_meta"] / L ** (1.0 / 3.0)),
                experts=expert_grid(L, n, rho, cap=cap, stabilizer=stabilizer, constants=constants),
            )
        )
        start += L
        m += 1
    return PhasePlan(T=T, n=n, rho=rho, phases=phases)


def expert_loss_estimate(x_expert_at_a: float, x_meta_at_a: float, loss: float) -> float:
    """(x^(k)_a / x^meta_a) * loss, unbiased for the expert's expected loss"""
    if x_meta_at_a <= 0:
        raise NumericalError("mixture probability of the played arm is zero")
    return x_expert_at_a / x_meta_at_a * loss


def meta_update(weights, m_tilde, eta_meta: float, gamma_meta: float) -> np.ndarray:
    """Entropic step on the expert weights followed by KL projection"""
    y = multiplicative_step(weights, m_tilde, eta_meta)
    return project_kl(y, gamma_meta)


class Expert(Protocol):
    @property
    def distribution(self) -> np.ndarray:
        ...

    @property
    def lam(self) -> float:
        ...

    def update(
        self,
        action: int,
        mixture: np.ndarray,
        f_hat: np.ndarray,
        g_hat: np.ndarray,
        constraint: float,
    ) -> "Expert":
        ...


class BcomdExpert:
    """BCOMD instance fed with the shared mixture-denominator estimates"""

    def __init__(self, state: BcomdState):
        self.state = state

    @classmethod
    def from_spec(
        cls, spec: ExpertSpec, n: int, L: int, rho: float, rng: np.random.Generator
    ) -> "BcomdExpert":
        params = BcomdParams(
            n=n, T=L, rho=rho, c_T=spec.c, eta=spec.eta, mu=spec.mu,
            gamma=spec.gamma, omega=spec.omega, mode="manual",
        )
        return cls(BcomdState(x=np.full(n, 1.0 / n), lam=0.0, t=0, params=params, rng=rng))

    @property
    def distribution(self) -> np.ndarray:
        return self.state.x

    @property
    def lam(self) -> float:
        return self.state.lam

    def update(self, action, mixture, f_hat, g_hat, constraint) -> "BcomdExpert":
        omega_hat = importance_weighted_estimate(mixture, action, self.state.params.omega)
        state, _ = apply_estimates(self.state, f_hat, g_hat, omega_hat, constraint)
        return BcomdExpert(state)


class FixedExpert:
    """Constant distribution; ignores feedback"""

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)

    @property
    def distribution(self) -> np.ndarray:
        return self.probs

    @property
    def lam(self) -> float:
        return 0.0

    def update(self, action, mixture, f_hat, g_hat, constraint) -> "FixedExpert":
        return self


@dataclass(frozen=True)
class MetaState:
    weights: np.ndarray
    experts: Tuple[Expert, ...]
    phase: PhaseSpec
    phase_round: int
    n: int
    rho: float
    rng: np.random.Generator
    t: int = 0
    plan: Optional[PhasePlan] = None

    def mixture(self) -> np.ndarray:
        return mix_distributions(self.weights, [e.distribution for e in self.experts])


def mix_distributions(weights, distributions: Sequence[np.ndarray]) -> np.ndarray:
    """sum_k w_k x^(k), accumulated in expert order"""
    mix = np.zeros(len(distributions[0]))
    for w, x in zip(weights, distributions):
        mix += w * x
    return mix


def _experts_for_phase(phase: PhaseSpec, n: int, rho: float, rng) -> Tuple[Expert, ...]:
    return tuple(BcomdExpert.from_spec(spec, n, phase.length, rho, rng) for spec in phase.experts)


def initial_meta_state(plan: PhasePlan, seed: int = 0) -> MetaState:
    rng = make_generator(seed)
    phase = plan.phases[0]
    return MetaState(
        weights=np.full(phase.K, 1.0 / phase.K),
        experts=_experts_for_phase(phase, plan.n, plan.rho, rng),
        phase=phase,
        phase_round=0,
        n=plan.n,
        rho=plan.rho,
        rng=rng,
        plan=plan,
    )


def single_phase_state(
    experts: Sequence[Expert],
    length: int,
    eta_meta: Optional[float] = None,
    gamma_meta: Optional[float] = None,
    rho: float = 1.0,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> MetaState:
    """Meta state over caller-supplied experts for one phase (no phase transitions)"""
    K = len(experts)
    if K == 0:
        raise InvalidInputError("at least one expert is required")
    constants = settings.META_CONSTANTS
    phase = PhaseSpec(
        index=1,
        start=0,
        length=length,
        K=K,
        eta_meta=constants["eta_meta"] / math.sqrt(length) if eta_meta is None else eta_meta,
        gamma_meta=(
            min(1.0 / K, constants["gamma_meta"] / length ** (1.0 / 3.0))
            if gamma_meta is None else gamma_meta
        ),
        experts=[],
    )
    return MetaState(
        weights=np.full(K, 1.0 / K),
        experts=tuple(experts),
        phase=phase,
        phase_round=0,
        n=len(experts[0].distribution),
        rho=rho,
        rng=rng if rng is not None else make_generator(seed),
    )


def _next_phase(state: MetaState) -> MetaState:
    plan = state.plan
    nxt = state.phase.index  # phases are 1-based, list is 0-based
    if nxt >= len(plan.phases):
        return state
    phase = plan.phases[nxt]
    if phase.start != state.t:
        raise AssertionError(f"phase {phase.index} starts at {phase.start}, clock is at {state.t}")
    logger.debug(f"Entering phase {phase.index} at t={state.t} (L={phase.length}, K={phase.K})")
    return replace(
        state,
        weights=np.full(phase.K, 1.0 / phase.K),
        experts=_experts_for_phase(phase, state.n, state.rho, state.rng),
        phase=phase,
        phase_round=0,
    )


def meta_step(state: MetaState, feedback_oracle: FeedbackOracle) -> Tuple[MetaState, RoundRecord]:
    """
    One round of the meta-learner: mix, sample, broadcast the shared estimates
    to every expert, reweight the experts and roll over at the phase end.
    """
    if state.phase_round >= state.phase.length:
        raise AssertionError(
            f"round {state.phase_round} is past the end of phase {state.phase.index}"
        )
    distributions = [e.distribution for e in state.experts]
    mixture = mix_distributions(state.weights, distributions)

    a = sample_index(mixture, state.rng.random())
    loss, constraint = feedback_oracle(a)
    check_feedback(a, loss, constraint, state.n)

    f_hat = importance_weighted_estimate(mixture, a, loss)
    g_hat = importance_weighted_estimate(mixture, a, constraint)
    m_tilde = np.array([expert_loss_estimate(x[a], mixture[a], loss) for x in distributions])

    # experts are independent given the shared estimates
    experts = tuple(e.update(a, mixture, f_hat, g_hat, constraint) for e in state.experts)
    weights = meta_update(state.weights, m_tilde, state.phase.eta_meta, state.phase.gamma_meta)

    next_state = replace(
        state,
        weights=weights,
        experts=experts,
        phase_round=state.phase_round + 1,
        t=state.t + 1,
    )
    record = RoundRecord(
        t=state.t,
        action=a,
        loss=float(loss),
        constraint=float(constraint),
        lam=max(e.lam for e in experts),
        probs=mixture,
        x_next=next_state.mixture(),
        phase=state.phase.index,
        meta_weights=state.weights,
    )
    if next_state.plan is not None and next_state.phase_round == next_state.phase.length:
        next_state = _next_phase(next_state)
    return next_state, record


class MbcomdPolicy:
    """Stateful wrapper used by the harness"""

    def __init__(
        self,
        n: int,
        T: int,
        rho: float = 1.0,
        seed: int = 0,
        cap: bool = False,
        stabilizer: bool = True,
        name: str = "mbcomd",
    ):
        self.plan = phase_schedule(T, n=n, rho=rho, cap=cap, stabilizer=stabilizer)
        self.state = initial_meta_state(self.plan, seed)
        self.name = name

    def step(self, oracle: FeedbackOracle) -> RoundRecord:
        self.state, record = meta_step(self.state, oracle)
        return record

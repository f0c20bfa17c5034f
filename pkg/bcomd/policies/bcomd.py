"""
Bandit-feedback primal-dual mirror descent with time-varying constraints.

Each round samples an arm from x_t, forms importance-weighted estimates of the
loss and constraint at that arm, shifts them by the stabilizer Omega, takes a
multiplicative step on x_t, projects onto the truncated simplex and moves the
dual variable by projected ascent on the observed constraint.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from bcomd.exceptions import InvalidInputError, NumericalError, ScheduleError
from bcomd.policies.base import FeedbackOracle, RoundRecord, check_feedback, make_generator
from bcomd.schemas import BcomdParams, ManualParams, RegularityMeasures
from bcomd.simplex import multiplicative_step, project_kl, sample_index

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BcomdState:
    """
    Primal distribution, dual scalar and round index of one BCOMD run.

    The generator is shared with the successor state returned by a step, so a
    state must not be stepped twice.
    """
    x: np.ndarray
    lam: float
    t: int
    params: BcomdParams
    rng: np.random.Generator


def slater_constant(n: int, rho: float) -> float:
    """M = 4((3n + 2)/rho + 1)^2"""
    return 4.0 * ((3 * n + 2) / rho + 1.0) ** 2


def dual_bound(n: int, rho: float, eta: float, mu: float, gamma: float) -> float:
    """Uniform bound on the dual iterates, also used as the stabilizer magnitude"""
    if gamma <= 0:
        raise InvalidInputError("the dual bound needs a positive truncation level")
    return (
        math.log(1.0 / gamma) / rho * (mu / eta)
        + 3.0 * n / (2.0 * rho) * eta
        + mu / (2.0 * rho)
        + 3.0 * n / rho
        + 2.0 / rho
        + 1.0
    )


def theorem1_schedule_check(params: BcomdParams) -> bool:
    """True when eta <= 1 / Omega^2 (vacuous for Omega = 0)"""
    if params.omega <= 0:
        return True
    return params.eta <= 1.0 / params.omega ** 2


def compute_parameters(
    n: int,
    T: int,
    rho: float,
    regularity: Optional[RegularityMeasures] = None,
    mode: str = "theorem1",
    manual: Optional[ManualParams] = None,
) -> BcomdParams:
    """
    Build the parameter set for a run.

    theorem1: c_T = min(sqrt(P_T), V_T^(1/3) T^(1/6)), mu = 1/(M sqrt T),
    eta = max(1, c_T)/(M sqrt T), gamma = min(1/n, T^(-1/2)) and Omega from
    dual_bound. manual: values are passed through after the invariant checks.
    """
    if T < 1 or n < 2 or not 0 < rho <= 1:
        raise InvalidInputError(f"need T >= 1, n >= 2, 0 < rho <= 1; got T={T}, n={n}, rho={rho}")

    if mode == "manual":
        if manual is None:
            raise InvalidInputError("manual mode needs eta, mu, gamma and omega")
        return _build_params(
            n=n, T=T, rho=rho, eta=manual.eta, mu=manual.mu,
            gamma=manual.gamma, omega=manual.omega, mode="manual",
        )

    if mode != "theorem1":
        raise InvalidInputError(f"unknown schedule mode: {mode}")
    if regularity is None:
        raise InvalidInputError("theorem1 mode needs the regularity measures P_T and V_T")

    c_T = min(math.sqrt(regularity.P_T), regularity.V_T ** (1.0 / 3.0) * T ** (1.0 / 6.0))
    M = slater_constant(n, rho)
    root_T = math.sqrt(T)
    mu = 1.0 / (M * root_T)
    eta = max(1.0, c_T) / (M * root_T)
    gamma = min(1.0 / n, 1.0 / root_T)
    omega = dual_bound(n, rho, eta, mu, gamma)

    params = _build_params(
        n=n, T=T, rho=rho, M=M, c_T=c_T, eta=eta, mu=mu,
        gamma=gamma, omega=omega, mode="theorem1",
    )
    if not theorem1_schedule_check(params):
        logger.error(f"Schedule violated: eta={eta} > 1/Omega^2={1.0 / omega ** 2}")
        raise ScheduleError(f"eta={eta} exceeds 1/Omega^2={1.0 / omega ** 2}")
    logger.debug(
        f"theorem1 schedule n={n} T={T} rho={rho}: c_T={c_T:.4g} M={M:.4g} "
        f"eta={eta:.4g} mu={mu:.4g} gamma={gamma:.4g} omega={omega:.4g}"
    )
    return params


def exp3_params(
    n: int, T: int, eta: Optional[float] = None, gamma: Optional[float] = None
) -> BcomdParams:
    """
    Unconstrained baseline parameters.

    eta defaults to sqrt(log n / (n T)) and gamma to the theorem1 floor min(1/n, T^(-1/2)).
    """
    if eta is None:
        eta = math.sqrt(math.log(n) / (n * T))
    if gamma is None:
        gamma = min(1.0 / n, 1.0 / math.sqrt(T))
    return _build_params(n=n, T=T, rho=1.0, eta=eta, mu=0.0, gamma=gamma, omega=0.0, mode="exp3")


def _build_params(**values) -> BcomdParams:
    try:
        return BcomdParams(**values)
    except ValueError as e:
        raise InvalidInputError(str(e)) from e


def initial_state(params: BcomdParams, seed: int = 0) -> BcomdState:
    """Uniform x_1, lambda_1 = 0"""
    return BcomdState(
        x=np.full(params.n, 1.0 / params.n),
        lam=0.0,
        t=0,
        params=params,
        rng=make_generator(seed),
    )


def importance_weighted_estimate(x, a: int, value: float) -> np.ndarray:
    """(value / x_a) e_a, unbiased for the dense value vector when a ~ x"""
    prob = float(x[a])
    if prob <= 0:
        raise NumericalError(f"probability of arm {a} is {prob}; estimator undefined")
    estimate = np.zeros(len(x))
    estimate[a] = value / prob
    return estimate


def apply_estimates(
    state: BcomdState,
    f_hat: np.ndarray,
    g_hat: np.ndarray,
    omega_hat: np.ndarray,
    constraint: float,
) -> Tuple[BcomdState, np.ndarray]:
    """
    Primal and dual update from already-formed estimates.

    Returns the successor state and the pseudo-cost vector b.
    """
    params = state.params
    if params.ignores_constraints:
        b = f_hat
        lam_next = state.lam
    else:
        b = omega_hat + f_hat + state.lam * g_hat
        lam_next = max(0.0, state.lam + params.mu * constraint)

    y = multiplicative_step(state.x, b, params.eta)
    x_next = project_kl(y, params.gamma)

    if params.mode == "theorem1" and lam_next > params.omega:
        logger.warning(f"Dual variable {lam_next} exceeds its bound {params.omega} at t={state.t}")
    return replace(state, x=x_next, lam=lam_next, t=state.t + 1), b


def bcomd_step(
    state: BcomdState,
    feedback_oracle: FeedbackOracle,
    action: Optional[int] = None,
) -> Tuple[BcomdState, RoundRecord]:
    """
    One round: sample, query the oracle once, update primal and dual.

    Passing action skips sampling (no draw is consumed).
    """
    x = state.x
    n = state.params.n
    a = sample_index(x, state.rng.random()) if action is None else action
    loss, constraint = feedback_oracle(a)
    check_feedback(a, loss, constraint, n)

    f_hat = importance_weighted_estimate(x, a, loss)
    g_hat = importance_weighted_estimate(x, a, constraint)
    omega_hat = importance_weighted_estimate(x, a, state.params.omega)

    next_state, b = apply_estimates(state, f_hat, g_hat, omega_hat, constraint)
    record = RoundRecord(
        t=state.t,
        action=a,
        loss=float(loss),
        constraint=float(constraint),
        lam=next_state.lam,
        probs=x,
        x_next=next_state.x,
        pseudo_cost=float(b[a]),
    )
    return next_state, record


def exp3_mode(state: BcomdState) -> BcomdState:
    """Freeze the dual at zero, drop the stabilizer and ignore constraints"""
    params = state.params.copy(update={"mode": "exp3", "omega": 0.0, "mu": 0.0})
    return replace(state, lam=0.0, params=params)


class BcomdPolicy:
    """Stateful wrapper used by the harness"""

    def __init__(self, params: BcomdParams, seed: int = 0, name: Optional[str] = None):
        self.params = params
        self.state = initial_state(params, seed)
        self.name = name or f"bcomd-{params.mode}"

    @classmethod
    def exp3(cls, n: int, T: int, seed: int = 0, eta: Optional[float] = None) -> "BcomdPolicy":
        return cls(exp3_params(n, T, eta=eta), seed=seed, name="exp3")

    def step(self, oracle: FeedbackOracle) -> RoundRecord:
        self.state, record = bcomd_step(self.state, oracle)
        return record

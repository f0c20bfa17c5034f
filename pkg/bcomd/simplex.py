"""
Negative-entropy geometry on the probability simplex.

KL (Bregman) divergence, the multiplicative mirror-descent step and the exact
KL projection onto the truncated simplex {x : sum(x) = 1, x_a >= gamma}.
All functions are pure.
"""
import logging
from typing import Optional

import numpy as np
from scipy.optimize import bisect
from scipy.special import rel_entr

from bcomd.config import settings
from bcomd.exceptions import InfeasibleError, InvalidInputError

logger = logging.getLogger(__name__)

# Probability vector on n arms (entries >= 0, sum 1)
ActionDistribution = np.ndarray
# Strictly positive unnormalized iterate, e.g. the pre-projection y_{t+1}
PositiveVector = np.ndarray


def _as_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or infinite entries")
    return arr


def is_distribution(x, gamma: float = 0.0, tol: Optional[float] = None) -> bool:
    """Membership test for the gamma-truncated simplex"""
    tol = settings.NORMALIZATION_TOL if tol is None else tol
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        return False
    return bool(abs(arr.sum() - 1.0) <= tol and arr.min() >= gamma)


def bregman_gradient(x) -> np.ndarray:
    """Gradient of the negative entropy, 1 + log(x)"""
    arr = _as_vector(x, "x")
    if np.any(arr <= 0):
        raise InvalidInputError("gradient of the negative entropy needs strictly positive entries")
    return 1.0 + np.log(arr)


def kl_divergence(x, y) -> float:
    """
    Generalized KL divergence sum(x log(x/y)) - sum(x) + sum(y), in nats.

    Reduces to the usual KL when both arguments are normalized. Zero entries
    are allowed in the first argument only (0 log 0 = 0).
    """
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    if x.shape != y.shape:
        raise InvalidInputError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    if np.any(y <= 0):
        raise InvalidInputError("second argument of kl_divergence must be strictly positive")
    if np.any(x < 0):
        raise InvalidInputError("first argument of kl_divergence must be nonnegative")
    return float(np.sum(rel_entr(x, y)) - x.sum() + y.sum())


def multiplicative_step(x, b, eta: float, clamp: Optional[float] = None) -> PositiveVector:
    """
    Mirror-descent step under the negative entropy: y_a = x_a * exp(-eta * b_a).

    Exponents are clipped to [-clamp, clamp] so the result stays finite and
    strictly positive; any clipping is logged.
    """
    x = _as_vector(x, "x")
    b = _as_vector(b, "b")
    if x.shape != b.shape:
        raise InvalidInputError(f"dimension mismatch: {x.shape[0]} vs {b.shape[0]}")
    if eta <= 0 or not np.isfinite(eta):
        raise InvalidInputError(f"step size must be positive and finite, got {eta}")
    if np.any(x <= 0):
        raise InvalidInputError("multiplicative step needs a strictly positive iterate")

    clamp = settings.EXPONENT_CLAMP if clamp is None else clamp
    exponent = -eta * b
    clipped = np.abs(exponent) > clamp
    if np.any(clipped):
        logger.warning(
            f"Clamping exponent at +/-{clamp} for coordinates {np.flatnonzero(clipped).tolist()}"
        )
        exponent = np.clip(exponent, -clamp, clamp)
    return x * np.exp(exponent)


def _check_projection_input(y, gamma: float):
    y = _as_vector(y, "y")
    if np.any(y < 0):
        raise InvalidInputError("projection input must be nonnegative")
    total = y.sum()
    if total <= 0:
        raise InvalidInputError("projection input is all zeros")
    if np.any(y == 0):
        raise InvalidInputError("projection input must be strictly positive")
    n = y.shape[0]
    if gamma < 0:
        raise InvalidInputError(f"truncation level must be nonnegative, got {gamma}")
    if gamma * n > 1.0 + settings.NORMALIZATION_TOL:
        raise InfeasibleError(f"truncated simplex is empty: gamma * n = {gamma * n} > 1")
    return y, total


def _threshold_sort_scan(y_norm: np.ndarray, gamma: float) -> Optional[np.ndarray]:
    # x_a = max(gamma, c * y_a): the k smallest coordinates clamp to gamma,
    # c = (1 - k gamma) / (sum of the rest), valid when c y_(k) <= gamma <= c y_(k+1)
    n = y_norm.shape[0]
    order = np.argsort(y_norm, kind="stable")
    ys = y_norm[order]
    suffix = np.cumsum(ys[::-1])[::-1]
    for k in range(n):
        c = (1.0 - k * gamma) / suffix[k]
        if c * ys[k] >= gamma and (k == 0 or c * ys[k - 1] <= gamma):
            x = np.maximum(gamma, c * y_norm)
            x[order[:k]] = gamma
            return x
    return None


def project_kl_bisection(y, gamma: float) -> ActionDistribution:
    """KL projection onto the gamma-truncated simplex by bisection on the scale c"""
    y, total = _check_projection_input(y, gamma)
    n = y.shape[0]
    if gamma * n >= 1.0:
        return np.full(n, 1.0 / n)
    y_norm = y / total

    def excess(c):
        return np.maximum(gamma, c * y_norm).sum() - 1.0

    # excess(0) = n gamma - 1 < 0 and excess(2) >= 1
    c = bisect(
        excess,
        0.0,
        2.0,
        xtol=settings.BISECTION_XTOL,
        maxiter=settings.BISECTION_MAXITER,
    )
    return np.maximum(gamma, c * y_norm)


def project_kl(y, gamma: float, method: str = "sort") -> ActionDistribution:
    """
    Exact KL projection of a positive vector onto the truncated simplex.

    Normalizes first and returns the normalized vector when it already
    respects the floor. Otherwise solves x_a = max(gamma, c * y_a) by sorting
    and scanning the clamped set; bisection on c is the fallback (or is used
    directly with method="bisection").
    """
    if method == "bisection":
        return project_kl_bisection(y, gamma)
    if method != "sort":
        raise InvalidInputError(f"unknown projection method: {method}")

    y, total = _check_projection_input(y, gamma)
    n = y.shape[0]
    if gamma * n >= 1.0:
        return np.full(n, 1.0 / n)

    y_norm = y / total
    if y_norm.min() >= gamma:
        return y_norm

    x = _threshold_sort_scan(y_norm, gamma)
    if x is None:
        logger.debug(f"Sort-scan found no threshold for n={n}, gamma={gamma}; using bisection")
        return project_kl_bisection(y, gamma)
    return x


def truncate_distribution(x, gamma: float) -> ActionDistribution:
    """
    KL projection of a distribution that may contain zeros onto the truncated
    simplex; zero coordinates end on the floor.
    """
    x = _as_vector(x, "x")
    if np.any(x < 0) or x.sum() <= 0:
        raise InvalidInputError("truncate_distribution needs a nonnegative, nonzero vector")
    n = x.shape[0]
    if gamma * n > 1.0 + settings.NORMALIZATION_TOL:
        raise InfeasibleError(f"truncated simplex is empty: gamma * n = {gamma * n} > 1")
    if gamma * n >= 1.0:
        return np.full(n, 1.0 / n)
    x_norm = x / x.sum()
    if x_norm.min() >= gamma:
        return x_norm
    projected = _threshold_sort_scan(x_norm, gamma)
    if projected is None:
        raise InvalidInputError(f"no truncation threshold found for gamma={gamma}")
    return projected


def sample_index(x, u: float) -> int:
    """Inverse-CDF sampling over the stored arm order for a uniform draw u in [0, 1)"""
    cdf = np.cumsum(x)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(idx, len(cdf) - 1)

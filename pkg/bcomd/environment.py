"""
Oblivious-adversary traces: the cyclic-shift synthetic generator, the P_T/V_T
incomparability fixtures, stationary controls and the trace file format.

File format: a header line `n T generator seed`, an optional `#`-prefixed JSON
metadata line, then T lines of n losses followed by n constraints, written
with 17 significant digits.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from bcomd.config import settings
from bcomd.exceptions import InfeasibleError, InvalidInputError
from bcomd.policies.base import FeedbackOracle, make_generator
from bcomd.schemas import FixtureSpec, TraceGenConfig

logger = logging.getLogger(__name__)


@dataclass
class Trace:
    losses: np.ndarray  # T x n, entries in [0, 1]
    constraints: np.ndarray  # T x n, entries in [-1, 1]
    generator: str = "custom"
    seed: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.losses.shape[0]

    @property
    def n(self) -> int:
        return self.losses.shape[1]

    def oracle(self, t: int) -> FeedbackOracle:
        """Bandit feedback for round t: only the queried arm is revealed"""
        f_row = self.losses[t]
        g_row = self.constraints[t]

        def reveal(a: int) -> Tuple[float, float]:
            return float(f_row[a]), float(g_row[a])

        return reveal

    def truncated(self, T: int) -> "Trace":
        if not 1 <= T <= self.T:
            raise InvalidInputError(f"cannot truncate a trace of length {self.T} to {T}")
        return Trace(
            losses=self.losses[:T].copy(),
            constraints=self.constraints[:T].copy(),
            generator=self.generator,
            seed=self.seed,
            metadata=dict(self.metadata),
        )


def validate_trace(losses: np.ndarray, constraints: np.ndarray) -> None:
    """Bounds check over every entry, reporting the first offending (t, a)"""
    if losses.ndim != 2 or losses.shape != constraints.shape:
        raise InvalidInputError(
            f"loss and constraint matrices must share a T x n shape, got {losses.shape} and {constraints.shape}"
        )
    for name, values, lo, hi in (("loss", losses, 0.0, 1.0), ("constraint", constraints, -1.0, 1.0)):
        bad = ~np.isfinite(values) | (values < lo) | (values > hi)
        if np.any(bad):
            t, a = (int(i) for i in np.argwhere(bad)[0])
            raise InvalidInputError(f"{name} out of [{lo:g},{hi:g}] at ({t},{a}): {values[t, a]}")


def make_trace(losses, constraints, generator: str = "custom", seed: int = 0, **metadata) -> Trace:
    losses = np.asarray(losses, dtype=float)
    constraints = np.asarray(constraints, dtype=float)
    validate_trace(losses, constraints)
    return Trace(losses=losses, constraints=constraints, generator=generator, seed=seed, metadata=metadata)


def slater_margin(constraints: np.ndarray) -> float:
    """min_t max_a (-g_{t,a}): the best uniform slack a pure arm achieves per round"""
    return float(np.min(np.max(-np.asarray(constraints), axis=1)))


def base_profiles(n: int, index_base: int = 1) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Noiseless loss and constraint profiles.

    Loss 1 + sin(pi a/(n-1)) is mapped affinely from [1, 2] to [0, 1];
    constraint 0.5 * 1(a <= n/1.5) - 1/4 uses arm labels starting at index_base
    and the floored threshold, which is returned alongside.
    """
    arms = np.arange(n)
    losses = np.sin(np.pi * arms / (n - 1))
    threshold = math.floor(n / 1.5)
    labels = arms + index_base
    constraints = 0.5 * (labels <= threshold) - 0.25
    return losses, constraints, threshold


def generate_shifting_trace(cfg: TraceGenConfig, seed: int = 0) -> Trace:
    """
    Base profiles cyclically shifted by cfg.shift arms every cfg.window rounds
    (at most cfg.repetitions times), plus i.i.d. Gaussian noise per entry,
    clipped into the admissible ranges.
    """
    n, T = cfg.n, cfg.horizon
    base_f, base_g, threshold = base_profiles(n, cfg.index_base)

    windows = np.arange(T) // cfg.window
    if cfg.repetitions is not None:
        windows = np.minimum(windows, cfg.repetitions)
    offsets = (windows * cfg.shift) % n
    # np.roll by k: column a holds base[(a - k) mod n]
    columns = (np.arange(n)[None, :] - offsets[:, None]) % n
    losses = base_f[columns]
    constraints = base_g[columns]

    if cfg.noise_std > 0:
        rng = make_generator(seed)
        losses = losses + rng.normal(0.0, cfg.noise_std, size=(T, n))
        constraints = constraints + rng.normal(0.0, cfg.noise_std, size=(T, n))
    losses = np.clip(losses, 0.0, 1.0)
    constraints = np.clip(constraints, -1.0, 1.0)
    validate_trace(losses, constraints)

    rho_hat = slater_margin(constraints)
    if rho_hat <= cfg.rho_target or rho_hat <= 0:
        message = f"Generated trace fails the Slater check: rho_hat={rho_hat:.6g}"
        if not cfg.allow_infeasible:
            logger.error(message)
            raise InfeasibleError(message)
        logger.warning(f"{message} (kept: allow_infeasible is set)")

    return Trace(
        losses=losses,
        constraints=constraints,
        generator="shifting",
        seed=seed,
        metadata={
            "config": cfg.dict(),
            "rho_hat": rho_hat,
            "index_base": cfg.index_base,
            "indicator_threshold": threshold,
            "loss_rescale": "[1,2]->[0,1]",
            "nominal_constraint_floor": settings.NOMINAL_CONSTRAINT_FLOOR,
        },
    )


def stationary_trace(losses, constraints, T: int) -> Trace:
    """Repeat one (f, g) slot for T rounds"""
    f = np.asarray(losses, dtype=float)
    g = np.asarray(constraints, dtype=float)
    trace = make_trace(np.tile(f, (T, 1)), np.tile(g, (T, 1)), generator="stationary")
    trace.metadata["rho_hat"] = slater_margin(trace.constraints)
    return trace


def generate_incomparability_fixture(kind: str, T: int, n: int = 3, rho: float = 0.5) -> Trace:
    """
    Alternating loss sequences separating path length from temporal variation.

    vt_small_pt_large: (0, 1/T, 1, ..., 1) on even rounds, (1/T, 0, 1, ..., 1)
    on odd rounds. vt_large_pt_small: (0, 1, ...) / (0, 1/2, ...). Every arm is
    feasible with constraint -rho.
    """
    spec = FixtureSpec(kind=kind, T=T, n=n, rho=rho)
    losses = np.ones((T, n))
    even = np.arange(T) % 2 == 0
    if kind == "vt_small_pt_large":
        if n < 3:
            raise InvalidInputError("vt_small_pt_large needs at least 3 arms")
        losses[:, 0] = np.where(even, 0.0, 1.0 / T)
        losses[:, 1] = np.where(even, 1.0 / T, 0.0)
        analytic = {"P_T": 2.0 * (T - 1), "V_T": (T - 1) / T, "P_T_order": "Theta(T)", "V_T_order": "O(1)"}
    else:
        losses[:, 0] = 0.0
        losses[:, 1] = np.where(even, 1.0, 0.5)
        analytic = {"P_T": 0.0, "V_T": (T - 1) / 2.0, "P_T_order": "O(1)", "V_T_order": "Theta(T)"}

    constraints = np.full((T, n), -spec.rho)
    return make_trace(
        losses,
        constraints,
        generator=kind,
        seed=0,
        analytic=analytic,
        rho_hat=spec.rho,
    )


def write_trace(trace: Trace, path: Union[str, Path]) -> Path:
    path = Path(path)
    digits = settings.TRACE_DIGITS
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            fh.write(f"{trace.n} {trace.T} {trace.generator} {trace.seed}\n")
            if trace.metadata:
                fh.write("# " + json.dumps(trace.metadata, sort_keys=True, default=_json_default) + "\n")
            for f_row, g_row in zip(trace.losses, trace.constraints):
                fh.write(" ".join(f"{v:.{digits}g}" for v in np.concatenate([f_row, g_row])) + "\n")
    except Exception as e:
        logger.error(f"Error writing trace to {path}: {str(e)}")
        raise
    return path


def read_trace(path: Union[str, Path]) -> Trace:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        logger.error(f"Error reading trace file {path}: {str(e)}")
        raise InvalidInputError(f"{path}: cannot read trace file: {e.strerror or e}") from e

    if not lines:
        raise InvalidInputError(f"{path}: empty trace file")
    header = lines[0].split()
    if len(header) != 4:
        raise InvalidInputError(f"{path}: header must read 'n T generator seed', got {lines[0]!r}")
    try:
        n, T, generator, seed = int(header[0]), int(header[1]), header[2], int(header[3])
    except ValueError as e:
        raise InvalidInputError(f"{path}: malformed header {lines[0]!r}") from e
    if n < 2 or T < 1:
        raise InvalidInputError(f"{path}: schema error in header: need n >= 2 and T >= 1, got n={n}, T={T}")

    metadata: Dict[str, Any] = {}
    body = lines[1:]
    if body and body[0].startswith("#"):
        try:
            metadata = json.loads(body[0][1:].strip() or "{}")
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"{path}: malformed metadata line: {e.msg}") from e
        body = body[1:]
    body = [line for line in body if line.strip()]
    if len(body) != T:
        raise InvalidInputError(f"{path}: header announces {T} rows, found {len(body)}")

    data = np.empty((T, 2 * n))
    for t, line in enumerate(body):
        fields = line.split()
        if len(fields) != 2 * n:
            raise InvalidInputError(
                f"{path}: schema error at row {t}: expected {2 * n} columns, found {len(fields)}"
            )
        for col, token in enumerate(fields):
            try:
                data[t, col] = float(token)
            except ValueError as e:
                raise InvalidInputError(f"{path}: unparsable value {token!r} at ({t},{col})") from e

    losses, constraints = data[:, :n], data[:, n:]
    validate_trace(losses, constraints)
    return Trace(losses=losses, constraints=constraints, generator=generator, seed=seed, metadata=metadata)


def trace_roundtrip(trace: Trace, path: Union[str, Path]) -> Trace:
    """Write then re-read; the matrices come back bit-exact"""
    write_trace(trace, path)
    return read_trace(path)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")

"""
Pieces shared by every policy: the feedback oracle signature, the per-round
record and the seeded generator.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Tuple

import numpy as np

from bcomd.exceptions import InvalidInputError

# arm index -> (loss, constraint); only the played arm is ever revealed
FeedbackOracle = Callable[[int], Tuple[float, float]]


@dataclass(frozen=True)
class RoundRecord:
    t: int
    action: int
    loss: float
    constraint: float
    lam: float  # dual variable after the update
    probs: np.ndarray  # distribution the action was sampled from
    x_next: np.ndarray
    pseudo_cost: float = 0.0  # stabilized pseudo-cost at the played arm
    phase: Optional[int] = None
    meta_weights: Optional[np.ndarray] = field(default=None, repr=False)


class Policy(Protocol):
    name: str

    def step(self, oracle: FeedbackOracle) -> RoundRecord:
        ...


def make_generator(seed: int) -> np.random.Generator:
    """Counter-based 64-bit generator (Philox), reproducible across platforms"""
    return np.random.Generator(np.random.Philox(seed))


def check_feedback(action: int, loss: float, constraint: float, n: int) -> None:
    if not 0 <= action < n:
        raise InvalidInputError(f"action {action} outside [0, {n})")
    if not np.isfinite(loss) or not 0.0 <= loss <= 1.0:
        raise InvalidInputError(f"loss {loss} out of [0,1] at arm {action}")
    if not np.isfinite(constraint) or not -1.0 <= constraint <= 1.0:
        raise InvalidInputError(f"constraint {constraint} out of [-1,1] at arm {action}")

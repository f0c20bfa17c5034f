"""
Exception hierarchy shared by the library and the CLI.
"""


class BcomdError(Exception):
    """Base class for every error raised by the simulator"""

    exit_code = 1


class InvalidInputError(BcomdError, ValueError):
    """Malformed input: dimensions, NaNs, out-of-range feedback, bad trace files"""


class InfeasibleError(BcomdError):
    """Empty feasible set: truncation with gamma * n > 1, infeasible slot, failed Slater check"""

    exit_code = 2


class ScheduleError(BcomdError):
    """A schedule invariant does not hold for the computed parameters"""


class NumericalError(BcomdError, ArithmeticError):
    """A quantity that must stay positive vanished (e.g. an estimator denominator)"""

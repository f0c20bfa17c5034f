# Policy package initialization
from .base import FeedbackOracle, Policy, RoundRecord, make_generator
from .bcomd import BcomdPolicy, BcomdState, bcomd_step, compute_parameters, exp3_mode, initial_state
from .meta import MbcomdPolicy, MetaState, meta_step, phase_schedule

__all__ = [
    'FeedbackOracle',
    'Policy',
    'RoundRecord',
    'make_generator',
    'BcomdPolicy',
    'BcomdState',
    'bcomd_step',
    'compute_parameters',
    'exp3_mode',
    'initial_state',
    'MbcomdPolicy',
    'MetaState',
    'meta_step',
    'phase_schedule',
]

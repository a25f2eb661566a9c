from .engine import (
    InvariantViolation,
    PreemptionRecord,
    SimEvent,
    SimulationError,
    Simulator,
    run,
    simulate,
)
from .policies import PolicyConfig, easy_pass, make_policy, order_queue

__all__ = [
    "InvariantViolation",
    "PolicyConfig",
    "PreemptionRecord",
    "SimEvent",
    "SimulationError",
    "Simulator",
    "easy_pass",
    "make_policy",
    "order_queue",
    "run",
    "simulate",
]

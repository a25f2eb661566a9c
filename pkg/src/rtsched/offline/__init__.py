"""Offline partition-sequence model: instances, MILP export, checker and exact solver."""

from .convert import from_outcomes
from .feasibility import Violation, check_feasible
from .instance import (
    JobPlan,
    OfflineInstance,
    OfflineSchedule,
    dump_instance,
    fill_slots,
    load_instance,
    mean_sd,
    objective,
    random_instance,
    tiny_instance,
)
from .model import ModelExport, build_model, count_lp_rows, export_lp, row_violations, schedule_values
from .oracle import exhaustive
from .solver import BudgetExceeded, Infeasible, Solution, min_rtj_slowdown, solve_exact, threshold_search

__all__ = [
    "BudgetExceeded",
    "Infeasible",
    "JobPlan",
    "ModelExport",
    "OfflineInstance",
    "OfflineSchedule",
    "Solution",
    "Violation",
    "build_model",
    "check_feasible",
    "count_lp_rows",
    "dump_instance",
    "exhaustive",
    "export_lp",
    "fill_slots",
    "from_outcomes",
    "load_instance",
    "mean_sd",
    "min_rtj_slowdown",
    "objective",
    "random_instance",
    "row_violations",
    "schedule_values",
    "solve_exact",
    "threshold_search",
    "tiny_instance",
]

"""Capacity optimisation of power-feed-limited repeatered submarine links."""

__version__ = "0.1.0"

from .capacity import (  # noqa: E402
    CapacityReport,
    FeedSpec,
    LinkSpec,
    PowerAllocation,
    capacity_gradient,
    pump_power_from_budget,
    smoothed_capacity,
)
from .edf import EdfSpec, load_edf_table, semi_analytical_gain, solve_scd_exact  # noqa: E402
from .gn import FiberSpec, NonlinearTensor, build_tensor, nonlinear_noise  # noqa: E402
from .optimize import NewtonConfig, SwarmConfig, optimize_allocation  # noqa: E402

__all__ = [
    "CapacityReport",
    "EdfSpec",
    "FeedSpec",
    "FiberSpec",
    "LinkSpec",
    "NewtonConfig",
    "NonlinearTensor",
    "PowerAllocation",
    "SwarmConfig",
    "build_tensor",
    "capacity_gradient",
    "load_edf_table",
    "nonlinear_noise",
    "optimize_allocation",
    "pump_power_from_budget",
    "semi_analytical_gain",
    "smoothed_capacity",
    "solve_scd_exact",
]

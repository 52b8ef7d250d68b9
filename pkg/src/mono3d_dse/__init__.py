"""Temperature-aware design-space exploration for monolithic 3D systolic-array accelerators."""

from .annealer import AnnealerConfig, DesignSpace, Problem, exhaustive, optimize, optimize_with_reference
from .evaluator import Constraints, EvalResult, Evaluator, evaluate
from .perf import DesignPoint, network_perf
from .power import Calibration, load_calibration
from .thermal import ThermalStack, load_stack, solve_steady
from .workload import LayerSpec, NetworkSpec, load_network

__all__ = [
    "AnnealerConfig", "Calibration", "Constraints", "DesignPoint", "DesignSpace", "EvalResult", "Evaluator",
    "LayerSpec", "NetworkSpec", "Problem", "ThermalStack", "evaluate", "exhaustive", "load_calibration",
    "load_network", "load_stack", "network_perf", "optimize", "optimize_with_reference", "solve_steady",
]

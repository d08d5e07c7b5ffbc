"""Exact MILP encoding of ReLU networks and distance-to-threshold verification."""
from .bnb import BnBResult, Certificate, branch_and_bound
from .bounds import NeuronBounds, linear_bounds, propagate_bounds
from .model import MilpModel, Threshold, forward_layers, unit_layers
from .simplex import LP, LPResult, solve_lp
from .verify import check_forward_consistency, verify_corner, verify_point

__all__ = [
    "BnBResult", "Certificate", "branch_and_bound", "NeuronBounds", "linear_bounds",
    "propagate_bounds", "MilpModel", "Threshold", "forward_layers", "unit_layers", "LP",
    "LPResult", "solve_lp", "check_forward_consistency", "verify_corner", "verify_point",
]

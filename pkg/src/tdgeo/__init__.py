"""Expected TD(0) under nonlinear function approximation: geometry, flows and claim checks."""

from .errors import TDGeoError
from .mrp import MarkovRewardProcess, TDGeometry, k_step_matrix, load_mrp, td_matrix
from .dynamics import IntegratorConfig, Status, Trajectory, integrate, td_vector_field

__version__ = "0.1.0"

__all__ = [
    "TDGeoError", "MarkovRewardProcess", "TDGeometry", "k_step_matrix", "load_mrp", "td_matrix",
    "IntegratorConfig", "Status", "Trajectory", "integrate", "td_vector_field",
]

"""Discrete multi-marginal optimal transport with structural condition checks."""

__version__ = "0.1.0"

from .costs import (  # noqa: E402
    BilinearCost,
    CallbackCost,
    ConcaveOfSum,
    CostModel,
    GPlusQuadratic,
    HedonicCost,
    bilinear_normal_form,
    builtin_cost,
    cost_from_dict,
)
from .geometry import DiscreteMarginal, DomainBox, ProductConfiguration  # noqa: E402
from .solver import Coupling, Instance, make_instance, solve_entropic, solve_lp  # noqa: E402

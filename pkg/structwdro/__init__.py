from .core.distributions import (
    DiscreteDistribution,
    TransportCost,
    make_distribution,
    wasserstein_exact,
)
from .core.errors import StructWDROError
from .core.losses import ParametricPolyhedralLoss, PolyhedralLoss
from .core.oracles import reference_value, semi_infinite_dual
from .core.program import (
    UQInstance,
    build_multitransport,
    build_outer_dro,
    build_relaxation,
    build_unstructured,
    solve_program,
    sweep_outer_dro,
    sweep_relaxation,
)
from .core.serialization import read_distribution, read_instance, write_result
from .__version__ import get_version

__version__ = get_version()

__all__ = [
    "DiscreteDistribution",
    "TransportCost",
    "make_distribution",
    "wasserstein_exact",
    "StructWDROError",
    "PolyhedralLoss",
    "ParametricPolyhedralLoss",
    "reference_value",
    "semi_infinite_dual",
    "UQInstance",
    "build_relaxation",
    "build_unstructured",
    "build_multitransport",
    "build_outer_dro",
    "solve_program",
    "sweep_relaxation",
    "sweep_outer_dro",
    "read_instance",
    "read_distribution",
    "write_result",
    "__version__",
]

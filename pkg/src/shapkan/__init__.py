"""Spline-edge networks with Shapley-value node attribution and pruning."""

__version__ = "0.1.0"

from .attribution import (
    AttributionReport,
    PredictionGame,
    adaptive_shapley,
    antithetic_shapley,
    exact_shapley,
    permutation_shapley,
    value,
    vanilla_scores,
)
from .datasets import SampleSpec, SyntheticTask, TASKS, generate, read_csv, write_csv
from .estimator import KanRegressor
from .network import (
    ActivationCache,
    CoalitionMask,
    KanLayer,
    KanNetwork,
    forward,
    forward_from,
    forward_masked,
    load_model,
    node_l1_magnitudes,
    save_model,
)
from .pruning import (
    PruneCriterion,
    PrunePlan,
    SamplingConfig,
    prune_layer,
    select_nodes,
    shapkan_prune,
    vanilla_prune,
)
from .splines import SplineGrid, basis_derivatives, basis_values, make_grid
from .symbolic import (
    DEFAULT_LIBRARY,
    SymbolicFit,
    SymbolicModel,
    bessel_j0,
    fit_edge,
    snap_network,
)
from .training import (
    DivergenceError,
    LossBreakdown,
    TrainConfig,
    gradients,
    init_network,
    loss,
    train,
)

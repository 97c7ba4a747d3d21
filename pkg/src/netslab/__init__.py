"""Network-structured Bayesian selection of main effects and gene-gene interactions."""

from .design import ColumnRegistry, Dataset, ExpandedDesign, build_registry, dedup_selection, load_dataset
from .errors import ContractError, InputError, NumericalError
from .graph import (
    GeneNetwork,
    PenaltyGraph,
    build_interaction_adjacency,
    build_main_adjacency,
    build_penalty_graph,
    closed_neighborhood,
    interaction_similarity,
    read_networks,
)
from .tuning import bic_score, tune_s2
from .vbem import (
    FitOptions,
    Hyperparameters,
    SelectionResult,
    StructuredModel,
    VariationalState,
    compute_elbo,
    fit,
    fit_model,
    select,
)

__version__ = "0.1.0"

__all__ = [
    "ColumnRegistry", "Dataset", "ExpandedDesign", "build_registry", "dedup_selection", "load_dataset",
    "ContractError", "InputError", "NumericalError",
    "GeneNetwork", "PenaltyGraph", "build_interaction_adjacency", "build_main_adjacency",
    "build_penalty_graph", "closed_neighborhood", "interaction_similarity", "read_networks",
    "bic_score", "tune_s2",
    "FitOptions", "Hyperparameters", "SelectionResult", "StructuredModel", "VariationalState",
    "compute_elbo", "fit", "fit_model", "select",
]

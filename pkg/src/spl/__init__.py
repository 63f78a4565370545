"""Semantic probabilistic layers: constraint compilation, tractable circuit
inference and constraint-consistent structured prediction in numpy."""

from .circuit import (
    MARGINALIZED,
    Circuit,
    CircuitBuilder,
    Kind,
    backward,
    dumps,
    evaluate,
    loads,
    log_evaluate,
    support_count,
    support_set,
    validate_structure,
)
from .compiler import CnfFormula, ConstraintCircuit, compile_cnf, conjoin, disjoin, from_models, parse_dimacs
from .inference import (
    check_compatibility,
    log_likelihood,
    map_state,
    partition,
    product,
    semantic_loss,
)
from .overparam import OverparamConfig, mixture_multiply, overparameterize, replicate
from .pc import factorized_mixture, structured_pc
from .vtree import Vtree, build_vtree, parse_vtree

__version__ = "0.1.0"

__all__ = [
    "MARGINALIZED",
    "Circuit",
    "CircuitBuilder",
    "Kind",
    "backward",
    "dumps",
    "evaluate",
    "loads",
    "log_evaluate",
    "support_count",
    "support_set",
    "validate_structure",
    "CnfFormula",
    "ConstraintCircuit",
    "compile_cnf",
    "conjoin",
    "disjoin",
    "from_models",
    "parse_dimacs",
    "check_compatibility",
    "log_likelihood",
    "map_state",
    "partition",
    "product",
    "semantic_loss",
    "OverparamConfig",
    "mixture_multiply",
    "overparameterize",
    "replicate",
    "factorized_mixture",
    "structured_pc",
    "Vtree",
    "build_vtree",
    "parse_vtree",
]

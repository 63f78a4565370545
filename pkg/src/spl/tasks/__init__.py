"""Benchmark tasks: constraints, data generators and metrics."""

from .data import Dataset, Task, dumps_dataset, load_dataset, loads_dataset, save_dataset
from .grid import Grid, build_path_constraint, generate_path_dataset, is_simple_path, path_task, simple_paths
from .hierarchy import (
    build_hierarchy_constraint,
    chain_edges,
    generate_hierarchy_dataset,
    hierarchy_task,
    parse_hmc_arff,
    random_tree_edges,
)
from .metrics import Metrics, evaluate_metrics
from .registry import TASKS, make_task
from .permutation import (
    build_permutation_constraint,
    generate_preference_dataset,
    matrix_to_ranking,
    parse_soc,
    preference_dataset_from_soc,
    preference_task,
    ranking_to_matrix,
)

__all__ = [
    "TASKS",
    "make_task",
    "Dataset",
    "Task",
    "dumps_dataset",
    "load_dataset",
    "loads_dataset",
    "save_dataset",
    "Grid",
    "build_path_constraint",
    "generate_path_dataset",
    "is_simple_path",
    "path_task",
    "simple_paths",
    "build_hierarchy_constraint",
    "chain_edges",
    "generate_hierarchy_dataset",
    "hierarchy_task",
    "parse_hmc_arff",
    "random_tree_edges",
    "Metrics",
    "evaluate_metrics",
    "build_permutation_constraint",
    "generate_preference_dataset",
    "matrix_to_ranking",
    "parse_soc",
    "preference_dataset_from_soc",
    "preference_task",
    "ranking_to_matrix",
]

"""Named tasks with their default sizes, for the command line and the benchmarks."""

from __future__ import annotations

import numpy as np

from .data import Dataset, Task
from .grid import Grid, generate_path_dataset, path_task
from .hierarchy import chain_edges, generate_hierarchy_dataset, hierarchy_task, random_tree_edges
from .permutation import generate_preference_dataset, preference_dataset_from_soc, preference_task

TASKS = ("simple-path", "preference", "hmlc")
DEFAULT_COUNT = {"simple-path": 1600, "preference": 1000, "hmlc": 1000}


def make_task(
    name: str,
    seed: int = 0,
    count: int | None = None,
    dataset: Dataset | None = None,
    generate: bool = True,
    rows: int = 4,
    cols: int = 4,
    labels: int = 10,
    hierarchy: str = "tree",
    soc_text: str | None = None,
    info: dict | None = None,
) -> Task:
    """Build a task's constraint and (unless ``dataset`` is given) its data.

    ``info`` (as stored in a checkpoint) overrides the size arguments so a
    saved model can be re-attached to the same constraint.
    """
    info = dict(info or {})
    if count is None:
        count = info.get("count", DEFAULT_COUNT.get(name, 1000))
    if name == "simple-path":
        grid = Grid(info.get("rows", rows), info.get("cols", cols))
        task = path_task(grid)
        if dataset is None and generate:
            dataset = generate_path_dataset(grid, count, seed=seed)
    elif name == "preference":
        task = preference_task(info.get("n", 4))
        if dataset is None and generate:
            if soc_text is not None:
                dataset = preference_dataset_from_soc(soc_text, seed=seed)
            else:
                dataset = generate_preference_dataset(count, seed=seed)
    elif name == "hmlc":
        if "edges" in info:
            edges = [tuple(e) for e in info["edges"]]
            labels = info["num_labels"]
        elif hierarchy == "chain":
            edges = chain_edges(labels)
        elif hierarchy == "tree":
            edges = random_tree_edges(labels, np.random.default_rng(seed))
        else:
            raise ValueError(f"unknown hierarchy shape {hierarchy!r}")
        task = hierarchy_task(edges, labels)
        task.info["num_labels"] = labels
        if dataset is None and generate:
            dataset = generate_hierarchy_dataset(edges, labels, count, seed=seed)
    else:
        raise ValueError(f"unknown task {name!r}; choose from {', '.join(TASKS)}")
    task.info["seed"] = seed
    task.info["count"] = count
    task.dataset = dataset
    return task

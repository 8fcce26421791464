"""Reforestation: swap a ratio of source trees for freshly grown target trees.

The replaced slots are drawn uniformly without replacement, and a slot keeps
its training seed (cfg.seed + slot index), so a full replacement is literally
a forest trained from scratch on the target samples. Averaging over the mixed
ensemble realizes the source/target posterior blend; no per-tree weighting is
needed.
"""
from __future__ import annotations

import math

import numpy as np

from .data import Dataset
from .errors import InvalidArgumentError
from .forest import Forest, ForestConfig, grow_tree
from .reshape import check_adaptation_inputs


def tree_adapt(source: Forest, S_ta: Dataset, ratio: float,
               cfg: ForestConfig) -> Forest:
    check_adaptation_inputs(source, S_ta)
    if not 0.0 < ratio <= 1.0:
        raise InvalidArgumentError("replacement ratio must be in (0, 1]")
    T = len(source.trees)
    n_new = math.floor(ratio * T + 0.5)     # round half up
    if n_new < 1:
        raise InvalidArgumentError(
            f"ratio {ratio} replaces no tree out of {T}; raise it or grow the forest")
    slots = np.random.default_rng(cfg.seed).choice(T, size=n_new, replace=False)
    trees = list(source.trees)
    origins = ["source"] * T
    for slot in sorted(int(s) for s in slots):
        trees[slot] = grow_tree(S_ta, cfg, cfg.seed + slot)
        origins[slot] = "target"
    return Forest(trees, cfg, provenance="tree-adapt",
                  params={"C": float(ratio)}, tree_origins=origins)

"""Shared training utilities: stratified partitions."""
from __future__ import annotations

import numpy as np


def seeded_rng(seed, *tags) -> np.random.Generator:
    """Generator keyed by ``seed`` (int or nested sequence of ints) plus integer tags."""
    flat = []

    def walk(v):
        if isinstance(v, (list, tuple, np.ndarray)):
            for u in v:
                walk(u)
        else:
            flat.append(int(v))

    walk(seed)
    walk(tags)
    return np.random.default_rng(flat)


def stratified_kfold(y, k: int, rng) -> list:
    """Assign every row to one of ``k`` folds, class by class.

    Rows of each class are shuffled with ``rng`` and dealt round-robin, with
    the dealing offset carried over between classes so fold sizes stay within
    one row of each other. Returns a list of ``k`` sorted index arrays.
    """
    y = np.asarray(y)
    if k < 2:
        raise ValueError("need at least two folds")
    classes, counts = np.unique(y, return_counts=True)
    if counts.min() < k:
        raise ValueError(f"k={k} exceeds the smallest class count ({counts.min()})")
    folds = [[] for _ in range(k)]
    offset = 0
    for c in classes:
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.size)]
        for j, i in enumerate(idx):
            folds[(offset + j) % k].append(int(i))
        offset = (offset + idx.size) % k
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def stratified_split(y, fraction: float, rng):
    """Hold out ``round(fraction * n_c)`` rows of each class (at least one when n_c > 1)."""
    y = np.asarray(y)
    held = []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.size)]
        n_out = int(round(fraction * idx.size))
        if idx.size > 1:
            n_out = min(max(n_out, 1), idx.size - 1)
        else:
            n_out = 0
        held.extend(idx[:n_out].tolist())
    held = np.array(sorted(held), dtype=np.int64)
    return np.setdiff1d(np.arange(y.size), held), held


def stratified_splits(y, n_splits: int, fraction: float, seed) -> list:
    """``n_splits`` independent stratified train/validation splits."""
    return [stratified_split(y, fraction, seeded_rng(seed, 11, s))
            for s in range(n_splits)]

"""Level-wise tree search over the regularization path.

Collects one model per achievable group cardinality r by exploring lambda
values arranged as a dyadic midpoint grid: level j holds ``2**(j-1) * b``
cell midpoints of the (log- or linear-spaced) lambda range, so the two
children lying strictly between consecutive parents refine exactly the gap
between them.  Children are explored only where the parents' cardinalities
differ by more than one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hsdata import DataMatrix
from .spca import (
    AlternationConfig,
    SparseBasis,
    fit,
    group_cardinality,
    lambda_max,
    pca,
    penalty_for,
)

__all__ = ["ModelRecord", "TreeConfig", "TreeSearchResult", "tree_search", "model_for"]


@dataclass(frozen=True)
class ModelRecord:
    basis: SparseBasis
    cardinality: int
    lam: float
    node: tuple  # (level, index), both 1-based for reporting


@dataclass(frozen=True)
class TreeConfig:
    depth: int = 5
    root_count: int = 4
    lambda_min: float | None = None
    lambda_max: float | None = None
    spacing: str = "log"
    fit_config: AlternationConfig = field(default_factory=AlternationConfig)

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.root_count < 2:
            raise ValueError("root_count must be >= 2")
        if self.spacing not in ("log", "linear"):
            raise ValueError("spacing must be 'log' or 'linear'")
        if (self.lambda_min is not None and self.lambda_max is not None
                and not self.lambda_min < self.lambda_max):
            raise ValueError("lambda_min must be smaller than lambda_max")


@dataclass(frozen=True)
class TreeSearchResult:
    models: dict                 # r -> ModelRecord
    levels: list                 # per-level list of node dicts
    fitted_count: int
    missing: list                # cardinalities in 1..g with no record
    lambda_range: tuple

    def table(self) -> list:
        return [row for level in self.levels for row in level]


def _level_lambdas(lo: float, hi: float, spacing: str, level: int, b: int) -> np.ndarray:
    """Cell midpoints of [hi -> lo] at dyadic resolution 2**(level-1) * b."""
    m = (2 ** (level - 1)) * b
    t = (np.arange(m) + 0.5) / m
    if spacing == "log":
        return np.exp(np.log(hi) + t * (np.log(lo) - np.log(hi)))
    return hi + t * (lo - hi)


def tree_search(X: DataMatrix, algorithm: str,
                config: TreeConfig = TreeConfig()) -> TreeSearchResult:
    """Explore lambda nodes level by level and collect models per cardinality.

    Recording rule on cardinality collisions: the record with the smaller
    lambda wins, across all levels.  A node whose model reaches the full
    cardinality g deactivates the remaining (smaller-lambda) nodes of its
    level.  The search stops as soon as every cardinality in 1..g has a
    record, or when the configured depth is exhausted; missing cardinalities
    are reported, never fabricated.
    """
    g = X.groups.num_groups
    penalty = penalty_for(algorithm, X.groups,
                          exact_l0=config.fit_config.spca_exact_l0)
    k = config.fit_config.k if config.fit_config.k is not None else X.p
    hi = config.lambda_max
    if hi is None:
        hi = lambda_max(X, pca(X).V[:, :k], penalty)
        if hi <= 0:
            raise ValueError("lambda_max of the data is zero; nothing to search")
    lo = config.lambda_min if config.lambda_min is not None else 1e-4 * hi
    if not lo < hi:
        raise ValueError(f"lambda endpoints misordered: [{lo}, {hi}]")

    models: dict = {}
    levels: list = []
    fitted = 0
    wanted = set(range(1, g + 1))

    cards = None      # cardinality per node of the previous level
    active = [True] * config.root_count
    done = False
    for level in range(1, config.depth + 1):
        lams = _level_lambdas(lo, hi, config.spacing, level, config.root_count)
        m = lams.size
        if cards is not None:
            parent_cards = cards
            cards = [parent_cards[i // 2] for i in range(m)]
        else:
            cards = [None] * m
        rows = []
        deactivate_rest = False
        for i in range(m):
            lam = float(lams[i])
            if done or deactivate_rest or not active[i]:
                rows.append({"level": level, "index": i + 1, "lambda": lam,
                             "cardinality": cards[i], "fitted": False})
                continue
            basis = fit(X, algorithm, lam, config.fit_config)
            fitted += 1
            r = group_cardinality(basis.B, X.groups)
            cards[i] = r
            rows.append({"level": level, "index": i + 1, "lambda": lam,
                         "cardinality": r, "fitted": True})
            if r > 0 and (r not in models or lam < models[r].lam):
                models[r] = ModelRecord(basis=basis, cardinality=r, lam=lam,
                                        node=(level, i + 1))
            if r >= g:
                deactivate_rest = True
            if wanted.issubset(models.keys()):
                done = True
        levels.append(rows)
        if done:
            break
        if level == config.depth:
            break
        active = [False] * (2 * m)
        for i in range(m - 1):
            a, b_ = cards[i], cards[i + 1]
            if a is None or b_ is None:
                continue
            if abs(b_ - a) > 1:
                active[2 * i + 1] = True
                active[2 * i + 2] = True
        # boundary children refine toward the virtual endpoints: above the
        # first node every model has r = 0, below the last r = g, so explore
        # outward whenever cardinalities are still missing on that side
        if cards[0] is not None and cards[0] > 1:
            active[0] = True
        if cards[m - 1] is not None and cards[m - 1] < g:
            active[2 * m - 1] = True

    missing = sorted(wanted - set(models.keys()))
    return TreeSearchResult(models=models, levels=levels, fitted_count=fitted,
                            missing=missing, lambda_range=(lo, hi))


def model_for(models: dict, r: int) -> tuple:
    """The record for cardinality r, or the nearest one with an inexact flag.

    Ties between equally distant cardinalities break toward the smaller r.
    Returns ``(record, exact)``.
    """
    if not models:
        raise ValueError("no models were recorded")
    if r in models:
        return models[r], True
    best = min(models.keys(), key=lambda c: (abs(c - r), c))
    return models[best], False

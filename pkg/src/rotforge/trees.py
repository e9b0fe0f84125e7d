"""Base learners: a C4.5-style gain-ratio tree and a random-subspace tree.

Both trees are grown top-down on numeric attributes with binary
``x <= threshold`` splits (thresholds at midpoints of adjacent distinct
values, ties routed left). The C45 kind evaluates every attribute and
selects by gain ratio subject to the classic mean-gain guard; the
RandomTree kind draws a fresh random attribute subset at each node and
selects by raw information gain. Neither tree prunes: growth stops on
purity, on nodes smaller than 2 * min_cases, or when no admissible split
remains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .data import Dataset

_EPS_GAIN = 1e-12


@dataclass(frozen=True)
class Leaf:
    distribution: np.ndarray  # (c,) class probabilities, sums to 1
    support: int

    def __post_init__(self):
        dist = np.asarray(self.distribution, dtype=np.float64)
        object.__setattr__(self, "distribution", dist)


@dataclass(frozen=True)
class Internal:
    attribute: int
    threshold: float
    left: "Leaf | Internal"
    right: "Leaf | Internal"


TreeNode = Leaf | Internal


@dataclass(frozen=True)
class TreeConfig:
    kind: str = "C45"  # "C45" or "RandomTree"
    min_cases: int = 2
    random_subspace_size: int | None = None  # RandomTree only; default ceil(sqrt(m))
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("C45", "RandomTree"):
            raise ValueError(f"unknown tree kind {self.kind!r}")
        if self.min_cases < 1:
            raise ValueError("min_cases must be >= 1")


def entropy(counts) -> float:
    """Shannon entropy in bits of a non-negative count vector."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("entropy of an all-zero count vector is undefined")
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def _entropy_rows(counts: np.ndarray) -> np.ndarray:
    """Entropy (bits) of each row of a (k, c) count matrix."""
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(totals > 0, counts / totals, 0.0)
        logp = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logp).sum(axis=1)


def _column_candidates(values: np.ndarray, labels: np.ndarray, c: int,
                       min_child: int = 1):
    """All admissible midpoint splits of one numeric column.

    Returns (thresholds, gains, split_infos), each a 1-d array over the
    candidate boundaries (adjacent distinct sorted values with at least
    min_child cases on each side), or None when there is no candidate.
    """
    n = len(values)
    order = np.argsort(values, kind="stable")
    v = values[order]
    y = labels[order]
    boundary = np.nonzero(v[:-1] < v[1:])[0]  # split after position i
    if min_child > 1:
        boundary = boundary[(boundary + 1 >= min_child) & (n - boundary - 1 >= min_child)]
    if boundary.size == 0:
        return None
    onehot = np.zeros((n, c))
    onehot[np.arange(n), y] = 1.0
    cum = np.cumsum(onehot, axis=0)
    total = cum[-1]
    left = cum[boundary]
    right = total - left
    nl = boundary + 1.0
    nr = n - nl
    h_parent = _entropy_rows(total[None, :])[0]
    gains = h_parent - (nl / n) * _entropy_rows(left) - (nr / n) * _entropy_rows(right)
    split_infos = _entropy_rows(np.column_stack([nl, nr]))
    thresholds = (v[boundary] + v[boundary + 1]) / 2.0
    return thresholds, gains, split_infos


def best_numeric_split(values, labels, criterion: str = "gain", n_classes: int | None = None):
    """Best binary split of one numeric attribute, or None.

    Evaluates every midpoint between adjacent distinct sorted values as
    ``x <= t``. With criterion "gain" the information gain is maximised;
    with "gain_ratio" the gain/split-info ratio is maximised over the
    candidates whose raw gain is at least the mean gain of all
    positive-gain candidates. Returns (threshold, score); None when all
    values are identical or no candidate has positive gain. Equal scores
    break toward the lowest threshold.
    """
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(values) != len(labels) or len(values) < 2:
        raise ValueError("values and labels must have equal length >= 2")
    c = n_classes if n_classes is not None else int(labels.max()) + 1
    cands = _column_candidates(values, labels, c)
    if cands is None:
        return None
    thresholds, gains, split_infos = cands
    positive = gains > _EPS_GAIN
    if not positive.any():
        return None
    if criterion == "gain":
        best = _tolerant_argmax(gains, thresholds)
        return float(thresholds[best]), float(gains[best])
    if criterion == "gain_ratio":
        mean_gain = gains[positive].mean()
        eligible = positive & (gains >= mean_gain - _EPS_GAIN)
        ratios = np.where(eligible & (split_infos > 0), gains / np.where(split_infos > 0, split_infos, 1.0), -np.inf)
        if not np.isfinite(ratios.max()):
            return None
        best = _tolerant_argmax(ratios, thresholds)
        return float(thresholds[best]), float(ratios[best])
    raise ValueError(f"unknown criterion {criterion!r}")


def _tolerant_argmax(scores: np.ndarray, thresholds: np.ndarray) -> int:
    """Index of the max score; near-ties (within 1e-12) break toward the
    lowest threshold so float noise cannot override the tie rule."""
    tied = np.nonzero(scores >= scores.max() - _EPS_GAIN)[0]
    return int(tied[np.argmin(thresholds[tied])])


def _leaf(y: np.ndarray, c: int) -> Leaf:
    counts = np.bincount(y, minlength=c).astype(np.float64)
    return Leaf(distribution=counts / counts.sum(), support=len(y))


def _choose_split(X: np.ndarray, y: np.ndarray, c: int, attrs: np.ndarray,
                  kind: str, min_cases: int):
    """Pick (attribute, threshold) for a node, or None.

    C45: per attribute the gain-maximising candidate; across attributes
    the mean-gain guard is applied and the gain-ratio winner is taken.
    RandomTree: plain maximum gain across the sampled attributes.
    Ties break on lowest attribute index then lowest threshold.
    """
    per_attr = []  # (attr, threshold, gain, split_info)
    for a in attrs:
        cands = _column_candidates(X[:, a], y, c, min_child=min_cases)
        if cands is None:
            continue
        thresholds, gains, split_infos = cands
        best = _tolerant_argmax(gains, thresholds)
        if gains[best] > _EPS_GAIN:
            per_attr.append((int(a), float(thresholds[best]),
                             float(gains[best]), float(split_infos[best])))
    if not per_attr:
        return None

    def pick(candidates, score):
        top = max(score(t) for t in candidates)
        tied = [t for t in candidates if score(t) >= top - _EPS_GAIN]
        best = min(tied, key=lambda t: (t[0], t[1]))
        return best[0], best[1]

    if kind == "RandomTree":
        return pick(per_attr, lambda t: t[2])
    mean_gain = sum(t[2] for t in per_attr) / len(per_attr)
    eligible = [t for t in per_attr if t[2] >= mean_gain - _EPS_GAIN and t[3] > 0]
    if not eligible:
        return None
    return pick(eligible, lambda t: t[2] / t[3])


def _grow(X: np.ndarray, y: np.ndarray, c: int, config: TreeConfig,
          gen: np.random.Generator) -> TreeNode:
    n, m = X.shape
    counts = np.bincount(y, minlength=c)
    if n < 2 * config.min_cases or (counts > 0).sum() <= 1:
        return _leaf(y, c)
    if config.kind == "RandomTree":
        k = config.random_subspace_size or math.ceil(math.sqrt(m))
        k = max(1, min(k, m))
        attrs = np.sort(gen.choice(m, size=k, replace=False))
    else:
        attrs = np.arange(m)
    split = _choose_split(X, y, c, attrs, config.kind, config.min_cases)
    if split is None:
        return _leaf(y, c)
    attr, threshold = split
    go_left = X[:, attr] <= threshold
    left = _grow(X[go_left], y[go_left], c, config, gen)
    right = _grow(X[~go_left], y[~go_left], c, config, gen)
    return Internal(attribute=attr, threshold=threshold, left=left, right=right)


def build_tree(train: Dataset, config: TreeConfig) -> TreeNode:
    return build_tree_arrays(train.values, train.labels, train.n_classes, config)


def build_tree_arrays(X: np.ndarray, y: np.ndarray, c: int, config: TreeConfig) -> TreeNode:
    gen = _rng.stream(config.seed)
    return _grow(np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.int64), c, config, gen)


def tree_predict(tree: TreeNode, instance) -> np.ndarray:
    x = np.asarray(instance, dtype=np.float64)
    node = tree
    while isinstance(node, Internal):
        node = node.left if x[node.attribute] <= node.threshold else node.right
    return node.distribution


def tree_predict_batch(tree: TreeNode, X: np.ndarray) -> np.ndarray:
    """Leaf distributions for every row of X, shape (n, c)."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if isinstance(tree, Leaf):
        return np.tile(tree.distribution, (n, 1))
    out = None
    stack = [(tree, np.arange(n))]
    while stack:
        node, idx = stack.pop()
        if isinstance(node, Leaf):
            if out is None:
                out = np.empty((n, len(node.distribution)))
            out[idx] = node.distribution
            continue
        mask = X[idx, node.attribute] <= node.threshold
        stack.append((node.left, idx[mask]))
        stack.append((node.right, idx[~mask]))
    return out


def tree_depth(tree: TreeNode) -> int:
    if isinstance(tree, Leaf):
        return 0
    return 1 + max(tree_depth(tree.left), tree_depth(tree.right))


def count_nodes(tree: TreeNode) -> int:
    if isinstance(tree, Leaf):
        return 1
    return 1 + count_nodes(tree.left) + count_nodes(tree.right)


def tree_to_jsonable(tree: TreeNode) -> list:
    """Preorder node list; floats survive a JSON round trip exactly."""
    nodes: list[dict] = []

    def visit(node: TreeNode) -> int:
        my_id = len(nodes)
        if isinstance(node, Leaf):
            nodes.append({"leaf": True,
                          "distribution": [float(p) for p in node.distribution],
                          "support": node.support})
        else:
            nodes.append({"leaf": False, "attribute": node.attribute,
                          "threshold": node.threshold, "left": -1, "right": -1})
            nodes[my_id]["left"] = visit(node.left)
            nodes[my_id]["right"] = visit(node.right)
        return my_id

    visit(tree)
    return nodes


def tree_from_jsonable(nodes: list) -> TreeNode:
    def build(i: int) -> TreeNode:
        spec = nodes[i]
        if spec["leaf"]:
            return Leaf(distribution=np.array(spec["distribution"]), support=spec["support"])
        return Internal(attribute=spec["attribute"], threshold=spec["threshold"],
                        left=build(spec["left"]), right=build(spec["right"]))

    return build(0)

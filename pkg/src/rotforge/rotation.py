"""Per-tree sparse PCA transforms.

Each tree in a rotation ensemble gets its own block transform: the
attribute set is shuffled and chunked into groups of size f, a PCA is
fitted per group on a class/case subsample, and the fitted projections
are applied to every case. Groups are small (f defaults to 3, at most 12
under the tuning grid), so the eigen-decomposition uses a cyclic Jacobi
sweep on the group covariance rather than a general-purpose solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .data import Dataset

_SIGN_TOL = 1e-12
_MAX_CLASS_REDRAWS = 50


@dataclass(frozen=True)
class RotationConfig:
    f: int = 3                      # attributes per group
    p: float = 0.5                  # case sampling proportion
    class_inclusion_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.f < 1:
            raise ValueError("f must be >= 1")
        if not (0.0 < self.p <= 1.0):
            raise ValueError("p must lie in (0, 1]")


@dataclass(frozen=True)
class FeatureGroup:
    attribute_indices: tuple[int, ...]
    means: np.ndarray       # (f_j,)
    projection: np.ndarray  # (f_j, f_j), rows are principal components


@dataclass(frozen=True)
class RotationSet:
    groups: tuple[FeatureGroup, ...]
    source_attributes: tuple[int, ...]


def jacobi_eigensystem(A: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigenvalues/vectors of a small symmetric matrix by cyclic Jacobi.

    Sweeps rotate away every off-diagonal element in turn until the
    off-diagonal Frobenius norm drops below tol (or max_sweeps is hit).
    Returns (eigenvalues, eigenvectors) with eigenvectors as COLUMNS,
    unsorted.
    """
    A = np.array(A, dtype=np.float64)
    b = A.shape[0]
    if A.shape != (b, b):
        raise ValueError("matrix must be square")
    V = np.eye(b)
    if b == 1:
        return np.diag(A).copy(), V
    for _ in range(max_sweeps):
        off_diag = A - np.diag(np.diag(A))
        if np.sqrt((off_diag**2).sum()) < tol:
            break
        for p in range(b - 1):
            for q in range(p + 1, b):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = 0.5 * np.arctan2(2.0 * apq, A[p, p] - A[q, q])
                c, s = np.cos(theta), np.sin(theta)
                rot = np.array([[c, s], [-s, c]])
                idx = [p, q]
                A[idx, :] = rot @ A[idx, :]
                A[:, idx] = A[:, idx] @ rot.T
                A[p, q] = A[q, p] = 0.5 * (A[p, q] + A[q, p])
                V[:, idx] = V[:, idx] @ rot.T
    return np.diag(A).copy(), V


def pca_fit(subset: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full-rank PCA of an (a, b) matrix.

    Returns (means, projection) where projection rows are unit-norm
    covariance eigenvectors in descending eigenvalue order, each row
    sign-fixed so its first entry of magnitude > 1e-12 is positive. All b
    components are kept, including zero-eigenvalue directions; a single
    case yields a zero covariance and the identity projection.
    """
    subset = np.asarray(subset, dtype=np.float64)
    if subset.ndim != 2 or subset.size == 0:
        raise ValueError("subset must be a non-empty 2-d matrix")
    if not np.isfinite(subset).all():
        raise ValueError("non-finite value in PCA input")
    a, b = subset.shape
    means = subset.mean(axis=0)
    if a < 2:
        cov = np.zeros((b, b))
    else:
        centred = subset - means
        cov = centred.T @ centred / (a - 1)
    eigvals, eigvecs = jacobi_eigensystem(cov)
    order = np.argsort(-eigvals, kind="stable")
    projection = eigvecs[:, order].T.copy()
    for row in projection:
        nz = np.nonzero(np.abs(row) > _SIGN_TOL)[0]
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return means, projection


def partition_features(attrs, f: int, gen: np.random.Generator) -> list[list[int]]:
    """Shuffle attrs and chunk into ceil(len/f) groups (last may be short)."""
    attrs = list(attrs)
    if not attrs:
        raise ValueError("attrs must be non-empty")
    if f < 1:
        raise ValueError("f must be >= 1")
    perm = gen.permutation(len(attrs))
    shuffled = [attrs[i] for i in perm]
    return [shuffled[i:i + f] for i in range(0, len(shuffled), f)]


def sample_group_cases(train: Dataset, cfg: RotationConfig,
                       gen: np.random.Generator) -> np.ndarray:
    """Case indices for one group's PCA fit.

    Each class is included with probability class_inclusion_prob,
    redrawn (up to 50 times) while the selection is empty, falling back
    to all classes; ceil(p * count) cases of the selected classes are
    then drawn without replacement.
    """
    c = train.n_classes
    selected = np.zeros(c, dtype=bool)
    for _ in range(_MAX_CLASS_REDRAWS):
        selected = gen.random(c) < cfg.class_inclusion_prob
        if selected.any():
            break
    else:
        selected[:] = True
    pool = np.nonzero(selected[train.labels])[0]
    take = int(np.ceil(cfg.p * len(pool)))
    take = max(1, min(take, len(pool)))
    chosen = gen.choice(len(pool), size=take, replace=False)
    return pool[np.sort(chosen)]


def build_rotation(train: Dataset, attrs, cfg: RotationConfig) -> RotationSet:
    """Fit a RotationSet over the given attribute subset (Alg.-style)."""
    attrs = [int(a) for a in attrs]
    if any(a < 0 or a >= train.m for a in attrs):
        raise ValueError("attribute index out of range")
    gen = _rng.stream(cfg.seed)
    groups = []
    for group_attrs in partition_features(attrs, cfg.f, gen):
        cases = sample_group_cases(train, cfg, gen)
        subset = train.values[np.ix_(cases, group_attrs)]
        means, projection = pca_fit(subset)
        groups.append(FeatureGroup(attribute_indices=tuple(group_attrs),
                                   means=means, projection=projection))
    return RotationSet(groups=tuple(groups), source_attributes=tuple(attrs))


def transform(rs: RotationSet, X: np.ndarray) -> np.ndarray:
    """Apply the rotation to every row of an (n, m) matrix."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    width = sum(len(g.attribute_indices) for g in rs.groups)
    out = np.empty((X.shape[0], width))
    col = 0
    for g in rs.groups:
        cols = list(g.attribute_indices)
        seg = (X[:, cols] - g.means) @ g.projection.T
        out[:, col:col + seg.shape[1]] = seg
        col += seg.shape[1]
    return out


def apply_rotation(rs: RotationSet, x) -> np.ndarray:
    """Transform one length-m instance into the rotated feature space."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-d instance")
    return transform(rs, x[None, :])[0]


def rotation_to_jsonable(rs: RotationSet) -> dict:
    return {
        "source_attributes": list(rs.source_attributes),
        "groups": [
            {
                "attribute_indices": list(g.attribute_indices),
                "means": [float(v) for v in g.means],
                "projection": [[float(v) for v in row] for row in g.projection],
            }
            for g in rs.groups
        ],
    }


def rotation_from_jsonable(obj: dict) -> RotationSet:
    groups = tuple(
        FeatureGroup(
            attribute_indices=tuple(g["attribute_indices"]),
            means=np.array(g["means"], dtype=np.float64),
            projection=np.array(g["projection"], dtype=np.float64),
        )
        for g in obj["groups"]
    )
    return RotationSet(groups=groups, source_attributes=tuple(obj["source_attributes"]))

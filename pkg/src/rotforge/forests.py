"""Ensemble builders and prediction.

One engine builds every variant: the canonical rotation forest (C45 base
with group-wise PCA), the random forest baseline (random trees on
bootstrap samples), the six base/transform hybrids and the
random-attribute rotation forest. Member outputs are combined by
averaging the leaf class distributions; the predicted class is the
argmax with ties broken toward the lowest class index.

Per-tree seeds are derived as mix64(master_seed, tree_index), so builds
are order-independent and two variants sharing a seed policy (e.g.
(RT, BAG) and the random forest builder) produce identical models.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as _rng
from . import rotation as _rotation
from . import trees as _trees
from .data import Dataset
from .rotation import RotationConfig, RotationSet
from .trees import TreeConfig, TreeNode

MODEL_FORMAT_VERSION = 1

BASES = ("C45", "RandomTree")
TRANSFORMS = ("BAG", "BAG_PCA", "PCA")


@dataclass(frozen=True)
class ForestConfig:
    k: int = 200
    base: str = "C45"
    transform: str = "PCA"
    rotation: RotationConfig = field(default_factory=RotationConfig)
    bag_fraction: float = 1.0
    max_attributes_per_tree: int | None = None
    min_cases: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.base not in BASES:
            raise ValueError(f"unknown base {self.base!r}")
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")
        if self.max_attributes_per_tree is not None and self.max_attributes_per_tree < 1:
            raise ValueError("max_attributes_per_tree must be >= 1")


@dataclass(frozen=True)
class ForestMember:
    attribute_subset: tuple[int, ...]
    rotation: RotationSet | None
    tree: TreeNode


@dataclass(frozen=True)
class ForestModel:
    members: tuple[ForestMember, ...]
    config: ForestConfig
    class_names: tuple[str, ...]
    build_seconds: float
    per_tree_seconds: tuple[float, ...]
    contract_log: tuple[dict, ...] | None = None

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def _tree_config(cfg: ForestConfig, transformed_m: int, seed: int) -> TreeConfig:
    subspace = math.ceil(math.sqrt(transformed_m)) if cfg.base == "RandomTree" else None
    return TreeConfig(kind=cfg.base, min_cases=cfg.min_cases,
                      random_subspace_size=subspace, seed=seed)


def build_member(train: Dataset, cfg: ForestConfig, tree_index: int,
                 attrs: np.ndarray | None = None,
                 case_indices: np.ndarray | None = None) -> ForestMember:
    """Build one ensemble member with the derived per-tree seed.

    `attrs`/`case_indices` override the attribute subset and the training
    cases (used by the random-attribute variant and the contract trainer);
    by default all attributes and all cases are used.
    """
    seed_i = _rng.mix64(cfg.seed, tree_index)
    gen = _rng.stream(seed_i)

    if attrs is None:
        if cfg.max_attributes_per_tree is not None and cfg.max_attributes_per_tree < train.m:
            attrs = np.sort(gen.choice(train.m, size=cfg.max_attributes_per_tree,
                                       replace=False))
        else:
            attrs = np.arange(train.m)
    attrs = np.asarray(attrs, dtype=np.int64)

    fit = train if case_indices is None else train.subset(case_indices)

    rotation_seed = _rng.mix64(seed_i, 1)
    tree_seed = _rng.mix64(seed_i, 2)
    bag_seed = _rng.mix64(seed_i, 3)

    if cfg.transform == "BAG":
        bag_gen = _rng.stream(bag_seed)
        size = int(round(cfg.bag_fraction * fit.n))
        boot = bag_gen.integers(0, fit.n, size=size)
        X = fit.values[np.ix_(boot, attrs)]
        y = fit.labels[boot]
        rs = None
    elif cfg.transform == "BAG_PCA":
        bag_gen = _rng.stream(bag_seed)
        size = int(round(cfg.bag_fraction * fit.n))
        boot = bag_gen.integers(0, fit.n, size=size)
        sample = fit.values[np.ix_(boot, attrs)]
        means, projection = _rotation.pca_fit(sample)
        group = _rotation.FeatureGroup(attribute_indices=tuple(int(a) for a in attrs),
                                       means=means, projection=projection)
        rs = RotationSet(groups=(group,),
                         source_attributes=tuple(int(a) for a in attrs))
        X = _rotation.transform(rs, fit.values[boot])
        y = fit.labels[boot]
    else:  # PCA
        rot_cfg = replace(cfg.rotation, seed=rotation_seed)
        rs = _rotation.build_rotation(fit, attrs, rot_cfg)
        X = _rotation.transform(rs, fit.values)
        y = fit.labels
    tree = _trees.build_tree_arrays(X, y, train.n_classes,
                                    _tree_config(cfg, X.shape[1], tree_seed))
    return ForestMember(attribute_subset=tuple(int(a) for a in attrs),
                        rotation=rs, tree=tree)


def _build_forest(train: Dataset, cfg: ForestConfig) -> ForestModel:
    members = []
    per_tree = []
    start = time.perf_counter()
    for i in range(cfg.k):
        t0 = time.perf_counter()
        members.append(build_member(train, cfg, i))
        per_tree.append(time.perf_counter() - t0)
    return ForestModel(members=tuple(members), config=cfg,
                       class_names=train.class_names,
                       build_seconds=time.perf_counter() - start,
                       per_tree_seconds=tuple(per_tree))


def build_rotation_forest(train: Dataset, cfg: ForestConfig) -> ForestModel:
    if cfg.base != "C45" or cfg.transform != "PCA":
        raise ValueError("canonical rotation forest needs base=C45, transform=PCA")
    return _build_forest(train, cfg)


def build_random_forest(train: Dataset, cfg: ForestConfig) -> ForestModel:
    if cfg.base != "RandomTree" or cfg.transform != "BAG":
        raise ValueError("random forest needs base=RandomTree, transform=BAG")
    return _build_forest(train, cfg)


def build_hybrid(train: Dataset, base: str, transform: str,
                 cfg: ForestConfig) -> ForestModel:
    """One of the six base x transform factor combinations.

    (RandomTree, BAG) is the random forest; (C45, PCA) is the rotation
    forest; identical models result under the same seed.
    """
    if base not in BASES or transform not in TRANSFORMS:
        raise ValueError(f"invalid combination ({base}, {transform})")
    return _build_forest(train, replace(cfg, base=base, transform=transform))


def build_random_attribute_rotf(train: Dataset, max_atts: int,
                                cfg: ForestConfig) -> ForestModel:
    """Rotation forest where each tree sees a random attribute subset."""
    if max_atts < 1:
        raise ValueError("max_atts must be >= 1")
    cfg = replace(cfg, base="C45", transform="PCA",
                  max_attributes_per_tree=min(max_atts, train.m))
    if cfg.max_attributes_per_tree >= train.m:
        cfg = replace(cfg, max_attributes_per_tree=None)
    return _build_forest(train, cfg)


def member_distributions(member: ForestMember, X: np.ndarray) -> np.ndarray:
    if member.rotation is not None:
        # group indices address the original columns directly
        Xs = _rotation.transform(member.rotation, X)
    else:
        Xs = X[:, list(member.attribute_subset)]
    return _trees.tree_predict_batch(member.tree, Xs)


def forest_distributions(model: ForestModel, X: np.ndarray,
                         max_members: int | None = None) -> np.ndarray:
    """Mean member class distribution for every row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    members = model.members if max_members is None else model.members[:max_members]
    if not members:
        raise ValueError("model has no members")
    acc = np.zeros((X.shape[0], model.n_classes))
    for member in members:
        acc += member_distributions(member, X)
    return acc / len(members)


def forest_predict(model: ForestModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-d instance")
    return forest_distributions(model, x[None, :])[0]


def predicted_classes(distributions: np.ndarray) -> np.ndarray:
    """Argmax per row, ties toward the lowest class index."""
    return np.argmax(distributions, axis=1)


def estimate_model_bytes(model_or_members) -> int:
    """Deterministic serialized-size proxy: 8 bytes per stored float plus
    fixed per-node and per-group overheads."""
    members = getattr(model_or_members, "members", model_or_members)
    total = 0
    for member in members:
        total += 16 * len(member.attribute_subset)
        if member.rotation is not None:
            for g in member.rotation.groups:
                fj = len(g.attribute_indices)
                total += 8 * (fj * fj + 2 * fj) + 64
        total += 48 * _trees.count_nodes(member.tree)
    return total


def model_to_jsonable(model: ForestModel) -> dict:
    cfg = model.config
    return {
        "version": MODEL_FORMAT_VERSION,
        "config": {
            "k": cfg.k, "base": cfg.base, "transform": cfg.transform,
            "rotation": {"f": cfg.rotation.f, "p": cfg.rotation.p,
                         "class_inclusion_prob": cfg.rotation.class_inclusion_prob,
                         "seed": cfg.rotation.seed},
            "bag_fraction": cfg.bag_fraction,
            "max_attributes_per_tree": cfg.max_attributes_per_tree,
            "min_cases": cfg.min_cases,
            "seed": cfg.seed,
        },
        "class_names": list(model.class_names),
        "build_seconds": model.build_seconds,
        "per_tree_seconds": list(model.per_tree_seconds),
        "members": [
            {
                "attribute_subset": list(m.attribute_subset),
                "rotation": None if m.rotation is None
                else _rotation.rotation_to_jsonable(m.rotation),
                "tree": _trees.tree_to_jsonable(m.tree),
            }
            for m in model.members
        ],
    }


def model_from_jsonable(obj: dict) -> ForestModel:
    if obj.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {obj.get('version')!r}")
    c = obj["config"]
    cfg = ForestConfig(
        k=c["k"], base=c["base"], transform=c["transform"],
        rotation=RotationConfig(**c["rotation"]),
        bag_fraction=c["bag_fraction"],
        max_attributes_per_tree=c["max_attributes_per_tree"],
        min_cases=c["min_cases"], seed=c["seed"],
    )
    members = tuple(
        ForestMember(
            attribute_subset=tuple(m["attribute_subset"]),
            rotation=None if m["rotation"] is None
            else _rotation.rotation_from_jsonable(m["rotation"]),
            tree=_trees.tree_from_jsonable(m["tree"]),
        )
        for m in obj["members"]
    )
    return ForestModel(members=members, config=cfg,
                       class_names=tuple(obj["class_names"]),
                       build_seconds=obj["build_seconds"],
                       per_tree_seconds=tuple(obj["per_tree_seconds"]))


def save_model(model: ForestModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_jsonable(model), fh)


def load_model(path: str) -> ForestModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_jsonable(json.load(fh))

"""Dataset representation, ARFF/CSV ingestion and stratified resampling.

A :class:`Dataset` is an immutable n x m real-valued feature matrix with
integer class labels. Only fully numeric data with no missing values is
supported; anything else is a load error, never a silent coercion.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as _rng


class DatasetError(Exception):
    """Base class for dataset construction and ingestion failures."""


class ParseError(DatasetError):
    pass


class UnsupportedAttributeError(DatasetError):
    pass


class MissingValueError(DatasetError):
    pass


@dataclass(frozen=True)
class Dataset:
    name: str
    feature_names: tuple[str, ...]
    values: np.ndarray  # (n, m) float64
    labels: np.ndarray  # (n,) int64, indices into class_names
    class_names: tuple[str, ...]
    provenance: str = ""

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        values.setflags(write=False)
        labels.setflags(write=False)
        if values.ndim != 2:
            raise DatasetError("values must be a 2-d matrix")
        n, m = values.shape
        if n < 1 or m < 1:
            raise DatasetError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
        if len(self.feature_names) != m:
            raise DatasetError("feature_names length does not match m")
        if labels.shape != (n,):
            raise DatasetError("labels length does not match n")
        if not np.isfinite(values).all():
            raise MissingValueError("non-finite feature value")
        c = len(self.class_names)
        if c < 2:
            raise DatasetError("need at least two classes")
        if labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
            raise DatasetError("class index out of range")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def validate_primary(self) -> "Dataset":
        """Enforce the ingestion invariants: n >= 2 and every class present.

        Loaders call this; row subsets (test splits, case subsamples) are
        exempt, since a test split may legitimately lack a class.
        """
        if self.n < 2:
            raise DatasetError(f"need at least two cases, got {self.n}")
        if (self.class_counts() == 0).any():
            raise DatasetError("every class must occur at least once")
        return self

    def subset(self, indices, name_suffix: str = "") -> "Dataset":
        """Row subset, preserving class_names (classes may go absent)."""
        idx = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            name=self.name + name_suffix,
            values=self.values[idx],
            labels=self.labels[idx],
        )


@dataclass(frozen=True)
class ResamplePlan:
    resample_id: int
    train_fraction: float | None = 0.5
    train_n: int | None = None
    test_n: int | None = None
    stratified: bool = True
    # explicit first split (UCR convention: resample 0 is the provided split)
    default_train_indices: tuple[int, ...] | None = field(default=None)

    def __post_init__(self):
        if self.resample_id < 0:
            raise ValueError("resample_id must be non-negative")
        if self.train_n is None:
            if not (self.train_fraction and 0.0 < self.train_fraction < 1.0):
                raise ValueError("train_fraction must lie in (0, 1)")
        elif self.train_n < 1:
            raise ValueError("train_n must be positive")


def _parse_float(token: str, where: str) -> float:
    token = token.strip()
    if token == "?":
        raise MissingValueError(f"missing value ('?') {where}")
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"non-numeric value {token!r} {where}") from None


def load_arff(path: str) -> Dataset:
    """Load a numeric-attributes-plus-nominal-class ARFF file.

    Supported subset: ``@relation``, ``@attribute <name> numeric`` (or
    ``real``), a final ``@attribute <name> {v1,...}`` class attribute and
    ``@data`` with dense CSV rows.
    """
    relation = ""
    attributes: list[tuple[str, str | list[str]]] = []
    rows: list[list[str]] = []
    in_data = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if in_data:
                rows.append(next(csv.reader([line])))
                continue
            lower = line.lower()
            if lower.startswith("@relation"):
                relation = line.split(None, 1)[1].strip().strip("'\"") if " " in line else ""
            elif lower.startswith("@attribute"):
                rest = line.split(None, 1)[1].strip()
                if rest.startswith(("'", '"')):
                    quote = rest[0]
                    end = rest.index(quote, 1)
                    name, spec = rest[1:end], rest[end + 1:].strip()
                else:
                    parts = rest.split(None, 1)
                    if len(parts) != 2:
                        raise ParseError(f"malformed @attribute at line {lineno}")
                    name, spec = parts
                spec = spec.strip()
                if spec.startswith("{") and spec.endswith("}"):
                    values = [v.strip().strip("'\"") for v in spec[1:-1].split(",")]
                    attributes.append((name, values))
                elif spec.lower() in ("numeric", "real", "integer"):
                    attributes.append((name, "numeric"))
                else:
                    raise UnsupportedAttributeError(
                        f"unsupported attribute type {spec!r} for {name!r}"
                    )
            elif lower.startswith("@data"):
                in_data = True
            else:
                raise ParseError(f"unrecognised header line {lineno}: {line!r}")
    if not attributes:
        raise ParseError("no @attribute declarations found")
    *feature_attrs, (class_name, class_spec) = attributes
    if class_spec == "numeric":
        raise UnsupportedAttributeError("last attribute must be the nominal class")
    for name, spec in feature_attrs:
        if spec != "numeric":
            raise UnsupportedAttributeError(
                f"nominal non-class attribute {name!r} is not supported"
            )
    m = len(feature_attrs)
    class_names = list(class_spec)
    class_index = {v: i for i, v in enumerate(class_names)}
    values = np.empty((len(rows), m))
    labels = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        if len(row) != m + 1:
            raise ParseError(f"data row {i} has {len(row)} fields, expected {m + 1}")
        for j in range(m):
            values[i, j] = _parse_float(row[j], f"in data row {i}, column {j}")
        cls = row[m].strip().strip("'\"")
        if cls == "?":
            raise MissingValueError(f"missing class value in data row {i}")
        if cls not in class_index:
            raise ParseError(f"undeclared class value {cls!r} in data row {i}")
        labels[i] = class_index[cls]
    return Dataset(
        name=relation or Path(path).stem,
        feature_names=tuple(name for name, _ in feature_attrs),
        values=values,
        labels=labels,
        class_names=tuple(class_names),
        provenance=f"{path} (arff)",
    ).validate_primary()


def save_arff(dataset: Dataset, path: str) -> None:
    """Write the dataset in the ARFF subset understood by :func:`load_arff`."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"@relation {dataset.name}\n")
        for name in dataset.feature_names:
            fh.write(f"@attribute {name} numeric\n")
        fh.write("@attribute class {" + ",".join(dataset.class_names) + "}\n")
        fh.write("@data\n")
        for row, label in zip(dataset.values, dataset.labels):
            cells = [repr(float(v)) for v in row]
            cells.append(dataset.class_names[label])
            fh.write(",".join(cells) + "\n")


def load_csv(path: str, class_column: int | str = -1) -> Dataset:
    """Load a rectangular CSV; all non-class columns must be numeric.

    `class_column` selects by position (int, negatives allowed) or by header
    name (str, requires a header row). A header row is detected as a first
    row whose non-class cells do not all parse as numbers.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ParseError("empty CSV file")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"ragged row {i}: {len(row)} fields, expected {width}")

    header: list[str] | None = None
    if isinstance(class_column, str):
        header = rows[0]
        rows = rows[1:]
    else:

        def _numericish(row):
            return all(_is_float(cell) for k, cell in enumerate(row)
                       if k != (class_column % width))

        if not _numericish(rows[0]):
            header = rows[0]
            rows = rows[1:]
    if not rows:
        raise ParseError("CSV has a header but no data rows")

    if isinstance(class_column, str):
        try:
            cls_idx = header.index(class_column)
        except ValueError:
            raise ParseError(f"no column named {class_column!r}") from None
    else:
        cls_idx = class_column % width

    feature_cols = [j for j in range(width) if j != cls_idx]
    class_values = [row[cls_idx].strip() for row in rows]
    class_names = sorted(set(class_values))
    if len(class_names) < 2:
        raise DatasetError("class column has a single distinct value")
    class_index = {v: i for i, v in enumerate(class_names)}
    values = np.empty((len(rows), len(feature_cols)))
    for i, row in enumerate(rows):
        for out_j, j in enumerate(feature_cols):
            values[i, out_j] = _parse_float(row[j], f"in row {i}, column {j}")
    labels = np.array([class_index[v] for v in class_values], dtype=np.int64)
    if header is not None:
        feature_names = tuple(header[j] for j in feature_cols)
    else:
        feature_names = tuple(f"att{j}" for j in feature_cols)
    return Dataset(
        name=Path(path).stem,
        feature_names=feature_names,
        values=values,
        labels=labels,
        class_names=tuple(class_names),
        provenance=f"{path} (csv)",
    ).validate_primary()


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def per_class_train_quotas(class_counts: np.ndarray, train_n: int) -> np.ndarray:
    """Stratified per-class train counts summing to train_n.

    floor of the proportional share per class, leftover seats handed out in
    descending fractional-remainder order (ties by class index), then every
    class clamped to at least one train case (seats reclaimed from the
    largest quotas if clamping oversubscribes).
    """
    counts = np.asarray(class_counts, dtype=np.int64)
    n = int(counts.sum())
    if not (0 < train_n < n):
        raise ValueError(f"train_n={train_n} must lie strictly inside (0, {n})")
    if train_n < len(counts):
        raise ValueError("train_n smaller than the number of classes")
    exact = counts * (train_n / n)
    quotas = np.floor(exact).astype(np.int64)
    remainders = exact - quotas
    leftover = train_n - int(quotas.sum())
    order = sorted(range(len(counts)), key=lambda j: (-remainders[j], j))
    for j in order[:leftover]:
        quotas[j] += 1
    # clamp: every class contributes at least one train case
    for j in range(len(counts)):
        if quotas[j] == 0:
            quotas[j] = 1
    while quotas.sum() > train_n:
        j = int(np.argmax(quotas))
        quotas[j] -= 1
    quotas = np.minimum(quotas, counts)
    return quotas


def stratified_resample(dataset: Dataset, plan: ResamplePlan) -> tuple[Dataset, Dataset]:
    """Deterministic stratified train/test split.

    The shuffle stream depends on plan.resample_id only (scheme
    ``rotforge.rng.RNG_SCHEME``), so the same (dataset, plan) always
    produces the same split. With `default_train_indices` supplied,
    resample 0 reproduces that designated split exactly.
    """
    n = dataset.n
    if plan.resample_id == 0 and plan.default_train_indices is not None:
        train_idx = np.asarray(plan.default_train_indices, dtype=np.int64)
        mask = np.ones(n, dtype=bool)
        mask[train_idx] = False
        test_idx = np.nonzero(mask)[0]
        return dataset.subset(train_idx, "_TRAIN"), dataset.subset(test_idx, "_TEST")

    counts = dataset.class_counts()
    if plan.train_n is not None:
        if plan.train_n >= n:
            raise ValueError("train_n exceeds dataset size")
        train_n = plan.train_n
    else:
        train_n = int(round(n * plan.train_fraction))
        # at least one train case per class, at least one test case overall
        train_n = min(max(train_n, dataset.n_classes), n - 1)
    quotas = per_class_train_quotas(counts, train_n)
    if (quotas > counts).any():
        raise ValueError("per-class train quota exceeds class size")

    gen = _rng.stream(plan.resample_id)
    train_parts, test_parts = [], []
    for j in range(dataset.n_classes):
        idx = np.nonzero(dataset.labels == j)[0]
        perm = gen.permutation(len(idx))
        shuffled = idx[perm]
        train_parts.append(shuffled[: quotas[j]])
        test_parts.append(shuffled[quotas[j]:])
    train_idx = np.sort(np.concatenate(train_parts))
    test_idx = np.sort(np.concatenate(test_parts))
    return dataset.subset(train_idx, "_TRAIN"), dataset.subset(test_idx, "_TEST")


def stratified_subsample_indices(labels: np.ndarray, n_classes: int, size: int,
                                 gen: np.random.Generator) -> np.ndarray:
    """Stratified case subset of the given size (every class kept)."""
    counts = np.bincount(labels, minlength=n_classes)
    size = max(size, 2 * n_classes) if size < len(labels) else len(labels)
    size = min(size, len(labels))
    quotas = per_class_train_quotas(counts, size) if size < len(labels) else counts
    parts = []
    for j in range(n_classes):
        idx = np.nonzero(labels == j)[0]
        perm = gen.permutation(len(idx))
        parts.append(idx[perm][: quotas[j]])
    return np.sort(np.concatenate(parts))

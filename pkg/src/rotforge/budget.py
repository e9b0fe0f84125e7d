"""Build-time prediction and the contract (time-budgeted) trainer.

The timing model is an ordinary least squares fit of full-ensemble build
time on (1, n, m, m*n), optionally extended with an m*n*log(n) term. It
carries everything needed for prediction intervals - residual standard
error, degrees of freedom and (X^T X)^-1 - plus a machine calibration
scale obtained by timing a fixed reference workload.

The contract trainer uses the 95% upper prediction bound to decide
whether a full build fits the budget; when it does not, it reduces the
larger data dimension (attributes when m >= n, cases otherwise) per
tree, refining the time estimate after every tree with an EWMA of the
observed per-tree times.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as _scipy_stats

from . import forests as _forests
from . import rng as _rng
from .data import Dataset, stratified_subsample_indices
from .forests import ForestConfig, ForestMember, ForestModel

# Build-time model fitted at reference parameters (k=200, f=3, p=0.5),
# expressed in hours: t = 0.64 + 0.132e-3*n + 0.246e-3*m + 0.615e-6*m*n.
REFERENCE_TIMING_COEFFICIENTS = (0.64, 0.132e-3, 0.246e-3, 0.615e-6)
REFERENCE_TIMING_UNIT = "hours"

_SECONDS_PER_UNIT = {"seconds": 1.0, "minutes": 60.0, "hours": 3600.0}


class TimingModelError(Exception):
    pass


@dataclass(frozen=True)
class TimingObservation:
    n: int
    m: int
    seconds: float
    dataset: str = ""

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.seconds <= 0:
            raise ValueError("need n >= 1, m >= 1, seconds > 0")


@dataclass(frozen=True)
class TimingModel:
    coefficients: tuple[float, ...]      # (b0, b_n, b_m, b_mn[, b_mnlogn])
    include_nlogn: bool = False
    residual_std: float = 0.0
    xtx_inverse: np.ndarray | None = None
    dof: int = 0
    calibration_scale: float = 1.0
    time_unit: str = REFERENCE_TIMING_UNIT

    def __post_init__(self):
        if self.time_unit not in _SECONDS_PER_UNIT:
            raise ValueError(f"unknown time unit {self.time_unit!r}")
        if self.calibration_scale <= 0:
            raise ValueError("calibration_scale must be positive")
        expected = 5 if self.include_nlogn else 4
        if len(self.coefficients) != expected:
            raise ValueError(f"expected {expected} coefficients")
        if self.xtx_inverse is not None:
            object.__setattr__(self, "xtx_inverse",
                               np.asarray(self.xtx_inverse, dtype=np.float64))


def reference_timing_model() -> TimingModel:
    """The bundled reference-machine build-time model (hours)."""
    return TimingModel(coefficients=REFERENCE_TIMING_COEFFICIENTS,
                       time_unit=REFERENCE_TIMING_UNIT)


def _regressors(n: float, m: float, include_nlogn: bool) -> np.ndarray:
    row = [1.0, float(n), float(m), float(m) * float(n)]
    if include_nlogn:
        row.append(float(m) * float(n) * np.log(float(n)))
    return np.array(row)


def fit_timing_model(observations: list[TimingObservation],
                     include_nlogn: bool = False,
                     time_unit: str = "seconds") -> TimingModel:
    """OLS fit of build time on (1, n, m, m*n[, m*n*log n])."""
    p = 5 if include_nlogn else 4
    if len(observations) < p + 2:
        raise TimingModelError(f"need at least {p + 2} observations, got {len(observations)}")
    X = np.array([_regressors(o.n, o.m, include_nlogn) for o in observations])
    y = np.array([o.seconds for o in observations], dtype=np.float64)
    if np.linalg.matrix_rank(X) < p:
        raise TimingModelError("design matrix is rank deficient")
    xtx_inv = np.linalg.inv(X.T @ X)
    # least-squares solve is better conditioned than the normal equations
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    residuals = y - X @ beta
    dof = len(observations) - p
    s = float(np.sqrt((residuals @ residuals) / dof))
    return TimingModel(coefficients=tuple(float(b) for b in beta),
                       include_nlogn=include_nlogn, residual_std=s,
                       xtx_inverse=xtx_inv, dof=dof, time_unit=time_unit)


def predict_time(tm: TimingModel, n: int, m: int) -> float:
    """Predicted build time in tm.time_unit, calibration applied."""
    x0 = _regressors(n, m, tm.include_nlogn)
    return float(tm.calibration_scale * (x0 @ np.asarray(tm.coefficients)))


def predict_seconds(tm: TimingModel, n: int, m: int) -> float:
    return predict_time(tm, n, m) * _SECONDS_PER_UNIT[tm.time_unit]


def prediction_interval(tm: TimingModel, n: int, m: int,
                        alpha: float = 0.05) -> tuple[float, float]:
    """Two-sided (1 - alpha) prediction interval for a new build time."""
    if tm.xtx_inverse is None or tm.dof < 1:
        raise TimingModelError("model carries no fit information for intervals")
    x0 = _regressors(n, m, tm.include_nlogn)
    centre = predict_time(tm, n, m)
    t_quantile = float(_scipy_stats.t.ppf(1.0 - alpha / 2.0, tm.dof))
    half = (tm.calibration_scale * tm.residual_std * t_quantile
            * float(np.sqrt(1.0 + x0 @ tm.xtx_inverse @ x0)))
    return centre - half, centre + half


def upper_bound_seconds(tm: TimingModel, n: int, m: int, alpha: float = 0.05) -> float:
    """estimateTimeUpperBound: the upper 95% prediction bound, in seconds."""
    _, high = prediction_interval(tm, n, m, alpha)
    return high * _SECONDS_PER_UNIT[tm.time_unit]


def calibrate(reference_runner, reference_seconds: float,
              min_elapsed: float = 0.01) -> float:
    """Scale factor local_time / reference_time for a fixed workload.

    `reference_runner` executes the documented reference operation once;
    `reference_seconds` is the reference machine's recorded time for it.
    Below the timer-resolution floor the workload is repeated and the
    mean taken.
    """
    if reference_seconds <= 0:
        raise ValueError("reference_seconds must be positive")
    repetitions = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(repetitions):
            reference_runner()
        elapsed = time.perf_counter() - t0
        if elapsed >= min_elapsed or repetitions >= 1024:
            return (elapsed / repetitions) / reference_seconds
        repetitions *= 4


def default_reference_workload() -> None:
    """Documented calibration workload: a 20-tree rotation forest on the
    bundled synthetic dataset (n=2000, m=60, seed=0)."""
    from .synthetic import calibration_dataset

    train = calibration_dataset()
    cfg = ForestConfig(k=20, base="C45", transform="PCA", seed=0)
    _forests.build_rotation_forest(train, cfg)


def estimate_max_attributes(m: int, n: int, e_min: int, t_hat: float,
                            budget: float, tm: TimingModel,
                            min_attributes: int = 3) -> int:
    """Largest attribute count whose predicted time meets the required
    speedup sigma = t_hat / budget; the model is affine in m for fixed n,
    so the solution is closed form, clamped to [min_attributes, m]."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    sigma = t_hat / budget
    if sigma <= 1.0:
        return m
    target = predict_time(tm, n, m) / sigma
    beta = np.asarray(tm.coefficients)
    slope = beta[2] + beta[3] * n
    if tm.include_nlogn:
        slope += beta[4] * n * np.log(n)
    intercept = tm.calibration_scale * (beta[0] + beta[1] * n)
    slope *= tm.calibration_scale
    if slope <= 0:
        return max(min(m, min_attributes), 1)
    m_hat = int(np.floor((target - intercept) / slope))
    return int(min(max(m_hat, min(min_attributes, m)), m))


def estimate_max_cases(n: int, m: int, e_min: int, t_hat: float,
                       budget: float, tm: TimingModel,
                       n_classes: int = 1) -> int:
    """Largest case count meeting the required speedup, by bisection
    (also covers the optional non-affine log term), clamped to [2c, n]."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    sigma = t_hat / budget
    if sigma <= 1.0:
        return n
    target = predict_time(tm, n, m) / sigma
    lo = min(2 * n_classes, n)
    hi = n
    if predict_time(tm, lo, m) >= target:
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if predict_time(tm, mid, m) <= target:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class ContractConfig:
    budget_seconds: float
    timing: TimingModel
    e_min: int = 50
    e_max: int = 200
    alpha: float = 0.1
    memory_limit_bytes: int = 10 * 2**30

    def __post_init__(self):
        if self.budget_seconds <= 0:
            raise ValueError("budget_seconds must be positive")
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError("alpha must lie in [0, 1)")
        if self.e_min < 1 or self.e_min > self.e_max:
            raise ValueError("need 1 <= e_min <= e_max")


def contract_train(train: Dataset, cc: ContractConfig,
                   forest_cfg: ForestConfig) -> ForestModel:
    """Rotation forest under a wall-clock budget.

    Delegates to the unconstrained build when the 95% upper prediction
    bound fits the budget. Otherwise trees are built serially on reduced
    attribute or case subsets: phase one (up to e_min trees) draws the
    subset size in [cap/2, cap], refining the time estimate with
    t_hat <- (1-alpha)*t_hat + alpha*(tree_seconds * e_min) after every
    tree and recomputing the cap; phase two (up to e_max trees) draws in
    [cap, full]. The build stops when the budget or the serialized-size
    memory limit is reached; at least one tree is always produced.
    """
    forest_cfg = replace(forest_cfg, base="C45", transform="PCA")
    tm = cc.timing
    n, m, c = train.n, train.m, train.n_classes
    t_hat = upper_bound_seconds(tm, n, m)
    if t_hat < cc.budget_seconds:
        model = _forests.build_rotation_forest(train, forest_cfg)
        log = ({"tree": -1, "phase": "full", "size": m, "seconds": model.build_seconds,
                "t_hat": t_hat},)
        return replace(model, contract_log=log)

    reduce_attributes = m >= n
    f = forest_cfg.rotation.f
    gen = _rng.stream(_rng.mix64(forest_cfg.seed, 0x00C0_47AC))

    def current_cap(t_hat_now: float) -> int:
        if reduce_attributes:
            return estimate_max_attributes(m, n, cc.e_min, t_hat_now,
                                           cc.budget_seconds, tm, min_attributes=f)
        return estimate_max_cases(n, m, cc.e_min, t_hat_now,
                                  cc.budget_seconds, tm, n_classes=c)

    cap = current_cap(t_hat)
    members: list[ForestMember] = []
    per_tree: list[float] = []
    log: list[dict] = []
    start = time.perf_counter()

    def build_one(size: int, phase: str) -> bool:
        """Build one reduced tree; False when the memory cap is hit."""
        nonlocal t_hat, cap
        i = len(members)
        t0 = time.perf_counter()
        if reduce_attributes:
            sub_gen = _rng.stream(_rng.mix64(forest_cfg.seed, 0x5B5E7 + i))
            attrs = np.sort(sub_gen.choice(m, size=min(size, m), replace=False))
            member = _forests.build_member(train, forest_cfg, i, attrs=attrs)
        else:
            sub_gen = _rng.stream(_rng.mix64(forest_cfg.seed, 0x5B5E7 + i))
            cases = stratified_subsample_indices(train.labels, c, size, sub_gen)
            member = _forests.build_member(train, forest_cfg, i, case_indices=cases)
        seconds = time.perf_counter() - t0
        members.append(member)
        per_tree.append(seconds)
        if phase == "one":
            t_hat = (1.0 - cc.alpha) * t_hat + cc.alpha * (seconds * cc.e_min)
            cap = current_cap(t_hat)
        log.append({"tree": i, "phase": phase, "size": int(size),
                    "seconds": seconds, "t_hat": t_hat})
        return _forests.estimate_model_bytes(members) <= cc.memory_limit_bytes

    full = m if reduce_attributes else n
    while len(members) < cc.e_min:
        if members and time.perf_counter() - start >= cc.budget_seconds:
            break
        lo = max(1, cap // 2)
        size = int(gen.integers(lo, cap + 1))
        if not build_one(size, "one"):
            break
    else:
        while len(members) < cc.e_max:
            if time.perf_counter() - start >= cc.budget_seconds:
                break
            lo = min(cap, full)
            size = int(gen.integers(lo, full + 1))
            if not build_one(size, "two"):
                break

    return ForestModel(members=tuple(members), config=forest_cfg,
                       class_names=train.class_names,
                       build_seconds=time.perf_counter() - start,
                       per_tree_seconds=tuple(per_tree),
                       contract_log=tuple(log))


def load_observations_csv(path: str) -> list[TimingObservation]:
    """Read `dataset,n,m,seconds` rows (header optional)."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "dataset":
                continue
            dataset, n, m, seconds = row[:4]
            out.append(TimingObservation(n=int(n), m=int(m),
                                         seconds=float(seconds), dataset=dataset))
    return out


def timing_model_to_jsonable(tm: TimingModel) -> dict:
    return {
        "coefficients": list(tm.coefficients),
        "include_nlogn": tm.include_nlogn,
        "residual_std": tm.residual_std,
        "xtx_inverse": None if tm.xtx_inverse is None
        else [[float(v) for v in row] for row in tm.xtx_inverse],
        "dof": tm.dof,
        "calibration_scale": tm.calibration_scale,
        "time_unit": tm.time_unit,
    }


def timing_model_from_jsonable(obj: dict) -> TimingModel:
    return TimingModel(
        coefficients=tuple(obj["coefficients"]),
        include_nlogn=obj["include_nlogn"],
        residual_std=obj["residual_std"],
        xtx_inverse=None if obj["xtx_inverse"] is None else np.array(obj["xtx_inverse"]),
        dof=obj["dof"],
        calibration_scale=obj["calibration_scale"],
        time_unit=obj["time_unit"],
    )


def save_timing_model(tm: TimingModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(timing_model_to_jsonable(tm), fh)


def load_timing_model(path: str) -> TimingModel:
    with open(path, encoding="utf-8") as fh:
        return timing_model_from_jsonable(json.load(fh))

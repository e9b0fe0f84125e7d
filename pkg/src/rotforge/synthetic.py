"""Seeded synthetic classification problems.

The generator plants an oblique class structure under a strong shared
variance factor: every feature is the sum of a common factor, Gaussian
noise and a per-feature signed class offset. Axis-parallel splits on the
raw features see the offset buried under the factor variance, while any
rotation that contrasts features cancels the factor and exposes the
class signal, so PCA-based ensembles hold a reproducible edge.
"""

from __future__ import annotations

import numpy as np

from . import rng as _rng
from .data import Dataset


def common_factor_dataset(n: int, m: int, seed: int, n_classes: int = 2,
                          factor_scale: float = 3.0, signal: float = 1.0,
                          noise: float = 0.5, name: str | None = None) -> Dataset:
    """n x m dataset where class offsets hide behind a shared factor.

    feature_j = factor_scale * t + noise * e_j + signal * sign_j * (2*y/(c-1) - 1)
    with t ~ N(0,1) per case and sign_j a fixed Rademacher draw per column.
    """
    gen = _rng.stream(_rng.mix64(seed, 0x5F17))
    labels = np.arange(n) % n_classes
    labels = labels[gen.permutation(n)]
    t = gen.normal(size=(n, 1))
    eps = gen.normal(size=(n, m))
    signs = gen.choice([-1.0, 1.0], size=m)
    offsets = signal * (2.0 * labels / max(n_classes - 1, 1) - 1.0)
    values = factor_scale * t + noise * eps + offsets[:, None] * signs[None, :]
    return Dataset(
        name=name or f"synthetic_n{n}_m{m}_s{seed}",
        feature_names=tuple(f"att{j}" for j in range(m)),
        values=values,
        labels=labels.astype(np.int64),
        class_names=tuple(f"c{j}" for j in range(n_classes)),
        provenance="synthetic (common-factor generator v1)",
    )


def oblique_suite(n_datasets: int = 5, n: int = 400, m: int = 20,
                  base_seed: int = 0) -> list[Dataset]:
    """A small benchmark suite with varying seeds and noise levels."""
    out = []
    for i in range(n_datasets):
        out.append(common_factor_dataset(
            n=n, m=m, seed=_rng.mix64(base_seed, i),
            factor_scale=4.0, signal=0.7, noise=0.9 + 0.1 * (i % 3),
            name=f"oblique{i}"))
    return out


def calibration_dataset() -> Dataset:
    """Fixed dataset for the timing calibration workload (n=2000, m=60)."""
    return common_factor_dataset(n=2000, m=60, seed=0, factor_scale=2.0,
                                 signal=3.0, noise=0.3, name="calibration")

"""Classifier-comparison statistics.

Pairwise tests (Wilcoxon signed rank, paired t) run over per-dataset
means; multi-classifier comparison uses the Friedman rank test with
Holm-corrected pairwise Wilcoxon tests to form cliques, rendered as
critical-difference diagram data (JSON + SVG).

The Wilcoxon p-value is exact (full enumeration of sign patterns over
the observed tied ranks) for up to 20 nonzero differences, and uses the
tie-corrected normal approximation with continuity correction above.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import stats as _scipy_stats

EXACT_WILCOXON_LIMIT = 20


@dataclass(frozen=True)
class WilcoxonResult:
    p_value: float
    statistic: float  # W+ over the nonzero differences
    n_nonzero: int
    method: str  # "exact" | "normal" | "degenerate"

    @property
    def all_zero(self) -> bool:
        return self.method == "degenerate"


@dataclass(frozen=True)
class TTestResult:
    p_value: float
    statistic: float
    degenerate: bool = False


@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    p_value: float
    mean_ranks: np.ndarray


@dataclass(frozen=True)
class ResultsMatrix:
    classifiers: tuple[str, ...]
    datasets: tuple[str, ...]
    means: np.ndarray  # (N, K) per-dataset mean metric
    per_resample: np.ndarray | None = None  # (N, K, R)

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        object.__setattr__(self, "means", means)
        if means.shape != (len(self.datasets), len(self.classifiers)):
            raise ValueError("means shape does not match classifier/dataset names")
        if not np.isfinite(means).all():
            raise ValueError("missing cells are not allowed")


@dataclass(frozen=True)
class CliqueReport:
    classifiers: tuple[str, ...]
    average_ranks: np.ndarray          # (K,)
    pairwise_p: np.ndarray             # (K, K) symmetric, 1.0 on diagonal
    rejected: np.ndarray               # (K, K) boolean
    cliques: tuple[tuple[int, ...], ...]


def _signed_ranks(x, y):
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    d = d[d != 0.0]
    if d.size == 0:
        return None
    ranks = _scipy_stats.rankdata(np.abs(d), method="average")
    return d, ranks


def _exact_two_sided_p(ranks: np.ndarray, w_plus: float) -> float:
    """Enumerate the W+ distribution over all sign patterns via a
    subset-sum count on doubled (integer) ranks."""
    doubled = np.rint(ranks * 2).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    counts /= counts.sum()
    w2 = int(np.rint(w_plus * 2))
    p_low = counts[: w2 + 1].sum()
    p_high = counts[w2:].sum()
    return float(min(1.0, 2.0 * min(p_low, p_high)))


def wilcoxon_signed_rank(x, y) -> WilcoxonResult:
    """Two-sided Wilcoxon signed rank test.

    Zero differences are dropped; tied magnitudes get average ranks.
    All-zero differences give p = 1 with the degenerate flag set.
    """
    sr = _signed_ranks(x, y)
    if sr is None:
        return WilcoxonResult(p_value=1.0, statistic=0.0, n_nonzero=0,
                              method="degenerate")
    d, ranks = sr
    n = len(d)
    w_plus = float(ranks[d > 0].sum())
    if n <= EXACT_WILCOXON_LIMIT:
        return WilcoxonResult(p_value=_exact_two_sided_p(ranks, w_plus),
                              statistic=w_plus, n_nonzero=n, method="exact")
    mean = n * (n + 1) / 4.0
    # tie correction over groups of equal |d|
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - ((tie_counts**3 - tie_counts).sum()) / 48.0
    if var <= 0:
        return WilcoxonResult(p_value=1.0, statistic=w_plus, n_nonzero=n,
                              method="degenerate")
    z = (w_plus - mean - 0.5 * np.sign(w_plus - mean)) / np.sqrt(var)
    p = float(min(1.0, 2.0 * _scipy_stats.norm.sf(abs(z))))
    return WilcoxonResult(p_value=p, statistic=w_plus, n_nonzero=n, method="normal")


def paired_t(x, y) -> TTestResult:
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    if d.size < 2:
        raise ValueError("need at least two pairs")
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(p_value=1.0, statistic=0.0, degenerate=True)
        return TTestResult(p_value=0.0, statistic=float(np.sign(mean)) * np.inf,
                           degenerate=True)
    t = mean / (sd / np.sqrt(d.size))
    p = float(min(1.0, 2.0 * _scipy_stats.t.sf(abs(t), d.size - 1)))
    return TTestResult(p_value=p, statistic=float(t))


def rank_rows(means: np.ndarray, lower_is_better: bool = True) -> np.ndarray:
    """Per-dataset classifier ranks (1 = best), average ranks on ties."""
    oriented = means if lower_is_better else -means
    return np.apply_along_axis(
        lambda row: _scipy_stats.rankdata(row, method="average"), 1, oriented)


def friedman(matrix: ResultsMatrix, lower_is_better: bool = True) -> FriedmanResult:
    n, k = matrix.means.shape
    if k < 3:
        raise ValueError("Friedman test needs at least three classifiers")
    if n < 2:
        raise ValueError("Friedman test needs at least two datasets")
    mean_ranks = rank_rows(matrix.means, lower_is_better).mean(axis=0)
    statistic = 12.0 * n / (k * (k + 1)) * ((mean_ranks - (k + 1) / 2.0) ** 2).sum()
    p = float(_scipy_stats.chi2.sf(statistic, k - 1))
    return FriedmanResult(statistic=float(statistic), p_value=p,
                          mean_ranks=mean_ranks)


def holm_rejections(p_values: list[float], alpha: float = 0.05) -> list[bool]:
    """Step-down Holm procedure; returns a rejection flag per input p."""
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    rejected = [False] * m
    for step, i in enumerate(order):
        if p_values[i] <= alpha / (m - step):
            rejected[i] = True
        else:
            break
    return rejected


def holm_cliques(matrix: ResultsMatrix, alpha: float = 0.05,
                 lower_is_better: bool = True) -> CliqueReport:
    """Pairwise Wilcoxon tests with Holm correction, grouped into cliques.

    A clique is a maximal interval of classifiers, contiguous in mean
    rank order, that contains no rejected pair.
    """
    k = len(matrix.classifiers)
    if k < 2:
        raise ValueError("need at least two classifiers")
    mean_ranks = rank_rows(matrix.means, lower_is_better).mean(axis=0)
    pairwise_p = np.ones((k, k))
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    p_list = []
    for i, j in pairs:
        p = wilcoxon_signed_rank(matrix.means[:, i], matrix.means[:, j]).p_value
        pairwise_p[i, j] = pairwise_p[j, i] = p
        p_list.append(p)
    flags = holm_rejections(p_list, alpha)
    rejected = np.zeros((k, k), dtype=bool)
    for (i, j), flag in zip(pairs, flags):
        rejected[i, j] = rejected[j, i] = flag

    order = sorted(range(k), key=lambda i: (mean_ranks[i], i))
    cliques: list[tuple[int, ...]] = []
    for start in range(k):
        end = start
        while end + 1 < k and not any(
                rejected[order[a], order[end + 1]] for a in range(start, end + 1)):
            end += 1
        clique = tuple(order[start:end + 1])
        if not cliques or not set(clique) <= set(cliques[-1]):
            cliques.append(clique)
    return CliqueReport(classifiers=tuple(matrix.classifiers),
                        average_ranks=mean_ranks, pairwise_p=pairwise_p,
                        rejected=rejected, cliques=tuple(cliques))


def _svg_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_cd_svg(report: CliqueReport, width: int = 640) -> str:
    """Critical-difference diagram: rank axis, labels, clique bars."""
    k = len(report.classifiers)
    margin = 60
    axis_y = 60
    axis_w = width - 2 * margin

    def x_of(rank: float) -> float:
        if k == 1:
            return margin
        return margin + (rank - 1.0) / (k - 1.0) * axis_w if k > 1 else margin

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{140 + 18 * (k + len(report.cliques))}" '
             f'font-family="sans-serif" font-size="11">']
    lines.append(f'<line x1="{margin}" y1="{axis_y}" x2="{margin + axis_w}" '
                 f'y2="{axis_y}" stroke="black"/>')
    for r in range(1, k + 1):
        x = x_of(float(r))
        lines.append(f'<line x1="{x}" y1="{axis_y - 4}" x2="{x}" y2="{axis_y + 4}" '
                     f'stroke="black"/>')
        lines.append(f'<text x="{x}" y="{axis_y - 8}" text-anchor="middle">{r}</text>')
    order = sorted(range(k), key=lambda i: (report.average_ranks[i], i))
    for slot, i in enumerate(order):
        x = x_of(float(report.average_ranks[i]))
        label_y = axis_y + 40 + 18 * slot
        lines.append(f'<line x1="{x}" y1="{axis_y}" x2="{x}" y2="{label_y - 10}" '
                     f'stroke="gray" stroke-dasharray="2,2"/>')
        lines.append(f'<text x="{x}" y="{label_y}" text-anchor="middle">'
                     f'{_svg_escape(report.classifiers[i])} '
                     f'({report.average_ranks[i]:.3f})</text>')
    bar_y = axis_y + 40 + 18 * k + 10
    for b, clique in enumerate(report.cliques):
        xs = [x_of(float(report.average_ranks[i])) for i in clique]
        y = bar_y + 12 * b
        lines.append(f'<line x1="{min(xs)}" y1="{y}" x2="{max(xs)}" y2="{y}" '
                     f'stroke="black" stroke-width="4"/>')
    lines.append("</svg>")
    return "\n".join(lines)


def cd_diagram(report: CliqueReport, out_path: str) -> dict:
    """Write machine-readable JSON and an SVG next to it.

    `out_path` is the SVG path; the JSON lands at out_path + ".json".
    Returns the JSON payload.
    """
    payload = {
        "classifiers": list(report.classifiers),
        "ranks": [float(r) for r in report.average_ranks],
        "cliques": [list(c) for c in report.cliques],
    }
    with open(str(out_path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(render_cd_svg(report))
    return payload

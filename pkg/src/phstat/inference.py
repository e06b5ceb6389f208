"""Hypothesis tests, likelihood scores and confidence intervals."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats

from .barcode import Barcode, bottleneck_distance
from .stats import BarcodeDistribution, RealDistribution

__all__ = [
    "LEVELS",
    "TestReport",
    "ConfidenceInterval",
    "ks_two_sample",
    "chi2_counts",
    "chi2_histogram",
    "chi2_reference_barcodes",
    "binomial_tail",
    "mass_hypothesis_test",
    "likelihood_score",
    "normal_quantile",
    "median_ci_indices",
    "median_confidence_interval",
    "monte_carlo_pvalue",
]

LEVELS = (0.90, 0.95, 0.99)


class InsufficientData(ValueError):
    """The statistic is undefined for this input (e.g. zero degrees of freedom)."""


@dataclass(frozen=True)
class TestReport:
    statistic: float
    p_value: float | None
    method: str
    params: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def decisions(self) -> dict[float, bool]:
        """Reject at each confidence level in ``LEVELS``."""
        if self.p_value is None:
            return {}
        return {lvl: self.p_value < 1 - lvl for lvl in LEVELS}

    def rejects(self, level: float) -> bool:
        return self.p_value is not None and self.p_value < 1 - level

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decisions"] = {f"{lvl:.2f}": rej for lvl, rej in self.decisions.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class ConfidenceInterval:
    low: float
    high: float
    level: float
    method: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError("low > high")

    def __contains__(self, x: float) -> bool:
        return self.low <= x <= self.high

    def to_dict(self) -> dict:
        return asdict(self)


def _samples(s) -> np.ndarray:
    arr = s.samples if isinstance(s, RealDistribution) else np.sort(np.asarray(s, float))
    if len(arr) == 0:
        raise ValueError("empty sample")
    return arr


def ks_two_sample(s1, s2) -> TestReport:
    """Two-sample Kolmogorov-Smirnov test.

    The statistic is the exact sup of the difference of the empirical CDFs,
    evaluated at every pooled jump point.  The p-value is the asymptotic
    Kolmogorov tail at ``sqrt(n1 n2 / (n1 + n2)) * D``.
    """
    a, b = _samples(s1), _samples(s2)
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / len(a)
    cdf_b = np.searchsorted(b, pooled, side="right") / len(b)
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    en = len(a) * len(b) / (len(a) + len(b))
    p = float(special.kolmogorov(math.sqrt(en) * d))
    return TestReport(d, min(1.0, p), "ks", {"n1": len(a), "n2": len(b), "effective_n": en})


def chi2_counts(a1, a2, method: str = "chi2") -> TestReport:
    """Chi-squared homogeneity statistic sum (A1 - A2)^2 / (A1 + A2).

    Bins empty in both samples are dropped; dof is (nonzero bins) - 1.
    """
    a1, a2 = np.asarray(a1, dtype=np.float64), np.asarray(a2, dtype=np.float64)
    if a1.shape != a2.shape:
        raise ValueError("count vectors differ in length")
    tot = a1 + a2
    keep = tot > 0
    dof = int(np.count_nonzero(keep)) - 1
    if dof < 1:
        raise InsufficientData("fewer than 2 nonzero bins; chi-squared has 0 degrees of freedom")
    stat = float(np.sum((a1[keep] - a2[keep]) ** 2 / tot[keep]))
    p = float(stats.chi2.sf(stat, dof))
    return TestReport(stat, p, method, {"dof": dof, "counts1": a1.tolist(), "counts2": a2.tolist()})


def chi2_histogram(s1, s2, bins: int = 25, range: tuple[float, float] | None = None) -> TestReport:
    """Chi-squared test on equal-width histograms of two real samples.

    The histogram range is ``range`` widened, if needed, to the pooled
    min and max of both samples.
    """
    if bins < 2:
        raise InsufficientData("need at least 2 bins")
    a, b = _samples(s1), _samples(s2)
    lo, hi = float(min(a[0], b[0])), float(max(a[-1], b[-1]))
    if range is not None:
        lo, hi = min(lo, range[0]), max(hi, range[1])
    if hi <= lo:
        raise InsufficientData("all samples are equal; a single nonzero bin")
    edges = np.linspace(lo, hi, bins + 1)
    h1, _ = np.histogram(a, edges)
    h2, _ = np.histogram(b, edges)
    rep = chi2_counts(h1, h2, "chi2_histogram")
    return TestReport(rep.statistic, rep.p_value, rep.method, {**rep.params, "range": [lo, hi], "bins": bins})


def _nearest_reference_counts(dist: BarcodeDistribution, refs: Sequence[Barcode]) -> np.ndarray:
    counts = np.zeros(len(refs), dtype=np.int64)
    for atom, c in zip(dist.atoms, dist.counts):
        d = [bottleneck_distance(atom, r) for r in refs]
        counts[int(np.argmin(d))] += c
    return counts


def chi2_reference_barcodes(
    dist1: BarcodeDistribution, dist2: BarcodeDistribution, refs: Sequence[Barcode]
) -> TestReport:
    """Chi-squared test after assigning each sample to its nearest reference.

    The references should be fixed before looking at the data.  Ties go to
    the lowest reference index.
    """
    if not refs:
        raise ValueError("no reference barcodes")
    c1 = _nearest_reference_counts(dist1, refs)
    c2 = _nearest_reference_counts(dist2, refs)
    return chi2_counts(c1, c2, "chi2_reference")


def binomial_tail(N: int, q: int, eps: float) -> float:
    """P(Binomial(N, eps) <= q), summed in log space."""
    if not (0 <= q <= N):
        raise ValueError("need 0 <= q <= N")
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    if q == N or eps == 0:
        return 1.0
    if eps == 1:
        return 0.0
    i = np.arange(q + 1)
    logs = (
        special.gammaln(N + 1)
        - special.gammaln(i + 1)
        - special.gammaln(N - i + 1)
        + i * math.log(eps)
        + (N - i) * math.log1p(-eps)
    )
    return float(min(1.0, math.exp(special.logsumexp(logs))))


def mass_hypothesis_test(
    dist: BarcodeDistribution, in_set: Callable[[Barcode], bool], eps: float, alpha: float
) -> TestReport:
    """Test H0: the distribution puts mass >= eps on a set of barcodes.

    H0 is rejected at level 1 - alpha when the binomial tail of the observed
    in-set count is below alpha.
    """
    if not (0 < eps < 1 and 0 < alpha < 1):
        raise ValueError("eps and alpha must lie in (0, 1)")
    if len(dist) == 0:
        raise ValueError("empty barcode distribution")
    q = sum(c for a, c in zip(dist.atoms, dist.counts) if in_set(a))
    N = dist.total
    tail = binomial_tail(N, q, eps)
    return TestReport(
        float(q),
        tail,
        "binomial_mass",
        {"N": N, "q": q, "eps": eps, "alpha": alpha, "reject": tail < alpha},
    )


def likelihood_score(b: Barcode, dist: BarcodeDistribution, eps: float) -> float:
    """Probability that a draw from ``dist`` lies within bottleneck distance < eps of ``b``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    hit = sum(c for a, c in zip(dist.atoms, dist.counts) if bottleneck_distance(b, a) < eps)
    return hit / dist.total


def normal_quantile(p: float) -> float:
    return float(stats.norm.ppf(p))


def median_ci_indices(m: int, alpha: float) -> tuple[int, int]:
    """1-based order-statistic indices of the normal-approximation median CI."""
    if m < 10:
        raise InsufficientData("the median interval needs at least 10 samples")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    u = normal_quantile(1 - alpha / 2)
    half = 0.5 * math.sqrt(m) * u
    lo = math.floor((m + 1) / 2 - half)
    hi = math.ceil((m + 1) / 2 + half)
    return max(1, lo), min(m, hi)


def median_confidence_interval(samples, alpha: float = 0.05) -> ConfidenceInterval:
    """Distribution-free 1 - alpha interval for the median from order statistics."""
    s = _samples(samples)
    lo, hi = median_ci_indices(len(s), alpha)
    return ConfidenceInterval(
        float(s[lo - 1]),
        float(s[hi - 1]),
        1 - alpha,
        "median_order_statistic",
        {"m": len(s), "low_index": lo, "high_index": hi, "median": float(s[(len(s) - 1) // 2])},
    )


def monte_carlo_pvalue(
    observed: float,
    null_sampler: Callable[[np.random.Generator], float],
    trials: int,
    tail: str = "upper",
    rng: np.random.Generator | None = None,
) -> float:
    """(1 + #{null draws at least as extreme}) / (trials + 1).

    For ``two-sided`` the extremity is the distance from the null median.
    """
    if trials < 100:
        raise ValueError("use at least 100 trials")
    if tail not in ("upper", "lower", "two-sided"):
        raise ValueError("tail must be 'upper', 'lower' or 'two-sided'")
    rng = np.random.default_rng() if rng is None else rng
    null = np.array([null_sampler(rng) for _ in range(trials)], dtype=np.float64)
    if tail == "upper":
        hits = np.count_nonzero(null >= observed)
    elif tail == "lower":
        hits = np.count_nonzero(null <= observed)
    else:
        center = float(np.median(null))
        hits = np.count_nonzero(np.abs(null - center) >= abs(observed - center))
    return (1 + int(hits)) / (trials + 1)

"""Barcodes, the bottleneck distance and per-barcode summaries."""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

__all__ = [
    "Barcode",
    "bottleneck_distance",
    "bottleneck_bruteforce",
    "truncate",
    "gap_statistic",
    "long_bar_count",
    "parse_reference",
]

BRUTEFORCE_MAX_INTERVALS = 8


@dataclass(frozen=True)
class Barcode:
    """Finite multiset of half-open intervals ``[birth, death)``.

    Intervals are kept sorted by (birth, death), multiplicity by repetition,
    so ``==`` and ``hash`` are multiset equality.
    """

    intervals: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        ivs = tuple(sorted((float(a), float(b)) for a, b in self.intervals))
        for a, b in ivs:
            if not (0 <= a < b < np.inf):
                raise ValueError(f"invalid interval [{a}, {b})")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Iterable[float]]) -> Barcode:
        return cls(tuple((a, b) for a, b in pairs))

    def __len__(self) -> int:
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    @cached_property
    def array(self) -> np.ndarray:
        """(m, 2) array of the intervals."""
        if not self.intervals:
            return np.zeros((0, 2))
        return np.array(self.intervals, dtype=np.float64)

    @cached_property
    def lengths(self) -> np.ndarray:
        arr = self.array
        return arr[:, 1] - arr[:, 0]

    def to_json(self) -> str:
        return json.dumps({"intervals": [list(iv) for iv in self.intervals]})

    @classmethod
    def from_json(cls, text: str) -> Barcode:
        data = json.loads(text)
        return cls.from_pairs(data["intervals"])

    def to_text(self) -> str:
        return "".join(f"{a!r} {b!r}\n" for a, b in self.intervals)

    @classmethod
    def from_text(cls, text: str) -> Barcode:
        pairs = [line.split() for line in text.splitlines() if line.strip()]
        return cls.from_pairs((float(a), float(b)) for a, b in pairs)

    def __repr__(self) -> str:
        body = ", ".join(f"[{a:g},{b:g})" for a, b in self.intervals)
        return f"Barcode({{{body}}})"


_REF_TERM = re.compile(r"\s*(\d+)\s*[x×*]\s*\[\s*([^,\]]+)\s*,\s*([^)\]]+)\s*[)\]]\s*")


def parse_reference(text: str) -> Barcode:
    """Parse reference barcodes written as repeated ``m x [a,b)`` terms.

    ``"5x[0,2)"`` is five copies of [0, 2); terms may be separated by
    whitespace, ``+`` or ``,``.  ``"0x[0.4,0.55)"`` and ``""`` give the
    empty barcode.
    """
    pos, pairs = 0, []
    text = text.strip()
    while pos < len(text):
        m = _REF_TERM.match(text, pos)
        if not m:
            raise ValueError(f"cannot parse reference barcode near {text[pos:]!r}")
        count, a, b = int(m.group(1)), float(m.group(2)), float(m.group(3))
        pairs.extend([(a, b)] * count)
        pos = m.end()
        while pos < len(text) and text[pos] in "+, ":
            pos += 1
    return Barcode.from_pairs(pairs)


def _cost_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.maximum(
        np.abs(x[:, None, 0] - y[None, :, 0]), np.abs(x[:, None, 1] - y[None, :, 1])
    )


def _perfect_matching_exists(allowed: np.ndarray) -> bool:
    graph = csr_matrix(allowed.astype(np.int8))
    match = maximum_bipartite_matching(graph, perm_type="column")
    return bool(np.all(match >= 0))


def bottleneck_distance(b1: Barcode, b2: Barcode) -> float:
    """Exact bottleneck distance.

    Matching an interval to the empty interval costs half its length.  The
    optimum is one of the finitely many pairwise or half-length costs, so we
    binary search that candidate list with a perfect-matching test on the
    usual doubled bipartite graph (each side padded with diagonal copies of
    the other side).
    """
    x, y = b1.array, b2.array
    p, q = len(x), len(y)
    if p == 0 and q == 0:
        return 0.0
    hx = (x[:, 1] - x[:, 0]) / 2 if p else np.zeros(0)
    hy = (y[:, 1] - y[:, 0]) / 2 if q else np.zeros(0)
    if p == 0:
        return float(hy.max())
    if q == 0:
        return float(hx.max())
    cross = _cost_matrix(x, y)
    # Everything to the diagonal is always a valid matching.
    upper = float(max(hx.max(), hy.max()))
    cand = np.unique(np.concatenate([cross.ravel(), hx, hy]))
    cand = cand[cand <= upper]

    size = p + q
    # rows: x intervals then diagonal copies of y; cols: y intervals then diagonal copies of x
    allowed = np.zeros((size, size), dtype=bool)
    allowed[p:, q:] = True

    def feasible(t: float) -> bool:
        allowed[:p, :q] = cross <= t
        allowed[:p, q:] = False
        allowed[np.arange(p), q + np.arange(p)] = hx <= t
        allowed[p:, :q] = False
        allowed[p + np.arange(q), np.arange(q)] = hy <= t
        return _perfect_matching_exists(allowed)

    lo, hi = 0, len(cand) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(cand[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(cand[lo])


def bottleneck_bruteforce(b1: Barcode, b2: Barcode) -> float:
    """Bottleneck distance by enumerating every partial matching."""
    x, y = list(b1.intervals), list(b2.intervals)
    if len(x) + len(y) > BRUTEFORCE_MAX_INTERVALS:
        raise ValueError(f"brute force limited to {BRUTEFORCE_MAX_INTERVALS} intervals in total")
    if len(x) < len(y):
        x, y = y, x

    def d_inf(i, j):
        return max(abs(i[0] - j[0]), abs(i[1] - j[1]))

    def half(i):
        return (i[1] - i[0]) / 2

    best = float("inf")
    # partner[j] is the x-index matched to y[j], or None for the empty interval
    for partner in itertools.product([None, *range(len(x))], repeat=len(y)):
        used = [i for i in partner if i is not None]
        if len(used) != len(set(used)):
            continue
        cost = 0.0
        for j, i in enumerate(partner):
            cost = max(cost, half(y[j]) if i is None else d_inf(x[i], y[j]))
        for i in set(range(len(x))) - set(used):
            cost = max(cost, half(x[i]))
        best = min(best, cost)
    return best


def truncate(b: Barcode, cutoff: float) -> Barcode:
    """Clip every interval at ``cutoff``, dropping the ones that become empty."""
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    clipped = ((min(a, cutoff), min(d, cutoff)) for a, d in b.intervals)
    return Barcode(tuple((a, d) for a, d in clipped if a < d))


def gap_statistic(b: Barcode, m: int) -> float:
    """Length of the m-th longest interval minus the (m+1)-th (missing = 0)."""
    if m < 1:
        raise ValueError("m must be at least 1")
    lengths = np.sort(b.lengths)[::-1]
    padded = np.concatenate([lengths, np.zeros(max(0, m + 1 - len(lengths)))])
    return float(padded[m - 1] - padded[m])


def long_bar_count(b: Barcode, threshold: float) -> int:
    """Number of intervals strictly longer than ``threshold``."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    return int(np.count_nonzero(b.lengths > threshold))

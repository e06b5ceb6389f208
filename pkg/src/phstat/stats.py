"""Empirical barcode distributions and the statistics computed from them.

A :class:`BarcodeDistribution` is the Monte Carlo estimate of the law of
the degree-k barcode of an n-point sample: K subsamples are drawn from the
space's measure, each is turned into a filtered complex and a truncated
barcode, and identical barcodes are merged into weighted atoms.

Randomness follows one rule: subsample ``i`` draws from its own stream
derived from ``(seed, i)``, so the estimate does not depend on how the
work is split across processes.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .barcode import Barcode, bottleneck_distance, gap_statistic
from .filtration import DEFAULT_MAX_SIMPLICES, vietoris_rips, weak_witness
from .mm_space import FiniteMetricSpace, prohorov_finite
from .persistence import compute_barcode

__all__ = [
    "BarcodeDistribution",
    "RealDistribution",
    "subsample_stream",
    "phi_estimate",
    "phi_estimate_two_stage",
    "distance_distribution_D2",
    "distance_distribution_DB",
    "bottleneck_matrix",
    "prohorov_barcode",
    "hd",
    "mhd",
    "trimmed_mhd",
    "gap_median",
    "gap_max",
    "lower_median",
]

COMPLEX_KINDS = ("rips", "witness")


def subsample_stream(seed, *key: int) -> np.random.Generator:
    """Independent generator for ``key`` under the master ``seed``."""
    if isinstance(seed, np.random.SeedSequence):
        seq = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    else:
        seq = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.default_rng(seq)


@dataclass(frozen=True)
class RealDistribution:
    """Sorted finite sample of reals."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.sort(np.asarray(self.samples, dtype=np.float64).ravel())
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return len(self.samples)

    def median(self) -> float:
        return lower_median(self.samples)

    def to_json(self) -> str:
        return json.dumps(self.samples.tolist())

    @classmethod
    def from_json(cls, text: str) -> RealDistribution:
        return cls(np.array(json.loads(text), dtype=np.float64))

    def to_text(self) -> str:
        return "".join(f"{x!r}\n" for x in self.samples.tolist())


def lower_median(values) -> float:
    """Median; for an even count the lower of the two middle order statistics."""
    s = np.sort(np.asarray(values, dtype=np.float64))
    if len(s) == 0:
        raise ValueError("median of an empty sample")
    return float(s[(len(s) - 1) // 2])


@dataclass(frozen=True, eq=False)
class BarcodeDistribution:
    """Empirical measure on barcodes: distinct atoms with integer counts.

    Atom ``i`` has weight ``counts[i] / total`` exactly.  When built from
    samples, ``order`` records the atom index of each sample in draw order;
    it is kept in memory only.
    """

    atoms: tuple[Barcode, ...]
    counts: tuple[int, ...]
    meta: dict = field(default_factory=dict)
    order: tuple[int, ...] | None = None

    def __post_init__(self):
        if len(self.atoms) != len(self.counts):
            raise ValueError("atoms and counts differ in length")
        if any(c <= 0 for c in self.counts):
            raise ValueError("atom counts must be positive")
        if len(set(self.atoms)) != len(self.atoms):
            raise ValueError("atoms must be distinct")

    @classmethod
    def from_samples(cls, barcodes: Sequence[Barcode], meta: dict | None = None):
        """Merge equal barcodes, keeping atoms in order of first appearance."""
        index: dict[Barcode, int] = {}
        atoms, counts, order = [], [], []
        for b in barcodes:
            i = index.get(b)
            if i is None:
                i = index[b] = len(atoms)
                atoms.append(b)
                counts.append(0)
            counts[i] += 1
            order.append(i)
        return cls(tuple(atoms), tuple(counts), dict(meta or {}), tuple(order))

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def weights(self) -> list[Fraction]:
        t = self.total
        return [Fraction(c, t) for c in self.counts]

    def __len__(self) -> int:
        return len(self.atoms)

    def expanded(self) -> list[Barcode]:
        return [a for a, c in zip(self.atoms, self.counts) for _ in range(c)]

    def in_draw_order(self) -> list[Barcode]:
        """Samples in the order drawn (atom order if that is unknown)."""
        if self.order is None:
            return self.expanded()
        return [self.atoms[i] for i in self.order]

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "atoms": [
                {"barcode": [list(iv) for iv in a.intervals], "count": c}
                for a, c in zip(self.atoms, self.counts)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> BarcodeDistribution:
        atoms = [Barcode.from_pairs(a["barcode"]) for a in data["atoms"]]
        counts = [int(a["count"]) for a in data["atoms"]]
        return cls(tuple(atoms), tuple(counts), dict(data.get("meta", {})))

    @classmethod
    def from_json(cls, text: str) -> BarcodeDistribution:
        return cls.from_dict(json.loads(text))


# -- estimating the distribution ----------------------------------------------

_WORKER_STATE: dict = {}


def _init_worker(state: dict) -> None:
    _WORKER_STATE.clear()
    _WORKER_STATE.update(state)


def _draw_subsample(state: dict, i: int) -> np.ndarray:
    rng = subsample_stream(state["seed"], 1, i)
    n_pts = len(state["weights"])
    return rng.choice(n_pts, size=state["n"], replace=state["replace"], p=state["weights"])


def _one_barcode(state: dict, i: int) -> Barcode:
    idx = _draw_subsample(state, i)
    dist = state["dist"]
    k, cutoff = state["k"], state["cutoff"]
    if state["kind"] == "rips":
        cx = vietoris_rips(dist[np.ix_(idx, idx)], k + 1, cutoff, state["max_simplices"])
    else:
        cx = weak_witness(dist, np.unique(idx), k + 1, cutoff, max_simplices=state["max_simplices"])
    return compute_barcode(cx, k, state["reduced_h0"], cutoff)


def _barcode_chunk(indices: Sequence[int]) -> list[Barcode]:
    return [_one_barcode(_WORKER_STATE, i) for i in indices]


def phi_estimate(
    space: FiniteMetricSpace,
    n: int,
    k: int,
    K: int,
    cutoff: float,
    complex_kind: str = "rips",
    seed=0,
    *,
    replace: bool = True,
    reduced_h0: bool = False,
    threads: int = 1,
    max_simplices: int = DEFAULT_MAX_SIMPLICES,
    progress: Callable[[int], None] | None = None,
) -> BarcodeDistribution:
    """Monte Carlo estimate of the degree-k barcode law of n-point samples.

    Args:
        space: metric measure space to sample from.
        n: points per subsample, drawn i.i.d. from ``space.weights``
            (without replacement when ``replace`` is false).
        k: homology degree.
        K: number of subsamples.
        cutoff: scale truncation of the filtration and of every bar.
        complex_kind: ``"rips"`` on the subsample, or ``"witness"`` with the
            distinct subsample points as landmarks and all of ``space`` as
            witnesses.
        seed: master seed; subsample ``i`` uses the stream ``(seed, 1, i)``.
        threads: worker processes; the result does not depend on it.
    """
    if complex_kind not in COMPLEX_KINDS:
        raise ValueError(f"complex_kind must be one of {COMPLEX_KINDS}")
    if n < 1 or K < 1 or k < 0:
        raise ValueError("need n >= 1, K >= 1 and k >= 0")
    if not replace and n > space.n_points:
        raise ValueError("n exceeds the space size for sampling without replacement")
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    state = {
        "dist": space.dist,
        "weights": np.asarray(space.weights),
        "seed": seed,
        "n": n,
        "k": k,
        "cutoff": float(cutoff),
        "kind": complex_kind,
        "replace": replace,
        "reduced_h0": reduced_h0,
        "max_simplices": max_simplices,
    }
    if threads <= 1:
        barcodes = []
        for i in range(K):
            barcodes.append(_one_barcode(state, i))
            if progress is not None:
                progress(i + 1)
    else:
        chunks = [list(range(s, min(K, s + 32))) for s in range(0, K, 32)]
        with ProcessPoolExecutor(threads, initializer=_init_worker, initargs=(state,)) as pool:
            barcodes = [b for part in pool.map(_barcode_chunk, chunks) for b in part]
    seed_meta = int(seed.entropy) if isinstance(seed, np.random.SeedSequence) else int(seed)
    meta = {
        "n": n,
        "k": k,
        "K": K,
        "cutoff": float(cutoff),
        "complex_kind": complex_kind,
        "seed": seed_meta,
        "replace": replace,
        "reduced_h0": reduced_h0,
    }
    return BarcodeDistribution.from_samples(barcodes, meta)


def phi_estimate_two_stage(
    space: FiniteMetricSpace,
    N: int,
    n: int,
    k: int,
    K: int,
    cutoff: float,
    complex_kind: str = "rips",
    seed=0,
    *,
    replace: bool = True,
    pool_replace: bool = True,
    **kwargs,
) -> BarcodeDistribution:
    """Draw an N-point empirical space first, then estimate on it.

    The pool is drawn from stream ``(seed, 0)``; with ``pool_replace=False``
    it is drawn without replacement (requires N <= |space|).
    """
    if N < n:
        raise ValueError("pool size N must be at least n")
    rng = subsample_stream(seed, 0)
    pool = rng.choice(space.n_points, size=N, replace=pool_replace, p=space.weights)
    dist = phi_estimate(
        space.subspace(pool), n, k, K, cutoff, complex_kind, seed, replace=replace, **kwargs
    )
    dist.meta["N"] = N
    return dist


# -- distribution-level statistics ---------------------------------------------


def _check_nonempty(dist: BarcodeDistribution) -> None:
    if len(dist) == 0:
        raise ValueError("empty barcode distribution")


def distance_distribution_D2(
    dist: BarcodeDistribution, pair_count: int, rng: np.random.Generator
) -> RealDistribution:
    """Bottleneck distances of ``pair_count`` i.i.d. pairs drawn from ``dist``."""
    _check_nonempty(dist)
    if pair_count < 1:
        raise ValueError("pair_count must be positive")
    p = np.array(dist.counts, dtype=np.float64) / dist.total
    draws = rng.choice(len(dist), size=(pair_count, 2), p=p)
    cache: dict[tuple[int, int], float] = {}
    out = np.empty(pair_count)
    for t, (i, j) in enumerate(draws.tolist()):
        key = (i, j) if i <= j else (j, i)
        if key not in cache:
            cache[key] = 0.0 if i == j else bottleneck_distance(dist.atoms[i], dist.atoms[j])
        out[t] = cache[key]
    return RealDistribution(out)


def _atom_distances(dist: BarcodeDistribution, ref: Barcode) -> np.ndarray:
    return np.array([bottleneck_distance(ref, a) for a in dist.atoms])


def distance_distribution_DB(dist: BarcodeDistribution, ref: Barcode) -> RealDistribution:
    """d_B(ref, -) pushed forward, one value per underlying subsample."""
    _check_nonempty(dist)
    return RealDistribution(np.repeat(_atom_distances(dist, ref), dist.counts))


def bottleneck_matrix(d1: BarcodeDistribution, d2: BarcodeDistribution) -> np.ndarray:
    return np.array([[bottleneck_distance(a, b) for b in d2.atoms] for a in d1.atoms])


def prohorov_barcode(d1: BarcodeDistribution, d2: BarcodeDistribution) -> float:
    """Prohorov distance between two barcode distributions (bottleneck ground metric)."""
    _check_nonempty(d1)
    _check_nonempty(d2)
    return prohorov_finite(
        np.array(d1.counts, dtype=np.int64),
        np.array(d2.counts, dtype=np.int64),
        bottleneck_matrix(d1, d2),
    )


def hd(dist: BarcodeDistribution, ref: BarcodeDistribution) -> float:
    """Homological distance of ``dist`` to a reference distribution."""
    return prohorov_barcode(dist, ref)


def mhd(
    dist: BarcodeDistribution,
    ref: Barcode,
    *,
    on_d2: bool = False,
    pair_count: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Median bottleneck distance from ``ref`` to a barcode drawn from ``dist``.

    ``on_d2=True`` instead returns the median of the pairwise distance
    distribution (``ref`` is then ignored); it needs ``rng`` and uses
    ``pair_count`` pairs (default: the sample count).
    """
    if on_d2:
        if rng is None:
            raise ValueError("on_d2 requires an rng")
        return distance_distribution_D2(dist, pair_count or dist.total, rng).median()
    return distance_distribution_DB(dist, ref).median()


def trimmed_mean(values, alpha: float) -> float:
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 0.5)")
    s = np.sort(np.asarray(values, dtype=np.float64))
    g = int(math.floor(alpha * len(s)))
    kept = s[g : len(s) - g]
    if len(kept) == 0:
        raise ValueError("trimming removed every sample")
    return float(kept.mean())


def trimmed_mhd(dist: BarcodeDistribution, ref: Barcode, alpha: float) -> float:
    """Mean of d_B(ref, -) after dropping floor(alpha*m) values at each end."""
    return trimmed_mean(distance_distribution_DB(dist, ref).samples, alpha)


def gap_median(dist: BarcodeDistribution, m: int) -> float:
    """Median over subsamples of the m-th gap statistic."""
    _check_nonempty(dist)
    gaps = np.repeat([gap_statistic(a, m) for a in dist.atoms], dist.counts)
    return lower_median(gaps)


def gap_max(dist: BarcodeDistribution, m_max: int) -> tuple[int, float]:
    """(argmax, max) of ``gap_median`` over m = 1..m_max, ties to the smallest m."""
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    best_m, best = 1, gap_median(dist, 1)
    for m in range(2, m_max + 1):
        g = gap_median(dist, m)
        if g > best:
            best_m, best = m, g
    return best_m, best

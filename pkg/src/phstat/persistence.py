"""Persistent homology over the two-element field.

``compute_barcode`` pairs simplices by reducing the coboundary matrix one
dimension at a time, lowest first.  Pairs found in degree d-1 clear the
matching d-simplex columns before degree d is reduced, and degree 0 is done
by union-find.  The pairing is identical to that of the standard boundary
matrix reduction, which is kept here as ``reduce_boundary_matrix`` together
with a rank-based oracle for testing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barcode import Barcode
from .filtration import FilteredComplex

__all__ = [
    "BoundaryMatrix",
    "boundary_matrix",
    "reduce_boundary_matrix",
    "compute_barcode",
    "compute_barcodes",
    "barcode_from_reduction",
    "rank_oracle_barcode",
]


@dataclass(frozen=True)
class BoundaryMatrix:
    """Columns of face row-indices in global filtration order."""

    columns: tuple[frozenset[int], ...]
    dims: tuple[int, ...]
    values: tuple[float, ...]


def boundary_matrix(complex_: FilteredComplex) -> BoundaryMatrix:
    simplices = complex_.simplices
    index = {s.vertices: i for i, s in enumerate(simplices)}
    columns = []
    for s in simplices:
        if s.dim == 0:
            columns.append(frozenset())
            continue
        v = s.vertices
        columns.append(frozenset(index[v[:i] + v[i + 1 :]] for i in range(len(v))))
    return BoundaryMatrix(
        tuple(columns),
        tuple(s.dim for s in simplices),
        tuple(s.filtration_value for s in simplices),
    )


def reduce_boundary_matrix(bm: BoundaryMatrix) -> dict[int, int]:
    """Plain left-to-right column reduction; returns {birth index: death index}."""
    low_to_col: dict[int, set[int]] = {}
    pairs = {}
    for j, col in enumerate(bm.columns):
        col = set(col)
        while col:
            low = max(col)
            other = low_to_col.get(low)
            if other is None:
                low_to_col[low] = col
                pairs[low] = j
                break
            col ^= other
    return pairs


def _finish(bars, k, reduced_h0, cutoff) -> Barcode:
    bars = [(a, min(b, cutoff)) for a, b in bars if a < cutoff]
    bars = [(a, b) for a, b in bars if a < b]
    if reduced_h0 and k == 0:
        ess = [i for i, (a, b) in enumerate(bars) if b == cutoff]
        if ess:
            oldest = min(ess, key=lambda i: bars[i][0])
            bars.pop(oldest)
    return Barcode(tuple(bars))


def barcode_from_reduction(
    complex_: FilteredComplex, k: int, reduced_h0: bool = False, cutoff: float | None = None
) -> Barcode:
    """Degree-k barcode via the plain boundary reduction (reference path)."""
    cutoff = complex_.cutoff if cutoff is None else cutoff
    bm = boundary_matrix(complex_)
    pairs = reduce_boundary_matrix(bm)
    deaths = set(pairs.values())
    bars = []
    for i, (dim, val) in enumerate(zip(bm.dims, bm.values)):
        if dim != k or i in deaths:
            continue
        bars.append((val, bm.values[pairs[i]] if i in pairs else cutoff))
    return _finish(bars, k, reduced_h0, cutoff)


# -- fast path ----------------------------------------------------------------


def _keys(verts: np.ndarray, base: int) -> np.ndarray:
    key = np.zeros(len(verts), dtype=np.int64)
    for c in range(verts.shape[1]):
        key = key * base + verts[:, c]
    return key


def _coboundaries(complex_: FilteredComplex, d: int) -> list[list[int]]:
    """For each d-simplex (by rank), the ranks of its (d+1)-cofaces."""
    faces, cofaces = complex_.skeleta[d], complex_.skeleta[d + 1]
    m = len(faces)
    if len(cofaces) == 0:
        return [[] for _ in range(m)]
    base = complex_.n_vertices + 1
    fkeys = _keys(faces, base)
    order = np.argsort(fkeys)
    sorted_keys = fkeys[order]
    owner, member = [], []
    tranks = np.arange(len(cofaces))
    for drop in range(cofaces.shape[1]):
        keep = [c for c in range(cofaces.shape[1]) if c != drop]
        fk = _keys(cofaces[:, keep], base)
        owner.append(order[np.searchsorted(sorted_keys, fk)])
        member.append(tranks)
    owner = np.concatenate(owner)
    member = np.concatenate(member)
    srt = np.lexsort((member, owner))
    owner, member = owner[srt], member[srt]
    bounds = np.searchsorted(owner, np.arange(m + 1))
    member = member.tolist()
    return [member[bounds[r] : bounds[r + 1]] for r in range(m)]


def _degree_zero(complex_: FilteredComplex):
    """Union-find pairing: (vertex rank, edge rank) pairs and essential vertices."""
    n = complex_.n_vertices
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    pairs = []
    edges = complex_.skeleta[1] if complex_.max_dim >= 1 else np.zeros((0, 2), int)
    for e, (u, v) in enumerate(edges.tolist()):
        ru, rv = find(u), find(v)
        if ru == rv:
            continue
        young, old = (ru, rv) if ru > rv else (rv, ru)
        parent[young] = old
        pairs.append((young, e))
    roots = sorted({find(x) for x in range(n)})
    return pairs, roots


def _reduce_cohomology(cob: list[list[int]], cleared: set[int]):
    pivots: dict[int, set[int]] = {}
    pairs, essential = [], []
    for r in range(len(cob) - 1, -1, -1):
        if r in cleared:
            continue
        col = cob[r]
        if not col:
            essential.append(r)
            continue
        piv = col[0]
        if piv not in pivots:
            # apparent pivot: nothing to add
            pivots[piv] = set(col)
            pairs.append((r, piv))
            continue
        col = set(col)
        while col:
            piv = min(col)
            other = pivots.get(piv)
            if other is None:
                break
            col ^= other
        if col:
            pivots[piv] = col
            pairs.append((r, piv))
        else:
            essential.append(r)
    return pairs, essential


def compute_barcodes(
    complex_: FilteredComplex,
    max_degree: int,
    reduced_h0: bool = False,
    cutoff: float | None = None,
) -> list[Barcode]:
    """Barcodes in degrees 0..max_degree (requires ``max_dim >= max_degree + 1``)."""
    if max_degree < 0:
        raise ValueError("homology degree must be nonnegative")
    if complex_.max_dim < max_degree + 1:
        raise ValueError(
            f"degree-{max_degree} deaths need simplices of dimension {max_degree + 1}; "
            f"complex only has max_dim={complex_.max_dim}"
        )
    if complex_.n_vertices == 0:
        raise ValueError("empty complex")
    cutoff = complex_.cutoff if cutoff is None else cutoff
    values = complex_.values

    pairs, essential = _degree_zero(complex_)
    out = []
    for d in range(max_degree + 1):
        if d > 0:
            cleared = {death for _, death in pairs}
            pairs, essential = _reduce_cohomology(_coboundaries(complex_, d), cleared)
        vd, vn = values[d], values[d + 1]
        bars = [(vd[b], vn[t]) for b, t in pairs] + [(vd[b], cutoff) for b in essential]
        out.append(_finish(bars, d, reduced_h0, cutoff))
    return out


def compute_barcode(
    complex_: FilteredComplex,
    k: int,
    reduced_h0: bool = False,
    cutoff: float | None = None,
) -> Barcode:
    """Degree-k barcode, truncated at ``cutoff`` (default: the complex's).

    Classes still alive at the cutoff get death = cutoff; zero-length bars
    are dropped.  With ``reduced_h0`` the oldest essential degree-0 bar is
    removed.
    """
    return compute_barcodes(complex_, k, reduced_h0, cutoff)[k]


# -- oracle -------------------------------------------------------------------


def _f2_rank(vectors: list[int]) -> int:
    basis: dict[int, int] = {}
    for v in vectors:
        while v:
            top = v.bit_length() - 1
            if top not in basis:
                basis[top] = v
                break
            v ^= basis[top]
    return len(basis)


def _f2_nullspace(columns: list[int], n_cols: int) -> list[int]:
    """Kernel basis of the map sending unit vector j to ``columns[j]``."""
    basis: dict[int, tuple[int, int]] = {}
    kernel = []
    for j in range(n_cols):
        v, combo = columns[j], 1 << j
        while v:
            top = v.bit_length() - 1
            if top not in basis:
                basis[top] = (v, combo)
                break
            bv, bc = basis[top]
            v ^= bv
            combo ^= bc
        if not v:
            kernel.append(combo)
    return kernel


def rank_oracle_barcode(
    complex_: FilteredComplex, k: int, cutoff: float | None = None
) -> Barcode:
    """Degree-k barcode from ranks of H_k(K_i) -> H_k(K_j) (small complexes only).

    Multiplicity of [t_i, t_j) is the usual inclusion-exclusion of the
    persistent Betti numbers over the sorted distinct filtration values.
    """
    cutoff = complex_.cutoff if cutoff is None else cutoff
    simplices = complex_.simplices
    ks = [s for s in simplices if s.dim == k]
    k1 = [s for s in simplices if s.dim == k + 1]
    kidx = {s.vertices: i for i, s in enumerate(ks)}
    km1 = {s.vertices: i for i, s in enumerate(s for s in simplices if s.dim == k - 1)}

    def boundary(s, index):
        v = s.vertices
        out = 0
        for i in range(len(v)):
            out ^= 1 << index[v[:i] + v[i + 1 :]]
        return out

    times = sorted({s.filtration_value for s in simplices})

    def cycles_upto(t):
        cols = [i for i, s in enumerate(ks) if s.filtration_value <= t]
        if k == 0:
            return [1 << i for i in cols]
        bd = [boundary(ks[i], km1) for i in cols]
        out = []
        for combo in _f2_nullspace(bd, len(cols)):
            vec, j = 0, 0
            while combo:
                if combo & 1:
                    vec ^= 1 << cols[j]
                combo >>= 1
                j += 1
            out.append(vec)
        return out

    def bounds_upto(t):
        return [boundary(s, kidx) for s in k1 if s.filtration_value <= t]

    m = len(times)
    beta = np.zeros((m + 2, m + 2), dtype=int)
    for i in range(1, m + 1):
        z = cycles_upto(times[i - 1])
        for j in range(i, m + 1):
            b = bounds_upto(times[j - 1])
            beta[i, j] = _f2_rank(z + b) - _f2_rank(b)
    bars = []
    for i in range(1, m + 1):
        for j in range(i + 1, m + 2):
            mult = beta[i, j - 1] - beta[i - 1, j - 1] - beta[i, j] + beta[i - 1, j]
            death = times[j - 1] if j <= m else cutoff
            bars.extend([(times[i - 1], death)] * int(mult))
    return _finish(bars, k, False, cutoff)

"""Filtered simplicial complexes built from finite metric spaces.

Both the Vietoris-Rips and the weak witness complex are flag complexes: an
edge value is computed from the metric, and every higher simplex enters at
the largest value among its edges.  Simplices of one dimension are stored as
an (m, d+1) integer array of sorted vertex indices together with their
values, already in filtration order (value, then lexicographic).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .mm_space import FiniteMetricSpace

__all__ = [
    "Simplex",
    "FilteredComplex",
    "ComplexTooLarge",
    "flag_complex",
    "vietoris_rips",
    "weak_witness",
    "witness_edge_values",
    "critical_values",
    "DEFAULT_MAX_SIMPLICES",
]

DEFAULT_MAX_SIMPLICES = 50_000_000
_CHUNK = 1 << 22


class ComplexTooLarge(RuntimeError):
    """Raised when a complex would exceed the simplex-count guard."""


@dataclass(frozen=True)
class Simplex:
    vertices: tuple[int, ...]
    filtration_value: float

    @property
    def dim(self) -> int:
        return len(self.vertices) - 1


@dataclass(frozen=True, eq=False)
class FilteredComplex:
    """Per-dimension simplex arrays in filtration order.

    Attributes:
        skeleta: ``skeleta[d]`` is an (m_d, d+1) int array of sorted vertices.
        values: ``values[d]`` holds the matching filtration values.
        cutoff: scale truncation; every value is ``<= cutoff``.
    """

    skeleta: tuple[np.ndarray, ...]
    values: tuple[np.ndarray, ...]
    cutoff: float

    @property
    def max_dim(self) -> int:
        return len(self.skeleta) - 1

    @property
    def n_vertices(self) -> int:
        return len(self.skeleta[0]) if self.skeleta else 0

    def __len__(self) -> int:
        return sum(len(s) for s in self.skeleta)

    def counts(self) -> list[int]:
        return [len(s) for s in self.skeleta]

    @property
    def simplices(self) -> list[Simplex]:
        """All simplices sorted by (value, dimension, vertices)."""
        out = [
            Simplex(tuple(int(v) for v in verts), float(val))
            for sk, vals in zip(self.skeleta, self.values)
            for verts, val in zip(sk, vals)
        ]
        out.sort(key=lambda s: (s.filtration_value, s.dim, s.vertices))
        return out

    def __iter__(self) -> Iterator[Simplex]:
        return iter(self.simplices)

    def dump(self) -> str:
        """Text form, one ``v1 v2 ... : value`` line per simplex."""
        return "".join(
            " ".join(map(str, s.vertices)) + f" : {s.filtration_value!r}\n" for s in self.simplices
        )


def _sort_simplices(verts: np.ndarray, vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keys = [verts[:, c] for c in range(verts.shape[1] - 1, -1, -1)] + [vals]
    order = np.lexsort(keys)
    return verts[order], vals[order]


def flag_complex(
    edge_values: np.ndarray,
    max_dim: int,
    cutoff: float,
    max_simplices: int = DEFAULT_MAX_SIMPLICES,
) -> FilteredComplex:
    """Clique complex of the graph of edges with value ``<= cutoff``.

    Cliques grow one vertex at a time, always appending a vertex larger than
    the current last one and adjacent to all current vertices, so each
    simplex is produced exactly once.
    """
    if max_dim < 0:
        raise ValueError("max_dim must be nonnegative")
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    ev = np.asarray(edge_values, dtype=np.float64)
    n = ev.shape[0]
    adj = ev <= cutoff
    np.fill_diagonal(adj, False)

    skeleta = [np.arange(n, dtype=np.int64).reshape(-1, 1)]
    values = [np.zeros(n)]
    total = n
    later = np.triu(np.ones((n, n), dtype=bool), k=1)
    for dim in range(1, max_dim + 1):
        prev, prev_vals = skeleta[-1], values[-1]
        if len(prev) == 0:
            skeleta.append(np.zeros((0, dim + 1), dtype=np.int64))
            values.append(np.zeros(0))
            continue
        new_verts, new_vals = [], []
        step = max(1, _CHUNK // max(n, 1))
        for start in range(0, len(prev), step):
            block = prev[start : start + step]
            mask = later[block[:, -1]].copy()
            for c in range(block.shape[1]):
                mask &= adj[block[:, c]]
            rows, extra = np.nonzero(mask)
            if len(rows) == 0:
                continue
            val = prev_vals[start + rows]
            for c in range(block.shape[1]):
                val = np.maximum(val, ev[block[rows, c], extra])
            new_verts.append(np.column_stack([block[rows], extra]))
            new_vals.append(val)
            total += len(rows)
            if total > max_simplices:
                raise ComplexTooLarge(
                    f"complex exceeds {max_simplices} simplices at dimension {dim}; "
                    "lower the cutoff, the subsample size or max_dim"
                )
        if new_verts:
            verts, vals = _sort_simplices(np.vstack(new_verts), np.concatenate(new_vals))
        else:
            verts, vals = np.zeros((0, dim + 1), dtype=np.int64), np.zeros(0)
        skeleta.append(verts)
        values.append(vals)
    return FilteredComplex(tuple(skeleta), tuple(values), float(cutoff))


def _distances(space) -> np.ndarray:
    return space.dist if isinstance(space, FiniteMetricSpace) else np.asarray(space, float)


def vietoris_rips(
    space, max_dim: int, cutoff: float, max_simplices: int = DEFAULT_MAX_SIMPLICES
) -> FilteredComplex:
    """Vietoris-Rips filtration: an edge enters at the distance of its ends."""
    return flag_complex(_distances(space), max_dim, cutoff, max_simplices)


def witness_edge_values(
    space, landmark_indices: Sequence[int], witness_indices: Sequence[int] | None = None
) -> np.ndarray:
    """min over witnesses p of max(d(a, p), d(b, p)) for every landmark pair."""
    d = _distances(space)
    lm = np.asarray(landmark_indices, dtype=np.intp)
    wit = np.arange(d.shape[0]) if witness_indices is None else np.asarray(witness_indices)
    to_wit = d[np.ix_(lm, wit)]
    L = len(lm)
    out = np.empty((L, L))
    for i in range(L):
        out[i] = np.min(np.maximum(to_wit[i][None, :], to_wit), axis=1)
    np.fill_diagonal(out, 0.0)
    return out


def weak_witness(
    space,
    landmark_indices: Sequence[int],
    max_dim: int,
    cutoff: float,
    witness_indices: Sequence[int] | None = None,
    max_simplices: int = DEFAULT_MAX_SIMPLICES,
) -> FilteredComplex:
    """Weak witness complex on the landmarks, witnessed by every point.

    Vertex ``i`` of the result is ``landmark_indices[i]``.
    """
    lm = list(landmark_indices)
    if not lm:
        raise ValueError("landmark set is empty")
    if len(set(lm)) != len(lm):
        raise ValueError("landmarks must be distinct")
    n = _distances(space).shape[0]
    if min(lm) < 0 or max(lm) >= n:
        raise ValueError("landmark index out of range")
    ev = witness_edge_values(space, lm, witness_indices)
    return flag_complex(ev, max_dim, cutoff, max_simplices)


def critical_values(space) -> list[float]:
    """Sorted distinct pairwise distances, the scales where Rips changes."""
    d = _distances(space)
    iu = np.triu_indices(d.shape[0], k=1)
    return [float(v) for v in np.unique(d[iu])]

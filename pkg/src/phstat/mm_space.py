"""Finite metric measure spaces, synthetic samplers and noise models.

Everything here is finite: a space is a dense distance matrix plus a
probability vector, optionally remembering the ambient coordinates it was
built from.  Samplers take an explicit ``numpy.random.Generator`` so that
every draw is a pure function of (parameters, seed).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist, squareform

__all__ = [
    "FiniteMetricSpace",
    "from_points",
    "from_distance_matrix",
    "sample_annulus",
    "sample_two_circles",
    "sample_sphere",
    "sample_torus",
    "sample_box",
    "metric_circle",
    "add_gaussian_noise",
    "replace_uniform_noise",
    "add_diameter_linkage",
    "distortion",
    "gromov_hausdorff_bruteforce",
    "prohorov_finite",
    "density_filter_knn",
    "load_point_cloud",
    "save_point_cloud",
    "format_point_cloud",
]

GH_MAX_POINTS = 7
_INT32_MAX = 2**31 - 1


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """A finite metric space with a probability measure on its points.

    Attributes:
        dist: (n, n) symmetric matrix of pairwise distances.
        weights: length-n probability vector.
        coords: optional (n, d) ambient coordinates ``dist`` was computed from.
    """

    dist: np.ndarray
    weights: np.ndarray
    coords: np.ndarray | None = field(default=None)

    def __post_init__(self):
        dist = np.array(self.dist, dtype=np.float64)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1] or dist.shape[0] == 0:
            raise ValueError("distance matrix must be square and nonempty")
        weights = np.array(self.weights, dtype=np.float64)
        if weights.shape != (dist.shape[0],):
            raise ValueError("weights length does not match the number of points")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (got {weights.sum()!r})")
        dist.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "weights", weights)
        if self.coords is not None:
            coords = np.array(self.coords, dtype=np.float64)
            coords.setflags(write=False)
            object.__setattr__(self, "coords", coords)

    @property
    def n_points(self) -> int:
        return self.dist.shape[0]

    def __len__(self) -> int:
        return self.n_points

    def validate(self, tol: float = 1e-9) -> None:
        """Raise ``ValueError`` unless the metric axioms hold.

        Symmetry and the zero diagonal are checked exactly; the triangle
        inequality within ``tol``.
        """
        d = self.dist
        if np.any(np.diag(d) != 0):
            raise ValueError("nonzero diagonal")
        if not np.array_equal(d, d.T):
            raise ValueError("distance matrix is not symmetric")
        if np.any(d < 0):
            raise ValueError("negative distance")
        # d[i, k] <= d[i, j] + d[j, k] for all j, one row at a time
        for j in range(d.shape[0]):
            if np.any(d > d[:, j, None] + d[None, j, :] + tol):
                raise ValueError("triangle inequality violated")

    def subspace(self, indices: Sequence[int]) -> FiniteMetricSpace:
        """Uniformly weighted subspace on ``indices`` (repeats allowed)."""
        idx = np.asarray(indices, dtype=np.intp)
        coords = None if self.coords is None else self.coords[idx]
        return FiniteMetricSpace(
            self.dist[np.ix_(idx, idx)], np.full(len(idx), 1.0 / len(idx)), coords
        )


def _as_coords(coords) -> np.ndarray:
    arr = np.asarray(coords, dtype=np.float64)
    if arr.ndim == 1 and arr.size and isinstance(coords[0], (int, float)):
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError("points must all have the same dimension")
    return arr


def _uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def from_points(coords, weights=None) -> FiniteMetricSpace:
    """Euclidean metric measure space on a list of points."""
    if len(coords) == 0:
        raise ValueError("no points given")
    try:
        pts = _as_coords(coords)
    except ValueError as exc:
        raise ValueError("points must all have the same dimension") from exc
    n = pts.shape[0]
    dist = squareform(pdist(pts)) if n > 1 else np.zeros((1, 1))
    w = _uniform(n) if weights is None else np.asarray(weights, dtype=np.float64)
    return FiniteMetricSpace(dist, w, pts)


def from_distance_matrix(dist, weights=None) -> FiniteMetricSpace:
    dist = np.asarray(dist, dtype=np.float64)
    w = _uniform(dist.shape[0]) if weights is None else weights
    return FiniteMetricSpace(dist, w)


# -- samplers -----------------------------------------------------------------


def sample_annulus(
    n: int,
    r_in: float = 0.8,
    r_out: float = 1.2,
    rng: np.random.Generator | None = None,
    *,
    return_proposals: bool = False,
):
    """Area-uniform points in a closed annulus by rejection from its bounding box.

    With ``return_proposals`` the number of box proposals consumed up to the
    last accepted point is returned as well.
    """
    if not 0 < r_in < r_out:
        raise ValueError("need 0 < r_in < r_out")
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = np.random.default_rng() if rng is None else rng
    out = np.empty((n, 2))
    filled = proposals = 0
    while filled < n:
        batch = rng.uniform(-r_out, r_out, size=(max(64, 2 * (n - filled)), 2))
        rad = np.hypot(batch[:, 0], batch[:, 1])
        accepted = np.flatnonzero((rad >= r_in) & (rad <= r_out))
        take = accepted[: n - filled]
        out[filled : filled + len(take)] = batch[take]
        filled += len(take)
        proposals += int(take[-1]) + 1 if filled == n and len(take) else len(batch)
    return (out, proposals) if return_proposals else out


def sample_two_circles(n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Length-uniform points on the radius-2 circle at the origin and the
    radius-1 circle centred at (0.8, 0)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = np.random.default_rng() if rng is None else rng
    theta = rng.uniform(0.0, 2 * np.pi, size=n)
    big = rng.uniform(size=n) < 2.0 / 3.0
    radius = np.where(big, 2.0, 1.0)
    cx = np.where(big, 0.0, 0.8)
    return np.column_stack([cx + radius * np.cos(theta), radius * np.sin(theta)])


def sample_sphere(
    n: int, radius: float = 1.0, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Area-uniform points on the sphere of ``radius`` via normalised Gaussians."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = np.random.default_rng() if rng is None else rng
    z = rng.standard_normal(size=(n, 3))
    norms = np.linalg.norm(z, axis=1)
    while np.any(norms == 0):
        bad = norms == 0
        z[bad] = rng.standard_normal(size=(int(bad.sum()), 3))
        norms = np.linalg.norm(z, axis=1)
    return radius * z / norms[:, None]


def sample_torus(
    n: int,
    r: float = 0.5,
    R: float = 1.0,
    rng: np.random.Generator | None = None,
    *,
    return_proposals: bool = False,
):
    """Area-uniform points on the torus with minor radius ``r``, major ``R``.

    The angle around the tube is accepted with probability
    ``(R + r cos(theta)) / (R + r)``; the angle around the axis is uniform.
    """
    if not 0 < r < R:
        raise ValueError("need 0 < r < R")
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = np.random.default_rng() if rng is None else rng
    theta = np.empty(n)
    filled = proposals = 0
    while filled < n:
        m = max(64, 2 * (n - filled))
        cand = rng.uniform(0.0, 2 * np.pi, size=m)
        u = rng.uniform(size=m)
        accepted = np.flatnonzero(u < (R + r * np.cos(cand)) / (R + r))
        take = accepted[: n - filled]
        theta[filled : filled + len(take)] = cand[take]
        filled += len(take)
        proposals += int(take[-1]) + 1 if filled == n and len(take) else m
    psi = rng.uniform(0.0, 2 * np.pi, size=n)
    ring = R + r * np.cos(theta)
    pts = np.column_stack([ring * np.cos(psi), ring * np.sin(psi), r * np.sin(theta)])
    return (pts, proposals) if return_proposals else pts


def _check_bounds(bounds) -> np.ndarray:
    b = np.asarray(bounds, dtype=np.float64)
    if b.ndim != 2 or b.shape[1] != 2 or b.shape[0] == 0:
        raise ValueError("bounds must be a nonempty list of (low, high) pairs")
    if np.any(b[:, 0] >= b[:, 1]):
        raise ValueError("each bound needs low < high")
    return b


def sample_box(n: int, bounds, rng: np.random.Generator | None = None) -> np.ndarray:
    """Independent uniform coordinates inside an axis-aligned box."""
    b = _check_bounds(bounds)
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = np.random.default_rng() if rng is None else rng
    return rng.uniform(b[:, 0], b[:, 1], size=(n, b.shape[0]))


def metric_circle(k: int, ell: float, *, cyclic_standard: bool = True) -> FiniteMetricSpace:
    """``k`` equally spaced points on a circle with step length ``ell``.

    By default the usual cyclic distance ``ell * min(|i-j|, k-|i-j|)`` is used.
    ``cyclic_standard=False`` evaluates ``ell * min(|i-j|, |k-i-j|)`` literally
    with points labelled 1..k; that variant is only a pseudometric (distinct
    points can be at distance 0).
    """
    if k < 3:
        raise ValueError("metric circle needs at least 3 points")
    if ell <= 0:
        raise ValueError("step length must be positive")
    i = np.arange(1, k + 1)
    diff = np.abs(i[:, None] - i[None, :])
    if cyclic_standard:
        steps = np.minimum(diff, k - diff)
    else:
        steps = np.minimum(diff, np.abs(k - i[:, None] - i[None, :]))
        np.fill_diagonal(steps, 0)
    return FiniteMetricSpace(ell * steps.astype(np.float64), _uniform(k))


# -- noise models -------------------------------------------------------------


def add_gaussian_noise(coords, sigma2: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Perturb every coordinate by an independent N(0, sigma2) draw."""
    if sigma2 < 0:
        raise ValueError("variance must be nonnegative")
    pts = np.array(coords, dtype=np.float64)
    if sigma2 == 0:
        return pts
    rng = np.random.default_rng() if rng is None else rng
    return pts + rng.normal(0.0, math.sqrt(sigma2), size=pts.shape)


def replace_uniform_noise(
    coords,
    fraction: float,
    bounds,
    rng: np.random.Generator | None = None,
    *,
    count: int | None = None,
) -> np.ndarray:
    """Replace ``floor(fraction * n)`` randomly chosen points by box-uniform ones.

    An explicit ``count`` overrides ``fraction``.
    """
    pts = np.array(coords, dtype=np.float64)
    if count is None:
        if not 0 <= fraction <= 1:
            raise ValueError("fraction must lie in [0, 1]")
        count = int(math.floor(fraction * len(pts)))
    elif not 0 <= count <= len(pts):
        raise ValueError("count must lie in [0, number of points]")
    if count == 0:
        return pts
    rng = np.random.default_rng() if rng is None else rng
    which = rng.choice(len(pts), size=count, replace=False)
    pts[which] = sample_box(count, bounds, rng)
    return pts


def add_diameter_linkage(
    coords, count: int, rng: np.random.Generator | None = None, half_length: float = 0.8
) -> np.ndarray:
    """Append ``count`` points drawn uniformly from the segment {0} x [-0.8, 0.8]."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    pts = np.array(coords, dtype=np.float64).reshape(-1, 2)
    if count == 0:
        return pts
    rng = np.random.default_rng() if rng is None else rng
    ys = rng.uniform(-half_length, half_length, size=count)
    return np.vstack([pts, np.column_stack([np.zeros(count), ys])])


# -- Gromov-Hausdorff ---------------------------------------------------------


def _dist_of(space) -> np.ndarray:
    if isinstance(space, FiniteMetricSpace):
        return space.dist
    return np.asarray(space, dtype=np.float64)


def distortion(pairs: Iterable[tuple[int, int]], X, Y) -> float:
    """Exact distortion of a correspondence between two finite spaces."""
    dx, dy = _dist_of(X), _dist_of(Y)
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty relation")
    I = np.array([p[0] for p in pairs])
    J = np.array([p[1] for p in pairs])
    if set(I.tolist()) != set(range(len(dx))) or set(J.tolist()) != set(range(len(dy))):
        raise ValueError("relation is not a correspondence (some point is uncovered)")
    return float(np.max(np.abs(dx[np.ix_(I, I)] - dy[np.ix_(J, J)])))


def gromov_hausdorff_bruteforce(X, Y) -> float:
    """Exact Gromov-Hausdorff distance of two small finite spaces.

    Every correspondence contains the graph of a map X -> Y plus, for each
    point of Y missed by that map, one extra pair; distortion only grows
    with the relation, so a branch-and-bound search over those minimal
    relations finds the exact optimum.
    """
    dx = _dist_of(X).tolist()
    dy = _dist_of(Y).tolist()
    m, n = len(dx), len(dy)
    if m > GH_MAX_POINTS or n > GH_MAX_POINTS:
        raise ValueError(f"brute force limited to {GH_MAX_POINTS} points per space")
    # The full relation X x Y is a correspondence with distortion max(diam X, diam Y).
    best = max(max(map(max, dx)), max(map(max, dy)))
    pairs: list[tuple[int, int]] = []

    def cost(i, j, bound):
        worst = 0.0
        for p, q in pairs:
            c = abs(dx[i][p] - dy[j][q])
            if c > worst:
                worst = c
                if worst >= bound:
                    break
        return worst

    def cover_y(j, cur, covered):
        nonlocal best
        while j < n and covered[j]:
            j += 1
        if j == n:
            best = cur
            return
        for i in range(m):
            c = max(cur, cost(i, j, best))
            if c < best:
                pairs.append((i, j))
                cover_y(j + 1, c, covered)
                pairs.pop()

    def map_x(i, cur, covered):
        if i == m:
            cover_y(0, cur, covered)
            return
        for j in range(n):
            c = max(cur, cost(i, j, best))
            if c < best:
                pairs.append((i, j))
                covered[j] += 1
                map_x(i + 1, c, covered)
                covered[j] -= 1
                pairs.pop()

    map_x(0, 0.0, [0] * n)
    return best / 2.0


# -- Prohorov -----------------------------------------------------------------


def _integer_masses(w) -> np.ndarray:
    w = np.asarray(w)
    if np.issubdtype(w.dtype, np.integer):
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("counts must be nonnegative with positive total")
        return w.astype(np.int64)
    w = w.astype(np.float64)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be a probability vector")
    fracs = [Fraction(float(x)).limit_denominator(10**6) for x in w]
    denom = 1
    for f in fracs:
        denom = math.lcm(denom, f.denominator)
    return np.array([f.numerator * (denom // f.denominator) for f in fracs], dtype=object)


def _common_scale(a, b) -> tuple[list[int], list[int], int]:
    ta, tb = int(sum(int(x) for x in a)), int(sum(int(x) for x in b))
    total = math.lcm(ta, tb)
    return [int(x) * (total // ta) for x in a], [int(x) * (total // tb) for x in b], total


def _max_transport(a: list[int], b: list[int], allowed: np.ndarray) -> int:
    """Maximum mass movable from ``a`` to ``b`` along ``allowed`` pairs."""
    p, q = len(a), len(b)
    src, sink = 0, p + q + 1
    ii, jj = np.nonzero(allowed)
    if len(ii) == 0:
        return 0
    cap = sum(a)
    rows = np.concatenate([np.zeros(p, int), 1 + ii, 1 + p + np.arange(q)])
    cols = np.concatenate([1 + np.arange(p), 1 + p + jj, np.full(q, sink)])
    data = np.concatenate([a, np.full(len(ii), cap), b]).astype(np.int32)
    graph = csr_matrix((data, (rows, cols)), shape=(p + q + 2, p + q + 2))
    return int(maximum_flow(graph, src, sink).flow_value)


def prohorov_finite(mu1, mu2, d) -> float:
    """Exact Prohorov distance between two finitely supported measures.

    Args:
        mu1: weights (or integer counts) on the first support.
        mu2: weights (or integer counts) on the second support.
        d: (len(mu1), len(mu2)) matrix of ground distances.

    ``eps`` is feasible when at least ``1 - eps`` of the mass can be coupled
    along pairs at distance strictly below ``eps``.  The transportable mass
    is a step function of ``eps`` that only jumps just after a distance
    value, so the infimum is ``min_j max(v_j, 1 - F(v_j))`` over the sorted
    distinct distances ``v_j`` with ``F`` the max-flow value; ``v`` rises and
    ``1 - F`` falls, so binary search finds the crossing.
    """
    a, b = _integer_masses(mu1), _integer_masses(mu2)
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (len(a), len(b)):
        raise ValueError("distance matrix shape does not match the supports")
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    a, b, total = _common_scale(a, b)
    if total > _INT32_MAX // 2:
        raise ValueError("mass denominators too large for exact flow computation")
    support = np.outer(np.array(a) > 0, np.array(b) > 0)
    values = np.unique(d[support])
    values = values[values < 1.0]

    flows: dict[int, int] = {}

    def deficit(j: int) -> float:
        # 1 - F(v_j) with j = 0 meaning "no pair allowed"
        if j == 0:
            return 1.0
        if j not in flows:
            flows[j] = _max_transport(a, b, support & (d <= values[j - 1]))
        return (total - flows[j]) / total

    def level(j: int) -> float:
        return 0.0 if j == 0 else float(values[j - 1])

    lo, hi = 0, len(values)
    if level(hi) < deficit(hi):
        return min(1.0, deficit(hi))
    while lo < hi:
        mid = (lo + hi) // 2
        if level(mid) >= deficit(mid):
            hi = mid
        else:
            lo = mid + 1
    best = level(lo)
    if lo > 0:
        best = min(best, max(level(lo - 1), deficit(lo - 1)))
    return min(1.0, best)


# -- ingestion ----------------------------------------------------------------


def density_filter_knn(
    coords, k: int = 15, keep_fraction: float = 1.0, *, return_indices: bool = False
):
    """Keep the densest ``ceil(keep_fraction * n)`` points.

    Density is ranked by distance to the ``k``-th nearest other point
    (smaller is denser); ties go to the lower index.  Survivors are returned
    in their original order.
    """
    pts = _as_coords(coords)
    n = len(pts)
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n (n={n})")
    if not 0 < keep_fraction <= 1:
        raise ValueError("keep_fraction must lie in (0, 1]")
    kdist, _ = cKDTree(pts).query(pts, k=k + 1)
    order = np.lexsort((np.arange(n), kdist[:, k]))
    keep = np.sort(order[: math.ceil(keep_fraction * n)])
    return (pts[keep], keep) if return_indices else pts[keep]


def load_point_cloud(path, fmt: str | None = None, *, skip_header: bool = False) -> np.ndarray:
    """Read points from CSV (one point per row) or JSON (array of arrays)."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".") or "csv").lower()
    text = path.read_text()
    if fmt == "json":
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(rows, list):
            raise ValueError(f"{path}: expected an array of arrays")
    elif fmt == "csv":
        reader = csv.reader(line for line in text.splitlines() if line.strip())
        rows = list(reader)
        if skip_header:
            rows = rows[1:]
        try:
            rows = [[float(x) for x in row] for row in rows]
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from exc
    else:
        raise ValueError(f"unknown point cloud format {fmt!r}")
    if not rows:
        raise ValueError(f"{path}: no points")
    dim = len(rows[0])
    for lineno, row in enumerate(rows, 1):
        if not isinstance(row, list) or len(row) != dim or dim == 0:
            raise ValueError(f"{path}: row {lineno} has inconsistent dimension")
    return np.array(rows, dtype=np.float64)


def format_point_cloud(coords, fmt: str = "csv") -> str:
    """Text form of a point cloud; floats are written with full precision."""
    pts = _as_coords(coords)
    if fmt == "json":
        return json.dumps(pts.tolist())
    if fmt == "csv":
        return "".join(",".join(repr(float(x)) for x in row) + "\n" for row in pts)
    raise ValueError(f"unknown point cloud format {fmt!r}")


def save_point_cloud(path, coords, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".") or "csv").lower()
    text = format_point_cloud(coords, fmt)
    path.write_text(text)

"""One test per acceptance criterion; each prints a PASS/FAIL line."""

import itertools
import math
import time
from fractions import Fraction
from math import comb

import numpy as np
import pytest

from phstat.barcode import Barcode, bottleneck_bruteforce, bottleneck_distance
from phstat.filtration import vietoris_rips
from phstat.inference import binomial_tail, chi2_histogram, ks_two_sample, median_ci_indices
from phstat.mm_space import from_distance_matrix, from_points, gromov_hausdorff_bruteforce, metric_circle, prohorov_finite
from phstat.persistence import compute_barcode
from phstat.reproduce import fraction_rows, reproduce
from phstat.stats import phi_estimate, prohorov_barcode

B = Barcode.from_pairs


def random_barcode(rng, max_len):
    pairs = []
    for _ in range(int(rng.integers(0, max_len + 1))):
        # a coarse grid makes ties and equal candidate costs common
        if rng.random() < 0.5:
            a, b = sorted(rng.choice([0.0, 0.25, 0.5, 1.0, 1.5, 2.0], 2, replace=False))
        else:
            a = float(rng.uniform(0, 2))
            b = a + float(rng.uniform(1e-3, 2))
        pairs.append((a, b))
    return B(pairs)


def test_01_bottleneck_matches_bruteforce(verdict):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(10_000):
        x, y = random_barcode(rng, 4), random_barcode(rng, 4)
        mismatches += bottleneck_distance(x, y) != bottleneck_bruteforce(x, y)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 10
    assert verdict(1, "bottleneck oracle equivalence", ok, f"{mismatches} mismatches in 10000 pairs, {elapsed:.1f}s")


def test_02_metric_axioms(verdict):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    failures = 0
    for _ in range(10_000):
        x, y, z = (random_barcode(rng, 4) for _ in range(3))
        xy, yx = bottleneck_distance(x, y), bottleneck_distance(y, x)
        xz, yz = bottleneck_distance(x, z), bottleneck_distance(y, z)
        failures += xy != yx
        failures += bottleneck_distance(x, x) != 0
        failures += (xy == 0) != (x == y)
        failures += xz > xy + yz + 1e-12
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 30
    assert verdict(2, "barcode metric axioms", ok, f"{failures} violations in 10000 triples, {elapsed:.1f}s")


def test_03_stability_inequality(verdict):
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    violations, worst = 0, 0.0
    for _ in range(500):
        X = from_points(rng.uniform(size=(int(rng.integers(1, 7)), 2)))
        Y = from_points(rng.uniform(size=(int(rng.integers(1, 7)), 2)))
        gh = gromov_hausdorff_bruteforce(X, Y)
        cutoff = 4.0  # above every diameter, so no bar is cut short
        for k in (0, 1):
            bx = compute_barcode(vietoris_rips(X, k + 1, cutoff), k)
            by = compute_barcode(vietoris_rips(Y, k + 1, cutoff), k)
            db = bottleneck_distance(bx, by)
            if db > gh + 1e-9:
                violations += 1
                worst = max(worst, db / gh)
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 60
    detail = f"{violations} of 1000 comparisons exceed d_GH (max ratio {worst:.3f}), {elapsed:.1f}s"
    assert verdict(3, "stability d_B <= d_GH", ok, detail)


def test_04_metric_circle_lemma(verdict):
    start = time.perf_counter()
    missing = []
    for k in range(8, 21):
        need = math.ceil(k / 3)
        bc = compute_barcode(vietoris_rips(metric_circle(k, 1), 2, need + 1), 1)
        if not any(a == 1 and b >= need for a, b in bc.intervals):
            missing.append(k)
    elapsed = time.perf_counter() - start
    ok = not missing and elapsed < 10
    assert verdict(4, "metric circle H1 bar [1, d>=ceil(k/3))", ok, f"failing k: {missing}, {elapsed:.1f}s")


def test_05_uniform_robustness(verdict):
    start = time.perf_counter()
    n, bound = 2, 2 * (1 - 12 / 13)
    worst = 0.0
    for s in range(20):
        rng = np.random.default_rng(500 + s)
        pts = rng.uniform(size=(12, 2))
        X = from_points(pts)
        Xp = from_points(np.vstack([pts, rng.uniform(size=(1, 2))]))
        a = phi_estimate(X, n, 0, 2000, 2.0, seed=2 * s)
        b = phi_estimate(Xp, n, 0, 2000, 2.0, seed=2 * s + 1)
        worst = max(worst, prohorov_barcode(a, b))
    elapsed = time.perf_counter() - start
    ok = worst <= bound + 0.05 and elapsed < 120
    detail = f"max d_Pr {worst:.4f} vs bound {bound:.4f} + 0.05 over 20 seeds, {elapsed:.1f}s"
    assert verdict(5, "uniform robustness bound", ok, detail)


def two_cluster_product(a, b, n):
    """Product measures of the two-cluster spaces on a common space Z^n.

    Z = X1 + X2 + Y2: X1 is shared, X2 and Y2 are the second clusters of
    X and Y.  Returns (mu_X^n, mu_Y^n, sup-metric distances).
    """
    alpha, beta, gamma, gamma2 = 0.5, 0.5, 3.0, 5.0
    groups = [0] * a + [1] * b + [2] * b
    size = len(groups)
    table = {
        (0, 0): alpha, (1, 1): beta, (2, 2): beta,
        (0, 1): gamma, (0, 2): gamma2, (1, 2): gamma2 - gamma,
    }
    dz = np.zeros((size, size))
    for i, j in itertools.combinations(range(size), 2):
        gi, gj = sorted((groups[i], groups[j]))
        dz[i, j] = dz[j, i] = table[gi, gj]
    from_distance_matrix(dz).validate()
    sx = [i for i in range(size) if groups[i] in (0, 1)]
    sy = [i for i in range(size) if groups[i] in (0, 2)]
    tx = list(itertools.product(sx, repeat=n))
    ty = list(itertools.product(sy, repeat=n))
    d = np.array([[max(dz[p, q] for p, q in zip(u, v)) for v in ty] for u in tx])
    return np.ones(len(tx), dtype=np.int64), np.ones(len(ty), dtype=np.int64), d


def test_06_tight_two_cluster(verdict):
    start = time.perf_counter()
    worst = 0.0
    for a, b in ((3, 1), (2, 1)):
        eps = b / (a + b)
        for n in (1, 2, 3):
            mx, my, d = two_cluster_product(a, b, n)
            worst = max(worst, abs(prohorov_finite(mx, my, d) - (1 - (1 - eps) ** n)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10
    assert verdict(6, "tight two-cluster 1-(1-eps)^n", ok, f"max error {worst:.2e}, {elapsed:.1f}s")


def test_07_binomial_tail(verdict):
    start = time.perf_counter()
    bd = binomial_tail(1000, 31, 0.05)
    worst = 0.0
    for N in range(51):
        for eps in (0.01, 0.05, 0.2, 0.5, 0.9):
            e = Fraction(eps)
            exact = Fraction(0)
            for q in range(N + 1):
                exact += comb(N, q) * e**q * (1 - e) ** (N - q)
                worst = max(worst, abs(binomial_tail(N, q, eps) - float(exact)))
    elapsed = time.perf_counter() - start
    ok = bd < 0.0022 and worst < 1e-12 and elapsed < 5
    assert verdict(7, "binomial tail", ok, f"BD(1000,31,0.05)={bd:.6f}, rational oracle max error {worst:.1e}, {elapsed:.1f}s")


def test_08_friendly_circles(verdict):
    result = reproduce("friendly-circles", levels=["0", "90"])
    cols = result.columns

    def masses(label):
        row = next(r for r in result.rows if r[1] == label)
        K = row[cols.index("K")]
        bars = [row[cols.index(f"{b}_bars")] / K for b in range(6)] + [row[cols.index("over_5")] / K]
        return np.array(bars)

    m0, m90 = masses("0"), masses("90")
    checks = {
        "{1,2,3} >= 0.95": m0[1:4].sum() >= 0.95,
        "mode at 2": int(np.argmax(m0)) == 2,
        "mass(2) in [0.55,0.85]": 0.55 <= m0[2] <= 0.85,
        ">=4 bars <= 0.02": m0[4:].sum() <= 0.02,
        "noise 90: >=4 bars <= 0.07": m90[4:].sum() <= 0.07,
    }
    failed = [k for k, v in checks.items() if not v]
    detail = (
        f"noise 0 masses {np.round(m0, 3).tolist()}, noise 90 masses {np.round(m90, 3).tolist()}"
        + (f"; failed: {failed}" if failed else "")
    )
    assert verdict(8, "friendly circles long-bar distribution", not failed, detail)


def test_09_annulus_calibration(verdict):
    result = reproduce("annulus-linkage", levels=["0.0%", "2.5%"])
    null_95 = fraction_rows(result, "ks_95")
    chi_95 = fraction_rows(result, "chi2_95")
    # the null row: both tests on both projections at the 95% level
    null_rates = [null_95[("annulus", "0.0%", p)] for p in ("D2", "DB")] + [chi_95[("annulus", "0.0%", p)] for p in ("D2", "DB")]
    power = fraction_rows(result, "ks_90")[("annulus", "2.5%", "DB")]
    ok = max(null_rates) <= 0.15 and power >= 0.3
    detail = f"0% rejection at 95% (KS D2, KS DB, chi2 D2, chi2 DB) = {null_rates}; 2.5% D_B1 KS rejection at 90% = {power}"
    assert verdict(9, "annulus KS calibration", ok, detail)


@pytest.mark.slow
def test_10_mhd_sphere(verdict):
    result = reproduce("mhd-sphere", levels=["0%"], degrees=[2])
    cols = result.columns
    med = {row[cols.index("m")]: row[cols.index("median")] for row in result.rows}
    ok = 0.01 <= med[1] <= 0.04 and med[1] < med[0] and med[1] < med[2]
    detail = "medians by reference bar count: " + ", ".join(f"m={m}: {v:.4f}" for m, v in sorted(med.items()))
    assert verdict(10, "MHD sphere H2", ok, detail)


def test_11_median_ci_indices(verdict):
    got = median_ci_indices(100, 0.05)
    assert verdict(11, "median CI indices", got == (40, 61), f"m=100, alpha=0.05 -> {got}")


def test_12_null_calibration(verdict):
    rng = np.random.default_rng(12)
    start = time.perf_counter()
    trials = 2000
    ks_rej = chi_rej = 0
    for _ in range(trials):
        a, b = rng.normal(size=500), rng.normal(size=500)
        ks_rej += ks_two_sample(a, b).rejects(0.95)
        chi_rej += chi2_histogram(a, b, 25).rejects(0.95)
    elapsed = time.perf_counter() - start
    ks_rate, chi_rate = ks_rej / trials, chi_rej / trials
    ok = abs(ks_rate - 0.05) <= 0.02 and abs(chi_rate - 0.05) <= 0.02 and elapsed < 120
    assert verdict(12, "null calibration at 95%", ok, f"KS {ks_rate:.4f}, chi2 {chi_rate:.4f}, {elapsed:.1f}s")

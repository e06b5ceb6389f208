import itertools

import numpy as np
import pytest

from phstat.barcode import Barcode, bottleneck_distance
from phstat.filtration import vietoris_rips
from phstat.inference import ks_two_sample
from phstat.mm_space import from_distance_matrix, from_points, metric_circle
from phstat.persistence import compute_barcode
from phstat.stats import (
    BarcodeDistribution,
    RealDistribution,
    distance_distribution_D2,
    distance_distribution_DB,
    gap_max,
    gap_median,
    hd,
    lower_median,
    mhd,
    phi_estimate,
    phi_estimate_two_stage,
    prohorov_barcode,
    subsample_stream,
    trimmed_mean,
    trimmed_mhd,
)

B = Barcode.from_pairs
EMPTY = Barcode()


def dist_of(*pairs):
    """BarcodeDistribution from (barcode, count) pairs."""
    return BarcodeDistribution(tuple(b for b, _ in pairs), tuple(c for _, c in pairs))


def random_dist(rng, atoms=4, grid=(0.0, 0.5, 1.0, 2.0)):
    out = {}
    for _ in range(atoms):
        m = int(rng.integers(0, 3))
        pairs = [tuple(sorted(rng.choice(grid, 2, replace=False))) for _ in range(m)]
        out[B(pairs)] = out.get(B(pairs), 0) + int(rng.integers(1, 6))
    return dist_of(*out.items())


class TestPhiEstimate:
    def test_single_point(self):
        X = from_points([(0.0, 0.0)])
        d1 = phi_estimate(X, 3, 1, 10, 1.0)
        assert d1.atoms == (EMPTY,) and d1.counts == (10,)
        d0 = phi_estimate(X, 3, 0, 10, 1.5)
        assert d0.atoms == (B([(0, 1.5)]),)

    def test_metric_circle_full_space(self):
        d = phi_estimate(metric_circle(20, 1), 20, 1, 5, 12, replace=False)
        assert d.counts == (5,)
        assert max(d.atoms[0].lengths) >= 6

    def test_meta_and_weights(self):
        d = phi_estimate(metric_circle(10, 1), 5, 1, 40, 4, seed=3)
        assert d.total == 40 and sum(d.weights) == 1
        assert d.meta["n"] == 5 and d.meta["K"] == 40
        assert len(d.order) == 40

    def test_seed_reproducible(self):
        X = from_points(np.random.default_rng(0).uniform(size=(30, 2)))
        a = phi_estimate(X, 10, 1, 30, 0.6, seed=7)
        b = phi_estimate(X, 10, 1, 30, 0.6, seed=7)
        c = phi_estimate(X, 10, 1, 30, 0.6, seed=8)
        assert a.to_json() == b.to_json()
        assert a.to_json() != c.to_json()

    def test_threads_do_not_change_result(self):
        X = from_points(np.random.default_rng(1).uniform(size=(30, 2)))
        a = phi_estimate(X, 10, 1, 24, 0.6, seed=2, threads=1)
        b = phi_estimate(X, 10, 1, 24, 0.6, seed=2, threads=2)
        assert a.to_json() == b.to_json() and a.order == b.order

    def test_witness_kind(self):
        X = from_points(np.random.default_rng(2).uniform(size=(40, 2)))
        d = phi_estimate(X, 8, 1, 10, 0.5, complex_kind="witness")
        assert d.total == 10

    def test_without_replacement_needs_room(self):
        X = from_points([(0,), (1,)])
        with pytest.raises(ValueError):
            phi_estimate(X, 3, 0, 5, 1, replace=False)

    @pytest.mark.parametrize("kw", [dict(n=0), dict(k=-1), dict(K=0), dict(complex_kind="cech")])
    def test_invalid(self, kw):
        args = dict(n=2, k=0, K=5, cutoff=1.0)
        args.update(kw)
        with pytest.raises(ValueError):
            phi_estimate(from_points([(0,), (1,)]), **args)


class TestTwoStage:
    def test_single_sample(self):
        X = from_points(np.random.default_rng(3).uniform(size=(20, 2)))
        d = phi_estimate_two_stage(X, 15, 5, 1, 1, 0.8)
        assert len(d) == 1

    def test_reproducible(self):
        X = from_points(np.random.default_rng(4).uniform(size=(20, 2)))
        a = phi_estimate_two_stage(X, 15, 5, 0, 30, 0.8, seed=1)
        b = phi_estimate_two_stage(X, 15, 5, 0, 30, 0.8, seed=1)
        assert a.atoms == b.atoms and a.counts == b.counts

    def test_full_pool_matches_direct(self):
        X = from_points(np.random.default_rng(5).uniform(size=(25, 2)))
        ref = B([(0, 0.3)])
        direct = phi_estimate(X, 6, 0, 400, 0.5, seed=11)
        staged = phi_estimate_two_stage(X, 25, 6, 0, 400, 0.5, seed=12, pool_replace=False)
        rep = ks_two_sample(distance_distribution_DB(direct, ref), distance_distribution_DB(staged, ref))
        assert not rep.rejects(0.99)

    def test_pool_larger_than_space(self):
        X = from_points([(0,), (1,)])
        with pytest.raises(ValueError):
            phi_estimate_two_stage(X, 3, 2, 0, 5, 1, pool_replace=False)


class TestDistanceDistributions:
    def test_d2_point_mass(self):
        d = dist_of((B([(0, 1)]), 5))
        s = distance_distribution_D2(d, 50, np.random.default_rng(0))
        assert len(s) == 50 and np.all(s.samples == 0)

    def test_d2_two_atoms(self):
        d = dist_of((EMPTY, 1), (B([(0, 2)]), 1))
        s = distance_distribution_D2(d, 1000, np.random.default_rng(1))
        assert set(s.samples.tolist()) <= {0.0, 1.0}
        assert np.mean(s.samples == 1.0) == pytest.approx(0.5, abs=0.05)

    def test_d2_errors(self):
        with pytest.raises(ValueError):
            distance_distribution_D2(dist_of((EMPTY, 1)), 0, np.random.default_rng())
        with pytest.raises(ValueError):
            distance_distribution_D2(BarcodeDistribution((), ()), 5, np.random.default_rng())

    def test_db_examples(self):
        d = dist_of((EMPTY, 3), (B([(0, 2)]), 7))
        assert distance_distribution_DB(d, EMPTY).samples.tolist() == [0] * 3 + [1] * 7
        assert np.all(distance_distribution_DB(dist_of((B([(0, 2)]), 4)), B([(0, 2)])).samples == 0)

    def test_db_reference_truncation(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            d = random_dist(rng, grid=(0.0, 0.5, 1.0, 2.0, 3.0))
            ref = B([(0, 3), (0.5, 2.5)])
            cut = B([(0, 2), (0.5, 2)])
            shift = 1.0  # largest change of an endpoint
            diff = distance_distribution_DB(d, ref).samples - distance_distribution_DB(d, cut).samples
            # sorted samples of 1-Lipschitz images differ pointwise by at most the shift
            assert np.all(np.abs(diff) <= shift + 1e-12)


class TestProhorovBarcode:
    def test_examples(self):
        d = random_dist(np.random.default_rng(3))
        assert prohorov_barcode(d, d) == 0
        p = dist_of((B([(0, 1)]), 1))
        q = dist_of((B([(0.4, 1)]), 1))
        assert prohorov_barcode(p, q) == pytest.approx(0.4)

    def test_hd_leak(self):
        # 30% of the mass is far from the reference atom
        d = dist_of((B([(0, 1)]), 7), (B([(0, 9)]), 3))
        ref = dist_of((B([(0, 1)]), 1))
        assert hd(d, ref) == pytest.approx(0.3, abs=1e-12)
        assert hd(ref, d) == hd(d, ref)

    def test_bounded_and_triangle(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            a, b, c = (random_dist(rng) for _ in range(3))
            ab, bc, ac = hd(a, b), hd(b, c), hd(a, c)
            assert 0 <= ab <= 1
            assert ac <= ab + bc + 1e-9


class TestMHD:
    def test_point_mass(self):
        b = B([(0, 1), (0.2, 0.9)])
        assert mhd(dist_of((b, 4)), b) == 0

    def test_odd_median(self):
        # distances 1, 2, 3 from the empty reference
        d = dist_of((B([(0, 2)]), 1), (B([(0, 4)]), 1), (B([(0, 6)]), 1))
        assert mhd(d, EMPTY) == 2

    def test_robust_to_tail(self):
        ref = B([(0, 1)])
        d = dist_of((B([(0, 1.2)]), 6), (B([(0, 11)]), 4))
        assert mhd(d, ref) == pytest.approx(0.2)
        assert distance_distribution_DB(d, ref).samples[-1] == 5.5

    def test_lower_median(self):
        assert lower_median([4, 1, 3, 2]) == 2
        d = dist_of((B([(0, 2)]), 1), (B([(0, 4)]), 1))
        assert mhd(d, EMPTY) == 1

    def test_on_d2(self):
        d = dist_of((EMPTY, 9), (B([(0, 2)]), 1))
        assert mhd(d, EMPTY, on_d2=True, rng=np.random.default_rng(0)) == 0
        with pytest.raises(ValueError):
            mhd(d, EMPTY, on_d2=True)

    def test_trimmed(self):
        assert trimmed_mean([0, 1, 1, 1, 100], 0.2) == 1
        assert trimmed_mean([2.5] * 7, 0.3) == 2.5
        v = np.random.default_rng(5).normal(size=101)
        assert trimmed_mean(v, 1e-9) == pytest.approx(v.mean())
        with pytest.raises(ValueError):
            trimmed_mean(v, 0.5)
        with pytest.raises(ValueError):
            trimmed_mean(v, 0)
        d = dist_of((B([(0, 2)]), 1), (B([(0, 4)]), 3), (B([(0, 200)]), 1))
        assert trimmed_mhd(d, EMPTY, 0.2) == 2

    def test_gap(self):
        d = dist_of((B([(0, 3), (0, 1)]), 5))
        assert gap_median(d, 1) == 2
        assert gap_max(d, 3) == (1, 2)
        e = dist_of((EMPTY, 2))
        assert all(gap_median(e, m) == 0 for m in (1, 2, 3))
        assert gap_max(e, 3) == (1, 0)


def _rips_barcode(space, idx, k, cutoff):
    sub = from_distance_matrix(space.dist[np.ix_(idx, idx)])
    return compute_barcode(vietoris_rips(sub, k + 1, cutoff), k)


class TestRobustness:
    def test_mhd_between_subsample_extremes(self):
        # 15/12 < 2^(1/3): more than half of the 3-subsamples of X' lie in X
        rng = np.random.default_rng(6)
        pts = rng.uniform(size=(12, 2))
        far = rng.uniform(size=(3, 2)) + 10
        X = from_points(pts)
        Xp = from_points(np.vstack([pts, far]))
        cutoff = 20.0
        ref = B([(0, 0.3), (0, 0.3)])
        values = [
            bottleneck_distance(ref, _rips_barcode(X, list(s), 0, cutoff))
            for s in itertools.combinations_with_replacement(range(12), 3)
        ]
        got = mhd(phi_estimate(Xp, 3, 0, 2000, cutoff, seed=0), ref)
        assert min(values) <= got <= max(values)


class TestSerialisation:
    def test_barcode_distribution_json(self):
        d = random_dist(np.random.default_rng(7))
        back = BarcodeDistribution.from_json(d.to_json())
        assert back.atoms == d.atoms and back.counts == d.counts

    def test_real_distribution(self):
        r = RealDistribution([3.0, 1.0, 2.0])
        assert r.samples.tolist() == [1, 2, 3]
        assert RealDistribution.from_json(r.to_json()).samples.tolist() == [1, 2, 3]
        assert r.to_text() == "1.0\n2.0\n3.0\n"
        with pytest.raises(ValueError):
            RealDistribution([np.nan])

    def test_invalid_distribution(self):
        with pytest.raises(ValueError):
            BarcodeDistribution((EMPTY, EMPTY), (1, 1))
        with pytest.raises(ValueError):
            BarcodeDistribution((EMPTY,), (0,))

    def test_stream_keys(self):
        a = subsample_stream(1, 2, 3).random()
        assert a == subsample_stream(1, 2, 3).random()
        assert a != subsample_stream(1, 3, 2).random()

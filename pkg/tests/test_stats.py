import numpy as np
import pytest

from pairjump import stats
from pairjump.stats import (DegenerateFitError, EnsembleAccumulator,
                            GridMismatchError, accumulate, estimate, merge,
                            total_variance_series, variance_growth)

GRID = np.linspace(0.0, 1.0, 6)
LABELS = ("e", "g")


def make_acc(lo=0, hi=0):
    return EnsembleAccumulator(grid=GRID, labels=LABELS, traj_lo=lo,
                               traj_hi=hi)


def random_contribs(rng, n):
    return (rng.normal(size=(n, len(GRID), 2, 2))
            + 1j * rng.normal(size=(n, len(GRID), 2, 2)))


class TestAccumulate:
    def test_single_trajectory_mean(self):
        rng = np.random.default_rng(0)
        c = random_contribs(rng, 2)
        acc = make_acc()
        accumulate(acc, c[0])
        accumulate(acc, c[1])
        est = estimate(acc)
        np.testing.assert_allclose(est.mean, c.mean(axis=0), atol=1e-14)

    def test_identical_values_zero_se(self):
        # sum-of-squares variance has a sqrt(eps)-level cancellation floor
        c = np.full((7, len(GRID), 2, 2), 0.3 - 0.4j)
        acc = make_acc()
        acc.add_batch(c)
        est = estimate(acc)
        np.testing.assert_allclose(est.mean, 0.3 - 0.4j, atol=1e-15)
        assert est.se_re.max() == pytest.approx(0.0, abs=1e-7)
        assert est.se_im.max() == pytest.approx(0.0, abs=1e-7)

    def test_two_point_distribution_se_closed_form(self):
        n, k = 500, 120
        a, b = 1.25, -0.75
        c = np.zeros((n, len(GRID), 2, 2), dtype=complex)
        c[:k, :, 0, 0] = a
        c[k:, :, 0, 0] = b
        acc = make_acc()
        acc.add_batch(c)
        est = estimate(acc)
        p_hat = k / n
        expect = np.sqrt(p_hat * (1 - p_hat) / (n - 1)) * abs(a - b)
        assert est.se_re[0, 0, 0] == pytest.approx(expect, rel=1e-12)
        # the population form sqrt(p(1-p)/n)|a-b| agrees to O(1/n)
        assert est.se_re[0, 0, 0] == pytest.approx(
            np.sqrt(p_hat * (1 - p_hat) / n) * abs(a - b), rel=2e-3)

    def test_grid_mismatch(self):
        acc = make_acc()
        with pytest.raises(GridMismatchError):
            acc.add_batch(np.zeros((1, 3, 2, 2), dtype=complex))

    def test_needs_two_trajectories(self):
        acc = make_acc()
        accumulate(acc, np.zeros((len(GRID), 2, 2), dtype=complex))
        with pytest.raises(ValueError):
            estimate(acc)


class TestMerge:
    def test_merge_with_empty_is_identity(self):
        rng = np.random.default_rng(1)
        acc = make_acc(0, 5)
        acc.add_batch(random_contribs(rng, 5))
        out = merge(acc, make_acc(5, 5))
        np.testing.assert_array_equal(out.entries.s, acc.entries.s)
        assert out.n == acc.n

    def test_commutative_under_range_order(self):
        rng = np.random.default_rng(2)
        a = make_acc(0, 4)
        a.add_batch(random_contribs(rng, 4))
        b = make_acc(4, 9)
        b.add_batch(random_contribs(rng, 5))
        ab = merge(a, b)
        ba = merge(b, a)
        np.testing.assert_array_equal(ab.entries.s, ba.entries.s)
        np.testing.assert_array_equal(ab.entries.sq_re, ba.entries.sq_re)
        np.testing.assert_array_equal(ab.herm.s, ba.herm.s)

    def test_worker_splits_fold_bitwise_identical(self):
        # chunk boundaries are fixed by config, never by worker count; any
        # assignment of chunks to workers must fold (in index order) to the
        # same bits.  Chunks here are recomputed per "worker" to mimic
        # independent processes.
        rng_data = np.random.default_rng(3)
        data = random_contribs(rng_data, 64)
        size = 8

        def build_chunk(c):
            acc = make_acc(c * size, (c + 1) * size)
            acc.add_batch(data[c * size:(c + 1) * size])
            return acc

        results = []
        for n_workers in (1, 2, 8):
            # worker w owns chunks w, w+n_workers, ... but the fold always
            # walks chunk index order
            produced = {}
            for w in range(n_workers):
                for c in range(w, 8, n_workers):
                    produced[c] = build_chunk(c)
            total = produced[0]
            for c in range(1, 8):
                total = merge(total, produced[c])
            results.append(estimate(total))
        for other in results[1:]:
            np.testing.assert_array_equal(other.mean, results[0].mean)
            np.testing.assert_array_equal(other.se_re, results[0].se_re)

    def test_grid_mismatch(self):
        other = EnsembleAccumulator(grid=np.linspace(0, 2, 6), labels=LABELS)
        with pytest.raises(GridMismatchError):
            merge(make_acc(), other)


class TestEstimate:
    def test_se_scales_inverse_sqrt_n(self):
        rng = np.random.default_rng(4)
        data = random_contribs(rng, 20_000)
        a = make_acc(0, 10_000)
        a.add_batch(data[:10_000])
        b = make_acc(0, 20_000)
        b.add_batch(data)
        ratio = estimate(a).se_re / estimate(b).se_re
        assert np.all(np.abs(ratio - np.sqrt(2.0)) < 0.1 * np.sqrt(2.0))

    def test_trace_and_herm_series(self):
        c = np.zeros((3, len(GRID), 2, 2), dtype=complex)
        c[:, :, 0, 0] = 0.25
        c[:, :, 1, 1] = 0.75
        c[:, :, 0, 1] = 0.1 + 0.2j
        c[:, :, 1, 0] = 0.1 - 0.2j  # hermitian contribution
        acc = make_acc()
        acc.add_batch(c)
        est = estimate(acc)
        np.testing.assert_allclose(est.trace_mean, 1.0, atol=1e-14)
        np.testing.assert_allclose(est.herm_mean, 0.0, atol=1e-14)


class TestVarianceGrowth:
    def test_zero_variance_reports_zero(self):
        acc = make_acc()
        acc.add_batch(np.full((10, len(GRID), 2, 2), 1.0 + 0.0j))
        assert variance_growth(acc) == 0.0

    def test_recovers_synthetic_rate(self):
        rng = np.random.default_rng(5)
        n = 4000
        grid = np.linspace(0.0, 2.0, 11)
        acc = EnsembleAccumulator(grid=grid, labels=LABELS)
        scale = np.exp(1.5 * grid / 2.0)  # variance rate 1.5
        c = rng.normal(size=(n, 11, 2, 2)) * scale[None, :, None, None]
        acc.add_batch(c.astype(complex))
        assert variance_growth(acc) == pytest.approx(1.5, abs=0.1)

    def test_doubling_n_keeps_rate_and_shrinks_se(self):
        rng = np.random.default_rng(7)
        grid = np.linspace(0.0, 2.0, 11)
        scale = np.exp(1.5 * grid / 2.0)
        data = rng.normal(size=(20_000, 11, 2, 2)) \
            * scale[None, :, None, None]
        half = EnsembleAccumulator(grid=grid, labels=LABELS)
        half.add_batch(data[:10_000].astype(complex))
        full = EnsembleAccumulator(grid=grid, labels=LABELS)
        full.add_batch(data.astype(complex))
        r_half = variance_growth(half)
        r_full = variance_growth(full)
        assert r_full == pytest.approx(r_half, abs=0.15)
        ratio = estimate(half).se_re / estimate(full).se_re
        assert np.median(ratio) == pytest.approx(np.sqrt(2.0), rel=0.05)

    def test_degenerate_fit(self):
        grid = np.linspace(0.0, 1.0, 12)
        acc = EnsembleAccumulator(grid=grid, labels=LABELS)
        c = np.zeros((8, 12, 2, 2), dtype=complex)
        c[:, 2, 0, 0] = np.linspace(0, 1, 8)  # variance at one point only
        acc.add_batch(c)
        with pytest.raises(DegenerateFitError):
            variance_growth(acc)

    def test_total_variance_series_nonnegative(self):
        rng = np.random.default_rng(6)
        acc = make_acc()
        acc.add_batch(random_contribs(rng, 50))
        assert np.all(total_variance_series(acc) >= 0.0)

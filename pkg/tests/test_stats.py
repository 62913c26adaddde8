import math

import numpy as np
import pytest

from propspan.stats import (bartlett, betainc, chi2_sf, gammainc_contfrac,
                            gammainc_lower, gammainc_series, kruskal_wallis,
                            mann_whitney_u, midranks, norm_sf, spearman_rho, t_sf)

scipy_stats = pytest.importorskip("scipy.stats", reason="scipy cross-checks optional")
scipy_special = pytest.importorskip("scipy.special")


class TestSpecialFunctions:
    def test_series_and_contfrac_agree_where_both_converge(self):
        # the two routes are independent; compare on a grid near the crossover
        for a in (0.5, 1.0, 2.5, 7.0, 15.0):
            for x in (a * 0.5, a * 0.9, a + 1.0, a * 1.5, a * 3.0):
                p_series = gammainc_series(a, x)
                q_cf = gammainc_contfrac(a, x)
                assert p_series + q_cf == pytest.approx(1.0, abs=1e-12)

    def test_gammainc_against_scipy(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a = float(rng.uniform(0.2, 30))
            x = float(rng.uniform(0.0, 60))
            want = scipy_special.gammainc(a, x)
            got = gammainc_lower(a, x)
            assert got == pytest.approx(want, abs=1e-10, rel=1e-10)

    def test_betainc_against_scipy(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            a = float(rng.uniform(0.2, 20))
            b = float(rng.uniform(0.2, 20))
            x = float(rng.uniform(0, 1))
            assert betainc(a, b, x) == pytest.approx(
                scipy_special.betainc(a, b, x), abs=1e-10, rel=1e-10)

    def test_chi2_sf_against_scipy(self):
        for df in (1, 2, 5, 10):
            for x in (0.0, 0.5, 3.0, 7.2, 25.0):
                assert chi2_sf(x, df) == pytest.approx(
                    scipy_stats.chi2.sf(x, df), abs=1e-10)

    def test_t_sf_against_scipy(self):
        for df in (1, 3, 10, 30):
            for t in (-3.0, -0.5, 0.0, 1.5, 4.0):
                assert t_sf(t, df) == pytest.approx(
                    scipy_stats.t.sf(t, df), abs=1e-10)

    def test_norm_sf(self):
        assert norm_sf(0.0) == pytest.approx(0.5)
        assert norm_sf(1.96) == pytest.approx(0.0249979, abs=1e-6)


def test_midranks_ties_share_mean():
    np.testing.assert_allclose(midranks(np.array([3.0, 1.0, 3.0])), [2.5, 1.0, 2.5])
    np.testing.assert_allclose(midranks(np.array([5.0, 5.0, 5.0])), [2.0, 2.0, 2.0])


class TestMannWhitney:
    def test_exact_hand_case(self):
        res = mann_whitney_u([1, 2, 3], [4, 5, 6], alternative="less")
        assert res.statistic == 0.0
        assert res.method == "exact"
        assert res.p_value == pytest.approx(1.0 / 20.0, abs=1e-12)

    def test_exact_p_is_rational_with_binomial_denominator(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n1, n2 = int(rng.integers(2, 6)), int(rng.integers(2, 6))
            pooled = rng.permutation(np.arange(1.0, n1 + n2 + 1))
            res = mann_whitney_u(pooled[:n1], pooled[n1:], alternative="less")
            assert res.method == "exact"
            denom = math.comb(n1 + n2, n1)
            assert (res.p_value * denom) == pytest.approx(
                round(res.p_value * denom), abs=1e-9)

    def test_symmetric_interleave_gives_half_u(self):
        a, b = [1, 4, 5, 8], [2, 3, 6, 7]
        res = mann_whitney_u(a, b)
        assert res.statistic == len(a) * len(b) / 2.0

    def test_u_complement_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = rng.normal(size=rng.integers(2, 15))
            b = rng.normal(size=rng.integers(2, 15))
            ua = mann_whitney_u(a, b).statistic
            ub = mann_whitney_u(b, a).statistic
            assert ua + ub == pytest.approx(len(a) * len(b), abs=1e-9)

    def test_exact_and_approx_agree_for_n12(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            pooled = rng.normal(size=12)
            a, b = pooled[:6], pooled[6:]
            for alt in ("two-sided", "less", "greater"):
                exact = mann_whitney_u(a, b, alternative=alt, method="exact")
                approx = mann_whitney_u(a, b, alternative=alt, method="approximate")
                assert abs(exact.p_value - approx.p_value) < 0.02

    def test_matches_scipy_normal_approximation(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            a = rng.normal(size=25)
            b = rng.normal(0.4, 1.0, size=20)
            got = mann_whitney_u(a, b, alternative="less")
            want = scipy_stats.mannwhitneyu(a, b, alternative="less",
                                            use_continuity=True, method="asymptotic")
            assert got.statistic == pytest.approx(want.statistic, abs=1e-9)
            assert got.p_value == pytest.approx(want.pvalue, abs=1e-9)

    def test_matches_scipy_exact(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            pooled = rng.permutation(np.arange(10.0))
            a, b = pooled[:4], pooled[4:]
            got = mann_whitney_u(a, b, alternative="two-sided")
            want = scipy_stats.mannwhitneyu(a, b, alternative="two-sided",
                                            method="exact")
            assert got.p_value == pytest.approx(want.pvalue, abs=1e-9)

    def test_ties_fall_back_to_approximation(self):
        res = mann_whitney_u([1, 1, 2], [2, 3, 3])
        assert res.method == "approximate"

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            mann_whitney_u([], [1, 2])

    def test_p_in_unit_interval(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            a = rng.normal(size=rng.integers(1, 20))
            b = rng.normal(size=rng.integers(1, 20))
            for alt in ("two-sided", "less", "greater"):
                assert 0.0 <= mann_whitney_u(a, b, alternative=alt).p_value <= 1.0


class TestSpearman:
    def test_monotone_transform_gives_one(self):
        x = [3.0, 1.0, 4.0, 1.5, 9.0]
        y = [math.exp(v) for v in x]
        assert spearman_rho(x, y).statistic == pytest.approx(1.0)

    def test_reversed_gives_minus_one(self):
        x = [1, 2, 3, 4, 5]
        assert spearman_rho(x, x[::-1]).statistic == pytest.approx(-1.0)

    def test_hand_case_rho_08(self):
        res = spearman_rho([1, 2, 3, 4, 5], [1, 3, 2, 5, 4])
        assert res.statistic == pytest.approx(0.8, abs=1e-12)

    def test_invariant_under_increasing_transforms(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            x = rng.normal(size=10)
            y = rng.normal(size=10)
            base = spearman_rho(x, y).statistic
            assert spearman_rho(np.exp(x), y).statistic == pytest.approx(base, abs=0)
            assert spearman_rho(x, 3 * y + 7).statistic == pytest.approx(base, abs=0)

    def test_constant_vector_rejected(self):
        with pytest.raises(ValueError):
            spearman_rho([1, 1, 1], [1, 2, 3])

    def test_matches_scipy(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            x = rng.normal(size=12)
            y = x * 0.5 + rng.normal(size=12)
            got = spearman_rho(x, y)
            want = scipy_stats.spearmanr(x, y)
            assert got.statistic == pytest.approx(want.statistic, abs=1e-12)
            assert got.p_value == pytest.approx(want.pvalue, abs=1e-9)


class TestKruskalWallis:
    def test_equal_rank_means_give_zero(self):
        res = kruskal_wallis([[1, 6], [2, 5], [3, 4]])
        assert res.statistic == pytest.approx(0.0, abs=1e-12)

    def test_hand_case_h_72(self):
        res = kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
        assert res.statistic == pytest.approx(7.2, abs=1e-12)

    def test_two_groups_monotone_with_mann_whitney(self):
        rng = np.random.default_rng(10)
        rows = []
        for _ in range(100):
            a = rng.normal(size=8)
            b = rng.normal(rng.uniform(0, 2), 1.0, size=8)
            u = mann_whitney_u(a, b).statistic
            h = kruskal_wallis([a, b]).statistic
            rows.append((abs(u - 32.0), h))  # |U - n1*n2/2| vs H
        rows.sort()
        hs = [h for _, h in rows]
        assert all(hs[i] <= hs[i + 1] + 1e-9 for i in range(len(hs) - 1))

    def test_identical_values_give_p_one(self):
        res = kruskal_wallis([[5, 5], [5, 5]])
        assert res.statistic == 0.0 and res.p_value == 1.0

    def test_matches_scipy(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            groups = [rng.normal(size=rng.integers(3, 10)) for _ in range(3)]
            got = kruskal_wallis(groups)
            want = scipy_stats.kruskal(*groups)
            assert got.statistic == pytest.approx(want.statistic, abs=1e-9)
            assert got.p_value == pytest.approx(want.pvalue, abs=1e-9)

    def test_needs_two_nonempty_groups(self):
        with pytest.raises(ValueError):
            kruskal_wallis([[1, 2]])
        with pytest.raises(ValueError):
            kruskal_wallis([[1, 2], []])


class TestBartlett:
    def test_identical_variances_give_zero(self):
        res = bartlett([[1, 2, 3], [11, 12, 13], [7, 8, 9]])
        assert res.statistic == pytest.approx(0.0, abs=1e-12)
        assert res.p_value == pytest.approx(1.0, abs=1e-12)

    def test_doubling_one_group_increases_statistic(self):
        # equal variances first, then one group scaled by 2 (4x variance)
        base = [[1.0, 2, 3, 4], [11.0, 12, 13, 14], [21.0, 22, 23, 24]]
        s0 = bartlett(base).statistic
        assert s0 == pytest.approx(0.0, abs=1e-12)
        scaled = [list(np.array(base[0]) * 2)] + base[1:]
        assert bartlett(scaled).statistic > s0

    def test_two_group_hand_formula(self):
        a = np.array([1.0, 2.0, 4.0, 7.0])
        b = np.array([1.0, 1.5, 2.0, 2.5, 3.0])
        va, vb = a.var(ddof=1), b.var(ddof=1)
        n, g = 9, 2
        sp = ((len(a) - 1) * va + (len(b) - 1) * vb) / (n - g)
        num = (n - g) * math.log(sp) - ((len(a) - 1) * math.log(va)
                                        + (len(b) - 1) * math.log(vb))
        den = 1 + (1 / (len(a) - 1) + 1 / (len(b) - 1) - 1 / (n - g)) / (3 * (g - 1))
        assert bartlett([a, b]).statistic == pytest.approx(num / den, abs=1e-9)

    def test_matches_scipy(self):
        rng = np.random.default_rng(12)
        for _ in range(30):
            groups = [rng.normal(0, rng.uniform(0.5, 2), size=rng.integers(4, 12))
                      for _ in range(3)]
            got = bartlett(groups)
            want = scipy_stats.bartlett(*groups)
            assert got.statistic == pytest.approx(want.statistic, abs=1e-9)
            assert got.p_value == pytest.approx(want.pvalue, abs=1e-9)

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            bartlett([[1.0, 1.0, 1.0], [1, 2, 3]])

    def test_small_groups_rejected(self):
        with pytest.raises(ValueError):
            bartlett([[1.0], [1, 2]])

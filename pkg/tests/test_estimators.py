import math

import numpy as np
import pytest

from voterdyn.dynamics import OneWayParams, TwoWayParams
from voterdyn.estimators import (
    StandardizedSample,
    TwoWayRuns,
    count_covariance,
    covariance_targets,
    disjoint_central_moment,
    disjoint_covariance,
    double_factorial,
    edge_pattern_probability,
    expected_count,
    graphon_edge_probability,
    graphon_grid_check,
    pattern_probability_mc,
    pattern_probability_rb,
    shared_vertex_covariance,
    standardize_counts,
    tightness_bound_constant,
    tightness_check,
    two_way_study,
    type_density_histograms,
    wick_moment_check,
)
from voterdyn.patterns import Opinion, build_pattern, edge_pattern, single_vertex_pattern

P = Opinion.PLUS
M = Opinion.MINUS


def params(**kw):
    base = dict(n=3, p0=0.3, gamma_mp=0.85, gamma_pm=0.15, pi_plus=0.9,
                pi_minus=0.1, q0=0.85, horizon=2.0)
    base.update(kw)
    return OneWayParams(**base)


class TestGraphonSurface:
    def test_all_minus_corner(self):
        pe = params()
        want = pe.p0 * math.exp(-1.0) + pe.pi_minus * (1 - math.exp(-1.0))
        assert graphon_edge_probability(1.0, 0.0, 0.0, pe) == pytest.approx(want)

    def test_all_plus_corner(self):
        pe = params()
        y = 1 - math.exp(-1.0)
        want = pe.p0 * math.exp(-1.0) + pe.pi_plus * y
        assert graphon_edge_probability(1.0, y, y, pe) == pytest.approx(want)

    def test_flat_when_probabilities_equal(self):
        pe = params(pi_plus=0.4, pi_minus=0.4)
        want = pe.p0 * math.exp(-1.0) + 0.4 * (1 - math.exp(-1.0))
        for u, v in [(0.0, 0.0), (0.1, 0.5), (0.63, 0.2)]:
            assert graphon_edge_probability(1.0, u, v, pe) == pytest.approx(want)

    def test_domain_enforced(self):
        pe = params()
        with pytest.raises(ValueError, match="feasible"):
            graphon_edge_probability(1.0, 0.9, 0.1, pe)
        # boundary plus float dust is fine
        y = 1 - math.exp(-1.0)
        graphon_edge_probability(1.0, y + 5e-10, 0.0, pe)


class TestEdgePatternProbability:
    def test_time_zero_is_independent_initialization(self):
        pe = params(q0=0.3, p0=0.25)
        assert edge_pattern_probability(0.0, P, P, pe) == pytest.approx(0.25 * 0.09)
        assert edge_pattern_probability(0.0, P, M, pe) == pytest.approx(0.25 * 0.3 * 0.7)

    def test_equal_probabilities_decouple(self):
        pe = params(pi_plus=0.5, pi_minus=0.5, q0=0.4, gamma_mp=0.7, gamma_pm=1.1)
        from voterdyn.dynamics import analytic_p_plus
        t = 1.3
        pp = analytic_p_plus(t, pe)
        edge = pe.p0 * math.exp(-t) + 0.5 * (1 - math.exp(-t))
        assert edge_pattern_probability(t, P, P, pe) == pytest.approx(edge * pp * pp, abs=1e-7)

    def test_symmetric_in_opinions(self):
        pe = params(q0=0.4)
        a = edge_pattern_probability(1.2, P, M, pe)
        b = edge_pattern_probability(1.2, M, P, pe)
        assert a == pytest.approx(b, abs=1e-10)

    def test_matches_monte_carlo(self):
        pe = params(q0=0.5, gamma_mp=1.2, gamma_pm=0.6)
        target = edge_pattern_probability(1.0, P, M, pe)
        est = pattern_probability_mc(edge_pattern("+", "-"), 1.0, pe, 60_000, seed=1)
        assert abs(est.value - target) < 4 * est.std_error


class TestPresenceEstimators:
    def test_single_vertex_matches_marginal(self):
        from voterdyn.dynamics import analytic_p_plus
        pe = params(q0=0.4)
        est = pattern_probability_mc(single_vertex_pattern("+"), 1.0, pe, 50_000, seed=2)
        assert abs(est.value - analytic_p_plus(1.0, pe)) < 4 * est.std_error

    def test_rb_equals_naive_without_edges(self):
        # no edges to integrate out: on the same engine stream the conditional
        # value collapses to the indicator, realization by realization
        from voterdyn.ensembles import placement_conditional_runs, placement_indicator_runs
        from voterdyn.patterns import LabeledVoterGraph
        pe = params(q0=0.4, horizon=1.0)
        pl = LabeledVoterGraph(labels=(0, 1), pattern=build_pattern("+-", []))
        ind = placement_indicator_runs(pe, 2, (pl,), (1.0,), 5_000, seed=3)
        cond = placement_conditional_runs(pe, 2, (pl,), (1.0,), 5_000, seed=3)
        assert np.array_equal(ind.astype(float), cond)

    def test_rb_variance_never_worse(self):
        pe = params(q0=0.5)
        mc = pattern_probability_mc(edge_pattern("+", "+"), 1.0, pe, 40_000, seed=4)
        rb = pattern_probability_rb(edge_pattern("+", "+"), 1.0, pe, 40_000, seed=5)
        assert rb.std_error < mc.std_error
        assert abs(mc.value - rb.value) < 4 * mc.combined_se(rb)

    def test_degenerate_always_active_edges(self):
        from voterdyn.dynamics import analytic_p_plus
        pe = params(p0=1.0, pi_plus=1.0, pi_minus=1.0, q0=0.5, gamma_mp=1.0, gamma_pm=1.0)
        est = pattern_probability_mc(edge_pattern("+", "+"), 1.0, pe, 40_000, seed=6)
        pp = analytic_p_plus(1.0, pe)
        assert abs(est.value - pp * pp) < 4 * est.std_error

    def test_replication_floor(self):
        with pytest.raises(ValueError):
            pattern_probability_mc(edge_pattern("+", "+"), 1.0, params(), 1, seed=7)


class TestSharedVertexCovariance:
    def test_positive_at_equal_times(self):
        est = shared_vertex_covariance(edge_pattern("+", "+"), edge_pattern("+", "+"),
                                       1.0, 1.0, params(), 60_000, seed=8)
        assert est.value - 3 * est.std_error > 0

    def test_disjoint_mode_is_null(self):
        est = shared_vertex_covariance(edge_pattern("+", "+"), edge_pattern("+", "+"),
                                       1.0, 1.0, params(), 60_000, seed=9, disjoint=True)
        assert abs(est.value) < 4 * est.std_error
        assert est.metadata["disjoint"]

    def test_methods_agree(self):
        naive = shared_vertex_covariance(edge_pattern("+", "+"), edge_pattern("+", "-"),
                                         0.7, 0.7, params(), 80_000, seed=10, method="naive")
        rb = shared_vertex_covariance(edge_pattern("+", "+"), edge_pattern("+", "-"),
                                      0.7, 0.7, params(), 80_000, seed=11)
        assert abs(naive.value - rb.value) < 4 * naive.combined_se(rb)

    def test_unequal_times_supported(self):
        est = shared_vertex_covariance(edge_pattern("+", "+"), edge_pattern("+", "+"),
                                       0.5, 1.5, params(), 30_000, seed=12)
        assert est.metadata["method"] == "rao_blackwell"
        assert not est.metadata["fallback"]

    def test_time_order_enforced(self):
        with pytest.raises(ValueError):
            shared_vertex_covariance(edge_pattern("+", "+"), edge_pattern("+", "+"),
                                     1.5, 0.5, params(), 100, seed=13)

    def test_target_matrix_symmetric(self):
        pats = (edge_pattern("+", "+"), edge_pattern("+", "-"))
        vals, ses = covariance_targets(pats, (0.5, 1.0), params(), 20_000, seed=14)
        assert np.allclose(vals, vals.T)
        assert (ses > 0).all()


class TestCountCovariance:
    def test_mean_matches_formula(self):
        pe = params(n=20, horizon=1.0)
        cc = count_covariance(20, edge_pattern("+", "+"), edge_pattern("+", "+"),
                              1.0, 1.0, pe, 4_000, seed=15)
        want = expected_count(20, edge_pattern("+", "+"), 1.0, pe)
        assert abs(cc.mean_first.value - want) < 4 * cc.mean_first.std_error

    def test_scaled_value_scaling(self):
        pe = params(n=20, horizon=1.0)
        cc = count_covariance(20, edge_pattern("+", "+"), edge_pattern("+", "-"),
                              0.5, 1.0, pe, 2_000, seed=16)
        assert cc.scaled.value == pytest.approx(cc.raw.value / 20 ** 3)

    def test_n_floor(self):
        with pytest.raises(ValueError):
            count_covariance(3, edge_pattern("+", "+"), edge_pattern("+", "+"),
                             1.0, 1.0, params(), 100, seed=17)


class TestStandardize:
    def test_constant_runs_center_to_zero(self):
        runs = np.full((50, 1, 2), 7.0)
        std = standardize_counts(runs, (edge_pattern("+", "+"),), (0.5, 1.0), n=10)
        assert np.allclose(std.data, 0.0)
        assert std.centering == ("empirical",)

    def test_analytic_centering_recorded(self):
        pe = params(n=10, horizon=1.0)
        runs = np.random.default_rng(18).poisson(5.0, size=(100, 1, 1)).astype(float)
        std = standardize_counts(runs, (edge_pattern("+", "+"),), (1.0,), n=10, params=pe)
        assert std.centering == ("analytic",)

    def test_scaling_exponent(self):
        pe = params(n=10, horizon=1.0)
        tri = build_pattern("+++", [(0, 1), (1, 2), (0, 2)])
        runs = np.zeros((10, 1, 1))
        runs[0, 0, 0] = 10 ** 2.5  # one unit after scaling by n^{V-1/2}
        std = standardize_counts(runs, (tri,), (1.0,), n=10)
        spread = std.data[:, 0, 0]
        assert spread.max() - spread.min() == pytest.approx(1.0)


class TestWick:
    def test_gaussian_sample_matches_targets(self):
        rng = np.random.default_rng(19)
        cov = np.array([[1.0, 0.4], [0.4, 0.8]])
        chol = np.linalg.cholesky(cov)
        data = rng.standard_normal((40_000, 2)) @ chol.T
        sample = StandardizedSample(data=data[:, :, None],
                                    patterns=(edge_pattern("+", "+"), edge_pattern("+", "-")),
                                    times=(1.0,), n=100, centering=("analytic", "analytic"))
        weights = np.array([[1.0, 0.5]])
        moments = wick_moment_check(sample, weights, 6, cov, seed=20)
        for mom in moments:
            assert abs(mom.estimate.value - mom.target) < 4 * mom.estimate.std_error

    def test_double_factorial(self):
        assert [double_factorial(k) for k in (0, 1, 2, 3, 5)] == [1, 1, 2, 3, 15]

    def test_moment_cap(self):
        sample = StandardizedSample(data=np.zeros((300, 1, 1)),
                                    patterns=(edge_pattern("+", "+"),), times=(1.0,),
                                    n=10, centering=("empirical",))
        with pytest.raises(ValueError):
            wick_moment_check(sample, np.ones((1, 1)), 8, np.eye(1))


class TestTightness:
    def test_constant_formula(self):
        pe = params(gamma_mp=0.5, gamma_pm=0.5, pi_plus=0.5, pi_minus=0.5)
        f = tightness_bound_constant(edge_pattern("+", "+"), edge_pattern("+", "+"), pe)
        assert f == pytest.approx(12.0)

    def test_bound_holds_at_small_scale(self):
        pe = params(n=15, horizon=1.0)
        res = tightness_check(15, edge_pattern("+", "+"), edge_pattern("+", "-"),
                              0.2, 0.5, 1.0, pe, 2_000, seed=21)
        assert res.lhs.value <= res.bound + 3 * res.lhs.std_error
        assert res.lhs.value >= 0

    def test_needs_ordered_triple(self):
        with pytest.raises(ValueError):
            tightness_check(15, edge_pattern("+", "+"), edge_pattern("+", "+"),
                            0.5, 0.5, 1.0, params(n=15), 100, seed=22)


@pytest.fixture(scope="module")
def study():
    pe = TwoWayParams(n=24, p0=0.2, pi_plus=0.8, pi_minus=0.2, beta=1.0, horizon=1.0)
    return two_way_study(pe, edge_pattern("+", "+"), (0.5, 1.0), 4_000, seed=23)


class TestTwoWayEstimators:
    def test_covariance_positive_and_bounded(self, study):
        dc = disjoint_covariance(study, 1.0)
        assert abs(dc.raw.value) <= 0.25
        assert dc.normalized.value == pytest.approx(dc.raw.value / 4)

    def test_unknown_time_rejected(self, study):
        with pytest.raises(ValueError, match="not simulated"):
            disjoint_covariance(study, 0.75)

    def test_second_moment_consistent_with_covariance(self, study):
        dc = disjoint_covariance(study, 1.0)
        m2 = disjoint_central_moment(study, 1.0, 2)
        assert m2.value == pytest.approx(dc.normalized.value, abs=1e-12)

    def test_third_moment_normalization(self, study):
        m3 = disjoint_central_moment(study, 1.0, 3)
        assert m3.value == pytest.approx(m3.metadata["raw"] / 8)

    def test_independent_placements_have_null_higher_moments(self):
        # synthetic independent indicators: every joint central moment of
        # distinct placements is a product of zero-mean factors
        rng = np.random.default_rng(31)
        ind = (rng.random((4000, 1, 12)) < 0.4).astype(np.uint8)
        runs = TwoWayRuns(params=TwoWayParams(n=24, p0=0.5, pi_plus=0.5, pi_minus=0.5,
                                              beta=0.0, horizon=1.0),
                          pattern=edge_pattern("+", "+"), times=(1.0,), indicators=ind)
        for z in (2, 3, 4):
            est = disjoint_central_moment(runs, 1.0, z)
            assert abs(est.value) < 4 * est.std_error

    def test_unsupported_order(self, study):
        with pytest.raises(ValueError):
            disjoint_central_moment(study, 1.0, 7)

    def test_covariance_bound_assertion_guards_bad_data(self):
        bad = TwoWayRuns(params=TwoWayParams(n=4, p0=0.5, pi_plus=0.5, pi_minus=0.5,
                                             beta=0.0, horizon=1.0),
                         pattern=edge_pattern("+", "+"), times=(1.0,),
                         indicators=np.tile(np.array([[0], [3]], dtype=np.uint8),
                                            (500, 1, 2)).reshape(1000, 1, 2))
        with pytest.raises(AssertionError, match="1/4"):
            disjoint_covariance(bad, 1.0)


class TestTypeDensities:
    def test_frozen_plus_paths_concentrate(self):
        pe = params(gamma_mp=0.0, gamma_pm=0.0, q0=1.0)
        td = type_density_histograms(1.0, pe, 20_000, bins=20, seed=24)
        assert td.integral_minus() == 0.0
        y = 1 - math.exp(-1.0)
        idx = np.searchsorted(td.bin_edges, y) - 1
        width = td.bin_edges[1] - td.bin_edges[0]
        assert td.f_plus[idx] == pytest.approx(1.0 / width)

    def test_integrals_sum_to_one(self):
        td = type_density_histograms(1.0, params(), 10_000, bins=25, seed=25)
        assert td.integral_plus() + td.integral_minus() == pytest.approx(1.0)

    def test_symmetric_dynamics_split_evenly(self):
        pe = params(gamma_mp=1.0, gamma_pm=1.0, q0=0.5)
        td = type_density_histograms(1.0, pe, 40_000, bins=20, seed=26)
        se = 0.5 / math.sqrt(40_000)
        assert abs(td.integral_plus() - 0.5) < 4 * se

    def test_bin_floor(self):
        with pytest.raises(ValueError):
            type_density_histograms(1.0, params(), 1_000, bins=5, seed=27)


class TestGraphonGrid:
    def test_standard_run_passes(self):
        cells = graphon_grid_check(1.0, params(), 60_000, seed=28)
        assert not any(c.status == "fail" for c in cells)
        assert any(c.status == "pass" for c in cells)

    def test_flat_surface_when_probabilities_equal(self):
        pe = params(pi_plus=0.5, pi_minus=0.5)
        cells = graphon_grid_check(1.0, pe, 40_000, seed=29)
        models = {c.model for c in cells if c.model is not None}
        assert len(models) == 1
        assert not any(c.status == "fail" for c in cells)

    def test_early_time_mostly_skipped(self):
        cells = graphon_grid_check(0.01, params(), 20_000, seed=30)
        assert not any(c.status == "fail" for c in cells)
        skipped = sum(1 for c in cells if c.status == "skipped")
        assert skipped >= 95

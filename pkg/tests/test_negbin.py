import math

import numpy as np
import pytest
from scipy import stats

from psd_approx import (
    BERNOULLI,
    GEOMETRIC,
    LOGARITHMIC,
    POISSON,
    ConvolutionSpec,
    InfeasibleParamsError,
    NbParams,
    fit_params,
    nb_bound_one,
    nb_bound_two,
    nb_closed_forms,
    nb_pmf,
    tau_geometric,
    tau_upper,
)
from psd_approx.negbin import default_r, geometric_eqn1, geometric_eqn2, shift_tv_upper

from conftest import SAFE, schedule_spec

SQRT_2_OVER_PI = math.sqrt(2 / math.pi)


class TestNbPmf:
    @pytest.mark.parametrize("r,p", [(1.0, 0.3), (2.5, 0.8), (20.0, 0.8098765), (0.4, 0.5)])
    def test_matches_scipy(self, r, p):
        k = np.arange(60)
        assert nb_pmf(NbParams(r, p), k) == pytest.approx(stats.nbinom.pmf(k, r, p), rel=1e-10, abs=1e-300)

    def test_recurrence(self):
        params = NbParams(19.916, 0.8092)
        k = np.arange(80)
        f = nb_pmf(params, k)
        np.testing.assert_allclose(f[1:] * (k[1:]), f[:-1] * params.q * (params.r + k[:-1]), rtol=1e-12)

    def test_scalar(self):
        assert isinstance(nb_pmf(NbParams(2.0, 0.5), 3), float)
        assert nb_pmf(NbParams(2.0, 0.5), 0) == pytest.approx(0.25)

    def test_large_r_approaches_poisson(self):
        lam = 1.3
        r = 1e9
        k = np.arange(30)
        f = nb_pmf(NbParams(r, r / (r + lam)), k)
        np.testing.assert_allclose(f, stats.poisson.pmf(k, lam), rtol=1e-6)

    def test_large_r_branch_continuous(self):
        # both rising-factorial routes agree near the switch
        k = np.arange(40)
        a = nb_pmf(NbParams(999.0, 0.9), k)
        b = nb_pmf(NbParams(1001.0, 0.9), k)
        np.testing.assert_allclose(a, stats.nbinom.pmf(k, 999.0, 0.9), rtol=1e-9)
        np.testing.assert_allclose(b, stats.nbinom.pmf(k, 1001.0, 0.9), rtol=1e-9)

    @pytest.mark.parametrize("r,p", [(0.0, 0.5), (-1.0, 0.5), (1.0, 0.0), (1.0, 1.0)])
    def test_invalid(self, r, p):
        with pytest.raises(InfeasibleParamsError):
            NbParams(r, p)

    def test_moments(self):
        params = NbParams(3.0, 0.6)
        assert params.mean == pytest.approx(2.0)
        assert params.var == pytest.approx(2.0 / 0.6)


class TestFitParams:
    def test_one_moment_table2_n20(self):
        params = fit_params(schedule_spec(GEOMETRIC, 20))
        assert params.r == 20.0
        assert params.p == pytest.approx(0.8098765, abs=1e-7)
        assert params.mean == pytest.approx(schedule_spec(GEOMETRIC, 20).mean())

    def test_two_moment_table2_n20(self):
        params = fit_params(schedule_spec(GEOMETRIC, 20), "two-moment")
        assert params.p == pytest.approx(4.695122 / 5.801978, abs=1e-6)
        assert params.r == pytest.approx(19.916, abs=1e-3)

    def test_two_moment_matches_both_moments(self, rng):
        for _ in range(10):
            q = rng.uniform(0.05, 0.6, rng.integers(1, 10))
            spec = ConvolutionSpec(GEOMETRIC(x) for x in q)
            params = fit_params(spec, "two-moment")
            assert params.mean == pytest.approx(spec.mean(), rel=1e-12)
            assert params.var == pytest.approx(spec.variance(), rel=1e-12)

    def test_default_r(self):
        assert default_r(schedule_spec(GEOMETRIC, 50)) == 50.0
        assert default_r(schedule_spec(LOGARITHMIC, 50)) == 10.0

    def test_bernoulli_two_moment_infeasible(self):
        spec = ConvolutionSpec(BERNOULLI(p) for p in (0.1, 0.3, 0.2))
        with pytest.raises(InfeasibleParamsError):
            fit_params(spec, "two-moment")

    def test_poisson_two_moment_infeasible(self):
        with pytest.raises(InfeasibleParamsError):
            fit_params(ConvolutionSpec([POISSON(0.4), POISSON(1.2)]), "two-moment")

    def test_bad_r(self):
        with pytest.raises(InfeasibleParamsError):
            fit_params(schedule_spec(GEOMETRIC, 10), r=0.0)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            fit_params(schedule_spec(GEOMETRIC, 10), "three-moment")


class TestBoundOne:
    def test_table2_n50(self):
        spec = schedule_spec(GEOMETRIC, 50)
        e = nb_bound_one(spec, fit_params(spec))
        assert e.certified and e.target == "nb"
        assert e.value == pytest.approx(0.0221529, abs=1e-6)

    def test_table3_n10(self):
        spec = schedule_spec(LOGARITHMIC, 10)
        e = nb_bound_one(spec, fit_params(spec, r=2.0))
        assert e.value == pytest.approx(0.3949420, rel=5e-4)

    def test_iid_geometric_exact(self):
        spec = ConvolutionSpec.iid(GEOMETRIC(0.2), 10)
        e = nb_bound_one(spec, fit_params(spec))
        assert e.params["truncated"] == pytest.approx(0.0, abs=1e-15)
        assert 0.0 <= e.value <= 1e-9

    def test_equals_eqn1(self, rng):
        for _ in range(15):
            q = rng.uniform(0.01, 0.5, rng.integers(1, 15))
            spec = ConvolutionSpec(GEOMETRIC(x) for x in q)
            params = fit_params(spec)
            assert nb_bound_one(spec, params).value == pytest.approx(geometric_eqn1(spec, params), abs=1e-9)

    def test_upper_dominates_truncated(self):
        spec = schedule_spec(LOGARITHMIC, 50)
        e = nb_bound_one(spec, fit_params(spec, r=10.0))
        assert e.value >= e.params["truncated"]

    def test_truncation_failure(self):
        spec = ConvolutionSpec([GEOMETRIC(1 - 1e-7)])
        e = nb_bound_one(spec, NbParams(1.0, 0.5))
        assert not e.certified and math.isnan(e.value)


class TestBoundTwo:
    def test_table3_n500(self):
        spec = schedule_spec(LOGARITHMIC, 500)
        e = nb_bound_two(spec, fit_params(spec, "two-moment"))
        assert e.params["tau_rule"] == "remark"
        assert e.value == pytest.approx(0.0018696, rel=5e-4)

    def test_table2_n20_geometric_tau(self):
        spec = schedule_spec(GEOMETRIC, 20)
        e = nb_bound_two(spec, fit_params(spec, "two-moment"), tau_geometric(spec))
        assert e.value == pytest.approx(0.0045271, abs=1e-6)

    def test_equals_eqn2_with_geometric_tau(self, rng):
        for _ in range(15):
            q = rng.uniform(0.05, 0.5, rng.integers(2, 15))
            spec = ConvolutionSpec(GEOMETRIC(x) for x in q)
            params = fit_params(spec, "two-moment")
            e = nb_bound_two(spec, params, tau_geometric(spec))
            exact = geometric_eqn2(spec, params)
            assert e.params["truncated"] == pytest.approx(exact, abs=1e-9)
            # the certified tail allowance carries k^2 weights, so it sits a little higher
            assert exact <= e.value <= exact + 1e-8

    def test_iid_geometric_zero(self):
        spec = ConvolutionSpec.iid(GEOMETRIC(0.3), 8)
        e = nb_bound_two(spec, fit_params(spec, "two-moment"))
        assert e.value <= 1e-9


class TestTau:
    def test_geometric_shift_tv_is_p(self):
        # d_TV(X, X+1) = p for geometric
        for q in (0.1, 0.3, 0.6):
            assert shift_tv_upper(GEOMETRIC(q)) == pytest.approx(1 - q, abs=1e-10)
            assert shift_tv_upper(GEOMETRIC(q)) >= 1 - q

    def test_geometric_per_i(self):
        spec = ConvolutionSpec([GEOMETRIC(0.2), GEOMETRIC(0.7)])
        t = tau_upper(spec)
        assert t.per_i == pytest.approx((0.2, 0.5), abs=1e-10)
        assert t.tau_star == pytest.approx(0.5, abs=1e-10)

    def test_log_series(self):
        t = tau_upper(ConvolutionSpec([LOGARITHMIC(0.2)] * 3))
        assert t.per_i[0] == pytest.approx(0.10372, abs=1e-5)
        expected = SQRT_2_OVER_PI * (0.25 + 2 * t.per_i[0]) ** -0.5
        assert t.tau_upper == pytest.approx(expected, rel=1e-12)

    def test_single_instance(self):
        t = tau_upper(ConvolutionSpec([LOGARITHMIC(0.4)]))
        assert t.tau_upper == pytest.approx(2 * SQRT_2_OVER_PI, rel=1e-11)

    def test_range_and_decrease(self):
        prev = math.inf
        for n in (10, 20, 50, 100, 200, 500):
            t = tau_upper(schedule_spec(LOGARITHMIC, n)).tau_upper
            assert 0 < t <= 2 * SQRT_2_OVER_PI * (1 + 1e-12)
            assert t < prev
            prev = t

    def test_geometric_rule(self):
        spec = schedule_spec(GEOMETRIC, 10)
        t = tau_geometric(spec)
        assert t.rule == "geometric"
        assert t.tau_upper == pytest.approx(SQRT_2_OVER_PI * (2.0 - 0.25) ** -0.5, rel=1e-12)

    def test_geometric_rule_infeasible(self):
        with pytest.raises(InfeasibleParamsError):
            tau_geometric(ConvolutionSpec([GEOMETRIC(0.2)]))

    def test_bernoulli_per_i(self, rng):
        # d_TV(X, X+1) = max(p, 1 - p) for Bernoulli(p)
        for p in rng.uniform(*SAFE["bernoulli"], 5):
            t = tau_upper(ConvolutionSpec([BERNOULLI(p), BERNOULLI(0.5)]))
            assert t.per_i[0] == pytest.approx(min(0.5, 1 - max(p, 1 - p)), abs=1e-10)


class TestClosedForms:
    def test_eqn1_table2_n100(self):
        m = {e.method: e for e in nb_closed_forms(schedule_spec(GEOMETRIC, 100))}
        assert m["eqn1"].value == pytest.approx(0.0242177, abs=1e-6)
        assert m["eqn1"].certified

    def test_eqn2_table2_n300(self):
        m = {e.method: e for e in nb_closed_forms(schedule_spec(GEOMETRIC, 300))}
        assert m["eqn2"].value == pytest.approx(0.0025801, abs=1e-6)

    def test_qwqw(self):
        (e,) = nb_closed_forms(ConvolutionSpec.iid(BERNOULLI(0.1), 10))
        assert e.method == "qwqw"
        assert e.value == pytest.approx(0.2)

    def test_eqn2_infeasible_small_sum(self):
        m = {e.method: e for e in nb_closed_forms(ConvolutionSpec([GEOMETRIC(0.2)]))}
        assert math.isnan(m["eqn2"].value)
        assert not m["eqn2"].certified

    def test_uncertified_above_half(self):
        m = {e.method: e for e in nb_closed_forms(ConvolutionSpec([GEOMETRIC(0.6), GEOMETRIC(0.3)]))}
        assert not m["eqn1"].certified and not m["eqn2"].certified

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from reslab.cube import CubeSpec, cube_eval
from reslab.gns import (COMPARISON_FIELDS, _both_inside, comparison_rows, gns_cube_monte_carlo,
                        gns_cube_semianalytic, gns_estimate, gns_l1_bound, gns_sign_analytic,
                        noise_rate_for_degree, part2_constant, resilience_lower_bound, sign_eval)


@pytest.mark.parametrize("rho", [0.1, 0.5, 1.0])
def test_sign_monte_carlo_matches_closed_form(rho):
    est = gns_estimate(sign_eval, 1, rho, 200000, seed=1)
    assert est.agrees_with(gns_sign_analytic(rho), 3.0)
    assert est.method == "monte_carlo" and est.N == 200000


def test_sign_closed_form_values():
    assert gns_sign_analytic(0.0) == 0.0
    assert gns_sign_analytic(1.0) == pytest.approx(0.5)
    assert gns_sign_analytic(0.5) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        gns_sign_analytic(1.5)


def test_monte_carlo_is_reproducible_and_worker_independent():
    f = lambda x: cube_eval(CubeSpec.balanced(3), x)  # noqa: E731
    a = gns_estimate(f, 3, 0.2, 50001, seed=7, shards=5)
    b = gns_estimate(f, 3, 0.2, 50001, seed=7, shards=5, workers=3)
    c = gns_estimate(f, 3, 0.2, 50001, seed=8, shards=5)
    assert a.value == b.value
    assert a.value != c.value
    with pytest.raises(ValueError):
        gns_estimate(f, 3, 0.2, 0)
    with pytest.raises(ValueError):
        gns_estimate(f, 3, -0.1, 10)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.01, 0.99))
def test_both_inside_matches_bivariate_cdf(theta, rho):
    r = 1.0 - rho
    mvn = multivariate_normal(mean=[0, 0], cov=[[1, r], [r, 1]])
    want = mvn.cdf([theta, theta], lower_limit=[-theta, -theta])
    got, err, ok = _both_inside(theta, rho)
    assert ok
    assert got == pytest.approx(want, abs=1e-6)


def test_cube_semianalytic_end_points():
    spec = CubeSpec.balanced(4)
    assert gns_cube_semianalytic(spec, 0.0).value == 0.0
    # rho = 1: independent copies, each inside with probability 1/2
    assert gns_cube_semianalytic(spec, 1.0).value == pytest.approx(0.5, abs=1e-10)


def test_cube_semianalytic_matches_monte_carlo():
    spec = CubeSpec.balanced(2)
    exact = gns_cube_semianalytic(spec, 0.1)
    mc = gns_cube_monte_carlo(spec, 0.1, 200000, seed=3)
    assert mc.agrees_with(exact.value, 3.0)
    assert exact.converged


def test_noise_rate_and_bound():
    assert noise_rate_for_degree(4) == pytest.approx((math.log(4) / 4) ** 2)
    with pytest.raises(ValueError):
        noise_rate_for_degree(1)
    d = 6
    over, value = gns_l1_bound("sign", d)
    assert value == pytest.approx(gns_sign_analytic(noise_rate_for_degree(d)))
    assert over == pytest.approx(value / math.log(d))
    over_mc, _ = gns_l1_bound(sign_eval, d, N=100000, k=1)
    assert over_mc == pytest.approx(over, abs=5 * math.sqrt(0.25 / 100000) / math.log(d))
    with pytest.raises(ValueError):
        gns_l1_bound("cosine", d)
    with pytest.raises(ValueError):
        gns_l1_bound(sign_eval, d)


def test_part2_constant_and_lower_bound():
    assert part2_constant(0.5, 0.4, 2, 0.01) == 0.0
    assert part2_constant(0.0, 0.4, 2, 0.01) == pytest.approx(0.1 / (2 * 0.1))
    assert resilience_lower_bound(2 ** 20) == pytest.approx(1 - 2 / 2 ** (20 * 0.49))


def test_comparison_rows():
    rows = comparison_rows([2, 64], [2, 4], {(2, 2): (0.39, 0.61)})
    assert len(rows) == 4
    assert set(rows[0]) == set(COMPARISON_FIELDS)
    assert rows[0]["lp_e_star"] == 0.39 and rows[1]["lp_e_star"] is None
    # the noise sensitivity of balanced cubes grows with k at fixed rho
    assert rows[2]["gns_value"] > rows[0]["gns_value"]

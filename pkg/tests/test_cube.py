import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.stats import norm

from reslab.cube import (CubeSpec, WeightReport, cube_coeff, cube_eval, cube_function,
                         cube_low_degree_weight, interval_coeff, interval_coeff_bound,
                         interval_coeffs, interval_pm_function, interval_pm_mean, low_degree_bound,
                         mills_bounds, sign_function, theta_k)
from reslab.errors import DimensionMismatch
from reslab.hermite import (enumerate_multi_indices, gauss_hermite_grid, hermite_eval,
                            normalized_table)


def theta_oracle(k):
    """Closed form: (2 Phi(t) - 1)^k = 1/2  <=>  t = Phi^{-1}(1 - (1 - 2^(-1/k)) / 2)."""
    return float(norm.isf(-math.expm1(-math.log(2.0) / k) / 2.0))


def test_theta_one_and_two():
    assert theta_k(1) == pytest.approx(0.6744897501960817, abs=1e-12)
    assert theta_k(2) == pytest.approx(norm.ppf((1 + 2 ** -0.5) / 2), abs=1e-12)
    assert theta_k(2) == pytest.approx(1.0518, abs=1e-4)


@pytest.mark.parametrize("k", [1, 2, 3, 10, 100, 1000, 10**4, 10**6])
def test_theta_matches_closed_form(k):
    assert theta_k(k) == pytest.approx(theta_oracle(k), abs=1e-9)


def test_balanced_cube_has_mean_zero():
    for k in (1, 2, 5, 64, 4096):
        assert CubeSpec.balanced(k).mean() == pytest.approx(0.0, abs=1e-11)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=math.log(8), max_value=math.log(1e6)))
def test_theta_sandwich(logk):
    k = math.exp(logk)
    lo, hi = mills_bounds(k)
    assert lo <= theta_k(k) <= hi


def test_mills_bounds_need_k_two():
    with pytest.raises(ValueError):
        mills_bounds(1)
    with pytest.raises(ValueError):
        theta_k(0)


def _quad_coeff(theta, j):
    def integrand(x):
        return hermite_eval(j, x) / math.sqrt(math.factorial(j)) * norm.pdf(x)
    return integrate.quad(integrand, -theta, theta, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_interval_coefficients_against_quadrature(theta):
    c = interval_coeffs(theta, 20)
    for j in range(21):
        assert abs(c[j] - _quad_coeff(theta, j)) <= 1e-8


def test_interval_coefficient_values():
    t = 1.3
    assert interval_coeff(t, 0) == pytest.approx(math.erf(t / math.sqrt(2)), abs=1e-15)
    assert interval_coeff(t, 3) == 0.0
    # j = 2: -2 Hbar_1(t) phi(t) / sqrt(2)
    assert interval_coeff(t, 2) == pytest.approx(-2 * t * norm.pdf(t) / math.sqrt(2), rel=1e-13)
    with pytest.raises(ValueError):
        interval_coeff(t, -1)
    with pytest.raises(ValueError):
        interval_coeffs(0.0, 4)


def test_interval_coefficients_large_degree_stay_finite():
    c = interval_coeffs(4.0, 400)
    assert np.all(np.isfinite(c))
    # Parseval: the squared coefficients of the indicator sum to its mass
    assert math.fsum(c ** 2) == pytest.approx(math.erf(4.0 / math.sqrt(2)), abs=2e-2)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.1, 4.0), st.integers(1, 40))
def test_interval_coefficient_bound(theta, half):
    j = 2 * half
    assert interval_coeff(theta, j) ** 2 <= interval_coeff_bound(theta, j) * (1 + 1e-12)


def test_cube_coefficient_matches_2d_quadrature():
    spec = CubeSpec.balanced(2)
    t = spec.theta

    def h(j, x):
        return hermite_eval(j, x) / math.sqrt(math.factorial(j))

    for J in [(2, 0), (2, 2), (4, 2), (0, 6)]:
        # the constant -1 part is orthogonal to Hbar_J for J != 0
        val = integrate.dblquad(lambda y, x: 2 * h(J[0], x) * h(J[1], y) * norm.pdf(x) * norm.pdf(y),
                                -t, t, -t, t, epsabs=1e-13, epsrel=1e-12)[0]
        assert cube_coeff(spec, J) == pytest.approx(val, abs=1e-10)
    assert cube_coeff(spec, (0, 0)) == 0.0
    assert cube_coeff(spec, (1, 2)) == 0.0
    with pytest.raises(DimensionMismatch):
        cube_coeff(spec, (2, 2, 2))


def _brute_gamma(spec, d):
    idx = enumerate_multi_indices(spec.k, d, include_zero=False)
    return math.fsum(cube_coeff(spec, J) ** 2 for J in idx)


@pytest.mark.parametrize("k,d", [(3, 4), (2, 6), (4, 6), (5, 3)])
def test_weight_dp_equals_enumeration(k, d):
    spec = CubeSpec.balanced(k)
    rep = cube_low_degree_weight(spec, d)
    assert abs(rep.gamma - _brute_gamma(spec, d)) <= 1e-12
    assert rep.term_count == math.comb(k + d // 2, d // 2) - 1


def test_weight_on_exact_grid_agrees_with_dp():
    """Low-degree L2 mass of Cube_2 from grid projection approaches the DP value."""
    spec = CubeSpec.balanced(2)
    S = gauss_hermite_grid(2, 200)
    f = cube_function(spec, S)
    T = normalized_table(S.points[:, 0], 4), normalized_table(S.points[:, 1], 4)
    grid_gamma = 0.0
    for J in enumerate_multi_indices(2, 4, include_zero=False):
        c = math.fsum(S.weights * f.values * T[0][J[0]] * T[1][J[1]])
        grid_gamma += c * c
    assert grid_gamma == pytest.approx(cube_low_degree_weight(spec, 4).gamma, abs=2e-2)


IN_RANGE = [(k, d) for k in (16, 64, 256, 1024, 4096) for d in (2, 4, 6)
            if d <= k / (2 * math.e ** 2 * math.log(k))]


def test_bound_range_is_nonempty():
    assert IN_RANGE == [(256, 2), (1024, 2), (1024, 4), (1024, 6), (4096, 2), (4096, 4), (4096, 6)]


@pytest.mark.parametrize("k,d", IN_RANGE)
def test_low_degree_bound_holds(k, d):
    rep = cube_low_degree_weight(CubeSpec.balanced(k), d)
    assert rep.gamma <= rep.bound
    assert rep.bound == pytest.approx(20 * d * (3 * math.log(k)) ** d / k)


def test_weight_report_row():
    rep = WeightReport(4, 2, 0.5, 2.0, 7)
    row = rep.csv_row()
    assert row["ratio"] == 0.25 and set(row) == set(WeightReport.CSV_FIELDS)
    assert WeightReport(4, 2, 0.0, 0.0, 0).ratio == 0.0
    assert low_degree_bound(1, 2) == 0.0


def test_pointwise_evaluation():
    spec = CubeSpec(2, 1.0)
    x = np.array([[0.0, 0.0], [1.0, -1.0], [1.0001, 0.0], [0.5, -2.0]])
    assert list(cube_eval(spec, x)) == [1.0, 1.0, -1.0, -1.0]
    with pytest.raises(DimensionMismatch):
        cube_eval(spec, np.zeros((2, 3)))
    S = gauss_hermite_grid(1, 5)
    assert sign_function(S).values[2] == 0.0
    v = interval_pm_function(0.7, S).values
    assert set(np.unique(v)) <= {-1.0, 1.0}


def test_interval_pm_mean():
    # theta_k is bisected to 1e-12, which moves the mean by at most 2 phi(0) 1e-12
    assert interval_pm_mean(theta_k(1)) == pytest.approx(0.0, abs=1e-12)
    assert interval_pm_mean(1.0) == pytest.approx(2 * (2 * norm.cdf(1.0) - 1) - 1, abs=1e-14)

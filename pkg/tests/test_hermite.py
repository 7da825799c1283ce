import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import hermite_e

from reslab.errors import BudgetExceeded, DimensionMismatch, SupportMismatch
from reslab.hermite import (GridFunction, HermiteExpansion, MultiIndex, basis_matrix,
                            enumerate_multi_indices, expansion_from_grid, gauss_hermite_grid,
                            gauss_hermite_rule, gaussian_line_support, hermite_eval,
                            hermite_eval_normalized, inner_product, lq_norm, monte_carlo_support,
                            normalized_table, product_support)


def test_hermite_eval_matches_numpy_hermite_e():
    x = np.linspace(-4, 4, 17)
    for j in range(21):
        ref = hermite_e.hermeval(x, [0] * j + [1])
        assert np.allclose(hermite_eval(j, x), ref, rtol=1e-12, atol=1e-9)


def test_low_degree_values():
    assert hermite_eval(0, 1.7) == 1.0
    assert hermite_eval(1, 1.7) == pytest.approx(1.7)
    assert hermite_eval(2, 3.0) == pytest.approx(8.0)
    assert hermite_eval(3, 2.0) == pytest.approx(2.0)  # x^3 - 3x


def test_normalized_value_divides_by_sqrt_factorial():
    x = np.array([0.3, -1.2])
    want = hermite_eval(2, 0.3) / math.sqrt(2) * hermite_eval(3, -1.2) / math.sqrt(6)
    assert hermite_eval_normalized((2, 3), x) == pytest.approx(want, rel=1e-13)
    with pytest.raises(DimensionMismatch):
        hermite_eval_normalized((1, 1, 1), x)


def test_rule_matches_numpy_hermegauss():
    for Q in (1, 2, 5, 20, 40):
        x, w = hermite_e.hermegauss(Q)
        rule = gauss_hermite_rule(Q)
        assert np.allclose(rule.nodes, x, atol=1e-12)
        assert np.allclose(rule.weights, w / math.sqrt(2 * math.pi), rtol=1e-10, atol=1e-300)


def test_rule_integrates_even_moments_exactly():
    rule = gauss_hermite_rule(12)
    for m in range(12):
        exact = math.prod(range(1, 2 * m, 2)) if m else 1
        assert math.fsum(rule.weights * rule.nodes ** (2 * m)) == pytest.approx(exact, rel=1e-11)
        assert abs(math.fsum(rule.weights * rule.nodes ** (2 * m + 1))) < 1e-9 * max(exact, 1)


def test_large_rule_log_weights_finite():
    rule = gauss_hermite_rule(400)
    assert np.all(np.isfinite(rule.log_weights))
    assert math.fsum(rule.weights) == pytest.approx(1.0, abs=1e-13)
    assert np.allclose(rule.nodes, -rule.nodes[::-1], atol=0)


def test_orthonormal_on_small_grid():
    S = gauss_hermite_grid(1, 25)
    T = normalized_table(S.points[:, 0], 20)
    G = (T * S.weights) @ T.T
    assert np.max(np.abs(G - np.eye(21))) < 1e-10


def test_scaled_basis_has_orthonormal_columns_in_2d():
    S = gauss_hermite_grid(2, 8)
    idx = enumerate_multi_indices(2, 7)
    B = S.scaled_basis(idx)
    assert np.max(np.abs(B.T @ B - np.eye(len(idx)))) < 1e-12


def test_grid_ordering_and_budget():
    S = gauss_hermite_grid(2, 3)
    nodes = gauss_hermite_rule(3).nodes
    assert S.size == 9 and S.exact_degree == 5
    assert np.array_equal(S.points[:3, 0], [nodes[0]] * 3)
    assert np.array_equal(S.points[:3, 1], nodes)
    with pytest.raises(BudgetExceeded):
        gauss_hermite_grid(3, 100, budget=10**5)


def test_product_support_matches_tensor_grid():
    a = gauss_hermite_grid(1, 6)
    P = product_support(a, a)
    G = gauss_hermite_grid(2, 6)
    assert P.same_as(G)
    assert P.kind == "quadrature"


def test_line_support_moments():
    S = gaussian_line_support(12.0, 0.01)
    x = S.points[:, 0]
    assert math.fsum(S.weights) == pytest.approx(1.0, abs=1e-14)
    assert math.fsum(S.weights * x ** 2) == pytest.approx(1.0, abs=1e-12)
    assert math.fsum(S.weights * x ** 4) == pytest.approx(3.0, abs=1e-11)
    assert np.array_equal(x, -x[::-1])


def test_l1_norm_of_identity_on_line_support():
    S = gaussian_line_support(12.0, 0.01)
    x = S.evaluate(lambda p: p[:, 0])
    assert lq_norm(x, 1) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-12)
    assert lq_norm(x, 3) == pytest.approx((2 * math.sqrt(2 / math.pi)) ** (1 / 3), abs=1e-12)


def test_monte_carlo_support_is_seeded():
    a = monte_carlo_support(3, 100, seed=5)
    b = monte_carlo_support(3, 100, seed=5)
    c = monte_carlo_support(3, 100, seed=6)
    assert a.same_as(b)
    assert not a.same_as(c)
    assert math.fsum(a.weights) == pytest.approx(1.0)


def test_enumeration_counts():
    for k, d in [(1, 5), (2, 4), (3, 6), (8, 3)]:
        assert len(enumerate_multi_indices(k, d)) == math.comb(k + d, d)
    assert len(enumerate_multi_indices(3, 4, include_zero=False)) == math.comb(7, 4) - 1
    even = enumerate_multi_indices(2, 4, parity="even_only")
    assert even == [MultiIndex(t) for t in [(0, 0), (2, 0), (0, 2), (4, 0), (2, 2), (0, 4)]]
    capped = enumerate_multi_indices(4, 3, max_support=1)
    assert all(J.support_size <= 1 for J in capped) and len(capped) == 1 + 4 * 3


def test_multi_index_rejects_negative():
    with pytest.raises(ValueError):
        MultiIndex((1, -1))
    J = MultiIndex((3, 0, 2))
    assert J.total_degree == 5 and J.support_size == 2
    assert J.sqrt_factorial() == pytest.approx(math.sqrt(12))


def test_norms_and_inner_product():
    S = gauss_hermite_grid(1, 10)
    x = S.evaluate(lambda p: p[:, 0], poly_degree=1)
    one = S.constant(1.0)
    assert inner_product(x, x) == pytest.approx(1.0, abs=1e-13)
    assert inner_product(x, one) == pytest.approx(0.0, abs=1e-14)
    assert lq_norm(x, 2) == pytest.approx(1.0, abs=1e-13)
    assert lq_norm(x, math.inf) == pytest.approx(np.max(np.abs(S.points)))
    with pytest.raises(ValueError):
        lq_norm(x, 0.5)
    with pytest.raises(SupportMismatch):
        inner_product(x, gauss_hermite_grid(1, 11).constant(1.0))


def test_expansion_flags_exactness():
    S = gauss_hermite_grid(1, 6)
    f = S.evaluate(lambda p: p[:, 0] ** 3, poly_degree=3)
    exp = expansion_from_grid(f, 5)
    assert exp.exact
    assert exp[(3,)] == pytest.approx(math.sqrt(6))
    assert exp[(1,)] == pytest.approx(3.0)
    assert not expansion_from_grid(f, 9).exact


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=10, max_size=10))
def test_expansion_roundtrip(coefs):
    """A degree-3 polynomial in 2 variables is recovered from its values on an exact grid."""
    idx = enumerate_multi_indices(2, 3)
    exp = HermiteExpansion(2, dict(zip(idx, coefs)))
    S = gauss_hermite_grid(2, 4)
    back = expansion_from_grid(exp.on(S), 3, drop_tol=0.0)
    assert back.exact
    for J, c in zip(idx, coefs):
        assert back[J] == pytest.approx(c, abs=1e-12)
    assert exp.on(S).sup_norm() >= 0
    assert lq_norm(exp.on(S), 2) == pytest.approx(exp.norm(), abs=1e-12)


def test_basis_matrix_dimension_check():
    with pytest.raises(DimensionMismatch):
        basis_matrix(np.zeros((3, 2)), [(1, 0, 0)])
    with pytest.raises(DimensionMismatch):
        GridFunction(gauss_hermite_grid(1, 3), np.zeros(4))

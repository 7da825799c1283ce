"""The self-written L1 simplex codes against an independent HiGHS slack LP."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import polynomial as P
from scipy.optimize import linprog

from reslab import lp


def highs_l1(B, b, a):
    """min sum a t  s.t.  -t <= b - B c <= t, solved by HiGHS (test oracle).

    Returns the objective re-evaluated at HiGHS's coefficients, which is
    the value of a truly feasible point; the reported ``fun`` can sit up to
    the solver's feasibility tolerance below any attainable value.
    """
    N, n = B.shape
    cost = np.concatenate([np.zeros(n), a])
    I = np.eye(N)
    A_ub = np.block([[-B, -I], [B, -I]])
    b_ub = np.concatenate([-b, b])
    bounds = [(None, None)] * n + [(0, None)] * N
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    assert res.status == 0
    return math.fsum(a * np.abs(b - B @ res.x[:n]))


def _problem(seed, N, n):
    rng = np.random.default_rng(seed)
    B = np.linalg.qr(rng.standard_normal((N, n)))[0]
    b = rng.standard_normal(N)
    a = rng.random(N) + 0.05
    return B, b, a


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(8, 60), st.integers(1, 7))
def test_dense_simplex_matches_highs(seed, N, n):
    B, b, a = _problem(seed, N, n)
    res = lp.dense_l1_simplex(B, b, a)
    assert res.status == lp.OPTIMAL
    ref = highs_l1(B, b, a)
    assert res.objective <= ref + 1e-12 * max(1.0, ref)
    assert res.objective == pytest.approx(ref, abs=1e-6 * max(1.0, ref))
    # certificate: v in [-1, 1], B^T (a v) = 0, and sum a v b equals the primal value
    assert np.max(np.abs(res.dual)) <= 1 + 1e-9
    assert np.max(np.abs(B.T @ (a * res.dual))) <= 1e-9 * max(1.0, ref)
    assert res.duality_gap <= 1e-9 * max(1.0, ref)
    assert np.allclose(B @ res.coef, res.fit)


def test_dense_simplex_degenerate_boolean_target():
    """+-1 target on a symmetric grid: many zero residuals at the optimum."""
    x = np.linspace(-1, 1, 41)
    B = np.linalg.qr(np.vander(x, 4, increasing=True))[0]
    b = np.where(np.abs(x) <= 0.5, 1.0, -1.0)
    a = np.exp(-x ** 2)
    res = lp.dense_l1_simplex(B, b, a)
    assert res.status == lp.OPTIMAL
    ref = highs_l1(B, b, a)
    assert res.objective <= ref + 1e-12
    assert res.objective == pytest.approx(ref, abs=1e-6)
    assert res.duality_gap <= 1e-10


def test_dense_simplex_edge_shapes():
    b = np.array([1.0, -2.0, 3.0])
    a = np.ones(3)
    res = lp.dense_l1_simplex(np.zeros((3, 0)), b, a)
    assert res.objective == 6.0
    res = lp.dense_l1_simplex(np.eye(3), b, a)
    assert res.objective == 0.0


@pytest.mark.parametrize("d", [0, 1, 2, 3, 5, 8])
@pytest.mark.parametrize("parity", ["all", "even", "odd"])
def test_nodal_simplex_matches_highs(d, parity):
    rng = np.random.default_rng(d + 10 * len(parity))
    if parity == "all":
        x = np.sort(rng.uniform(-3, 3, 80))
    else:
        x = np.sort(rng.uniform(0.01, 3, 80))
    logw = -0.5 * x ** 2 + np.log(rng.random(80) + 0.1)
    f = np.tanh(3 * x) + 0.3 * np.cos(5 * x)
    powers = {"all": range(d + 1), "even": range(0, d + 1, 2), "odd": range(1, d + 1, 2)}[parity]
    powers = list(powers)
    res = lp.nodal_l1_simplex(x, logw, f, d, parity)
    assert res.status == lp.OPTIMAL
    if not powers:
        assert res.objective == pytest.approx(math.fsum(np.exp(logw) * np.abs(f)))
        return
    B = np.stack([(x / 3) ** p for p in powers], axis=1)
    w = np.exp(logw)
    ref = highs_l1(B, f, w)
    assert res.objective <= ref + 1e-12
    assert res.objective == pytest.approx(ref, abs=1e-6)
    # the certificate proves optimality on its own
    assert np.max(np.abs(res.dual)) <= 1 + 1e-12
    assert np.max(np.abs(B.T @ (w * res.dual))) <= 1e-12
    assert res.duality_gap <= 1e-9
    fit = lp.nodal_evaluate(res, x, parity)
    assert math.fsum(np.exp(logw) * np.abs(f - fit)) == pytest.approx(res.objective, abs=1e-9)


def test_nodal_simplex_recovers_polynomial():
    x = np.linspace(-2, 2, 50)
    c = [0.5, -1.0, 0.25, 0.125]
    f = P.polyval(x, c)
    res = lp.nodal_l1_simplex(x, -0.5 * x ** 2, f, 3)
    assert res.objective == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(lp.nodal_evaluate(res, x, "all"), f, atol=1e-10)


def test_nodal_dimension():
    assert lp.nodal_dimension(5, "all") == 6
    assert lp.nodal_dimension(5, "even") == 3
    assert lp.nodal_dimension(5, "odd") == 3
    assert lp.nodal_dimension(0, "odd") == 0
    with pytest.raises(ValueError):
        lp.nodal_dimension(3, "sideways")


def test_bounded_fit_lp():
    """min sum w|f - g|, |g| <= 1, g orthogonal to constants and x, on a small symmetric grid."""
    x = np.linspace(-2, 2, 21)
    w = np.exp(-x ** 2 / 2)
    w /= w.sum()
    f = np.where(x >= 0, 1.0, -1.0)
    C = np.stack([w, w * x], axis=1)
    obj, g, status, gap = lp.highs_bounded_fit(f, w, C)
    assert status == lp.OPTIMAL
    assert np.max(np.abs(g)) <= 1 + 1e-9
    assert np.max(np.abs(C.T @ g)) <= 1e-9
    assert obj == pytest.approx(math.fsum(w * np.abs(f - g)), abs=1e-9)
    # Boolean duality on the same grid against the primal L1 problem
    B = np.stack([np.ones_like(x), x], axis=1)
    assert obj + highs_l1(B, f, w) == pytest.approx(1.0, abs=1e-7)

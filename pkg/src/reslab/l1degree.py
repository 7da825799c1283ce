"""Best L1 polynomial approximation, the dual witness LP, and approximate degree.

e*(f, d) is the smallest weighted L1 distance from f to a polynomial of
total degree <= d; alpha*(f, d) is the smallest distance from f to a
function with values in [-1, 1] orthogonal to all such polynomials.  For
+-1 valued f the two satisfy alpha* + e* = 1.  They are computed by
unrelated solvers (a self-written simplex for e*, HiGHS for alpha*), so
the identity is a genuine cross-check.

Symmetry is used to shrink the e* problem: on a support that is symmetric
under x_a -> -x_a, a function that is even (odd) in x_a has an optimal
approximation that is even (odd) in x_a, because averaging a polynomial
with its reflection never increases the L1 error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import lp
from .tables import rows_to_csv
from .errors import BudgetExceeded, NotBoolean
from .hermite import (GridFunction, HermiteExpansion, MultiIndex, Support, basis_matrix,
                      enumerate_multi_indices,
                      gauss_hermite_rule, gaussian_line_support, normalized_table, product_support)

DEFAULT_LP_BUDGET = 2 * 10**7  # support points times columns
TIE_BREAK_BUDGET = 2 * 10**6
BOOLEAN_TOL = 1e-12


@dataclass
class LpSolution:
    """Result of one LP solve.

    ``primal`` is the approximating polynomial (best_l1_poly) or the
    witness values (best_resilient_distance).  ``fit`` holds the fitted
    polynomial's values on the support when available.
    """

    d: int
    objective: float
    primal: object
    status: str
    duality_gap: float
    solver: str = ""
    iterations: int = 0
    fit: Optional[GridFunction] = None
    tie_break: str = "none"
    notes: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == lp.OPTIMAL


# ---------------------------------------------------------------------------
# symmetry detection


def mirror_permutation(support: Support, axis: int) -> Optional[np.ndarray]:
    """Permutation pi with points[pi[s]] = reflection of points[s] in ``axis``.

    Returns None when the support (points and weights) is not exactly
    symmetric under that reflection.
    """
    P = support.points
    R = P.copy()
    R[:, axis] = -R[:, axis]
    sp = np.lexsort(P.T[::-1])
    sr = np.lexsort(R.T[::-1])
    if not np.array_equal(P[sp], R[sr]):
        return None
    perm = np.empty(len(P), dtype=int)
    perm[sr] = sp
    if not np.allclose(support.log_weights[perm], support.log_weights, rtol=0, atol=1e-9):
        return None
    return perm


def axis_parities(f: GridFunction) -> list:
    """Per axis: 'even', 'odd' or 'all' (no usable symmetry)."""
    out = []
    for a in range(f.dimension):
        perm = mirror_permutation(f.support, a)
        if perm is None:
            out.append("all")
            continue
        fr = f.values[perm]
        if np.array_equal(fr, f.values):
            out.append("even")
        elif np.array_equal(fr, -f.values):
            out.append("odd")
        else:
            out.append("all")
    return out


def _parity_filter(indices, parities):
    keep = []
    for J in indices:
        ok = True
        for e, p in zip(J, parities):
            if (p == "even" and e % 2) or (p == "odd" and e % 2 == 0):
                ok = False
                break
        if ok:
            keep.append(J)
    return keep


# ---------------------------------------------------------------------------
# e*: best L1 polynomial


def _require_finite(f: GridFunction):
    if not np.all(np.isfinite(f.values)):
        raise ValueError("function values must be finite")


def _nodal_coefficients(res: lp.L1Result, d: int, parity: str) -> HermiteExpansion:
    """Hermite coefficients of a nodal fit by an exact Gauss-Hermite rule."""
    rule = gauss_hermite_rule(d + 1)
    half = 0.5 * rule.log_weights
    sp = lp.nodal_evaluate(res, rule.nodes, parity, logscale=half)
    table = normalized_table(rule.nodes, d, half)
    c = table @ sp
    coeffs = {}
    for j in range(d + 1):
        if (parity == "odd" and j % 2 == 0) or (parity == "even" and j % 2):
            continue
        if c[j] != 0.0:
            coeffs[(j,)] = c[j]
    return HermiteExpansion(1, coeffs, exact=True)


def _solve_line(f: GridFunction, d: int, max_iter: int):
    """Univariate e* by the nodal simplex, reduced by symmetry when possible."""
    x = f.points[:, 0]
    logw = f.support.log_weights
    parity = axis_parities(f)[0]
    const = 0.0
    if parity == "odd":
        sel = x > 0
        at0 = x == 0
        const = math.fsum(np.exp(logw[at0]) * np.abs(f.values[at0]))
        lw = logw[sel] + math.log(2.0)
    elif parity == "even":
        sel = x >= 0
        lw = logw[sel] + np.where(x[sel] > 0, math.log(2.0), 0.0)
    else:
        sel = np.ones(len(x), bool)
        lw = logw
    res = lp.nodal_l1_simplex(x[sel], lw, f.values[sel], d, parity, max_iter=max_iter)
    fit = lp.nodal_evaluate(res, x, parity)
    poly = _nodal_coefficients(res, d, parity)
    sol = LpSolution(d, res.objective + const, poly, res.status,
                     abs(res.objective - res.dual_objective), solver=f"nodal-simplex/{parity}",
                     iterations=res.iterations, fit=GridFunction(f.support, fit, d))
    sol.notes["dual_objective"] = res.dual_objective + const
    return sol


def fold_by_symmetry(f: GridFunction, parities):
    """Restrict to x_a >= 0 on every symmetric axis, doubling weights off the mirror plane.

    Returns (selected point mask, adjusted log weights, constant), where the
    constant is the fixed contribution of points on the plane of an odd axis
    (f vanishes there, so it is zero for exactly odd f).
    """
    pts = f.points
    sel = np.ones(len(pts), bool)
    lw = f.support.log_weights.copy()
    const = 0.0
    for a, par in enumerate(parities):
        if par == "all":
            continue
        xa = pts[:, a]
        if par == "odd":
            on_plane = sel & (xa == 0)
            const += math.fsum(np.exp(lw[on_plane]) * np.abs(f.values[on_plane]))
            sel &= xa > 0
        else:
            sel &= xa >= 0
        lw = lw + np.where(xa > 0, math.log(2.0), 0.0)
    return sel, lw[sel], const


def _solve_dense(f: GridFunction, d: int, max_iter: int, budget: int):
    parities = axis_parities(f)
    indices = _parity_filter(enumerate_multi_indices(f.dimension, d), parities)
    sel, lw, const = fold_by_symmetry(f, parities)
    pts, vals = f.points[sel], f.values[sel]
    N, n = len(pts), len(indices)
    if N * n > budget:
        raise BudgetExceeded("L1 LP (points x columns)", N * n, budget)
    sw = np.exp(0.5 * lw)
    U = basis_matrix(pts, indices, 0.5 * lw) if n else np.zeros((N, 0))
    Qm, R = np.linalg.qr(U) if n else (U, np.zeros((0, 0)))
    res = lp.dense_l1_simplex(Qm, sw * vals, sw, max_iter=max_iter)
    coef = np.linalg.solve(R, res.coef) if n else np.zeros(0)
    sol = LpSolution(d, res.objective + const, None, res.status, res.duality_gap,
                     solver="dense-simplex", iterations=res.iterations)
    sol.notes["dual_objective"] = res.dual_objective + const
    sol.notes["indices"] = indices
    sol.notes["coef"] = coef
    sol.notes["folded"] = (pts, lw, vals, U)
    return sol


def _tie_break(sol: LpSolution, lw, vals, U):
    """Coefficients of smallest L1 norm among optimal ones, when that LP is cheap."""
    if not sol.optimal or U.shape[0] * U.shape[1] > TIE_BREAK_BUDGET or U.shape[1] == 0:
        return None
    sw = np.exp(0.5 * lw)
    target = sol.objective - sol.notes.get("const", 0.0)
    c = lp.highs_min_norm_fit(U, sw * vals, sw, target)
    if c is None:
        return None
    err = math.fsum(sw * np.abs(sw * vals - U @ c))
    if err > target + 1e-7 * max(1.0, target):
        return None
    return c


def _improves(candidate, current, tol: float = 1e-7) -> bool:
    """Whether the tie-break solution has a clearly smaller coefficient L1 norm."""
    a, b = np.abs(candidate).sum(), np.abs(current).sum()
    return a < b - tol * max(1.0, b)


def best_l1_poly(f: GridFunction, d: int, tie_break: bool = True, max_iter: int = 100000,
                 budget: int = DEFAULT_LP_BUDGET) -> LpSolution:
    """Minimize sum_s w_s |f_s - p(x_s)| over polynomials of total degree <= d.

    One-dimensional supports use the nodal simplex (stable at any degree
    the support can resolve); higher dimensions use the dense simplex on
    the orthonormalized Hermite columns.  When ``tie_break`` is set and the
    problem is small, the returned coefficients are those of smallest L1
    norm among optimal solutions (a secondary LP).
    """
    if d < 0:
        raise ValueError("d must be >= 0")
    _require_finite(f)
    if f.dimension == 1:
        sol = _solve_line(f, d, max_iter)
        if tie_break and d <= 20:
            parities = axis_parities(f)
            indices = _parity_filter(enumerate_multi_indices(1, d), parities)
            sel, lw, const = fold_by_symmetry(f, parities)
            sol.notes["const"] = const
            U = basis_matrix(f.points[sel], indices, 0.5 * lw)
            c = _tie_break(sol, lw, f.values[sel], U)
            sol.tie_break = "skipped"
            current = np.array([sol.primal[J] for J in indices])
            if c is not None:
                sol.tie_break = "min_l1_coefficients"
                if _improves(c, current):
                    sol.primal = HermiteExpansion(1, dict(zip(indices, c)), exact=True)
                    sol.fit = GridFunction(f.support, sol.primal.evaluate(f.points), d)
        return sol
    sol = _solve_dense(f, d, max_iter, budget)
    indices, coef = sol.notes.pop("indices"), sol.notes.pop("coef")
    pts, lw, vals, U = sol.notes.pop("folded")
    if tie_break:
        c = _tie_break(sol, lw, vals, U)
        sol.tie_break = "skipped"
        if c is not None:
            if _improves(c, coef):
                coef = c
            sol.tie_break = "min_l1_coefficients"
    exact = f.support.exact_degree is not None and f.support.exact_degree >= 2 * d
    sol.primal = HermiteExpansion(f.dimension, dict(zip(indices, coef)), exact=exact)
    sol.fit = GridFunction(f.support, sol.primal.evaluate(f.points), d)
    return sol


# ---------------------------------------------------------------------------
# alpha*: bounded orthogonal witness


def best_resilient_distance(f: GridFunction, d: int, prune: float = 1e-14,
                            budget: int = DEFAULT_LP_BUDGET) -> LpSolution:
    """Minimize sum_s w_s |f_s - g_s| over g in [-1, 1] orthogonal to degree <= d.

    Solved with HiGHS on the full support, without symmetry reduction.
    Points whose weight is below ``prune`` times the largest are held at
    g = 0 (their contribution is still counted).
    """
    if d < 0:
        raise ValueError("d must be >= 0")
    _require_finite(f)
    indices = enumerate_multi_indices(f.dimension, d)
    N = f.support.size
    if N * len(indices) > budget:
        raise BudgetExceeded("witness LP (points x columns)", N * len(indices), budget)
    sw = np.exp(0.5 * f.support.log_weights)
    C = f.support.scaled_basis(indices) * sw[:, None]
    obj, g, status, gap = lp.highs_bounded_fit(f.values, f.weights, C, prune=prune)
    return LpSolution(d, obj, GridFunction(f.support, g), status, gap, solver="highs")


# ---------------------------------------------------------------------------
# duality and degree search


def _require_boolean(f: GridFunction):
    if not f.is_boolean():
        raise NotBoolean("function must take values in {-1, +1} on its support")


@dataclass(frozen=True)
class DualityReport:
    d: int
    e_star: float
    alpha_star: float
    residual: float
    e_status: str
    alpha_status: str


def duality_report(f: GridFunction, d: int) -> DualityReport:
    _require_boolean(f)
    e = best_l1_poly(f, d, tie_break=False)
    a = best_resilient_distance(f, d)
    return DualityReport(d, e.objective, a.objective, abs(a.objective + e.objective - 1.0),
                         e.status, a.status)


def duality_check(f: GridFunction, d: int) -> float:
    """|alpha*(d) + e*(d) - 1| for a +-1 valued f."""
    return duality_report(f, d).residual


class ErrorCurve:
    """Memoized d -> e*(f, d) for one function."""

    def __init__(self, f: GridFunction, solver: Optional[Callable] = None):
        self.f = f
        self._solve = solver or (lambda g, d: best_l1_poly(g, d, tie_break=False))
        self.values = {}
        self.status = {}

    def __call__(self, d: int) -> float:
        if d not in self.values:
            sol = self._solve(self.f, d)
            self.values[d] = sol.objective
            self.status[d] = sol.status
        return self.values[d]


def l1_approx_degree(f, eps: float, d_max: int, curve: Optional[ErrorCurve] = None,
                     start: int = 0, tol: float = 1e-9) -> Optional[int]:
    """Smallest d <= d_max with e*(f, d) <= eps, or None if e*(d_max) > eps.

    e* is nonincreasing in d, so the search doubles upward from ``start``
    and then bisects.  ``tol`` absorbs round-off when eps is an exact
    attainable value such as 0.
    """
    if not 0 <= eps < 1:
        raise ValueError("eps must be in [0, 1)")
    curve = curve or ErrorCurve(f)
    ok = lambda d: curve(d) <= eps + tol  # noqa: E731
    lo = max(0, start)
    if ok(lo):
        # everything below start is unexplored; bisect from 0
        hi, lo = lo, -1
    else:
        step = max(1, lo)
        hi = lo + step
        while True:
            if hi >= d_max:
                hi = d_max
                if not ok(hi):
                    return None
                break
            if ok(hi):
                break
            lo, step = hi, 2 * step
            hi = lo + step
    # invariant: ok(hi), not ok(lo) (lo = -1 means unknown below)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if mid < 0:
            break
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# sign-function degree sweep


def line_support_for_degree(d_max: int, spacing: float = 0.0073) -> Support:
    """Composite line support wide enough for degree-d_max sign approximation."""
    return gaussian_line_support(1.5 * math.sqrt(max(d_max, 1)) + 6.0, spacing)


def _sign_on(support: Support) -> GridFunction:
    return support.evaluate(lambda p: np.sign(p[:, 0]))


@dataclass
class SignSweep:
    eps: list
    degrees: list
    slope: float
    curve: dict
    drift: dict
    support_size: int
    fine_support_size: int

    def slope_ok(self, lo: float = 1.6, hi: float = 2.4) -> bool:
        return lo <= self.slope <= hi


def fitted_slope(eps, degrees) -> float:
    """Least-squares slope of log d against log(1/eps)."""
    xs = np.log(1.0 / np.asarray(eps, dtype=float))
    ys = np.log(np.asarray(degrees, dtype=float))
    return float(np.polyfit(xs, ys, 1)[0])


def sign_degree_sweep(eps_list=(0.2, 0.1, 0.05), d_max: int = 600, spacing: float = 0.0073,
                      check_drift: bool = True) -> SignSweep:
    """Approximate degree of sign(x) under the Gaussian for each eps.

    Degrees are searched upward in order of decreasing eps.  Each degree is
    re-checked on a support with half the spacing: the drift of e* at the
    found degree and at the next lower degree of the same parity is
    recorded so the threshold decision can be judged.
    """
    eps_sorted = sorted(eps_list, reverse=True)
    S = line_support_for_degree(d_max, spacing)
    f = _sign_on(S)
    curve = ErrorCurve(f)
    degrees = {}
    start = 0
    for eps in eps_sorted:
        deg = l1_approx_degree(f, eps, d_max, curve=curve, start=start)
        degrees[eps] = deg
        if deg is not None:
            start = deg
    drift = {}
    fine_size = 0
    if check_drift:
        fine = line_support_for_degree(d_max, spacing / 2.0)
        fine_size = fine.size
        fcurve = ErrorCurve(_sign_on(fine))
        for deg in degrees.values():
            if deg is None:
                continue
            for dd in (deg, deg - 2):
                if dd >= 0 and dd not in drift:
                    drift[dd] = abs(fcurve(dd) - curve(dd))
    found = [(e, degrees[e]) for e in eps_list if degrees[e] is not None]
    slope = fitted_slope([e for e, _ in found], [g for _, g in found]) if len(found) >= 2 else math.nan
    return SignSweep(list(eps_list), [degrees[e] for e in eps_list], slope, dict(curve.values),
                     drift, S.size, fine_size)


# ---------------------------------------------------------------------------
# AND composition


def and_compose(g1: GridFunction, g2: GridFunction) -> GridFunction:
    """g(z1, z2) = +1 iff g1(z1) = +1 and g2(z2) = +1, on the product support."""
    _require_boolean(g1)
    _require_boolean(g2)
    S = product_support(g1.support, g2.support)
    v = np.where(np.outer(g1.values > 0, g2.values > 0).reshape(-1), 1.0, -1.0)
    return GridFunction(S, v)


def acceptance_probability(g: GridFunction) -> float:
    return math.fsum(g.weights[g.values > 0])


@dataclass
class CompositionReport:
    eps: float
    c: float
    d_max: int
    degree_1: Optional[int]
    degree_2: Optional[int]
    degree_composed: Optional[int]

    @property
    def holds(self) -> bool:
        """Composed (c eps)-degree >= max of component eps-degrees.

        None means "exceeds d_max".  A composed degree above d_max cannot
        refute the inequality; a component above d_max with a composed
        degree within range does.
        """
        comp = [self.degree_1, self.degree_2]
        if self.degree_composed is None:
            return True
        if any(g is None for g in comp):
            return False
        return self.degree_composed >= max(comp)

    @property
    def conclusive(self) -> bool:
        """True when every degree was resolved within d_max."""
        return None not in (self.degree_1, self.degree_2, self.degree_composed)


def composition_check(g1: GridFunction, g2: GridFunction, eps: float, d_max: int) -> CompositionReport:
    c = min(acceptance_probability(g1), acceptance_probability(g2))
    d1 = l1_approx_degree(g1, eps, d_max)
    d2 = l1_approx_degree(g2, eps, d_max)
    g = and_compose(g1, g2)
    lower = max(x for x in (d1, d2, 0) if x is not None)
    dc = l1_approx_degree(g, c * eps, d_max, start=0 if lower == 0 else lower - 1) \
        if lower <= d_max else None
    return CompositionReport(eps, c, d_max, d1, d2, dc)


# ---------------------------------------------------------------------------
# CSV output

SWEEP_FIELDS = ("function_id", "d", "e_star", "alpha_star", "duality_residual", "grid_Q",
                "solver_status")


def degree_sweep_rows(function_id: str, f: GridFunction, degrees, with_alpha: bool = True,
                      grid_q=None) -> list:
    rows = []
    for d in degrees:
        e = best_l1_poly(f, d, tie_break=False)
        row = {"function_id": function_id, "d": d, "e_star": e.objective,
               "alpha_star": None, "duality_residual": None,
               "grid_Q": grid_q if grid_q is not None else (f.support.Q or f.support.size),
               "solver_status": e.status}
        if with_alpha:
            a = best_resilient_distance(f, d)
            row["alpha_star"] = a.objective
            row["duality_residual"] = abs(a.objective + e.objective - 1.0)
            if a.status != lp.OPTIMAL:
                row["solver_status"] = f"{e.status}/{a.status}"
        rows.append(row)
    return rows


__all__ = [
    "LpSolution", "best_l1_poly", "best_resilient_distance", "duality_check", "duality_report",
    "DualityReport", "l1_approx_degree", "ErrorCurve", "sign_degree_sweep", "SignSweep",
    "fitted_slope", "and_compose", "composition_check", "CompositionReport",
    "acceptance_probability", "mirror_permutation", "axis_parities", "degree_sweep_rows",
    "rows_to_csv", "SWEEP_FIELDS", "line_support_for_degree", "MultiIndex",
]

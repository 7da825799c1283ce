"""Linear-programming solvers for weighted L1 fitting and bounded orthogonal witnesses.

Two simplex codes solve the L1 regression LP

    minimize  sum_s a_s |b_s - B_s . c|

in its slack form (the LP has one slack per point, bounded on both sides;
the dual is max sum_s a_s b_s v_s subject to B^T (a v) = 0, |v| <= 1).
Both keep a basis of n interpolation points: the fit reproduces b exactly
there, every other point sits at a bound, and one pivot swaps a basic point
for a nonbasic one after a weighted-median line search (the Barrodale and
Roberts step).

* :func:`dense_l1_simplex` stores the basis as an LU factorization of the
  n x n block of B.  Used for multivariate tensor grids of modest degree.
* :func:`nodal_l1_simplex` is the univariate variant.  The basis block is
  never formed; its inverse times B is the matrix of Lagrange polynomials
  through the basic nodes, kept in product form (log-magnitude plus sign)
  so that high-degree fits whose optimal polynomial is astronomically
  large in the Gaussian tails stay accurate in double precision.

Degenerate stalls switch pivot selection to Bland's rule.

:func:`highs_bounded_fit` wraps scipy's HiGHS interface for the separate
witness LP (values in [-1, 1], orthogonal to a given column space).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.linalg import eigh_tridiagonal, lu_factor, lu_solve, qr
from scipy.optimize import linprog

OPTIMAL = "optimal"
ITERATION_LIMIT = "iteration_limit"
INFEASIBLE = "infeasible"
NUMERICAL = "numerical_failure"


@dataclass
class L1Result:
    """Outcome of an L1 simplex run.

    ``fit`` is a_s-free: the fitted values B c (dense) or p(x) (nodal) at
    every input point.  ``dual`` holds the multipliers v_s in [-1, 1].
    """

    objective: float
    dual_objective: float
    status: str
    iterations: int
    fit: np.ndarray
    dual: np.ndarray
    basis: np.ndarray
    coef: Optional[np.ndarray] = None
    node_values: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    @property
    def duality_gap(self) -> float:
        return abs(self.objective - self.dual_objective)


# ---------------------------------------------------------------------------
# shared pivot step


def _ratio_step(wr, gE, zero, inb, slope0):
    """Weighted-median line search along one edge.

    ``wr`` are weighted residuals a_s r_s, ``gE`` the weighted rate a_s g_s at
    which they change per unit step.  Returns the entering point index, or
    -1 when no breakpoint stops the descent.
    """
    nz = (gE != 0) & ~inb
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(nz, wr / np.where(nz, gE, 1.0), -1.0)
    t[zero & nz] = 0.0
    cand = np.nonzero(nz & (t >= 0))[0]
    if cand.size == 0:
        return -1
    inc = np.abs(gE[cand]) * np.where(zero[cand], 1.0, 2.0)
    order = np.lexsort((cand, t[cand]))
    slope = slope0 + np.cumsum(inc[order])
    hit = np.nonzero(slope >= 0)[0]
    if hit.size == 0:
        return -1
    return int(cand[order[hit[0]]])


class _StallGuard:
    """Switches to Bland's rule after ``patience`` pivots without progress."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.since = 0
        self.bland = False

    def update(self, objective: float):
        if objective < self.best * (1.0 - 1e-13):
            self.best = objective
            self.since = 0
        else:
            self.since += 1
        if self.since > self.patience:
            self.bland = True

    def choose(self, bad, viol, basis):
        if self.bland:
            return int(bad[np.argmin(basis[bad])])
        return int(bad[np.argmax(viol[bad])])


def _jitter(n: int, seed: int = 20240917) -> np.ndarray:
    """Fixed pseudo-random values in [-1, 1] used to break degenerate ties."""
    return np.random.default_rng(seed).uniform(-1.0, 1.0, n)


def _certify_signs(r, r_pert, scale):
    """Signs of the true residuals, falling back to the perturbed ones at exact fits."""
    tiny = np.abs(r) <= 1e-12 * scale
    return np.where(tiny, np.sign(r_pert), np.sign(r))


# ---------------------------------------------------------------------------
# dense basis


def initial_basis(B: np.ndarray) -> np.ndarray:
    """Well-conditioned set of n rows of B via column-pivoted QR of B^T."""
    n = B.shape[1]
    _, _, piv = qr(B.T, pivoting=True, mode="economic")
    return np.array(piv[:n])


def dense_l1_simplex(B, b, a, basis=None, max_iter: int = 50000, opt_tol: float = 1e-10,
                     perturb: float = 1e-9, patience: int = 50) -> L1Result:
    """Minimize sum a_s |b_s - B_s c| with a dense LU-factored basis.

    Columns of ``B`` should be well conditioned (orthonormalize first).
    Pivoting runs on b plus a tiny fixed perturbation (``perturb`` times
    a_s) so that no nonbasic residual is exactly zero; boolean targets on
    symmetric grids are otherwise massively degenerate.  The final basis is
    then evaluated on the original b, with dual signs at exactly fitted
    points taken from the perturbed run, which is a valid certificate
    because any multiplier in [-1, 1] is complementary to a zero residual.
    Optimality means |y_i| <= a_i + opt_tol * max(a) for every basic point.
    """
    B = np.ascontiguousarray(B, dtype=float)
    b = np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    N, n = B.shape
    if n == 0:
        v = np.sign(b)
        return L1Result(math.fsum(a * np.abs(b)), math.fsum(a * b * v), OPTIMAL, 0,
                        np.zeros(N), v, np.array([], int), coef=np.zeros(0))
    if n >= N:
        c = np.linalg.lstsq(B, b, rcond=None)[0]
        return L1Result(0.0, 0.0, OPTIMAL, 0, B @ c, np.zeros(N), np.arange(N), coef=c)
    bp = b + perturb * a * _jitter(N)
    basis = initial_basis(B) if basis is None else np.array(basis)
    inb = np.zeros(N, bool)
    inb[basis] = True
    amax = float(a.max())
    guard = _StallGuard(patience)
    status = ITERATION_LIMIT
    it = 0
    while it < max_iter:
        it += 1
        lu = lu_factor(B[basis])
        c = lu_solve(lu, bp[basis])
        r = bp - B @ c
        r[basis] = 0.0
        zero = np.abs(r) <= 1e-15 * (np.abs(bp) + np.abs(B) @ np.abs(c))
        zero[basis] = False
        sig = np.where(zero | inb, 0.0, np.sign(r))
        guard.update(math.fsum(a * np.abs(r)))
        y = lu_solve(lu, -(B.T @ (a * sig)), trans=1)
        viol = (np.abs(y) - a[basis]) / amax
        bad = np.nonzero(viol > opt_tol)[0]
        if bad.size == 0:
            status = OPTIMAL
            break
        p = guard.choose(bad, viol, basis)
        e = np.zeros(n)
        e[p] = -np.sign(y[p])
        g = B @ lu_solve(lu, e)
        g[basis] = 0.0
        q = _ratio_step(a * r, a * g, zero, inb, a[basis[p]] - abs(y[p]))
        if q < 0:
            status = NUMERICAL
            break
        inb[basis[p]] = False
        basis[p] = q
        inb[q] = True
    lu = lu_factor(B[basis])
    c = lu_solve(lu, b[basis])
    fit = B @ c
    r0 = b - fit
    r0[basis] = 0.0
    v = _certify_signs(r0, r, np.abs(b) + np.abs(B) @ np.abs(c))
    v[basis] = 0.0
    y = lu_solve(lu, -(B.T @ (a * v)), trans=1)
    v[basis] = np.clip(y / np.where(a[basis] > 0, a[basis], 1.0), -1.0, 1.0)
    obj = math.fsum(a * np.abs(r0))
    return L1Result(obj, math.fsum(a * b * v), status, it, fit, v, basis.copy(), coef=c)


# ---------------------------------------------------------------------------
# univariate nodal basis

PARITIES = ("all", "even", "odd")


def nodal_dimension(d: int, parity: str) -> int:
    """Number of basis polynomials of degree <= d with the given parity."""
    if parity == "all":
        return d + 1
    if parity == "even":
        return d // 2 + 1
    if parity == "odd":
        return (d + 1) // 2
    raise ValueError(f"unknown parity {parity!r}")


def _coords(x, parity):
    """Interpolation variable u and log|prefactor| for each parity."""
    if parity == "all":
        return x.copy(), np.zeros_like(x)
    if parity == "even":
        return x * x, np.zeros_like(x)
    with np.errstate(divide="ignore"):
        return x * x, np.log(np.abs(x))


def _node_constants(un):
    Dd = un[:, None] - un[None, :]
    np.fill_diagonal(Dd, 1.0)
    return np.sum(np.log(np.abs(Dd)), axis=1), np.prod(np.sign(Dd), axis=1)


def lagrange_matrix(u, lpre, logscale, un, lpn):
    """Matrix exp(logscale_s) * l_i(x_s) of Lagrange polynomials through the nodes.

    Rows that coincide with a node are returned as unit rows.
    """
    D = u[:, None] - un[None, :]
    at_node = D == 0
    with np.errstate(divide="ignore"):
        logD = np.log(np.abs(D))
    logD[at_node] = 0.0
    hit = at_node.any(axis=1)
    sgnD = np.where(at_node, 1.0, np.sign(D))
    lam, sg = _node_constants(un)
    M = logD.sum(axis=1)
    S = np.prod(sgnD, axis=1)
    logE = (logscale + lpre + M)[:, None] - logD - (lam + lpn)[None, :]
    with np.errstate(over="ignore"):
        E = np.exp(logE) * (S[:, None] * sgnD * sg[None, :])
    if hit.any():
        rows = np.nonzero(hit)[0]
        E[rows] = 0.0
        E[rows, np.argmax(at_node[rows], axis=1)] = np.exp(logscale[rows])
    return E


def gauss_hermite_zeros(m: int) -> np.ndarray:
    if m <= 0:
        return np.zeros(0)
    z = eigh_tridiagonal(np.zeros(m), np.sqrt(np.arange(1.0, m)), eigvals_only=True)
    return np.sort(0.5 * (z - z[::-1]))


def initial_nodes(x, n, parity) -> np.ndarray:
    """Indices of n distinct points of ``x`` near Gauss-Hermite-like targets."""
    if parity == "all":
        targets = gauss_hermite_zeros(n)
    elif parity == "odd":
        z = gauss_hermite_zeros(2 * n + 1)
        targets = z[n + 1:]
    else:
        z = gauss_hermite_zeros(2 * n - 1)
        targets = z[n - 1:]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    used = np.zeros(len(x), bool)
    picked = []
    for t in targets:
        j = int(np.clip(np.searchsorted(xs, t), 0, len(xs) - 1))
        if j > 0 and abs(xs[j - 1] - t) <= abs(xs[j] - t):
            j -= 1
        lo, hi = j, j + 1
        while True:
            if lo >= 0 and not used[lo]:
                j = lo
                break
            if hi < len(xs) and not used[hi]:
                j = hi
                break
            lo -= 1
            hi += 1
        used[j] = True
        picked.append(order[j])
    return np.array(picked)


def nodal_l1_simplex(x, logw, f, d: int, parity: str = "all", nodes=None,
                     max_iter: int = 100000, opt_tol: float = 1e-9, perturb: float = 1e-10,
                     patience: int = 50, refresh: int = 100) -> L1Result:
    """Minimize sum_s w_s |f_s - p(x_s)| over univariate polynomials of degree <= d.

    ``parity`` restricts p to even or odd polynomials; then ``x`` should be
    nonnegative (even) or positive (odd) and distinct in x^2.  Weights
    enter as ``logw`` so points far in the tails keep their relative size.
    Optimality is tested on v_i = y_i / w_i with relative tolerance.
    Degenerate ties are broken as in :func:`dense_l1_simplex`.

    After each pivot the Lagrange columns are updated by the rank-one
    product rule (old node factor swapped for the new one); a full
    log-domain recomputation happens every ``refresh`` pivots and before
    optimality is accepted.
    """
    x = np.asarray(x, dtype=float)
    logw = np.asarray(logw, dtype=float)
    f = np.asarray(f, dtype=float)
    N = len(x)
    n = nodal_dimension(d, parity)
    w = np.exp(logw)
    if n == 0:
        v = np.sign(f)
        return L1Result(math.fsum(w * np.abs(f)), math.fsum(w * f * v), OPTIMAL, 0,
                        np.zeros(N), v, np.array([], int), node_values=np.zeros(0),
                        extra={"u_nodes": np.zeros(0), "lpre_nodes": np.zeros(0)})
    live = w > 0
    if not live.all():
        # points whose weight underflows cannot affect the objective
        idx = np.nonzero(live)[0]
        sub = nodal_l1_simplex(x[idx], logw[idx], f[idx], d, parity,
                               None if nodes is None else np.searchsorted(idx, nodes),
                               max_iter, opt_tol, perturb, patience, refresh)
        v = np.zeros(N)
        v[idx] = sub.dual
        sub.fit = nodal_evaluate(sub, x, parity)
        sub.dual = v
        sub.basis = idx[sub.basis]
        return sub
    u, lpre = _coords(x, parity)
    if n >= N:
        return L1Result(0.0, 0.0, OPTIMAL, 0, f.copy(), np.zeros(N), np.arange(N),
                        node_values=f.copy(),
                        extra={"u_nodes": u.copy(), "lpre_nodes": lpre.copy()})
    fp = f + perturb * _jitter(N)
    nodes = initial_nodes(x, n, parity) if nodes is None else np.array(nodes)
    inb = np.zeros(N, bool)
    inb[nodes] = True
    guard = _StallGuard(patience)
    status = ITERATION_LIMIT
    E = None
    age = 0
    it = 0
    while it < max_iter:
        fresh = E is None or age >= refresh
        if fresh:
            E = lagrange_matrix(u, lpre, logw, u[nodes], lpre[nodes])
            E[inb] = 0.0
            age = 0
        it += 1
        wr = w * fp - E @ fp[nodes]
        wr[inb] = 0.0
        zero = np.abs(wr) <= 1e-15 * (w * np.abs(fp) + np.abs(E) @ np.abs(fp[nodes]))
        zero[inb] = False
        sig = np.where(zero | inb, 0.0, np.sign(wr))
        guard.update(math.fsum(np.abs(wr)))
        y = -(sig @ E)
        viol = np.abs(y) / w[nodes] - 1.0
        bad = np.nonzero(viol > opt_tol)[0]
        if bad.size == 0:
            if not fresh:
                E = None  # confirm on freshly computed products
                continue
            status = OPTIMAL
            break
        p = guard.choose(bad, viol, nodes)
        q = _ratio_step(wr, -np.sign(y[p]) * E[:, p], zero, inb, w[nodes[p]] - abs(y[p]))
        if q < 0:
            status = NUMERICAL
            break
        old = nodes[p]
        up, uq = u[old], u[q]
        un = u[nodes]
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = (u - uq) / (u - up)
            ci = (un - up) / (un - uq)
            ci[p] = 1.0
            fac[old] = 0.0
            newcol = E[:, p] * (w[q] / E[q, p])
            E *= fac[:, None]
            E *= ci[None, :]
        E[:, p] = newcol
        inb[old] = False
        nodes[p] = q
        inb[q] = True
        E[q] = 0.0
        E[old] = lagrange_matrix(u[old:old + 1], lpre[old:old + 1], logw[old:old + 1],
                                 u[nodes], lpre[nodes])[0]
        age += 1
    # certificate on the unperturbed data with fresh products
    un, lpn = u[nodes], lpre[nodes]
    E = lagrange_matrix(u, lpre, logw, un, lpn)
    E[inb] = 0.0
    wr0 = w * f - E @ f[nodes]
    wr0[inb] = 0.0
    v = _certify_signs(wr0, wr, w * np.abs(f) + np.abs(E) @ np.abs(f[nodes]))
    v[inb] = 0.0
    y = -(v @ E)
    v[nodes] = np.clip(y / w[nodes], -1.0, 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        fit = lagrange_matrix(u, lpre, np.zeros(N), un, lpn) @ f[nodes]
    return L1Result(math.fsum(np.abs(wr0)), math.fsum(w * f * v), status, it, fit, v,
                    nodes.copy(), node_values=f[nodes].copy(),
                    extra={"u_nodes": un.copy(), "lpre_nodes": lpn.copy()})


def nodal_evaluate(result: L1Result, x, parity: str, logscale=None) -> np.ndarray:
    """Evaluate exp(logscale) * p(x) for a nodal fit at arbitrary points."""
    x = np.asarray(x, dtype=float)
    if result.node_values is None or result.node_values.size == 0:
        return np.zeros_like(x)
    u, lpre = _coords(x, parity)
    ls = np.zeros_like(x) if logscale is None else np.asarray(logscale, dtype=float)
    E = lagrange_matrix(u, lpre, ls, result.extra["u_nodes"], result.extra["lpre_nodes"])
    with np.errstate(over="ignore", invalid="ignore"):
        out = E @ result.node_values
    if parity == "odd":
        out *= np.sign(x)
    return out


# ---------------------------------------------------------------------------
# bounded orthogonal witness LP (HiGHS)


def highs_bounded_fit(f, w, C, prune: float = 1e-14, tol: float = 1e-10):
    """Minimize sum_s w_s |f_s - g_s| over g in [-1, 1]^N with C^T g = 0.

    ``C`` is N x m, typically w_s Hbar_J(x_s) so that the constraints say g
    is orthogonal to each basis polynomial.  Points with
    weight below ``prune`` are fixed at g = 0, which keeps them out of the
    constraints; their contribution w |f| is still counted.  Returns
    (objective, g, status, solver_gap).
    """
    f = np.asarray(f, dtype=float)
    w = np.asarray(w, dtype=float)
    C = np.asarray(C, dtype=float)
    N, m = C.shape
    keep = w >= prune * w.max()
    idx = np.nonzero(keep)[0]
    K = idx.size
    wk = w[idx]
    # variables: g (K), t (K)
    I = sparse.identity(K, format="csr")
    A_ub = sparse.vstack([sparse.hstack([-I, -I]), sparse.hstack([I, -I])], format="csr")
    b_ub = np.concatenate([-f[idx], f[idx]])
    Aeq = C[idx].T
    scale = np.abs(Aeq).max(axis=1, keepdims=True)
    scale[scale == 0] = 1.0
    Aeq = Aeq / scale
    A_eq = sparse.hstack([sparse.csr_matrix(Aeq), sparse.csr_matrix((m, K))], format="csr")
    c = np.concatenate([np.zeros(K), wk])
    bounds = [(-1.0, 1.0)] * K + [(0.0, None)] * K
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=np.zeros(m), bounds=bounds,
                  method="highs",
                  options={"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol})
    g = np.zeros(N)
    if res.status != 0 or res.x is None:
        status = ITERATION_LIMIT if res.status == 1 else (INFEASIBLE if res.status == 2 else NUMERICAL)
        return math.fsum(w * np.abs(f)), g, status, math.nan
    g[idx] = np.clip(res.x[:K], -1.0, 1.0)
    obj = math.fsum(w * np.abs(f - g))
    pruned = math.fsum(w[~keep] * np.abs(f[~keep]))
    return obj, g, OPTIMAL, abs(obj - (res.fun + pruned))


def highs_min_norm_fit(B, b, a, target: float, slack: float = 1e-9):
    """Among c with sum a |b - B c| <= target (1 + slack), minimize sum |c_j|.

    Used only to pick a reproducible representative when the L1 optimum is
    not unique.  Returns the coefficient vector or None on failure.
    """
    B = np.asarray(B, dtype=float)
    N, n = B.shape
    Bs = sparse.csr_matrix(B)
    I = sparse.identity(N, format="csr")
    # variables: c+ (n), c- (n), t (N)
    rows_hi = sparse.hstack([-Bs, Bs, -I])   # b - Bc <= t
    rows_lo = sparse.hstack([Bs, -Bs, -I])   # Bc - b <= t
    budget = sparse.hstack([sparse.csr_matrix((1, 2 * n)), sparse.csr_matrix(a[None, :])])
    A_ub = sparse.vstack([rows_hi, rows_lo, budget], format="csr")
    b_ub = np.concatenate([-b, b, [target * (1.0 + slack) + 1e-14]])
    c = np.concatenate([np.ones(2 * n), np.zeros(N)])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(0, None)] * (2 * n + N), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0 or res.x is None:
        return None
    return res.x[:n] - res.x[n:2 * n]

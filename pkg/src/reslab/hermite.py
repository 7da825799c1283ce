"""Hermite polynomials, Gauss-Hermite quadrature and discretized L2(gamma_k).

All inner products and norms are taken against the standard Gaussian
measure.  The canonical basis is the orthonormal one, ``Hbar_J = H_J /
sqrt(J!)``, built from the probabilists' polynomials ``h_j``.

A :class:`Support` is a weighted point set standing in for gamma_k: either a
tensor Gauss-Hermite rule or a seeded Monte Carlo sample.  A
:class:`GridFunction` is a vector of values on a support.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln, logsumexp

from .errors import BudgetExceeded, DimensionMismatch, SupportMismatch

DEFAULT_POINT_BUDGET = 10**7

# factorials above this are taken through lgamma
_EXACT_FACTORIAL_MAX = 20


class MultiIndex(tuple):
    """A k-tuple of nonnegative degrees, one per coordinate."""

    def __new__(cls, entries: Iterable[int]):
        entries = tuple(int(e) for e in entries)
        if any(e < 0 for e in entries):
            raise ValueError(f"multi-index entries must be >= 0, got {entries}")
        return super().__new__(cls, entries)

    @property
    def dimension(self) -> int:
        return len(self)

    @property
    def total_degree(self) -> int:
        return sum(self)

    @property
    def support_size(self) -> int:
        return sum(1 for e in self if e)

    def log_factorial(self) -> float:
        return float(sum(gammaln(e + 1.0) for e in self))

    def sqrt_factorial(self) -> float:
        if max(self, default=0) <= _EXACT_FACTORIAL_MAX:
            return math.sqrt(math.prod(math.factorial(e) for e in self))
        return math.exp(0.5 * self.log_factorial())

    def __repr__(self):
        return f"MultiIndex({tuple(self)})"


# ---------------------------------------------------------------------------
# polynomial evaluation


def hermite_eval(j: int, x):
    """Unnormalized probabilists' Hermite polynomial h_j at ``x``.

    Uses h_{j+1} = x h_j - j h_{j-1}.  Accepts scalars or arrays.
    """
    if j < 0:
        raise ValueError("degree must be nonnegative")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if j == 0:
        return prev if prev.ndim else float(prev)
    cur = x.copy()
    for i in range(1, j):
        prev, cur = cur, x * cur - i * prev
    return cur if cur.ndim else float(cur)


def normalized_table(x, max_degree: int, log_scale=None) -> np.ndarray:
    """Rows ``Hbar_0(x) .. Hbar_max_degree(x)``, shape ``(max_degree+1, *x.shape)``.

    The normalized recurrence ``sqrt(j+1) Hbar_{j+1} = x Hbar_j - sqrt(j) Hbar_{j-1}``
    never forms factorials.  ``log_scale`` multiplies every row by
    ``exp(log_scale)``; passing half the log quadrature weight gives the
    well-scaled values ``sqrt(w) Hbar_j`` even where ``w`` underflows.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((max_degree + 1,) + x.shape)
    out[0] = 1.0 if log_scale is None else np.exp(log_scale)
    if max_degree >= 1:
        out[1] = x * out[0]
    for j in range(1, max_degree):
        out[j + 1] = (x * out[j] - math.sqrt(j) * out[j - 1]) / math.sqrt(j + 1)
    return out


def hermite_eval_normalized(J, x) -> float:
    """Orthonormal basis value ``H_J(x) / sqrt(J!)`` at a single point."""
    J = MultiIndex(J)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (len(J),):
        raise DimensionMismatch(f"point has shape {x.shape}, index has length {len(J)}")
    val = 1.0
    for j, xi in zip(J, x):
        val *= normalized_table(xi, j)[j]
    return float(val)


def basis_matrix(points, indices, log_scale=None) -> np.ndarray:
    """Matrix ``B[s, c] = Hbar_{J_c}(x_s)`` for points of shape ``(N, k)``.

    With ``log_scale`` (length N) every row is multiplied by ``exp(log_scale[s])``.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    indices = [MultiIndex(J) for J in indices]
    n, k = points.shape
    if any(len(J) != k for J in indices):
        raise DimensionMismatch("multi-index length differs from point dimension")
    if not indices:
        return np.empty((n, 0))
    top = [max(J[a] for J in indices) for a in range(k)]
    tables = [
        normalized_table(points[:, a], top[a], log_scale if a == 0 else None)
        for a in range(k)
    ]
    if log_scale is not None and k == 0:
        raise DimensionMismatch("empty points")
    B = np.empty((n, len(indices)))
    for c, J in enumerate(indices):
        col = tables[0][J[0]].copy()
        for a in range(1, k):
            col *= tables[a][J[a]]
        B[:, c] = col
    return B


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class AxisRule:
    """Gauss-Hermite rule for the standard normal on one axis."""

    nodes: np.ndarray
    log_weights: np.ndarray

    @property
    def order(self) -> int:
        return len(self.nodes)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


@functools.lru_cache(maxsize=16)
def gauss_hermite_rule(Q: int) -> AxisRule:
    """Q-point rule exact for polynomials of degree <= 2Q-1 against N(0, 1).

    Nodes are eigenvalues of the Jacobi matrix of the probabilists' Hermite
    recurrence (zero diagonal, off-diagonal sqrt(1..Q-1)).  Weights are the
    Christoffel numbers 1 / sum_{j<Q} Hbar_j(x)^2, accumulated with
    per-node rescaling so tail weights keep full relative accuracy.
    """
    if Q < 1:
        raise ValueError("quadrature order must be >= 1")
    if Q == 1:
        return AxisRule(np.zeros(1), np.zeros(1))
    x = eigh_tridiagonal(np.zeros(Q), np.sqrt(np.arange(1.0, Q)), eigvals_only=True)
    x = 0.5 * (x - x[::-1])  # exact symmetry
    prev = np.zeros(Q)
    cur = np.ones(Q)
    total = np.ones(Q)
    log_shift = np.zeros(Q)
    for j in range(Q - 1):
        nxt = (x * cur - math.sqrt(j) * prev) / math.sqrt(j + 1)
        prev, cur = cur, nxt
        total += cur * cur
        big = np.abs(cur) > 1e100
        if big.any():
            s = np.where(big, np.abs(cur), 1.0)
            prev /= s
            cur /= s
            total /= s * s
            log_shift += 2.0 * np.log(s)
    logw = -(np.log(total) + log_shift)
    logw -= logsumexp(logw)
    x.setflags(write=False)
    logw.setflags(write=False)
    return AxisRule(x, logw)


@dataclass(frozen=True, eq=False)
class Support:
    """Weighted points standing in for gamma_k.

    ``kind`` is ``"quadrature"`` (tensor Gauss-Hermite, order ``Q`` per axis),
    ``"monte_carlo"`` (``n_samples`` draws from ``seed``) or ``"custom"``.
    """

    points: np.ndarray
    log_weights: np.ndarray
    kind: str = "custom"
    Q: Optional[int] = None
    seed: Optional[int] = None
    axis_rules: tuple = field(default=(), repr=False)
    half_width: Optional[float] = None
    spacing: Optional[float] = None

    def __post_init__(self):
        if self.points.ndim != 2:
            raise DimensionMismatch("points must be an (N, k) array")
        if len(self.log_weights) != len(self.points):
            raise DimensionMismatch("points and weights differ in length")
        self.points.setflags(write=False)
        self.log_weights.setflags(write=False)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self):
        return self.size

    @functools.cached_property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights)
        w.setflags(write=False)
        return w

    @property
    def exact_degree(self) -> Optional[int]:
        """Per-axis polynomial degree integrated exactly, if any."""
        return 2 * self.Q - 1 if self.kind == "quadrature" else None

    @property
    def tag(self) -> str:
        if self.kind == "quadrature":
            return f"quadrature(Q={self.Q})"
        if self.kind == "monte_carlo":
            return f"monte_carlo(seed={self.seed}, N={self.size})"
        if self.kind == "composite":
            return f"composite(L={self.half_width:g}, h={self.spacing:g})"
        return "custom"

    def same_as(self, other: "Support") -> bool:
        if self is other:
            return True
        return (
            self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.log_weights, other.log_weights)
        )

    def evaluate(self, fn: Callable, poly_degree: Optional[int] = None) -> "GridFunction":
        """Apply a vectorized ``fn((N, k) array) -> (N,)`` to the points."""
        vals = np.asarray(fn(self.points), dtype=float).reshape(-1)
        if vals.shape[0] != self.size:
            raise DimensionMismatch("function returned wrong number of values")
        return GridFunction(self, vals, poly_degree)

    def constant(self, c: float) -> "GridFunction":
        return GridFunction(self, np.full(self.size, float(c)), 0)

    def basis(self, indices) -> np.ndarray:
        return basis_matrix(self.points, indices)

    def scaled_basis(self, indices) -> np.ndarray:
        """``sqrt(w_s) Hbar_J(x_s)``; columns are orthonormal on exact grids."""
        return basis_matrix(self.points, indices, 0.5 * self.log_weights)


def gauss_hermite_grid(k: int, Q: int, budget: int = DEFAULT_POINT_BUDGET) -> Support:
    """Tensor Gauss-Hermite support with Q nodes per axis (Q**k points)."""
    if k < 1 or Q < 1:
        raise ValueError("need k >= 1 and Q >= 1")
    required = Q**k
    if required > budget:
        raise BudgetExceeded(f"tensor grid Q^k = {Q}^{k}", required, budget)
    rule = gauss_hermite_rule(Q)
    axes = np.meshgrid(*([rule.nodes] * k), indexing="ij")
    pts = np.stack([a.reshape(-1) for a in axes], axis=1)
    lw_axes = np.meshgrid(*([rule.log_weights] * k), indexing="ij")
    logw = np.sum([a.reshape(-1) for a in lw_axes], axis=0)
    return Support(pts, np.asarray(logw, dtype=float), "quadrature", Q=Q,
                   axis_rules=(rule,) * k)


def product_support(a: Support, b: Support, budget: int = DEFAULT_POINT_BUDGET) -> Support:
    """Tensor product of two supports (the joint law of independent blocks)."""
    required = a.size * b.size
    if required > budget:
        raise BudgetExceeded("product support", required, budget)
    ia, ib = np.meshgrid(np.arange(a.size), np.arange(b.size), indexing="ij")
    ia, ib = ia.reshape(-1), ib.reshape(-1)
    pts = np.concatenate([a.points[ia], b.points[ib]], axis=1)
    logw = a.log_weights[ia] + b.log_weights[ib]
    if a.kind == b.kind == "quadrature" and a.Q == b.Q:
        return Support(pts, logw, "quadrature", Q=a.Q, axis_rules=a.axis_rules + b.axis_rules)
    return Support(pts, logw, "custom")


def gaussian_line_support(half_width: float, spacing: float, panel_order: int = 16,
                          budget: int = DEFAULT_POINT_BUDGET) -> Support:
    """Fine 1-d support: composite Gauss-Legendre on [-L, L] times the normal density.

    Unlike a Gauss-Hermite rule, node density stays uniform far into the
    tails, which high-degree univariate L1 problems need.  Panels have
    width ``spacing * panel_order`` (rounded so they tile [-L, L]); weights
    are renormalized to sum to one.
    """
    if half_width <= 0 or spacing <= 0:
        raise ValueError("half_width and spacing must be positive")
    panels = max(1, int(math.ceil(2.0 * half_width / (spacing * panel_order))))
    if panels * panel_order > budget:
        raise BudgetExceeded("composite line support", panels * panel_order, budget)
    g, gw = np.polynomial.legendre.leggauss(panel_order)
    edges = np.linspace(-half_width, half_width, panels + 1)
    h = edges[1] - edges[0]
    x = (edges[:-1, None] + 0.5 * h * (g[None, :] + 1.0)).reshape(-1)
    x = 0.5 * (x - x[::-1])  # exact mirror symmetry
    logw = np.log(np.tile(0.5 * h * gw, panels)) - 0.5 * x * x - 0.5 * math.log(2 * math.pi)
    logw -= logsumexp(logw)
    return Support(x[:, None], logw, "composite", half_width=float(half_width),
                   spacing=float(h / panel_order))


def monte_carlo_support(k: int, N: int, seed: int = 0) -> Support:
    """N i.i.d. standard normal points in R^k with weights 1/N."""
    if k < 1 or N < 1:
        raise ValueError("need k >= 1 and N >= 1")
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((N, k))
    return Support(pts, np.full(N, -math.log(N)), "monte_carlo", seed=seed)


# ---------------------------------------------------------------------------
# functions on a support


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values of a function on the points of a :class:`Support`.

    ``poly_degree`` is set when the values are known to come from a
    polynomial of that total degree; it lets coefficient extraction certify
    exactness.
    """

    support: Support
    values: np.ndarray
    poly_degree: Optional[int] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.shape[0] != self.support.size:
            raise DimensionMismatch("values and support differ in length")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dimension(self) -> int:
        return self.support.dimension

    @property
    def points(self) -> np.ndarray:
        return self.support.points

    @property
    def weights(self) -> np.ndarray:
        return self.support.weights

    def with_values(self, values, poly_degree: Optional[int] = None) -> "GridFunction":
        return GridFunction(self.support, values, poly_degree)

    def is_boolean(self) -> bool:
        return bool(np.all(np.abs(self.values) == 1.0))

    def mean(self) -> float:
        return math.fsum(self.weights * self.values)

    def sup_norm(self) -> float:
        return lq_norm(self, math.inf)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _check_same(self.support, other.support)
        return GridFunction(self.support, self.values - other.values)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _check_same(self.support, other.support)
        return GridFunction(self.support, self.values + other.values)


def _check_same(a: Support, b: Support):
    if not a.same_as(b):
        raise SupportMismatch("functions live on different supports")


def inner_product(f: GridFunction, g: GridFunction) -> float:
    """<f, g> = sum_s w_s f_s g_s (exactly rounded summation)."""
    _check_same(f.support, g.support)
    return math.fsum(f.weights * f.values * g.values)


def lq_norm(f: GridFunction, q: float) -> float:
    """L^q(gamma) norm; ``q = inf`` gives the max over positive-weight points."""
    if q < 1:
        raise ValueError(f"L^q norm needs q >= 1, got {q}")
    a = np.abs(f.values)
    if math.isinf(q):
        live = f.weights > 0
        return float(a[live].max()) if live.any() else 0.0
    if q == 1:
        return math.fsum(f.weights * a)
    if q == 2:
        return math.sqrt(math.fsum(f.weights * a * a))
    return math.fsum(f.weights * a**q) ** (1.0 / q)


# ---------------------------------------------------------------------------
# multi-indices and expansions


def _compositions(total: int, parts: int, step: int):
    """Tuples of ``parts`` multiples of ``step`` summing to ``total``, lex-descending."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -step):
        for rest in _compositions(total - first, parts - 1, step):
            yield (first,) + rest


def enumerate_multi_indices(k: int, d: int, parity: str = "all", include_zero: bool = True,
                            max_support: Optional[int] = None) -> list:
    """All J in N^k with |J| <= d, graded by total degree then lex-descending.

    ``parity="even_only"`` keeps indices whose entries are all even.
    ``max_support`` drops indices with more than that many nonzero entries.
    """
    if k < 1 or d < 0:
        raise ValueError("need k >= 1 and d >= 0")
    if parity not in ("all", "even_only"):
        raise ValueError(f"unknown parity {parity!r}")
    step = 2 if parity == "even_only" else 1
    out = []
    for t in range(0, d + 1, step):
        if t == 0 and not include_zero:
            continue
        for comp in _compositions(t, k, step):
            if max_support is not None and sum(1 for e in comp if e) > max_support:
                continue
            out.append(MultiIndex(comp))
    return out


@dataclass
class HermiteExpansion:
    """Sparse coefficients in the orthonormal basis Hbar_J."""

    dimension: int
    coeffs: dict = field(default_factory=dict)
    exact: bool = True

    def __post_init__(self):
        fixed = {}
        for J, c in self.coeffs.items():
            J = MultiIndex(J)
            if len(J) != self.dimension:
                raise DimensionMismatch(f"key {J} has wrong length")
            fixed[J] = float(c)
        self.coeffs = fixed

    def __len__(self):
        return len(self.coeffs)

    def __getitem__(self, J) -> float:
        return self.coeffs.get(MultiIndex(J), 0.0)

    @property
    def max_degree(self) -> int:
        return max((J.total_degree for J in self.coeffs), default=0)

    def norm(self) -> float:
        """L2 norm of the represented polynomial (Parseval)."""
        return math.sqrt(math.fsum(c * c for c in self.coeffs.values()))

    def evaluate(self, points) -> np.ndarray:
        keys = list(self.coeffs)
        if not keys:
            pts = np.asarray(points, dtype=float)
            return np.zeros(pts.shape[0] if pts.ndim > 1 else pts.size)
        B = basis_matrix(points, keys)
        return B @ np.array([self.coeffs[J] for J in keys])

    def on(self, support: Support) -> GridFunction:
        return GridFunction(support, self.evaluate(support.points), self.max_degree)


def expansion_from_grid(f: GridFunction, d: int, drop_tol: float = 1e-13) -> HermiteExpansion:
    """Coefficients <f, Hbar_J> for all |J| <= d.

    The result is flagged exact only for a quadrature support integrating
    the products f * Hbar_J exactly, i.e. when f is a known polynomial with
    ``2Q - 1 >= d + deg f``.  Coefficients below ``drop_tol`` in magnitude
    are omitted.
    """
    indices = enumerate_multi_indices(f.dimension, d)
    B = f.support.basis(indices)
    c = B.T @ (f.weights * f.values)
    ed = f.support.exact_degree
    exact = ed is not None and f.poly_degree is not None and ed >= d + f.poly_degree
    coeffs = {J: float(v) for J, v in zip(indices, c) if abs(v) > drop_tol}
    return HermiteExpansion(f.dimension, coeffs, exact)

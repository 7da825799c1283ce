"""The balanced cube Cube_k and the Hermite spectrum of the interval indicator.

Cube_k(y) = +1 when max_i |y_i| <= theta_k and -1 otherwise, with theta_k
chosen so the Gaussian mean is zero, i.e. (2 Phi(theta_k) - 1)^k = 1/2.
Writing f_theta for the 0/1 indicator of [-theta, theta], Cube_k equals
2 prod_i f_theta(y_i) - 1, so its coefficients are products of interval
coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, log_ndtr

from .errors import DimensionMismatch
from .hermite import GridFunction, MultiIndex, Support, normalized_table

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _log_mass_inside(theta: float) -> float:
    """log(2 Phi(theta) - 1), accurate for large theta."""
    if theta <= 0:
        return -math.inf
    if theta < 1.0:
        return math.log(math.erf(theta / math.sqrt(2.0)))
    return math.log1p(-2.0 * math.exp(float(log_ndtr(-theta))))


def theta_k(k: float, tol: float = 1e-12) -> float:
    """Half-width making the cube [-theta, theta]^k have Gaussian mass 1/2.

    Bisection on [0, 10 + sqrt(2 ln k)] until the bracket is narrower than
    ``tol``; the test is done on k * log(2 Phi(theta) - 1) to keep full
    precision when k is large.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    target = -math.log(2.0)
    lo, hi = 0.0, 10.0 + math.sqrt(2.0 * math.log(max(k, 1.0)))
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if k * _log_mass_inside(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mills_bounds(k: float) -> tuple:
    """Sandwich (sqrt(2 ln k - ln(2 ln k)), sqrt(2 ln k)) for theta_k."""
    if k < 2:
        raise ValueError("Mills bounds need k >= 2")
    L = 2.0 * math.log(k)
    return math.sqrt(L - math.log(L)), math.sqrt(L)


@dataclass(frozen=True)
class CubeSpec:
    k: int
    theta: float

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.theta > 0:
            raise ValueError("theta must be positive")

    @classmethod
    def balanced(cls, k: int, tol: float = 1e-12) -> "CubeSpec":
        return cls(int(k), theta_k(k, tol))

    def mean(self) -> float:
        """Exact Gaussian mean of Cube_k: 2 (2 Phi(theta) - 1)^k - 1."""
        return 2.0 * math.exp(self.k * _log_mass_inside(self.theta)) - 1.0


# ---------------------------------------------------------------------------
# interval and cube coefficients


def interval_coeffs(theta: float, jmax: int) -> np.ndarray:
    """All coefficients <f_theta, Hbar_j> for j = 0..jmax.

    Uses d/dx [Hbar_{j-1} phi] = -sqrt(j) Hbar_j phi, so the even
    coefficients are -2 Hbar_{j-1}(theta) phi(theta) / sqrt(j).  The table
    Hbar_m(theta) phi(theta) is built by the normalized recurrence starting
    from phi(theta), which never overflows.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    out = np.zeros(jmax + 1)
    out[0] = math.erf(theta / math.sqrt(2.0))
    if jmax >= 2:
        tab = normalized_table(theta, jmax - 1, -0.5 * theta * theta - LOG_SQRT_2PI)
        j = np.arange(2, jmax + 1, 2)
        out[j] = -2.0 * tab[j - 1] / np.sqrt(j)
    return out


def interval_coeff(theta: float, j: int) -> float:
    """Coefficient of the 0/1 interval indicator on Hbar_j (zero for odd j)."""
    if j < 0:
        raise ValueError("j must be >= 0")
    return float(interval_coeffs(theta, j)[j])


def interval_coeff_bound(theta: float, j: int) -> float:
    """Upper bound (1 + theta sqrt(e/j))^(2(j-1)) exp(-theta^2) on the squared coefficient."""
    if j < 2 or j % 2:
        raise ValueError("bound is stated for even j >= 2")
    log_b = 2.0 * (j - 1) * math.log1p(theta * math.sqrt(math.e / j)) - theta * theta
    return float(np.exp(log_b))


def cube_coeff(spec: CubeSpec, J) -> float:
    """Coefficient of Cube_k on Hbar_J: 0 at J = 0, else 2 prod_i interval_coeff."""
    J = MultiIndex(J)
    if len(J) != spec.k:
        raise DimensionMismatch(f"index has length {len(J)}, cube has k={spec.k}")
    if J.total_degree == 0:
        return 0.0
    if any(e % 2 for e in J):
        return 0.0
    c = interval_coeffs(spec.theta, max(J))
    return float(2.0 * np.prod(c[list(J)]))


@dataclass(frozen=True)
class WeightReport:
    k: int
    d: int
    gamma: float
    bound: float
    term_count: int

    @property
    def ratio(self) -> float:
        if self.bound > 0:
            return self.gamma / self.bound
        return math.inf if self.gamma > 0 else 0.0

    CSV_FIELDS = ("k", "d", "gamma", "bound", "ratio", "term_count")

    def csv_row(self) -> dict:
        return {"k": self.k, "d": self.d, "gamma": self.gamma, "bound": self.bound,
                "ratio": self.ratio, "term_count": self.term_count}


def _truncated_power(a: np.ndarray, k: int) -> np.ndarray:
    """Coefficients of A(z)^k up to the length of ``a`` (binary exponentiation)."""
    n = len(a)
    result = np.zeros(n)
    result[0] = 1.0
    base = a.copy()
    while k:
        if k & 1:
            result = np.convolve(result, base)[:n]
        k >>= 1
        if k:
            base = np.convolve(base, base)[:n]
    return result


def low_degree_bound(k: float, d: int) -> float:
    """The comparison value 20 d (3 ln k)^d / k."""
    if k < 2:
        return 0.0
    return 20.0 * d * math.exp(d * math.log(3.0 * math.log(k))) / k


def cube_low_degree_weight(spec: CubeSpec, d: int) -> WeightReport:
    """gamma = sum over 1 <= |J| <= d of cube_coeff(J)^2, without enumeration.

    Only indices with all-even entries contribute.  With a_t the squared
    interval coefficient at degree 2t, the total squared mass per half-degree
    is the coefficient list of (sum_t a_t z^t)^k; gamma is 4 times the sum of
    entries 1..floor(d/2).
    """
    if d < 0:
        raise ValueError("d must be >= 0")
    D = d // 2
    c = interval_coeffs(spec.theta, 2 * D)
    a = c[0::2] ** 2
    power = _truncated_power(a, spec.k)
    gamma = 4.0 * math.fsum(power[1:D + 1])
    terms = math.comb(spec.k + D, D) - 1
    return WeightReport(spec.k, d, gamma, low_degree_bound(spec.k, d), terms)


# ---------------------------------------------------------------------------
# pointwise evaluation


def cube_eval(spec: CubeSpec, x) -> np.ndarray:
    """+1 where max_i |x_i| <= theta (boundary counts as inside), -1 elsewhere.

    ``x`` may be a single k-vector or an (N, k) array.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.shape[1] != spec.k:
        raise DimensionMismatch(f"points have dimension {pts.shape[1]}, cube has k={spec.k}")
    val = np.where(np.max(np.abs(pts), axis=1) <= spec.theta, 1.0, -1.0)
    return float(val[0]) if single else val


def cube_function(spec: CubeSpec, support: Support) -> GridFunction:
    return support.evaluate(lambda p: cube_eval(spec, p))


def interval_pm_function(theta: float, support: Support) -> GridFunction:
    """The +-1 interval function 2 f_theta - 1 on a 1-d support."""
    if support.dimension != 1:
        raise DimensionMismatch("interval function lives in one dimension")
    return support.evaluate(lambda p: np.where(np.abs(p[:, 0]) <= theta, 1.0, -1.0))


def sign_function(support: Support) -> GridFunction:
    """sign(x_1); zero exactly at the origin."""
    return support.evaluate(lambda p: np.sign(p[:, 0]))


def interval_pm_mean(theta: float) -> float:
    return 2.0 * float(erf(theta / math.sqrt(2.0))) - 1.0

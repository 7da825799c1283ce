"""Gaussian noise sensitivity: Monte Carlo, closed forms, and the degree bound comparison.

GNS_rho(f) = P[f(x) != f((1 - rho) x + sqrt(2 rho - rho^2) g)] for independent
standard normal x, g.  The pair is standard normal with correlation 1 - rho.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import erf, ndtr

from .cube import CubeSpec, cube_eval

CHUNK = 1 << 17


@dataclass(frozen=True)
class GnsEstimate:
    rho: float
    value: float
    stderr: float
    method: str
    seed: Optional[int] = None
    N: Optional[int] = None
    converged: bool = True

    def agrees_with(self, exact: float, sigmas: float = 3.0) -> bool:
        return abs(self.value - exact) <= sigmas * self.stderr


def _check_rho(rho: float):
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")


def _shard_count(f: Callable, k: int, rho: float, n: int, seed: int, shard: int) -> int:
    rng = np.random.default_rng(np.random.SeedSequence([seed, shard]))
    a, b = 1.0 - rho, math.sqrt(2.0 * rho - rho * rho)
    count = 0
    left = n
    while left > 0:
        m = min(CHUNK, left)
        x = rng.standard_normal((m, k))
        g = rng.standard_normal((m, k))
        y = a * x + b * g
        count += int(np.count_nonzero(np.asarray(f(x)) != np.asarray(f(y))))
        left -= m
    return count


def gns_estimate(f: Callable, k: int, rho: float, N: int, seed: int = 0, shards: int = 8,
                 workers: int = 1) -> GnsEstimate:
    """Disagreement frequency of f over N correlated pairs.

    ``f`` maps an (M, k) array to M values.  Samples are split into
    ``shards`` blocks with seeds derived from (seed, shard index), so the
    result is reproducible for a fixed shard count whatever ``workers`` is.
    """
    _check_rho(rho)
    if N < 1:
        raise ValueError("N must be >= 1")
    shards = max(1, min(shards, N))
    sizes = [N // shards + (1 if s < N % shards else 0) for s in range(shards)]
    jobs = [(f, k, rho, sizes[s], seed, s) for s in range(shards)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(lambda a: _shard_count(*a), jobs))
    else:
        counts = [_shard_count(*a) for a in jobs]
    v = sum(counts) / N
    return GnsEstimate(rho, v, math.sqrt(v * (1 - v) / N), "monte_carlo", seed, N)


def sign_eval(x) -> np.ndarray:
    """sign of the first coordinate, with +1 at zero (a measure-zero choice)."""
    x = np.asarray(x, dtype=float)
    return np.where(x[:, 0] >= 0, 1.0, -1.0)


def gns_sign_analytic(rho: float) -> float:
    """arccos(1 - rho) / pi (Sheppard)."""
    _check_rho(rho)
    return math.acos(1.0 - rho) / math.pi


def _both_inside(theta: float, rho: float):
    """P[|x| <= theta and |y| <= theta] for one coordinate of the correlated pair.

    Conditioning on x, y is normal with mean (1 - rho) x and standard
    deviation s = sqrt(2 rho - rho^2), so the inner probability is a
    difference of normal CDFs and only a 1-d integral remains.
    """
    r = 1.0 - rho
    s = math.sqrt(2.0 * rho - rho * rho)

    def integrand(x):
        return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi) * (
            ndtr((theta - r * x) / s) - ndtr((-theta - r * x) / s))

    val, err, info = integrate.quad(integrand, -theta, theta, epsabs=1e-13, epsrel=1e-12,
                                    limit=200, full_output=True)[:3]
    converged = err < 1e-9 and "message" not in info
    return val, err, converged


def gns_cube_semianalytic(spec: CubeSpec, rho: float) -> GnsEstimate:
    """GNS of Cube_k from the product structure.

    With p = P[|x_1| <= theta] and q = P[both coordinates inside], the
    events {x in cube} and {y in cube} have probabilities p^k each and
    joint probability q^k, so P[disagree] = 2 (p^k - q^k).
    """
    _check_rho(rho)
    if rho == 0:
        return GnsEstimate(0.0, 0.0, 0.0, "semi_analytic_product")
    p = float(erf(spec.theta / math.sqrt(2.0)))
    q, err, ok = _both_inside(spec.theta, rho)
    value = 2.0 * (math.exp(spec.k * math.log(p)) - math.exp(spec.k * math.log(q)))
    bound = 2.0 * spec.k * q ** (spec.k - 1) * err if spec.k > 1 else 2.0 * err
    return GnsEstimate(rho, value, bound, "semi_analytic_product", converged=ok)


def gns_cube_monte_carlo(spec: CubeSpec, rho: float, N: int, seed: int = 0, shards: int = 8) -> GnsEstimate:
    return gns_estimate(lambda x: cube_eval(spec, x), spec.k, rho, N, seed, shards)


def noise_rate_for_degree(d: int) -> float:
    """rho = (ln d / d)^2."""
    if d < 2:
        raise ValueError("d must be >= 2")
    return (math.log(d) / d) ** 2


def gns_l1_bound(f, d: int, N: int = 10**6, seed: int = 0, k: Optional[int] = None):
    """(GNS_rho(f) / ln d, GNS_rho(f)) at rho = (ln d / d)^2.

    ``f`` is "sign" (closed form), a CubeSpec (semi-analytic), or a callable
    on (M, k) arrays evaluated by Monte Carlo (``k`` required).  The
    hidden constant of the lower bound is not included.
    """
    rho = noise_rate_for_degree(d)
    if isinstance(f, str):
        if f != "sign":
            raise ValueError(f"unknown named function {f!r}")
        value = gns_sign_analytic(rho)
    elif isinstance(f, CubeSpec):
        value = gns_cube_semianalytic(f, rho).value
    else:
        if k is None:
            raise ValueError("k is needed for a callable f")
        value = gns_estimate(f, k, rho, N, seed).value
    return value / math.log(d), value


def part2_constant(e_star: float, gns_value: float, d: int, eps: float) -> float:
    """Smallest C >= 0 with e_star >= gns_value / 4 - C d sqrt(eps)."""
    return max(0.0, (gns_value / 4.0 - e_star) / (d * math.sqrt(eps)))


def resilience_lower_bound(k: float) -> float:
    """1 - 2 / k^0.49, the L1 error lower bound implied by approximate resilience."""
    return 1.0 - 2.0 / k**0.49


COMPARISON_FIELDS = ("k", "d", "rho", "gns_value", "gns_over_logd", "lp_e_star",
                     "resilience_alpha_star", "resilience_lower_bound")


def comparison_rows(ks, ds, lp_values: Optional[dict] = None) -> list:
    """Rows of the GNS versus resilience comparison for balanced cubes.

    ``lp_values`` maps (k, d) to (e_star, alpha_star) where an LP was run.
    """
    lp_values = lp_values or {}
    rows = []
    for k in ks:
        spec = CubeSpec.balanced(k)
        for d in ds:
            bound, value = gns_l1_bound(spec, d)
            e, a = lp_values.get((k, d), (None, None))
            rows.append({"k": k, "d": d, "rho": noise_rate_for_degree(d), "gns_value": value,
                         "gns_over_logd": bound, "lp_e_star": e, "resilience_alpha_star": a,
                         "resilience_lower_bound": resilience_lower_bound(k)})
    return rows

"""Iterative construction of approximately resilient witnesses.

A bounded g is d-resilient when it is orthogonal to every polynomial of
degree <= d; f is alpha-approximately d-resilient when such a g with
|g| <= 1 lies within L1 distance alpha of f.  The construction repeatedly
removes the low-degree part of the current function, but only where that
low-degree part is small (|Low_d f| <= tau); elsewhere the function is set
to zero.  Thresholds tau_i shrink geometrically, so the low-degree weight
decays like 4^(-i d) while the sup norm grows by at most sum tau_i.

All projections are orthogonal projections in the inner product of the
support measure (QR of the weighted basis), so they are idempotent on any
support.  On an exact quadrature grid they coincide with truncating the
Hermite expansion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NotBoolean, ReslabError, SupportMismatch
from .hermite import GridFunction, Support, basis_matrix, enumerate_multi_indices, lq_norm

LN4 = math.log(4.0)
MAX_CONSTRUCTION_DIM = 8


class AlreadyResilient(ReslabError):
    """The low-degree part is already zero; no threshold schedule is needed."""


class Projector:
    """Orthogonal projection onto polynomials of total degree <= d on a support."""

    def __init__(self, support: Support, d: int):
        if d < 0:
            raise ValueError("d must be >= 0")
        self.support = support
        self.d = d
        self.indices = enumerate_multi_indices(support.dimension, d)
        half = 0.5 * support.log_weights
        U = basis_matrix(support.points, self.indices, half)
        _, R = np.linalg.qr(U)
        # polynomial values of the orthonormalized basis; rows not scaled by sqrt(w)
        self.P = np.linalg.solve(R.T, basis_matrix(support.points, self.indices).T).T
        self.w = support.weights
        self.exact = support.exact_degree is not None and support.exact_degree >= 2 * d

    def coefficients(self, values) -> np.ndarray:
        """Coordinates of Low_d in the orthonormalized basis (their norm is ||Low_d||_2)."""
        return self.P.T @ (self.w * values)

    def low(self, values) -> np.ndarray:
        return self.P @ self.coefficients(values)

    def low_norm(self, values) -> float:
        return float(np.linalg.norm(self.coefficients(values)))

    def hermite_coefficients(self, values) -> np.ndarray:
        """<values, Hbar_J> for every |J| <= d, by the support's quadrature."""
        B = basis_matrix(self.support.points, self.indices)
        return B.T @ (self.w * values)


def _check_support(f: GridFunction, proj: Optional[Projector]):
    if proj is not None and not proj.support.same_as(f.support):
        raise SupportMismatch("projector built for a different support")


def low_proj(f: GridFunction, d: int, proj: Optional[Projector] = None) -> GridFunction:
    """Sum over |J| <= d of the coefficient of f times Hbar_J, on f's support."""
    _check_support(f, proj)
    proj = proj or Projector(f.support, d)
    return GridFunction(f.support, proj.low(f.values), d)


def high_proj(f: GridFunction, d: int, proj: Optional[Projector] = None) -> GridFunction:
    """f minus its low-degree part."""
    _check_support(f, proj)
    proj = proj or Projector(f.support, d)
    return GridFunction(f.support, f.values - proj.low(f.values))


class SupNormViolation(ReslabError):
    pass


def trunc_high(f: GridFunction, d: int, tau: float, proj: Optional[Projector] = None) -> GridFunction:
    """High_d[f] where |Low_d[f]| <= tau, zero elsewhere.

    The bound ||result||_inf <= ||f||_inf + tau is checked on every call.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    _check_support(f, proj)
    proj = proj or Projector(f.support, d)
    low = proj.low(f.values)
    out = np.where(np.abs(low) <= tau, f.values - low, 0.0)
    sup_in, sup_out = float(np.max(np.abs(f.values))), float(np.max(np.abs(out)))
    if sup_out > sup_in + tau + 1e-12 * max(1.0, sup_in):
        raise SupNormViolation(f"truncation sup norm {sup_out} exceeds {sup_in} + {tau}")
    return GridFunction(f.support, out)


# ---------------------------------------------------------------------------
# threshold schedule and predicted alpha


def log_tau_schedule(i: int, d: int, k: float, low0: float, prev2: float) -> float:
    """Natural log of tau_i.

    tau_i = low0 / 4^((i-1) d) * (4e ln(3k) + (8e/d) ln(4^(i d) prev2 / low0))^(d/2),
    with prev2 = ||f_(i-1)||_2.  ``k`` may be any real >= 2.
    """
    if i < 1:
        raise ValueError("i must be >= 1")
    if d < 2 or k < 2:
        raise ValueError("the schedule needs d >= 2 and k >= 2")
    if low0 == 0:
        raise AlreadyResilient("low-degree norm is zero")
    if low0 < 0 or prev2 <= 0:
        raise ValueError("norms must be positive")
    inner = 4.0 * math.e * math.log(3.0 * k) + (8.0 * math.e / d) * (
        i * d * LN4 + math.log(prev2) - math.log(low0))
    if inner <= 0:
        raise ValueError("schedule base is not positive; prev2 is far below low0")
    return math.log(low0) - (i - 1) * d * LN4 + 0.5 * d * math.log(inner)


def tau_schedule(i: int, d: int, k: float, low0: float, prev2: float) -> float:
    return math.exp(log_tau_schedule(i, d, k, low0, prev2))


def log_predicted_alpha(gamma: float, k: float, d: float) -> float:
    """0.498 ln(gamma) + (d/2) ln(72 ln k), uncapped; -inf when gamma = 0."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if gamma == 0:
        return -math.inf
    return 0.498 * math.log(gamma) + 0.5 * d * math.log(72.0 * math.log(k))


def predicted_alpha(gamma: float, k: float, d: int) -> float:
    """gamma^0.498 (72 ln k)^(d/2), capped at 1 (every |f| <= 1 is 1-resilient)."""
    if k < 2 or d < 2:
        raise ValueError("predicted alpha needs k >= 2 and d >= 2")
    la = log_predicted_alpha(gamma, k, d)
    return 1.0 if la >= 0 else math.exp(la)


@dataclass(frozen=True)
class InstantiationReport:
    """Asymptotic parameter choice d = ln k / (125 ln ln k), evaluated in log space."""

    log2_k: float
    d_real: float
    d_int: int
    log_gamma_bound: float
    log_alpha_from_bound: float
    log_gamma_exact: float
    log_alpha_exact: float
    log_target: float

    @property
    def bound_chain_holds(self) -> bool:
        return self.log_alpha_from_bound <= self.log_target

    @property
    def exact_chain_holds(self) -> bool:
        return self.log_alpha_exact <= self.log_target


def instantiation_report(log2_k: float, gamma_exact: Optional[float] = None) -> InstantiationReport:
    """Compare the predicted alpha with k^-0.49 at d = ln k / (125 ln ln k).

    Two versions: with the closed-form weight bound 20 d (3 ln k)^d / k at
    the real-valued d, and with ``gamma_exact`` (the exact cube weight at
    the integer degree floor(d), supplied by the caller).
    """
    ln_k = log2_k * math.log(2.0)
    d = ln_k / (125.0 * math.log(ln_k))
    lg_bound = math.log(20.0 * d) + d * math.log(3.0 * ln_k) - ln_k
    la_bound = 0.498 * lg_bound + 0.5 * d * math.log(72.0 * ln_k)
    d_int = int(math.floor(d))
    if gamma_exact is None or gamma_exact == 0:
        lg_exact, la_exact = -math.inf, -math.inf
    else:
        lg_exact = math.log(gamma_exact)
        la_exact = 0.498 * lg_exact + 0.5 * d_int * math.log(72.0 * ln_k)
    return InstantiationReport(log2_k, d, d_int, lg_bound, la_bound, lg_exact, la_exact,
                               -0.49 * ln_k)


# ---------------------------------------------------------------------------
# witness construction


@dataclass(frozen=True)
class IterateState:
    i: int
    low_norm: float
    sup_norm: float
    tau: float
    l1_drift: float
    l2_norm: float

    def as_dict(self) -> dict:
        return {"i": self.i, "tau": self.tau, "low_norm": self.low_norm,
                "sup_norm": self.sup_norm, "l1_drift": self.l1_drift, "l2_norm": self.l2_norm}


@dataclass(frozen=True)
class ClaimFlag:
    """A bound from the proof that the run did not meet (soft check)."""

    i: int
    claim: str
    value: float
    bound: float

    @property
    def excess(self) -> float:
        return self.value - self.bound


@dataclass
class WitnessReport:
    k: int
    d: int
    alpha_predicted: float
    alpha_achieved: float
    witness: GridFunction
    max_low_coeff: float
    sup_norm_g: float
    iterations: list
    normalized: bool
    converged: bool
    flags: list = field(default_factory=list)
    hard_failures: list = field(default_factory=list)

    def flagged(self, claim: str) -> list:
        return [fl for fl in self.flags if fl.claim == claim]

    def to_json(self) -> str:
        doc = {
            "k": self.k, "d": self.d, "alpha_predicted": self.alpha_predicted,
            "alpha_achieved": self.alpha_achieved, "sup_norm_g": self.sup_norm_g,
            "max_low_coeff": self.max_low_coeff, "normalized": self.normalized,
            "converged": self.converged,
            "iterations": [s.as_dict() for s in self.iterations],
            "flags": [{"i": fl.i, "claim": fl.claim, "value": fl.value, "bound": fl.bound}
                      for fl in self.flags],
        }
        return json.dumps(doc, sort_keys=True)


def _l1(values, w) -> float:
    return math.fsum(w * np.abs(values))


def build_witness(f: GridFunction, d: int, stop_tol: float = 1e-8, max_iter: int = 60,
                  k: Optional[float] = None) -> WitnessReport:
    """Run the truncation iteration from a +-1 valued f until Low_d vanishes.

    ``k`` (default: the dimension) enters the threshold schedule and the
    predicted alpha; the proof's constants need k >= 2.  Claim checks are
    recorded as flags and never abort.  Two checks are exact consequences
    of the definitions (the truncation sup-norm bound, and tau_1 >= low0)
    and are kept separately in ``hard_failures``.
    """
    if not f.is_boolean():
        raise NotBoolean("build_witness needs a +-1 valued function")
    if d < 2:
        raise ValueError("d must be >= 2")
    dim = f.dimension
    if dim > MAX_CONSTRUCTION_DIM:
        raise ValueError(f"construction not offered for k > {MAX_CONSTRUCTION_DIM}; "
                         "use predicted_alpha")
    k_eff = float(k if k is not None else max(dim, 2))
    proj = Projector(f.support, d)
    w = f.weights
    low0 = proj.low_norm(f.values)
    gamma = low0 * low0
    alpha = predicted_alpha(gamma, k_eff, d) if gamma > 0 else 0.0
    states, flags, hard = [], [], []
    cur = f.values.copy()
    converged = low0 <= stop_tol
    prev_tau = None
    prev_sup = 1.0
    i = 0
    while not converged and i < max_iter:
        i += 1
        prev_l2 = math.sqrt(math.fsum(w * cur * cur))
        tau = tau_schedule(i, d, k_eff, low0, prev_l2)
        if i == 1 and tau < low0:
            hard.append(ClaimFlag(i, "tau1_at_least_low0", tau, low0))
        if prev_tau is not None and prev_sup <= 4.0 / 3.0 and tau > 0.5 * prev_tau * (1 + 1e-12):
            hard.append(ClaimFlag(i, "tau_halving", tau / prev_tau, 0.5))
        rho = low0 / 4.0 ** ((i - 1) * d)
        low_prev = proj.low_norm(cur)
        try:
            nxt = trunc_high(GridFunction(f.support, cur), d, tau, proj).values
        except SupNormViolation as exc:
            hard.append(ClaimFlag(i, "sup_norm_contract", math.nan, math.nan))
            raise exc
        low_norm = proj.low_norm(nxt)
        drift = _l1(nxt - cur, w)
        sup = float(np.max(np.abs(nxt)))
        states.append(IterateState(i, low_norm, sup, tau, drift,
                                   math.sqrt(math.fsum(w * nxt * nxt))))
        # per-step contracts for a = 4^d and rho = low0 / 4^((i-1) d)
        if low_prev <= rho * (1 + 1e-9):
            if low_norm > rho / 4.0 ** d * (1 + 1e-9) + 1e-15:
                flags.append(ClaimFlag(i, "large_tau_low", low_norm, rho / 4.0 ** d))
            if drift > 2 * rho * (1 + 1e-9):
                flags.append(ClaimFlag(i, "large_tau_l1", drift, 2 * rho))
        else:
            flags.append(ClaimFlag(i, "large_tau_precondition", low_prev, rho))
        # claims of the proof, against the predicted alpha
        if tau > alpha / (3 * 2 ** i):
            flags.append(ClaimFlag(i, "claim1_tau", tau, alpha / (3 * 2 ** i)))
        if sup > 1 + alpha / 3:
            flags.append(ClaimFlag(i, "claim2_sup", sup, 1 + alpha / 3))
        if low_norm > low0 / 4.0 ** (i * d) * (1 + 1e-9) + 1e-15:
            flags.append(ClaimFlag(i, "claim3_low", low_norm, low0 / 4.0 ** (i * d)))
        if drift > alpha / (3 * 4.0 ** ((i - 1) * d)):
            flags.append(ClaimFlag(i, "claim3_l1", drift, alpha / (3 * 4.0 ** ((i - 1) * d))))
        prev_tau, prev_sup = tau, float(np.max(np.abs(cur)))
        cur = nxt
        converged = low_norm <= stop_tol
    normalized = False
    if i == 0:
        g = f.values.copy()
    else:
        g = cur
        sup = float(np.max(np.abs(g)))
        if sup > 1.0:
            g = g / sup
            normalized = True
    gfun = GridFunction(f.support, g)
    sup_g, max_low, l1 = verify_witness(f, gfun, d, proj)
    return WitnessReport(dim, d, alpha, l1, gfun, max_low, sup_g, states, normalized,
                         converged, flags, hard)


def verify_witness(f: GridFunction, g: GridFunction, d: int, proj: Optional[Projector] = None):
    """(sup norm of g, max over |J| <= d of |<g, Hbar_J>|, ||f - g||_1)."""
    if not f.support.same_as(g.support):
        raise SupportMismatch("f and g live on different supports")
    proj = proj or Projector(f.support, d)
    coeffs = proj.hermite_coefficients(g.values)
    max_low = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    return lq_norm(g, math.inf), max_low, _l1(f.values - g.values, f.weights)


@dataclass(frozen=True)
class VerifyTolerances:
    sup_norm: float = 1.0 + 1e-6
    low_coeff: float = 1e-6
    alpha_slack: float = 1e-3


def witness_passes(f: GridFunction, g: GridFunction, d: int, alpha: Optional[float] = None,
                   tol: VerifyTolerances = VerifyTolerances()) -> bool:
    sup, low, l1 = verify_witness(f, g, d)
    ok = sup <= tol.sup_norm and low <= tol.low_coeff
    if alpha is not None:
        ok = ok and l1 <= alpha + tol.alpha_slack
    return ok

"""Agnostic learning of embedded cubes by L1 polynomial regression.

A concept is F(x) = Cube_k(P x) with P a k x n matrix with orthonormal
rows.  The learner fits a degree-d polynomial in all n ambient variables
by least absolute deviations, then thresholds it at the level that
minimizes training error.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .cube import CubeSpec, cube_eval
from .errors import BudgetExceeded, InsufficientSamples
from .hermite import MultiIndex, enumerate_multi_indices, normalized_table

SNAPSHOT_MAGIC = b"RLAB"
SNAPSHOT_VERSION = 1
HEADER = struct.Struct("<4sHHQ")
DEFAULT_COLUMN_BUDGET = 5000


# ---------------------------------------------------------------------------
# concepts and data


@dataclass(frozen=True, eq=False)
class EmbeddedConcept:
    n: int
    k: int
    P: np.ndarray
    spec: CubeSpec

    def __post_init__(self):
        if self.P.shape != (self.k, self.n):
            raise ValueError(f"P has shape {self.P.shape}, expected {(self.k, self.n)}")
        if not np.allclose(self.P @ self.P.T, np.eye(self.k), atol=1e-12, rtol=0):
            raise ValueError("rows of P are not orthonormal")

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return cube_eval(self.spec, X @ self.P.T)

    def margin(self, X) -> np.ndarray:
        """|theta_k - ||P x||_inf|, small for points near the cube boundary."""
        X = np.asarray(X, dtype=float)
        return np.abs(self.spec.theta - np.max(np.abs(X @ self.P.T), axis=1))


def sample_concept(n: int, k: int, seed: int = 0) -> EmbeddedConcept:
    """Balanced Cube_k embedded by a random orthonormal k x n matrix."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((n, k)))
    Q = Q * np.sign(np.diag(R))[None, :]  # unique orientation
    return EmbeddedConcept(n, k, np.ascontiguousarray(Q.T), CubeSpec.balanced(k))


@dataclass(frozen=True)
class NoiseModel:
    """Label corruption: none, random_flip(eta), adversarial_margin(budget), uniform."""

    kind: str = "none"
    param: float = 0.0

    def __post_init__(self):
        if self.kind == "random_flip":
            if not 0.0 <= self.param < 0.5:
                raise ValueError("random_flip needs 0 <= eta < 1/2")
        elif self.kind == "adversarial_margin":
            if not 0.0 <= self.param < 1.0:
                raise ValueError("adversarial_margin needs 0 <= budget < 1")
        elif self.kind not in ("none", "uniform"):
            raise ValueError(f"unknown noise model {self.kind!r}")

    @property
    def label(self) -> str:
        return self.kind if self.kind in ("none", "uniform") else f"{self.kind}({self.param:g})"

    @classmethod
    def parse(cls, text: str) -> "NoiseModel":
        """'none', 'uniform', 'random_flip:0.1' or 'adversarial_margin:0.05'."""
        if ":" in text:
            kind, val = text.split(":", 1)
            return cls(kind, float(val))
        return cls(text, 0.0)


@dataclass(frozen=True)
class LabeledSample:
    x: np.ndarray
    y: int
    clean_y: int


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    clean_y: np.ndarray
    noise: NoiseModel

    @property
    def m(self) -> int:
        return len(self.y)

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def samples(self) -> Iterator[LabeledSample]:
        for i in range(self.m):
            yield LabeledSample(self.X[i], int(self.y[i]), int(self.clean_y[i]))

    def flip_fraction(self) -> float:
        return float(np.mean(self.y != self.clean_y))


def generate_dataset(concept: EmbeddedConcept, m: int, noise: NoiseModel = NoiseModel(),
                     seed: int = 0) -> Dataset:
    """m Gaussian points labelled by the concept, then corrupted by ``noise``.

    adversarial_margin flips exactly floor(budget m) labels, those of the
    points closest to the cube boundary.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    sx, sn = np.random.SeedSequence(seed).spawn(2)
    X = np.random.default_rng(sx).standard_normal((m, concept.n))
    clean = concept.predict(X).astype(np.int8)
    y = clean.copy()
    rng = np.random.default_rng(sn)
    if noise.kind == "random_flip":
        y[rng.random(m) < noise.param] *= -1
    elif noise.kind == "adversarial_margin":
        flips = int(math.floor(noise.param * m))
        if flips:
            order = np.argsort(concept.margin(X), kind="stable")[:flips]
            y[order] *= -1
    elif noise.kind == "uniform":
        y = np.where(rng.random(m) < 0.5, 1, -1).astype(np.int8)
    return Dataset(X, y, clean, noise)


# ---------------------------------------------------------------------------
# snapshots


def write_snapshot(path, data: Dataset):
    """Binary little-endian: 16-byte header, then m records of n float64, int8 y, int8 clean_y."""
    if data.n > 0xFFFF:
        raise ValueError("n does not fit the header")
    rec = np.dtype([("x", "<f8", (data.n,)), ("y", "i1"), ("clean_y", "i1")])
    arr = np.empty(data.m, dtype=rec)
    arr["x"] = data.X
    arr["y"] = data.y
    arr["clean_y"] = data.clean_y
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, data.n, data.m))
        fh.write(arr.tobytes())


def read_snapshot(path, noise: NoiseModel = NoiseModel()) -> Dataset:
    with open(path, "rb") as fh:
        magic, version, n, m = HEADER.unpack(fh.read(HEADER.size))
        if magic != SNAPSHOT_MAGIC or version != SNAPSHOT_VERSION:
            raise ValueError("not a snapshot file (bad magic or version)")
        rec = np.dtype([("x", "<f8", (n,)), ("y", "i1"), ("clean_y", "i1")])
        arr = np.frombuffer(fh.read(m * rec.itemsize), dtype=rec)
    if len(arr) != m:
        raise ValueError("truncated snapshot")
    return Dataset(np.array(arr["x"]), np.array(arr["y"]), np.array(arr["clean_y"]), noise)


# ---------------------------------------------------------------------------
# L1 regression learner


def learner_indices(n: int, d: int, max_support: Optional[int] = 6,
                    budget: int = DEFAULT_COLUMN_BUDGET) -> list:
    """Hermite multi-indices in n variables, |J| <= d, at most min(d, max_support) active."""
    cap = None if max_support is None else min(d, max_support)
    idx = enumerate_multi_indices(n, d, max_support=cap)
    if len(idx) > budget:
        raise BudgetExceeded("learner basis columns", len(idx), budget)
    return idx


def design_matrix(X, indices, dtype=np.float32) -> np.ndarray:
    """Column-major matrix of Hbar_J(x_i)."""
    X = np.asarray(X, dtype=float)
    m, n = X.shape
    top = max((max(J) for J in indices), default=0)
    tables = [normalized_table(X[:, a], top) for a in range(n)]
    A = np.empty((m, len(indices)), dtype=dtype, order="F")
    for c, J in enumerate(indices):
        col = np.ones(m)
        for a, e in enumerate(J):
            if e:
                col = col * tables[a][e]
        A[:, c] = col
    return A


def lad_admm(A, y, rho: float = 1.0, relax: float = 1.6, max_iter: int = 60,
             tol: float = 1e-4):
    """Least absolute deviations min ||A c - y||_1 by ADMM with over-relaxation.

    The c-update is a least-squares solve with the Cholesky factor of
    A^T A; the z-update is soft thresholding of the residual.
    """
    y = np.asarray(y, dtype=A.dtype)
    G = (A.T @ A).astype(np.float64)
    G[np.diag_indices_from(G)] *= 1.0 + 1e-10
    cho = cho_factor(G)
    z = np.zeros_like(y)
    u = np.zeros_like(y)
    # A^T y, A^T z and A^T u are tracked so each step reads A twice
    Aty = (A.T @ y).astype(np.float64)
    Atz = np.zeros_like(Aty)
    Atu = np.zeros_like(Aty)
    c = np.zeros(A.shape[1])
    scale = math.sqrt(len(y))
    for it in range(1, max_iter + 1):
        c = cho_solve(cho, Aty + Atz - Atu, check_finite=False)
        Ac = A @ c.astype(A.dtype)
        Ah = relax * Ac + (1.0 - relax) * (z + y)
        v = Ah - y + u
        z = np.sign(v) * np.maximum(np.abs(v) - 1.0 / rho, 0.0)
        u = u + Ah - y - z
        Atz_old = Atz
        Atz = (A.T @ z).astype(np.float64)
        Atu = Atu + relax * (G @ c) + (1.0 - relax) * (Atz_old + Aty) - Aty - Atz
        r = np.linalg.norm(Ac - y - z)
        s = rho * np.linalg.norm(Atz - Atz_old)
        if r <= tol * scale and s <= tol * scale:
            break
    return c, it


@dataclass
class Hypothesis:
    n: int
    d: int
    indices: list
    coef: np.ndarray
    threshold: float
    train_error: float
    iterations: int = 0

    def score(self, X, chunk: int = 20000) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(len(X))
        for s in range(0, len(X), chunk):
            A = design_matrix(X[s:s + chunk], self.indices, np.float64)
            out[s:s + chunk] = A @ self.coef
        return out

    def predict(self, X) -> np.ndarray:
        return np.where(self.score(X) - self.threshold >= 0, 1, -1)


@dataclass(frozen=True)
class ConstantHypothesis:
    value: int = 1

    def predict(self, X) -> np.ndarray:
        return np.full(len(X), self.value)


def best_threshold(scores, y, T: int = 201):
    """Threshold on a T-point grid over [-1, 1] minimizing disagreements of sign(p - t) with y."""
    grid = np.linspace(-1.0, 1.0, T)
    order = np.argsort(scores, kind="stable")
    s, lab = scores[order], y[order]
    # predictions are +1 for s >= t; count errors via prefix sums
    pos_below = np.concatenate([[0], np.cumsum(lab > 0)])
    neg_total = int(np.sum(lab < 0))
    neg_below = np.concatenate([[0], np.cumsum(lab < 0)])
    cut = np.searchsorted(s, grid, side="left")
    errors = pos_below[cut] + (neg_total - neg_below[cut])
    best = int(np.argmin(errors))
    return float(grid[best]), int(errors[best]) / len(y)


def l1_regression_learn(data: Dataset, d: int, thresholds: int = 201, max_support: Optional[int] = 6,
                        column_budget: int = DEFAULT_COLUMN_BUDGET, max_iter: int = 60) -> Hypothesis:
    """Degree-d L1 polynomial regression followed by threshold selection."""
    if d < 0:
        raise ValueError("d must be >= 0")
    indices = learner_indices(data.n, d, max_support, column_budget)
    need = len(indices)
    if data.m < need:
        raise InsufficientSamples(data.m, need)
    A = design_matrix(data.X, indices)
    c, it = lad_admm(A, data.y.astype(np.float32), max_iter=max_iter)
    del A
    hyp = Hypothesis(data.n, d, indices, c, 0.0, 0.0, it)
    t, err = best_threshold(hyp.score(data.X), data.y, thresholds)
    hyp.threshold, hyp.train_error = t, err
    return hyp


def evaluate_error(hypothesis, concept: EmbeddedConcept, m_test: int, seed: int,
                   noise: NoiseModel = NoiseModel()):
    """(test error against noisy labels, excess over the realized OPT) on a fresh sample.

    The realized OPT is the concept's own error on the same noisy sample.
    """
    if m_test < 1:
        raise ValueError("m_test must be >= 1")
    test = generate_dataset(concept, m_test, noise, seed)
    err = float(np.mean(hypothesis.predict(test.X) != test.y))
    opt = float(np.mean(test.clean_y != test.y))
    return err, err - opt


# ---------------------------------------------------------------------------
# statistical query oracle


@dataclass
class StatOracle:
    concept: EmbeddedConcept
    noise: NoiseModel = NoiseModel()
    seed: int = 0
    adversary: str = "shift"  # or "random"
    chunk: int = 1 << 16

    def expectation(self, g: Callable, samples: int) -> float:
        """Monte Carlo E[g(x, y)] with a seed derived from the oracle seed."""
        total = 0.0
        done = 0
        block = 0
        while done < samples:
            m = min(self.chunk, samples - done)
            data = generate_dataset(self.concept, m, self.noise, seed=[self.seed, block])
            vals = np.asarray(g(data.X, data.y.astype(float)), dtype=float)
            if vals.shape != (m,):
                raise ValueError("query must return one value per sample")
            if np.any(np.abs(vals) > 1.0 + 1e-12):
                raise ValueError("query function is not bounded by 1")
            total += math.fsum(vals)
            done += m
            block += 1
        return total / samples


def stat_samples(tau: float) -> int:
    """Sample count so that three standard errors of a [-1,1] mean stay below tau/10."""
    return int(math.ceil((30.0 / tau) ** 2))


def stat_query(g: Callable, tau: float, oracle: StatOracle) -> float:
    """E[g(x, y)] shifted adversarially within +-tau.

    The default adversary adds tau * sign(E g) (the worst centered
    choice); "random" adds a seeded uniform value in [-tau, tau].
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    mean = oracle.expectation(g, stat_samples(tau))
    if oracle.adversary == "shift":
        return mean + tau * (1.0 if mean >= 0 else -1.0)
    if oracle.adversary == "random":
        return mean + np.random.default_rng([oracle.seed, 1]).uniform(-tau, tau)
    raise ValueError(f"unknown adversary {oracle.adversary!r}")


# ---------------------------------------------------------------------------
# experiment records


def experiment_record(seed: int, concept: EmbeddedConcept, d: int, m: int, noise: NoiseModel,
                      test_error: float, opt: float) -> str:
    return json.dumps({"seed": seed, "n": concept.n, "k": concept.k, "d": d, "m": m,
                       "noise": noise.label, "test_error": test_error, "opt": opt,
                       "excess": test_error - opt}, sort_keys=True)


def run_experiment(n: int, k: int, d: int, m: int, noise: NoiseModel, seed: int,
                   m_test: int = 10**5, concept_seed: Optional[int] = None):
    """Train on one sample, test on a fresh one; returns (record json, hypothesis)."""
    concept = sample_concept(n, k, seed if concept_seed is None else concept_seed)
    data = generate_dataset(concept, m, noise, seed=2 * seed + 1)
    hyp = l1_regression_learn(data, d)
    err, excess = evaluate_error(hyp, concept, m_test, seed=2 * seed + 2, noise=noise)
    return experiment_record(seed, concept, d, m, noise, err, err - excess), hyp


__all__ = ["EmbeddedConcept", "sample_concept", "NoiseModel", "LabeledSample", "Dataset",
           "generate_dataset", "write_snapshot", "read_snapshot", "l1_regression_learn",
           "Hypothesis", "ConstantHypothesis", "evaluate_error", "StatOracle", "stat_query",
           "experiment_record", "run_experiment", "MultiIndex", "lad_admm", "design_matrix"]

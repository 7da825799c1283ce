"""Fast invariant suite behind the ``selftest`` subcommand.

Each check is small enough that the whole suite runs in a few seconds.
The full-size studies live in the test suite; these are the same
properties at reduced size.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate

from . import cube, gns, hermite, l1degree, learner, resilience


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.detail} ({self.seconds:.2f}s)"


def check_orthonormality(Q: int = 25, jmax: int = 20, tol: float = 1e-10):
    S = hermite.gauss_hermite_grid(1, Q)
    T = hermite.normalized_table(S.points[:, 0], jmax)
    G = (T * S.weights) @ T.T
    err = float(np.max(np.abs(G - np.eye(jmax + 1))))
    return err <= tol, f"max |<H_i,H_j> - delta_ij| = {err:.2e}"


def check_interval_coefficients(thetas=(0.5, 1.0, 2.0), jmax: int = 20, tol: float = 1e-8):
    worst = 0.0
    for theta in thetas:
        analytic = cube.interval_coeffs(theta, jmax)
        for j in range(jmax + 1):
            def integrand(x, j=j):
                return hermite.normalized_table(x, j)[j] * math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
            direct = integrate.quad(integrand, -theta, theta, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
            worst = max(worst, abs(direct - analytic[j]))
    return worst <= tol, f"max coefficient error {worst:.2e}"


def check_theta_sandwich(n: int = 40):
    bad = []
    for k in np.geomspace(8, 1e6, n):
        t = cube.theta_k(k)
        lo, hi = cube.mills_bounds(k)
        if not lo <= t <= hi:
            bad.append(float(k))
    return not bad, f"{n} values of k, violations at {bad}"


def check_weight_dp(k: int = 3, d: int = 4, tol: float = 1e-12):
    spec = cube.CubeSpec.balanced(k)
    dp = cube.cube_low_degree_weight(spec, d).gamma
    idx = hermite.enumerate_multi_indices(k, d, include_zero=False)
    brute = math.fsum(cube.cube_coeff(spec, J) ** 2 for J in idx)
    return abs(dp - brute) <= tol, f"DP {dp!r} vs enumeration {brute!r}"


def check_duality(Q: int = 20, d: int = 2, tol: float = 1e-6):
    S = hermite.gauss_hermite_grid(2, Q)
    f = cube.cube_function(cube.CubeSpec.balanced(2), S)
    res = l1degree.duality_check(f, d)
    return res <= tol, f"Cube_2 Q={Q} d={d}: |alpha* + e* - 1| = {res:.2e}"


def check_witness(Q: int = 20, d: int = 2):
    S = hermite.gauss_hermite_grid(2, Q)
    f = cube.cube_function(cube.CubeSpec.balanced(2), S)
    rep = resilience.build_witness(f, d)
    ok = rep.converged and rep.max_low_coeff <= 1e-6 and rep.sup_norm_g <= 1 + 1e-6 \
        and not rep.hard_failures
    return ok, (f"{len(rep.iterations)} iterations, max low coeff {rep.max_low_coeff:.1e}, "
                f"sup {rep.sup_norm_g:.6f}, hard failures {len(rep.hard_failures)}")


def check_gns_sign(rho: float = 0.3, N: int = 200000):
    est = gns.gns_estimate(gns.sign_eval, 1, rho, N, seed=0)
    exact = gns.gns_sign_analytic(rho)
    return est.agrees_with(exact, 4.0), f"MC {est.value:.5f} +- {est.stderr:.5f} vs {exact:.5f}"


def check_snapshot_roundtrip():
    concept = learner.sample_concept(4, 2, 0)
    data = learner.generate_dataset(concept, 257, learner.NoiseModel("random_flip", 0.2), seed=3)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "data.rlab"
        learner.write_snapshot(path, data)
        back = learner.read_snapshot(path)
    ok = np.array_equal(back.X, data.X) and np.array_equal(back.y, data.y) \
        and np.array_equal(back.clean_y, data.clean_y)
    return ok, f"{data.m} records"


def check_learner_interval(m: int = 10000):
    """An embedded interval |<v, x>| <= theta_1 is a degree-2 threshold, learned almost exactly."""
    concept = learner.sample_concept(4, 1, 0)
    data = learner.generate_dataset(concept, m, learner.NoiseModel(), seed=1)
    hyp = learner.l1_regression_learn(data, 2)
    err, _ = learner.evaluate_error(hyp, concept, 20000, seed=2)
    return err <= 0.05, f"degree-2 test error {err:.4f}"


CHECKS = [
    ("hermite_orthonormality", check_orthonormality),
    ("interval_coefficients", check_interval_coefficients),
    ("theta_sandwich", check_theta_sandwich),
    ("weight_dp_vs_enumeration", check_weight_dp),
    ("boolean_duality", check_duality),
    ("witness_construction", check_witness),
    ("gns_sign_closed_form", check_gns_sign),
    ("snapshot_roundtrip", check_snapshot_roundtrip),
    ("learner_interval", check_learner_interval),
]


def run_checks() -> list:
    results = []
    for name, fn in CHECKS:
        t = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, reported by name
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t))
    return results

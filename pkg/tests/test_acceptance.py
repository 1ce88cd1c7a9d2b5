"""End-to-end acceptance suite.

Each test prints one PASS/FAIL line (also collected in the terminal summary)
and then asserts. Wall-clock budgets are checked alongside the numbers.
"""

import math
import time

import numpy as np
import pytest

from oracles import (
    random_feasible_batch,
    reaper_objective as oracle_objective,
    reaper_subgradient_oracle,
    water_level_bisect,
    weighted_ls_objective,
    weighted_ls_oracle,
)
from reaper.experiments import PhaseGridSpec, recovery_error, run_phase_grid, run_trials
from reaper.geometry import ProjectorRelaxation, Subspace
from reaper.haystack import HaystackParams, derive_seed, make_rng, sample_haystack
from reaper.recovery import InOutDataset, check_deterministic
from reaper.solver import (
    IrlsConfig,
    cap_to_strong_feasible,
    irls_solve,
    reaper_objective,
    regularized_objective,
    s_reaper_solve,
    solve_weighted_ls,
    waterfill,
    weighted_covariance,
)


def _random_spectrum(rng):
    D = int(rng.integers(1, 51))
    D = max(D, 2)
    kind = rng.integers(4)
    if kind == 0:
        lam = rng.exponential(size=D)
    elif kind == 1:
        lam = 10.0 ** rng.uniform(-8, 8, D)
    elif kind == 2:
        # Repeated values exercise the tie handling of the acceptance test.
        lam = rng.choice([0.5, 1.0, 2.0], size=D)
    else:
        lam = rng.exponential(size=D)
        lam[rng.integers(1, D + 1):] = 0.0
    return np.sort(lam)[::-1], float(rng.uniform(0, D))


def test_criterion_1_waterfill_invariants(report):
    rng = np.random.default_rng(1)
    cases = [_random_spectrum(rng) for _ in range(1000)]
    cases = [(lam, d if d > 0 else 0.5) for lam, d in cases]
    t0 = time.perf_counter()
    out = [waterfill(lam, d) for lam, d in cases]
    elapsed = time.perf_counter() - t0
    worst_sum, box_ok, theta_ok, oracle_gap = 0.0, True, True, 0.0
    for (lam, d), lv in zip(cases, out):
        worst_sum = max(worst_sum, abs(lv.nu.sum() - d))
        box_ok &= bool(np.all(lv.nu >= 0) and np.all(lv.nu <= 1))
        if lv.theta is not None:
            i = lv.active
            nxt = lam[i] if i < lam.size else 0.0
            theta_ok &= bool(lam[i - 1] > lv.theta >= nxt)
            oracle_gap = max(oracle_gap, float(np.abs(lv.nu - water_level_bisect(lam, d)[1]).max()))
    passed = worst_sum <= 1e-10 and box_ok and theta_ok and elapsed < 1.0 and oracle_gap < 1e-8
    report(1, passed, f"max|sum nu - d| = {worst_sum:.1e}, box {box_ok}, theta bracket {theta_ok}, "
                      f"max oracle gap {oracle_gap:.1e}, {elapsed:.2f}s")
    assert passed


def test_criterion_2_weighted_ls_oracle_and_kkt(report):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst_gap, worst_kkt = 0.0, -np.inf
    for _ in range(200):
        D = 4
        N = int(rng.integers(1, 16))
        X = rng.standard_normal((D, N)) * rng.uniform(0.1, 3)
        w = rng.uniform(0.01, 5, N)
        d = float(rng.uniform(0.05, D - 0.05))
        P = solve_weighted_ls(X, w, d).matrix
        _, f_oracle, stationarity = weighted_ls_oracle(X, w, d, tol=1e-10)
        assert stationarity <= 1e-10
        worst_gap = max(worst_gap, abs(weighted_ls_objective(X, w, P) - f_oracle))
        G = (np.eye(D) - P) @ weighted_covariance(X, w)
        Delta = random_feasible_batch(D, d, rng, 1000) - P
        worst_kkt = max(worst_kkt, float(np.einsum("nij,ij->n", Delta, G).max()))
    elapsed = time.perf_counter() - t0
    passed = worst_gap <= 1e-8 and worst_kkt <= 1e-8 and elapsed < 60
    report(2, passed, f"max |f - f_oracle| = {worst_gap:.1e}, max <Delta,(I-P)C> = {worst_kkt:.1e}, {elapsed:.1f}s")
    assert passed


def test_criterion_3_irls_monotone_and_sandwich(report):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst_rise, worst_below, worst_above = -np.inf, 0.0, -np.inf
    for k in range(100):
        D = int(rng.integers(2, 12))
        N = int(rng.integers(3, 60))
        X = rng.standard_normal((D, N))
        if k % 3 == 0:
            # A planted subspace drives residuals below delta, where the bound is active.
            L = Subspace.random(D, 1, rng)
            X[:, : N // 2] = L.basis @ rng.standard_normal((1, N // 2))
        d = float(rng.integers(1, D)) if k % 2 else float(rng.uniform(0.2, D - 0.2))
        delta = [1e-10, 1e-6, 1e-3, 1e-1][k % 4]
        X_, tr = irls_solve(X, IrlsConfig(d, delta=delta), record_iterates=True)
        alphas = np.array(tr.objective_values)
        if alphas.size > 1:
            worst_rise = max(worst_rise, float(np.diff(alphas).max()))
        for P, a in zip(tr.iterates, alphas):
            gap = a - reaper_objective(X, P)
            worst_below = min(worst_below, gap)
            worst_above = max(worst_above, gap - delta * N / 2)
            assert math.isclose(a, regularized_objective(X, P, delta), rel_tol=1e-12, abs_tol=1e-15)
    elapsed = time.perf_counter() - t0
    passed = worst_rise <= 1e-12 and worst_below >= -1e-12 and worst_above <= 1e-12 and elapsed < 60
    report(3, passed, f"max alpha increase {worst_rise:.1e}, min F-F0 {worst_below:.1e}, "
                      f"max (F-F0) - delta N/2 = {worst_above:.1e}, {elapsed:.1f}s")
    assert passed


def test_criterion_4_irls_suboptimality(report):
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst = -np.inf
    for k in range(20):
        N = int(rng.integers(6, 25))
        X = rng.standard_normal((3, N))
        d = [1.0, 2.0, 1.5, 0.7][k % 4]
        cfg = IrlsConfig(d)
        P, tr = irls_solve(X, cfg)
        _, f_oracle = reaper_subgradient_oracle(X, d, iters=3000, seed=k)
        worst = max(worst, tr.final_objective - f_oracle - cfg.delta * N / 2)
        assert math.isclose(oracle_objective(X, P.matrix), tr.final_objective, rel_tol=1e-12)
    elapsed = time.perf_counter() - t0
    passed = worst <= 1e-6 and elapsed < 120
    report(4, passed, f"max F0(IRLS) - F0(oracle) - delta N/2 = {worst:.1e}, {elapsed:.1f}s")
    assert passed


def test_criterion_5_needle_recovery(report):
    t0 = time.perf_counter()
    trials = run_trials("needle", 25, seed=5)
    elapsed = time.perf_counter() - t0
    wins = sum(t["success"] for t in trials)
    passed = wins >= 23 and elapsed < 300
    report(5, passed, f"{wins}/25 exact recoveries (spectral error < 1e-5), {elapsed:.1f}s")
    assert passed


@pytest.mark.slow
def test_criterion_6_phase_transition_slope(report):
    spec = PhaseGridSpec(
        D=100, d=1, rho_in_values=range(2, 13), rho_out_values=[1, 2, 3, 4, 5], trials=25, seed=0
    )
    t0 = time.perf_counter()
    result = run_phase_grid(spec)
    elapsed = time.perf_counter() - t0
    trend = result.trend()
    slope = trend["inverted_slope"]
    th = {k: v for k, v in sorted(result.thresholds().items())}
    passed = slope is not None and 1.2 <= slope <= 1.9 and elapsed <= 1800
    slope_txt = "n/a" if slope is None else f"{slope:.3f}"
    intercept = trend["inverted_intercept"]
    intercept_txt = "n/a" if intercept is None else f"{intercept:.2f}"
    report(6, passed, f"rho_in = {slope_txt} rho_out + {intercept_txt} from {trend['points']} thresholds "
                      f"{th}, {elapsed:.0f}s")
    assert passed


def test_criterion_7_syringe_angle(report):
    t0 = time.perf_counter()
    trials = run_trials("syringe", 10, seed=7)
    elapsed = time.perf_counter() - t0
    mean = float(np.mean([t["angle_deg"] for t in trials]))
    to_truth = float(np.mean([t["angle_truth_deg"] for t in trials]))
    passed = mean <= 10.0 and elapsed < 300
    report(7, passed, f"mean angle to oracle component {mean:.2f} deg (to generating line {to_truth:.2f} deg), "
                      f"{elapsed:.1f}s")
    assert passed


def _in_out_candidate(k):
    rng = make_rng(8, k)
    D = int(rng.choice([10, 20, 50]))
    d = int(rng.integers(1, 4))
    n_in = int(rng.integers(4 * d, 30 * d))
    n_out = int(rng.integers(0, 6 * D))
    ds = sample_haystack(HaystackParams(D, d, n_in, n_out, seed=derive_seed(8, k)))
    # Arbitrary positive per-point scales keep the In & Out structure.
    s_in = 10.0 ** rng.uniform(-2, 2, n_in)
    s_out = 10.0 ** rng.uniform(-2, 2, n_out)
    return InOutDataset(ds.inliers * s_in, ds.outliers * s_out, ds.subspace)


def test_criterion_8_theory_solver_consistency(report):
    t0 = time.perf_counter()
    accepted, tried, failures, worst = 0, 0, 0, 0.0
    while accepted < 100:
        ds = _in_out_candidate(tried)
        tried += 1
        if not check_deterministic(ds).sreaper_condition_holds:
            continue
        accepted += 1
        P, _ = s_reaper_solve(ds.data, IrlsConfig(ds.d))
        err = recovery_error(P, ds.subspace)
        worst = max(worst, err)
        failures += err >= 1e-5
    elapsed = time.perf_counter() - t0
    passed = failures == 0 and elapsed < 600
    report(8, passed, f"{100 - failures}/100 recoveries among condition-true datasets "
                      f"({tried} drawn), max error {worst:.1e}, {elapsed:.1f}s")
    assert passed


def test_criterion_9_cap_soundness(report):
    rng = np.random.default_rng(9)
    t0 = time.perf_counter()
    worst_increase, valid = -np.inf, True
    for _ in range(100):
        D = int(rng.integers(2, 10))
        d = float(rng.uniform(0.5, D))
        Q, _ = np.linalg.qr(rng.standard_normal((D, D)))
        lam = rng.exponential(size=D) ** 3
        lam[rng.random(D) < 0.3] = 0.0
        if lam.sum() == 0:
            lam[0] = 1.0
        lam *= d / lam.sum()
        P = (Q * lam) @ Q.T
        P = 0.5 * (P + P.T)
        out = cap_to_strong_feasible(P, d)
        try:
            ProjectorRelaxation(out.matrix, d)
        except ValueError:
            valid = False
        X = rng.standard_normal((D, int(rng.integers(1, 40))))
        worst_increase = max(worst_increase, reaper_objective(X, out) - reaper_objective(X, P))
    elapsed = time.perf_counter() - t0
    passed = valid and worst_increase <= 1e-10 and elapsed < 10
    report(9, passed, f"invariants hold {valid}, max objective increase {worst_increase:.1e}, {elapsed:.2f}s")
    assert passed


def test_criterion_10_linear_convergence(report):
    t0 = time.perf_counter()
    ds = sample_haystack(HaystackParams(100, 5, 80, 200, seed=10))
    P, tr = irls_solve(ds.data, IrlsConfig(5), record_iterates=True)
    errs = np.array([np.linalg.norm(Q - P.matrix) for Q in tr.iterates])
    elapsed = time.perf_counter() - t0
    ok, worst_ratio = True, 0.0
    for k, e in enumerate(errs):
        if e <= 1e-10:
            break
        j = min(k + 50, errs.size - 1)
        ratio = errs[j] / e
        worst_ratio = max(worst_ratio, ratio)
        ok &= ratio <= 0.1
    reached = int(np.argmax(errs <= 1e-10))
    passed = ok and tr.converged and elapsed < 120
    report(10, passed, f"{tr.iterations} iterations, error <= 1e-10 from iterate {reached + 1}, "
                       f"worst 50-step ratio {worst_ratio:.1e}, {elapsed:.1f}s")
    assert passed

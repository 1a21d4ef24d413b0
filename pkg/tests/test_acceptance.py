"""Acceptance criteria, one test each, at the stated tolerances.

Monte-Carlo criteria use seeds fixed in advance (7 for the single-seed runs,
7, 8 and 9 for the three-seed run). Every test records its measured numbers
so the terminal summary shows them whether it passes or fails.
"""
import math
import time

import numpy as np
import pytest

from grvml.estimator import (compute_S, decompose, g_of_nu, g_prime_of_nu, neg_log_likelihood,
                             pole, sign_variants, solve)
from grvml.model import NON_DEGENERATE_CASES, ProblemInstance
from grvml.montecarlo import preset_config, run_experiment
from grvml.published import EXAMPLES, compare_example
from grvml.verify import grid_minimize, kkt_check, lifted_hessian_psd, make_case_instance, schur_residual

SEED = 7
NMSE_SEEDS = (7, 8, 9)


def _report(record_property, num, detail):
    record_property("criterion", num)
    record_property("detail", detail)


def test_criterion_1_golden_examples(record_property):
    t0 = time.perf_counter()
    rows = {k: compare_example(k) for k in EXAMPLES}
    cases_ok = {k: solve(ex.instance, ex.options).case_tag is ex.case for k, ex in EXAMPLES.items()}
    elapsed = time.perf_counter() - t0
    bad = [f"ex{k}:{r.label} reference={r.reference:g} got={r.computed:.4f}"
           for k, rs in rows.items() for r in rs if not r.ok()]
    bad += [f"ex{k}:case" for k, ok in cases_ok.items() if not ok]
    _report(record_property, 1, f"{elapsed:.2f}s; mismatches: {'; '.join(bad) or 'none'}")
    assert elapsed < 1.0
    assert not bad


def test_criterion_2_grid_oracle(record_property):
    t0 = time.perf_counter()
    worst, count = -math.inf, 0
    for tag in NON_DEGENERATE_CASES:
        for seed in range(100):
            inst = make_case_instance(tag, seed, N=2)
            f_sol = solve(inst).objective_value
            _, f_grid = grid_minimize(inst)
            worst = max(worst, f_sol - f_grid)
            count += 1
    elapsed = time.perf_counter() - t0
    _report(record_property, 2, f"{count} instances, max f(x_hat)-f_grid={worst:.2e}, {elapsed:.1f}s")
    assert count >= 500
    assert worst <= 1e-4
    assert elapsed < 120


def test_criterion_3_kkt_suite(record_property):
    t0 = time.perf_counter()
    failures, worst, sign_checked, sign_bad = [], 0.0, 0, 0
    for tag in NON_DEGENERATE_CASES:
        for seed in range(100):
            inst = make_case_instance(tag, seed)
            rep = kkt_check(solve(inst), inst, 1e-8)
            worst = max(worst, rep.max_residual)
            if not rep.passed:
                failures.append(f"{tag.value}/{seed}")
            sf = decompose(inst)
            S = compute_S(sf, inst.sigma_e2, inst.sigma_eps2, inst.M)
            if math.isfinite(S) and sf.tail_energy > 0:
                g0 = g_of_nu(0.0, sf, inst.sigma_e2, inst.sigma_eps2, inst.M)
                sign_checked += 1
                if S == 0.0:
                    # S is exactly zero by construction; g(0) can only carry rounding
                    ok = abs(g0) <= 1e-12 * max(1.0, inst.M * sf.y_norm2)
                else:
                    ok = np.sign(S) == np.sign(g0)
                sign_bad += not ok
    elapsed = time.perf_counter() - t0
    _report(record_property, 3, f"kkt failures={len(failures)} worst residual={worst:.1e}; "
            f"sign link {sign_checked - sign_bad}/{sign_checked}; {elapsed:.1f}s")
    assert not failures
    assert sign_bad == 0
    assert elapsed < 60


def test_criterion_4_convexity(record_property):
    rng = np.random.default_rng(SEED)
    psd_bad = 0
    for _ in range(1000):
        R = int(rng.integers(1, 8))
        C, w, z = (rng.lognormal(0, 1, R), rng.lognormal(0, 1, R), float(rng.lognormal(0, 1)))
        _, ok = lifted_hessian_psd(C, w, z)
        psd_bad += not (ok and abs(schur_residual(C, w, z)) <= 1e-10)
    fd_worst, h = 0.0, 1e-6
    for _ in range(1000):
        M, N = int(rng.integers(1, 10)), int(rng.integers(1, 5))
        H = rng.standard_normal((M, N))
        se, sn = rng.uniform(0.02, 0.5), rng.uniform(0.01, 0.3)
        inst = ProblemInstance(H=H, y=rng.standard_normal(M) * rng.uniform(0.5, 3), sigma_e2=se, sigma_eps2=sn)
        sf = decompose(inst)
        p = pole(sf, se)
        lo = p if math.isfinite(p) else -M
        nu = lo + (0.5 * M - lo) * rng.uniform(0.05, 1.0)
        gp = g_prime_of_nu(nu, sf, se, sn, M)
        fd = (g_of_nu(nu + h, sf, se, sn, M) - g_of_nu(nu - h, sf, se, sn, M)) / (2 * h)
        fd_worst = max(fd_worst, abs(gp - fd) / (1.0 + abs(gp)))
    _report(record_property, 4, f"hessian failures={psd_bad}/1000; worst g' FD error={fd_worst:.1e}")
    assert psd_bad == 0
    assert fd_worst <= 1e-6


def test_criterion_5_nmse_histogram(record_property):
    bands = {"GRVML": (0.15, 0.25), "OracleLS": (0.06, 0.12), "LS": (1.4, 2.6)}
    t0 = time.perf_counter()
    passes, lines = 0, []
    for seed in NMSE_SEEDS:
        res = run_experiment(preset_config("nmse-hist", seed=seed))
        med = {k: res.metric(k, "median_nmse")[0] for k in bands}
        ok = all(lo <= med[k] <= hi for k, (lo, hi) in bands.items())
        passes += ok
        lines.append(f"seed {seed}: " + ", ".join(f"{k}={v:.3f}" for k, v in med.items())
                     + (" ok" if ok else " out"))
    elapsed = time.perf_counter() - t0
    _report(record_property, 5, f"{passes}/3 seeds in band ({'; '.join(lines)}); {elapsed:.0f}s")
    assert passes >= 2
    assert elapsed < 600


def test_criterion_6_mse_vs_snr(record_property):
    res = run_experiment(preset_config("mse-vs-snr", seed=SEED))
    ml, ls = np.array(res.metric("GRVML", "mse")), np.array(res.metric("LS", "mse"))
    bound = np.array([p["crb_trace"] for p in res.summary["points"]])
    a = bool(np.all(ml <= 1.02 * ls))
    b = bool(np.all(ls >= 0.95 * bound))
    c = bool(np.all(ml[-2:] < bound[-2:]))
    _report(record_property, 6, f"ML<=1.02LS {a}; LS>=0.95CRB {b}; ML<CRB at top two {c} "
            f"(ML/CRB={np.round(ml[-2:] / bound[-2:], 3).tolist()}, max ML/LS={np.max(ml / ls):.3f})")
    assert a and b and c


def test_criterion_7_kappa_scaling(record_property):
    res = run_experiment(preset_config("kappa-sweep", seed=SEED, kappa=0.01))
    ml, orc = np.array(res.metric("GRVML", "mse")), np.array(res.metric("OracleLS", "mse"))
    gap = np.abs(ml[-2:] - orc[-2:]) / orc[-2:]
    _report(record_property, 7, f"relative gap at top two SNR points {np.round(gap, 4).tolist()}")
    assert np.all(gap <= 0.10)


def test_criterion_8_asymptotics(record_property):
    res = run_experiment(preset_config("mse-vs-m", seed=SEED))
    ml = np.array(res.metric("GRVML", "mse"))
    bound = np.array([p["crb_trace"] for p in res.summary["points"]])
    ratio = ml / bound
    _report(record_property, 8, f"MSE/CRB at M=8: {ratio[0]:.3f}, at M=1024: {ratio[-1]:.3f}")
    assert 0.7 <= ratio[-1] <= 1.3
    assert abs(ratio[-1] - 1) < abs(ratio[0] - 1)


def _orth(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def test_criterion_9_scale_and_invariance(record_property):
    rng = np.random.default_rng(SEED)
    M, N = 2000, 500
    H = rng.standard_normal((M, N))
    x = rng.standard_normal(N)
    y = (H + math.sqrt(0.1) * rng.standard_normal((M, N))) @ x + math.sqrt(0.03) * rng.standard_normal(M)
    inst = ProblemInstance(H=H, y=y, sigma_e2=0.1, sigma_eps2=0.03)
    t0 = time.perf_counter()
    sol = solve(inst)
    elapsed = time.perf_counter() - t0

    worst = 0.0
    for tag in NON_DEGENERATE_CASES:
        for seed in range(10):
            small = make_case_instance(tag, seed)
            ref = sign_variants(solve(small), decompose(small))
            Q, P = _orth(rng, small.M), _orth(rng, small.N)
            left = ProblemInstance(H=Q @ small.H, y=Q @ small.y, sigma_e2=small.sigma_e2, sigma_eps2=small.sigma_eps2)
            right = ProblemInstance(H=small.H @ P, y=small.y, sigma_e2=small.sigma_e2, sigma_eps2=small.sigma_eps2)
            got_l = sign_variants(solve(left), decompose(left))
            got_r = [P @ v for v in sign_variants(solve(right), decompose(right))]
            scale = max(1.0, float(np.linalg.norm(ref[0])))
            for got in (got_l, got_r):
                for u in ref:
                    worst = max(worst, min(float(np.max(np.abs(u - v))) for v in got) / scale)
    _report(record_property, 9, f"M=2000,N=500 solve {elapsed:.2f}s, {sol.iterations} iterations, "
            f"case {sol.case_tag.value}; invariance worst error {worst:.1e} over 50 instances")
    assert elapsed < 5.0
    assert sol.iterations <= 200
    assert worst <= 1e-8

"""Acceptance gate: one test per criterion, each at its stated tolerance.

Every test records a single PASS/FAIL line (see the terminal summary) and
then asserts the same condition, runtime budget included.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from ssimpc import estimator as est
from ssimpc.controller import derive_seed, run_episode, run_paired
from ssimpc.harness import load_config
from ssimpc.harness.runner import build_episode
from ssimpc.metrics import dynamic_regret, noise_floor_check, sublinearity_slope, tracking_rmse
from ssimpc.mpc import AugmentedDynamics, CostSpec, MpcProblem, solve
from ssimpc.plants import make_linear
from ssimpc.rff import KernelSpec, evaluate_features, kernel_value, sample_features

pytestmark = pytest.mark.acceptance

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"


def _seeds(cfg, count):
    return [derive_seed(cfg.run.seed, cfg.name, r) for r in range(count)]


def _episode(cfg, controller, seed, features=None, eta=None, steps=None):
    c = cfg.controller
    return run_episode(build_episode(
        cfg, controller, features or c.features, c.learning_rate.value if eta is None else eta, seed, steps=steps,
    ))


def test_c01_rff_rate(acceptance_report):
    t0 = time.perf_counter()
    k = KernelSpec(4, 1.0)
    rng = np.random.default_rng(0)
    z1 = rng.normal(size=(100, 4))
    z2 = rng.normal(size=(100, 4))
    exact = kernel_value(k, z1, z2)

    def sup_err(M, seed):
        fs = sample_features(k, M, seed)
        mc = 2.0 / M * np.sum(evaluate_features(fs, z1) * evaluate_features(fs, z2), axis=1)
        return np.max(np.abs(mc - exact))

    ratios = [sup_err(64, s) / sup_err(1024, 10_000 + s) for s in range(20)]
    ratio = float(np.median(ratios))
    elapsed = time.perf_counter() - t0
    ok = ratio >= 2.5 and elapsed < 5
    assert acceptance_report(1, "RFF approximation rate", ok,
                             f"median sup-error ratio M=64/M=1024 = {ratio:.2f} (need >= 2.5), {elapsed:.1f}s")


def _ogd_regret(T, seed, M=10, dz=2, dh=2):
    rng = np.random.default_rng(seed)
    fs = sample_features(KernelSpec(dz), M, derive_seed(seed, "features"))
    a0 = rng.uniform(-10, 10, (dh, M))
    Phi = evaluate_features(fs, rng.uniform(-1, 1, (T, dz)))
    Y = Phi @ a0.T / M
    s = est.initial_state(dh, M, 0.5 / np.sqrt(T))
    L = np.empty(T)
    for t in range(T):
        o = est.Observation(Phi[t], Y[t])
        L[t] = est.loss(s, o)
        s = est.update(s, o)
    return est.static_regret(L, Phi, Y, 10.0)


def test_c02_ogd_static_regret(acceptance_report):
    t0 = time.perf_counter()
    Ts = (1000, 2000, 4000, 8000)
    R = np.array([[_ogd_regret(T, s) for T in Ts] for s in range(10)])
    med = [float(np.median(R[:, i + 1] / R[:, i])) for i in range(3)]
    elapsed = time.perf_counter() - t0
    ok = max(med) <= 1.9 and elapsed < 30
    assert acceptance_report(2, "OGD static regret", ok,
                             "median Regret(2T)/Regret(T) at T=1000,2000,4000 = "
                             + ", ".join(f"{m:.3f}" for m in med) + f" (need <= 1.9), {elapsed:.1f}s")


def _riccati(A, B, Q, R):
    P = Q.copy()
    for _ in range(100_000):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        Pn = Q + A.T @ P @ (A - B @ K)
        Pn = 0.5 * (Pn + Pn.T)
        if np.max(np.abs(Pn - P)) <= 1e-13 * max(1.0, np.max(np.abs(P))):
            return Pn, K
        P = Pn
    raise RuntimeError("no Riccati fixed point")


def test_c03_mpc_riccati(acceptance_report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst_u = worst_j = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, min(n, 3) + 1))
        A = rng.normal(size=(n, n)) / np.sqrt(n) * 1.1
        B = rng.normal(size=(n, m))
        G = rng.normal(size=(n, n))
        Q = G @ G.T / n + 0.1 * np.eye(n)
        R = np.diag(rng.uniform(0.1, 2.0, m))
        P, K = _riccati(A, B, Q, R)
        problem = MpcProblem(20, AugmentedDynamics(make_linear(A, B, bounds=1e6)), CostSpec(Q, R, Q_terminal=P))
        x0 = rng.normal(size=n)
        sol = solve(problem, x0)
        u_star = -K @ x0
        worst_u = max(worst_u, np.linalg.norm(sol.inputs[0] - u_star) / np.linalg.norm(u_star))
        worst_j = max(worst_j, abs(sol.objective - x0 @ P @ x0) / (x0 @ P @ x0))
    elapsed = time.perf_counter() - t0
    ok = worst_u <= 1e-4 and worst_j <= 1e-6 and elapsed < 30
    assert acceptance_report(3, "MPC-Riccati oracle", ok,
                             f"worst first-input rel err {worst_u:.1e} (<= 1e-4), "
                             f"worst objective rel err {worst_j:.1e} (<= 1e-6), {elapsed:.1f}s")


def test_c04_zero_disturbance_identity(acceptance_report):
    t0 = time.perf_counter()
    cfg = load_config(SCENARIOS / "cartpole_mismatch.yaml")
    cfg.plant.nominal_scale = 1.0
    fields = ("x", "u", "residual", "loss", "stage_cost", "value", "solver_iters", "converged", "param_max_abs")
    worst = 0.0
    for seed in _seeds(cfg, 3):
        a = _episode(cfg, "ssi_mpc", seed)
        b = _episode(cfg, "nominal_mpc", seed)
        assert len(a) == len(b) == cfg.run.steps
        for f in fields:
            worst = max(worst, float(np.max(np.abs(np.asarray(getattr(a, f), float) - np.asarray(getattr(b, f), float)))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10
    assert acceptance_report(4, "zero-disturbance identity", ok,
                             f"max field difference ssi vs nominal = {worst:.1e} (<= 1e-12), {elapsed:.1f}s")


@pytest.fixture(scope="module")
def cartpole_runs():
    cfg = load_config(SCENARIOS / "cartpole_mismatch.yaml")
    seeds = _seeds(cfg, cfg.run.repeats)
    t0 = time.perf_counter()
    ssi = [_episode(cfg, "ssi_mpc", s) for s in seeds]
    t_ssi = time.perf_counter() - t0
    nominal = [_episode(cfg, "nominal_mpc", s) for s in seeds]
    t_all = time.perf_counter() - t0
    return cfg, ssi, nominal, t_ssi, t_all


def test_c05_cartpole_learning_speed(acceptance_report, cartpole_runs):
    cfg, ssi, _, t_ssi, _ = cartpole_runs
    firsts = []
    for lg in ssi:
        hit = np.flatnonzero(lg.loss < 0.15)
        firsts.append(int(hit[0]) if hit.size else np.inf)
    med = float(np.median(firsts))
    ok = med <= 35 and t_ssi < 120 and not any(lg.failed for lg in ssi)
    assert acceptance_report(5, "cart-pole learning speed", ok,
                             f"median first step with l_t < 0.15 = {med:g} (<= 35); "
                             f"median l_0 = {np.median([lg.loss[0] for lg in ssi]):.3f}; {t_ssi:.1f}s")


def test_c06_cartpole_stabilization_gap(acceptance_report, cartpole_runs):
    cfg, ssi, nominal, _, t_all = cartpole_runs
    a = float(np.median([lg.cumulative_sq_error for lg in ssi]))
    b = float(np.median([lg.cumulative_sq_error for lg in nominal]))
    ok = a <= 0.8 * b and t_all < 240
    assert acceptance_report(6, "cart-pole stabilization gap", ok,
                             f"median cumulative ||x||^2 ssi {a:.2f} vs nominal {b:.2f}, ratio {a / b:.3f} "
                             f"(<= 0.8), {t_all:.1f}s")


def test_c07_sensitivity_trend(acceptance_report):
    t0 = time.perf_counter()
    cfg = load_config(SCENARIOS / "cartpole_sweep.yaml")
    seeds = _seeds(cfg, 5)
    big = [_episode(cfg, "ssi_mpc", s, features=250, eta=0.4).cumulative_sq_error for s in seeds]
    small = [_episode(cfg, "ssi_mpc", s, features=50, eta=0.01).cumulative_sq_error for s in seeds]
    a, b = float(np.median(big)), float(np.median(small))
    elapsed = time.perf_counter() - t0
    ok = a <= b and elapsed < 600
    assert acceptance_report(7, "sensitivity trend", ok,
                             f"median cumulative ||x||^2 (M=250, eta=0.4) {a:.3f} vs (M=50, eta=0.01) {b:.3f} "
                             f"(need <=), {elapsed:.1f}s")


def test_c08_regret_sublinearity(acceptance_report):
    t0 = time.perf_counter()
    cfg = load_config(SCENARIOS / "regret.yaml")
    horizons = [500, 1000, 2000, 4000]
    T = horizons[-1]
    eta = est.resolve_learning_rate("horizon_scaled", cfg.controller.learning_rate.value, T)
    vals, exps = [], []
    for seed in _seeds(cfg, 5):
        base = build_episode(cfg, "ssi_mpc", cfg.controller.features, eta, seed, steps=T)
        la, lb = run_paired(base, base.with_controller("clairvoyant_mpc"))
        assert not (la.failed or lb.failed)
        rep = dynamic_regret(la, lb)
        v = [float(rep.prefix[h - 1]) for h in horizons]
        vals.append(v)
        exps.append(sublinearity_slope(horizons, v).exponent)
    p = float(np.median(exps))
    per_step = np.median(np.array(vals), axis=0) / np.array(horizons)
    decreasing = bool(np.all(np.diff(per_step) < 0))
    elapsed = time.perf_counter() - t0
    ok = p <= 0.95 and decreasing and elapsed < 1200
    assert acceptance_report(8, "regret sublinearity (clairvoyant-MPC proxy)", ok,
                             f"median exponent p = {p:.3g} (<= 0.95); median Regret(T)/T = "
                             + ", ".join(f"{x:.4g}" for x in per_step)
                             + f" ({'decreasing' if decreasing else 'NOT decreasing'}); {elapsed:.1f}s")


def test_c09_noise_floor(acceptance_report):
    t0 = time.perf_counter()
    cfg = load_config(SCENARIOS / "noise_floor.yaml")
    ratios, cost_ratios = [], []
    for seed in _seeds(cfg, cfg.run.repeats):
        noisy = _episode(cfg, "ssi_mpc", seed)
        assert cfg.run.steps == 4000 and cfg.noise.scale == 0.01
        ratios.append(noise_floor_check(noisy, build_episode(cfg, "ssi_mpc", 1, 1.0, seed).noise).ratio)
        clean_cfg = load_config(SCENARIOS / "noise_floor.yaml")
        clean_cfg.noise.kind = "none"
        clean = _episode(clean_cfg, "nominal_mpc", seed)
        cost_ratios.append(noisy.cumulative_cost / clean.cumulative_cost)
    r = float(np.median(ratios))
    c = float(np.median(cost_ratios))
    elapsed = time.perf_counter() - t0
    ok = 0.5 <= r <= 2.0 and c <= 3.0 and elapsed < 120
    assert acceptance_report(9, "process-noise floor", ok,
                             f"median loss floor / (d_x sigma^2) = {r:.3f} (in [0.5, 2]); median cumulative cost "
                             f"noisy ssi / noiseless nominal = {c:.2f} (<= 3); {elapsed:.1f}s")


def test_c10_quadrotor_drag(acceptance_report):
    t0 = time.perf_counter()
    cfg = load_config(SCENARIOS / "quadrotor_drag.yaml")
    r = cfg.plant.reference
    assert (r.kind, r.radius, r.max_speed) == ("circle", 0.5, 0.8)
    assert cfg.plant.drag_coefficients == [0.3, 0.3, 0.3] and cfg.plant.dt == 0.02
    assert cfg.run.steps == 1000 and cfg.controller.horizon == 10
    ssi, nom = [], []
    for seed in _seeds(cfg, 5):
        a = _episode(cfg, "ssi_mpc", seed)
        b = _episode(cfg, "nominal_mpc", seed)
        assert not (a.failed or b.failed)
        ssi.append(tracking_rmse(a))
        nom.append(tracking_rmse(b))
    a, b = float(np.median(ssi)), float(np.median(nom))
    elapsed = time.perf_counter() - t0
    ok = a <= 0.7 * b and elapsed < 600
    assert acceptance_report(10, "quadrotor drag tracking", ok,
                             f"median position RMSE ssi {a:.4f} m vs nominal {b:.4f} m, ratio {a / b:.3f} "
                             f"(<= 0.7), {elapsed:.1f}s")


def test_c11_property_suites(acceptance_report):
    t0 = time.perf_counter()
    tests = sorted(str(p) for p in (ROOT / "tests").glob("test_*.py") if p.name != "test_acceptance.py")
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *tests],
                          cwd=ROOT, capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    ok = proc.returncode == 0 and elapsed < 300
    assert acceptance_report(11, "module property suites", ok, f"{tail}; {elapsed:.1f}s")

"""Acceptance criteria 1-10.

Every test records a PASS/FAIL line (printed inline and summarized at the end
of the run). Criteria that this implementation cannot meet are kept at their
stated tolerance and marked ``xfail(strict=True)``; see the decisions ledger.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from oracles import central_jacobian, damped_cavity_matrices, kalman_bucy, random_density
from qekf import harness as hn
from qekf import operators as ops
from qekf import scenarios as sc
from qekf.ekf import FilterModel, RobustParams, check_noise_inequality, run_filter
from qekf.operators import FockSpace
from qekf.sme import Propagator, SimConfig, homodyne, simulate, trajectory_noise
from qekf.slh import SLHTriple

HONEST_FAILURE = "criterion not met by this implementation; analysed in the decisions ledger"


@pytest.fixture
def record(capsys):
    def _record(k, part, ok, detail):
        ACCEPTANCE.setdefault(k, []).append((part, bool(ok), detail))
        with capsys.disabled():
            print(f"\nACCEPTANCE {k} [{part}]: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return _record


# -- 1 ----------------------------------------------------------------------

def test_criterion_1_generator_duality(record):
    t0 = time.perf_counter()
    worst = 0.0
    for dim in (4, 8, 16):
        rng = np.random.default_rng(dim)
        for _ in range(50):
            H = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            H = 0.5 * (H + H.conj().T)
            Ls = [rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
                  for _ in range(rng.integers(1, 4))]
            X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            X = 0.5 * (X + X.conj().T)
            rho = random_density(rng, dim)
            lhs = np.trace(rho @ ops.lindblad_heisenberg(X, H, Ls))
            rhs = np.trace(ops.lindblad_schrodinger(rho, H, Ls) @ X)
            worst = max(worst, abs(lhs - rhs))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 10
    record(1, "duality", ok, f"max |diff| {worst:.2e} over 150 cases, {elapsed:.2f} s")
    assert ok


# -- 2 ----------------------------------------------------------------------

def _damped_cavity(dim, gamma):
    sp = FockSpace.uniform(dim)
    a = ops.annihilation(sp)
    return SLHTriple(np.eye(1), (math.sqrt(gamma) * a,), np.zeros_like(a), sp), sp


def test_criterion_2_sme_sanity(record):
    gamma, dim, dt, T, trials = 1.0, 16, 1e-3, 3.0, 100
    model, sp = _damped_cavity(dim, gamma)
    q, _ = ops.quadratures(sp)
    rho0 = ops.ket2dm(ops.superpose([1, 1], [ops.fock_state(dim, 0), ops.fock_state(dim, 1)]))
    q0 = ops.expectation(rho0, q)

    # per-step invariants along a few full trajectories
    cfg = SimConfig(dt=dt, T=T, seed=2)
    prop = Propagator(model, [homodyne(0)], dt)
    drift, min_eig = 0.0, math.inf
    for trial in range(3):
        dW, u = trajectory_noise(cfg.seed, trial, cfg.n_steps, 1, 0, dt)
        rho = rho0
        for k in range(cfg.n_steps):
            rho, _, _ = prop.step(rho, dW[k], u[k])
            drift = max(drift, abs(np.trace(rho).real - 1.0))
            min_eig = min(min_eig, np.linalg.eigvalsh(rho)[0])

    t0 = time.perf_counter()
    cfg = SimConfig(dt=dt, T=T, seed=2, record_expectations={"q": q})
    means = np.stack([
        simulate(model, [homodyne(0)], cfg, rho0, trial=k).expectations[:, 0] for k in range(trials)
    ])
    elapsed = time.perf_counter() - t0
    checks = [500, 1000, 1500, 2000, 2500, 3000]
    zs = []
    for k in checks:
        expected = q0 * math.exp(-0.5 * gamma * k * dt)
        sigma = means[:, k].std(ddof=1) / math.sqrt(trials)
        zs.append(abs(means[:, k].mean() - expected) / sigma)
    ok = drift <= 1e-8 and min_eig >= -1e-8 and max(zs) <= 3.0 and elapsed < 120
    record(2, "sme sanity", ok,
           f"trace drift {drift:.1e}, min eig {min_eig:.1e}, max |z| {max(zs):.2f} at "
           f"{len(checks)} checkpoints, ensemble {elapsed:.1f} s")
    assert ok


# -- 3 ----------------------------------------------------------------------

def test_criterion_3_linear_equivalence(record):
    cfg = hn.RunConfig.from_dict({
        "scenario": "linear",
        "params": {"gamma": 4.0, "basis": 16, "alpha0": 1.0, "nbar0": 0.5},
        "sim": {"dt": 1e-4, "T": 1.0, "seed": 0},
        "filters": ["qekf"],
        "trials": 2,
    })
    A, Hm, Q, R, S = damped_cavity_matrices(4.0)
    step_err, rms = 0.0, []
    for trial in range(cfg.trials):
        out = hn.run_trial(cfg, trial)
        rec, res = out.record, out.results["qekf"]
        xs, Ps = kalman_bucy(A, np.zeros(2), Hm, np.zeros(1), Q, R, S, rec.dy, rec.dt,
                             rec.expectations[0], np.eye(2))
        step_err = max(step_err, np.max(np.abs(res.estimates - xs)),
                       np.max(np.abs(res.trajectory.P - Ps)))
        rms.append(math.sqrt(np.mean(np.sum(res.errors**2, axis=1))))
    ok_kb = step_err <= 1e-10
    ok_sme = max(rms) <= 1e-2
    record(3, "Kalman-Bucy", ok_kb, f"max per-step difference {step_err:.1e}")
    record(3, "SME means", ok_sme, "RMS " + ", ".join(f"{r:.2e}" for r in rms))
    assert ok_kb and ok_sme


# -- 4 ----------------------------------------------------------------------

def _scalar(F, H, Q, R, S):
    m = lambda v: np.array([[float(v)]])  # noqa: E731
    return FilterModel(1, 1, lambda x: m(F) @ x, lambda x: m(F), lambda x: m(H) @ x,
                       lambda x: m(H), lambda x: m(Q), lambda x: m(R), lambda x: m(S))


def test_criterion_4_riccati_fixed_points(record):
    dt, steps = 1e-3, 20000
    zero = np.zeros((steps, 1))
    std = run_filter(_scalar(-1, 1, 1, 1, 0), zero, dt, np.zeros(1), np.eye(1)).P[-1, 0, 0]
    rob = run_filter(_scalar(0, 1, 1, 1, 0), zero, dt, np.zeros(1), np.eye(1),
                     robust=RobustParams(1.0, 0.5)).P[-1, 0, 0]
    e1, e2 = abs(std - (math.sqrt(2) - 1)), abs(rob - math.sqrt(2))
    ok = e1 <= 1e-6 and e2 <= 1e-6
    record(4, "fixed points", ok, f"standard error {e1:.1e}, robust error {e2:.1e}")
    assert ok


# -- 5 ----------------------------------------------------------------------

def test_criterion_5_noise_inequality(record):
    rng = np.random.default_rng(5)
    worst = {}
    for name in ("kerr", "counting"):
        model = sc.build(name, basis=8).model
        vals = []
        for _ in range(20):
            x = rng.normal(scale=2.0, size=model.n)
            vals.append(check_noise_inequality(model.Q(x), model.R(x), model.S(x), model.m)[0])
        worst[name] = min(vals)
    ok = all(v >= -1e-10 for v in worst.values())
    record(5, "m Q - S R^-1 S^T", ok, ", ".join(f"{k} min eig {v:.3g}" for k, v in worst.items()))
    assert ok


# -- 6 ----------------------------------------------------------------------

ZETAS = (0.25, 0.5)


@pytest.fixture(scope="module")
def kerr_convergence():
    cfg = hn.RunConfig.from_dict({
        "scenario": "kerr",
        "params": {"n_modes": 2, "gamma": 32.0, "chi": 0.3 * math.pi, "basis": 16},
        "sim": {"dt": 2.5e-4, "T": 0.25, "seed": 6},
        "filters": [{"kind": "qekf", "name": f"qekf-z{z}", "zeta": z} for z in ZETAS],
        "reference_basis": 16,
        "trials": 50,
        "save_trajectories": False,
    })
    return hn.run_compare(cfg)


def test_criterion_6_initial_error_decays(record, kerr_convergence):
    rep = kerr_convergence
    ok = True
    details = []
    for z in ZETAS:
        res = rep.results(f"qekf-z{z}")
        frac = np.mean([r.final_error < z / 2 for r in res])
        bad = rep.divergences(f"qekf-z{z}") + sum(not np.all(np.isfinite(r.estimates)) for r in res)
        ok &= frac >= 0.9 and bad == 0
        details.append(f"zeta {z}: {frac:.0%} below zeta/2, median final "
                       f"{np.median([r.final_error for r in res]):.3f}, {bad} non-finite")
    record(6, "convergence", ok, "; ".join(details) + f" ({len(rep.trials)} trials)")
    assert ok


AMPLITUDES = (1.0, 2.0, 3.0)


@pytest.fixture(scope="module")
def amplitude_mise():
    out = {}
    for alpha in AMPLITUDES:
        cfg = hn.RunConfig.from_dict({
            "scenario": "kerr",
            "params": {"n_modes": 1, "gamma": 32.0, "chi": 0.3 * math.pi, "basis": 24,
                       "alpha0": alpha},
            "sim": {"dt": 1e-4, "T": 0.5, "seed": 60},
            "filters": ["qekf", {"kind": "sme", "basis": 8}],
            "trials": 6,
            "save_trajectories": False,
        })
        rep = hn.run_compare(cfg)
        out[alpha] = {n: rep.mise(n) for n in ("qekf", "sme(8)")}
    return out


def _mise_line(table, name):
    return ", ".join(f"alpha {a:g}: {table[a][name]:.3g}" for a in AMPLITUDES)


def test_criterion_6_truncated_sme_degrades_with_amplitude(record, amplitude_mise):
    growth = amplitude_mise[3.0]["sme(8)"] / amplitude_mise[1.0]["sme(8)"]
    ok = growth > 2.0
    record(6, "basis-8 SME growth", ok, f"x{growth:.3g} ({_mise_line(amplitude_mise, 'sme(8)')})")
    assert ok


@pytest.mark.xfail(strict=True, reason=HONEST_FAILURE)
def test_criterion_6_qekf_flat_in_amplitude(record, amplitude_mise):
    vals = [amplitude_mise[a]["qekf"] for a in AMPLITUDES]
    spread = max(vals) / min(vals)
    ok = spread < 2.0
    record(6, "qEKF amplitude spread", ok, f"x{spread:.3g} ({_mise_line(amplitude_mise, 'qekf')})")
    assert ok


# -- 7 ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def counting_report():
    cfg = hn.RunConfig.from_dict({
        "scenario": "counting",
        "sim": {"dt": 1e-3, "T": 3.0, "seed": 7},
        "filters": [{"kind": "robust-qekf", "mu": 0.1, "lam": 0.1}],
        "reference_basis": 24,
        "trials": 100,
    })
    return hn.run_compare(cfg)


def _peak_over_median(res):
    n = np.linalg.norm(res.errors, axis=1)
    return n.max() / np.median(n)


def test_criterion_7_covariance_and_finiteness(record, counting_report):
    res = counting_report.results("robust-qekf")
    floor = max(r.floor_fraction for r in res)
    min_eig = min(np.linalg.eigvalsh(r.trajectory.P).min() for r in res if not r.diverged)
    finite = all(np.all(np.isfinite(r.estimates)) for r in res)
    div = counting_report.divergences("robust-qekf")
    ok = floor <= 0.01 and min_eig > 0 and finite and div == 0
    record(7, "P PD, finite", ok, f"max floor fraction {floor:.3f}, min eig P {min_eig:.3g}, "
           f"{div} divergences in {len(res)} trials")
    assert ok


@pytest.mark.xfail(strict=True, reason=HONEST_FAILURE)
def test_criterion_7_error_within_ten_times_trial_median(record, counting_report):
    ratios = np.array([_peak_over_median(r) for r in counting_report.results("robust-qekf")])
    ok = ratios.max() <= 10.0
    record(7, "peak/median (P0 = I/2)", ok,
           f"worst {ratios.max():.1f}, {np.sum(ratios > 10)} of {len(ratios)} trials above 10")
    assert ok


# -- 8 ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def timing():
    t0 = time.perf_counter()
    table = hn.bench_step(bases=(8, 16, 32, 64), modes=(1,), repeats=7, points=[(20, 2)])
    return table, time.perf_counter() - t0


def test_criterion_8_cost_ratio(record, timing):
    table, elapsed = timing
    ratio = table.row(20, 2).ratio
    ok = ratio >= 50 and elapsed < 300
    record(8, "t_SME/t_qEKF at N_s=20, 2 modes", ok, f"{ratio:.0f} (benchmark {elapsed:.0f} s)")
    assert ok


@pytest.mark.xfail(strict=True, reason=HONEST_FAILURE)
def test_criterion_8_single_mode_slope(record, timing):
    table, _ = timing
    slope = table.slope(1)
    ok = 2.2 <= slope <= 3.8
    times = ", ".join(f"{r.basis}: {r.t_sme * 1e6:.0f} us" for r in table.rows if r.modes == 1)
    record(8, "single-mode log-log slope", ok, f"{slope:.2f} ({times})")
    assert ok


# -- 9 ----------------------------------------------------------------------

def test_criterion_9_jacobians(record):
    rng = np.random.default_rng(9)
    worst = 0.0
    for name in ("kerr", "counting"):
        model = sc.build(name, basis=8).model
        for _ in range(20):
            x = rng.normal(scale=1.5, size=model.n)
            worst = max(worst, np.max(np.abs(model.F(x) - central_jacobian(model.f, x))),
                        np.max(np.abs(model.H(x) - central_jacobian(model.h, x))))
    ok = worst <= 1e-6
    record(9, "finite differences", ok, f"max |analytic - FD| {worst:.1e}")
    assert ok


# -- 10 ---------------------------------------------------------------------

def test_criterion_10_determinism(record, tmp_path):
    cfg = hn.RunConfig.from_dict({
        "scenario": "kerr",
        "params": {"n_modes": 2, "basis": 6},
        "sim": {"dt": 1e-3, "T": 0.05, "seed": 10},
        "filters": ["qekf", "qkf-linearized", {"kind": "robust-qekf"}, {"kind": "sme", "basis": 4}],
        "trials": 3,
    })
    a = hn.emit_outputs(hn.run_compare(cfg), tmp_path / "a") / "metrics.csv"
    b = hn.emit_outputs(hn.run_compare(cfg), tmp_path / "b") / "metrics.csv"
    ok = a.read_bytes() == b.read_bytes()
    record(10, "metrics.csv", ok, "byte-identical" if ok else "differs")
    assert ok

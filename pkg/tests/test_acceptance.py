"""One test per acceptance criterion; each records a PASS/FAIL line for the run summary."""

import math
import time

import numpy as np

from symopt import matcore
from symopt.bench.diagnostics import router_diagnostics
from symopt.bench.toy import ToyModelConfig
from symopt.cli import main
from symopt.optim import OptimConfig, OptimState, step
from symopt.suites import (convergence_suite, equivariance_suite, inv_sqrt_residuals,
                           polar_residuals)
from symopt.polariter import polar_express_table
from symopt.updates import (LayerGeometry, RowScaleSpec, SpectralMapSpec, UpdateSpec,
                            apply_update, nuclear_scaled_polar_update, sign_diag_lift_update)

from twins import twin_losses

LM_HEAD_CLASSES = ("RowNorm", "RightSpectral", "HybridRowThenSpectral", "HybridSpectralThenRow")
ROUTER_CLASSES = ("RowNorm", "LeftSpectral", "HybridSpectralThenRow")


def test_criterion_01_polar_oracle_baseline_cubic(acceptance):
    t0 = time.perf_counter()
    worst = polar_residuals(None, 12, 500, seed=0)
    elapsed = time.perf_counter() - t0
    value = max(worst.values())
    ok = value <= 1e-6 and elapsed < 10.0
    acceptance(1, ok, f"baseline cubic, 12 steps: worst residual/sqrt(rank) {value:.3g} "
                      f"(threshold 1e-6), {elapsed:.1f}s")
    assert ok, f"per-shape worst residuals {worst}"


def test_criterion_02_inverse_sqrt_oracle(acceptance):
    t0 = time.perf_counter()
    long_run = inv_sqrt_residuals(None, 12, 0.0, 50, seed=0)
    short_run = inv_sqrt_residuals(polar_express_table(5, lower=1e-2), 5, 1e-7, 50, seed=0)
    elapsed = time.perf_counter() - t0
    res = max(v[0] for v in long_run.values())
    rel = max(v[1] for v in short_run.values())
    ok = res <= 1e-6 and rel <= 1e-3 and elapsed < 10.0
    acceptance(2, ok, f"12-step residual {res:.3g} (<= 1e-6), 5-step relative error {rel:.3g} "
                      f"(<= 1e-3), {elapsed:.1f}s")
    assert ok


def test_criterion_03_equivariance_suite(acceptance):
    t0 = time.perf_counter()
    checks = equivariance_suite(trials=100, seed=0)
    elapsed = time.perf_counter() - t0
    bad = [c for c in checks if c.failed]
    worst = max(c.value for c in checks if c.name == "equivariance")
    controls = [c.value for c in checks if c.name == "negative_control"]
    ok = not bad and elapsed < 60.0
    acceptance(3, ok, f"{len(checks)} checks, worst residual {worst:.3g}, negative controls "
                      f"{min(controls):.3g}+, {elapsed:.1f}s")
    assert ok, [(c.detail, c.value) for c in bad]


def _spec(tag, cls):
    return UpdateSpec(LayerGeometry(tag), cls, SpectralMapSpec.damped(1e-8),
                      RowScaleSpec.smoothed(1e-8))


def test_criterion_04_quotient_horizontality(acceptance):
    rng = np.random.default_rng(4)
    pairs = [("LMHeadQuotient", c) for c in LM_HEAD_CLASSES]
    pairs += [("RouterQuotient", c) for c in ROUTER_CLASSES]
    worst_h = 0.0
    for tag, cls in pairs:
        spec = _spec(tag, cls)
        for _ in range(1000):
            m, n = rng.integers(2, 12, size=2)
            U = apply_update(rng.standard_normal((m, n)) * 10.0 ** rng.uniform(-3, 3), spec)
            worst_h = max(worst_h, float(np.abs(U.sum(axis=0)).max() / np.abs(U).max()))
    worst_drift = 0.0
    for tag, cls in pairs:
        W0 = rng.standard_normal((8, 6))
        cfg = OptimConfig(lr0=0.05, update=_spec(tag, cls))
        W, st = W0.copy(), OptimState.zeros_like(W0)
        for _ in range(200):
            W, _ = step(W, st, rng.standard_normal(W.shape), cfg)
        drift = np.abs(W.sum(axis=0) - W0.sum(axis=0)).max() / np.abs(W0).max()
        worst_drift = max(worst_drift, float(drift))
    ok = worst_h <= 1e-12 and worst_drift <= 1e-8
    acceptance(4, ok, f"worst relative column sum {worst_h:.3g} (<= 1e-12), "
                      f"worst 200-step drift {worst_drift:.3g} (<= 1e-8)")
    assert ok


def test_criterion_05_nuclear_identities(acceptance):
    rng = np.random.default_rng(5)
    worst = 0.0
    for rank in (1, 2, 4, 8):
        for _ in range(25):
            D = rng.standard_normal((12, rank)) @ rng.standard_normal((rank, 10))
            nuc = matcore.nuclear_norm(D)
            for side in ("full", "left", "right"):
                T = nuclear_scaled_polar_update(D, side=side)
                worst = max(worst, abs(np.sum(D * T) - nuc ** 2) / nuc ** 2,
                            abs(np.sum(T * T) - rank * nuc ** 2) / (rank * nuc ** 2))
    ok = worst <= 1e-9
    acceptance(5, ok, f"worst relative identity error {worst:.3g} (<= 1e-9)")
    assert ok


def test_criterion_06_convergence_suite(acceptance):
    t0 = time.perf_counter()
    checks = convergence_suite(steps=1000, seed=0)
    elapsed = time.perf_counter() - t0
    bad = [c for c in checks if c.failed]
    ok = not bad and elapsed < 60.0
    acceptance(6, ok, f"{len(checks)} checks, {len(bad)} failing, {elapsed:.1f}s")
    assert ok, [(c.detail, c.value) for c in bad]


def test_criterion_07_sign_lift(acceptance):
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(100):
        D = rng.standard_normal(tuple(rng.integers(1, 20, size=2)))
        D[D == 0.0] = 1.0
        out = sign_diag_lift_update(D)
        mismatches += int(out.tobytes() != np.sign(D).tobytes())
    acceptance(7, mismatches == 0, f"{mismatches} of 100 matrices differ from the sign pattern")
    assert mismatches == 0


def test_criterion_08_swiglu_twins(acceptance):
    cfg = ToyModelConfig()
    base_p, twin_p = twin_losses(cfg, rotate=False)
    base_pr, twin_pr = twin_losses(cfg, rotate=True)
    neg_base, neg_twin = twin_losses(cfg, rotate=True, adamw_gate_up=True)
    sym = max(np.abs(base_p - twin_p).max(), np.abs(base_pr - twin_pr).max())
    neg = np.abs(neg_base - neg_twin).max()
    ok = sym <= 1e-6 and neg > 1e-3
    acceptance(8, ok, f"symmetric stack max loss gap {sym:.3g} (<= 1e-6), "
                      f"coordinate-wise gate/up twin gap {neg:.3g} (> 1e-3)")
    assert ok


def test_criterion_09_router_closed_forms(acceptance):
    errs = []
    for E in (2, 4, 8):
        uniform = router_diagnostics(1e-3 * np.eye(E), 1)["load_balancing_loss"]
        collapsed = np.zeros((32, E))
        collapsed[:, 0] = 1000.0
        col = router_diagnostics(collapsed, 1)["load_balancing_loss"]
        z = router_diagnostics(np.zeros((1, E)), 1)["z_loss"]
        errs += [abs(uniform - 1.0), abs(col - E), abs(z - math.log(E) ** 2)]
    worst = max(errs)
    acceptance(9, worst <= 1e-12, f"worst closed-form error {worst:.3g} (<= 1e-12)")
    assert worst <= 1e-12


def test_criterion_10_determinism_and_resume(acceptance, tmp_path):
    from pathlib import Path
    cfg = str(Path(__file__).resolve().parent.parent / "configs" / "dense.ini")
    a, b, r = tmp_path / "a", tmp_path / "b", tmp_path / "r"
    codes = [main(["train", "--config", cfg, "--output", str(a)]),
             main(["train", "--config", cfg, "--output", str(b)])]
    identical = (a / "train_log.csv").read_bytes() == (b / "train_log.csv").read_bytes()
    codes.append(main(["train", "--config", cfg, "--output", str(r),
                       "--resume", str(a / "checkpoint_000100.txt")]))
    full = (a / "train_log.csv").read_text().splitlines()
    resumed = (r / "train_log.csv").read_text().splitlines()
    matches = resumed[1:] == [ln for ln in full[1:] if int(ln.split(",")[0]) > 100]
    ok = codes == [0, 0, 0] and identical and matches
    acceptance(10, ok, f"byte-identical logs: {identical}, resume from step 100 matches: {matches}")
    assert ok

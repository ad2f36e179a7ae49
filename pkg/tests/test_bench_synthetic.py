import csv
import math

import numpy as np
import pytest

from symopt.bench.synthetic import (FAMILIES, SyntheticLoss, TrialSpec, calibrate_gamma,
                                    geometry_diagnostics, loss_and_grad, run_convergence_trial,
                                    write_trace_csv)
from symopt.errors import InvalidConfig, ShapeError, ZeroDirection
from symopt.suites import aniso_loss, family_spec
from symopt.symtest import random_orthogonal
from symopt.updates import RowScaleSpec


def test_loss_examples():
    W_star = np.random.default_rng(0).standard_normal((2, 2))
    loss = SyntheticLoss.quadratic_fro(W_star, 1.0)
    f, G = loss_and_grad(loss, W_star)
    assert f == 0.0 and not np.any(G)
    f, G = loss_and_grad(loss, W_star + np.diag([3.0, 4.0]))
    assert f == pytest.approx(12.5) and np.linalg.norm(G) == pytest.approx(5.0)
    with pytest.raises(ShapeError):
        loss_and_grad(loss, np.zeros((3, 2)))
    with pytest.raises(InvalidConfig):
        SyntheticLoss("Cubic")
    with pytest.raises(InvalidConfig):
        SyntheticLoss.quadratic_aniso(W_star, -np.eye(2))


def _losses():
    rng = np.random.default_rng(1)
    W_star = rng.standard_normal((5, 3))
    X = rng.standard_normal((8, 2)) @ rng.standard_normal((2, 5))
    return [SyntheticLoss.quadratic_fro(W_star, 3.0),
            SyntheticLoss.aniso_with_spectrum(W_star, 10.0, 1.0, 2),
            SyntheticLoss.low_rank_factor(X, rng.standard_normal((8, 3)))]


@pytest.mark.parametrize("loss", _losses(), ids=lambda l: l.kind)
def test_gradient_matches_central_differences(loss):
    rng = np.random.default_rng(3)
    W, Delta = rng.standard_normal(loss.shape), rng.standard_normal(loss.shape)
    h = 1e-5
    fd = (loss_and_grad(loss, W + h * Delta)[0] - loss_and_grad(loss, W - h * Delta)[0]) / (2 * h)
    g = float(np.sum(loss_and_grad(loss, W)[1] * Delta))
    assert fd == pytest.approx(g, rel=1e-6)


def test_aniso_spectrum_endpoints():
    loss = aniso_loss()
    w = np.linalg.eigvalsh(loss.A)
    assert w[0] == pytest.approx(1.0) and w[-1] == pytest.approx(10.0)


def test_low_rank_factor_minimum():
    loss = _losses()[2]
    W_ls = np.linalg.lstsq(loss.X, loss.Y, rcond=None)[0]
    assert loss_and_grad(loss, W_ls)[0] == pytest.approx(loss.f_star, rel=1e-9)
    assert loss.mu > 0 and loss.L >= loss.mu


def test_identity_step_closed_form():
    W_star = np.random.default_rng(4).standard_normal((4, 3))
    loss = SyntheticLoss.quadratic_fro(W_star, 1.0)
    rep = run_convergence_trial(loss, TrialSpec("spectral_identity"), 1.0, 1,
                                W_star + np.ones((4, 3)))
    assert rep.f[-1] <= 1e-20
    assert rep.rho == pytest.approx(0.0) and rep.violations == 0


def test_nuclear_polar_rank_offset():
    rng = np.random.default_rng(5)
    W_star = rng.standard_normal((8, 6))
    L, rbar = 2.0, 3
    loss = SyntheticLoss.quadratic_fro(W_star, L)
    W0 = W_star + rng.standard_normal((8, rbar)) @ rng.standard_normal((rbar, 6))
    rep = run_convergence_trial(loss, TrialSpec("nuclear_polar"), 1.0 / (L * rbar), 1000, W0)
    assert rep.violations == 0
    assert rep.rank[0] == rbar


@pytest.mark.parametrize("family", FAMILIES)
def test_every_family_has_no_violations(family):
    loss = aniso_loss()
    W0 = loss.W_star + np.random.default_rng(6).standard_normal(loss.shape)
    gamma, rep = calibrate_gamma(loss, family_spec(family), W0, 300)
    assert rep.admissible and gamma < rep.gamma_max
    assert rep.descent_violations == 0 and rep.ratio_violations == 0
    assert rep.rho < 1.0
    assert rep.f[-1] < rep.f[0]


def test_negative_control_step_too_large():
    loss = aniso_loss()
    top = np.linalg.eigh(loss.A)[1][:, -1:]
    W0 = loss.W_star + top @ np.ones((1, loss.shape[1]))
    rep = run_convergence_trial(loss, TrialSpec("spectral_identity"), 1.1 * 2.0 / loss.L, 50, W0)
    assert not rep.admissible and rep.violations > 0
    assert rep.f[-1] > rep.f[0]


def test_trial_validation():
    loss = aniso_loss()
    with pytest.raises(InvalidConfig):
        run_convergence_trial(loss, TrialSpec(), 0.0, 1, loss.W_star)
    with pytest.raises(InvalidConfig):
        TrialSpec("adam")
    with pytest.raises(InvalidConfig):
        TrialSpec("row_bounded", lo=2.0, hi=1.0)


def test_trace_csv(tmp_path):
    loss = aniso_loss()
    rep = run_convergence_trial(loss, TrialSpec(), 0.05, 5, loss.W_star + 1.0)
    path = tmp_path / "trace.csv"
    write_trace_csv(path, rep)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["step", "f", "grad_fro", "nuclear", "rank", "bound", "ratio"]
    assert len(rows) == 7 and float(rows[1][1]) == rep.f[0]
    assert "violations=0" in rep.summary()


# ---------------------------------------------------------------- geometry

def test_geometry_orthogonal():
    d = geometry_diagnostics(random_orthogonal(5, 0))
    assert d["spectral_advantage"] == pytest.approx(1.0)
    assert d["stable_rank"] == pytest.approx(5.0)


def test_geometry_rank_one():
    u = np.array([1.0, 0.0, 2.0, 0.0])
    v = np.array([3.0, 4.0])
    d = geometry_diagnostics(np.outer(u, v))
    assert d["spectral_advantage"] == pytest.approx(np.linalg.norm(u) * 5.0)
    assert d["active_row_support"] == 2
    assert d["stable_rank"] == pytest.approx(1.0)


def test_geometry_zero_raises():
    with pytest.raises(ZeroDirection):
        geometry_diagnostics(np.zeros((2, 2)))


@pytest.mark.parametrize("eps", [1e-8, 1e-2, 1.0])
def test_rowhyb_alignment_lower_bound(eps):
    rng = np.random.default_rng(7)
    for t in range(100):
        G = rng.standard_normal((6, 4)) * 10.0 ** rng.uniform(-3, 3)
        d = geometry_diagnostics(G, eps=eps)
        assert d["rowhyb_alignment"] >= eps
        assert d["hybrid_alignment"] > 0.0


def test_geometry_accepts_bounded_eta():
    G = np.random.default_rng(8).standard_normal((4, 3))
    d = geometry_diagnostics(G, eta=RowScaleSpec.bounded(0.5, 1.0))
    assert d["rowhyb_rank"] == 3 and math.isfinite(d["rowhyb_alignment"])

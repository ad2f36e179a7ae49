import json
import math
from dataclasses import replace

import numpy as np
import pytest

from symopt.bench.toy import (RunConfig, ToyModelConfig, default_optimizers, forward_backward,
                              format_checkpoint, init_params, param_class, parse_checkpoint,
                              sample_batch, swiglu_forward, symmetry_transform, toy_train,
                              write_diagnostics_json, write_log_csv, zipf_probs)
from symopt.errors import InvalidConfig, ShapeError
from symopt.optim import AdamWConfig
from symopt.symtest import random_orthogonal, random_permutation

from twins import SMALL, twin_losses


def test_swiglu_examples():
    one = np.ones((1, 1))
    out = swiglu_forward(np.ones(1), one, 2.0 * one, 3.0 * one)
    assert out[0] == pytest.approx(6.0 / (1.0 + math.exp(-1.0)), rel=1e-15)
    rng = np.random.default_rng(0)
    Wg, Wu, Wd = rng.standard_normal((5, 3)), rng.standard_normal((5, 3)), rng.standard_normal((3, 5))
    assert np.array_equal(swiglu_forward(np.zeros(3), Wg, Wu, Wd), np.zeros(3))
    with pytest.raises(ShapeError):
        swiglu_forward(np.zeros(4), Wg, Wu, Wd)


def test_swiglu_hidden_permutation_invariance():
    rng = np.random.default_rng(1)
    for t in range(20):
        Wg, Wu, Wd = rng.standard_normal((7, 4)), rng.standard_normal((7, 4)), rng.standard_normal((4, 7))
        x = rng.standard_normal(4)
        P = random_permutation(7, t)
        a = swiglu_forward(x, Wg, Wu, Wd)
        b = swiglu_forward(x, P @ Wg, P @ Wu, Wd @ P.T)
        assert np.abs(a - b).max() <= 1e-12


def test_model_config_validation():
    with pytest.raises(InvalidConfig):
        ToyModelConfig(vocab=0)
    with pytest.raises(InvalidConfig):
        ToyModelConfig(experts=2, topk=3)
    with pytest.raises(InvalidConfig):
        ToyModelConfig(optimizers={"bias": AdamWConfig()})
    with pytest.raises(InvalidConfig):
        RunConfig(total_steps=0)


def test_zipf_and_batches_are_seeded():
    p = zipf_probs(10, 1.1)
    assert p.sum() == pytest.approx(1.0) and np.all(np.diff(p) < 0)
    a = sample_batch(SMALL, 3, 5)
    assert np.array_equal(a, sample_batch(SMALL, 3, 5))
    assert not np.array_equal(a, sample_batch(SMALL, 3, 6))
    assert not np.array_equal(a, sample_batch(SMALL, 3, 5, stream=2))
    assert a.min() >= 0 and a.max() < SMALL.vocab


def test_param_classes():
    assert param_class("expert2.gate") == "gate_up"
    assert param_class("down") == "down"
    assert param_class("router") == "router"


@pytest.mark.parametrize("cfg", [
    SMALL,
    replace(SMALL, experts=3, topk=2, lb_weight=0.1, z_weight=0.01),
], ids=["dense", "moe"])
def test_gradients_match_finite_differences(cfg):
    params = init_params(cfg, 0)
    tokens = sample_batch(cfg, 0, 0)
    _, grads = forward_backward(params, cfg, tokens)
    rng = np.random.default_rng(2)
    h = 1e-6
    for name, W in params.items():
        Delta = rng.standard_normal(W.shape)
        plus = dict(params, **{name: W + h * Delta})
        minus = dict(params, **{name: W - h * Delta})
        fd = (forward_backward(plus, cfg, tokens, False)[0]["loss"]
              - forward_backward(minus, cfg, tokens, False)[0]["loss"]) / (2 * h)
        g = float(np.sum(grads[name] * Delta))
        assert fd == pytest.approx(g, rel=1e-6, abs=1e-9), name


def test_symmetry_transform_preserves_function():
    cfg = replace(SMALL, experts=2, topk=1)
    params = init_params(cfg, 1)
    perm = np.random.default_rng(3).permutation(cfg.d_ff)
    rot = random_orthogonal(cfg.d_model, 4)
    tokens = sample_batch(cfg, 1, 0)
    a = forward_backward(params, cfg, tokens, False)[0]["loss"]
    b = forward_backward(symmetry_transform(params, perm, rot), cfg, tokens, False)[0]["loss"]
    assert abs(a - b) <= 1e-12


def test_adamw_everywhere_reduces_loss():
    opts = {c: AdamWConfig(lr0=0.01) for c in ("embedding", "gate_up", "down", "head")}
    res = toy_train(replace(SMALL, optimizers=opts), RunConfig(total_steps=100, log_interval=10))
    val = [r["loss"] for r in res.rows if r["split"] == "val"]
    assert val[-1] < val[0]
    train = [r["loss"] for r in res.rows if r["split"] == "train"]
    assert np.mean(train[-10:]) < np.mean(train[:10])


def test_router_and_head_conservation():
    cfg = replace(SMALL, experts=4, topk=2, lb_weight=0.01)
    res = toy_train(cfg, RunConfig(total_steps=200, log_interval=50))
    rows = [r for r in res.rows if r["split"] == "train"]
    assert max(r["drift_router"] for r in rows) <= 1e-8
    assert max(r["drift_head"] for r in rows) <= 1e-8


def test_missing_optimizer_assignment():
    with pytest.raises(InvalidConfig):
        toy_train(replace(SMALL, optimizers={"embedding": AdamWConfig()}), RunConfig(total_steps=1))


@pytest.mark.parametrize("rotate", [False, True], ids=["perm", "perm+rot"])
def test_symmetric_stack_twins_agree(rotate):
    base, twin = twin_losses(rotate=rotate)
    assert len(base) == 100
    assert np.abs(base - twin).max() <= 1e-6


def test_coordinatewise_gate_up_twin_diverges():
    base, twin = twin_losses(adamw_gate_up=True)
    assert np.abs(base - twin).max() > 1e-3


def test_checkpoint_text_round_trip():
    res = toy_train(SMALL, RunConfig(total_steps=3, log_interval=1))
    text = format_checkpoint(3, res.params, res.states)
    step, params, states = parse_checkpoint(text)
    assert step == 3 and sorted(params) == sorted(res.params)
    for n in params:
        assert np.array_equal(params[n], res.params[n])
        assert np.array_equal(states[n].momentum, res.states[n].momentum)
    assert format_checkpoint(step, params, states) == text
    with pytest.raises(InvalidConfig):
        parse_checkpoint("nope\n")


def test_resume_matches_uninterrupted(tmp_path):
    cfg = replace(SMALL, experts=2, topk=1)
    full = toy_train(cfg, RunConfig(total_steps=20, log_interval=5, output_dir=str(tmp_path),
                                    checkpoint_interval=10))
    resumed = toy_train(cfg, RunConfig(total_steps=20, log_interval=5,
                                       resume=str(tmp_path / "checkpoint_000010.txt")))
    tail = [r for r in full.rows if r["step"] > 10]
    assert tail == resumed.rows


def test_log_and_json_outputs(tmp_path):
    cfg = replace(SMALL, experts=2, topk=1)
    res = toy_train(cfg, RunConfig(total_steps=10, log_interval=5))
    write_log_csv(tmp_path / "log.csv", res)
    write_diagnostics_json(tmp_path / "d.json", res, {"seed": 0})
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0].startswith("step,split,loss,ce,lr")
    assert len(lines) == 1 + 10 + 2
    doc = json.loads((tmp_path / "d.json").read_text())
    assert doc["steps"] == [5, 10]
    assert len(doc["series"]["load_balancing_loss"]) == 2
    assert doc["meta"] == {"seed": 0}

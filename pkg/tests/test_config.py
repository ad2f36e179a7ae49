import pytest

from symopt.config import (ConfigError, build_solver, build_train, load_config,
                           parse_config_text)
from symopt.optim import AdamWConfig, OptimConfig

DENSE = """
[run]
seed = 3
total_steps = 40

[model]
vocab = 16
d_model = 8

[solver]
kind = iterative
coeffs = polar_express
steps = 5
lower = 1e-2

[optim.embedding]
update = RowNorm
lr0 = 0.05

[optim.gate_up]
update = HybridRowThenSpectral
schedule = StableDecay
stable_frac = 0.5

[optim.down]
optimizer = adamw
lr0 = 3e-3

[optim.head]
update = RightSpectral
rowscale = bounded
row_lo = 0.5
row_hi = 2.0
"""


def test_build_train_reads_every_section():
    model, run = build_train(parse_config_text(DENSE, "dense.ini"))
    assert (model.vocab, model.d_model, model.d_ff) == (16, 8, 32)
    assert run.seed == 3 and run.total_steps == 40 and run.output_dir == "out"
    emb = model.optimizers["embedding"]
    assert isinstance(emb, OptimConfig) and emb.lr0 == 0.05
    assert emb.update.solver.kind == "iterative" and emb.update.solver.steps == 5
    assert model.optimizers["gate_up"].schedule.stable_frac == 0.5
    assert isinstance(model.optimizers["down"], AdamWConfig)
    head = model.optimizers["head"].update
    assert head.geometry.tag == "LMHeadQuotient" and head.rowscale.hi == 2.0


def test_cli_flags_win():
    _, run = build_train(parse_config_text(DENSE), seed=9, output_dir="elsewhere")
    assert run.seed == 9 and run.output_dir == "elsewhere"


def test_case_sensitive_keys():
    cfg = parse_config_text("[converge]\nL = 3\n")
    assert cfg.section("converge").get("L", float) == 3.0


def _error(text):
    with pytest.raises(ConfigError) as info:
        build_train(parse_config_text(text, "bad.ini"))
    return info.value


def test_missing_seed_is_an_error():
    err = _error("[run]\ntotal_steps = 5\n")
    assert "seed" in str(err) and str(err).startswith("bad.ini:1")


def test_errors_carry_line_numbers():
    err = _error("[run]\nseed = 0\n\n[optim.head]\nlr0 = fast\n")
    assert err.line == 5 and "lr0" in str(err)
    err = _error("[run]\nseed = 0\ncolour = blue\n")
    assert err.line == 3 and "unknown key" in str(err)
    err = _error("[run]\nseed = 0\n[optim.bias]\nlr0 = 1\n")
    assert err.line == 3
    err = _error("[run]\nseed = 0\n[optim.router]\nupdate = RightSpectral\n")
    assert err.line == 4
    err = _error("[run]\nseed = 0\n[model]\nexperts = 2\ntopk = 3\n")
    assert err.line == 3


def test_syntax_errors():
    with pytest.raises(ConfigError):
        parse_config_text("seed = 0\n")
    with pytest.raises(ConfigError):
        parse_config_text("[run]\nseed = 0\nseed = 1\n")


def test_solver_coefficient_tables():
    s = build_solver(parse_config_text("[solver]\nkind = iterative\nsteps = 2\n"
                                       "coeffs = 1.5, -0.5, 0; 2, -1, 0\n"))
    assert s.kind == "iterative"
    with pytest.raises(ConfigError):
        build_solver(parse_config_text("[solver]\ncoeffs = 1, 2\n"))
    with pytest.raises(ConfigError):
        build_solver(parse_config_text("[solver]\nkind = magic\n"))


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")

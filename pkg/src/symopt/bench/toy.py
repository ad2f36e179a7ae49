"""Desk-scale toy language model: embedding, one SwiGLU block, optional top-k MoE, LM head.

Everything is plain numpy with hand-written backpropagation. The model has no
per-coordinate vector parameters (no norms, no biases), so every trainable
tensor is a matrix with a well-defined symmetry class.
"""

import csv
import json
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ..errors import InvalidConfig, InvalidInput, ShapeError
from ..matcore import format_matrix, parse_matrix
from ..optim import (AdamState, AdamWConfig, OptimConfig, OptimState, adamw_config_step,
                     format_states, parse_states, step as matrix_step)
from ..updates import RowScaleSpec, UpdateSpec
from .diagnostics import (logit_diagnostics, logsumexp_rows, router_diagnostics, softmax_rows,
                          topk_indices)
from .synthetic import geometry_diagnostics

PARAM_CLASSES = ("embedding", "gate_up", "down", "head", "router", "vectors")
CLASS_GEOMETRY = {"embedding": "LPRO", "gate_up": "LPRO", "down": "TransposedLPRO",
                  "head": "LMHeadQuotient", "router": "RouterQuotient"}


def _sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def silu(u):
    return u * _sigmoid(u)


def swiglu_forward(x, W_gate, W_up, W_down):
    """``W_down (silu(W_gate x) ⊙ (W_up x))``; ``x`` may be a vector or a (tokens, d) batch."""
    x = np.asarray(x, dtype=np.float64)
    W_gate, W_up, W_down = (np.asarray(w, dtype=np.float64) for w in (W_gate, W_up, W_down))
    if W_gate.shape != W_up.shape or W_down.shape != W_gate.shape[::-1]:
        raise ShapeError(f"SwiGLU shapes gate {W_gate.shape}, up {W_up.shape}, "
                         f"down {W_down.shape} are inconsistent")
    if x.shape[-1] != W_gate.shape[1]:
        raise ShapeError(f"input width {x.shape[-1]} != model dim {W_gate.shape[1]}")
    return (silu(x @ W_gate.T) * (x @ W_up.T)) @ W_down.T


def _swiglu_fwd_cache(h, Wg, Wu, Wd):
    u = h @ Wg.T
    g = h @ Wu.T
    s = _sigmoid(u)
    a = u * s * g
    return a @ Wd.T, (h, u, g, s, a)


def _swiglu_bwd(dout, cache, Wg, Wu, Wd):
    h, u, g, s, a = cache
    dWd = dout.T @ a
    da = dout @ Wd
    dg = da * u * s
    du = da * g * (s + u * s * (1.0 - s))
    return du @ Wg + dg @ Wu, du.T @ h, dg.T @ h, dWd


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class ToyModelConfig:
    vocab: int = 32
    d_model: int = 16
    d_ff: int = 32
    experts: int = 0
    topk: int = 1
    seq_len: int = 16
    batch: int = 8
    zipf_exponent: float = 1.1
    bigram_strength: float = 0.7
    lb_weight: float = 0.0
    z_weight: float = 0.0
    optimizers: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("vocab", "d_model", "d_ff", "seq_len", "batch"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be a positive integer")
        if self.experts < 0:
            raise InvalidConfig("experts must be nonnegative")
        if self.experts > 0 and not 1 <= self.topk <= self.experts:
            raise InvalidConfig("top-k must lie in [1, experts]")
        if not 0.0 <= self.bigram_strength <= 1.0:
            raise InvalidConfig("bigram_strength must lie in [0, 1]")
        if self.lb_weight < 0.0 or self.z_weight < 0.0:
            raise InvalidConfig("auxiliary loss weights must be nonnegative")
        for cls, opt in self.optimizers.items():
            if cls not in PARAM_CLASSES:
                raise InvalidConfig(f"unknown parameter class {cls!r}")
            if not isinstance(opt, (OptimConfig, AdamWConfig)):
                raise InvalidConfig(f"optimizer for {cls} must be an OptimConfig or AdamWConfig")


def default_optimizers(total_steps=None):
    """Row-norm on vocabulary matrices and router, row-then-right-spectral hybrid on the MLP."""
    row = RowScaleSpec.smoothed(1e-8)
    mk = lambda cls, lr: OptimConfig(lr0=lr, momentum_beta=0.9, update=UpdateSpec(cls=cls, rowscale=row))
    return {"embedding": mk("RowNorm", 0.05), "head": mk("RowNorm", 0.05),
            "gate_up": mk("HybridRowThenSpectral", 0.02), "down": mk("HybridRowThenSpectral", 0.02),
            "router": mk("RowNorm", 0.02)}


@dataclass(frozen=True)
class RunConfig:
    total_steps: int = 200
    seed: int = 0
    output_dir: Optional[str] = None
    log_interval: int = 10
    checkpoint_interval: int = 0
    resume: Optional[str] = None

    def __post_init__(self):
        if int(self.total_steps) != self.total_steps or self.total_steps < 1:
            raise InvalidConfig("total_steps must be a positive integer")
        if self.log_interval < 1 or self.checkpoint_interval < 0:
            raise InvalidConfig("log_interval must be >= 1 and checkpoint_interval >= 0")


# ------------------------------------------------------------------- model

def param_class(name):
    base = name.split(".")[-1]
    return {"embed": "embedding", "gate": "gate_up", "up": "gate_up", "down": "down",
            "head": "head", "router": "router"}[base]


def init_params(cfg, seed):
    rng = np.random.default_rng([seed, 0])
    v, d, f = cfg.vocab, cfg.d_model, cfg.d_ff

    def gauss(m, n, fan_in):
        return rng.standard_normal((m, n)) / np.sqrt(fan_in)

    p = {"embed": rng.standard_normal((v, d)), "gate": gauss(f, d, d), "up": gauss(f, d, d),
         "down": gauss(d, f, f)}
    if cfg.experts:
        p["router"] = gauss(cfg.experts, d, d)
        for j in range(cfg.experts):
            p[f"expert{j}.gate"] = gauss(f, d, d)
            p[f"expert{j}.up"] = gauss(f, d, d)
            p[f"expert{j}.down"] = gauss(d, f, f)
    p["head"] = gauss(v, d, d)
    return p


def symmetry_transform(params, perm=None, rot=None):
    """Apply a hidden-unit permutation ``perm`` (d_ff) and residual rotation ``rot`` (d_model).

    The network function is unchanged: SwiGLU blocks see ``(P W_gate Rᵀ, P W_up Rᵀ,
    R W_down Pᵀ)`` and every matrix that reads the residual stream gets ``·Rᵀ``.
    """
    out = {}
    for name, W in params.items():
        base = name.split(".")[-1]
        if base in ("gate", "up"):
            W = W[perm] if perm is not None else W
            W = W @ rot.T if rot is not None else W
        elif base == "down":
            W = W[:, perm] if perm is not None else W
            W = rot @ W if rot is not None else W
        elif rot is not None:
            W = W @ rot.T
        out[name] = W.copy()
    return out


def zipf_probs(vocab, exponent):
    w = 1.0 / np.arange(1, vocab + 1) ** exponent
    return w / w.sum()


def sample_batch(cfg, seed, index, stream=1):
    """Token batch number ``index``; depends only on ``(seed, stream, index)`` so resumption is exact.

    Training batches use stream 1; the held-out batch is stream 2.
    """
    succ = np.random.default_rng([seed, 3]).permutation(cfg.vocab)
    probs = zipf_probs(cfg.vocab, cfg.zipf_exponent)
    rng = np.random.default_rng([seed, stream, index])
    B, T = cfg.batch, cfg.seq_len + 1
    draws = rng.choice(cfg.vocab, size=(B, T), p=probs)
    follow = rng.random((B, T)) < cfg.bigram_strength
    toks = draws.copy()
    for t in range(1, T):
        toks[:, t] = np.where(follow[:, t], succ[toks[:, t - 1]], draws[:, t])
    return toks


def forward_backward(params, cfg, tokens, need_grad=True):
    """Mean cross-entropy plus weighted auxiliary router losses, and parameter gradients."""
    tokens = np.asarray(tokens)
    if tokens.ndim != 2 or tokens.shape[1] < 2:
        raise InvalidInput("tokens must be (batch, length >= 2)")
    X = tokens[:, :-1].ravel()
    Y = tokens[:, 1:].ravel()
    N = X.size
    E, Wh = params["embed"], params["head"]
    h0 = E[X]
    mlp_out, mlp_cache = _swiglu_fwd_cache(h0, params["gate"], params["up"], params["down"])
    h1 = h0 + mlp_out
    h2 = h1
    aux = {}
    moe = None
    if cfg.experts:
        Wr = params["router"]
        z = h1 @ Wr.T
        sel = topk_indices(z, cfg.topk)
        w = softmax_rows(np.take_along_axis(z, sel, axis=1))
        h2 = h1.copy()
        ys = {}
        for j in range(cfg.experts):
            rows, slots = np.nonzero(sel == j)
            if rows.size == 0:
                continue
            y, cache = _swiglu_fwd_cache(h1[rows], params[f"expert{j}.gate"],
                                         params[f"expert{j}.up"], params[f"expert{j}.down"])
            h2[rows] += w[rows, slots][:, None] * y
            ys[j] = (rows, slots, y, cache)
        p_full = softmax_rows(z)
        counts = np.bincount(sel.ravel(), minlength=cfg.experts)
        f_load = counts / float(N * cfg.topk)
        lse = logsumexp_rows(z)
        aux["lb"] = float(cfg.experts * np.sum(f_load * p_full.mean(axis=0)))
        aux["z"] = float(np.mean(lse * lse))
        moe = (z, sel, w, ys, p_full, f_load, lse)
    logits = h2 @ Wh.T
    lse_out = logsumexp_rows(logits)
    ce = float(np.mean(lse_out - logits[np.arange(N), Y]))
    loss = ce + cfg.lb_weight * aux.get("lb", 0.0) + cfg.z_weight * aux.get("z", 0.0)
    out = {"loss": loss, "ce": ce, "logits": logits,
           "router_logits": moe[0] if moe else None, **aux}
    if not need_grad:
        return out, None

    grads = {}
    dlog = softmax_rows(logits)
    dlog[np.arange(N), Y] -= 1.0
    dlog /= N
    grads["head"] = dlog.T @ h2
    dh2 = dlog @ Wh
    dh1 = dh2.copy()
    if moe:
        z, sel, w, ys, p_full, f_load, lse = moe
        dw = np.zeros_like(w)
        for j, (rows, slots, y, cache) in ys.items():
            dw[rows, slots] = np.sum(dh2[rows] * y, axis=1)
            dx, dg, du, dd = _swiglu_bwd(w[rows, slots][:, None] * dh2[rows], cache,
                                         params[f"expert{j}.gate"], params[f"expert{j}.up"],
                                         params[f"expert{j}.down"])
            np.add.at(dh1, rows, dx)
            grads[f"expert{j}.gate"], grads[f"expert{j}.up"], grads[f"expert{j}.down"] = dg, du, dd
        for j in range(cfg.experts):
            for part in ("gate", "up", "down"):
                grads.setdefault(f"expert{j}.{part}", np.zeros_like(params[f"expert{j}.{part}"]))
        dzs = w * (dw - np.sum(w * dw, axis=1, keepdims=True))
        dz = np.zeros_like(z)
        np.put_along_axis(dz, sel, dzs, axis=1)
        if cfg.lb_weight:
            g = cfg.lb_weight * cfg.experts * f_load / N
            dz += p_full * (g[None, :] - (p_full @ g)[:, None])
        if cfg.z_weight:
            dz += cfg.z_weight * 2.0 * lse[:, None] * p_full / N
        grads["router"] = dz.T @ h1
        dh1 += dz @ params["router"]
    dx, dg, du, dd = _swiglu_bwd(dh1, mlp_cache, params["gate"], params["up"], params["down"])
    grads["gate"], grads["up"], grads["down"] = dg, du, dd
    dh0 = dh1 + dx
    dE = np.zeros_like(E)
    np.add.at(dE, X, dh0)
    grads["embed"] = dE
    return out, grads


# ---------------------------------------------------------------- training

def _param_optimizer(name, cfg, optimizers):
    cls = param_class(name)
    opt = optimizers.get(cls)
    if opt is None:
        raise InvalidConfig(f"no optimizer assigned to parameter class {cls!r}")
    if isinstance(opt, AdamWConfig):
        return opt
    rows = {"head": cfg.vocab, "router": cfg.experts}.get(cls, 0)
    return replace(opt, update=opt.update.with_geometry(CLASS_GEOMETRY[cls], rows))


def _with_schedule(opt, total):
    if opt.schedule is None or opt.schedule.total_steps == total:
        return opt
    return replace(opt, schedule=replace(opt.schedule, total_steps=total))


@dataclass
class TrainResult:
    columns: list
    rows: list
    diagnostics: list
    params: dict
    states: dict
    step: int


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) or isinstance(x, str):
        return str(x)
    return repr(float(x))


def format_checkpoint(step, params, states):
    out = ["toy-checkpoint v1", f"step {step}", f"params {len(params)}"]
    for name in sorted(params):
        out.append(f"param {name}")
        out.append(format_matrix(params[name]).rstrip("\n"))
    return "\n".join(out) + "\n" + format_states(states)


def parse_checkpoint(text):
    lines = text.splitlines()
    if not lines or lines[0] != "toy-checkpoint v1":
        raise InvalidConfig("not a toy checkpoint")
    try:
        step = int(lines[1].split()[1])
        count = int(lines[2].split()[1])
    except (IndexError, ValueError) as exc:
        raise InvalidConfig(f"bad checkpoint header: {exc}") from exc
    params, i = {}, 3
    for _ in range(count):
        if not lines[i].startswith("param "):
            raise InvalidConfig(f"line {i + 1}: expected a param header")
        name = lines[i].split()[1]
        rows = int(lines[i + 1].split()[0])
        params[name] = parse_matrix("\n".join(lines[i + 1:i + rows + 2]))
        i += rows + 2
    return step, params, parse_states("\n".join(lines[i:]))


def toy_train(cfg, run, init_transform: Optional[Callable] = None):
    """Train for ``run.total_steps`` steps and return the log rows and diagnostics series.

    Training row ``k`` (1-based) reports the loss of the batch used by update
    ``k`` measured before that update. Every ``log_interval`` steps the row
    also carries router, logit and head-gradient geometry diagnostics, and a
    ``val`` row reports the loss on a fixed held-out batch.
    """
    optimizers = cfg.optimizers or default_optimizers()
    T = run.total_steps
    start = 0
    if run.resume:
        try:
            with open(run.resume) as fh:
                start, params, states = parse_checkpoint(fh.read())
        except OSError as exc:
            raise InvalidConfig(f"cannot read checkpoint {run.resume}: {exc}") from exc
        params0 = init_params(cfg, run.seed)
        if init_transform:
            params0 = init_transform(params0)
    else:
        params = init_params(cfg, run.seed)
        if init_transform:
            params = init_transform(params)
        params0 = params
        states = {}
    opts = {n: _with_schedule(_param_optimizer(n, cfg, optimizers), T) for n in params}
    for n, opt in opts.items():
        if n not in states:
            states[n] = (AdamState.zeros_like(params[n]) if isinstance(opt, AdamWConfig)
                         else OptimState.zeros_like(params[n]))
    names = sorted(params)
    quotient = [n for n in ("head", "router") if n in params]
    col_sums0 = {n: params0[n].sum(axis=0) for n in quotient}
    diag_keys = ["raw_logit_rms", "centered_logit_rms", "max_logsumexp", "spectral_advantage",
                 "stable_rank", "hybrid_alignment", "active_row_support", "rowhyb_alignment",
                 "rowhyb_rank"]
    if cfg.experts:
        diag_keys = ["load_balancing_loss", "z_loss", "load_entropy", "load_cv",
                     "dead_fraction", "max_load"] + diag_keys
    columns = (["step", "split", "loss", "ce", "lr"] + [f"upd_{n}" for n in names]
               + [f"drift_{n}" for n in quotient] + diag_keys)
    val_tokens = sample_batch(cfg, run.seed, 0, stream=2)
    rows, series = [], []
    lr_name = "embed"

    for k in range(start, T):
        step_no = k + 1
        out, grads = forward_backward(params, cfg, sample_batch(cfg, run.seed, k))
        row = {"step": step_no, "split": "train", "loss": out["loss"], "ce": out["ce"]}
        if step_no % run.log_interval == 0:
            diag = logit_diagnostics(out["logits"])
            if cfg.experts:
                diag.update(router_diagnostics(out["router_logits"], cfg.topk))
            if np.any(grads["head"]):
                diag.update(geometry_diagnostics(grads["head"]))
            row.update(diag)
            series.append({"step": step_no, **diag})
        for n in names:
            W = params[n]
            opt = opts[n]
            if isinstance(opt, AdamWConfig):
                W_new, gamma = adamw_config_step(W, states[n], grads[n], opt)
            else:
                W_new, rep = matrix_step(W, states[n], grads[n], opt)
                gamma = rep.gamma_k
            if n == lr_name:
                row["lr"] = gamma
            row[f"upd_{n}"] = float(np.linalg.norm(W_new - W))
            params[n] = W_new
        for n in quotient:
            row[f"drift_{n}"] = float(np.abs(params[n].sum(axis=0) - col_sums0[n]).max())
        rows.append(row)
        if step_no % run.log_interval == 0:
            val, _ = forward_backward(params, cfg, val_tokens, need_grad=False)
            rows.append({"step": step_no, "split": "val", "loss": val["loss"], "ce": val["ce"]})
        if run.checkpoint_interval and run.output_dir and step_no % run.checkpoint_interval == 0:
            path = os.path.join(run.output_dir, f"checkpoint_{step_no:06d}.txt")
            with open(path, "w") as fh:
                fh.write(format_checkpoint(step_no, params, states))
    return TrainResult(columns, rows, series, params, states, T)


def write_log_csv(path, result):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(result.columns)
        for row in result.rows:
            w.writerow([_fmt(row.get(c)) for c in result.columns])


def write_diagnostics_json(path, result, meta=None):
    keys = sorted({k for d in result.diagnostics for k in d if k != "step"})
    doc = {
        "meta": meta or {},
        "steps": [d["step"] for d in result.diagnostics],
        "series": {k: [d.get(k) for d in result.diagnostics] for k in keys},
        "final": result.diagnostics[-1] if result.diagnostics else {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")

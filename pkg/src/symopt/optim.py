"""Stateful single-tensor optimizers: momentum, trace scaling, weight decay, schedules.

``step`` follows the one-sided and row/hybrid momentum algorithms: a momentum
direction ``M``, a geometry-dependent working direction ``M̄`` and final
projector ``Π``, the class-specific direction ``U``, and finally
``W ← (1 - γλ) W - γ U``.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import polariter
from .errors import InvalidConfig, ShapeError
from .matcore import as_mat, center_rows, format_matrix, inv_sqrt_exact, parse_matrix
from .updates import UpdateSpec, apply_update, row_norm_update

MOMENTUM_KINDS = ("EMA", "Polyak", "Nesterov")
SCHEDULE_KINDS = ("WarmupCosine", "StableDecay")


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str = "StableDecay"
    total_steps: int = 1
    warmup_steps: int = 0
    stable_frac: float = 0.6

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise InvalidConfig(f"unknown schedule {self.kind!r}")
        if int(self.total_steps) != self.total_steps or self.total_steps < 1:
            raise InvalidConfig("total_steps must be a positive integer")
        if self.kind == "WarmupCosine" and not 0 <= self.warmup_steps < self.total_steps:
            raise InvalidConfig("warmup_steps must lie in [0, total_steps)")
        if self.kind == "StableDecay" and not 0.0 < self.stable_frac < 1.0:
            raise InvalidConfig("stable_frac must lie in (0, 1)")


def lr_at(step, cfg, lr0):
    """Learning rate at 0-based ``step`` under schedule ``cfg``."""
    if int(step) != step or not 0 <= step < cfg.total_steps:
        raise InvalidConfig(f"step {step!r} outside [0, {cfg.total_steps})")
    total = cfg.total_steps
    if cfg.kind == "WarmupCosine":
        w = cfg.warmup_steps
        if step < w:
            return lr0 * step / w
        progress = (step - w) / (total - w)
        return lr0 * 0.5 * (1.0 + math.cos(math.pi * progress))
    stable_end = cfg.stable_frac * total
    if step < stable_end:
        return lr0
    return lr0 * (1.0 - (step - stable_end) / (total - stable_end))


@dataclass(frozen=True)
class OptimConfig:
    lr0: float = 0.02
    momentum_beta: float = 0.9
    momentum_kind: str = "EMA"
    alpha: float = 0.0
    eps: float = 1e-8
    weight_decay: float = 0.0
    update: UpdateSpec = field(default_factory=UpdateSpec)
    schedule: Optional[ScheduleSpec] = None

    def __post_init__(self):
        if not self.lr0 > 0.0:
            raise InvalidConfig("lr0 must be positive")
        if not 0.0 <= self.momentum_beta < 1.0:
            raise InvalidConfig("momentum_beta must lie in [0, 1)")
        if self.momentum_kind not in MOMENTUM_KINDS:
            raise InvalidConfig(f"unknown momentum kind {self.momentum_kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidConfig("alpha must lie in [0, 1]")
        if not self.eps > 0.0:
            raise InvalidConfig("eps must be positive")
        if self.weight_decay < 0.0:
            raise InvalidConfig("weight_decay must be nonnegative")


@dataclass
class OptimState:
    momentum: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, W):
        return cls(np.zeros_like(as_mat(W, "W")), 0)


class StepReport(NamedTuple):
    gamma_k: float
    nu_k: Optional[float]
    update_fro_norm: float


def momentum_direction(state, G, cfg):
    """Update ``state.momentum`` in place and return the direction fed to the update map."""
    G = as_mat(G, "G")
    if G.shape != state.momentum.shape:
        raise ShapeError(f"gradient shape {G.shape} != momentum shape {state.momentum.shape}")
    beta = cfg.momentum_beta
    if cfg.momentum_kind == "EMA":
        state.momentum = beta * state.momentum + (1.0 - beta) * G
        return state.momentum.copy()
    state.momentum = beta * state.momentum + G
    if cfg.momentum_kind == "Polyak":
        return state.momentum.copy()
    return G + beta * state.momentum


def _inv_sqrt(C, cfg):
    solver = cfg.update.solver
    if solver.kind == "exact":
        return inv_sqrt_exact(C, cfg.eps)
    damped = C + cfg.eps * np.eye(C.shape[0])
    return polariter.polar_express_inv_sqrt(damped, solver.coeffs, solver.steps, solver.eps)[0]


def _trace_scale(C, R, cfg):
    nu = max(float(np.sum(C * R)), cfg.eps)  # tr(C R) for symmetric C
    return nu, nu ** cfg.alpha


def update_direction(D, cfg):
    """Return ``(U, nu)`` for momentum direction ``D``; ``nu`` is None when unused."""
    spec = cfg.update
    tag = spec.geometry.tag
    if tag == "TransposedLPRO":
        inner = OptimConfig(cfg.lr0, cfg.momentum_beta, cfg.momentum_kind, cfg.alpha, cfg.eps,
                            cfg.weight_decay, spec.with_geometry("LPRO"), cfg.schedule)
        U, nu = update_direction(D.T, inner)
        return U.T, nu
    if spec.cls in ("Spectral", "NuclearScaledPolar", "SignDiagLift"):
        return apply_update(D, spec), None

    if spec.geometry.quotient:
        proj = center_rows
    else:
        def proj(X):
            return X
    Mb = proj(D)
    router = tag == "RouterQuotient"
    cls = spec.cls

    if cls == "RowNorm":
        return proj(row_norm_update(Mb, spec.rowscale)), None

    if cls == "HybridRowThenSpectral":
        Mb = proj(row_norm_update(Mb, spec.rowscale))
        C = Mb.T @ Mb
        R = _inv_sqrt(C, cfg)
        nu, scale = _trace_scale(C, R, cfg)
        return proj(scale * (Mb @ R)), nu

    left = cls == "LeftSpectral" or (router and cls == "HybridSpectralThenRow")
    if left:
        C = Mb @ Mb.T
        L = _inv_sqrt(C, cfg)
        nu, scale = _trace_scale(C, L, cfg)
        Z = proj(scale * (L @ Mb))
    else:
        C = Mb.T @ Mb
        R = _inv_sqrt(C, cfg)
        nu, scale = _trace_scale(C, R, cfg)
        Z = proj(scale * (Mb @ R))
    if cls == "HybridSpectralThenRow":
        Z = proj(row_norm_update(Z, spec.rowscale))
    return Z, nu


def step(W, state, G, cfg):
    """One optimizer step; mutates ``state`` and returns ``(W_next, StepReport)``."""
    W = as_mat(W, "W")
    if W.shape != state.momentum.shape:
        raise ShapeError(f"parameter shape {W.shape} != state shape {state.momentum.shape}")
    gamma = lr_at(state.step, cfg.schedule, cfg.lr0) if cfg.schedule else cfg.lr0
    D = momentum_direction(state, G, cfg)
    U, nu = update_direction(D, cfg)
    W_next = (1.0 - gamma * cfg.weight_decay) * W - gamma * U
    state.step += 1
    return W_next, StepReport(gamma, nu, float(np.linalg.norm(U)))


# ------------------------------------------------------------------ AdamW

@dataclass(frozen=True)
class AdamWConfig:
    lr0: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 0.0
    schedule: Optional[ScheduleSpec] = None

    def __post_init__(self):
        if not self.lr0 > 0.0:
            raise InvalidConfig("lr0 must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InvalidConfig("AdamW betas must lie in [0, 1)")
        if not self.eps > 0.0 or self.weight_decay < 0.0:
            raise InvalidConfig("AdamW needs eps > 0 and weight_decay >= 0")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, W):
        W = as_mat(W, "W")
        return cls(np.zeros_like(W), np.zeros_like(W), 0)


def adamw_step(W, state2, G, lr, betas=(0.9, 0.95), eps=1e-8, weight_decay=0.0):
    """Coordinate-wise adaptive step with bias correction and decoupled weight decay."""
    W = as_mat(W, "W")
    G = as_mat(G, "G")
    if not (W.shape == G.shape == state2.m.shape == state2.v.shape):
        raise ShapeError("AdamW shapes of W, G and moment buffers must agree")
    b1, b2 = betas
    state2.step += 1
    t = state2.step
    state2.m = b1 * state2.m + (1.0 - b1) * G
    state2.v = b2 * state2.v + (1.0 - b2) * (G * G)
    m_hat = state2.m / (1.0 - b1 ** t)
    v_hat = state2.v / (1.0 - b2 ** t)
    return (1.0 - lr * weight_decay) * W - lr * m_hat / (np.sqrt(v_hat) + eps)


def adamw_direction(D, betas=(0.9, 0.95), eps=1e-8):
    """The first AdamW step from a fresh state viewed as a map of ``D`` (unit lr, no decay)."""
    D = as_mat(D, "D")
    state = AdamState.zeros_like(D)
    return -adamw_step(np.zeros_like(D), state, D, 1.0, betas, eps, 0.0)


def adamw_config_step(W, state, G, cfg):
    gamma = lr_at(state.step, cfg.schedule, cfg.lr0) if cfg.schedule else cfg.lr0
    return adamw_step(W, state, G, gamma, (cfg.beta1, cfg.beta2), cfg.eps,
                      cfg.weight_decay), gamma


# ------------------------------------------------------------ checkpoints

def format_states(states):
    """Text dump of named optimizer states; floats use shortest round-trip form."""
    out = ["optim-state v1"]
    for name in sorted(states):
        st = states[name]
        if isinstance(st, AdamState):
            out.append(f"tensor {name} adamw {st.step}")
            out.append(format_matrix(st.m).rstrip("\n"))
            out.append(format_matrix(st.v).rstrip("\n"))
        else:
            out.append(f"tensor {name} momentum {st.step}")
            out.append(format_matrix(st.momentum).rstrip("\n"))
    return "\n".join(out) + "\n"


def _take_matrix(lines, i):
    rows = int(lines[i].split()[0])
    return parse_matrix("\n".join(lines[i:i + rows + 1])), i + rows + 1


def parse_states(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "optim-state v1":
        raise InvalidConfig("not an optimizer state dump")
    states = {}
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 4 or parts[0] != "tensor":
            raise InvalidConfig(f"line {i + 1}: expected a tensor header")
        _, name, kind, k = parts
        i += 1
        if kind == "adamw":
            m, i = _take_matrix(lines, i)
            v, i = _take_matrix(lines, i)
            states[name] = AdamState(m, v, int(k))
        elif kind == "momentum":
            M, i = _take_matrix(lines, i)
            states[name] = OptimState(M, int(k))
        else:
            raise InvalidConfig(f"unknown state kind {kind!r}")
    return states

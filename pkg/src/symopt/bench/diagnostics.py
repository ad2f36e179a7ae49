"""Router load-balance and final-logit diagnostics."""

import numpy as np

from ..errors import InvalidInput


def logsumexp_rows(Z):
    """Row-wise log-sum-exp, shifted by the row max so large logits do not overflow."""
    mx = Z.max(axis=1)
    return mx + np.log(np.sum(np.exp(Z - mx[:, None]), axis=1))


def softmax_rows(Z):
    E = np.exp(Z - Z.max(axis=1, keepdims=True))
    return E / E.sum(axis=1, keepdims=True)


def topk_indices(Z, k):
    """Top-``k`` columns per row; ties go to the lowest expert index."""
    return np.argsort(-Z, axis=1, kind="stable")[:, :k]


def _logits_2d(z, name):
    Z = np.asarray(z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.ndim != 2 or Z.shape[0] == 0 or Z.shape[1] == 0:
        raise InvalidInput(f"{name} must be a nonempty (tokens, width) array, got {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return Z


def router_diagnostics(router_logits, topk):
    Z = _logits_2d(router_logits, "router logits")
    N, E = Z.shape
    if not 1 <= topk <= E:
        raise InvalidInput(f"topk={topk} must lie in [1, {E}]")
    counts = np.bincount(topk_indices(Z, topk).ravel(), minlength=E)
    f = counts / float(N * topk)
    P = softmax_rows(Z).mean(axis=0)
    lse = logsumexp_rows(Z)
    nz = f[f > 0]
    mean_f = f.mean()
    return {
        "load_balancing_loss": float(E * np.sum(f * P)),
        "z_loss": float(np.mean(lse * lse)),
        "load_entropy": float(-np.sum(nz * np.log(nz))),
        "load_cv": float(f.std() / mean_f),
        "dead_fraction": float(np.count_nonzero(counts == 0)) / E,
        "max_load": float(f.max()),
    }


def logit_diagnostics(final_logits):
    Z = _logits_2d(final_logits, "final logits")
    Zc = Z - Z.mean(axis=1, keepdims=True)
    return {
        "raw_logit_rms": float(np.sqrt(np.mean(Z * Z))),
        "centered_logit_rms": float(np.sqrt(np.mean(Zc * Zc))),
        "max_logsumexp": float(logsumexp_rows(Z).max()),
    }

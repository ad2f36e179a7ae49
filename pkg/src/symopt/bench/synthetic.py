"""Synthetic losses, descent/PL convergence trials and gradient geometry diagnostics."""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import InvalidConfig, ShapeError, ZeroDirection
from ..matcore import as_mat, numerical_rank, svd

LOSS_KINDS = ("QuadraticFro", "QuadraticAniso", "LowRankFactor")
FAMILIES = ("spectral_identity", "nuclear_polar", "nuclear_polar_left", "nuclear_polar_right",
            "right_spectral", "left_spectral", "row_bounded", "row_smoothed", "hybrid_nuclear",
            "rowhyb_nuclear")
RATIO_FLOOR = 1e-8   # gap ratios are only judged while the gap exceeds this share of the initial gap
DESCENT_SLACK = 1e-12  # absolute slack, as a share of the initial gap, for rounding in f


@dataclass
class SyntheticLoss:
    """``QuadraticFro``: ``(L/2)‖W - W*‖²``. ``QuadraticAniso``: ``½ tr((W-W*)ᵀ A (W-W*))``.
    ``LowRankFactor``: ``½ ‖X W - Y‖²`` with a fixed design ``X`` of rank ``r``.
    """

    kind: str
    W_star: Optional[np.ndarray] = None
    L: float = 1.0
    mu: Optional[float] = None
    A: Optional[np.ndarray] = None
    X: Optional[np.ndarray] = None
    Y: Optional[np.ndarray] = None
    f_star: float = 0.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InvalidConfig(f"unknown loss kind {self.kind!r}")

    @property
    def shape(self):
        if self.kind == "LowRankFactor":
            return (self.X.shape[1], self.Y.shape[1])
        return self.W_star.shape

    @classmethod
    def quadratic_fro(cls, W_star, L=1.0):
        return cls("QuadraticFro", W_star=as_mat(W_star), L=float(L), mu=float(L))

    @classmethod
    def quadratic_aniso(cls, W_star, A):
        A = as_mat(A, "A")
        w = np.linalg.eigvalsh(0.5 * (A + A.T))
        if w[0] <= 0.0:
            raise InvalidConfig("anisotropic quadratic needs an SPD operator")
        return cls("QuadraticAniso", W_star=as_mat(W_star), L=float(w[-1]), mu=float(w[0]), A=A)

    @classmethod
    def aniso_with_spectrum(cls, W_star, L, mu, seed):
        """SPD operator with eigenvalues spread evenly over ``[mu, L]``, both ends exact."""
        m = W_star.shape[0]
        rng = np.random.default_rng(seed)
        Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
        lam = np.linspace(mu, L, m)
        return cls("QuadraticAniso", W_star=as_mat(W_star), L=float(L), mu=float(mu),
                   A=(Q * lam) @ Q.T)

    @classmethod
    def low_rank_factor(cls, X, Y):
        X, Y = as_mat(X, "X"), as_mat(Y, "Y")
        U, s, _ = svd(X)
        r = numerical_rank(s)
        resid = Y - U[:, :r] @ (U[:, :r].T @ Y)
        return cls("LowRankFactor", L=float(s[0] ** 2), mu=float(s[r - 1] ** 2), X=X, Y=Y,
                   f_star=0.5 * float(np.sum(resid * resid)))


def loss_and_grad(loss, W):
    W = as_mat(W, "W")
    if W.shape != loss.shape:
        raise ShapeError(f"W has shape {W.shape}, loss expects {loss.shape}")
    if loss.kind == "QuadraticFro":
        E = W - loss.W_star
        return 0.5 * loss.L * float(np.sum(E * E)), loss.L * E
    if loss.kind == "QuadraticAniso":
        E = W - loss.W_star
        AE = loss.A @ E
        return 0.5 * float(np.sum(E * AE)), AE
    R = loss.X @ W - loss.Y
    return 0.5 * float(np.sum(R * R)), loss.X.T @ R


# ------------------------------------------------------------------ geometry

def _exact_row_normalize(Z, tol=1e-12):
    """Rows scaled to unit norm; rows below ``tol`` relative to the largest stay zero."""
    t = np.linalg.norm(Z, axis=1)
    keep = t > tol * max(float(t.max()), 1e-300)
    out = np.zeros_like(Z)
    out[keep] = Z[keep] / t[keep, None]
    return out, int(np.count_nonzero(keep))


def _smoothed_rows(G, eps):
    return G / (np.linalg.norm(G, axis=1) + eps)[:, None]


def geometry_diagnostics(G, eta=None, eps=1e-8):
    """Spectral advantage, stable rank and the hybrid alignment quantities of ``G``.

    ``eta`` is accepted for symmetry with the row-scale specs; the row-hybrid
    quantities use the smoothed rule ``1/(t + eps)``.
    """
    G = as_mat(G, "G")
    if not np.any(G):
        raise ZeroDirection("geometry diagnostics of the zero matrix")
    U, s, V = svd(G)
    r = numerical_rank(s)
    nuc = float(np.sum(s))
    Z = U[:, :r] @ V[:, :r].T
    Nz, s_row = _exact_row_normalize(Z)
    Gt = eta.eta(np.linalg.norm(G, axis=1))[:, None] * G if eta is not None \
        else _smoothed_rows(G, eps)
    Ut, st, Vt = svd(Gt)
    rt = numerical_rank(st)
    nuc_t = float(np.sum(st))
    polar_t = Ut[:, :rt] @ Vt[:, :rt].T
    return {
        "spectral_advantage": nuc / r,
        "stable_rank": float(np.sum(s * s)) / float(s[0] ** 2),
        "hybrid_alignment": float(np.sum(G * Nz)) / nuc,
        "active_row_support": s_row,
        "rowhyb_alignment": float(np.sum(G * polar_t)) / nuc_t if nuc_t > 0 else 0.0,
        "rowhyb_rank": rt,
    }


# --------------------------------------------------------------- trial maps

@dataclass(frozen=True)
class TrialSpec:
    """Which update family to run and its constants (``eps`` damping or smoothing, ``lo``/``hi`` bounds)."""

    family: str = "spectral_identity"
    eps: float = 1e-8
    lo: float = 0.5
    hi: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidConfig(f"unknown update family {self.family!r}")
        if self.eps <= 0.0 and self.family in ("row_smoothed", "rowhyb_nuclear"):
            raise InvalidConfig("smoothed row rules need eps > 0")
        if self.family == "row_bounded" and not 0.0 < self.lo <= self.hi:
            raise InvalidConfig("bounded rule needs 0 < lo <= hi")


def _gram_pinv_sqrt(C, rank):
    w, Q = np.linalg.eigh(0.5 * (C + C.T))
    w, Q = w[::-1][:rank], Q[:, ::-1][:, :rank]
    return (Q / np.sqrt(w)) @ Q.T, np.sqrt(w)


def _family_step(G, spec):
    """Return ``(T, a, b, N, K2)`` with ``f+ <= f - γ a N + (Lγ²/2) b N`` and ``N >= K2 ‖G‖²``.

    ``a`` and ``b`` are the per-step alignment and norm constants of the
    matching descent lemma; ``N`` is the squared norm it is stated in.
    """
    fam = spec.family
    fro2 = float(np.sum(G * G))
    if fam == "spectral_identity":
        return G.copy(), 1.0, 1.0, fro2, 1.0
    if fam in ("nuclear_polar", "nuclear_polar_left", "nuclear_polar_right"):
        U, s, V = svd(G)
        r = numerical_rank(s)
        nuc = float(np.sum(s[:r]))
        if fam == "nuclear_polar":
            T = nuc * (U[:, :r] @ V[:, :r].T)
        elif fam == "nuclear_polar_right":
            R, root = _gram_pinv_sqrt(G.T @ G, r)
            T = float(np.sum(root)) * (G @ R)
        else:
            L_, root = _gram_pinv_sqrt(G @ G.T, r)
            T = float(np.sum(root)) * (L_ @ G)
        return T, 1.0, float(r), nuc * nuc, 1.0
    if fam in ("right_spectral", "left_spectral"):
        C = G.T @ G if fam == "right_spectral" else G @ G.T
        w, Q = np.linalg.eigh(C)
        w = np.maximum(w, 0.0)
        phi = 1.0 / np.sqrt(w + spec.eps)
        Phi = (Q * phi) @ Q.T
        T = G @ Phi if fam == "right_spectral" else Phi @ G
        # constants from the eigenvalue form of the alignment identities
        lam_sum = float(np.sum(w))
        a = float(np.sum(w * phi)) / lam_sum
        b = float(np.sum(w * phi * phi)) / lam_sum
        return T, a, b, fro2, 1.0
    if fam == "row_bounded":
        t = np.linalg.norm(G, axis=1)
        eta = np.clip(1.0 / np.maximum(t, 1.0 / spec.hi), spec.lo, spec.hi)
        return eta[:, None] * G, spec.lo, spec.hi ** 2, fro2, 1.0
    if fam == "row_smoothed":
        t = np.linalg.norm(G, axis=1)
        M = float(t.max())
        return G / (t + spec.eps)[:, None], 1.0 / (M + spec.eps), 1.0 / spec.eps ** 2, fro2, 1.0
    if fam == "hybrid_nuclear":
        U, s, V = svd(G)
        r = numerical_rank(s)
        nuc = float(np.sum(s[:r]))
        Nz, s_row = _exact_row_normalize(U[:, :r] @ V[:, :r].T)
        return nuc * Nz, float(np.sum(G * Nz)) / nuc, float(s_row), nuc * nuc, 1.0
    # rowhyb_nuclear
    Gt = _smoothed_rows(G, spec.eps)
    U, s, V = svd(Gt)
    r = numerical_rank(s)
    nuc = float(np.sum(s[:r]))
    P = U[:, :r] @ V[:, :r].T
    return nuc * P, float(np.sum(G * P)) / nuc, float(r), nuc * nuc, nuc * nuc / fro2


@dataclass
class ConvergenceReport:
    family: str
    gamma: float
    L: float
    mu: Optional[float]
    f: list = field(default_factory=list)
    grad_fro: list = field(default_factory=list)
    nuclear: list = field(default_factory=list)
    rank: list = field(default_factory=list)
    bound: list = field(default_factory=list)
    ratio: list = field(default_factory=list)
    a: list = field(default_factory=list)
    b: list = field(default_factory=list)
    gamma_max: float = math.inf
    rho: Optional[float] = None
    admissible: bool = True
    descent_violations: int = 0
    ratio_violations: int = 0
    worst_ratio: float = 0.0

    @property
    def violations(self):
        return self.descent_violations + self.ratio_violations

    def summary(self):
        rho = "nan" if self.rho is None else repr(self.rho)
        return (f"family={self.family} gamma={self.gamma!r} steps={len(self.f) - 1} "
                f"violations={self.violations} descent_violations={self.descent_violations} "
                f"ratio_violations={self.ratio_violations} worst_ratio={self.worst_ratio!r} "
                f"rho={rho} gamma_max={self.gamma_max!r} admissible={self.admissible}")


def run_convergence_trial(loss, spec, gamma, T, W0):
    """Run ``T`` full-gradient steps ``W ← W - γ T(G)`` and check the descent and PL bounds.

    The per-step descent bound uses that step's lemma constants. The uniform
    constants (smallest alignment, largest norm factor, smallest comparability
    factor) are then read off the trace, which fixes the admissible step size
    and the contraction factor ``ρ``; each observed gap ratio is compared with
    ``ρ + 1e-9`` while the gap stays above the floating-point floor.
    """
    if not gamma > 0.0:
        raise InvalidConfig("gamma must be positive")
    spec = spec if isinstance(spec, TrialSpec) else TrialSpec(spec)
    W = as_mat(W0, "W0").copy()
    L = loss.L
    rep = ConvergenceReport(spec.family, float(gamma), L, loss.mu)
    f, G = loss_and_grad(loss, W)
    rep.f.append(f)
    gap0 = f - loss.f_star
    slack = DESCENT_SLACK * max(gap0, 1e-300)
    K2s = []
    for _ in range(T):
        if not np.any(G):
            break
        Tg, a, b, N, K2 = _family_step(G, spec)
        s = svd(G).sigma
        rep.grad_fro.append(float(np.linalg.norm(G)))
        rep.nuclear.append(float(np.sum(s)))
        rep.rank.append(numerical_rank(s))
        rep.a.append(a)
        rep.b.append(b)
        K2s.append(K2)
        bound = f - gamma * a * N + 0.5 * L * gamma * gamma * b * N
        rep.bound.append(bound)
        W = W - gamma * Tg
        f_next, G = loss_and_grad(loss, W)
        if f_next > min(bound, f) + slack:
            rep.descent_violations += 1
        gap, gap_next = f - loss.f_star, f_next - loss.f_star
        rep.ratio.append(gap_next / gap if gap > 0 else 0.0)
        rep.f.append(f_next)
        f = f_next

    if rep.a:
        a_lo, b_hi, K2_lo = min(rep.a), max(rep.b), min(K2s)
        rep.gamma_max = 2.0 * a_lo / (L * b_hi)
        rep.admissible = gamma < rep.gamma_max
        if loss.mu is not None:
            rep.rho = 1.0 - 2.0 * loss.mu * K2_lo * gamma * (a_lo - 0.5 * L * gamma * b_hi)
    if not rep.admissible:
        # outside the theorem's range only monotone descent is judged
        rep.descent_violations = sum(
            1 for k in range(len(rep.f) - 1) if rep.f[k + 1] > rep.f[k] + slack)
    elif rep.rho is not None:
        for k, r in enumerate(rep.ratio):
            if rep.f[k] - loss.f_star <= RATIO_FLOOR * gap0:
                break
            rep.worst_ratio = max(rep.worst_ratio, r)
            if r > rep.rho + 1e-9:
                rep.ratio_violations += 1
    return rep


def write_trace_csv(path, rep):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "f", "grad_fro", "nuclear", "rank", "bound", "ratio"])
        for k in range(len(rep.f)):
            row = [k, repr(rep.f[k])]
            if k < len(rep.grad_fro):
                row += [repr(rep.grad_fro[k]), repr(rep.nuclear[k]), rep.rank[k],
                        repr(rep.bound[k]), repr(rep.ratio[k])]
            else:
                row += ["", "", "", "", ""]
            w.writerow(row)


def calibrate_gamma(loss, spec, W0, T, fraction=0.5, max_rounds=20):
    """Pick ``γ = fraction · γ_max`` where ``γ_max`` is read off the run it produces.

    The uniform constants of the data-dependent families depend on the
    trajectory, so the step size is refined until the run certifies itself
    admissible. Returns ``(gamma, report)``.
    """
    gamma = 1e-6 / loss.L
    rep = run_convergence_trial(loss, spec, gamma, T, W0)
    for _ in range(max_rounds):
        gamma = fraction * rep.gamma_max
        rep = run_convergence_trial(loss, spec, gamma, T, W0)
        if rep.admissible:
            return gamma, rep
    raise InvalidConfig(f"could not certify an admissible step size for {spec.family}")

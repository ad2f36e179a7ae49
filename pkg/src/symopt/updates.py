"""Stateless symmetry-compatible update maps ``U(D)``.

Every spectral map is described by its action on singular values, ``psi``.
The Gram-side form used by one-sided updates follows from it:
``Phi(lam) = psi(sqrt(lam)) / sqrt(lam)``, so ``D Phi(DᵀD) = U psi(S) Vᵀ``.

=================  ======================  =========================
kind               psi(s)                  Phi(lam)
=================  ======================  =========================
identity           s                       1
polar              1 on the numerical rank lam^(-1/2) on the rank
power(p)           s^p                     lam^((p-1)/2)
damped_inv_sqrt    s / sqrt(s² + eps)      (lam + eps)^(-1/2)
=================  ======================  =========================
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import polariter
from .errors import InvalidConfig, SingularGram, ZeroDirection, ZeroEntry, ShapeError
from .matcore import as_mat, center_rows, numerical_rank, svd, RANK_RTOL

SPECTRAL_KINDS = ("identity", "polar", "power", "damped_inv_sqrt")
ROWSCALE_KINDS = ("smoothed_normalize", "bounded")
GEOMETRIES = ("BiOrthogonal", "LPRO", "TransposedLPRO", "LMHeadQuotient", "RouterQuotient")
CLASSES = ("Spectral", "NuclearScaledPolar", "RightSpectral", "LeftSpectral", "RowNorm",
           "HybridRowThenSpectral", "HybridSpectralThenRow", "SignDiagLift")

_ADMISSIBLE = {
    "BiOrthogonal": {"Spectral", "NuclearScaledPolar", "RightSpectral", "LeftSpectral",
                     "SignDiagLift"},
    "LPRO": {"Spectral", "NuclearScaledPolar", "RightSpectral", "RowNorm",
             "HybridRowThenSpectral", "HybridSpectralThenRow"},
    "LMHeadQuotient": {"RowNorm", "RightSpectral", "HybridRowThenSpectral",
                       "HybridSpectralThenRow"},
    "RouterQuotient": {"RowNorm", "LeftSpectral", "HybridSpectralThenRow"},
}
_ADMISSIBLE["TransposedLPRO"] = _ADMISSIBLE["LPRO"]


@dataclass(frozen=True)
class SpectralMapSpec:
    kind: str = "damped_inv_sqrt"
    p: float = 1.0
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in SPECTRAL_KINDS:
            raise InvalidConfig(f"unknown spectral map kind {self.kind!r}")
        if self.kind == "power" and not 0.0 <= self.p <= 1.0:
            raise InvalidConfig(f"power exponent must lie in [0, 1], got {self.p!r}")
        if self.kind == "damped_inv_sqrt" and self.eps < 0.0:
            raise InvalidConfig(f"damping must be nonnegative, got {self.eps!r}")

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def polar(cls):
        return cls("polar")

    @classmethod
    def power(cls, p):
        return cls("power", p=float(p))

    @classmethod
    def damped(cls, eps):
        return cls("damped_inv_sqrt", eps=float(eps))

    def psi(self, s):
        """Apply the singular-value response to a nonincreasing vector ``s``."""
        s = np.asarray(s, dtype=np.float64)
        r = numerical_rank(s)
        out = np.zeros_like(s)
        if self.kind == "identity":
            return s.copy()
        if self.kind == "polar":
            out[:r] = 1.0
        elif self.kind == "power":
            out[:r] = s[:r] ** self.p
        else:
            if self.eps == 0.0:
                out[:r] = 1.0
            else:
                out = s / np.sqrt(s * s + self.eps)
        return out


@dataclass(frozen=True)
class RowScaleSpec:
    """Row-scale rule ``eta``.

    ``smoothed_normalize``: ``eta(t) = 1/(t + eps)``.
    ``bounded``: ``eta(t) = clamp(1/max(t, 1/hi), lo, hi)``, i.e. ``1/t`` kept
    inside ``[lo, hi]`` and finite at ``t = 0``.
    """

    kind: str = "smoothed_normalize"
    eps: float = 1e-8
    lo: float = 1.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ROWSCALE_KINDS:
            raise InvalidConfig(f"unknown row-scale kind {self.kind!r}")
        if self.kind == "smoothed_normalize" and not self.eps > 0.0:
            raise InvalidConfig("smoothed normalization needs eps > 0")
        if self.kind == "bounded" and not 0.0 < self.lo <= self.hi:
            raise InvalidConfig("bounded row scaling needs 0 < lo <= hi")

    @classmethod
    def smoothed(cls, eps=1e-8):
        return cls("smoothed_normalize", eps=float(eps))

    @classmethod
    def bounded(cls, lo, hi):
        return cls("bounded", lo=float(lo), hi=float(hi))

    def eta(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "smoothed_normalize":
            return 1.0 / (t + self.eps)
        return np.clip(1.0 / np.maximum(t, 1.0 / self.hi), self.lo, self.hi)


@dataclass(frozen=True)
class Solver:
    """``exact`` uses the SVD oracle; ``iterative`` uses the polynomial iterations.

    ``eps`` is the inner damping handed to the inverse square root iteration
    when the map itself carries none (polar kinds).
    """

    kind: str = "exact"
    coeffs: polariter.CoeffTable = field(default_factory=polariter.CoeffTable.baseline)
    steps: int = polariter.DEFAULT_STEPS
    eps: float = polariter.DEFAULT_EPS

    def __post_init__(self):
        if self.kind not in ("exact", "iterative"):
            raise InvalidConfig(f"unknown solver {self.kind!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise InvalidConfig("solver steps must be a positive integer")

    @classmethod
    def of(cls, solver):
        if solver is None:
            return cls()
        if isinstance(solver, cls):
            return solver
        return cls(kind=str(solver))


@dataclass(frozen=True)
class LayerGeometry:
    tag: str = "LPRO"
    rows: int = 0  # vocabulary size or expert count for quotient tags; 0 = unchecked

    def __post_init__(self):
        if self.tag not in GEOMETRIES:
            raise InvalidConfig(f"unknown geometry {self.tag!r}")

    @property
    def quotient(self):
        return self.tag in ("LMHeadQuotient", "RouterQuotient")


@dataclass(frozen=True)
class UpdateSpec:
    geometry: LayerGeometry = field(default_factory=LayerGeometry)
    cls: str = "RowNorm"
    spectral: SpectralMapSpec = field(default_factory=SpectralMapSpec)
    rowscale: RowScaleSpec = field(default_factory=RowScaleSpec)
    solver: Solver = field(default_factory=Solver)

    def __post_init__(self):
        if self.cls not in CLASSES:
            raise InvalidConfig(f"unknown update class {self.cls!r}")
        if self.cls not in _ADMISSIBLE[self.geometry.tag]:
            raise InvalidConfig(f"class {self.cls} is not admissible for geometry "
                                f"{self.geometry.tag}")

    def with_geometry(self, tag, rows=0):
        return replace(self, geometry=LayerGeometry(tag, rows))

    def with_solver(self, solver):
        return replace(self, solver=Solver.of(solver))


# ---------------------------------------------------------------- basic maps

def _is_zero(D):
    return not np.any(D)


def spectral_update(D, psi=None, solver="exact"):
    """``U Diag(psi(sigma)) Vᵀ``; the identity kind returns ``D`` unchanged."""
    D = as_mat(D, "D")
    psi = psi or SpectralMapSpec.polar()
    solver = Solver.of(solver)
    if psi.kind == "identity":
        return D.copy()
    if _is_zero(D):
        if psi.kind == "polar":
            raise ZeroDirection("polar factor of the zero matrix")
        return np.zeros_like(D)
    if solver.kind == "iterative":
        if psi.kind == "polar":
            return polariter.ns_polar(D, solver.coeffs, solver.steps)[0]
        if psi.kind == "damped_inv_sqrt":
            return _gram_iterative(D, psi.eps, solver)
        raise InvalidConfig("power maps are only available with the exact solver")
    U, s, V = svd(D)
    if psi.kind == "damped_inv_sqrt" and psi.eps == 0.0 and numerical_rank(s) < len(s):
        raise SingularGram("undamped inverse square root of a rank-deficient Gram matrix")
    return (U * psi.psi(s)) @ V.T


def _gram_iterative(D, eps, solver):
    """``D (DᵀD + eps I)^{-1/2}`` on whichever Gram side is smaller."""
    return polariter.gram_newton_schulz(D, solver.coeffs, solver.steps, eps)[0]


def _gram_pinv_sqrt(C, rank):
    """Pseudo-inverse square root of a PSD Gram matrix keeping its top ``rank`` modes."""
    w, Q = np.linalg.eigh(0.5 * (C + C.T))
    w, Q = w[::-1][:rank], Q[:, ::-1][:, :rank]
    return (Q / np.sqrt(w)) @ Q.T, float(np.sum(np.sqrt(w)))


def nuclear_scaled_polar_update(D, solver="exact", side="full"):
    """``‖D‖_* polar(D)``.

    ``side="right"`` computes it as ``ν D (DᵀD)^{†/2}`` and ``side="left"`` as
    ``ν (DDᵀ)^{†/2} D`` with ``ν = tr(C C^{†/2})``; on exact arithmetic all
    three coincide.
    """
    D = as_mat(D, "D")
    solver = Solver.of(solver)
    if side not in ("full", "left", "right"):
        raise InvalidConfig(f"unknown side {side!r}")
    if _is_zero(D):
        raise ZeroDirection("nuclear-scaled polar of the zero matrix")
    if side == "left":
        return nuclear_scaled_polar_update(D.T, solver, "right").T
    if solver.kind == "iterative":
        if side == "full":
            X = polariter.ns_polar(D, solver.coeffs, solver.steps)[0]
        else:
            X = _gram_iterative(D, solver.eps, solver)
        return float(np.sum(D * X)) * X
    if side == "full":
        U, s, V = svd(D)
        r = numerical_rank(s)
        return float(np.sum(s)) * (U[:, :r] @ V[:, :r].T)
    R, nu = _gram_pinv_sqrt(D.T @ D, numerical_rank(D))
    return nu * (D @ R)


def right_spectral_update(D, phi=None, solver="exact"):
    """``D Phi(DᵀD)``; with the damped kind, ``D (DᵀD + eps I)^{-1/2}``."""
    D = as_mat(D, "D")
    phi = phi or SpectralMapSpec()
    solver = Solver.of(solver)
    if phi.kind == "identity":
        return D.copy()
    if _is_zero(D):
        if phi.kind == "polar":
            raise ZeroDirection("polar factor of the zero matrix")
        return np.zeros_like(D)
    if solver.kind == "iterative":
        if phi.kind == "power":
            raise InvalidConfig("power maps are only available with the exact solver")
        eps = phi.eps if phi.kind == "damped_inv_sqrt" else solver.eps
        return _gram_iterative(D, eps, solver)
    U, s, V = svd(D)
    if phi.kind == "damped_inv_sqrt" and phi.eps == 0.0 and numerical_rank(s) < D.shape[1]:
        raise SingularGram("DᵀD is singular and no damping was given")
    return (U * phi.psi(s)) @ V.T


def left_spectral_update(D, psi=None, solver="exact"):
    """``Psi(DDᵀ) D``, defined as the transpose of the right-sided map on ``Dᵀ``."""
    D = as_mat(D, "D")
    return right_spectral_update(D.T, psi, solver).T


def row_norm_update(D, eta=None):
    D = as_mat(D, "D")
    eta = eta or RowScaleSpec()
    t = np.linalg.norm(D, axis=1)
    return eta.eta(t)[:, None] * D


def hybrid_update(D, order="RowThenSpectral", eta=None, phi=None, solver="exact"):
    if order == "RowThenSpectral":
        return right_spectral_update(row_norm_update(D, eta), phi, solver)
    if order == "SpectralThenRow":
        return row_norm_update(right_spectral_update(D, phi, solver), eta)
    raise InvalidConfig(f"unknown hybrid order {order!r}")


# ------------------------------------------------------------ quotient maps

_HYBRID_ALIASES = {"Hybrid": "HybridRowThenSpectral"}


def lm_head_update(D, cls="RowNorm", eta=None, phi=None, solver="exact"):
    """Horizontal LM-head update: centered input, reprojection after row stages and at the end."""
    D = as_mat(D, "D")
    cls = _HYBRID_ALIASES.get(cls, cls)
    Dc = center_rows(D)
    if cls == "RowNorm":
        out = row_norm_update(Dc, eta)
    elif cls == "RightSpectral":
        out = right_spectral_update(Dc, phi, solver)
    elif cls == "HybridRowThenSpectral":
        Z = center_rows(row_norm_update(Dc, eta))
        out = right_spectral_update(Z, phi, solver)
    elif cls == "HybridSpectralThenRow":
        Z = center_rows(right_spectral_update(Dc, phi, solver))
        out = row_norm_update(Z, eta)
    else:
        raise InvalidConfig(f"class {cls} is not available for an LM head")
    return center_rows(out)


_ROUTER_ALIASES = {"HybridLeftThenRow": "HybridSpectralThenRow",
                   "Hybrid": "HybridSpectralThenRow"}


def router_update(D, cls="RowNorm", eta=None, psi=None, solver="exact"):
    """Router update on the centered expert subspace; the output always has zero column sums."""
    D = as_mat(D, "D")
    cls = _ROUTER_ALIASES.get(cls, cls)
    Dc = center_rows(D)
    if cls == "RowNorm":
        out = row_norm_update(Dc, eta)
    elif cls == "LeftSpectral":
        out = left_spectral_update(Dc, psi, solver)
    elif cls == "HybridSpectralThenRow":
        Z = center_rows(left_spectral_update(Dc, psi, solver))
        out = row_norm_update(Z, eta)
    else:
        raise InvalidConfig(f"class {cls} is not available for a router")
    return center_rows(out)


def transposed_lpro_update(D, inner):
    """``(inner(Dᵀ))ᵀ`` for an LPRO-geometry ``inner`` spec."""
    if inner.geometry.tag != "LPRO":
        raise InvalidConfig("transposed wrapper needs an inner spec with LPRO geometry")
    D = as_mat(D, "D")
    return apply_update(D.T, inner).T


def sign_diag_lift_update(D):
    """Entrywise sign obtained as the polar factor of the diagonal lift ``Diag(vec D)``."""
    D = as_mat(D, "D")
    if np.any(D == 0.0):
        raise ZeroEntry("the diagonal lift needs every entry of D to be nonzero")
    U, _, V = svd(np.diag(D.ravel()))
    return np.diag(U @ V.T).reshape(D.shape).copy()


# ---------------------------------------------------------------- dispatch

def _class_map(D, spec):
    cls = spec.cls
    if cls == "Spectral":
        return spectral_update(D, spec.spectral, spec.solver)
    if cls == "NuclearScaledPolar":
        return nuclear_scaled_polar_update(D, spec.solver)
    if cls == "RightSpectral":
        return right_spectral_update(D, spec.spectral, spec.solver)
    if cls == "LeftSpectral":
        return left_spectral_update(D, spec.spectral, spec.solver)
    if cls == "RowNorm":
        return row_norm_update(D, spec.rowscale)
    if cls == "HybridRowThenSpectral":
        return hybrid_update(D, "RowThenSpectral", spec.rowscale, spec.spectral, spec.solver)
    if cls == "HybridSpectralThenRow":
        return hybrid_update(D, "SpectralThenRow", spec.rowscale, spec.spectral, spec.solver)
    if cls == "SignDiagLift":
        return sign_diag_lift_update(D)
    raise InvalidConfig(f"unknown class {cls!r}")


def apply_update(D, spec):
    """Evaluate the update map described by ``spec`` on ``D``."""
    D = as_mat(D, "D")
    geo = spec.geometry
    if geo.quotient and geo.rows and D.shape[0] != geo.rows:
        raise ShapeError(f"{geo.tag} expects {geo.rows} rows, got {D.shape[0]}")
    if geo.tag == "TransposedLPRO":
        return transposed_lpro_update(D, spec.with_geometry("LPRO"))
    if geo.tag == "LMHeadQuotient":
        return lm_head_update(D, spec.cls, spec.rowscale, spec.spectral, spec.solver)
    if geo.tag == "RouterQuotient":
        return router_update(D, spec.cls, spec.rowscale, spec.spectral, spec.solver)
    return _class_map(D, spec)


__all__ = [
    "SpectralMapSpec", "RowScaleSpec", "Solver", "LayerGeometry", "UpdateSpec",
    "spectral_update", "nuclear_scaled_polar_update", "right_spectral_update",
    "left_spectral_update", "row_norm_update", "hybrid_update", "lm_head_update",
    "router_update", "transposed_lpro_update", "sign_diag_lift_update", "apply_update",
    "RANK_RTOL",
]

"""Inverse-free polynomial iterations for polar factors and inverse square roots."""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidConfig, InvalidInput, ZeroDirection
from .matcore import as_mat

NORMALIZER = 1.02
DEFAULT_STEPS = 5
DEFAULT_EPS = 1e-7
BASELINE_CUBIC = (1.5, -0.5, 0.0)
# Classical quintic Newton-Schulz; the fixed point every minimax schedule tends to.
QUINTIC_TAIL = (1.875, -1.25, 0.375)


@dataclass(frozen=True)
class CoeffTable:
    """Per-step polynomial coefficients ``(a_k, b_k, c_k)``.

    Asking for a step past the end of the table repeats the last triple.
    """

    triples: tuple

    def __post_init__(self):
        if len(self.triples) < 1:
            raise InvalidConfig("coefficient table must hold at least one triple")
        clean = []
        for t in self.triples:
            if len(t) != 3:
                raise InvalidConfig(f"coefficient entry {t!r} is not an (a, b, c) triple")
            a, b, c = (float(x) for x in t)
            if not all(math.isfinite(x) for x in (a, b, c)):
                raise InvalidConfig(f"coefficient entry {t!r} is not finite")
            clean.append((a, b, c))
        object.__setattr__(self, "triples", tuple(clean))

    def at(self, k):
        return self.triples[min(k, len(self.triples) - 1)]

    @classmethod
    def baseline(cls):
        return cls((BASELINE_CUBIC,))

    @classmethod
    def parse(cls, text):
        """Read ``"a, b, c; a, b, c; ..."`` (semicolons or newlines separate triples)."""
        chunks = [c for c in text.replace("\n", ";").split(";") if c.strip()]
        try:
            triples = [tuple(float(x) for x in c.split(",")) for c in chunks]
        except ValueError as exc:
            raise InvalidConfig(f"bad coefficient table {text!r}: {exc}") from exc
        return cls(tuple(triples))

    def format(self):
        return "; ".join(", ".join(repr(x) for x in t) for t in self.triples)


class IterReport(NamedTuple):
    steps_used: int
    residual: float
    normalizer: float


def _check_steps(steps):
    if int(steps) != steps or steps < 1:
        raise InvalidConfig(f"steps must be a positive integer, got {steps!r}")
    return int(steps)


def ns_polar(A, coeffs=None, steps=DEFAULT_STEPS):
    """Newton-Schulz approximation of the polar factor of ``A``.

    The iterate is kept tall (``A`` is transposed when it has fewer rows than
    columns) so the Gram product ``XᵀX`` is the smaller of the two.
    """
    A = as_mat(A)
    steps = _check_steps(steps)
    coeffs = coeffs or CoeffTable.baseline()
    fro = float(np.linalg.norm(A))
    if fro == 0.0:
        raise ZeroDirection("Newton-Schulz polar of the zero matrix")
    wide = A.shape[0] < A.shape[1]
    X = (A.T if wide else A) / (NORMALIZER * fro)
    for k in range(steps):
        a, b, c = coeffs.at(k)
        G = X.T @ X
        P = b * G + c * (G @ G) if c != 0.0 else b * G
        X = a * X + X @ P
    G = X.T @ X
    residual = float(np.linalg.norm(G - np.eye(G.shape[0])))
    return (X.T if wide else X).copy(), IterReport(steps, residual, NORMALIZER * fro)


def polar_express_inv_sqrt(A, coeffs=None, steps=DEFAULT_STEPS, eps=DEFAULT_EPS,
                           symmetrize=True):
    """Coupled iteration returning ``Z ≈ (sym(A) + eps I)^{-1/2}``.

    With ``R = I - ZY`` each step multiplies by ``M = ā I + b̄ R + c̄ R²`` where
    ``(ā, b̄, c̄) = (a+b+c, -b-2c, c)``, which is the odd polynomial
    ``x (a + b x² + c x⁴)`` rewritten around ``x² = 1 - r``.
    """
    A = as_mat(A)
    n, k = A.shape
    if n != k:
        raise InvalidInput(f"inverse square root needs a square matrix, got {A.shape}")
    steps = _check_steps(steps)
    coeffs = coeffs or CoeffTable.baseline()
    eye = np.eye(n)
    S = 0.5 * (A + A.T) + eps * eye
    alpha = NORMALIZER * float(np.linalg.norm(S)) + eps
    if alpha == 0.0:
        raise ZeroDirection("inverse square root of the zero matrix")
    Y = S / alpha
    Z = eye.copy()
    for k in range(steps):
        a, b, c = coeffs.at(k)
        ab, bb, cb = a + b + c, -b - 2.0 * c, c
        R = eye - Z @ Y
        if symmetrize:
            R = 0.5 * (R + R.T)
        M = ab * eye + bb * R
        if cb != 0.0:
            M = M + cb * (R @ R)
        Y = Y @ M
        Z = M @ Z
    Z = Z / math.sqrt(alpha)
    residual = float(np.linalg.norm(Z @ S @ Z - eye))
    return Z, IterReport(steps, residual, alpha)


def gram_newton_schulz(M, coeffs=None, steps=DEFAULT_STEPS, eps=DEFAULT_EPS):
    """``M (MᵀM + eps I)^{-1/2}`` via the coupled inverse square root on the Gram side.

    Wide inputs are handled through ``(MMᵀ + eps I)^{-1/2} M``.
    """
    M = as_mat(M, "M")
    if not np.any(M):
        raise ZeroDirection("Gram Newton-Schulz of the zero matrix")
    if M.shape[0] < M.shape[1]:
        Z, rep = polar_express_inv_sqrt(M @ M.T, coeffs, steps, eps)
        return Z @ M, rep
    Z, rep = polar_express_inv_sqrt(M.T @ M, coeffs, steps, eps)
    return M @ Z, rep


def _minimax_odd_quintic(lo, hi, iters=200):
    """Best odd quintic approximation to 1 on ``[lo, hi]`` by the Remez exchange.

    Returns ``(a, b, c, err)``. The optimum equioscillates at ``lo``, two
    interior extrema and ``hi``, starting below 1 at ``lo``.
    """
    x1 = lo + (hi - lo) * 0.25
    x2 = lo + (hi - lo) * 0.75
    sol = None
    for _ in range(iters):
        xs = np.array([lo, x1, x2, hi])
        Amat = np.column_stack([xs, xs ** 3, xs ** 5, [1.0, -1.0, 1.0, -1.0]])
        sol = np.linalg.solve(Amat, np.ones(4))
        a, b, c, _ = sol
        # p'(x) = a + 3b y + 5c y², y = x²
        roots = np.roots([5.0 * c, 3.0 * b, a]) if c != 0.0 else np.array([-a / (3.0 * b)])
        ys = sorted(float(r.real) for r in np.atleast_1d(roots)
                    if abs(r.imag) < 1e-12 and lo * lo < r.real < hi * hi)
        if len(ys) != 2:
            break
        n1, n2 = math.sqrt(ys[0]), math.sqrt(ys[1])
        moved = max(abs(n1 - x1), abs(n2 - x2))
        x1, x2 = n1, n2
        if moved <= 1e-15 * hi:
            break
    a, b, c, err = (float(v) for v in sol)
    return a, b, c, abs(err)


def polar_express_table(steps, lower=1e-3, upper=1.0):
    """Greedy minimax schedule of odd quintics, computed rather than copied.

    Step ``k`` uses the polynomial that best maps the current singular-value
    interval onto 1; the image interval feeds the next step. Once the interval
    is narrower than ``1e-3`` the classical quintic ``(15/8, -10/8, 3/8)`` is
    used, which is the limit of the minimax sequence and avoids an
    ill-conditioned exchange on a tiny interval.
    """
    steps = _check_steps(steps)
    if not 0.0 < lower < upper:
        raise InvalidConfig("need 0 < lower < upper")
    lo, hi = float(lower), float(upper)
    out = []
    for _ in range(steps):
        if hi - lo < 1e-3:
            a, b, c = QUINTIC_TAIL
        else:
            a, b, c, _ = _minimax_odd_quintic(lo, hi)
        out.append((a, b, c))
        grid = np.linspace(lo, hi, 2001)
        vals = grid * (a + b * grid ** 2 + c * grid ** 4)
        lo, hi = float(vals.min()), float(vals.max())
    return CoeffTable(tuple(out))

"""Dense matrices, exact decomposition oracles, norms and centering.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 and rank 2.
``as_mat`` is the single gate that validates and converts inputs.
"""

from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import InvalidInput, NotPSD, SingularGram

RANK_RTOL = 1e-10
_EPS = np.finfo(np.float64).eps
_MAX_SWEEPS = 100


def as_mat(A, name="A"):
    """Return ``A`` as a finite float64 2-D array (a copy only when needed)."""
    try:
        M = np.asarray(A, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InvalidInput(f"{name} is not numeric: {exc}") from exc
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise InvalidInput(f"{name} must be a nonempty 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInput(f"{name} has non-finite entries")
    return M


class SvdResult(NamedTuple):
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray


class Norms(NamedTuple):
    frobenius: float
    spectral: float
    nuclear: float


def _complete_columns(U, valid):
    """Replace the columns of U not flagged in ``valid`` by an orthonormal completion.

    Candidates are the standard basis vectors in index order, orthogonalised
    twice against the columns already accepted, which keeps the result
    deterministic.
    """
    m, r = U.shape
    basis = [U[:, j] for j in range(r) if valid[j]]
    missing = [j for j in range(r) if not valid[j]]
    candidate = 0
    for j in missing:
        while True:
            e = np.zeros(m)
            e[candidate] = 1.0
            candidate += 1
            for _ in range(2):
                for b in basis:
                    e -= (b @ e) * b
            nrm = np.linalg.norm(e)
            if nrm > 0.5:
                e /= nrm
                break
        U[:, j] = e
        basis.append(e)
    return U


def _svd_tall(A, backend):
    m, n = A.shape
    sweeps, col_norms = (kernels.jacobi_sweeps, kernels.column_norms) if backend is None \
        else kernels.get_backend(backend)
    scale = float(np.max(np.abs(A)))
    if scale == 0.0:
        return np.eye(m, n), np.zeros(n), np.eye(n), scale
    At = np.ascontiguousarray((A / scale).T)
    Vt = np.ascontiguousarray(np.eye(n))
    sweeps(At, Vt, float(max(m, 1)) * _EPS, _MAX_SWEEPS)
    sig = np.asarray(col_norms(At))
    order = np.argsort(-sig, kind="stable")
    sig = sig[order]
    At = At[order]
    V = Vt[order].T.copy()
    U = np.zeros((m, n))
    valid = sig > 0.0
    U[:, valid] = (At[valid] / sig[valid, None]).T
    if not np.all(valid):
        U = _complete_columns(U, valid)
    return U, sig * scale, V, scale


def svd(A, backend=None):
    """Compact SVD by one-sided Jacobi on the smaller Gram side.

    Returns ``SvdResult(U, sigma, V)`` with ``r = min(m, n)`` columns, singular
    values in nonincreasing order, and the largest-magnitude entry of every
    column of ``U`` made positive. ``backend`` may force ``"python"`` or
    ``"cython"``; by default the import-time choice in ``kernels`` is used.
    """
    A = as_mat(A)
    m, n = A.shape
    if m >= n:
        U, sig, V, _ = _svd_tall(A, backend)
    else:
        V, sig, U, _ = _svd_tall(A.T, backend)
    for j in range(U.shape[1]):
        k = int(np.argmax(np.abs(U[:, j])))
        if U[k, j] < 0:
            U[:, j] = -U[:, j]
            V[:, j] = -V[:, j]
    return SvdResult(U, sig, V)


def numerical_rank(x):
    """Count of singular values above ``RANK_RTOL * sigma_1``.

    Accepts either a matrix or an already computed singular value vector.
    """
    x = np.asarray(x, dtype=np.float64)
    sig = svd(x).sigma if x.ndim == 2 else x
    if sig.size == 0 or sig[0] <= 0.0:
        return 0
    return int(np.count_nonzero(sig > RANK_RTOL * sig[0]))


def polar_exact(A):
    """Orthogonal polar factor ``U_r V_rᵀ`` over the numerical rank of ``A``.

    For full-rank input this is the usual ``UVᵀ``; directions with numerically
    zero singular values are dropped, so the zero matrix maps to zero.
    """
    U, sig, V = svd(A)
    r = numerical_rank(sig)
    return U[:, :r] @ V[:, :r].T


def inv_sqrt_exact(S, eps=0.0):
    """``(S + eps I)^{-1/2}`` through a symmetric eigendecomposition."""
    S = as_mat(S, "S")
    n, k = S.shape
    if n != k:
        raise InvalidInput(f"S must be square, got {S.shape}")
    mag = max(1.0, float(np.max(np.abs(S))))
    if float(np.max(np.abs(S - S.T))) > 1e-10 * mag:
        raise InvalidInput("S is not symmetric")
    w, Q = np.linalg.eigh(0.5 * (S + S.T))
    if w[0] < -1e-8 * max(1.0, abs(w[-1])):
        raise NotPSD(f"smallest eigenvalue {w[0]!r} is negative")
    w = np.maximum(w, 0.0) + eps
    if eps <= 0.0 and w[0] <= n * _EPS * w[-1]:
        raise SingularGram("matrix is singular and no damping was given")
    if w[0] <= 0.0:
        raise SingularGram("damped matrix is singular")
    return (Q / np.sqrt(w)) @ Q.T


def norms(A):
    A = as_mat(A)
    sig = svd(A).sigma
    return Norms(float(np.linalg.norm(A)), float(sig[0]), float(np.sum(sig)))


def nuclear_norm(A):
    return float(np.sum(svd(A).sigma))


def centering_projector(n):
    """Return ``I - 11ᵀ/n``."""
    if int(n) != n or n < 1:
        raise InvalidInput(f"n must be a positive integer, got {n!r}")
    n = int(n)
    return np.eye(n) - np.full((n, n), 1.0 / n)


def center_rows(A):
    """Apply the centering projector on the left without forming it.

    The column means are taken relative to the first row, so a matrix whose
    rows are all identical centers to exactly zero.
    """
    A = np.asarray(A, dtype=np.float64)
    shifted = A - A[:1]
    return shifted - shifted.mean(axis=0, keepdims=True)


def format_matrix(A):
    """Text form: a ``rows cols`` header then one line per row, shortest round-trip floats."""
    A = as_mat(A)
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in A]
    return "\n".join(lines) + "\n"


def parse_matrix(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InvalidInput("empty matrix text")
    try:
        rows, cols = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise InvalidInput(f"line 1: bad header {lines[0]!r}") from exc
    if len(lines) - 1 != rows:
        raise InvalidInput(f"expected {rows} rows, found {len(lines) - 1}")
    data = []
    for i, ln in enumerate(lines[1:], start=2):
        vals = ln.split()
        if len(vals) != cols:
            raise InvalidInput(f"line {i}: expected {cols} entries, found {len(vals)}")
        try:
            data.append([float(v) for v in vals])
        except ValueError as exc:
            raise InvalidInput(f"line {i}: {exc}") from exc
    return as_mat(np.array(data).reshape(rows, cols))


def write_matrix(path, A):
    with open(path, "w") as fh:
        fh.write(format_matrix(A))


def read_matrix(path):
    with open(path) as fh:
        return parse_matrix(fh.read())

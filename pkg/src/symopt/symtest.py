"""Group-action generators and residual checks for equivariance claims."""

import csv
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import InvalidConfig
from .updates import UpdateSpec, apply_update

ACTION_KINDS = ("Orthogonal", "Permutation", "Identity")
DEFAULT_DIMS = ((8, 5), (5, 8), (8, 8), (64, 8))
DEFAULT_TRIALS = 100

# Largest action allowed on each side of a weight block; a permutation is an
# orthogonal matrix, so Orthogonal admits all three kinds.
_LEFT = {"BiOrthogonal": "Orthogonal", "LPRO": "Permutation", "TransposedLPRO": "Orthogonal",
         "LMHeadQuotient": "Permutation", "RouterQuotient": "Permutation"}
_RIGHT = {"BiOrthogonal": "Orthogonal", "LPRO": "Orthogonal", "TransposedLPRO": "Permutation",
          "LMHeadQuotient": "Orthogonal", "RouterQuotient": "Orthogonal"}
_RANK = {"Identity": 0, "Permutation": 1, "Orthogonal": 2}


@dataclass(frozen=True)
class GroupAction:
    left: str = "Identity"
    right: str = "Identity"
    shift: bool = False

    def __post_init__(self):
        if self.left not in ACTION_KINDS or self.right not in ACTION_KINDS:
            raise InvalidConfig(f"unknown action kinds {self.left!r}/{self.right!r}")

    @property
    def label(self):
        s = f"{self.left[0]}x{self.right[0]}"
        return s + "+shift" if self.shift else s


def random_orthogonal(n, seed):
    """Haar-distributed orthogonal matrix from the QR of a seeded Gaussian."""
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def random_permutation(n, seed):
    rng = np.random.default_rng(seed)
    return np.eye(n)[rng.permutation(n)]


def _group_element(kind, n, seed):
    if kind == "Orthogonal":
        return random_orthogonal(n, seed)
    if kind == "Permutation":
        return random_permutation(n, seed)
    return np.eye(n)


def check_admissible(spec, action):
    tag = spec.geometry.tag
    if _RANK[action.left] > _RANK[_LEFT[tag]] or _RANK[action.right] > _RANK[_RIGHT[tag]]:
        raise InvalidConfig(f"action {action.label} is not admissible for geometry {tag}")
    if action.shift and not spec.geometry.quotient:
        raise InvalidConfig("shared-row shifts are only admissible for quotient geometries")


def equivariance_residual(update: Union[UpdateSpec, Callable], action, trials=DEFAULT_TRIALS,
                          seed=0, dims=DEFAULT_DIMS, strict=True):
    """Max over trials and dims of ``‖U(gD) - gU(D)‖_F / max(1, ‖U(D)‖_F)``.

    ``update`` is an ``UpdateSpec`` or any callable map on matrices. With
    ``strict=False`` inadmissible actions are evaluated anyway, which is how
    negative controls are run.
    """
    if isinstance(update, UpdateSpec):
        if strict:
            check_admissible(update, action)
        spec = update

        def fn(D):
            return apply_update(D, spec)
    else:
        fn = update
    worst = 0.0
    for di, (m, n) in enumerate(dims):
        for t in range(trials):
            s = seed + 1000003 * di + t
            rng = np.random.default_rng([s, 17])
            D = rng.standard_normal((m, n))
            P = _group_element(action.left, m, [s, 1])
            Q = _group_element(action.right, n, [s, 2])
            gD = P @ D @ Q.T
            if action.shift:
                gD = gD + np.outer(np.ones(m), rng.standard_normal(n))
            base = fn(D)
            res = np.linalg.norm(fn(gD) - P @ base @ Q.T) / max(1.0, np.linalg.norm(base))
            worst = max(worst, float(res))
    return worst


def horizontality_residual(U):
    U = np.asarray(U, dtype=np.float64)
    col = np.abs(U.sum(axis=0)).max()
    return float(col / max(1.0, np.abs(U).max()))


def write_residual_csv(path, rows):
    """Rows of ``(class, action, trials, max_residual)``; floats in shortest round-trip form."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "action", "trials", "max_residual"])
        for cls, action, trials, res in rows:
            w.writerow([cls, action, int(trials), repr(float(res))])

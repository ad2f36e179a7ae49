"""Pure numpy fallback for the one-sided Jacobi sweep kernel.

Both backends share the same contract: ``At`` holds the columns of the
working matrix as rows (so each rotation touches two contiguous rows), and
``Vt`` accumulates the right rotations the same way. The arrays are
modified in place and the number of sweeps performed is returned.
"""

import math

import numpy as np


def jacobi_sweeps(At, Vt, tol, max_sweeps):
    n = At.shape[0]
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for p in range(n - 1):
            ap = At[p]
            for q in range(p + 1, n):
                aq = At[q]
                alpha = float(ap @ ap)
                beta = float(aq @ aq)
                gamma = float(ap @ aq)
                if alpha == 0.0 or beta == 0.0:
                    continue
                if abs(gamma) <= tol * math.sqrt(alpha) * math.sqrt(beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * ap - s * aq
                At[q] = s * ap + c * aq
                At[p] = new_p
                vp = Vt[p].copy()
                Vt[p] = c * vp - s * Vt[q]
                Vt[q] = s * vp + c * Vt[q]
        if not rotated:
            return sweep
    return max_sweeps


def column_norms(At):
    """Overflow-safe Euclidean norms of the rows of ``At``.

    Scaling by the row maximum means a row with a single nonzero entry
    gets back exactly its absolute value, which the sign lift relies on.
    """
    scale = np.max(np.abs(At), axis=1)
    out = np.zeros(At.shape[0])
    nz = scale > 0
    scaled = At[nz] / scale[nz, None]
    out[nz] = scale[nz] * np.sqrt(np.sum(scaled * scaled, axis=1))
    return out

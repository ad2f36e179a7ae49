import os
import subprocess
import sys

import numpy as np
import pytest

from symopt import kernels, matcore


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_python_backend_matches_compiled():
    try:
        kernels.get_backend("cython")
    except ImportError:
        pytest.skip("compiled kernel not built")
    rng = np.random.default_rng(0)
    for shape in [(8, 8), (16, 4), (5, 9), (64, 8)]:
        A = rng.standard_normal(shape)
        c = matcore.svd(A, backend="cython")
        p = matcore.svd(A, backend="python")
        assert np.allclose(c.sigma, p.sigma, rtol=1e-13, atol=1e-14)
        assert np.allclose(c.U @ np.diag(c.sigma) @ c.V.T, A, atol=1e-12)
        assert np.allclose(p.U @ np.diag(p.sigma) @ p.V.T, A, atol=1e-12)


def test_single_nonzero_column_norm_is_exact():
    At = np.zeros((1, 4))
    At[0, 2] = -3.0e-5
    for name in ("python", "cython"):
        try:
            _, norms = kernels.get_backend(name)
        except ImportError:
            continue
        assert np.asarray(norms(At))[0] == 3.0e-5


def test_environment_switch_forces_fallback():
    env = dict(os.environ, SYMOPT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from symopt import kernels; print(kernels.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")

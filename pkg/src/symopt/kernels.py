"""Backend selection for the hot Jacobi kernel.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``SYMOPT_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy fallback is used. ``BACKEND`` records the choice.
"""

import os

from . import _jacobi_py

_force_python = os.environ.get("SYMOPT_PURE_PYTHON", "") not in ("", "0")

compiled = None
if not _force_python:
    try:
        from . import _jacobi as compiled
    except ImportError:
        compiled = None

if compiled is not None:
    jacobi_sweeps = compiled.jacobi_sweeps
    column_norms = compiled.column_norms
    BACKEND = "cython"
else:
    jacobi_sweeps = _jacobi_py.jacobi_sweeps
    column_norms = _jacobi_py.column_norms
    BACKEND = "python"


def get_backend(name):
    """Return ``(jacobi_sweeps, column_norms)`` for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _jacobi_py.jacobi_sweeps, _jacobi_py.column_norms
    if name == "cython":
        if compiled is None:
            try:
                from . import _jacobi as mod
            except ImportError as exc:
                raise ImportError("compiled Jacobi kernel is not built") from exc
        else:
            mod = compiled
        return mod.jacobi_sweeps, mod.column_norms
    raise ValueError(f"unknown backend {name!r}")

"""Backend selection for the hot loops.

The compiled extension ``lossqkd._kernels`` is used when importable; set
``LOSSQKD_PURE_PYTHON=1`` to force the NumPy fallback.  Both expose
``bp_decode``, ``toeplitz_mul`` and ``longest_ones_runs`` with identical
signatures and results.
"""
import os

from . import _pykernels

BACKENDS = {"python": _pykernels}

try:
    from . import _kernels as _ckernels
except ImportError:  # pragma: no cover - depends on build
    _ckernels = None
else:
    BACKENDS["cython"] = _ckernels

if _ckernels is not None and not os.environ.get("LOSSQKD_PURE_PYTHON"):
    BACKEND = "cython"
    _impl = _ckernels
else:
    BACKEND = "python"
    _impl = _pykernels

bp_decode = _impl.bp_decode
toeplitz_mul = _impl.toeplitz_mul
longest_ones_runs = _impl.longest_ones_runs


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: the active one)."""
    if name is None:
        return _impl
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {sorted(BACKENDS)}") from None

"""Hot numerical kernels with a compiled core and a numpy fallback.

The compiled extension is used when it was built and importable; setting
``BILEVEL_KIT_PURE_PYTHON=1`` forces the numpy versions. ``BACKEND`` reports
which one is active, and ``backends()`` exposes both for parity tests and
benchmarks.

The compiled cross-entropy kernels loop over rows and beat numpy for narrow
models; once the weight matrix has more than ``COMPILED_MAX_WEIGHTS`` entries
numpy's BLAS products are faster, so those calls are routed to the fallback.
"""

import os

from . import _fallback

_NAMES = (
    "soft_threshold",
    "soft_threshold_mask",
    "xent_losses",
    "xent_grad",
    "xent_hvp",
    "xent_mixed",
)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

if _ckernels is not None and not os.environ.get("BILEVEL_KIT_PURE_PYTHON"):
    _active = _ckernels
    BACKEND = "cython"
else:
    _active = _fallback
    BACKEND = "python"

COMPILED_MAX_WEIGHTS = 64

soft_threshold = _active.soft_threshold
soft_threshold_mask = _active.soft_threshold_mask


def _for(W):
    return _active if W.size <= COMPILED_MAX_WEIGHTS else _fallback


def xent_losses(U, labels, W):
    return _for(W).xent_losses(U, labels, W)


def xent_grad(U, labels, w, W):
    return _for(W).xent_grad(U, labels, w, W)


def xent_hvp(U, w, W, V):
    return _for(W).xent_hvp(U, w, W, V)


def xent_mixed(U, labels, W, V):
    return _for(W).xent_mixed(U, labels, W, V)


def backends():
    """Map backend name to module for every backend available here."""
    out = {"python": _fallback}
    if _ckernels is not None:
        out["cython"] = _ckernels
    return out


__all__ = ["BACKEND", "COMPILED_MAX_WEIGHTS", "backends", *_NAMES]

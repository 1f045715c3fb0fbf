"""Sum-product kernel dispatch.

The compiled ``_bp_core`` extension is used when it imports; otherwise the
numpy implementation in ``_bp_py``.  Set ``RFFCOMM_BACKEND=python`` to force
the fallback.
"""

import logging
import os

from . import _bp_py
from ._bp_py import LLR_CLIP, PROD_CLIP, TANH_CLIP  # noqa: F401

log = logging.getLogger(__name__)

try:
    from . import _bp_core
except ImportError:  # extension not built
    _bp_core = None

BACKENDS = ("python",) + (("cython",) if _bp_core is not None else ())
BACKEND = "cython" if _bp_core is not None and os.environ.get("RFFCOMM_BACKEND", "") != "python" else "python"


def set_backend(name):
    """Switch kernels at runtime; returns the previous backend name."""
    global BACKEND
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; choose from {BACKENDS}")
    prev, BACKEND = BACKEND, name
    return prev


def decode(system, llr, max_iter):
    if BACKEND == "cython":
        return _bp_core.decode(system.check_ptr, system.edge_bit, llr, max_iter)
    return _bp_py.decode(system.check_slots, system.bit_slots, system.edge_bit, llr, max_iter)

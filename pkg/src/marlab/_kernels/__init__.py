"""Hot inner loops: Bridge batch stepping and GAE.

The compiled extension ``_ckernels`` is used when it imports; otherwise the
pure-Python ``_fallback`` is used. Set ``MARLAB_PURE_PYTHON=1`` to force the
fallback. Both expose identical functions and produce identical results.
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("MARLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback


def bridge_step_batch(valid, goals, pos, done, actions, penalty: float, impl=None):
    """Dispatch to the active backend after coercing dtypes the compiled kernel needs."""
    impl = impl or _impl
    return impl.bridge_step_batch(
        np.ascontiguousarray(valid, dtype=np.uint8),
        np.ascontiguousarray(goals, dtype=np.int64),
        pos,
        done,
        np.ascontiguousarray(actions, dtype=np.int64),
        float(penalty),
    )


def gae(rewards, values, dones, gamma: float, lam: float, impl=None) -> np.ndarray:
    impl = impl or _impl
    return impl.gae(
        np.ascontiguousarray(rewards, dtype=np.float64),
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(dones, dtype=np.uint8),
        float(gamma),
        float(lam),
    )


def compiled_module():
    """The compiled module, or ``None`` when it is not built."""
    try:
        from . import _ckernels

        return _ckernels
    except ImportError:
        return None

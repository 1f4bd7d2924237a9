"""Kernel backend selection.

Hot numeric kernels (auxiliary-map forward/JVP/backward passes and the RNG
fill loop) exist in two interchangeable lanes:

* ``numba``: ``@njit``-compiled loops (default when numba imports cleanly)
* ``numpy``: pure vectorized numpy, always available

The lane is picked once from the ``SGF_BACKEND`` environment variable
("numba" or "numpy") and can be overridden at runtime with `set_backend`
or the `use_backend` context manager.  The RNG streams are bit-identical
across lanes; float kernel outputs agree to roundoff but are only
guaranteed bit-reproducible when the lane is held fixed.
"""

import os
from contextlib import contextmanager

_BACKENDS = ("numba", "numpy")
_modules = {}
_active = None


def _load(name):
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {_BACKENDS}")
    if name not in _modules:
        if name == "numpy":
            from . import _kernels_numpy as mod
        else:
            from . import _kernels_numba as mod
        _modules[name] = mod
    return _modules[name]


def backend_available(name):
    try:
        _load(name)
        return True
    except ImportError:
        return False


def active_backend():
    """Resolve (once) and return the active lane name."""
    global _active
    if _active is None:
        forced = os.environ.get("SGF_BACKEND", "").strip().lower()
        if forced:
            _load(forced)
            _active = forced
        elif backend_available("numba"):
            _active = "numba"
        else:
            _active = "numpy"
    return _active


def set_backend(name):
    global _active
    _load(name)
    _active = name


@contextmanager
def use_backend(name):
    prev = active_backend()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def kernels():
    """Kernel module for the active lane."""
    return _load(active_backend())

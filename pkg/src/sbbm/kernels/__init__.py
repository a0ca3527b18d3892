"""Trajectory kernel backends.

``_core`` is the compiled (Cython) kernel; ``pyfallback`` is the numpy
reference.  Both consume the same Philox bit generator with an identical draw
order, so a trajectory is reproducible across backends.  The compiled kernel
is used when available; set ``SBBM_BACKEND=python`` to force the fallback.
"""

import os

from . import pyfallback

STATUS_OK = pyfallback.STATUS_OK
STATUS_CAP = pyfallback.STATUS_CAP
STATUS_GRID = pyfallback.STATUS_GRID
STATUS_MAXSTEPS = pyfallback.STATUS_MAXSTEPS

EV_ORDINARY = pyfallback.EV_ORDINARY
EV_CATALYTIC = pyfallback.EV_CATALYTIC
EV_CONFLICT_ORDINARY = pyfallback.EV_CONFLICT_ORDINARY
EV_CONFLICT_CATALYTIC = pyfallback.EV_CONFLICT_CATALYTIC

try:
    from . import _core
except ImportError:  # pragma: no cover - build-environment dependent
    _core = None


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: best available)."""
    if name is None:
        name = os.environ.get("SBBM_BACKEND", "")
    if name in ("", "auto"):
        return _core if _core is not None else pyfallback
    if name == "python":
        return pyfallback
    if name == "cython":
        if _core is None:
            raise RuntimeError("compiled kernel is not available")
        return _core
    raise ValueError(f"unknown backend {name!r}")


BACKEND = get_backend().BACKEND_NAME


def run_trajectory(*args, **kwargs):
    return get_backend().run_trajectory(*args, **kwargs)

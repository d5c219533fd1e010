"""Kernel backend selection.

The hot loops (thinning simulation, feedback schedule construction, schedule
replay) live in a compiled extension with a pure-Python twin.  The compiled
one is picked at import when present; set MIHEXEC_BACKEND=python or
MIHEXEC_BACKEND=compiled to force a side.
"""

from __future__ import annotations

import os

from . import _pykernels

_requested = os.environ.get("MIHEXEC_BACKEND", "auto").strip().lower() or "auto"
if _requested not in {"auto", "compiled", "python"}:
    raise RuntimeError(f"MIHEXEC_BACKEND must be auto|compiled|python, got {_requested!r}")

if _requested == "python":
    _impl = _pykernels
    HAVE_COMPILED = False
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        HAVE_COMPILED = True
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _pykernels
        HAVE_COMPILED = False

BACKEND_NAME = _impl.BACKEND_NAME
simulate_events = _impl.simulate_events
feedback_schedule = _impl.feedback_schedule
replay_schedule = _impl.replay_schedule


def get_backend(name: str):
    """Return a specific kernel module by name ('python' or 'compiled')."""
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _kernels  # raises ImportError when not built

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401

        names.append("compiled")
    except ImportError:
        pass
    return names

"""Fitting kernel backends.

The compiled Cython kernel is preferred when the extension built; the NumPy
implementation is the fallback. TISTACK_KERNEL=c|py forces a backend (the
benchmark and the twin-consistency tests use this).
"""

import os

from . import irfit_py

_requested = os.environ.get("TISTACK_KERNEL", "auto")

_compiled = None
if _requested in ("auto", "c"):
    try:
        from . import _irfit_c as _compiled
    except ImportError:
        _compiled = None
        if _requested == "c":
            raise ImportError(
                "TISTACK_KERNEL=c but the compiled kernel is not available"
            ) from None

if _requested == "py":
    _backend = irfit_py
else:
    _backend = _compiled if _compiled is not None else irfit_py

BACKEND = "c" if _backend is not irfit_py else "py"

fit_ir_two_point = _backend.fit_ir_two_point


def available_backends():
    names = ["py"]
    if _compiled is not None or _requested != "c":
        try:
            from . import _irfit_c  # noqa: F401
            names.insert(0, "c")
        except ImportError:
            pass
    return names


def get_backend(name: str):
    """Fetch a specific backend module by name ('c' or 'py')."""
    if name == "py":
        return irfit_py
    if name == "c":
        from . import _irfit_c
        return _irfit_c
    raise ValueError(f"unknown kernel backend {name!r}")

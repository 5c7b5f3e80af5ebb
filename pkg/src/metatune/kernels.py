"""Backend selection for the Q-learning/PER kernel.

The compiled Cython module is used when importable; otherwise the pure
Python reference is used.  Set ``METATUNE_PURE_PYTHON=1`` to force the
fallback.
"""

import os
from types import ModuleType

from metatune import _qkernel_py

try:
    from metatune import _qkernel as _compiled
except ImportError:  # extension not built
    _compiled = None


def get_backend(name: str | None = None) -> ModuleType:
    """Return a kernel module: ``"cython"``, ``"python"``, or the default."""
    if name is None:
        return impl
    if name == "python":
        return _qkernel_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("the compiled kernel metatune._qkernel is not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


if _compiled is not None and not os.environ.get("METATUNE_PURE_PYTHON"):
    impl, BACKEND = _compiled, "cython"
else:
    impl, BACKEND = _qkernel_py, "python"

HAVE_COMPILED = _compiled is not None

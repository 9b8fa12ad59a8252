"""Kernel backend selection.

Prefers the compiled extension when it was built; otherwise falls back to the
numpy implementation. Set METADR_KERNEL=python to force the fallback (used by
the benchmark and the backend-parity tests).
"""

import os

_forced = os.environ.get("METADR_KERNEL", "").lower()
if _forced in ("py", "python", "numpy"):
    from metadr import _kernels_py as _impl

    BACKEND = "python"
elif _forced in ("ext", "cython", "c"):
    from metadr import _kernels as _impl  # type: ignore[attr-defined]

    BACKEND = "ext"
else:
    try:
        from metadr import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "ext"
    except ImportError:
        from metadr import _kernels_py as _impl

        BACKEND = "python"

forward_one = _impl.forward_one
forward_batch = _impl.forward_batch
backward_batch = _impl.backward_batch

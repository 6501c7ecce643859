"""Select the trajectory stepping kernel at import time.

The compiled Cython kernel is preferred; the numpy fallback has identical
semantics.  Set ``LOPHASE_NO_EXT=1`` to force the fallback (used by the
benchmark and by cross-backend tests).
"""

import os

if os.environ.get("LOPHASE_NO_EXT"):
    from ._stepper_py import run_steps

    STEPPER_BACKEND = "python"
else:
    try:
        from ._stepper import run_steps  # type: ignore[no-redef]

        STEPPER_BACKEND = "compiled"
    except ImportError:
        from ._stepper_py import run_steps  # type: ignore[no-redef]

        STEPPER_BACKEND = "python"

__all__ = ["run_steps", "STEPPER_BACKEND"]

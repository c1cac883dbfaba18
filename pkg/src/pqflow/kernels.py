"""Backend selection for the stiff unit-speed flow kernel.

The compiled extension is used when it imports; otherwise the pure-Python
module with the same algorithm.  Set PQFLOW_PURE_PYTHON=1 to force the
fallback.
"""
import os

from . import _spiral_kernel_py as python_backend

compiled_backend = None
if not os.environ.get("PQFLOW_PURE_PYTHON"):
    try:
        from . import _spiral_kernel as compiled_backend
    except ImportError:
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

unit_speed_flow = backend.unit_speed_flow
field_batch = backend.field_batch

STATUS_NAMES = {0: "done", 1: "arclen", 2: "max_steps", 3: "stationary", 4: "underflow"}

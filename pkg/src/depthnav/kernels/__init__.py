"""Hot kernels with a compiled implementation and a numpy fallback.

The compiled extension is used when it imports cleanly; set
``DEPTHNAV_PURE_PYTHON=1`` to force the fallback.
"""

import os

from depthnav.kernels import _raycast_py

BACKEND = "python"
raycast = _raycast_py.raycast

if not os.environ.get("DEPTHNAV_PURE_PYTHON"):
    try:
        from depthnav.kernels import _raycast as _raycast_ext
    except ImportError:
        pass
    else:
        raycast = _raycast_ext.raycast
        BACKEND = "cython"

__all__ = ["BACKEND", "raycast"]

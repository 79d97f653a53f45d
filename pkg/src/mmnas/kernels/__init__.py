"""Hot spatial kernels with two interchangeable backends.

The JIT (numba) backend is the default; set MMNAS_KERNELS=numpy to force
the pure-numpy fallback, or MMNAS_KERNELS=numba to fail loudly when numba
is missing. The choice is made once at import time. benchmarks/ holds a
script comparing the two.
"""

from __future__ import annotations

import os

# Prefer omp/workqueue so numba never probes the (possibly stale) TBB install.
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

_choice = os.environ.get("MMNAS_KERNELS", "auto").lower()

if _choice in ("auto", ""):
    try:
        from . import numba_backend as _impl

        BACKEND = "numba"
    except ImportError:
        from . import numpy_backend as _impl

        BACKEND = "numpy"
elif _choice == "numba":
    from . import numba_backend as _impl

    BACKEND = "numba"
elif _choice == "numpy":
    from . import numpy_backend as _impl

    BACKEND = "numpy"
else:
    raise RuntimeError(f"MMNAS_KERNELS must be 'numba', 'numpy', or 'auto', got '{_choice}'")

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
depthwise_forward = _impl.depthwise_forward
depthwise_backward = _impl.depthwise_backward
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
avgpool_forward = _impl.avgpool_forward
avgpool_backward = _impl.avgpool_backward

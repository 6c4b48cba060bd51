"""Hot-loop kernels with a compiled core and a pure-Python fallback.

The compiled extension is preferred when present; set TANGENTSTAT_PURE=1
to force the pure-Python backend. Both backends implement identical
arithmetic and produce bit-identical results (see tests/test_kernels.py).
"""

import os

from . import _fallback

if os.environ.get("TANGENTSTAT_PURE", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

KIND_HARMONIC = _fallback.KIND_HARMONIC
KIND_POLYNOMIAL = _fallback.KIND_POLYNOMIAL
KIND_DOUBLE_WELL = _fallback.KIND_DOUBLE_WELL

rk4_path = _impl.rk4_path
rk4_advect = _impl.rk4_advect
rk4_tangent = _impl.rk4_tangent
metropolis_chain = _impl.metropolis_chain

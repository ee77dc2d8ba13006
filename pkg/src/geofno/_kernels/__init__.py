"""Kernel backend selection.

The compiled Cython extension is preferred; the pure-numpy fallback is used
when the extension is missing or GEOFNO_PURE_PYTHON=1 is set.  Both expose:
phase_build, dtheta_combine, gelu_fwd, gelu_bwd, adam_update.
"""

import os

from . import numpy_impl

if os.environ.get("GEOFNO_PURE_PYTHON", "0") == "1":
    _impl = numpy_impl
else:
    try:
        from . import _fast as _impl
    except ImportError:
        _impl = numpy_impl

IS_COMPILED = _impl.IS_COMPILED
BACKEND = "compiled" if IS_COMPILED else "numpy"

phase_build = _impl.phase_build
dtheta_combine = _impl.dtheta_combine
gelu_fwd = _impl.gelu_fwd
gelu_bwd = _impl.gelu_bwd
adam_update = _impl.adam_update

"""Hot-kernel dispatch.

Uses the compiled extension when it imports, the numpy fallback otherwise.
Set ``CRITLAB_KERNELS=python`` to force the fallback.
"""

import os

from critlab import _pykernels

if os.environ.get("CRITLAB_KERNELS", "").lower() == "python":
    _impl = _pykernels
else:
    try:
        from critlab import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND
interp = _impl.interp
newton_invert = _impl.newton_invert
maximal = _impl.maximal


def backend_module(name):
    """Return the kernel module for ``name`` ("cython" or "python")."""
    if name == "python":
        return _pykernels
    from critlab import _ckernels

    return _ckernels

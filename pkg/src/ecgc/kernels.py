"""Hot-loop kernels, compiled when available.

The Cython extension ``ecgc._kernels`` is imported if it was built; otherwise
the numpy/pure-Python twins in ``ecgc._kernels_py`` are used. Set
``ECGC_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("ECGC_PURE_PYTHON", "") == "1":
    _impl = _kernels_py
    COMPILED = False
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        COMPILED = True
    except ImportError:  # pragma: no cover - depends on build environment
        _impl = _kernels_py
        COMPILED = False

pick_peaks = _impl.pick_peaks
sampen_windows = _impl.sampen_windows
best_splits = _impl.best_splits

__all__ = ["COMPILED", "pick_peaks", "sampen_windows", "best_splits"]

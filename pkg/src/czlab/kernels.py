"""Kernel selection: compiled extension when available, numpy otherwise.

Set CZLAB_KERNELS=py (or =c) to force a backend; forcing `c` raises if the
extension did not build.
"""

import os

from czlab import _kernels_py

_forced = os.environ.get("CZLAB_KERNELS", "").strip().lower()

if _forced == "py":
    _impl = _kernels_py
    IMPLEMENTATION = "python"
else:
    try:
        from czlab import _kernels_c as _impl  # type: ignore[no-redef]

        IMPLEMENTATION = "c"
    except ImportError:
        if _forced == "c":
            raise
        _impl = _kernels_py
        IMPLEMENTATION = "python"

disc_sum_map = _impl.disc_sum_map

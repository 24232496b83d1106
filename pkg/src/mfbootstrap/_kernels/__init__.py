"""Banded linear-algebra kernels with backend selection.

The compiled Cython extension is preferred; the pure-numpy twin is used when
the extension is missing (source checkout without a build) or fails to
import.  Both expose the same four functions and the same banded storage
convention, documented in ``_banded_py``.

``BACKEND`` names the active implementation ("cython" or "python") and is
recorded in run manifests.
"""

from . import _banded_py

try:  # pragma: no cover - depends on build environment
    from . import _banded_cy as _impl

    BACKEND = "cython"
except ImportError:  # pragma: no cover
    _impl = _banded_py
    BACKEND = "python"

cholesky_banded_lower = _impl.cholesky_banded_lower
forward_solve_banded = _impl.forward_solve_banded
banded_lower_matvec = _impl.banded_lower_matvec
banded_symmetric_matvec = _impl.banded_symmetric_matvec

__all__ = [
    "BACKEND",
    "cholesky_banded_lower",
    "forward_solve_banded",
    "banded_lower_matvec",
    "banded_symmetric_matvec",
]

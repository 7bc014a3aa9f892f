"""Numerical backend selection.

Hot kernels ship in two variants: numba-compiled loops and vectorized
numpy/scipy fallbacks.  The active variant is picked once at import time
from the PHOTONMOD_BACKEND environment variable:

    PHOTONMOD_BACKEND=numba   require numba, fail loudly if missing
    PHOTONMOD_BACKEND=numpy   force the pure-numpy path
    unset or "auto"           numba when importable, numpy otherwise
"""

import os

try:
    import numba  # noqa: F401
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

_requested = os.environ.get("PHOTONMOD_BACKEND", "auto").strip().lower() or "auto"

if _requested == "numpy":
    USE_NUMBA = False
elif _requested == "numba":
    if not HAVE_NUMBA:
        raise ImportError(
            "PHOTONMOD_BACKEND=numba but numba is not importable; "
            "install numba or unset the variable"
        )
    USE_NUMBA = True
elif _requested == "auto":
    USE_NUMBA = HAVE_NUMBA
else:
    raise ValueError(
        f"PHOTONMOD_BACKEND={_requested!r}: expected 'numba', 'numpy', or 'auto'"
    )

BACKEND = "numba" if USE_NUMBA else "numpy"

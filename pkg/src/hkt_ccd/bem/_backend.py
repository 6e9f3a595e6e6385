"""Select the inflow-angle solver: compiled kernel when built, numpy otherwise.

Set ``HKT_BEM_BACKEND=numpy`` to force the pure-Python path.
"""

import os

from . import _fallback

SOLVERS = {"numpy": _fallback.solve_phi}

try:
    from . import _kernel
except ImportError:  # extension not built
    _kernel = None
else:
    SOLVERS["cython"] = _kernel.solve_phi

_requested = os.environ.get("HKT_BEM_BACKEND", "").strip().lower()
if _requested and _requested not in SOLVERS:
    raise ImportError(f"HKT_BEM_BACKEND={_requested!r} unavailable; have {sorted(SOLVERS)}")
BACKEND = _requested or ("cython" if "cython" in SOLVERS else "numpy")
solve_phi = SOLVERS[BACKEND]

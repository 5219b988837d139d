"""Kernel backend selection.

Hot kernels (sparse products, factorizations, assembly scatter) exist in two
signature-compatible flavours: a JIT-compiled module (:mod:`._kernels_nb`)
and a pure-NumPy module (:mod:`._kernels_np`).  The active one is chosen at
import time from the ``POROPREC_BACKEND`` environment variable:

* ``numba`` (default) -- JIT kernels; falls back to NumPy with a warning if
  numba is not importable.
* ``numpy`` -- pure-NumPy reference kernels.  Correct at any size but not
  sized for the largest benchmark grids.

Any other value raises ``ValueError``.
"""

from __future__ import annotations

import os
import warnings

_ENV_VAR = "POROPREC_BACKEND"
_VALID = ("numba", "numpy")


def _select():
    requested = os.environ.get(_ENV_VAR, "numba").strip().lower()
    if requested not in _VALID:
        raise ValueError(
            f"{_ENV_VAR}={requested!r} is not a valid backend; "
            f"choose one of {_VALID}"
        )
    if requested == "numba":
        try:
            from . import _kernels_nb as mod
            return "numba", mod
        except ImportError as exc:
            warnings.warn(
                f"numba backend unavailable ({exc}); falling back to the "
                "pure-NumPy kernels",
                RuntimeWarning,
                stacklevel=2,
            )
    from . import _kernels_np as mod
    return "numpy", mod


BACKEND, kernels = _select()


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return BACKEND

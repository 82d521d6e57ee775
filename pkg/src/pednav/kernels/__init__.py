"""Batch evaluation kernels for the sampling planner.

The compiled extension is used when it imported cleanly; set
PEDNAV_PURE_PYTHON=1 to force the numpy reference implementation. Both
expose the same functions and agree to float64 rounding.
"""

from __future__ import annotations

import os

from . import _reference as reference

compiled = None
if not os.environ.get("PEDNAV_PURE_PYTHON"):
    try:
        from . import _speedups as compiled
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else reference

BACKEND = "compiled" if compiled is not None else "python"

ED_HARD = reference.ED_HARD
ED_SOFT = reference.ED_SOFT
MD_HARD = reference.MD_HARD

rollout_positions = _impl.rollout_positions
evaluate_samples = _impl.evaluate_samples

__all__ = [
    "BACKEND", "ED_HARD", "ED_SOFT", "MD_HARD", "compiled", "reference",
    "rollout_positions", "evaluate_samples",
]

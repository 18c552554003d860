"""Hot numeric kernels: numba-jitted loops with a pure-numpy fallback.

Both backends implement identical signatures and agree to floating-point
rounding; each is bitwise deterministic run to run.  The default dispatch
is chosen per kernel from what ``benchmarks/bench_kernels.py`` shows: the
forward kernels are transcendental-bound and numpy's SIMD exp/tanh wins,
while the backward sweep and the fused Adam update are arithmetic-bound
and the jitted loops win.  Set MPOLSTM_NO_NUMBA=1 to force the pure-numpy
path throughout (also the automatic fallback when numba is unavailable).
"""

import os

from . import reference

_flag = os.environ.get("MPOLSTM_NO_NUMBA", "").strip().lower()
_disabled = _flag in {"1", "true", "yes", "on"}

if not _disabled:
    try:
        from . import jit as _jit
    except ImportError:
        _jit = None
else:
    _jit = None

gate_forward = reference.gate_forward
lstm_recurrent_forward = reference.lstm_recurrent_forward
if _jit is not None:
    BACKEND = "mixed"
    gate_backward = _jit.gate_backward
    lstm_recurrent_backward = _jit.lstm_recurrent_backward
    adam_update = _jit.adam_update
else:
    BACKEND = "numpy"
    gate_backward = reference.gate_backward
    lstm_recurrent_backward = reference.lstm_recurrent_backward
    adam_update = reference.adam_update

__all__ = [
    "BACKEND",
    "reference",
    "gate_forward",
    "gate_backward",
    "lstm_recurrent_forward",
    "lstm_recurrent_backward",
    "adam_update",
]

"""LSTM weight compression via matrix-product-operator factorization.

Dense gate matrices are reindexed as tensor chains and truncated on their
bond dimensions, trading parameters against reconstruction accuracy.  The
package provides the factorization itself with exact analytic gradients,
dense / factorized / magnitude-pruned recurrent cells, compression-rate
planning, synthetic sequence experiments, bit-exact persistence, and a CLI
harness (``mpolstm``).
"""

from . import cells, checks, kernels, mpo, planner, tasks, tensor, training, weightio
from .mpo import MpoOperator, MpoPlan
from .planner import CompressionReport, GateFusedPlan, PlanningError
from .tensor import SvdResult
from .training import SweepReport, TrialResult
from .weightio import ExperimentConfig

__version__ = "0.1.0"

__all__ = [
    "cells",
    "checks",
    "kernels",
    "mpo",
    "planner",
    "tasks",
    "tensor",
    "training",
    "weightio",
    "MpoOperator",
    "MpoPlan",
    "CompressionReport",
    "GateFusedPlan",
    "PlanningError",
    "SvdResult",
    "SweepReport",
    "TrialResult",
    "ExperimentConfig",
    "__version__",
]

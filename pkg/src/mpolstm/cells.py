"""Recurrent cells with exact analytic backward passes.

Three variants share one gate convention: a dense LSTM, an MPO-factorized
LSTM whose two weight matrices are operator chains, and a magnitude-pruned
LSTM (a dense cell plus a persistent sparsity mask).  Gate pre-activations
are stacked along a single 4H axis in block order
[input, forget, output, candidate]; the factorized cell produces the same
stacked layout through a gate-fused first core, so a cell built by exactly
decomposing a dense cell's matrices reproduces its outputs.

Forward passes cache what the backward needs; parameters are never mutated
by forward/backward, so independent trials can run in parallel threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels, mpo
from .planner import GATE_COUNT, GateFusedPlan

__all__ = [
    "LstmParams",
    "MpoLstmParams",
    "CellState",
    "PruneMask",
    "glorot_lstm_params",
    "random_mpo_lstm_params",
    "mpo_lstm_from_dense",
    "lstm_cell_forward",
    "mpo_lstm_cell_forward",
    "sequence_forward",
    "backward_through_time",
    "forward_sequence_batch",
    "backward_sequence_batch",
    "magnitude_prune",
    "apply_mask",
]

GATE_BLOCKS = ("input", "forget", "output", "candidate")


@dataclass
class LstmParams:
    """Dense cell parameters: gate-stacked (4H, n_x) and (4H, H) matrices plus bias."""

    w_i: np.ndarray
    w_h: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.w_i = np.ascontiguousarray(self.w_i, dtype=np.float64)
        self.w_h = np.ascontiguousarray(self.w_h, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        if self.w_i.ndim != 2 or self.w_h.ndim != 2 or self.b.ndim != 1:
            raise ValueError("w_i, w_h must be matrices and b a vector")
        four_h = self.w_i.shape[0]
        if four_h % GATE_COUNT != 0:
            raise ValueError(f"gate-stacked height {four_h} is not a multiple of {GATE_COUNT}")
        if self.w_h.shape != (four_h, four_h // GATE_COUNT):
            raise ValueError(f"w_h has shape {self.w_h.shape}, "
                             f"expected {(four_h, four_h // GATE_COUNT)}")
        if self.b.shape != (four_h,):
            raise ValueError(f"bias has shape {self.b.shape}, expected ({four_h},)")

    @property
    def n_x(self) -> int:
        return self.w_i.shape[1]

    @property
    def n_h(self) -> int:
        return self.w_h.shape[1]

    def copy(self) -> "LstmParams":
        return LstmParams(self.w_i.copy(), self.w_h.copy(), self.b.copy())


@dataclass
class MpoLstmParams:
    """Factorized cell: two gate-fused operator chains plus an uncompressed bias."""

    w_mpo: mpo.MpoOperator
    u_mpo: mpo.MpoOperator
    b: np.ndarray

    def __post_init__(self):
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        four_h = self.w_mpo.n_out
        if four_h % GATE_COUNT != 0:
            raise ValueError(f"operator output {four_h} is not a multiple of {GATE_COUNT}")
        n_h = four_h // GATE_COUNT
        if self.u_mpo.n_out != four_h:
            raise ValueError(f"u operator produces {self.u_mpo.n_out}, expected {four_h}")
        if self.u_mpo.n_in != n_h:
            raise ValueError(f"u operator consumes {self.u_mpo.n_in}, expected {n_h}")
        if self.b.shape != (four_h,):
            raise ValueError(f"bias has shape {self.b.shape}, expected ({four_h},)")

    @property
    def n_x(self) -> int:
        return self.w_mpo.n_in

    @property
    def n_h(self) -> int:
        return self.u_mpo.n_in

    def copy(self) -> "MpoLstmParams":
        return MpoLstmParams(self.w_mpo.copy(), self.u_mpo.copy(), self.b.copy())


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, n_h: int) -> "CellState":
        return cls(np.zeros(n_h), np.zeros(n_h))


@dataclass
class PruneMask:
    """Boolean keep-masks for the two dense matrices; False entries are clamped to 0."""

    mask_w: np.ndarray
    mask_h: np.ndarray
    sparsity: float


def glorot_lstm_params(n_x: int, n_h: int, rng: np.random.Generator,
                       forget_bias: float = 1.0) -> LstmParams:
    """Dense cell with Glorot-normal matrices and a positive forget bias."""
    four_h = GATE_COUNT * n_h
    w_i = rng.normal(0.0, np.sqrt(2.0 / (n_x + four_h)), size=(four_h, n_x))
    w_h = rng.normal(0.0, np.sqrt(2.0 / (n_h + four_h)), size=(four_h, n_h))
    b = np.zeros(four_h)
    b[n_h : 2 * n_h] = forget_bias
    return LstmParams(w_i, w_h, b)


def random_mpo_lstm_params(w_plan: GateFusedPlan, u_plan: GateFusedPlan,
                           rng: np.random.Generator,
                           forget_bias: float = 1.0) -> MpoLstmParams:
    """From-scratch factorized cell; cores are scaled so each contracted
    matrix matches the dense Glorot elementwise variance."""
    n_x = w_plan.n_in
    n_h = u_plan.n_in
    four_h = GATE_COUNT * n_h
    w_op = mpo.random_operator(w_plan.effective_plan(), rng, 2.0 / (n_x + four_h))
    u_op = mpo.random_operator(u_plan.effective_plan(), rng, 2.0 / (n_h + four_h))
    b = np.zeros(four_h)
    b[n_h : 2 * n_h] = forget_bias
    return MpoLstmParams(w_op, u_op, b)


def mpo_lstm_from_dense(params: LstmParams, input_factors, hidden_factors,
                        bond_w: int | None = None,
                        bond_u: int | None = None) -> MpoLstmParams:
    """Factorize a trained dense cell's matrices into operator chains.

    ``bond_w``/``bond_u`` cap every interior bond uniformly; None keeps the
    maximal bonds, making the factorization exact.
    """
    if bond_w is None:
        w_geo = GateFusedPlan.from_uniform(input_factors, hidden_factors, 10**9)
    else:
        w_geo = GateFusedPlan.from_uniform(input_factors, hidden_factors, bond_w)
    if bond_u is None:
        u_geo = GateFusedPlan.from_uniform(hidden_factors, hidden_factors, 10**9)
    else:
        u_geo = GateFusedPlan.from_uniform(hidden_factors, hidden_factors, bond_u)
    w_op = mpo.decompose(params.w_i, w_geo.effective_plan())
    u_op = mpo.decompose(params.w_h, u_geo.effective_plan())
    return MpoLstmParams(w_op, u_op, params.b.copy())


# ---------------------------------------------------------------------------
# single-step interface

@dataclass
class StepCache:
    acts: np.ndarray
    c_prev: np.ndarray
    c: np.ndarray


def _check_state(n_h: int, s: CellState):
    if s.h.shape != (n_h,) or s.c.shape != (n_h,):
        raise ValueError(f"state extents {s.h.shape}/{s.c.shape} do not match n_h={n_h}")


def lstm_cell_forward(p: LstmParams, x_t: np.ndarray, s: CellState):
    """One dense step: gates from w_i x + w_h h + b, then the state update."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (p.n_x,):
        raise ValueError(f"input has shape {x_t.shape}, cell wants ({p.n_x},)")
    _check_state(p.n_h, s)
    if not (np.all(np.isfinite(x_t)) and np.all(np.isfinite(s.h)) and np.all(np.isfinite(s.c))):
        raise FloatingPointError("non-finite cell input")
    pre = (p.w_i @ x_t + p.w_h @ s.h + p.b)[None, :]
    acts, c, h = kernels.gate_forward(np.ascontiguousarray(pre), s.c[None, :].copy())
    return CellState(h[0], c[0]), StepCache(acts[0], s.c.copy(), c[0])


def mpo_lstm_cell_forward(p: MpoLstmParams, x_t: np.ndarray, s: CellState):
    """One factorized step: identical to the dense step except the gate
    pre-activations come from the two operator chains."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (p.n_x,):
        raise ValueError(f"input has shape {x_t.shape}, cell wants ({p.n_x},)")
    _check_state(p.n_h, s)
    pre = (mpo.apply(p.w_mpo, x_t) + mpo.apply(p.u_mpo, s.h) + p.b)[None, :]
    acts, c, h = kernels.gate_forward(np.ascontiguousarray(pre), s.c[None, :].copy())
    return CellState(h[0], c[0]), StepCache(acts[0], s.c.copy(), c[0])


# ---------------------------------------------------------------------------
# batched sequence interface (used by training; the single-sequence API wraps it)

@dataclass
class DenseSequenceCache:
    xs: np.ndarray      # (T, B, n_x)
    acts: np.ndarray    # (T, B, 4H)
    cs: np.ndarray      # (T, B, H)
    hs: np.ndarray      # (T, B, H)
    h0: np.ndarray
    c0: np.ndarray


@dataclass
class MpoSequenceCache:
    xs: np.ndarray
    w_dense: np.ndarray   # contracted (4H, n_x) matrix for this forward
    u_dense: np.ndarray   # contracted (4H, H) matrix
    w_rec_cache: list
    u_rec_cache: list
    acts: np.ndarray
    cs: np.ndarray
    hs: np.ndarray
    h0: np.ndarray
    c0: np.ndarray


@dataclass
class LstmGrads:
    w_i: np.ndarray
    w_h: np.ndarray
    b: np.ndarray
    x: np.ndarray
    h0: np.ndarray
    c0: np.ndarray


@dataclass
class MpoLstmGrads:
    w_cores: list[np.ndarray]
    u_cores: list[np.ndarray]
    b: np.ndarray
    x: np.ndarray
    h0: np.ndarray
    c0: np.ndarray


def forward_sequence_batch(p, xs: np.ndarray, h0: np.ndarray, c0: np.ndarray):
    """Fold the cell over a (T, B, n_x) batch of sequences.

    Returns (hs, cs, cache); hs[t] is the hidden state after step t.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    t_len, batch, _ = xs.shape
    h0 = np.ascontiguousarray(h0, dtype=np.float64)
    c0 = np.ascontiguousarray(c0, dtype=np.float64)
    if isinstance(p, LstmParams):
        px = xs.reshape(t_len * batch, p.n_x) @ p.w_i.T + p.b
        px = np.ascontiguousarray(px.reshape(t_len, batch, GATE_COUNT * p.n_h))
        wh_t = np.ascontiguousarray(p.w_h.T)
        acts, cs, hs = kernels.lstm_recurrent_forward(px, wh_t, h0, c0)
        return hs, cs, DenseSequenceCache(xs, acts, cs, hs, h0, c0)
    if isinstance(p, MpoLstmParams):
        # The loss reaches the cores only through the matrices they contract
        # to, so the batched path contracts each chain once, runs the fast
        # dense kernels, and (in backward) splits the dense matrix gradient
        # back into core gradients.  Identical math to per-step chain
        # application, without per-step chain overhead.
        four_h = GATE_COUNT * p.n_h
        w_dense, w_rec = mpo._reconstruct_cached(p.w_mpo)
        u_dense, u_rec = mpo._reconstruct_cached(p.u_mpo)
        px = xs.reshape(t_len * batch, p.n_x) @ w_dense.T + p.b
        px = np.ascontiguousarray(px.reshape(t_len, batch, four_h))
        acts, cs, hs = kernels.lstm_recurrent_forward(
            px, np.ascontiguousarray(u_dense.T), h0, c0)
        return hs, cs, MpoSequenceCache(xs, w_dense, u_dense, w_rec, u_rec,
                                        acts, cs, hs, h0, c0)
    raise TypeError(f"unsupported cell parameters: {type(p).__name__}")


def backward_sequence_batch(p, cache, upstream: np.ndarray):
    """Backprop through forward_sequence_batch.

    upstream is (T, B, H): the loss gradient at every hidden state (zero
    rows for steps the loss does not touch).
    """
    upstream = np.ascontiguousarray(upstream, dtype=np.float64)
    if isinstance(p, LstmParams):
        if not isinstance(cache, DenseSequenceCache):
            raise TypeError("cache does not belong to a dense cell")
        t_len, batch, _ = cache.xs.shape
        if upstream.shape != (t_len, batch, p.n_h):
            raise ValueError(f"upstream has shape {upstream.shape}, "
                             f"expected {(t_len, batch, p.n_h)}")
        if t_len == 0:
            z = np.zeros((batch, p.n_h))
            return LstmGrads(np.zeros_like(p.w_i), np.zeros_like(p.w_h),
                             np.zeros_like(p.b), np.zeros_like(cache.xs), z, z.copy())
        wh_t = np.ascontiguousarray(p.w_h.T)
        dpre, dwh_t, dh0, dc0 = kernels.lstm_recurrent_backward(
            wh_t, cache.acts, cache.cs, cache.hs, cache.h0, cache.c0, upstream)
        flat = dpre.reshape(t_len * batch, GATE_COUNT * p.n_h)
        dw_i = flat.T @ cache.xs.reshape(t_len * batch, p.n_x)
        dx = (flat @ p.w_i).reshape(t_len, batch, p.n_x)
        return LstmGrads(dw_i, np.ascontiguousarray(dwh_t.T), flat.sum(axis=0),
                         dx, dh0, dc0)
    if isinstance(p, MpoLstmParams):
        if not isinstance(cache, MpoSequenceCache):
            raise TypeError("cache does not belong to a factorized cell")
        t_len, batch, _ = cache.xs.shape
        if upstream.shape != (t_len, batch, p.n_h):
            raise ValueError(f"upstream has shape {upstream.shape}, "
                             f"expected {(t_len, batch, p.n_h)}")
        four_h = GATE_COUNT * p.n_h
        if t_len == 0:
            z = np.zeros((batch, p.n_h))
            return MpoLstmGrads([np.zeros_like(c) for c in p.w_mpo.cores],
                                [np.zeros_like(c) for c in p.u_mpo.cores],
                                np.zeros_like(p.b), np.zeros_like(cache.xs), z, z.copy())
        dpre, dwh_t, dh0, dc0 = kernels.lstm_recurrent_backward(
            np.ascontiguousarray(cache.u_dense.T), cache.acts, cache.cs,
            cache.hs, cache.h0, cache.c0, upstream)
        flat = dpre.reshape(t_len * batch, four_h)
        dw_dense = flat.T @ cache.xs.reshape(t_len * batch, p.n_x)
        du_dense = np.ascontiguousarray(dwh_t.T)
        dx = (flat @ cache.w_dense).reshape(t_len, batch, p.n_x)
        w_grads = mpo._reconstruct_backward(p.w_mpo, cache.w_rec_cache, dw_dense)
        u_grads = mpo._reconstruct_backward(p.u_mpo, cache.u_rec_cache, du_dense)
        return MpoLstmGrads(w_grads, u_grads, flat.sum(axis=0), dx, dh0, dc0)
    raise TypeError(f"unsupported cell parameters: {type(p).__name__}")


def sequence_forward(p, xs, s0: CellState):
    """Left fold of the cell step over a list of input vectors.

    Returns (states, cache): states[t] is the cell state after consuming
    xs[t]; an empty input yields no states.
    """
    _check_state(_n_h_of(p), s0)
    t_len = len(xs)
    n_x = p.n_x
    xs_arr = np.asarray(xs, dtype=np.float64).reshape(t_len, 1, n_x)
    hs, cs, cache = forward_sequence_batch(p, xs_arr, s0.h[None, :], s0.c[None, :])
    states = [CellState(hs[t, 0].copy(), cs[t, 0].copy()) for t in range(t_len)]
    return states, cache


def backward_through_time(p, cache, upstream):
    """Gradients of sum_t upstream[t] . h_t for every parameter and for x."""
    t_len = len(upstream)
    n_h = _n_h_of(p)
    up = np.asarray(upstream, dtype=np.float64).reshape(t_len, 1, n_h)
    grads = backward_sequence_batch(p, cache, up)
    grads.x = grads.x.reshape(t_len, p.n_x)
    grads.h0 = grads.h0[0]
    grads.c0 = grads.c0[0]
    return grads


def _n_h_of(p) -> int:
    if isinstance(p, (LstmParams, MpoLstmParams)):
        return p.n_h
    raise TypeError(f"unsupported cell parameters: {type(p).__name__}")


# ---------------------------------------------------------------------------
# magnitude pruning

def magnitude_prune(p: LstmParams, sparsity: float) -> PruneMask:
    """Keep-mask that drops the floor(sparsity * N) smallest-magnitude
    entries of each matrix, ties broken by linear index."""
    if not 0.0 <= sparsity < 1.0:
        raise ValueError(f"sparsity must be in [0, 1), got {sparsity}")

    def mask_for(w: np.ndarray) -> np.ndarray:
        k = int(sparsity * w.size)
        mask = np.ones(w.size, dtype=bool)
        if k > 0:
            order = np.argsort(np.abs(w.ravel()), kind="stable")
            mask[order[:k]] = False
        return mask.reshape(w.shape)

    return PruneMask(mask_for(p.w_i), mask_for(p.w_h), sparsity)


def apply_mask(p: LstmParams, m: PruneMask) -> LstmParams:
    """Zero the dropped entries; idempotent, bias untouched."""
    if m.mask_w.shape != p.w_i.shape or m.mask_h.shape != p.w_h.shape:
        raise ValueError("mask extents do not match parameters")
    return LstmParams(p.w_i * m.mask_w, p.w_h * m.mask_h, p.b.copy())

"""Adam, losses, trial training, and the compression-rate sweep runner.

A trial trains one cell variant (dense, factorized, or pruned) on a
synthetic task and reports a held-out metric.  Everything is a pure
function of (config, method, rate, seed): data come from seeded index
ranges, initialization and shuffling use per-purpose child seeds, and all
arithmetic is serial, so repeated runs are bitwise identical aside from
measured wall time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import cells, kernels, planner, tasks

__all__ = [
    "AdamState",
    "adam_step",
    "clip_global_norm",
    "TrialResult",
    "SweepReport",
    "train",
    "sweep",
]

METHODS = ("dense", "mpo", "pruning")


class _Diverged(Exception):
    pass


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state


def adam_step(state: AdamState, params, grads):
    """One bias-corrected Adam update; mutates params and moments in place."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("parameter/gradient/moment counts disagree")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    state.step_count += 1
    for p, g, m, v in zip(params, grads, state.m, state.v):
        kernels.adam_update(p.ravel(), np.ascontiguousarray(g).ravel(), m.ravel(),
                            v.ravel(), state.step_count,
                            state.lr, state.beta1, state.beta2, state.eps)


def clip_global_norm(grads, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


# ---------------------------------------------------------------------------
# losses

def logistic_loss(logits: np.ndarray, labels: np.ndarray):
    """Mean binary cross-entropy with logits; returns (loss, dlogits)."""
    z = logits
    y = labels.astype(np.float64)
    # log(1 + exp(-|z|)) + max(z, 0) - z*y, the overflow-safe form
    loss = float(np.mean(np.logaddexp(0.0, -np.abs(z)) + np.maximum(z, 0.0) - z * y))
    p = 1.0 / (1.0 + np.exp(-z))
    return loss, (p - y) / z.size


def mse_loss(pred: np.ndarray, target: np.ndarray):
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


# ---------------------------------------------------------------------------
# results

@dataclass(frozen=True)
class TrialResult:
    """One row of a sweep: a failed (diverged) trial carries metric = nan."""

    rate: float
    method: str
    metric: float
    parameter_count: int
    ratio_actual: float
    seed: int
    wall_time: float

    def deterministic_fields(self) -> tuple:
        """Everything except measured wall time, which varies run to run."""
        return (self.rate, self.method, self.metric, self.parameter_count,
                self.ratio_actual, self.seed)


@dataclass
class SweepReport:
    rows: list[TrialResult] = field(default_factory=list)

    def sorted_rows(self) -> list[TrialResult]:
        return sorted(self.rows, key=lambda r: (r.rate, r.method, r.seed))


# ---------------------------------------------------------------------------
# model assembly

def _mpo_plans(config, rate):
    d_w, d_u = planner.bonds_for_target(rate, config.n_x, config.n_h,
                                        config.input_factors, config.hidden_factors)
    w_plan = planner.GateFusedPlan.from_uniform(config.input_factors,
                                                config.hidden_factors, d_w)
    u_plan = planner.GateFusedPlan.from_uniform(config.hidden_factors,
                                                config.hidden_factors, d_u)
    return w_plan, u_plan


def _readout_dims(config) -> int:
    return 1 if config.task_kind == "classification" else config.n_x


def _init_readout(config, rng):
    out_dim = _readout_dims(config)
    w_out = rng.normal(0.0, np.sqrt(1.0 / config.n_h), size=(config.n_h, out_dim))
    b_out = np.zeros(out_dim)
    return w_out, b_out


def _param_list(cell, w_out, b_out):
    if isinstance(cell, cells.LstmParams):
        return [cell.w_i, cell.w_h, cell.b, w_out, b_out]
    return [*cell.w_mpo.cores, *cell.u_mpo.cores, cell.b, w_out, b_out]


def _grad_list(cell_grads, dw_out, db_out):
    if isinstance(cell_grads, cells.LstmGrads):
        return [cell_grads.w_i, cell_grads.w_h, cell_grads.b, dw_out, db_out]
    return [*cell_grads.w_cores, *cell_grads.u_cores, cell_grads.b, dw_out, db_out]


def _batch_loss_and_grads(config, cell, w_out, b_out, xs, targets):
    """Forward + backward over one (B, T, D) batch; returns (loss, grads list)."""
    xs_tbd = np.ascontiguousarray(xs.transpose(1, 0, 2))
    t_len, batch, _ = xs_tbd.shape
    h0 = np.zeros((batch, config.n_h))
    c0 = np.zeros((batch, config.n_h))
    hs, _, cache = cells.forward_sequence_batch(cell, xs_tbd, h0, c0)
    if config.task_kind == "classification":
        logits = hs[-1] @ w_out[:, 0] + b_out[0]
        loss, dlogits = logistic_loss(logits, targets)
        dw_out = (hs[-1].T @ dlogits)[:, None]
        db_out = np.array([dlogits.sum()])
        upstream = np.zeros((t_len, batch, config.n_h))
        upstream[-1] = dlogits[:, None] * w_out[:, 0][None, :]
    else:
        target_tbd = targets.transpose(1, 0, 2)
        preds = hs @ w_out + b_out
        loss, dpred = mse_loss(preds, target_tbd)
        dw_out = np.einsum("tbh,tbd->hd", hs, dpred)
        db_out = dpred.sum(axis=(0, 1))
        upstream = dpred @ w_out.T
    if not np.isfinite(loss):
        raise _Diverged
    cell_grads = cells.backward_sequence_batch(cell, cache, upstream)
    return loss, _grad_list(cell_grads, dw_out, db_out)


def _evaluate(config, cell, w_out, b_out, xs, targets) -> float:
    metric_parts = []
    weights = []
    batch_size = config.batch_size
    for lo in range(0, xs.shape[0], batch_size):
        xb = np.ascontiguousarray(xs[lo : lo + batch_size].transpose(1, 0, 2))
        tb = targets[lo : lo + batch_size]
        batch = xb.shape[1]
        h0 = np.zeros((batch, config.n_h))
        c0 = np.zeros((batch, config.n_h))
        hs, _, _ = cells.forward_sequence_batch(cell, xb, h0, c0)
        if config.task_kind == "classification":
            logits = hs[-1] @ w_out[:, 0] + b_out[0]
            metric_parts.append(float(np.mean((logits > 0).astype(np.int64) == tb)))
        else:
            preds = hs @ w_out + b_out
            metric_parts.append(float(np.mean((preds - tb.transpose(1, 0, 2)) ** 2)))
        weights.append(batch)
    return float(np.average(metric_parts, weights=weights))


def _train_phase(config, cell, w_out, b_out, xs, targets, epochs, seed, phase,
                 mask=None, history=None):
    params = _param_list(cell, w_out, b_out)
    state = AdamState.for_params(params, lr=config.lr, beta1=config.beta1,
                                 beta2=config.beta2, eps=config.eps)
    n = xs.shape[0]
    for epoch in range(epochs):
        order = np.random.default_rng((seed, 1000 + phase, epoch)).permutation(n)
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            loss, grads = _batch_loss_and_grads(config, cell, w_out, b_out,
                                                xs[idx], targets[idx])
            if history is not None:
                history.append(loss)
            clip_global_norm(grads, config.clip_norm)
            adam_step(state, params, grads)
            if mask is not None:
                cell.w_i *= mask.mask_w
                cell.w_h *= mask.mask_h


def train(config, method: str, rate: float, seed: int,
          return_history: bool = False):
    """Train one cell variant and return its held-out TrialResult.

    Divergence (non-finite loss) is reported as a failed trial with a nan
    metric rather than raised.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if rate < 1:
        raise ValueError(f"rate must be >= 1, got {rate}")
    t_start = time.perf_counter()
    task = config.task()
    xs_train, y_train = tasks.generate(task, 0, config.n_train)
    xs_test, y_test = tasks.generate(task, config.n_train, config.n_test)
    rng = np.random.default_rng((seed, 7))
    w_out, b_out = _init_readout(config, rng)
    dense_total = planner.dense_parameter_count(config.n_x, config.n_h)
    history: list[float] | None = [] if return_history else None

    metric = float("nan")
    param_count = None
    try:
        if method == "dense":
            cell = cells.glorot_lstm_params(config.n_x, config.n_h, rng)
            param_count = dense_total
            _train_phase(config, cell, w_out, b_out, xs_train, y_train,
                         config.epochs, seed, phase=0, history=history)
        elif method == "mpo":
            w_plan, u_plan = _mpo_plans(config, rate)
            report = planner.compression_ratio(w_plan, u_plan, config.n_x, config.n_h)
            param_count = report.params_w + report.params_u
            cell = cells.random_mpo_lstm_params(w_plan, u_plan, rng)
            _train_phase(config, cell, w_out, b_out, xs_train, y_train,
                         config.epochs, seed, phase=0, history=history)
        else:  # pruning: train dense, prune once, retrain under the mask
            cell = cells.glorot_lstm_params(config.n_x, config.n_h, rng)
            _train_phase(config, cell, w_out, b_out, xs_train, y_train,
                         config.epochs, seed, phase=0, history=history)
            mask = cells.magnitude_prune(cell, 1.0 - 1.0 / rate)
            cell = cells.apply_mask(cell, mask)
            param_count = int(mask.mask_w.sum() + mask.mask_h.sum())
            _train_phase(config, cell, w_out, b_out, xs_train, y_train,
                         config.retrain_epochs, seed, phase=1, mask=mask,
                         history=history)
        metric = _evaluate(config, cell, w_out, b_out, xs_test, y_test)
    except _Diverged:
        if param_count is None:
            # a pruning run that blew up before the prune was still dense
            param_count = dense_total

    result = TrialResult(
        rate=float(rate),
        method=method,
        metric=metric,
        parameter_count=int(param_count),
        ratio_actual=dense_total / param_count,
        seed=int(seed),
        wall_time=time.perf_counter() - t_start,
    )
    if return_history:
        return result, history
    return result


def trial_grid(config) -> list[tuple[float, str, int]]:
    """Canonically ordered (rate, method, seed) combinations for a config."""
    return [(float(rate), method, int(seed))
            for rate in sorted(config.rates)
            for method in sorted(config.methods)
            for seed in sorted(config.seeds)]


def sweep(config, jobs: int = 1) -> SweepReport:
    """Run every (rate, method, seed) trial in the config.

    Rows are assembled in canonical order so serial and parallel runs
    produce identical reports.  Per-trial planning failures (an
    unattainable rate) are recorded as failed rows; the sweep continues.
    """
    grid = trial_grid(config)
    rows: list[TrialResult] = []
    if jobs <= 1:
        for rate, method, seed in grid:
            rows.append(_safe_trial(config, method, rate, seed))
    else:
        import concurrent.futures

        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_safe_trial_star,
                                 [(config, m, r, s) for r, m, s in grid]))
    return SweepReport(rows=rows)


def _safe_trial(config, method, rate, seed) -> TrialResult:
    try:
        return train(config, method, rate, seed)
    except planner.PlanningError:
        return TrialResult(rate=float(rate), method=method, metric=float("nan"),
                           parameter_count=0, ratio_actual=float("nan"),
                           seed=int(seed), wall_time=0.0)


def _safe_trial_star(args):
    config, method, rate, seed = args
    return _safe_trial(config, method, rate, seed)

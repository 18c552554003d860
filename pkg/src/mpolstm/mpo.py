"""Matrix-product-operator factorization of dense weight matrices.

A matrix mapping R^{n_in} -> R^{n_out} is reindexed as a 2n-way tensor with
row factors J_1..J_n (prod = n_out) and column factors I_1..I_n
(prod = n_in), the axes interleaved to (j_1, i_1, j_2, i_2, ...), and the
result split left-to-right into a chain of rank-4 cores by truncated SVDs.
Core k has extents [d_{k-1}, J_k, I_k, d_k]; the bond extents d_k link
neighbouring cores, with d_0 = d_n = 1.  Bond truncation is the compression
knob: at maximal bonds the factorization is exact, and the squared
reconstruction error of a truncated sweep equals the sum of squared
singular values discarded at each cut.

Matrix-vector products and their gradients are computed by contracting the
chain directly, without ever materializing the dense matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import truncated_svd

__all__ = [
    "MpoPlan",
    "MpoOperator",
    "max_bond_dims",
    "full_plan",
    "uniform_plan",
    "parameter_count",
    "decompose",
    "reconstruct",
    "apply",
    "apply_batch",
    "grad_cores",
    "random_operator",
]


def max_bond_dims(input_factors, output_factors) -> tuple[int, ...]:
    """Maximal attainable bond extents, cut by cut, including the trivial ends.

    At cut k the bond can never exceed the smaller of the two flattened
    sides, min(prod_{l<=k} I_l*J_l, prod_{l>k} I_l*J_l).
    """
    if len(input_factors) != len(output_factors):
        raise ValueError(f"factor lists must have equal length: "
                         f"{tuple(input_factors)} vs {tuple(output_factors)}")
    pairs = [int(i) * int(j) for i, j in zip(input_factors, output_factors)]
    n = len(pairs)
    bonds = [1]
    for k in range(1, n):
        left = int(np.prod(pairs[:k]))
        right = int(np.prod(pairs[k:]))
        bonds.append(min(left, right))
    bonds.append(1)
    return tuple(bonds)


@dataclass(frozen=True)
class MpoPlan:
    """Factorization blueprint: input factors I_k, output factors J_k, bonds d_k."""

    input_factors: tuple[int, ...]
    output_factors: tuple[int, ...]
    bond_dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_factors", tuple(int(f) for f in self.input_factors))
        object.__setattr__(self, "output_factors", tuple(int(f) for f in self.output_factors))
        object.__setattr__(self, "bond_dims", tuple(int(d) for d in self.bond_dims))
        n = len(self.input_factors)
        if n == 0 or len(self.output_factors) != n:
            raise ValueError("input and output factor lists must be non-empty and equal length")
        if any(f < 1 for f in self.input_factors + self.output_factors):
            raise ValueError("factors must be positive")
        if len(self.bond_dims) != n + 1:
            raise ValueError(f"expected {n + 1} bond extents, got {len(self.bond_dims)}")
        if self.bond_dims[0] != 1 or self.bond_dims[-1] != 1:
            raise ValueError("boundary bonds must be 1")
        if any(d < 1 for d in self.bond_dims):
            raise ValueError("bond extents must be positive")
        limits = max_bond_dims(self.input_factors, self.output_factors)
        for k, (d, lim) in enumerate(zip(self.bond_dims, limits)):
            if d > lim:
                raise ValueError(f"bond {k} is {d}, exceeds attainable {lim}")

    @property
    def n_cores(self) -> int:
        return len(self.input_factors)

    @property
    def n_in(self) -> int:
        return int(np.prod(self.input_factors))

    @property
    def n_out(self) -> int:
        return int(np.prod(self.output_factors))

    def core_shape(self, k: int) -> tuple[int, int, int, int]:
        return (
            self.bond_dims[k],
            self.output_factors[k],
            self.input_factors[k],
            self.bond_dims[k + 1],
        )


def full_plan(input_factors, output_factors) -> MpoPlan:
    """Plan with maximal bonds everywhere; decomposition under it is exact."""
    return MpoPlan(tuple(input_factors), tuple(output_factors),
                   max_bond_dims(input_factors, output_factors))


def uniform_plan(input_factors, output_factors, d: int) -> MpoPlan:
    """Plan with every interior bond set to ``d``, clipped to what is attainable."""
    if d < 1:
        raise ValueError(f"bond dimension must be >= 1, got {d}")
    limits = max_bond_dims(input_factors, output_factors)
    bonds = tuple(min(int(d), lim) for lim in limits)
    return MpoPlan(tuple(input_factors), tuple(output_factors), bonds)


def parameter_count(plan: MpoPlan) -> int:
    """Total scalars stored by the chain: sum_k I_k * J_k * d_{k-1} * d_k."""
    return sum(
        i * j * plan.bond_dims[k] * plan.bond_dims[k + 1]
        for k, (i, j) in enumerate(zip(plan.input_factors, plan.output_factors))
    )


@dataclass
class MpoOperator:
    """A chain of rank-4 cores realizing one weight matrix.

    ``discarded_norm`` carries the root-sum-square of all singular values
    dropped while the operator was built (0 for exact or hand-built chains).
    """

    plan: MpoPlan
    cores: list[np.ndarray]
    discarded_norm: float = 0.0

    def __post_init__(self):
        if len(self.cores) != self.plan.n_cores:
            raise ValueError("core count disagrees with plan")
        self.cores = [np.ascontiguousarray(c, dtype=np.float64) for c in self.cores]
        for k, core in enumerate(self.cores):
            expected = self.plan.core_shape(k)
            if core.shape != expected:
                raise ValueError(f"core {k} has shape {core.shape}, plan wants {expected}")

    @property
    def n_in(self) -> int:
        return self.plan.n_in

    @property
    def n_out(self) -> int:
        return self.plan.n_out

    @property
    def parameter_count(self) -> int:
        return parameter_count(self.plan)

    def copy(self) -> "MpoOperator":
        return MpoOperator(self.plan, [c.copy() for c in self.cores], self.discarded_norm)


def _interleave_axes(n: int) -> list[int]:
    # (j_1..j_n, i_1..i_n) -> (j_1, i_1, j_2, i_2, ...)
    out = []
    for k in range(n):
        out.extend((k, n + k))
    return out


def _deinterleave_axes(n: int) -> list[int]:
    # (j_1, i_1, j_2, i_2, ...) -> (j_1..j_n, i_1..i_n)
    return list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))


def decompose(w: np.ndarray, plan: MpoPlan) -> MpoOperator:
    """Split a dense matrix into an MPO chain by a left-to-right SVD sweep.

    Each cut is truncated to the plan's bond extent; if the numerical rank
    falls short the core is zero-padded so extents always match the plan.
    The accumulated discarded norm is returned on the operator and equals
    the Frobenius reconstruction error.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError("decompose expects a matrix")
    if w.shape != (plan.n_out, plan.n_in):
        raise ValueError(f"matrix is {w.shape}, plan wants {(plan.n_out, plan.n_in)}")
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("non-finite values in weight matrix")

    n = plan.n_cores
    tens = w.reshape(plan.output_factors + plan.input_factors)
    tens = np.ascontiguousarray(np.transpose(tens, _interleave_axes(n)))

    pair = [i * j for i, j in zip(plan.input_factors, plan.output_factors)]
    carry = tens.reshape(1, -1)
    cores: list[np.ndarray] = []
    disc_sq = 0.0
    left = 1
    for k in range(n):
        j_k = plan.output_factors[k]
        i_k = plan.input_factors[k]
        if k == n - 1:
            cores.append(carry.reshape(left, j_k, i_k, 1))
            break
        rest = carry.size // (left * pair[k])
        mat = carry.reshape(left * pair[k], rest)
        cap = plan.bond_dims[k + 1]
        res = truncated_svd(mat, cap)
        r = res.rank
        u = res.u
        right = res.s[:, None] * res.vt
        if r < cap:  # rank-deficient cut: pad so extents still match the plan
            u = np.pad(u, ((0, 0), (0, cap - r)))
            right = np.pad(right, ((0, cap - r), (0, 0)))
        disc_sq += res.discarded_norm**2
        cores.append(u.reshape(left, j_k, i_k, cap))
        carry = right
        left = cap
    return MpoOperator(plan, cores, discarded_norm=float(np.sqrt(disc_sq)))


def reconstruct(op: MpoOperator) -> np.ndarray:
    """Contract the chain back into a dense (n_out, n_in) matrix."""
    w, _ = _reconstruct_cached(op, keep_cache=False)
    return w


def _reconstruct_cached(op: MpoOperator, keep_cache: bool = True):
    """reconstruct plus the left-factor intermediates needed by its backward."""
    plan = op.plan
    n = plan.n_cores
    cache = [] if keep_cache else None
    left = op.cores[0].reshape(-1, plan.bond_dims[1])
    for k in range(1, n):
        core = op.cores[k]
        if keep_cache:
            cache.append(left)
        left = left @ core.reshape(core.shape[0], -1)  # (L, J*I*e)
        left = left.reshape(-1, core.shape[3])
    inter_shape = []
    for j, i in zip(plan.output_factors, plan.input_factors):
        inter_shape.extend((j, i))
    tens = left.reshape(inter_shape)
    tens = np.transpose(tens, _deinterleave_axes(n))
    return np.ascontiguousarray(tens).reshape(plan.n_out, plan.n_in), cache


def _reconstruct_backward(op: MpoOperator, cache, dw: np.ndarray):
    """Core gradients of sum(dw * reconstruct(op)): backprop through the
    contraction, turning one dense matrix gradient into per-core gradients."""
    plan = op.plan
    n = plan.n_cores
    inter_shape = []
    for j, i in zip(plan.output_factors, plan.input_factors):
        inter_shape.extend((j, i))
    dtens = dw.reshape(plan.output_factors + plan.input_factors)
    dtens = np.transpose(dtens, _interleave_axes(n))
    dleft = np.ascontiguousarray(dtens).reshape(-1, 1)
    core_grads: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for k in range(n - 1, 0, -1):
        core = op.cores[k]
        d, j_k, i_k, e = core.shape
        left = cache[k - 1]  # (L, d)
        dprod = dleft.reshape(left.shape[0], j_k * i_k * e)
        core_grads[k] = (left.T @ dprod).reshape(d, j_k, i_k, e)
        dleft = dprod @ core.reshape(d, -1).T
    core_grads[0] = dleft.reshape(op.cores[0].shape)
    return core_grads


def _chain_forward(op: MpoOperator, xs: np.ndarray, keep_cache: bool):
    """Sweep a (B, n_in) batch through the chain.

    The running state has shape (B, P, d, R): P collects the output factors
    produced so far, d is the open bond, R the input factors still pending.
    Peak memory stays at B * max_k(P_k * d_k * R_k) scalars, far below the
    dense B * n_out * n_in.
    """
    B = xs.shape[0]
    state = xs.reshape(B, 1, 1, op.plan.n_in)
    cache = [] if keep_cache else None
    for core in op.cores:
        d, j_k, i_k, e = core.shape
        _, p, _, r_in = state.shape
        r = r_in // i_k
        lhs = state.reshape(B, p, d, i_k, r).transpose(0, 1, 4, 2, 3).reshape(B * p * r, d * i_k)
        rhs = core.transpose(0, 2, 1, 3).reshape(d * i_k, j_k * e)
        out = lhs @ rhs
        if keep_cache:
            cache.append((lhs, p, r))
        state = out.reshape(B, p, r, j_k, e).transpose(0, 1, 3, 4, 2).reshape(B, p * j_k, e, r)
    return state.reshape(B, op.plan.n_out), cache


def _chain_backward(op: MpoOperator, cache, dys: np.ndarray):
    """Backprop through _chain_forward: gradients for every core and the input."""
    B = dys.shape[0]
    grad = dys.reshape(B, op.plan.n_out, 1, 1)
    core_grads: list[np.ndarray] = [None] * len(op.cores)  # type: ignore[list-item]
    for k in range(len(op.cores) - 1, -1, -1):
        core = op.cores[k]
        d, j_k, i_k, e = core.shape
        lhs, p, r = cache[k]
        dout = (
            grad.reshape(B, p, j_k, e, r)
            .transpose(0, 1, 4, 2, 3)
            .reshape(B * p * r, j_k * e)
        )
        drhs = lhs.T @ dout
        core_grads[k] = np.ascontiguousarray(
            drhs.reshape(d, i_k, j_k, e).transpose(0, 2, 1, 3)
        )
        rhs = core.transpose(0, 2, 1, 3).reshape(d * i_k, j_k * e)
        dlhs = dout @ rhs.T
        grad = (
            dlhs.reshape(B, p, r, d, i_k)
            .transpose(0, 1, 3, 4, 2)
            .reshape(B, p, d, i_k * r)
        )
    return core_grads, grad.reshape(B, op.plan.n_in)


def apply(op: MpoOperator, x: np.ndarray) -> np.ndarray:
    """y = W x computed by sequential core contraction (W never materialized)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (op.plan.n_in,):
        raise ValueError(f"vector has shape {x.shape}, operator wants ({op.plan.n_in},)")
    y, _ = _chain_forward(op, x[None, :], keep_cache=False)
    return y[0]


def apply_batch(op: MpoOperator, xs: np.ndarray) -> np.ndarray:
    """Row-wise apply: (B, n_in) -> (B, n_out)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != op.plan.n_in:
        raise ValueError(f"batch has shape {xs.shape}, operator wants (B, {op.plan.n_in})")
    ys, _ = _chain_forward(op, xs, keep_cache=False)
    return ys


def grad_cores(op: MpoOperator, x: np.ndarray, upstream: np.ndarray):
    """Gradients of upstream . (W x) with respect to every core and to x."""
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.shape != (op.plan.n_in,):
        raise ValueError(f"vector has shape {x.shape}, operator wants ({op.plan.n_in},)")
    if upstream.shape != (op.plan.n_out,):
        raise ValueError(f"upstream has shape {upstream.shape}, wants ({op.plan.n_out},)")
    _, cache = _chain_forward(op, x[None, :], keep_cache=True)
    core_grads, dx = _chain_backward(op, cache, upstream[None, :])
    return core_grads, dx[0]


def random_operator(plan: MpoPlan, rng: np.random.Generator,
                    target_variance: float) -> MpoOperator:
    """Cores drawn i.i.d. normal so the contracted matrix has roughly
    ``target_variance`` per element.

    The contraction sums prod(interior bonds) products of n core entries, so
    each core gets standard deviation (target_variance / prod_bonds)^(1/2n).
    """
    n = plan.n_cores
    prod_bonds = float(np.prod(plan.bond_dims[1:-1])) if n > 1 else 1.0
    sigma = (target_variance / prod_bonds) ** (1.0 / (2.0 * n))
    cores = [rng.normal(0.0, sigma, size=plan.core_shape(k)) for k in range(n)]
    return MpoOperator(plan, cores)

"""Numba-jitted twins of kernels.reference: same signatures, same semantics.

The sequence loops run entirely in nopython mode; matmuls lower to BLAS via
np.dot, so numeric results match the numpy backend to rounding.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def gate_forward(pre, c_prev):
    batch, four_h = pre.shape
    h_dim = four_h // 4
    acts = np.empty((batch, four_h))
    c = np.empty((batch, h_dim))
    h = np.empty((batch, h_dim))
    for b in range(batch):
        for j in range(h_dim):
            i = 1.0 / (1.0 + np.exp(-pre[b, j]))
            f = 1.0 / (1.0 + np.exp(-pre[b, h_dim + j]))
            o = 1.0 / (1.0 + np.exp(-pre[b, 2 * h_dim + j]))
            g = np.tanh(pre[b, 3 * h_dim + j])
            cc = f * c_prev[b, j] + i * g
            acts[b, j] = i
            acts[b, h_dim + j] = f
            acts[b, 2 * h_dim + j] = o
            acts[b, 3 * h_dim + j] = g
            c[b, j] = cc
            h[b, j] = o * np.tanh(cc)
    return acts, c, h


@njit(cache=True)
def gate_backward(acts, c_prev, c, dh, dc_in):
    batch, h_dim = c.shape
    dpre = np.empty((batch, 4 * h_dim))
    dc_prev = np.empty((batch, h_dim))
    for b in range(batch):
        for j in range(h_dim):
            i = acts[b, j]
            f = acts[b, h_dim + j]
            o = acts[b, 2 * h_dim + j]
            g = acts[b, 3 * h_dim + j]
            tc = np.tanh(c[b, j])
            do = dh[b, j] * tc
            dc = dc_in[b, j] + dh[b, j] * o * (1.0 - tc * tc)
            dpre[b, j] = dc * g * i * (1.0 - i)
            dpre[b, h_dim + j] = dc * c_prev[b, j] * f * (1.0 - f)
            dpre[b, 2 * h_dim + j] = do * o * (1.0 - o)
            dpre[b, 3 * h_dim + j] = dc * i * (1.0 - g * g)
            dc_prev[b, j] = dc * f
    return dpre, dc_prev


@njit(cache=True)
def lstm_recurrent_forward(px, wh_t, h0, c0):
    t_len, batch, four_h = px.shape
    h_dim = four_h // 4
    acts = np.empty((t_len, batch, four_h))
    cs = np.empty((t_len, batch, h_dim))
    hs = np.empty((t_len, batch, h_dim))
    h = h0.copy()
    c = c0.copy()
    for t in range(t_len):
        pre = px[t] + np.dot(h, wh_t)
        for b in range(batch):
            for j in range(h_dim):
                i = 1.0 / (1.0 + np.exp(-pre[b, j]))
                f = 1.0 / (1.0 + np.exp(-pre[b, h_dim + j]))
                o = 1.0 / (1.0 + np.exp(-pre[b, 2 * h_dim + j]))
                g = np.tanh(pre[b, 3 * h_dim + j])
                cc = f * c[b, j] + i * g
                acts[t, b, j] = i
                acts[t, b, h_dim + j] = f
                acts[t, b, 2 * h_dim + j] = o
                acts[t, b, 3 * h_dim + j] = g
                c[b, j] = cc
                h[b, j] = o * np.tanh(cc)
        cs[t] = c
        hs[t] = h
    return acts, cs, hs


@njit(cache=True)
def lstm_recurrent_backward(wh_t, acts, cs, hs, h0, c0, upstream):
    t_len, batch, h_dim = upstream.shape
    dpre = np.empty((t_len, batch, 4 * h_dim))
    dwh_t = np.zeros_like(wh_t)
    dh = np.zeros((batch, h_dim))
    dc = np.zeros((batch, h_dim))
    wh = np.ascontiguousarray(wh_t.T)
    for t in range(t_len - 1, -1, -1):
        c_prev = cs[t - 1] if t > 0 else c0
        h_prev = hs[t - 1] if t > 0 else h0
        dp = np.empty((batch, 4 * h_dim))
        for b in range(batch):
            for j in range(h_dim):
                i = acts[t, b, j]
                f = acts[t, b, h_dim + j]
                o = acts[t, b, 2 * h_dim + j]
                g = acts[t, b, 3 * h_dim + j]
                tc = np.tanh(cs[t, b, j])
                dhj = upstream[t, b, j] + dh[b, j]
                do = dhj * tc
                dcj = dc[b, j] + dhj * o * (1.0 - tc * tc)
                dp[b, j] = dcj * g * i * (1.0 - i)
                dp[b, h_dim + j] = dcj * c_prev[b, j] * f * (1.0 - f)
                dp[b, 2 * h_dim + j] = do * o * (1.0 - o)
                dp[b, 3 * h_dim + j] = dcj * i * (1.0 - g * g)
                dc[b, j] = dcj * f
        dpre[t] = dp
        dwh_t += np.dot(np.ascontiguousarray(h_prev.T), dp)
        dh = np.dot(dp, wh)
    return dpre, dwh_t, dh, dc


@njit(cache=True)
def adam_update(p, g, m, v, step, lr, beta1, beta2, eps):
    c1 = 1.0 - beta1**step
    c2 = 1.0 - beta2**step
    for k in range(p.size):
        m[k] = beta1 * m[k] + (1.0 - beta1) * g[k]
        v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k]
        p[k] -= lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + eps)

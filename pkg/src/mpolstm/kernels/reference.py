"""Pure-numpy implementations of the hot sequence kernels.

Shapes follow one convention throughout: pre-activations are (B, 4H) with
gate blocks ordered [input, forget, output, candidate]; states are (B, H);
full sequences carry a leading T axis.
"""

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gate_forward(pre, c_prev):
    """One LSTM state update from gate pre-activations.

    Returns (acts, c, h) where acts holds the post-activation gate values
    in the same (B, 4H) block layout as pre.
    """
    h_dim = pre.shape[1] // 4
    acts = np.empty_like(pre)
    acts[:, : 3 * h_dim] = _sigmoid(pre[:, : 3 * h_dim])
    acts[:, 3 * h_dim :] = np.tanh(pre[:, 3 * h_dim :])
    i = acts[:, :h_dim]
    f = acts[:, h_dim : 2 * h_dim]
    o = acts[:, 2 * h_dim : 3 * h_dim]
    g = acts[:, 3 * h_dim :]
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return acts, c, h


def gate_backward(acts, c_prev, c, dh, dc_in):
    """Backward of gate_forward; returns (dpre, dc_prev)."""
    h_dim = c.shape[1]
    i = acts[:, :h_dim]
    f = acts[:, h_dim : 2 * h_dim]
    o = acts[:, 2 * h_dim : 3 * h_dim]
    g = acts[:, 3 * h_dim :]
    tc = np.tanh(c)
    do = dh * tc
    dc = dc_in + dh * o * (1.0 - tc * tc)
    dpre = np.empty_like(acts)
    dpre[:, :h_dim] = dc * g * i * (1.0 - i)
    dpre[:, h_dim : 2 * h_dim] = dc * c_prev * f * (1.0 - f)
    dpre[:, 2 * h_dim : 3 * h_dim] = do * o * (1.0 - o)
    dpre[:, 3 * h_dim :] = dc * i * (1.0 - g * g)
    return dpre, dc * f


def lstm_recurrent_forward(px, wh_t, h0, c0):
    """Run the recurrent half of an LSTM over a whole sequence.

    px is the precomputed input contribution plus bias, (T, B, 4H);
    wh_t is the hidden-to-gates matrix already transposed to (H, 4H).
    Returns (acts, cs, hs), each with a leading T axis.
    """
    t_len, batch, four_h = px.shape
    h_dim = four_h // 4
    acts = np.empty((t_len, batch, four_h))
    cs = np.empty((t_len, batch, h_dim))
    hs = np.empty((t_len, batch, h_dim))
    h, c = h0, c0
    for t in range(t_len):
        a, c, h = gate_forward(px[t] + h @ wh_t, c)
        acts[t] = a
        cs[t] = c
        hs[t] = h
    return acts, cs, hs


def lstm_recurrent_backward(wh_t, acts, cs, hs, h0, c0, upstream):
    """Backprop through lstm_recurrent_forward.

    upstream is (T, B, H), the loss gradient at every hidden state.
    Returns (dpre (T,B,4H), dwh_t (H,4H), dh0, dc0).
    """
    t_len, batch, h_dim = upstream.shape
    dpre = np.empty((t_len, batch, 4 * h_dim))
    dwh_t = np.zeros_like(wh_t)
    dh = np.zeros((batch, h_dim))
    dc = np.zeros((batch, h_dim))
    wh = np.ascontiguousarray(wh_t.T)
    for t in range(t_len - 1, -1, -1):
        c_prev = cs[t - 1] if t > 0 else c0
        h_prev = hs[t - 1] if t > 0 else h0
        dp, dc = gate_backward(acts[t], c_prev, cs[t], upstream[t] + dh, dc)
        dpre[t] = dp
        dwh_t += h_prev.T @ dp
        dh = dp @ wh
    return dpre, dwh_t, dh, dc


def adam_update(p, g, m, v, step, lr, beta1, beta2, eps):
    """Fused in-place Adam update on flat views (bias-corrected)."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**step)
    vhat = v / (1.0 - beta2**step)
    p -= lr * mhat / (np.sqrt(vhat) + eps)

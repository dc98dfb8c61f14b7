"""Compiled per-sample loops for the recurrent and dense layers.

All arrays are float64 and time-major: a sequence batch is ``(T, B, D)``.
Input projections X @ W are done by the caller with BLAS; the kernels run
only the recurrence.
Gate blocks inside a ``4H`` axis are ordered input, forget, candidate,
output. Every sample is processed by its own outer-loop iteration, so a
sample's activations never depend on the rest of its batch.
"""

import math

import numpy as np
from numba import njit


LN2_HI = 6.93147180369123816490e-01
LN2_LO = 1.90821492927058770002e-10
INV_LN2 = 1.44269504088896338700e00
EXP_CLAMP = 700.0


@njit(cache=True)
def _sigmoid_inplace(a, n, tmp, bits):
    """a[:n] <- 1 / (1 + exp(-a[:n])).

    Branch-free so LLVM can vectorize it: exp uses Cody-Waite reduction, a
    degree-13 Taylor polynomial (within 1 ulp of libm) and an exponent
    built from integer bits.
    """
    for i in range(n):
        x = -a[i]
        x = EXP_CLAMP if x > EXP_CLAMP else x
        x = -EXP_CLAMP if x < -EXP_CLAMP else x
        k = math.floor(x * INV_LN2 + 0.5)
        r = (x - k * LN2_HI) - k * LN2_LO
        p = 1.0 / 6227020800.0
        p = p * r + 1.0 / 479001600.0
        p = p * r + 1.0 / 39916800.0
        p = p * r + 1.0 / 3628800.0
        p = p * r + 1.0 / 362880.0
        p = p * r + 1.0 / 40320.0
        p = p * r + 1.0 / 5040.0
        p = p * r + 1.0 / 720.0
        p = p * r + 1.0 / 120.0
        p = p * r + 1.0 / 24.0
        p = p * r + 1.0 / 6.0
        p = p * r + 0.5
        p = p * r + 1.0
        p = p * r + 1.0
        tmp[i] = p
        bits[i] = (np.int64(k) + 1023) << 52
    scale = bits.view(np.float64)
    for i in range(n):
        a[i] = 1.0 / (1.0 + tmp[i] * scale[i])


@njit(cache=True)
def _activate(z, B, H, tmp, bits):
    """Gate nonlinearities on a flat (B, 4H) block: sigmoid, except tanh on the candidate."""
    H4 = 4 * H
    for bi in range(B):
        for j in range(2 * H, 3 * H):
            z[bi * H4 + j] *= 2.0
    _sigmoid_inplace(z, B * H4, tmp, bits)
    for bi in range(B):
        for j in range(2 * H, 3 * H):
            z[bi * H4 + j] = 2.0 * z[bi * H4 + j] - 1.0


@njit(cache=True)
def _tanh_inplace(a, n, tmp, bits):
    for i in range(n):
        a[i] *= 2.0
    _sigmoid_inplace(a, n, tmp, bits)
    for i in range(n):
        a[i] = 2.0 * a[i] - 1.0


@njit(cache=True)
def _scan(Z, U, reverse, keep):
    T, B, H4 = Z.shape
    H = H4 // 4
    Hs = np.empty((T, B, H))
    if keep:
        Cs = np.empty((T, B, H))
        TCs = np.empty((T, B, H))
        Gs = np.empty((T, B, H4))
    else:
        Cs = TCs = np.empty((0, B, H))
        Gs = np.empty((0, B, H4))
    z = np.empty(B * H4)
    h = np.zeros(B * H)
    c = np.zeros(B * H)
    tc = np.empty(B * H)
    tmp = np.empty(B * H4)
    bits = np.empty(B * H4, dtype=np.int64)
    for s in range(T):
        t = T - 1 - s if reverse else s
        for bi in range(B):
            for m in range(H4):
                z[bi * H4 + m] = Z[t, bi, m]
            if s > 0:
                for k in range(H):
                    hk = h[bi * H + k]
                    for m in range(H4):
                        z[bi * H4 + m] += hk * U[k, m]
        _activate(z, B, H, tmp, bits)
        for bi in range(B):
            for j in range(H):
                o = bi * H4
                c[bi * H + j] = z[o + H + j] * c[bi * H + j] + z[o + j] * z[o + 2 * H + j]
                tc[bi * H + j] = c[bi * H + j]
        _tanh_inplace(tc, B * H, tmp, bits)
        for bi in range(B):
            for j in range(H):
                hv = z[bi * H4 + 3 * H + j] * tc[bi * H + j]
                h[bi * H + j] = hv
                Hs[t, bi, j] = hv
                if keep:
                    Cs[t, bi, j] = c[bi * H + j]
                    TCs[t, bi, j] = tc[bi * H + j]
            if keep:
                for m in range(H4):
                    Gs[t, bi, m] = z[bi * H4 + m]
    return Hs, Cs, TCs, Gs


@njit(cache=True)
def lstm_forward(Z, U, reverse):
    """Run one LSTM direction over a batch.

    Z: (T, B, 4H) input projections X @ W + b; U: (H, 4H).
    Returns hidden states, cell states, tanh(cell) and gate activations,
    each indexed by sequence position (not processing order).
    """
    return _scan(Z, U, reverse, True)


@njit(cache=True)
def lstm_forward_states(Z, U, reverse):
    """Forward pass that keeps only hidden states (inference path)."""
    return _scan(Z, U, reverse, False)[0]


@njit(cache=True)
def lstm_backward(dHs, Cs, TCs, Gs, U, reverse):
    """Backpropagation through time for one LSTM direction.

    dHs holds the loss gradient w.r.t. each emitted hidden state. Returns
    dZ (T, B, 4H), the gradient w.r.t. the gate pre-activations; weight,
    bias and input gradients follow from it by matmul.
    """
    T, B, H4 = Gs.shape
    H = H4 // 4
    dZ = np.empty((T, B, H4))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for s in range(T - 1, -1, -1):
        t = T - 1 - s if reverse else s
        tp = t + 1 if reverse else t - 1
        for bi in range(B):
            for j in range(H):
                ig = Gs[t, bi, j]
                fg = Gs[t, bi, H + j]
                gg = Gs[t, bi, 2 * H + j]
                og = Gs[t, bi, 3 * H + j]
                tc = TCs[t, bi, j]
                dh = dHs[t, bi, j] + dh_next[bi, j]
                dc = dc_next[bi, j] + dh * og * (1.0 - tc * tc)
                c_prev = Cs[tp, bi, j] if s > 0 else 0.0
                dZ[t, bi, j] = dc * gg * ig * (1.0 - ig)
                dZ[t, bi, H + j] = dc * c_prev * fg * (1.0 - fg)
                dZ[t, bi, 2 * H + j] = dc * ig * (1.0 - gg * gg)
                dZ[t, bi, 3 * H + j] = dh * tc * og * (1.0 - og)
                dc_next[bi, j] = dc * fg
        for bi in range(B):
            for k in range(H):
                acc = 0.0
                for m in range(H4):
                    acc += dZ[t, bi, m] * U[k, m]
                dh_next[bi, k] = acc
    return dZ


@njit(cache=True)
def dense_forward(X, W, b, relu):
    """Affine map per sample: X (B, D) @ W (D, M) + b, optional ReLU."""
    B, D = X.shape
    M = W.shape[1]
    out = np.empty((B, M))
    for bi in range(B):
        for m in range(M):
            out[bi, m] = b[m]
        for k in range(D):
            xk = X[bi, k]
            if xk != 0.0:
                for m in range(M):
                    out[bi, m] += xk * W[k, m]
        if relu:
            for m in range(M):
                if out[bi, m] < 0.0:
                    out[bi, m] = 0.0
    return out


@njit(cache=True)
def dense_backward(dOut, X, W):
    """Gradients of an affine map given dOut (B, M). Returns dX, dW, db."""
    B, D = X.shape
    M = W.shape[1]
    dX = np.zeros((B, D))
    dW = np.zeros((D, M))
    db = np.zeros(M)
    for bi in range(B):
        for m in range(M):
            db[m] += dOut[bi, m]
        for k in range(D):
            xk = X[bi, k]
            acc = 0.0
            for m in range(M):
                dW[k, m] += xk * dOut[bi, m]
                acc += W[k, m] * dOut[bi, m]
            dX[bi, k] = acc
    return dX, dW, db

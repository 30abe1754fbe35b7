"""Numba JIT kernels.

Loop nesting fixes the reduction order (left-to-right over contraction axes),
which keeps results bit-identical to the numpy fallback and to scalar
reference loops. Parallel loops only split axes whose iterations write
disjoint output slices, so thread count never changes results.
"""

import math

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def matmul(a, b):
    m, kk = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in prange(m):
        for k in range(kk):
            av = a[i, k]
            for j in range(n):
                out[i, j] += av * b[k, j]
    return out


@njit(parallel=True, cache=True)
def conv2d_forward(xp, w, stride):
    # xp is pre-padded input (B, C, Hp, Wp); w is (F, C, kh, kw)
    B, C, Hp, Wp = xp.shape
    F, _, kh, kw = w.shape
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1
    out = np.zeros((B, F, Ho, Wo))
    for b in prange(B):
        for f in range(F):
            for c in range(C):
                for i in range(kh):
                    for j in range(kw):
                        wv = w[f, c, i, j]
                        for ho in range(Ho):
                            hi = ho * stride + i
                            for wo in range(Wo):
                                out[b, f, ho, wo] += wv * xp[b, c, hi, wo * stride + j]
    return out


@njit(parallel=True, cache=True)
def conv2d_grad_w(xp, g, kh, kw, stride):
    B, C, Hp, Wp = xp.shape
    F, _, Ho, Wo = g.shape
    dw = np.zeros((F, C, kh, kw))
    for f in prange(F):
        for b in range(B):
            for c in range(C):
                for i in range(kh):
                    for j in range(kw):
                        acc = 0.0
                        for ho in range(Ho):
                            hi = ho * stride + i
                            for wo in range(Wo):
                                acc += g[b, f, ho, wo] * xp[b, c, hi, wo * stride + j]
                        dw[f, c, i, j] += acc
    return dw


@njit(parallel=True, cache=True)
def conv2d_grad_x(g, w, Hp, Wp, stride):
    B, F, Ho, Wo = g.shape
    C = w.shape[1]
    kh = w.shape[2]
    kw = w.shape[3]
    dxp = np.zeros((B, C, Hp, Wp))
    for b in prange(B):
        for f in range(F):
            for ho in range(Ho):
                for wo in range(Wo):
                    gv = g[b, f, ho, wo]
                    for c in range(C):
                        for i in range(kh):
                            hi = ho * stride + i
                            for j in range(kw):
                                dxp[b, c, hi, wo * stride + j] += gv * w[f, c, i, j]
    return dxp


@njit(parallel=True, cache=True)
def maxpool2x2_forward(x):
    B, C, H, W = x.shape
    Ho = H // 2
    Wo = W // 2
    out = np.empty((B, C, Ho, Wo))
    # window index in raster order (0,0),(0,1),(1,0),(1,1); ties -> lowest index
    idx = np.empty((B, C, Ho, Wo), dtype=np.int8)
    for b in prange(B):
        for c in range(C):
            for ho in range(Ho):
                for wo in range(Wo):
                    best = x[b, c, 2 * ho, 2 * wo]
                    bi = 0
                    v = x[b, c, 2 * ho, 2 * wo + 1]
                    if v > best:
                        best = v
                        bi = 1
                    v = x[b, c, 2 * ho + 1, 2 * wo]
                    if v > best:
                        best = v
                        bi = 2
                    v = x[b, c, 2 * ho + 1, 2 * wo + 1]
                    if v > best:
                        best = v
                        bi = 3
                    out[b, c, ho, wo] = best
                    idx[b, c, ho, wo] = bi
    return out, idx


@njit(parallel=True, cache=True)
def maxpool2x2_backward(g, idx):
    B, C, Ho, Wo = g.shape
    dx = np.zeros((B, C, Ho * 2, Wo * 2))
    for b in prange(B):
        for c in range(C):
            for ho in range(Ho):
                for wo in range(Wo):
                    k = idx[b, c, ho, wo]
                    dx[b, c, 2 * ho + k // 2, 2 * wo + k % 2] = g[b, c, ho, wo]
    return dx


@njit(cache=True)
def _smooth_spike(vp, theta, sigma):
    # CDF-style integral of the exponential surrogate: 0 at -inf, 1/2 at theta, 1 at +inf
    d = vp - theta
    if d < 0.0:
        return 0.5 * math.exp(d / sigma)
    return 1.0 - 0.5 * math.exp(-d / sigma)


@njit(cache=True)
def _surrogate(vp, theta, sigma):
    return 0.5 / sigma * math.exp(-abs(vp - theta) / sigma)


@njit(parallel=True, cache=True)
def lif_forward(drive, au, av, theta, sigma, relaxed):
    # drive: (B, T, n); au/av are the *retention* factors 1 - decay
    B, T, n = drive.shape
    s = np.empty((B, T, n))
    vpre = np.empty((B, T, n))
    for b in prange(B):
        u = np.zeros(n)
        v = np.zeros(n)
        for t in range(T):
            for i in range(n):
                ui = au * u[i] + drive[b, t, i]
                vp = av * v[i] + ui
                if relaxed:
                    sv = _smooth_spike(vp, theta, sigma)
                else:
                    sv = 1.0 if vp >= theta else 0.0
                u[i] = ui
                v[i] = vp * (1.0 - sv)  # hard reset; surrogate sees pre-reset vp
                vpre[b, t, i] = vp
                s[b, t, i] = sv
    return s, vpre


@njit(parallel=True, cache=True)
def lif_backward(gout, s, vpre, au, av, theta, sigma):
    # Adjoint of lif_forward; identical in hard and relaxed mode because the
    # hard path substitutes the surrogate for the Heaviside derivative.
    B, T, n = gout.shape
    gdrive = np.empty((B, T, n))
    for b in prange(B):
        gu = np.zeros(n)
        gvp_next = np.zeros(n)
        for t in range(T - 1, -1, -1):
            for i in range(n):
                gv = av * gvp_next[i]
                vp = vpre[b, t, i]
                sv = s[b, t, i]
                gs = gout[b, t, i] - gv * vp
                gvp = gv * (1.0 - sv) + gs * _surrogate(vp, theta, sigma)
                gu[i] = gvp + au * gu[i]
                gdrive[b, t, i] = gu[i]
                gvp_next[i] = gvp
    return gdrive

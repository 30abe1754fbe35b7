"""Pure-numpy fallback kernels.

Python-level loops run only over contraction axes (k, kernel taps, time), so
each step is a vectorized numpy op while the accumulation order stays
left-to-right, matching the numba kernels bit-for-bit.
"""

import numpy as np


def matmul(a, b):
    m, kk = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for k in range(kk):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


def conv2d_forward(xp, w, stride):
    B, C, Hp, Wp = xp.shape
    F, _, kh, kw = w.shape
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1
    out = np.zeros((B, F, Ho, Wo))
    for c in range(C):
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, c, i : i + Ho * stride : stride, j : j + Wo * stride : stride]
                out += w[None, :, c, i, j, None, None] * patch[:, None, :, :]
    return out


def conv2d_grad_w(xp, g, kh, kw, stride):
    B, C, Hp, Wp = xp.shape
    F, _, Ho, Wo = g.shape
    dw = np.empty((F, C, kh, kw))
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + Ho * stride : stride, j : j + Wo * stride : stride]
            # (B,F,Ho,Wo) x (B,C,Ho,Wo) -> (F,C)
            dw[:, :, i, j] = np.tensordot(g, patch, axes=([0, 2, 3], [0, 2, 3]))
    return dw


def conv2d_grad_x(g, w, Hp, Wp, stride):
    B, F, Ho, Wo = g.shape
    C = w.shape[1]
    kh, kw = w.shape[2], w.shape[3]
    dxp = np.zeros((B, C, Hp, Wp))
    for i in range(kh):
        for j in range(kw):
            contrib = np.einsum("bfhw,fc->bchw", g, w[:, :, i, j])
            dxp[:, :, i : i + Ho * stride : stride, j : j + Wo * stride : stride] += contrib
    return dxp


def maxpool2x2_forward(x):
    B, C, H, W = x.shape
    Ho, Wo = H // 2, W // 2
    win = x.reshape(B, C, Ho, 2, Wo, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Ho, Wo, 4)
    idx = win.argmax(axis=-1).astype(np.int8)  # argmax takes the first max: lowest index
    out = np.take_along_axis(win, idx[..., None].astype(np.int64), axis=-1)[..., 0]
    return out, idx


def maxpool2x2_backward(g, idx):
    B, C, Ho, Wo = g.shape
    scatter = np.zeros((B, C, Ho, Wo, 4))
    np.put_along_axis(scatter, idx[..., None].astype(np.int64), g[..., None], axis=-1)
    dx = scatter.reshape(B, C, Ho, Wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, 2 * Ho, 2 * Wo)
    return dx


def _smooth_spike_arr(vp, theta, sigma):
    d = vp - theta
    e = np.exp(-np.abs(d) / sigma)
    return np.where(d < 0.0, 0.5 * e, 1.0 - 0.5 * e)


def _surrogate_arr(vp, theta, sigma):
    return 0.5 / sigma * np.exp(-np.abs(vp - theta) / sigma)


def lif_forward(drive, au, av, theta, sigma, relaxed):
    B, T, n = drive.shape
    s = np.empty_like(drive)
    vpre = np.empty_like(drive)
    u = np.zeros((B, n))
    v = np.zeros((B, n))
    for t in range(T):
        u = au * u + drive[:, t, :]
        vp = av * v + u
        if relaxed:
            sv = _smooth_spike_arr(vp, theta, sigma)
        else:
            sv = (vp >= theta).astype(np.float64)
        v = vp * (1.0 - sv)
        vpre[:, t, :] = vp
        s[:, t, :] = sv
    return s, vpre


def lif_backward(gout, s, vpre, au, av, theta, sigma):
    B, T, n = gout.shape
    gdrive = np.empty_like(gout)
    gu = np.zeros((B, n))
    gvp_next = np.zeros((B, n))
    for t in range(T - 1, -1, -1):
        gv = av * gvp_next
        vp = vpre[:, t, :]
        sv = s[:, t, :]
        gs = gout[:, t, :] - gv * vp
        gvp = gv * (1.0 - sv) + gs * _surrogate_arr(vp, theta, sigma)
        gu = gvp + au * gu
        gdrive[:, t, :] = gu
        gvp_next = gvp
    return gdrive

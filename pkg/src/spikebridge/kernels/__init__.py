"""Dispatch layer over the numba and numpy kernel backends.

The active backend is chosen at import from ``spikebridge.backend`` and can be
swapped at runtime with :func:`set_backend` (used when re-running a training
manifest that was produced under the other backend).
"""

import numpy as np

from .. import backend
from ..errors import ConfigurationError
from . import _numpy

if backend.HAS_NUMBA:
    from . import _numba
else:  # pragma: no cover
    _numba = None

_ACTIVE_NAME = backend.default_backend()
_ACTIVE = _numba if _ACTIVE_NAME == "numba" else _numpy


def current_backend() -> str:
    return _ACTIVE_NAME


def set_backend(name: str) -> None:
    global _ACTIVE, _ACTIVE_NAME
    if name not in ("numba", "numpy"):
        raise ConfigurationError(f"unknown kernel backend {name!r}")
    if name == "numba" and _numba is None:
        raise ConfigurationError("numba backend requested but numba is not importable")
    _ACTIVE_NAME = name
    _ACTIVE = _numba if name == "numba" else _numpy


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def matmul(a, b):
    a = _f64(a)
    b = _f64(b)
    if a.shape[0] == 0 or b.shape[1] == 0:
        return np.zeros((a.shape[0], b.shape[1]))
    return _ACTIVE.matmul(a, b)


def conv2d_forward(xp, w, stride):
    xp = _f64(xp)
    w = _f64(w)
    if xp.shape[0] == 0:
        kh = w.shape[2]
        ho = (xp.shape[2] - kh) // stride + 1
        wo = (xp.shape[3] - w.shape[3]) // stride + 1
        return np.zeros((0, w.shape[0], ho, wo))
    return _ACTIVE.conv2d_forward(xp, w, stride)


def conv2d_grad_w(xp, g, kh, kw, stride):
    return _ACTIVE.conv2d_grad_w(_f64(xp), _f64(g), kh, kw, stride)


def conv2d_grad_x(g, w, hp, wp, stride):
    return _ACTIVE.conv2d_grad_x(_f64(g), _f64(w), hp, wp, stride)


def maxpool2x2_forward(x):
    return _ACTIVE.maxpool2x2_forward(_f64(x))


def maxpool2x2_backward(g, idx):
    return _ACTIVE.maxpool2x2_backward(_f64(g), idx)


def lif_forward(drive, au, av, theta, sigma, relaxed):
    drive = _f64(drive)
    if drive.size == 0:
        return np.empty_like(drive), np.empty_like(drive)
    return _ACTIVE.lif_forward(drive, au, av, theta, sigma, relaxed)


def lif_backward(gout, s, vpre, au, av, theta, sigma):
    gout = _f64(gout)
    if gout.size == 0:
        return np.empty_like(gout)
    return _ACTIVE.lif_backward(gout, _f64(s), _f64(vpre), au, av, theta, sigma)

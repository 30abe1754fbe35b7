"""CUBA-LIF neuron dynamics, spiking convolution, and spike pooling.

The neuron model: input charges a decaying synaptic current ``u``, which
drives a decaying membrane voltage ``v``; the neuron emits a spike when ``v``
reaches threshold and the voltage is hard-reset to zero. Gradients flow
through the whole unrolled sequence; the non-differentiable spike step is
replaced in the backward pass by an exponential surrogate evaluated on the
pre-reset voltage.

Two forward modes exist:

* hard (default): spikes are exactly {0, 1}; backward substitutes the
  surrogate for the Heaviside derivative (straight-through).
* relaxed: the spike step is replaced by the smooth integral of the
  surrogate, making the whole network differentiable so analytic gradients
  can be checked against finite differences end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels, ops
from .errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    NumericError,
    ResourceError,
)
from .tensor import Tensor, accumulate_grad, make_node

# fused BPTT state kept per lif_sequence call is ~4x the drive array; reject
# unrolls that would exceed this budget instead of thrashing
MEMORY_BUDGET_BYTES = 8 * 1024**3


@dataclass(frozen=True)
class CubaLifParams:
    """Neuron constants. Decays live in [0, 1]; a decay of 0 means no leak."""

    current_decay: float = 0.25
    voltage_decay: float = 0.1
    threshold: float = 1.0
    surrogate_width: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.current_decay <= 1.0:
            raise ConfigurationError(f"current_decay must be in [0,1], got {self.current_decay}")
        if not 0.0 <= self.voltage_decay <= 1.0:
            raise ConfigurationError(f"voltage_decay must be in [0,1], got {self.voltage_decay}")
        if not self.threshold >= 0.0:
            raise ConfigurationError(f"threshold must be non-negative, got {self.threshold}")
        if not self.surrogate_width > 0.0:
            raise ConfigurationError(
                f"surrogate_width must be positive, got {self.surrogate_width}"
            )


@dataclass
class CubaLifState:
    """Per-layer neuron state: synaptic current and membrane voltage."""

    u: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "CubaLifState":
        return cls(u=np.zeros(shape), v=np.zeros(shape))


def cuba_lif_step(state: CubaLifState, x_t, p: CubaLifParams, layer: str | None = None,
                  timestep: int | None = None):
    """One neuron update: returns (new state, binary spike array).

    Stateless building block used by oracles and the hardware-facing paths;
    training uses the fused :func:`lif_sequence` graph op instead.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != state.u.shape:
        raise ContractError(f"input shape {x_t.shape} does not match state shape {state.u.shape}")
    if np.isnan(x_t).any():
        raise NumericError("NaN in neuron input", layer=layer, timestep=timestep)
    u = (1.0 - p.current_decay) * state.u + x_t
    v = (1.0 - p.voltage_decay) * state.v + u
    s = (v >= p.threshold).astype(np.float64)
    v_post = v * (1.0 - s)
    return CubaLifState(u=u, v=v_post), s


def surrogate_grad(v, p: CubaLifParams) -> np.ndarray:
    """Spike-escape kernel (1/2s)*exp(-|v - theta|/s) standing in for dS/dv."""
    v = np.asarray(v, dtype=np.float64)
    return 0.5 / p.surrogate_width * np.exp(-np.abs(v - p.threshold) / p.surrogate_width)


def smooth_spike(v, p: CubaLifParams) -> np.ndarray:
    """Integral of the surrogate: the relaxed spike function (0 -> 1, 1/2 at theta)."""
    v = np.asarray(v, dtype=np.float64)
    d = v - p.threshold
    e = np.exp(-np.abs(d) / p.surrogate_width)
    return np.where(d < 0.0, 0.5 * e, 1.0 - 0.5 * e)


def lif_sequence(drive: Tensor, p: CubaLifParams, relaxed: bool = False,
                 layer: str | None = None) -> Tensor:
    """Unroll CUBA-LIF over a (B, T, n) drive tensor; emits (B, T, n) spikes.

    Records a single fused graph node whose backward implements the complete
    BPTT adjoint recurrence (temporal path through u and v plus the
    reset-path coupling), so the unroll costs two kernel calls regardless of T.
    """
    if drive.ndim != 3:
        raise ContractError(f"lif_sequence expects (B,T,n) drive, got {drive.shape}")
    if drive.data.size:
        nan_mask = np.isnan(drive.data)
        if nan_mask.any():
            t_bad = int(np.argwhere(nan_mask)[0][1])
            raise NumericError("NaN in synaptic drive", layer=layer, timestep=t_bad)
    approx_bytes = 4 * drive.data.nbytes
    if approx_bytes > MEMORY_BUDGET_BYTES:
        raise ResourceError(
            f"BPTT unroll of shape {drive.shape} needs ~{approx_bytes / 1e9:.1f} GB; "
            "reduce the timestep count or batch size"
        )
    au = 1.0 - p.current_decay
    av = 1.0 - p.voltage_decay
    s, vpre = kernels.lif_forward(drive.data, au, av, p.threshold, p.surrogate_width, relaxed)

    def backward(g):
        gd = kernels.lif_backward(g, s, vpre, au, av, p.threshold, p.surrogate_width)
        accumulate_grad(drive, gd)

    return make_node(s, (drive,), backward, "lif_sequence")


def spk_conv(x: Tensor, w: Tensor, p: CubaLifParams, stride: int = 1, pad: int = 1,
             relaxed: bool = False, layer: str | None = None) -> Tensor:
    """Spiking convolution over a time-major batch (B, T, C, H, W).

    The synaptic drive is an ordinary convolution applied per timestep (one
    batched kernel call over B*T frames); the drive then feeds the CUBA-LIF
    recurrence. Output is (B, T, F, H', W') spikes.
    """
    B, T, C, H, W = x.shape
    folded = ops.reshape(x, (B * T, C, H, W))
    drive = ops.conv2d(folded, w, stride=stride, pad=pad)
    F, Ho, Wo = drive.shape[1], drive.shape[2], drive.shape[3]
    s = lif_sequence(ops.reshape(drive, (B, T, F * Ho * Wo)), p, relaxed=relaxed, layer=layer)
    return ops.reshape(s, (B, T, F, Ho, Wo))


def spk_dense(x: Tensor, w: Tensor, p: CubaLifParams, relaxed: bool = False,
              layer: str | None = None) -> Tensor:
    """Spiking dense layer over (B, T, n) spike vectors; bias-free drive."""
    B, T, n = x.shape
    drive = ops.matmul(ops.reshape(x, (B * T, n)), w)
    s = lif_sequence(ops.reshape(drive, (B, T, w.shape[1])), p, relaxed=relaxed, layer=layer)
    return s


def spike_pool(x: Tensor, mode: str = "or", p: CubaLifParams | None = None,
               relaxed: bool = False) -> Tensor:
    """2x2 spatial pooling of spike maps (B, T, C, H, W), preserving binarity.

    ``or`` (default) reduces each window by logical OR, realized as a max so
    the backward pass routes gradient to the first spiking element.
    ``sum_threshold`` fires when the window's spike count crosses 1/2,
    with the exponential surrogate (width from ``p``) as its backward rule.
    """
    B, T, C, H, W = x.shape
    folded = ops.reshape(x, (B * T, C, H, W))
    if mode == "or":
        pooled = ops.maxpool2d(folded)
    elif mode == "sum_threshold":
        if p is None:
            p = CubaLifParams()
        window_sum = _window_sum(folded)
        pooled = spike_threshold(window_sum, threshold=0.5, width=p.surrogate_width,
                                 relaxed=relaxed)
    else:
        raise ConfigurationError(f"unknown spike_pool mode {mode!r}")
    Ho, Wo = pooled.shape[2], pooled.shape[3]
    return ops.reshape(pooled, (B, T, C, Ho, Wo))


def _window_sum(x: Tensor) -> Tensor:
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise DimensionError(f"spike_pool needs even spatial dims, got {x.shape}")
    win = ops.reshape(x, (B, C, H // 2, 2, W // 2, 2))
    return ops.sum_(ops.sum_(win, axis=5), axis=3)


def spike_threshold(x: Tensor, threshold: float, width: float, relaxed: bool = False) -> Tensor:
    """Heaviside step with exponential-surrogate backward (smooth in relaxed mode)."""
    d = x.data - threshold
    if relaxed:
        e = np.exp(-np.abs(d) / width)
        out = np.where(d < 0.0, 0.5 * e, 1.0 - 0.5 * e)
    else:
        out = (d >= 0.0).astype(np.float64)

    def backward(g):
        accumulate_grad(x, g * (0.5 / width * np.exp(-np.abs(d) / width)))

    return make_node(out, (x,), backward, "spike_threshold")


def spk_conv_forward(x, w, p: CubaLifParams, stride: int = 1, pad: int = 1) -> np.ndarray:
    """Single-sample functional form: binary (C,H,W,T) in, binary (F,H',W',T) out."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ContractError(f"expected (C,H,W,T) spikes, got shape {x.shape}")
    xt = Tensor(np.ascontiguousarray(x.transpose(3, 0, 1, 2))[None])  # (1,T,C,H,W)
    s = spk_conv(xt, w if isinstance(w, Tensor) else Tensor(w), p, stride=stride, pad=pad)
    return np.ascontiguousarray(s.data[0].transpose(1, 2, 3, 0))


def spike_pool_forward(x, mode: str = "or") -> np.ndarray:
    """Single-sample functional form of spike_pool on (C,H,W,T) spikes."""
    x = np.asarray(x, dtype=np.float64)
    xt = Tensor(np.ascontiguousarray(x.transpose(3, 0, 1, 2))[None])
    pooled = spike_pool(xt, mode=mode)
    return np.ascontiguousarray(pooled.data[0].transpose(1, 2, 3, 0))

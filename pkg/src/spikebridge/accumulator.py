"""The spiking -> non-spiking bridge.

Spikes arriving over ``T`` timesteps are summed in groups of ``interval``
consecutive steps; the per-group channel vectors are then concatenated
group-major/channel-minor (earliest group first), expanding the channel axis
by ``T / interval`` while removing the temporal axis. The backward rule hands
every spike of a group the gradient of the group's output element.

The group-major/channel-minor flattening order defined here is the wire
format consumed by the hardware counter-bank simulator and by the first
non-spiking layer of a hybrid model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, DimensionError
from .tensor import Tensor, accumulate_grad, make_node


@dataclass(frozen=True)
class AccumulatorConfig:
    """Accumulate interval and the temporal extent it divides.

    ``pad_final`` zero-pads a non-divisible trailing group instead of
    rejecting the configuration; off by default because silent padding skews
    temporal alignment.
    """

    interval: int
    timesteps: int
    pad_final: bool = False

    def __post_init__(self):
        if self.interval < 1:
            raise ConfigurationError(f"interval must be >= 1, got {self.interval}")
        if self.timesteps < 1:
            raise ConfigurationError(f"timesteps must be >= 1, got {self.timesteps}")
        if self.interval > self.timesteps:
            raise ConfigurationError(
                f"interval {self.interval} exceeds timesteps {self.timesteps}"
            )
        if self.timesteps % self.interval and not self.pad_final:
            raise ConfigurationError(
                f"interval {self.interval} does not divide timesteps {self.timesteps}"
            )

    @property
    def groups(self) -> int:
        return -(-self.timesteps // self.interval)

    @property
    def padded_timesteps(self) -> int:
        return self.groups * self.interval


def _check_binary(s: np.ndarray):
    bad = ~((s == 0.0) | (s == 1.0))
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ContractError(f"input is not binary at index {idx}: value {s[idx]!r}")


def accumulate_forward(s, cfg: AccumulatorConfig, check_binary: bool = True) -> np.ndarray:
    """Sum spikes (C,H,W,T) into counts (C*T/I, H, W).

    Output channel ``j`` holds the spikes of input channel ``j mod C`` over
    timesteps ``[I*floor(j/C), I*floor(j/C) + I)``.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 4:
        raise DimensionError(f"expected (C,H,W,T) input, got shape {s.shape}")
    C, H, W, T = s.shape
    if T != cfg.timesteps:
        raise DimensionError(f"input has T={T} but config expects T={cfg.timesteps}")
    if check_binary:
        _check_binary(s)
    if cfg.padded_timesteps != T:
        padded = np.zeros((C, H, W, cfg.padded_timesteps))
        padded[..., :T] = s
        s = padded
    G, I = cfg.groups, cfg.interval
    grouped = s.reshape(C, H, W, G, I).sum(axis=4)  # exact: summands are small integers
    return np.ascontiguousarray(grouped.transpose(3, 0, 1, 2).reshape(G * C, H, W))


def accumulate_backward(g_a, cfg: AccumulatorConfig, channels: int) -> np.ndarray:
    """Spread output gradients (C*T/I, H, W) back over spikes (C,H,W,T).

    Every timestep ``j`` of channel ``i`` receives the gradient of output
    element ``C*floor(j/I) + i``: spikes summed together share one gradient.
    """
    g_a = np.asarray(g_a, dtype=np.float64)
    G, I = cfg.groups, cfg.interval
    C = channels
    if g_a.ndim != 3 or g_a.shape[0] != G * C:
        raise DimensionError(
            f"gradient shape {g_a.shape} does not match {G * C} output channels for config {cfg}"
        )
    H, W = g_a.shape[1], g_a.shape[2]
    spread = np.repeat(g_a.reshape(G, C, H, W).transpose(1, 2, 3, 0)[..., None], I, axis=4)
    g_s = spread.reshape(C, H, W, G * I)
    return np.ascontiguousarray(g_s[..., : cfg.timesteps])


class JacobianCheckResult:
    """Boolean-like adjoint check outcome, with the first violating index."""

    def __init__(self, ok: bool, first_violation=None):
        self.ok = ok
        self.first_violation = first_violation

    def __bool__(self):
        return self.ok

    def __repr__(self):
        if self.ok:
            return "JacobianCheckResult(ok=True)"
        return f"JacobianCheckResult(ok=False, first_violation={self.first_violation})"


def jacobian_check(cfg: AccumulatorConfig, C: int, H: int, W: int, trials: int = 10,
                   seed: int = 0) -> JacobianCheckResult:
    """Verify <forward(x), y> == <x, backward(y)> exactly on random integer data.

    Integer-valued inputs make both inner products exact in float64, so the
    0/1-Jacobian adjoint identity must hold with equality, not tolerance.
    """
    total = C * H * W * cfg.timesteps
    if total > 10**4:
        raise ContractError(f"jacobian_check is meant for small sizes, got {total} elements")
    rng = np.random.default_rng(seed)
    G = cfg.groups
    for _ in range(trials):
        x = rng.integers(-8, 9, size=(C, H, W, cfg.timesteps)).astype(np.float64)
        y = rng.integers(-8, 9, size=(G * C, H, W)).astype(np.float64)
        g_s = accumulate_backward(y, cfg, C)
        lhs = float((accumulate_forward(x, cfg, check_binary=False) * y).sum())
        rhs = float((x * g_s).sum())
        if lhs != rhs:
            # locate the first spike whose backward gradient is not the
            # gradient of the output element it was summed into
            for idx in np.ndindex(C, H, W, cfg.timesteps):
                c, h, w, t = idx
                if g_s[idx] != y[C * (t // cfg.interval) + c, h, w]:
                    return JacobianCheckResult(False, idx)
            return JacobianCheckResult(False, (0, 0, 0, 0))
    return JacobianCheckResult(True)


def accumulate(x: Tensor, interval: int, check_binary: bool = False) -> Tensor:
    """Graph op over time-major batches: (B,T,C,H,W) -> (B, G*C, H, W).

    Used inside hybrid models; ``check_binary`` is off by default because the
    relaxed training mode legitimately feeds real-valued spike surrogates.
    """
    B, T, C, H, W = x.shape
    cfg = AccumulatorConfig(interval=interval, timesteps=T)
    G, I = cfg.groups, cfg.interval
    if check_binary:
        _check_binary(x.data)
    out = x.data.reshape(B, G, I, C, H, W).sum(axis=2).reshape(B, G * C, H, W)

    def backward(g):
        spread = np.repeat(g.reshape(B, G, 1, C, H, W), I, axis=2)
        accumulate_grad(x, spread.reshape(B, T, C, H, W))

    return make_node(out, (x,), backward, "accumulate")

"""Model factory: ANN/SNN baselines and the S_kA_m hybrid family.

Every architecture is five convolution blocks followed by three dense layers.
A hybrid with ``k`` spiking convolutions runs blocks 1..k as spiking
(CUBA-LIF activations), bridges through the accumulator, and runs the rest as
conventional conv/ReLU blocks; the dense head is always non-spiking except in
the pure SNN baseline, whose head is spiking with a spike-count readout and
which contains no accumulator. The accumulator multiplies the channel count
seen by the next layer by T/interval.

Models consume time-major spike batches of shape (B, T, C, H, W).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import ops
from .accumulator import accumulate
from .errors import BuildError, ConfigurationError, FormatError
from .spiking import CubaLifParams, spike_pool, spk_conv, spk_dense
from .tensor import Tensor

MODEL_NAMES = ("ann", "s1a4", "s2a3", "s3a2", "s4a1", "s5a0", "snn")

_SPIKING_CONVS = {"ann": 0, "s1a4": 1, "s2a3": 2, "s3a2": 3, "s4a1": 4, "s5a0": 5, "snn": 5}


@dataclass(frozen=True)
class HybridModelSpec:
    """Declarative description of one architecture variant."""

    model: str = "s2a3"
    interval: int = 5
    input_shape: tuple = (2, 32, 32, 20)  # (C, H, W, T)
    channel_schedule: tuple = (16, 32, 64, 64, 64)
    kernel_size: int = 3
    pool_after: tuple = (1, 2, 3)  # 1-based conv indices followed by 2x2 pooling
    dense_widths: tuple = (256, 128)
    classes: int = 3
    pool_mode: str = "or"
    lif: CubaLifParams = field(default_factory=CubaLifParams)
    spiking_init_gain: float = 2.5

    def __post_init__(self):
        if self.model not in MODEL_NAMES:
            raise ConfigurationError(f"unknown model {self.model!r}; expected one of {MODEL_NAMES}")
        if len(self.channel_schedule) != 5:
            raise ConfigurationError("channel_schedule must list 5 conv output widths")
        if len(self.input_shape) != 4:
            raise ConfigurationError("input_shape must be (C, H, W, T)")
        if self.classes < 2:
            raise ConfigurationError("classes must be >= 2")
        t = self.input_shape[3]
        if not self.is_snn:
            if not 1 <= self.interval <= t:
                raise ConfigurationError(f"interval {self.interval} outside 1..{t}")
            if t % self.interval:
                raise ConfigurationError(
                    f"interval {self.interval} does not divide timesteps {t}"
                )
        if any(i < 1 or i > 5 for i in self.pool_after):
            raise ConfigurationError("pool_after entries must be conv indices 1..5")

    @property
    def spiking_convs(self) -> int:
        return _SPIKING_CONVS[self.model]

    @property
    def is_snn(self) -> bool:
        return self.model == "snn"

    @property
    def timesteps(self) -> int:
        return self.input_shape[3]

    @property
    def expansion(self) -> int:
        """Channel expansion factor T/I applied by the accumulator."""
        return 1 if self.is_snn else self.timesteps // self.interval

    def to_json(self) -> str:
        d = {
            "model": self.model,
            "interval": self.interval,
            "input_shape": list(self.input_shape),
            "channel_schedule": list(self.channel_schedule),
            "kernel_size": self.kernel_size,
            "pool_after": list(self.pool_after),
            "dense_widths": list(self.dense_widths),
            "classes": self.classes,
            "pool_mode": self.pool_mode,
            "lif": {
                "current_decay": self.lif.current_decay,
                "voltage_decay": self.lif.voltage_decay,
                "threshold": self.lif.threshold,
                "surrogate_width": self.lif.surrogate_width,
            },
            "spiking_init_gain": self.spiking_init_gain,
        }
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "HybridModelSpec":
        d = json.loads(text)
        lif = CubaLifParams(**d.pop("lif")) if "lif" in d else CubaLifParams()
        for key in ("input_shape", "channel_schedule", "pool_after", "dense_widths"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(lif=lif, **d)

    def with_interval(self, interval: int) -> "HybridModelSpec":
        return replace(self, interval=interval)


class _SpikingConvBlock:
    spiking = True

    def __init__(self, name, w, lif, pad, pool, pool_mode, out_shape):
        self.name = name
        self.w = w
        self.lif = lif
        self.pad = pad
        self.pool = pool
        self.pool_mode = pool_mode
        self.out_shape = out_shape  # (C, H, W) after pooling
        # LIF neurons sit at the conv output, before any pooling
        self.neurons = out_shape[0] * out_shape[1] * out_shape[2] * (4 if pool else 1)

    def params(self):
        return {f"{self.name}.w": self.w}

    def fanout(self):
        # synapses driven by one presynaptic spike: kernel taps x output maps
        return self.w.shape[2] * self.w.shape[3] * self.w.shape[0]

    def forward(self, x, relaxed=False):
        s = spk_conv(x, self.w, self.lif, pad=self.pad, relaxed=relaxed, layer=self.name)
        if self.pool:
            s = spike_pool(s, mode=self.pool_mode, p=self.lif, relaxed=relaxed)
        return s


class _AnnConvBlock:
    spiking = False

    def __init__(self, name, w, pad, pool, out_shape):
        self.name = name
        self.w = w
        self.pad = pad
        self.pool = pool
        self.out_shape = out_shape  # (C, H, W) after pooling
        positions = out_shape[1] * out_shape[2] * (4 if pool else 1)
        self.macs = w.shape[0] * positions * w.shape[1] * w.shape[2] * w.shape[3]
        self.weight_reads = int(w.data.size)

    def params(self):
        return {f"{self.name}.w": self.w}

    def forward(self, x, relaxed=False):
        y = ops.relu(ops.conv2d(x, self.w, pad=self.pad))
        if self.pool:
            y = ops.maxpool2d(y)
        return y


class _AnnDenseBlock:
    spiking = False

    def __init__(self, name, w, b, activation):
        self.name = name
        self.w = w
        self.b = b
        self.activation = activation
        self.macs = int(w.data.size)
        self.weight_reads = int(w.data.size + b.data.size)

    def params(self):
        return {f"{self.name}.w": self.w, f"{self.name}.b": self.b}

    def forward(self, x, relaxed=False):
        y = ops.dense(x, self.w, self.b)
        return ops.relu(y) if self.activation else y


class _SpikingDenseBlock:
    spiking = True

    def __init__(self, name, w, lif):
        self.name = name
        self.w = w
        self.lif = lif
        self.neurons = w.shape[1]

    def params(self):
        return {f"{self.name}.w": self.w}

    def fanout(self):
        return self.w.shape[1]

    def forward(self, x, relaxed=False):
        return spk_dense(x, self.w, self.lif, relaxed=relaxed, layer=self.name)


class BuiltModel:
    """A realized architecture: ordered blocks plus a flat parameter store."""

    def __init__(self, spec, conv_blocks, dense_blocks, bridge_after, bridge_input_shape):
        self.spec = spec
        self.conv_blocks = conv_blocks
        self.dense_blocks = dense_blocks
        self.bridge_after = bridge_after  # conv index 0..5 the accumulator follows; None for SNN
        self.bridge_input_shape = bridge_input_shape  # (C, H, W) entering the accumulator
        self.params = {}
        for blk in conv_blocks + dense_blocks:
            self.params.update(blk.params())
        self.last_bridge_output = None
        self.last_bridge_input = None
        self.last_activity = None

    @property
    def parameter_count(self) -> int:
        return sum(int(t.data.size) for t in self.params.values())

    def neuron_census(self) -> dict:
        return {
            blk.name: blk.neurons
            for blk in self.conv_blocks + self.dense_blocks
            if blk.spiking
        }

    def state_dict(self) -> dict:
        return {name: t.data.copy() for name, t in sorted(self.params.items())}

    def load_state(self, arrays: dict) -> None:
        for name, t in self.params.items():
            if name not in arrays:
                raise ConfigurationError(f"checkpoint is missing parameter {name!r}")
            if arrays[name].shape != t.data.shape:
                raise ConfigurationError(
                    f"checkpoint parameter {name!r} has shape {arrays[name].shape}, "
                    f"expected {t.data.shape}"
                )
            t.data = np.ascontiguousarray(arrays[name], dtype=np.float64)

    def forward(self, x, relaxed: bool = False, record_activity: bool = False) -> Tensor:
        """Run a time-major batch (B, T, C, H, W) through to class logits (B, K)."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        spec = self.spec
        activity = {} if record_activity else None
        batch = x.shape[0]
        self.last_bridge_output = None
        self.last_bridge_input = None

        if self.bridge_after == 0:
            self.last_bridge_input = x
            x = accumulate(x, spec.interval)
            self.last_bridge_output = x

        for i, blk in enumerate(self.conv_blocks, start=1):
            if blk.spiking and activity is not None:
                activity[blk.name] = {
                    "input_spikes": float(x.data.sum()) / batch,
                    "fanout": blk.fanout(),
                }
            x = blk.forward(x, relaxed=relaxed)
            if self.bridge_after == i:
                self.last_bridge_input = x
                x = accumulate(x, spec.interval)
                self.last_bridge_output = x

        if spec.is_snn:
            B, T = x.shape[0], x.shape[1]
            x = ops.reshape(x, (B, T, int(np.prod(x.shape[2:]))))
            for blk in self.dense_blocks:
                if activity is not None:
                    activity[blk.name] = {
                        "input_spikes": float(x.data.sum()) / batch,
                        "fanout": blk.fanout(),
                    }
                x = blk.forward(x, relaxed=relaxed)
            logits = ops.sum_(x, axis=1)  # spike-count readout over time
        else:
            x = ops.flatten(x)
            for blk in self.dense_blocks:
                x = blk.forward(x, relaxed=relaxed)
            logits = x

        if activity is not None:
            for name, rec in activity.items():
                rec["events"] = rec["input_spikes"] * rec["fanout"]
            self.last_activity = activity
        return logits


def build(spec: HybridModelSpec, seed: int = 0) -> BuiltModel:
    """Realize a spec: allocate seeded weights and validate the shape chain."""
    rng = np.random.default_rng(seed)
    C, H, W, T = spec.input_shape
    k = spec.spiking_convs
    ksz = spec.kernel_size
    pad = ksz // 2
    expansion = spec.expansion

    conv_blocks = []
    bridge_after = None if spec.is_snn else k
    bridge_input_shape = None
    in_ch, h, w = C, H, W
    if bridge_after == 0:
        bridge_input_shape = (in_ch, h, w)
        in_ch *= expansion

    for i, out_ch in enumerate(spec.channel_schedule, start=1):
        name = f"conv{i}"
        if ksz > h + 2 * pad or ksz > w + 2 * pad:
            raise BuildError(f"kernel {ksz} exceeds padded input {h + 2 * pad}x{w + 2 * pad}",
                             layer=name)
        h_out = h + 2 * pad - ksz + 1
        w_out = w + 2 * pad - ksz + 1
        pool = i in spec.pool_after
        if pool and (h_out % 2 or w_out % 2):
            raise BuildError(f"pooling needs even dims, got {h_out}x{w_out}", layer=name)
        spiking = i <= k
        fan_in = in_ch * ksz * ksz
        gain = spec.spiking_init_gain if spiking else 1.0
        wt = Tensor(rng.normal(0.0, gain / np.sqrt(fan_in), size=(out_ch, in_ch, ksz, ksz)),
                    requires_grad=True)
        h, w = (h_out // 2, w_out // 2) if pool else (h_out, w_out)
        if spiking:
            conv_blocks.append(_SpikingConvBlock(name, wt, spec.lif, pad, pool, spec.pool_mode,
                                                 (out_ch, h, w)))
        else:
            conv_blocks.append(_AnnConvBlock(name, wt, pad, pool, (out_ch, h, w)))
        in_ch = out_ch
        if bridge_after == i:
            bridge_input_shape = (in_ch, h, w)
            in_ch *= expansion

    flat = in_ch * h * w
    dense_blocks = []
    widths = tuple(spec.dense_widths) + (spec.classes,)
    prev = flat
    for j, width in enumerate(widths, start=1):
        name = f"dense{j}"
        if prev < 1:
            raise BuildError("dense input width collapsed to zero", layer=name)
        if spec.is_snn:
            wt = Tensor(rng.normal(0.0, spec.spiking_init_gain / np.sqrt(prev),
                                   size=(prev, width)), requires_grad=True)
            dense_blocks.append(_SpikingDenseBlock(name, wt, spec.lif))
        else:
            wt = Tensor(rng.normal(0.0, 1.0 / np.sqrt(prev), size=(prev, width)),
                        requires_grad=True)
            b = Tensor(np.zeros(width), requires_grad=True)
            last = j == len(widths)
            dense_blocks.append(_AnnDenseBlock(name, wt, b, activation=not last))
        prev = width

    return BuiltModel(spec, conv_blocks, dense_blocks, bridge_after, bridge_input_shape)


def count_parameters(model: BuiltModel) -> int:
    return model.parameter_count


def neuron_census(model: BuiltModel) -> dict:
    return model.neuron_census()


# --- flat weight container ("SBW1"): little-endian float64 payload + JSON manifest

_MAGIC = b"SBW1"


def save_weights(path, arrays: dict, meta: dict | None = None) -> None:
    entries = []
    offset = 0
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"meta": meta or {}, "entries": entries}, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def load_weights(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {_MAGIC!r}", offset=0)
    if len(raw) < 8:
        raise FormatError("truncated header", offset=len(raw))
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise FormatError("truncated header JSON", offset=len(raw))
    header = json.loads(raw[8 : 8 + hlen].decode())
    payload = raw[8 + hlen :]
    arrays = {}
    for e in header["entries"]:
        shape = tuple(e["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        start = e["offset"]
        if start + nbytes > len(payload):
            raise FormatError(f"payload truncated for entry {e['name']!r}",
                              offset=8 + hlen + start)
        arrays[e["name"]] = np.frombuffer(
            payload[start : start + nbytes], dtype="<f8"
        ).reshape(shape).copy()
    return arrays, header.get("meta", {})

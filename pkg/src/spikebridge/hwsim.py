"""Behavioral model of the hardware accumulator circuit.

A bank of ``N`` saturating k-bit counters shares a clock; each tick adds the
incoming spike bit to its counter and advances an interval register. When the
register reaches the accumulate interval the counters are copied to an output
latch atomically and cleared. ``sync`` clears counters and register without
touching the latch. Counters saturate rather than wrap: with the sizing rule
``k = ceil(log2(I+1))`` saturation is unreachable, so any saturation event in
a run is loud evidence of mis-sizing.

Layers wider than the bank are cut into 128-neuron partitions that are
time-multiplexed in round-robin sub-slots (partition p occupies sub-slot p of
every timestep). Each partition's counter state is its own logical context;
a physical realization would bank-switch the same silicon. The assembled
per-interval counts must match the software accumulator bit-exactly.

Stimulus/latch trace files (one text line per tick) are the cross-checking
interface for external RTL simulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .accumulator import AccumulatorConfig, accumulate_forward
from .errors import ConfigurationError, ContractError


def counter_bits_for(interval: int) -> int:
    """Counter width that represents every count 0..I: ceil(log2(I+1))."""
    if interval < 1:
        raise ConfigurationError(f"interval must be >= 1, got {interval}")
    return int(interval).bit_length()


class CounterBank:
    """N k-bit saturating counters, an interval register, and an output latch."""

    def __init__(self, interval: int, n: int = 128, bits: int | None = None):
        if interval < 1:
            raise ConfigurationError(f"interval must be >= 1, got {interval}")
        if n < 0:
            raise ConfigurationError(f"counter count must be >= 0, got {n}")
        self.n = n
        self.interval = interval
        self.bits = counter_bits_for(interval) if bits is None else bits
        if self.bits < 1:
            raise ConfigurationError(f"counter width must be >= 1 bit, got {self.bits}")
        self.max_count = (1 << self.bits) - 1
        # interval register only counts 0..I-1; sized independently of the data counters
        self.interval_reg_bits = max(0, interval - 1).bit_length()
        self.counters = np.zeros(n, dtype=np.int64)
        self.interval_reg = 0
        self.output_latch = np.zeros(n, dtype=np.int64)
        self.saturation_events = 0
        self.latch_events = 0

    def clock_tick(self, spikes) -> bool:
        """Advance one clock with an N-wide spike vector; True if the latch updated."""
        spikes = np.asarray(spikes)
        if spikes.shape != (self.n,):
            raise ContractError(f"spike vector shape {spikes.shape} != ({self.n},)")
        inc = self.counters + (spikes != 0)
        overflow = inc > self.max_count
        self.saturation_events += int(overflow.sum())
        np.minimum(inc, self.max_count, out=inc)
        self.counters = inc
        self.interval_reg += 1
        if self.interval_reg >= self.interval:
            # latch-then-reset is atomic within this tick; latch holds until next event
            self.output_latch = self.counters.copy()
            self.counters = np.zeros(self.n, dtype=np.int64)
            self.interval_reg = 0
            self.latch_events += 1
            return True
        return False

    def sync(self) -> None:
        """Zero counters and interval register; the output latch is preserved."""
        self.counters = np.zeros(self.n, dtype=np.int64)
        self.interval_reg = 0


@dataclass(frozen=True)
class PartitionPlan:
    """Partitioning of an M-neuron layer into 128-lane time-multiplexed slots."""

    neurons: int
    timesteps: int
    lanes: int = 128

    def __post_init__(self):
        if self.neurons < 0 or self.timesteps < 0:
            raise ConfigurationError("neurons and timesteps must be non-negative")
        if self.lanes < 1:
            raise ConfigurationError("lanes must be >= 1")

    @property
    def partitions(self) -> int:
        return -(-self.neurons // self.lanes)

    @property
    def padded_lanes(self) -> int:
        return self.partitions * self.lanes - self.neurons

    @property
    def cycles(self) -> int:
        # one sub-slot per partition per timestep
        return self.partitions * self.timesteps


@dataclass
class RunResult:
    counts: np.ndarray  # (T // I, M) per-interval per-neuron counts
    saturation_events: int
    ticks: int


def run_layer(spikes, plan: PartitionPlan, interval: int, bits: int | None = None,
              stimulus_path=None, latch_path=None) -> RunResult:
    """Time-multiplex an (M, T) binary spike raster through one counter bank.

    Assembles latch outputs into per-interval counts that must equal
    ``accumulate_forward`` on the same data (padding lanes dropped). Trace
    files record tick index + 128-bit hex spike vector (stimulus) and tick
    index + per-counter hex values (latch events).
    """
    spikes = np.asarray(spikes, dtype=np.int64)
    M, T = spikes.shape if spikes.ndim == 2 else (0, 0)
    if spikes.ndim != 2:
        raise ContractError(f"expected (M, T) spike raster, got shape {spikes.shape}")
    if M != plan.neurons or T != plan.timesteps:
        raise ConfigurationError(
            f"raster shape {spikes.shape} does not match plan ({plan.neurons} neurons, "
            f"{plan.timesteps} timesteps)"
        )
    if T % interval:
        raise ConfigurationError(f"interval {interval} does not divide timesteps {T}")
    P = plan.partitions
    lanes = plan.lanes
    groups = T // interval if T else 0
    counts = np.zeros((groups, M), dtype=np.int64)

    banks = [CounterBank(interval, n=lanes, bits=bits) for _ in range(P)]
    stim_lines = [] if stimulus_path else None
    latch_lines = [] if latch_path else None
    tick = 0
    saturation = 0
    for t in range(T):
        for p in range(P):
            lo = p * lanes
            lane_spikes = np.zeros(lanes, dtype=np.int64)
            width = min(lanes, M - lo)
            lane_spikes[:width] = spikes[lo : lo + width, t]
            latched = banks[p].clock_tick(lane_spikes)
            if stim_lines is not None:
                stim_lines.append(f"{tick} {_hex_bits(lane_spikes)}")
            if latched:
                g = t // interval
                counts[g, lo : lo + width] = banks[p].output_latch[:width]
                if latch_lines is not None:
                    latch_lines.append(
                        f"{tick} " + " ".join(format(int(v), "x") for v in banks[p].output_latch)
                    )
            tick += 1
    saturation = sum(b.saturation_events for b in banks)
    if stimulus_path is not None:
        with open(stimulus_path, "w") as f:
            f.write("\n".join(stim_lines) + ("\n" if stim_lines else ""))
    if latch_path is not None:
        with open(latch_path, "w") as f:
            f.write("\n".join(latch_lines) + ("\n" if latch_lines else ""))
    return RunResult(counts=counts, saturation_events=saturation, ticks=tick)


def _hex_bits(bits_vec) -> str:
    """Pack a lane vector (lane 0 = LSB) into fixed-width hex."""
    value = 0
    for i, b in enumerate(bits_vec):
        if b:
            value |= 1 << i
    width = (len(bits_vec) + 3) // 4
    return format(value, f"0{width}x")


def parse_stimulus(path, lanes: int = 128):
    """Read a stimulus trace back into (ticks, lane-bit matrix)."""
    ticks = []
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            tick_s, hex_s = line.split()
            value = int(hex_s, 16)
            ticks.append(int(tick_s))
            rows.append([(value >> i) & 1 for i in range(lanes)])
    return np.asarray(ticks, dtype=np.int64), np.asarray(rows, dtype=np.int64)


def verify_against_software(spikes, plan: PartitionPlan, interval: int,
                            bits: int | None = None, stimulus_path=None,
                            latch_path=None):
    """Run the bank and compare bit-exactly with the software accumulator.

    Returns (ok, RunResult, expected counts).
    """
    result = run_layer(spikes, plan, interval, bits=bits, stimulus_path=stimulus_path,
                       latch_path=latch_path)
    M, T = np.asarray(spikes).shape
    if M == 0 or T == 0:
        return True, result, np.zeros_like(result.counts)
    cfg = AccumulatorConfig(interval=interval, timesteps=T)
    a = accumulate_forward(np.asarray(spikes, dtype=np.float64).reshape(M, 1, 1, T), cfg)
    expected = a.reshape(T // interval, M)
    ok = bool(np.array_equal(result.counts, expected))
    return ok, result, expected


@dataclass(frozen=True)
class HwCost:
    latency_s: float
    power_w: float
    energy_j: float
    cycles: int
    latch_events: int


def hw_cost(plan: PartitionPlan, interval: int, clock_hz: float,
            tick_energy_j: float, latch_energy_j: float) -> HwCost:
    """Analytical cost of streaming one layer through the bank.

    Cycles scale with partitions x timesteps; each latch event adds a fixed
    cost, so smaller intervals (more latches) never cost less energy.
    """
    if clock_hz <= 0:
        raise ConfigurationError("clock_hz must be positive")
    cycles = plan.cycles
    latches = plan.partitions * (plan.timesteps // interval) if interval else 0
    latency = cycles / clock_hz
    energy = cycles * tick_energy_j + latches * latch_energy_j
    power = energy / latency if latency > 0 else 0.0
    return HwCost(latency_s=latency, power_w=power, energy_j=energy, cycles=cycles,
                  latch_events=latches)

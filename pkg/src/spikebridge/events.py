"""Event-stream ingestion, temporal binning, and synthetic gesture generation.

Native event container is the EVS1 file: little-endian, magic ``EVS1``,
``u16 width``, ``u16 height``, ``u64 event count``, then packed 9-byte
records ``(u32 t_us, u16 x, u16 y, u8 polarity)`` sorted by timestamp.

Binning compiles every event inside a 10 ms frame into a binary (2, H, W)
image (channel = polarity, saturating OR) and groups ``T`` consecutive frames
into one sample.

The synthetic gesture classes are moving-edge patterns that differ only in
temporal structure: class ``2m+1`` is the exact frame-reversed twin of class
``2m``'s samples (same events, mirrored timestamps), so summing a twin pair
over the full duration yields identical images and only temporal order can
separate them. Class 2 sweeps the orthogonal axis.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError

EVENT_DTYPE = np.dtype([("t", "<u4"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])

_MAGIC = b"EVS1"
_HEADER = struct.Struct("<4sHHQ")


def write_events(path, events: np.ndarray, width: int, height: int) -> None:
    events = np.asarray(events, dtype=EVENT_DTYPE)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, width, height, len(events)))
        f.write(events.tobytes())


def load_events(path):
    """Read an EVS1 file; returns (events, width, height).

    Raises :class:`FormatError` with the byte offset of the defect on bad
    magic, truncation, or out-of-order timestamps.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise FormatError("file shorter than EVS1 header", offset=len(raw))
    magic, width, height, count = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_MAGIC!r}", offset=0)
    payload = raw[_HEADER.size :]
    expected = count * EVENT_DTYPE.itemsize
    if len(payload) != expected:
        raise FormatError(
            f"payload holds {len(payload)} bytes but header promises {expected}",
            offset=_HEADER.size + min(len(payload), expected),
        )
    events = np.frombuffer(payload, dtype=EVENT_DTYPE).copy()
    if len(events) > 1:
        t = events["t"].astype(np.int64)
        inversions = np.nonzero(np.diff(t) < 0)[0]
        if inversions.size:
            i = int(inversions[0]) + 1
            raise FormatError(
                f"events not sorted by timestamp at record {i}",
                offset=_HEADER.size + i * EVENT_DTYPE.itemsize,
            )
    return events, width, height


def bin_events(events, width: int, height: int, bin_ms: int = 10,
               frames_per_sample: int = 50):
    """Bin events into binary frames and cut complete sample windows.

    Returns ``(samples, rejected)`` where samples is a uint8 array of shape
    (N, 2, height, width, frames_per_sample) and ``rejected`` counts events
    outside the sensor bounds. Trailing frames that do not fill a window are
    dropped.
    """
    events = np.asarray(events, dtype=EVENT_DTYPE)
    T = frames_per_sample
    if len(events) == 0:
        return np.zeros((0, 2, height, width, T), dtype=np.uint8), 0
    in_bounds = (events["x"] < width) & (events["y"] < height)
    rejected = int((~in_bounds).sum())
    events = events[in_bounds]
    bin_us = bin_ms * 1000
    frame = events["t"].astype(np.int64) // bin_us
    n_frames = int(frame.max()) + 1 if len(frame) else 0
    n_windows = n_frames // T
    samples = np.zeros((n_windows, 2, height, width, T), dtype=np.uint8)
    if n_windows:
        keep = frame < n_windows * T
        ev = events[keep]
        fr = frame[keep]
        samples[fr // T, ev["p"], ev["y"], ev["x"], fr % T] = 1
    return samples, rejected


@dataclass
class SynthDataset:
    """In-memory labeled sample set; ``groups`` ties twin pairs together."""

    frames: np.ndarray  # (N, 2, H, W, T) uint8
    labels: np.ndarray  # (N,) int64
    groups: np.ndarray  # (N,) int64; samples sharing a group stay in one split


def _sweep_events(rng, H, W, T, bin_us, axis, speed):
    """ON/OFF edge events of a bar sweeping one full pass along ``axis``."""
    extent = W if axis == 0 else H
    span_extent = H if axis == 0 else W
    phase = rng.uniform(0.0, extent)
    rate = speed * extent / T
    span_len = int(rng.integers(span_extent // 2, span_extent + 1))
    span_start = int(rng.integers(0, span_extent - span_len + 1))
    span = np.arange(span_start, span_start + span_len)

    frames = np.arange(T)
    lead = np.floor(phase + rate * frames).astype(np.int64) % extent
    trail = np.floor(phase + rate * frames - 2.0).astype(np.int64) % extent

    f_grid = np.repeat(frames, span_len)
    span_grid = np.tile(span, T)
    lead_grid = np.repeat(lead, span_len)
    trail_grid = np.repeat(trail, span_len)

    n = f_grid.size
    ev = np.empty(2 * n, dtype=EVENT_DTYPE)
    offs = rng.integers(0, bin_us, size=2 * n)
    ev["t"] = np.concatenate([f_grid, f_grid]) * bin_us + offs
    if axis == 0:
        ev["x"][:n], ev["y"][:n] = lead_grid, span_grid
        ev["x"][n:], ev["y"][n:] = trail_grid, span_grid
    else:
        ev["x"][:n], ev["y"][:n] = span_grid, lead_grid
        ev["x"][n:], ev["y"][n:] = span_grid, trail_grid
    ev["p"][:n] = 1  # leading edge turns pixels on
    ev["p"][n:] = 0
    return ev


def _noise_events(rng, H, W, T, bin_us, rate):
    n = rng.poisson(rate * H * W * T)
    ev = np.empty(n, dtype=EVENT_DTYPE)
    ev["t"] = rng.integers(0, T * bin_us, size=n)
    ev["x"] = rng.integers(0, W, size=n)
    ev["y"] = rng.integers(0, H, size=n)
    ev["p"] = rng.integers(0, 2, size=n)
    return ev


def _mirror_events(events, T, bin_us):
    """Frame-level time reversal: frame f -> T-1-f, intra-frame offset kept."""
    ev = events.copy()
    t = ev["t"].astype(np.int64)
    frame = t // bin_us
    ev["t"] = (T - 1 - frame) * bin_us + (t % bin_us)
    return ev


def synth_sample_events(class_idx: int, sample_idx: int, seed: int,
                        shape=(2, 32, 32, 20), bin_ms: int = 10,
                        noise_rate: float = 0.005):
    """Deterministic event stream for one synthetic sample.

    Odd classes are the frame-mirrored twins of the preceding even class with
    the same sample index (identical events, reversed temporal order).
    """
    if class_idx < 0:
        raise ConfigurationError("class_idx must be non-negative")
    _, H, W, T = shape
    bin_us = bin_ms * 1000
    base_class = class_idx - (class_idx % 2)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(base_class, sample_idx)))
    variant = base_class // 2
    axis = variant % 2  # alternate x and y sweeps
    speed = 1 + variant // 2
    ev = np.concatenate([
        _sweep_events(rng, H, W, T, bin_us, axis, speed),
        _noise_events(rng, H, W, T, bin_us, noise_rate),
    ])
    if class_idx % 2 == 1:
        ev = _mirror_events(ev, T, bin_us)
    ev = ev[np.argsort(ev["t"], kind="stable")]
    return ev, W, H


def synth_gestures(class_count: int, samples_per_class: int, shape=(2, 32, 32, 20),
                   seed: int = 0, bin_ms: int = 10) -> SynthDataset:
    """Generate a labeled desk-scale gesture set; deterministic for a seed."""
    if class_count < 2:
        raise ConfigurationError("class_count must be >= 2")
    _, H, W, T = shape
    n = class_count * samples_per_class
    frames = np.zeros((n, 2, H, W, T), dtype=np.uint8)
    labels = np.empty(n, dtype=np.int64)
    groups = np.empty(n, dtype=np.int64)
    i = 0
    for cls in range(class_count):
        for idx in range(samples_per_class):
            ev, width, height = synth_sample_events(cls, idx, seed, shape, bin_ms)
            windows, _ = bin_events(ev, width, height, bin_ms, T)
            if len(windows):
                frames[i] = windows[0]
            labels[i] = cls
            # twin classes (2m, 2m+1) share a group so splits keep pairs together
            groups[i] = (cls // 2) * samples_per_class + idx
            i += 1
    return SynthDataset(frames=frames, labels=labels, groups=groups)


def write_dataset(out_dir, class_count: int, samples_per_class: int,
                  shape=(2, 32, 32, 20), seed: int = 0, bin_ms: int = 10) -> Path:
    """Write a synthetic dataset as EVS1 files plus manifest; returns manifest path."""
    out = Path(out_dir)
    (out / "events").mkdir(parents=True, exist_ok=True)
    _, H, W, T = shape
    rows = []
    for cls in range(class_count):
        for idx in range(samples_per_class):
            ev, width, height = synth_sample_events(cls, idx, seed, shape, bin_ms)
            rel = f"events/c{cls:02d}_s{idx:05d}.evs1"
            write_events(out / rel, ev, width, height)
            rows.append((rel, 0, cls))
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["file", "window", "label"])
        writer.writerows(rows)
    meta = {
        "shape": list(shape),
        "bin_ms": bin_ms,
        "classes": class_count,
        "samples_per_class": samples_per_class,
        "seed": seed,
    }
    (out / "dataset.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return manifest


def load_dataset(data_dir) -> SynthDataset:
    """Load a dataset directory written by :func:`write_dataset`."""
    root = Path(data_dir)
    meta = json.loads((root / "dataset.json").read_text())
    shape = tuple(meta["shape"])
    _, H, W, T = shape
    bin_ms = meta["bin_ms"]
    spc = meta["samples_per_class"]
    rows = []
    with open(root / "manifest.csv", newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            rows.append((row["file"], int(row["window"]), int(row["label"])))
    frames = np.zeros((len(rows), 2, H, W, T), dtype=np.uint8)
    labels = np.empty(len(rows), dtype=np.int64)
    groups = np.empty(len(rows), dtype=np.int64)
    counters = {}
    for i, (rel, window, label) in enumerate(rows):
        ev, width, height = load_events(root / rel)
        windows, _ = bin_events(ev, width, height, bin_ms, T)
        if window < len(windows):
            frames[i] = windows[window]
        labels[i] = label
        idx = counters.get(label, 0)
        counters[label] = idx + 1
        groups[i] = (label // 2) * spc + idx
    return SynthDataset(frames=frames, labels=labels, groups=groups)

"""Unified training over the hybrid graph, plus evaluation metrics.

One optimizer step per batch; gradients cross the accumulator through its
recorded backward rule, so the spiking backbone, bridge, and dense head train
as a single network. Runs are fully determined by (spec, config, data):
weight init, batch order, and the optimizer are all driven by one seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigurationError, NumericError
from .models import BuiltModel, load_weights, save_weights
from .tensor import Tensor, no_grad


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 5.0
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate < 0:
            raise ConfigurationError("learning rate must be non-negative")
        if self.optimizer != "adam":
            raise ConfigurationError(f"unsupported optimizer {self.optimizer!r}")


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray  # (K, K) rows true, cols predicted
    losses: list = field(default_factory=list)

    @classmethod
    def from_confusion(cls, confusion, losses=None):
        confusion = np.asarray(confusion, dtype=np.int64)
        total = confusion.sum()
        acc = float(np.trace(confusion) / total) if total else 0.0
        return cls(accuracy=acc, confusion=confusion, losses=list(losses or []))

    def pair_accuracy(self, class_a: int = 0, class_b: int = 1) -> float:
        """Accuracy restricted to samples of two classes (the reversal pair)."""
        rows = self.confusion[[class_a, class_b], :]
        total = rows.sum()
        correct = self.confusion[class_a, class_a] + self.confusion[class_b, class_b]
        return float(correct / total) if total else 0.0


class Adam:
    """Adam with global gradient-norm clipping; state serializes with checkpoints."""

    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.params = params
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.step_count = 0

    def step(self):
        cfg = self.cfg
        grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data))
                 for k, t in self.params.items()}
        if cfg.grad_clip > 0:
            norm_sq = 0.0
            for g in grads.values():
                norm_sq += float((g * g).sum())
            norm = norm_sq ** 0.5
            if norm > cfg.grad_clip:
                scale = cfg.grad_clip / norm
                for g in grads.values():
                    g *= scale
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - cfg.beta1**t
        bc2 = 1.0 - cfg.beta2**t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * (g * g)
            mhat = self.m[k] / bc1
            vhat = self.v[k] / bc2
            p.data = p.data - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)

    def state_arrays(self) -> dict:
        arrays = {}
        for k in self.params:
            arrays[f"adam.m.{k}"] = self.m[k]
            arrays[f"adam.v.{k}"] = self.v[k]
        return arrays

    def load_state_arrays(self, arrays: dict, step_count: int):
        for k in self.params:
            self.m[k] = arrays[f"adam.m.{k}"].copy()
            self.v[k] = arrays[f"adam.v.{k}"].copy()
        self.step_count = step_count


def to_time_major(frames: np.ndarray) -> np.ndarray:
    """(B, C, H, W, T) uint8/float -> float64 (B, T, C, H, W)."""
    return np.ascontiguousarray(np.transpose(frames, (0, 4, 1, 2, 3)), dtype=np.float64)


def split_stratified(labels, test_fraction: float = 0.2, seed: int = 0, groups=None):
    """Seeded stratified split; samples sharing a group id never straddle folds.

    Twin pairs (a sample and its time-reversed sibling) carry one group id, so
    holding groups together keeps the test set honest about temporal structure.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    test_idx = []
    if groups is None:
        for cls in np.unique(labels):
            idx = np.nonzero(labels == cls)[0]
            idx = idx[rng.permutation(len(idx))]
            n_test = max(1, int(round(len(idx) * test_fraction))) if len(idx) else 0
            test_idx.extend(idx[:n_test])
    else:
        groups = np.asarray(groups)
        seen = {}
        for i, g in enumerate(groups):
            seen.setdefault(g, []).append(i)
        group_ids = sorted(seen)
        rng.shuffle(group_ids)
        target = int(round(len(labels) * test_fraction))
        picked = 0
        for g in group_ids:
            if picked >= target:
                break
            test_idx.extend(seen[g])
            picked += len(seen[g])
    test_mask = np.zeros(len(labels), dtype=bool)
    test_mask[test_idx] = True
    return np.nonzero(~test_mask)[0], np.nonzero(test_mask)[0]


def train(model: BuiltModel, frames, labels, cfg: TrainConfig, eval_frames=None,
          eval_labels=None, metrics_path=None, checkpoint_path=None,
          optimizer: Adam | None = None):
    """Train in place; returns (EvalReport, epoch_records).

    On divergence (non-finite loss) the last finite checkpoint is written to
    ``checkpoint_path`` (when given) before :class:`NumericError` is raised.
    """
    labels = np.asarray(labels, dtype=np.int64)
    opt = optimizer or Adam(model.params, cfg)
    rng = np.random.default_rng(cfg.seed)
    records = []
    n = len(labels)
    last_good = None

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        hits = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x = Tensor(to_time_major(frames[idx]))
            logits = model.forward(x)
            loss = ops.softmax_cross_entropy(logits, labels[idx])
            value = loss.item()
            if not np.isfinite(value):
                if checkpoint_path and last_good is not None:
                    save_checkpoint(checkpoint_path, model, opt, meta=last_good["meta"],
                                    arrays=last_good["arrays"])
                raise NumericError(f"training diverged: loss={value} at epoch {epoch}")
            pred = logits.data.argmax(axis=1)
            for p in model.params.values():
                p.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += value * len(idx)
            hits += int((pred == labels[idx]).sum())
        record = {
            "epoch": epoch + 1,
            "loss": epoch_loss / n if n else 0.0,
            "accuracy": hits / n if n else 0.0,
        }
        records.append(record)
        if metrics_path:
            with open(metrics_path, "a") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")
        last_good = {
            "meta": {"epoch": epoch + 1, "step": opt.step_count},
            "arrays": _checkpoint_arrays(model, opt),
        }

    if eval_frames is not None:
        report = evaluate(model, eval_frames, eval_labels)
    else:
        report = evaluate(model, frames, labels)
    report.losses = [r["loss"] for r in records]
    if checkpoint_path:
        save_checkpoint(checkpoint_path, model, opt, meta={"epochs": cfg.epochs,
                                                           "step": opt.step_count})
    return report, records


def evaluate(model: BuiltModel, frames, labels, batch_size: int = 16) -> EvalReport:
    """Argmax-of-logits classification; returns accuracy plus confusion matrix."""
    labels = np.asarray(labels, dtype=np.int64)
    k = model.spec.classes
    confusion = np.zeros((k, k), dtype=np.int64)
    with no_grad():
        for start in range(0, len(labels), batch_size):
            batch = frames[start : start + batch_size]
            got = labels[start : start + batch_size]
            logits = model.forward(Tensor(to_time_major(batch)))
            pred = logits.data.argmax(axis=1)
            for t, p in zip(got, pred):
                confusion[t, p] += 1
    return EvalReport.from_confusion(confusion)


def _checkpoint_arrays(model: BuiltModel, opt: Adam) -> dict:
    arrays = model.state_dict()
    arrays.update({k: v.copy() for k, v in opt.state_arrays().items()})
    return arrays


def save_checkpoint(path, model: BuiltModel, opt: Adam | None = None, meta=None,
                    arrays=None) -> None:
    if arrays is None:
        arrays = model.state_dict()
        if opt is not None:
            arrays.update(opt.state_arrays())
    meta = dict(meta or {})
    meta.setdefault("spec", json.loads(model.spec.to_json()))
    if opt is not None:
        meta.setdefault("step", opt.step_count)
    save_weights(path, arrays, meta)


def load_checkpoint(path):
    """Returns (param arrays, adam arrays, meta)."""
    arrays, meta = load_weights(path)
    params = {k: v for k, v in arrays.items() if not k.startswith("adam.")}
    adam = {k: v for k, v in arrays.items() if k.startswith("adam.")}
    return params, adam, meta

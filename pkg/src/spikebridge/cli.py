"""Command-line entry point.

Verbs: ``gen-data``, ``train``, ``eval``, ``simulate-hw``, ``profile``. Every
run writes a ``manifest.json`` capturing the fully resolved configuration,
seed, kernel backend, and sha256 of each artifact; ``train --from-manifest``
reruns a training manifest and reproduces its checkpoint byte-identically.

Exit codes: 0 success, 2 usage/configuration, 3 I/O or file format,
4 numeric failure (divergence), 5 verification failure.

Environment: ``SPIKEBRIDGE_NO_NUMBA=1`` selects the pure-numpy kernels;
``SPIKEBRIDGE_THREADS=N`` caps kernel threads.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .costmodel import (
    REFERENCE_LOIHI_CORES,
    emit_report,
    estimate,
    load_profiles,
    parse_report,
)
from .errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    BuildError,
    FormatError,
    NumericError,
    ResourceError,
    SpikeBridgeError,
    VerificationError,
)
from .events import load_dataset, synth_gestures, write_dataset
from .hwsim import PartitionPlan, counter_bits_for, verify_against_software
from .models import MODEL_NAMES, HybridModelSpec, build, load_weights
from .training import (
    TrainConfig,
    evaluate,
    load_checkpoint,
    split_stratified,
    train,
)

USAGE_ERRORS = (ConfigurationError, ContractError, DimensionError, BuildError)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, artifacts: dict) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "seed": config.get("seed"),
        "backend": kernels.current_backend(),
        "version": __version__,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "artifacts": {
            name: {"path": str(p), "sha256": _sha256(Path(p))} for name, p in artifacts.items()
        },
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def _parse_shape(text: str) -> tuple:
    parts = tuple(int(v) for v in text.split(","))
    if len(parts) != 4:
        raise ConfigurationError(f"shape must be C,H,W,T, got {text!r}")
    return parts


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    shape = _parse_shape(args.shape)
    write_dataset(out, args.classes, args.count, shape=shape, seed=args.seed,
                  bin_ms=args.bin_ms)
    config = {
        "classes": args.classes,
        "count": args.count,
        "shape": list(shape),
        "seed": args.seed,
        "bin_ms": args.bin_ms,
        "out": str(out),
    }
    _write_manifest(out, "gen-data", config,
                    {"manifest_csv": out / "manifest.csv", "dataset_json": out / "dataset.json"})
    print(f"wrote {args.classes * args.count} samples to {out}")
    return 0


def _resolved_train_config(args) -> dict:
    if args.from_manifest:
        stored = json.loads(Path(args.from_manifest).read_text())
        if stored.get("command") != "train":
            raise ConfigurationError(f"{args.from_manifest} is not a train manifest")
        config = dict(stored["config"])
        config["backend"] = stored.get("backend", kernels.current_backend())
        return config
    return {
        "model": args.model,
        "interval": args.interval,
        "data": str(Path(args.data)),
        "epochs": args.epochs,
        "seed": args.seed,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
        "test_fraction": args.test_fraction,
        "spec_file": str(args.spec) if args.spec else None,
        "backend": kernels.current_backend(),
    }


def _build_from_config(config: dict):
    data_dir = Path(config["data"])
    meta = json.loads((data_dir / "dataset.json").read_text())
    shape = tuple(meta["shape"])
    if config.get("spec_file"):
        spec = HybridModelSpec.from_json(Path(config["spec_file"]).read_text())
    else:
        spec = HybridModelSpec(
            model=config["model"],
            interval=config["interval"],
            input_shape=shape,
            classes=meta["classes"],
        )
    if spec.is_snn and config.get("interval") not in (None, spec.interval):
        print("warning: SNN baseline has no accumulator; --interval is ignored",
              file=sys.stderr)
    return spec, meta


def cmd_train(args) -> int:
    config = _resolved_train_config(args)
    if config.get("backend") and config["backend"] != kernels.current_backend():
        kernels.set_backend(config["backend"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec, _ = _build_from_config(config)
    dataset = load_dataset(config["data"])
    train_idx, test_idx = split_stratified(dataset.labels, config["test_fraction"],
                                           seed=config["seed"], groups=dataset.groups)
    model = build(spec, seed=config["seed"])
    cfg = TrainConfig(epochs=config["epochs"], batch_size=config["batch_size"],
                      learning_rate=config["learning_rate"], seed=config["seed"])
    metrics_path = out / "metrics.jsonl"
    metrics_path.write_text("")
    checkpoint_path = out / "checkpoint.sbw"
    report, _ = train(model, dataset.frames[train_idx], dataset.labels[train_idx], cfg,
                      eval_frames=dataset.frames[test_idx],
                      eval_labels=dataset.labels[test_idx],
                      metrics_path=metrics_path, checkpoint_path=checkpoint_path)
    (out / "eval.json").write_text(json.dumps({
        "accuracy": report.accuracy,
        "confusion": report.confusion.tolist(),
    }, indent=2, sort_keys=True))
    _write_manifest(out, "train", config, {
        "checkpoint": checkpoint_path,
        "metrics": metrics_path,
        "eval": out / "eval.json",
    })
    print(f"test accuracy {report.accuracy:.4f}; checkpoint at {checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params, _, meta = load_checkpoint(args.checkpoint)
    spec = HybridModelSpec.from_json(json.dumps(meta["spec"]))
    model = build(spec, seed=0)
    model.load_state(params)
    dataset = load_dataset(args.data)
    report = evaluate(model, dataset.frames, dataset.labels)
    (out / "eval.json").write_text(json.dumps({
        "accuracy": report.accuracy,
        "confusion": report.confusion.tolist(),
    }, indent=2, sort_keys=True))
    _write_manifest(out, "eval", {"checkpoint": str(args.checkpoint),
                                  "data": str(args.data), "seed": 0},
                    {"eval": out / "eval.json"})
    print(f"accuracy {report.accuracy:.4f} over {int(report.confusion.sum())} samples")
    return 0


def cmd_simulate_hw(args) -> int:
    out = Path(args.trace_out)
    out.mkdir(parents=True, exist_ok=True)
    interval = args.interval
    if args.checkpoint:
        params, _, meta = load_checkpoint(args.checkpoint)
        spec = HybridModelSpec.from_json(json.dumps(meta["spec"]))
        if spec.is_snn:
            raise ConfigurationError("the SNN baseline has no accumulator to simulate")
        model = build(spec, seed=0)
        model.load_state(params)
        probe = synth_gestures(spec.classes, 1, shape=spec.input_shape, seed=args.seed)
        from .tensor import Tensor, no_grad
        from .training import to_time_major

        with no_grad():
            model.forward(Tensor(to_time_major(probe.frames[:1])))
        bridge_in = model.last_bridge_input
        m = int(np.prod(bridge_in.shape[2:]))
        t = bridge_in.shape[1]
        spikes = bridge_in.data[0].reshape(t, m).T.astype(np.int64)
        interval = spec.interval
    else:
        rng = np.random.default_rng(args.seed)
        m, t = args.neurons, args.timesteps
        spikes = (rng.random((m, t)) < args.rate).astype(np.int64)
    if t % interval:
        raise ConfigurationError(f"interval {interval} does not divide timesteps {t}")
    plan = PartitionPlan(neurons=m, timesteps=t)
    bits = args.counter_bits if args.counter_bits else None
    ok, result, _ = verify_against_software(
        spikes, plan, interval, bits=bits,
        stimulus_path=out / "stimulus.txt", latch_path=out / "latch.txt",
    )
    _write_manifest(out, "simulate-hw", {
        "neurons": m, "timesteps": t, "interval": interval,
        "counter_bits": bits or counter_bits_for(interval), "seed": args.seed,
        "checkpoint": str(args.checkpoint) if args.checkpoint else None,
    }, {"stimulus": out / "stimulus.txt", "latch": out / "latch.txt"})
    verdict = "PASS" if ok else "FAIL"
    print(f"{verdict}: {m} neurons x {t} steps, interval {interval}, "
          f"{plan.partitions} partitions, {result.saturation_events} saturation events")
    if not ok:
        raise VerificationError(
            f"counter bank diverged from software accumulator "
            f"({result.saturation_events} saturation events)"
        )
    return 0


def cmd_profile(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    profiles = load_profiles(args.profiles)
    shape = _parse_shape(args.shape)
    model_names = args.models.split(",")
    intervals = [int(v) for v in args.intervals.split(",")]
    for name in model_names:
        if name not in MODEL_NAMES:
            raise ConfigurationError(f"unknown model {name!r}")
    probe = synth_gestures(3, 2, shape=shape, seed=args.seed).frames[:4]

    reports = {}
    artifacts = {}
    for name in model_names:
        for interval in intervals:
            spec = HybridModelSpec(model=name, interval=interval, input_shape=shape,
                                   classes=3)
            model = build(spec, seed=args.seed)
            report = estimate(model, profiles, probe)
            reports[(name, interval)] = report
            stem = f"report_{name}_I{interval}"
            emit_report(report, out / f"{stem}.txt", fmt="text")
            emit_report(report, out / f"{stem}.jsonl", fmt="jsonl")
            artifacts[stem] = out / f"{stem}.jsonl"
            parsed = parse_report(out / f"{stem}.jsonl")
            for comp in parsed.components:
                if comp.latency_s > 0:
                    rel = abs(comp.energy_j - comp.power_w * comp.latency_s)
                    rel /= max(abs(comp.energy_j), 1e-300)
                    if rel > 1e-9:
                        raise VerificationError(
                            f"energy != power x latency in {stem} component {comp.name}"
                        )

    summary = _ordering_summary(reports, intervals)
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    artifacts["summary"] = out / "summary.txt"
    _write_manifest(out, "profile", {
        "models": model_names, "intervals": intervals, "shape": list(shape),
        "profiles": str(args.profiles) if args.profiles else "default",
        "seed": args.seed,
    }, artifacts)
    print("\n".join(summary))
    return 0


def _ordering_summary(reports: dict, intervals) -> list:
    lines = []
    worst_ratio = 0.0
    for (name, interval), rep in reports.items():
        total = rep.total.energy_j
        acc = rep.component("accumulator").energy_j
        if total > 0:
            worst_ratio = max(worst_ratio, acc / total)
    lines.append(f"accumulator/system energy worst ratio: {worst_ratio:.3e} "
                 f"({'OK' if worst_ratio < 1e-3 else 'VIOLATED'} < 1e-3)")
    hybrids = ["s1a4", "s2a3", "s3a2", "s4a1", "s5a0"]
    for interval in intervals:
        if all((h, interval) in reports for h in hybrids):
            energies = [reports[(h, interval)].total.energy_j for h in hybrids]
            mono = all(energies[i] > energies[i + 1] for i in range(3))
            jump = energies[4] > energies[3]
            lines.append(
                f"I={interval}: energy k=1..5 -> "
                + ", ".join(f"{e:.3e}" for e in energies)
                + f" (decreasing 1..4: {'OK' if mono else 'VIOLATED'}; "
                f"k=5 jump: {'OK' if jump else 'VIOLATED'})"
            )
    for (name, interval), rep in sorted(reports.items()):
        cores = rep.core_allocation["total"]
        ref = REFERENCE_LOIHI_CORES.get(name)
        lines.append(f"{name} I={interval}: desk-scale cores {cores} "
                     f"(full-scale reference {ref})")
    return lines


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikebridge",
        description="Hybrid SNN/ANN engine: data, training, hardware simulation, cost model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic gesture dataset")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--count", type=int, default=100, help="samples per class")
    p.add_argument("--shape", default="2,32,32,20", help="C,H,W,T")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bin-ms", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--model", choices=MODEL_NAMES, default="s2a3")
    p.add_argument("--interval", type=int, default=5)
    p.add_argument("--data")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--spec", help="JSON model spec file overriding model flags")
    p.add_argument("--from-manifest", help="rerun a previous train manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate-hw", help="bit-exact counter-bank simulation")
    p.add_argument("--checkpoint", help="drive the bank with a checkpointed model's spikes")
    p.add_argument("--neurons", type=int, default=300)
    p.add_argument("--timesteps", type=int, default=50)
    p.add_argument("--interval", type=int, default=10)
    p.add_argument("--rate", type=float, default=0.3, help="random stimulus spike rate")
    p.add_argument("--counter-bits", type=int, default=0,
                   help="override counter width (0 = size from interval)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace-out", required=True)
    p.set_defaults(func=cmd_simulate_hw)

    p = sub.add_parser("profile", help="emit deployment cost reports")
    p.add_argument("--models", default=",".join(MODEL_NAMES))
    p.add_argument("--intervals", default="5,10,25")
    p.add_argument("--shape", default="2,32,32,50", help="C,H,W,T")
    p.add_argument("--profiles", help="profile JSON (default: shipped calibration)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_profile)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except USAGE_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (NumericError, ResourceError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except VerificationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 5
    except SpikeBridgeError as e:  # anything else from the library
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

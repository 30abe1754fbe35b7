"""Analytical deployment cost model for the hybrid system.

Spiking layers map onto neuro-cores (1024 neurons each); their energy is
activity-driven: synaptic events are counted from an actual forward pass on a
probe batch rather than assumed rates. Non-spiking layers cost per-MAC
compute plus per-weight memory traffic on the edge accelerator. The
accumulator bridge costs come from the counter-bank model. Every component
report satisfies energy == power x latency by construction.

The shipped default profile is an invented desk-scale calibration (flagged as
such in the file); it reproduces the qualitative orderings of the reference
hardware study, not absolute device numbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .hwsim import PartitionPlan, hw_cost
from .models import BuiltModel
from .tensor import Tensor, no_grad

# Loihi core counts published for the full-scale reference models; attached to
# reports as annotations only (the reference partitioner is not reproducible)
REFERENCE_LOIHI_CORES = {
    "ann": 0,
    "s1a4": 16,
    "s2a3": 32,
    "s3a2": 36,
    "s4a1": 38,
    "s5a0": 42,
    "snn": 58,
}


@dataclass(frozen=True)
class NeuromorphicProfile:
    name: str
    neurons_per_core: int
    cores_per_chip: int
    synapses_per_chip: int
    energy_per_synaptic_event_j: float
    core_energy_per_timestep_j: float
    timestep_s: float


@dataclass(frozen=True)
class EdgeProfile:
    name: str
    energy_per_mac_j: float
    energy_per_weight_read_j: float
    idle_power_w: float
    macs_per_second: float


@dataclass(frozen=True)
class AccumulatorHwProfile:
    clock_hz: float
    tick_energy_j: float
    latch_energy_j: float


@dataclass(frozen=True)
class LinkProfile:
    energy_j: float = 0.0
    latency_s: float = 0.0


@dataclass(frozen=True)
class DeviceProfiles:
    neuromorphic: NeuromorphicProfile
    edge: EdgeProfile
    accumulator: AccumulatorHwProfile
    link: LinkProfile
    provenance: str = ""


def _load_section(cls, data, section):
    import dataclasses

    if section not in data:
        raise ConfigurationError(f"profile file is missing section {section!r}")
    wanted = {f.name for f in fields(cls)}
    defaulted = {f.name for f in fields(cls) if f.default is not dataclasses.MISSING}
    missing = sorted(wanted - set(data[section]) - defaulted)
    if missing:
        raise ConfigurationError(
            f"profile section {section!r} is missing fields: {', '.join(missing)}"
        )
    extra = set(data[section]) - wanted
    if extra:
        raise ConfigurationError(
            f"profile section {section!r} has unknown fields: {', '.join(sorted(extra))}"
        )
    return cls(**data[section])


def default_profile_path() -> Path:
    return Path(resources.files("spikebridge").joinpath("profiles/default.json"))


def load_profiles(path=None) -> DeviceProfiles:
    p = Path(path) if path is not None else default_profile_path()
    data = json.loads(p.read_text())
    return DeviceProfiles(
        neuromorphic=_load_section(NeuromorphicProfile, data, "neuromorphic"),
        edge=_load_section(EdgeProfile, data, "edge"),
        accumulator=_load_section(AccumulatorHwProfile, data, "accumulator"),
        link=_load_section(LinkProfile, data, "link"),
        provenance=data.get("provenance", ""),
    )


@dataclass
class CoreAllocation:
    per_layer: dict
    total: int
    multi_chip: bool
    synapse_estimate: int


def allocate_cores(census: dict, profile: NeuromorphicProfile) -> CoreAllocation:
    """Ceil-divide each spiking layer's neurons over cores; flag chip overflow."""
    per_layer = {
        name: -(-count // profile.neurons_per_core) for name, count in census.items()
    }
    total = sum(per_layer.values())
    return CoreAllocation(
        per_layer=per_layer,
        total=total,
        multi_chip=total > profile.cores_per_chip,
        synapse_estimate=0,
    )


@dataclass
class Component:
    name: str
    latency_s: float
    power_w: float
    energy_j: float

    @classmethod
    def from_energy(cls, name, energy_j, latency_s):
        power = energy_j / latency_s if latency_s > 0 else 0.0
        return cls(name=name, latency_s=latency_s, power_w=power, energy_j=energy_j)


@dataclass
class CostReport:
    model: str
    interval: int
    timesteps: int
    parameter_count: int
    components: list
    core_allocation: dict
    annotations: dict

    @property
    def total(self) -> Component:
        energy = sum(c.energy_j for c in self.components)
        latency = sum(c.latency_s for c in self.components)
        return Component.from_energy("total", energy, latency)

    def component(self, name: str) -> Component:
        for c in self.components:
            if c.name == name:
                return c
        raise KeyError(name)

    @classmethod
    def empty(cls, model: str = "empty") -> "CostReport":
        return cls(model=model, interval=0, timesteps=0, parameter_count=0,
                   components=[], core_allocation={}, annotations={})


def measure_spiking_activity(model: BuiltModel, probe_frames) -> dict:
    """Per-spiking-layer synaptic events from a real forward pass.

    Events are presynaptic spikes into the layer times its fan-out, averaged
    per sample over the probe batch.
    """
    from .training import to_time_major

    with no_grad():
        model.forward(Tensor(to_time_major(probe_frames)), record_activity=True)
    return dict(model.last_activity or {})


def estimate(model: BuiltModel, profiles: DeviceProfiles, probe_frames) -> CostReport:
    """Whole-system report for one built model on one profile pair."""
    spec = model.spec
    T = spec.timesteps
    neuro = profiles.neuromorphic
    edge = profiles.edge

    census = model.neuron_census()
    alloc = allocate_cores(census, neuro)

    # spiking side: activity-dependent events + per-timestep core overhead
    activity = measure_spiking_activity(model, probe_frames) if census else {}
    events = sum(rec["events"] for rec in activity.values())
    snn_energy = events * neuro.energy_per_synaptic_event_j
    snn_energy += alloc.total * T * neuro.core_energy_per_timestep_j
    snn_latency = T * neuro.timestep_s if census else 0.0
    if not census:
        snn_energy = 0.0

    # non-spiking side: MAC compute plus weight traffic plus idle draw
    macs = 0
    reads = 0
    for blk in model.conv_blocks + model.dense_blocks:
        if not blk.spiking:
            macs += blk.macs
            reads += blk.weight_reads
    ann_latency = macs / edge.macs_per_second if macs else 0.0
    ann_energy = macs * edge.energy_per_mac_j + reads * edge.energy_per_weight_read_j
    ann_energy += edge.idle_power_w * ann_latency
    if macs == 0:
        ann_energy = 0.0

    # accumulator bridge: counter-bank cost on the layer feeding it
    if model.bridge_input_shape is not None:
        m = int(np.prod(model.bridge_input_shape))
        plan = PartitionPlan(neurons=m, timesteps=T)
        acc = hw_cost(plan, spec.interval, profiles.accumulator.clock_hz,
                      profiles.accumulator.tick_energy_j, profiles.accumulator.latch_energy_j)
        acc_comp = Component(name="accumulator", latency_s=acc.latency_s,
                             power_w=acc.power_w, energy_j=acc.energy_j)
    else:
        acc_comp = Component(name="accumulator", latency_s=0.0, power_w=0.0, energy_j=0.0)

    components = [
        Component.from_energy("snn", snn_energy, snn_latency),
        Component.from_energy("ann", ann_energy, ann_latency),
        acc_comp,
        Component.from_energy("link", profiles.link.energy_j, profiles.link.latency_s),
    ]
    return CostReport(
        model=spec.model,
        interval=spec.interval,
        timesteps=T,
        parameter_count=model.parameter_count,
        components=components,
        core_allocation={"per_layer": alloc.per_layer, "total": alloc.total,
                         "multi_chip": alloc.multi_chip},
        annotations={"reference_loihi_cores": REFERENCE_LOIHI_CORES.get(spec.model)},
    )


def emit_report(report: CostReport, path, fmt: str = "text") -> None:
    """Write a report as a text table or a line-delimited record stream.

    Both formats carry the same numbers: text cells use repr-precision floats,
    so re-parsing either file reproduces the in-memory values exactly.
    """
    path = Path(path)
    rows = list(report.components) + [report.total]
    if fmt == "jsonl":
        with open(path, "w") as f:
            head = {
                "record": "report",
                "model": report.model,
                "interval": report.interval,
                "timesteps": report.timesteps,
                "parameter_count": report.parameter_count,
                "core_allocation": report.core_allocation,
                "annotations": report.annotations,
            }
            f.write(json.dumps(head, sort_keys=True) + "\n")
            for c in rows:
                f.write(json.dumps({
                    "record": "component",
                    "name": c.name,
                    "latency_s": c.latency_s,
                    "power_w": c.power_w,
                    "energy_j": c.energy_j,
                }, sort_keys=True) + "\n")
    elif fmt == "text":
        lines = [
            f"model {report.model}  interval {report.interval}  timesteps {report.timesteps}  "
            f"parameters {report.parameter_count}",
            f"cores {json.dumps(report.core_allocation, sort_keys=True)}",
            f"annotations {json.dumps(report.annotations, sort_keys=True)}",
            f"{'component':<14}{'latency_s':<26}{'power_w':<26}{'energy_j':<26}",
        ]
        for c in rows:
            lines.append(f"{c.name:<14}{c.latency_s!r:<26}{c.power_w!r:<26}{c.energy_j!r:<26}")
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ConfigurationError(f"unknown report format {fmt!r}")


def parse_report(path) -> CostReport:
    """Re-read an emitted jsonl report into a CostReport (totals recomputed)."""
    head = None
    components = []
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            if rec["record"] == "report":
                head = rec
            elif rec["record"] == "component" and rec["name"] != "total":
                components.append(Component(name=rec["name"], latency_s=rec["latency_s"],
                                            power_w=rec["power_w"], energy_j=rec["energy_j"]))
    if head is None:
        raise ConfigurationError(f"{path} contains no report header record")
    return CostReport(
        model=head["model"],
        interval=head["interval"],
        timesteps=head["timesteps"],
        parameter_count=head["parameter_count"],
        components=components,
        core_allocation=head["core_allocation"],
        annotations=head["annotations"],
    )


def parse_text_report_values(path) -> dict:
    """Extract the numeric component table from a text report for cross-checks."""
    values = {}
    for line in Path(path).read_text().splitlines()[3:]:
        parts = line.split()
        if len(parts) == 4 and parts[0] != "component":
            values[parts[0]] = (float(parts[1]), float(parts[2]), float(parts[3]))
    return values

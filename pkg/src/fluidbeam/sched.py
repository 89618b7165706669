"""Analytic latency model of a streaming neural-beamforming accelerator.

The forward pass is lowered to an instruction stream of three classes:
MemoryAccess (off-chip bytes), MatrixProcessing (MACs), and PostProcessing
(bias/activation/pool/concat/normalize, one cycle per output element).
Instructions are grouped into phases, one per weight-streaming step plus an
input-load and a writeback phase.  Ping-pong buffering overlaps compute with
the memory stream inside each phase, so

    phase latency = max(memory cycles, compute cycles)

and the total is the sum over phases (plus an optional fixed pipeline-fill
overhead per phase).  PostProcessing work (bias, activation, pooling,
concatenation, normalization) stays on chip on its own unit; its cycles are
counted and reported but assumed hidden behind the memory stream, which
holds everywhere this model is calibrated.  Weights are streamed exactly
once however many port selections are batched; inputs, outputs, and the
instruction stream itself scale with the batch.  This is a planning model,
not an event simulator: no stalls, no refetch, no dynamic arbitration.
"""

import math
from dataclasses import dataclass, field
from typing import List, Tuple

from .errors import ConfigError, InputError
from .gnn import GnnDims

MEMORY_ACCESS = "memory_access"
MATRIX_PROCESSING = "matrix_processing"
POST_PROCESSING = "post_processing"

# Encoded size of one instruction word in the off-chip stream.
INSTRUCTION_BYTES = 16


@dataclass(frozen=True)
class AcceleratorConfig:
    """Hardware knobs.  Defaults: 64-bit off-chip bus, 8-bit fixed-point
    weights and activations, 4096 MACs/cycle, 2 MiB activation buffer,
    10 ns cycle."""

    offchip_bus_bits: int = 64
    weight_bytes_per_value: int = 1
    activation_bytes_per_value: int = 1
    macs_per_cycle: float = 4096.0
    onchip_buffer_bytes: int = 2 * 1024 * 1024
    clock_period_ns: float = 10.0

    def __post_init__(self):
        if self.offchip_bus_bits < 8 or self.offchip_bus_bits % 8 != 0:
            raise ConfigError(f"offchip_bus_bits must be a positive multiple of 8, "
                              f"got {self.offchip_bus_bits}")
        if self.weight_bytes_per_value < 1 or self.activation_bytes_per_value < 1:
            raise ConfigError("bytes per value must be >= 1")
        if self.macs_per_cycle <= 0:
            raise ConfigError(f"macs_per_cycle must be > 0, got {self.macs_per_cycle}")
        if self.onchip_buffer_bytes < 1:
            raise ConfigError("onchip_buffer_bytes must be >= 1")
        if self.clock_period_ns <= 0:
            raise ConfigError("clock_period_ns must be > 0")

    @property
    def bus_bytes_per_cycle(self):
        return self.offchip_bus_bits // 8


@dataclass(frozen=True)
class Instruction:
    kind: str
    phase: str
    label: str
    bytes: int = 0      # MemoryAccess payload
    macs: int = 0       # MatrixProcessing work
    elements: int = 0   # PostProcessing outputs


@dataclass(frozen=True)
class PhaseStats:
    phase: str
    bytes: int
    macs: int
    elements: int
    memory_cycles: int
    compute_cycles: int
    post_cycles: int
    phase_cycles: int
    bound: str


@dataclass(frozen=True)
class ScheduleReport:
    task_count: int
    total_cycles: int
    total_ns: float
    memory_cycles: int
    compute_cycles: int
    post_cycles: int
    bound: str
    spill: bool
    phases: Tuple[PhaseStats, ...] = field(default=())


def _activation_rows(dims: GnnDims, ues_per_task, tasks):
    """Peak live activation elements per phase key: input rows + output rows
    of the stacked matrix each FC layer touches."""
    rows = ues_per_task * tasks
    footprint = {}
    for name, din, dout in dims.layer_specs():
        footprint[name] = rows * (din + dout)
    return footprint


def emit_instructions(dims: GnnDims, ues_per_task, tasks,
                      accel: AcceleratorConfig = None):
    """Lower a `tasks`-way batched forward (each task: ues_per_task UEs) to an
    instruction stream.

    Stream order: instruction + input loads, then per FC layer a weight
    burst, a stacked matmul, and its post work (the pooling and concat that
    feed the two concat stages ride with the next layer's phase so they
    overlap that layer's weight stream), then normalization and writeback.
    Spills appear as extra MemoryAccess traffic inside the overflowing phase.
    """
    if tasks < 1:
        raise InputError(f"tasks must be >= 1, got {tasks}")
    if ues_per_task < 1:
        raise InputError(f"ues_per_task must be >= 1, got {ues_per_task}")
    accel = accel or AcceleratorConfig()
    wb = accel.weight_bytes_per_value
    ab = accel.activation_bytes_per_value
    rows = ues_per_task * tasks
    n2 = dims.in_dim
    stream: List[Instruction] = []

    def mem(phase, label, nbytes):
        stream.append(Instruction(kind=MEMORY_ACCESS, phase=phase, label=label,
                                  bytes=int(nbytes)))

    def mat(phase, label, macs):
        stream.append(Instruction(kind=MATRIX_PROCESSING, phase=phase, label=label,
                                  macs=int(macs)))

    def post(phase, label, elements):
        stream.append(Instruction(kind=POST_PROCESSING, phase=phase, label=label,
                                  elements=int(elements)))

    for b in range(tasks):
        mem("load", f"load.input.t{b}", ues_per_task * n2 * ab)
        post("load", f"stage.input.t{b}", ues_per_task * n2)

    # pooling + concat work that precedes the two concat-stage MLPs is issued
    # per task (the batched flow loops selections there); one output element
    # per compare/copy, (K-1) rows pooled per UE
    pool_elems = ues_per_task * ((ues_per_task - 1) * dims.narrow + 2 * dims.narrow)
    pre_post = ("mlp2.0", "mlp4.0")

    for name, din, dout in dims.layer_specs():
        mem(name, f"weights.{name}", (din * dout + dout) * wb)
        mat(name, f"matmul.{name}", rows * din * dout)
        if name in pre_post:
            for b in range(tasks):
                post(name, f"pool_concat.{name}.t{b}", pool_elems)
        post(name, f"bias_act.{name}", rows * dout)

    for b in range(tasks):
        post("writeback", f"normalize.t{b}", 2 * ues_per_task * n2)
        mem("writeback", f"store.output.t{b}", ues_per_task * n2 * ab)

    # spill: any phase whose live activations exceed the buffer writes the
    # excess out and reads it back
    spill_bytes = 0
    for name, footprint in _activation_rows(dims, ues_per_task, tasks).items():
        nbytes = footprint * ab
        if nbytes > accel.onchip_buffer_bytes:
            excess = nbytes - accel.onchip_buffer_bytes
            mem(name, f"spill.{name}", 2 * excess)
            spill_bytes += 2 * excess

    # the instruction stream itself is fetched over the same bus; count the
    # fetch instruction too
    mem("load", "load.instructions", (len(stream) + 1) * INSTRUCTION_BYTES)
    return stream


def simulate(stream, accel: AcceleratorConfig = None, tasks=1,
             phase_overhead_cycles=0):
    """Aggregate an instruction stream into per-phase and total latency."""
    accel = accel or AcceleratorConfig()
    if phase_overhead_cycles < 0:
        raise InputError("phase_overhead_cycles must be >= 0")
    order = []
    groups = {}
    for ins in stream:
        if ins.phase not in groups:
            groups[ins.phase] = []
            order.append(ins.phase)
        groups[ins.phase].append(ins)
    phases = []
    spill = False
    for phase in order:
        nbytes = sum(i.bytes for i in groups[phase] if i.kind == MEMORY_ACCESS)
        macs = sum(i.macs for i in groups[phase] if i.kind == MATRIX_PROCESSING)
        elems = sum(i.elements for i in groups[phase] if i.kind == POST_PROCESSING)
        spill = spill or any(i.label.startswith("spill.") for i in groups[phase])
        mem_cycles = math.ceil(nbytes / accel.bus_bytes_per_cycle)
        compute_cycles = math.ceil(macs / accel.macs_per_cycle)
        post_cycles = elems  # one cycle per output element, on its own unit
        total = max(mem_cycles, compute_cycles) + phase_overhead_cycles
        bound = "memory" if mem_cycles >= compute_cycles else "compute"
        phases.append(PhaseStats(phase=phase, bytes=nbytes, macs=macs,
                                 elements=elems, memory_cycles=mem_cycles,
                                 compute_cycles=compute_cycles,
                                 post_cycles=post_cycles, phase_cycles=total,
                                 bound=bound))
    total_cycles = sum(p.phase_cycles for p in phases)
    memory_cycles = sum(p.memory_cycles for p in phases)
    compute_cycles = sum(p.compute_cycles for p in phases)
    post_cycles = sum(p.post_cycles for p in phases)
    overall = "memory" if memory_cycles > compute_cycles else "compute"
    return ScheduleReport(task_count=int(tasks), total_cycles=int(total_cycles),
                          total_ns=total_cycles * accel.clock_period_ns,
                          memory_cycles=int(memory_cycles),
                          compute_cycles=int(compute_cycles),
                          post_cycles=int(post_cycles), bound=overall,
                          spill=spill, phases=tuple(phases))


def schedule_forward(dims: GnnDims, ues_per_task, tasks,
                     accel: AcceleratorConfig = None, phase_overhead_cycles=0):
    """Convenience: emit + simulate in one call."""
    accel = accel or AcceleratorConfig()
    stream = emit_instructions(dims, ues_per_task, tasks, accel)
    return simulate(stream, accel, tasks=tasks,
                    phase_overhead_cycles=phase_overhead_cycles)


def sweep_tasks(dims: GnnDims, ues_per_task, task_counts,
                accel: AcceleratorConfig = None, phase_overhead_cycles=0):
    """Schedule the same network for several batch sizes."""
    return [schedule_forward(dims, ues_per_task, b, accel, phase_overhead_cycles)
            for b in task_counts]


def find_bound_flip(reports):
    """First task count whose schedule is compute-bound, or None."""
    for rep in reports:
        if rep.bound == "compute":
            return rep.task_count
    return None


def weight_stream_bytes(dims: GnnDims, accel: AcceleratorConfig = None):
    """Total off-chip weight + bias bytes for one parameter set."""
    accel = accel or AcceleratorConfig()
    return dims.param_count() * accel.weight_bytes_per_value

"""Experiment harness: reproducible runs, CSV reports, and re-verification.

Everything here is driven by one ExperimentSpec, built either directly (in
code and tests) or from an INI-style config file plus CLI overrides.  One
master seed is split into named sub-seeds (see seeds.py) for every
stochastic stage, so any logged result can be recomputed from its row in the
verify log: channel seed -> channels, logged selection -> ports, scheme ->
solver, compute_rates -> WSR.

CSV files use a header row, RFC 4180 quoting, and 9 significant digits for
floats.  Reports also render a matplotlib figure next to each CSV unless
plotting is disabled.
"""

import configparser
import csv
import dataclasses
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .baselines import mmse, mrt, zf
from .channel import PortSelection, build_correlation, sample_channels, select_ports
from .config import NetworkConfig, default_config, dbm_to_mw, mw_to_dbm
from .errors import ConfigError, FluidbeamError, InputError, ModelIOError
from .gnn import GnnDims, TrainSpec, load_params, make_gnn_solver, save_params, train
from .metrics import compute_rates
from .portsel import _draw as _draw_selection
from .portsel import evaluate_selection, rps_best_of
from .sched import AcceleratorConfig, find_bound_flip, schedule_forward
from .seeds import derive_seed, make_rng

BENCHMARK_SCHEMES = ("gnn-exhaustive", "gnn-randmax", "gnn-single",
                     "mmse-exhaustive", "mrt-exhaustive", "zf-exhaustive")
SWEEP_VARS = ("power_dbm", "cells", "ues", "ports")
# logged WSRs carry 9 significant digits, so a bit-exact recompute can still
# differ from the stored value by half an ulp (~5e-9 relative); the check
# needs headroom above that quantization floor
WSR_REL_TOL = 1e-8


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one run needs.  Defaults are the desk preset."""

    network: NetworkConfig = field(default_factory=default_config)
    dims: Optional[GnnDims] = None          # None: desk widths at network N
    train: TrainSpec = TrainSpec(epochs=60, samples_per_epoch=500,
                                 batch_size=50, eval_samples=200)
    schemes: Tuple[str, ...] = BENCHMARK_SCHEMES
    draws: int = 200
    trials_randmax: int = 20
    trials_exhaustive: int = 100
    sweep_var: str = "power_dbm"
    sweep_values: Tuple[float, ...] = ()    # empty: single point at the config value
    split_total_power: bool = False
    rps_solver: str = "gnn"
    rps_trial_counts: Tuple[int, ...] = (1, 20, 100, 500, 2000)
    rps_draws: int = 20
    sched_task_counts: Tuple[int, ...] = (1, 2, 4, 8, 16)
    sched_dims: Optional[GnnDims] = None    # None: paper widths at network N
    accel: AcceleratorConfig = AcceleratorConfig()
    phase_overhead: int = 0
    master_seed: int = 0
    out_dir: str = "runs"
    models_dir: Optional[str] = None
    make_plots: bool = True

    def resolved_dims(self):
        return self.dims or GnnDims.desk(self.network.fas_per_bs)

    def resolved_sched_dims(self):
        return self.sched_dims or GnnDims.paper(self.network.fas_per_bs)

    def resolved_models_dir(self):
        return self.models_dir or os.path.join(self.out_dir, "models")


# ---------------------------------------------------------------------------
# config files and presets
# ---------------------------------------------------------------------------

_PRESETS = {
    "paper": dict(epochs=100, samples_per_epoch=10_000, batch_size=200,
                  eval_samples=2_000, wide=1024, narrow=512,
                  trials_exhaustive=500),
    "desk": dict(epochs=60, samples_per_epoch=500, batch_size=50,
                 eval_samples=200, wide=64, narrow=32,
                 trials_exhaustive=100),
}


def _parse_scalar(raw, into):
    raw = raw.strip()
    try:
        if into is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return into(raw)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {raw!r} as {into.__name__}") from exc


def _parse_list(raw, into):
    return tuple(_parse_scalar(part, into) for part in raw.split(",") if part.strip())


def build_spec(config_path=None, preset="desk", seed=None, out=None,
               models=None, sets=(), make_plots=True):
    """Assemble an ExperimentSpec.

    Precedence, lowest to highest: package defaults, preset block, config
    file, --set overrides, then the dedicated seed/out/models flags.
    """
    if preset not in _PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(_PRESETS)}")
    parser = configparser.ConfigParser()
    if config_path is not None:
        if not os.path.exists(config_path):
            raise ConfigError(f"config file not found: {config_path}")
        try:
            with open(config_path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {config_path}: {exc}") from exc
    for item in sets:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set needs section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        section, option = key.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section.strip(), option.strip(), value.strip())

    def get(section, option, into, fallback):
        if parser.has_option(section, option):
            raw = parser.get(section, option)
            if into in (int, float, bool, str):
                return _parse_scalar(raw, into)
            return raw
        return fallback

    pre = _PRESETS[preset]
    num_cells = get("network", "cells", int, 2)
    net_kwargs = dict(
        num_cells=num_cells,
        ues_per_cell=get("network", "ues_per_cell", int, 2 if preset == "desk" else 4),
        fas_per_bs=get("network", "fas_per_bs", int, 4),
        ports_per_fa=get("network", "ports_per_fa", int, 6),
        fa_length_wavelengths=get("network", "aperture", float, 0.5),
        tx_power_dbm=get("network", "tx_power_dbm", float, 3.0),
        noise_dbm=get("network", "noise_dbm", float, -90.0),
        rate_weights=get("network", "rate_weight", float, 1.0),
        ue_distance_range=(get("network", "distance_min", float, 20.0),
                           get("network", "distance_max", float, 30.0)),
        ref_distance_m=get("network", "ref_distance", float, 1.0),
        ref_pathloss_db=get("network", "ref_pathloss_db", float, -30.0),
        pathloss_db_per_decade=get("network", "pathloss_db_per_decade", float, 25.0),
    )
    network = default_config(**net_kwargs)
    dims = GnnDims(num_fas=network.fas_per_bs,
                   wide=get("train", "wide", int, pre["wide"]),
                   narrow=get("train", "narrow", int, pre["narrow"]))
    train_spec = TrainSpec(
        epochs=get("train", "epochs", int, pre["epochs"]),
        samples_per_epoch=get("train", "samples_per_epoch", int,
                              pre["samples_per_epoch"]),
        batch_size=get("train", "batch_size", int, pre["batch_size"]),
        eval_samples=get("train", "eval_samples", int, pre["eval_samples"]),
        lr=get("train", "lr", float, 1e-3),
        lr_decay=get("train", "lr_decay", float, 0.995),
        lr_decay_every=get("train", "lr_decay_every", int, 100),
    )
    schemes_raw = get("benchmark", "schemes", str, ",".join(BENCHMARK_SCHEMES))
    schemes = tuple(s.strip() for s in schemes_raw.split(",") if s.strip())
    for s in schemes:
        if s not in BENCHMARK_SCHEMES:
            raise ConfigError(f"unknown scheme {s!r}; choose from {BENCHMARK_SCHEMES}")
    sweep_var = get("benchmark", "sweep", str, "power_dbm")
    if sweep_var not in SWEEP_VARS:
        raise ConfigError(f"unknown sweep {sweep_var!r}; choose from {SWEEP_VARS}")
    sweep_into = float if sweep_var == "power_dbm" else int
    sweep_values = _parse_list(get("benchmark", "sweep_values", str, ""), sweep_into)
    accel = AcceleratorConfig(
        offchip_bus_bits=get("sched", "bus_bits", int, 64),
        weight_bytes_per_value=get("sched", "weight_bytes", int, 1),
        activation_bytes_per_value=get("sched", "activation_bytes", int, 1),
        macs_per_cycle=get("sched", "macs_per_cycle", float, 4096.0),
        onchip_buffer_bytes=get("sched", "onchip_buffer_bytes", int, 2 * 1024 * 1024),
        clock_period_ns=get("sched", "clock_period_ns", float, 10.0),
    )
    spec = ExperimentSpec(
        network=network,
        dims=dims,
        train=train_spec,
        schemes=schemes,
        draws=get("benchmark", "draws", int, 200),
        trials_randmax=get("benchmark", "trials_randmax", int, 20),
        trials_exhaustive=get("benchmark", "trials_exhaustive", int,
                              pre["trials_exhaustive"]),
        sweep_var=sweep_var,
        sweep_values=sweep_values,
        split_total_power=get("benchmark", "split_total_power", bool, False),
        rps_solver=get("rps", "solver", str, "gnn"),
        rps_trial_counts=_parse_list(get("rps", "trial_counts", str,
                                         "1,20,100,500,2000"), int),
        rps_draws=get("rps", "draws", int, 20),
        sched_task_counts=_parse_list(get("sched", "task_counts", str,
                                          "1,2,4,8,16"), int),
        sched_dims=GnnDims(num_fas=network.fas_per_bs,
                           wide=get("sched", "wide", int, 1024),
                           narrow=get("sched", "narrow", int, 512)),
        accel=accel,
        phase_overhead=get("sched", "phase_overhead", int, 0),
        master_seed=seed if seed is not None else get("run", "seed", int, 0),
        out_dir=out if out is not None else get("run", "out", str, "runs"),
        models_dir=models,
        make_plots=make_plots,
    )
    return spec


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    return str(value)


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def _selection_to_str(selection: PortSelection):
    return ";".join(",".join(str(int(p)) for p in row) for row in selection.ports)


def _selection_from_str(raw):
    rows = [[int(p) for p in part.split(",")] for part in raw.split(";")]
    return PortSelection(ports=np.array(rows, dtype=int))


# ---------------------------------------------------------------------------
# schemes and sweeps
# ---------------------------------------------------------------------------

def _apply_sweep(base: NetworkConfig, var, value, split_total_power):
    kwargs = dict(
        num_cells=base.num_cells, ues_per_cell=base.ues_per_cell,
        fas_per_bs=base.fas_per_bs, ports_per_fa=base.ports_per_fa,
        fa_length_wavelengths=base.fa_length_wavelengths,
        tx_power_dbm=base.tx_power_dbm, noise_dbm=base.noise_dbm,
        rate_weights=base.rate_weights, ue_distance_range=base.ue_distance_range,
        ref_distance_m=base.ref_distance_m, ref_pathloss_db=base.ref_pathloss_db,
        pathloss_db_per_decade=base.pathloss_db_per_decade,
    )
    if var == "power_dbm":
        kwargs["tx_power_dbm"] = float(value)
    elif var == "cells":
        kwargs["num_cells"] = int(value)
        kwargs["ues_per_cell"] = base.ues_per_cell[0]
        kwargs["rate_weights"] = float(base.rate_weights[0][0])
    elif var == "ues":
        kwargs["ues_per_cell"] = int(value)
        kwargs["rate_weights"] = float(base.rate_weights[0][0])
    elif var == "ports":
        kwargs["ports_per_fa"] = int(value)
    else:
        raise ConfigError(f"unknown sweep variable {var!r}")
    if split_total_power:
        total_mw = float(dbm_to_mw(kwargs["tx_power_dbm"]))
        kwargs["tx_power_dbm"] = float(mw_to_dbm(total_mw / kwargs["num_cells"]))
    return default_config(**kwargs)


def load_cell_models(models_dir, num_cells):
    """Per-cell parameter files cell<i>.fbgn; missing files are named."""
    params = []
    for i in range(num_cells):
        path = os.path.join(models_dir, f"cell{i}.fbgn")
        if not os.path.exists(path):
            raise ModelIOError(
                f"missing model file {path}; train one with the train command "
                f"or point --models at a directory holding cell0..cell{num_cells - 1}")
        params.append(load_params(path))
    return params


def _make_solver(kind, cfg, models_dir):
    if kind == "gnn":
        return make_gnn_solver(load_cell_models(models_dir, cfg.num_cells), cfg)
    if kind == "mmse":
        return lambda h: mmse(h, cfg)
    if kind == "mrt":
        return lambda h: mrt(h, cfg)
    if kind == "zf":
        return lambda h: zf(h, cfg)
    raise ConfigError(f"unknown solver kind {kind!r}")


def _scheme_parts(scheme, spec):
    kind, strategy = scheme.split("-", 1)
    trials = {"exhaustive": spec.trials_exhaustive,
              "randmax": spec.trials_randmax,
              "single": 1}[strategy]
    return kind, trials


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------

def run_train(spec: ExperimentSpec):
    """Train the per-cell GNNs, save models, and report the learning curve."""
    cfg = spec.network
    dims = spec.resolved_dims()
    train_spec = dataclasses.replace(spec.train,
                                     seed=derive_seed(spec.master_seed, "train"))
    params_list, history = train(cfg, dims, train_spec)
    models_dir = spec.resolved_models_dir()
    os.makedirs(models_dir, exist_ok=True)
    for params in params_list:
        save_params(params, os.path.join(models_dir, f"cell{params.cell_index}.fbgn"))
    history_path = os.path.join(spec.out_dir, "history.csv")
    write_csv(history_path, ["epoch", "train_wsr", "eval_wsr"],
              [(h.epoch, h.train_wsr, h.eval_wsr) for h in history])
    if spec.make_plots:
        from . import plots
        plots.training_curve(history, os.path.join(spec.out_dir, "history.png"))
    return params_list, history


def run_benchmark(spec: ExperimentSpec):
    """Monte-Carlo WSR comparison of the configured schemes.

    Every scheme sees the same channel draw and the same selection-trial
    seed, so random-search schemes share their trial streams; results land in
    benchmark.csv with a per-draw verify log in verify_log.csv.
    """
    values = spec.sweep_values or (
        {"power_dbm": spec.network.tx_power_dbm,
         "cells": spec.network.num_cells,
         "ues": spec.network.ues_per_cell[0],
         "ports": spec.network.ports_per_fa}[spec.sweep_var],)
    summary_rows = []
    log_rows = []
    for value in values:
        cfg = _apply_sweep(spec.network, spec.sweep_var, value,
                           spec.split_total_power)
        factors = build_correlation(cfg.ports_per_fa, cfg.fa_length_wavelengths)
        solvers = {}
        for scheme in spec.schemes:
            kind, _ = _scheme_parts(scheme, spec)
            if kind not in solvers:
                solvers[kind] = _make_solver(kind, cfg, spec.resolved_models_dir())
        point = f"{spec.sweep_var}={_fmt(value)}"
        per_scheme = {scheme: [] for scheme in spec.schemes}
        for d in range(spec.draws):
            channel_seed = derive_seed(spec.master_seed, f"bench/{point}/draw{d}/channel")
            rps_seed = derive_seed(spec.master_seed, f"bench/{point}/draw{d}/rps")
            tensor = sample_channels(cfg, factors, channel_seed)
            for scheme in spec.schemes:
                kind, trials = _scheme_parts(scheme, spec)
                outcome = rps_best_of(tensor, solvers[kind], cfg, trials, rps_seed)
                per_scheme[scheme].append(outcome.wsr)
                log_rows.append((spec.sweep_var, value, scheme, d, channel_seed,
                                 _selection_to_str(outcome.selection), outcome.wsr))
        for scheme in spec.schemes:
            wsrs = np.array(per_scheme[scheme])
            summary_rows.append((spec.sweep_var, value, scheme, len(wsrs),
                                 float(wsrs.mean()), float(wsrs.std(ddof=0))))
    bench_path = os.path.join(spec.out_dir, "benchmark.csv")
    write_csv(bench_path,
              ["sweep_var", "sweep_value", "scheme", "draws", "mean_wsr", "std_wsr"],
              summary_rows)
    write_csv(os.path.join(spec.out_dir, "verify_log.csv"),
              ["sweep_var", "sweep_value", "scheme", "draw", "channel_seed",
               "selection", "wsr"],
              log_rows)
    if spec.make_plots:
        from . import plots
        plots.benchmark_figure(summary_rows, os.path.join(spec.out_dir, "benchmark.png"))
    return summary_rows


def run_rps_distribution(spec: ExperimentSpec):
    """Best-of-T WSR for nested T values over repeated channel draws.

    All T values share one trial stream per draw, so best-of-T here equals
    rps_best_of(..., T) with the same seed, exactly.
    """
    cfg = spec.network
    factors = build_correlation(cfg.ports_per_fa, cfg.fa_length_wavelengths)
    solver = _make_solver(spec.rps_solver, cfg, spec.resolved_models_dir())
    counts = tuple(sorted(set(int(t) for t in spec.rps_trial_counts)))
    if not counts or counts[0] < 1:
        raise ConfigError(f"rps trial counts must be >= 1, got {spec.rps_trial_counts}")
    rows = []
    for d in range(spec.rps_draws):
        tensor = sample_channels(
            cfg, factors, derive_seed(spec.master_seed, f"rpsdist/draw{d}/channel"))
        trial_seed = derive_seed(spec.master_seed, f"rpsdist/draw{d}/trials")
        # one pass over max(T) nested trials, recording the running best at
        # each requested T; this replays exactly the rps_best_of stream
        rng = make_rng(trial_seed)
        running = None
        for t in range(counts[-1]):
            selection = _draw_selection(rng, cfg)
            _, wsr = evaluate_selection(tensor, selection, solver, cfg)
            if running is None or wsr > running:
                running = wsr
            if t + 1 in counts:
                rows.append((t + 1, d, running))
    path = os.path.join(spec.out_dir, "rps.csv")
    write_csv(path, ["trials", "draw", "best_wsr"], rows)
    if spec.make_plots:
        from . import plots
        plots.rps_figure(rows, os.path.join(spec.out_dir, "rps.png"))
    return rows


def run_sched(spec: ExperimentSpec):
    """Latency schedule across batched-task counts; per-phase CSV rows."""
    dims = spec.resolved_sched_dims()
    ues = spec.network.ues_per_cell[0]
    reports = [schedule_forward(dims, ues, b, spec.accel, spec.phase_overhead)
               for b in spec.sched_task_counts]
    rows = []
    for rep in reports:
        for ph in rep.phases:
            rows.append((rep.task_count, ph.phase, ph.bytes, ph.macs,
                         ph.memory_cycles, ph.compute_cycles, ph.phase_cycles,
                         ph.bound))
    path = os.path.join(spec.out_dir, "sched.csv")
    write_csv(path, ["B", "phase", "bytes", "macs", "mem_cycles",
                     "compute_cycles", "phase_cycles", "bound"], rows)
    if spec.make_plots:
        from . import plots
        plots.sched_figure(reports, os.path.join(spec.out_dir, "sched.png"))
    return reports, find_bound_flip(reports)


def verify_log(spec: ExperimentSpec, log_path):
    """Recompute every WSR in a benchmark verify log.

    Returns (ok, results) where results rows are (row_index, scheme,
    logged_wsr, recomputed_wsr, ok).  Must be run against the same base
    config and models directory as the original benchmark.
    """
    header, rows = read_csv(log_path)
    expected = ["sweep_var", "sweep_value", "scheme", "draw", "channel_seed",
                "selection", "wsr"]
    if header != expected:
        raise InputError(f"{log_path}: header {header} != {expected}")
    results = []
    all_ok = True
    cache = {}
    for idx, row in enumerate(rows):
        sweep_var, raw_value, scheme, _, channel_seed, sel_raw, wsr_raw = row
        value = float(raw_value) if sweep_var == "power_dbm" else int(raw_value)
        key = (sweep_var, value)
        if key not in cache:
            cfg = _apply_sweep(spec.network, sweep_var, value, spec.split_total_power)
            factors = build_correlation(cfg.ports_per_fa, cfg.fa_length_wavelengths)
            cache[key] = (cfg, factors, {})
        cfg, factors, solvers = cache[key]
        kind, _ = _scheme_parts(scheme, spec)
        if kind not in solvers:
            solvers[kind] = _make_solver(kind, cfg, spec.resolved_models_dir())
        tensor = sample_channels(cfg, factors, int(channel_seed))
        h_eff = select_ports(tensor, _selection_from_str(sel_raw))
        beams = solvers[kind](h_eff)
        wsr = compute_rates(h_eff, beams, cfg).wsr
        logged = float(wsr_raw)
        ok = abs(wsr - logged) <= WSR_REL_TOL * max(1.0, abs(logged))
        all_ok = all_ok and ok
        results.append((idx, scheme, logged, wsr, ok))
    return all_ok, results

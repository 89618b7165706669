"""Fluid-antenna multi-cell MIMO downlink toolkit.

Simulates port-selectable fluid-antenna channels, beamforms with classical
precoders or trained per-cell GNNs, searches port selections, and models the
latency of a streaming accelerator executing batched forwards.
"""

from .baselines import mmse, mrt, zf
from .channel import (
    ChannelTensor,
    CorrelationFactors,
    EffectiveChannels,
    PortSelection,
    bessel_j0,
    build_correlation,
    jacobi_eigh,
    pathloss_db,
    random_selection,
    sample_channels,
    select_ports,
)
from .config import NetworkConfig, dbm_to_mw, default_config, mw_to_dbm
from .errors import (
    ConfigError,
    FluidbeamError,
    InputError,
    ModelIOError,
    SearchCapError,
    SelectionError,
    ShapeError,
    TrainingDivergedError,
    ZeroNormError,
)
from .gnn import (
    EpochStats,
    GnnDims,
    GnnParams,
    TrainSpec,
    beams_from_features,
    features_from_effective,
    gnn_forward,
    gnn_forward_batched,
    init_gnn_params,
    load_params,
    make_gnn_solver,
    save_params,
    train,
)
from .metrics import BeamformingSet, PowerCheck, RateReport, check_power, compute_rates
from .portsel import SelectionOutcome, exhaustive, rps_best_of, rps_single
from .sched import (
    AcceleratorConfig,
    Instruction,
    PhaseStats,
    ScheduleReport,
    emit_instructions,
    find_bound_flip,
    schedule_forward,
    simulate,
    sweep_tasks,
)
from .seeds import derive_seed, make_rng

__version__ = "0.1.0"

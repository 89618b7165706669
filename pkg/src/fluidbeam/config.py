"""Network-level configuration and unit conversions.

Powers are carried in dBm at the interface and converted to linear
milliwatts internally, so the noise floor and transmit budget live on the
same scale as the squared channel magnitudes.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import ConfigError


def dbm_to_mw(dbm):
    """10^(dBm/10), elementwise."""
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    return 10.0 * np.log10(np.asarray(mw, dtype=float))


@dataclass(frozen=True)
class NetworkConfig:
    """Static description of one multi-cell downlink scenario.

    Attributes:
        num_cells: number of base stations / cells (I).
        ues_per_cell: K_i for each cell; entries may differ.
        fas_per_bs: fluid antennas per base station (N).
        ports_per_fa: selectable ports per fluid antenna (L).
        fa_length_wavelengths: normalized aperture length W of each FA.
        tx_power_dbm: per-BS transmit power budget P.
        noise_dbm: receiver noise power sigma^2.
        rate_weights: omega_ik, one weight per (cell, UE).
        ue_distance_range: (min, max) UE-to-BS distance in meters.
        ref_distance_m: path-loss reference distance d0.
        ref_pathloss_db: path loss at d0.
        pathloss_db_per_decade: decay slope (dB per distance decade).
    """

    num_cells: int = 2
    ues_per_cell: Tuple[int, ...] = (4, 4)
    fas_per_bs: int = 4
    ports_per_fa: int = 6
    fa_length_wavelengths: float = 0.5
    tx_power_dbm: float = 3.0
    noise_dbm: float = -90.0
    rate_weights: Tuple[Tuple[float, ...], ...] = ((1.0,) * 4, (1.0,) * 4)
    ue_distance_range: Tuple[float, float] = (20.0, 30.0)
    ref_distance_m: float = 1.0
    ref_pathloss_db: float = -30.0
    pathloss_db_per_decade: float = 25.0

    def __post_init__(self):
        if self.num_cells < 1:
            raise ConfigError(f"num_cells must be >= 1, got {self.num_cells}")
        if len(self.ues_per_cell) != self.num_cells:
            raise ConfigError(
                f"ues_per_cell has {len(self.ues_per_cell)} entries for "
                f"{self.num_cells} cells")
        if any(k < 1 for k in self.ues_per_cell):
            raise ConfigError(f"every cell needs >= 1 UE, got {self.ues_per_cell}")
        if self.fas_per_bs < 1:
            raise ConfigError(f"fas_per_bs must be >= 1, got {self.fas_per_bs}")
        if self.ports_per_fa < 1:
            raise ConfigError(f"ports_per_fa must be >= 1, got {self.ports_per_fa}")
        if self.fa_length_wavelengths <= 0:
            raise ConfigError(
                f"fa_length_wavelengths must be > 0, got {self.fa_length_wavelengths}")
        if len(self.rate_weights) != self.num_cells or any(
                len(wi) != ki for wi, ki in zip(self.rate_weights, self.ues_per_cell)):
            raise ConfigError("rate_weights must have one entry per (cell, UE)")
        flat = [w for wi in self.rate_weights for w in wi]
        if any(w < 0 for w in flat):
            raise ConfigError("rate_weights must be non-negative")
        if not any(w > 0 for w in flat):
            raise ConfigError("at least one rate weight must be positive")
        lo, hi = self.ue_distance_range
        if not (0 < lo <= hi):
            raise ConfigError(f"bad ue_distance_range {self.ue_distance_range}")
        if self.ref_distance_m <= 0:
            raise ConfigError(f"ref_distance_m must be > 0, got {self.ref_distance_m}")

    @property
    def tx_power_mw(self):
        return float(dbm_to_mw(self.tx_power_dbm))

    @property
    def noise_mw(self):
        return float(dbm_to_mw(self.noise_dbm))

    @property
    def total_ues(self):
        return int(sum(self.ues_per_cell))


def default_config(**overrides):
    """Baseline scenario (2 cells, 4 UEs each, N=4, L=6, W=0.5, P=3 dBm,
    sigma^2=-90 dBm, unit weights, UEs 20-30 m out) with keyword overrides.

    `ues_per_cell` may be given as a single int, and `rate_weights` as a
    single float; both are broadcast to every cell / UE.
    """
    base = dict(
        num_cells=2, ues_per_cell=(4, 4), fas_per_bs=4, ports_per_fa=6,
        fa_length_wavelengths=0.5, tx_power_dbm=3.0, noise_dbm=-90.0,
        rate_weights=None, ue_distance_range=(20.0, 30.0),
        ref_distance_m=1.0, ref_pathloss_db=-30.0, pathloss_db_per_decade=25.0,
    )
    base.update(overrides)
    num_cells = int(base["num_cells"])
    k = base["ues_per_cell"]
    if isinstance(k, (int, np.integer)):
        k = (int(k),) * num_cells
    else:
        k = tuple(int(x) for x in k)
    base["num_cells"] = num_cells
    base["ues_per_cell"] = k
    w = base["rate_weights"]
    if w is None:
        w = 1.0
    if isinstance(w, (int, float, np.floating)):
        w = tuple((float(w),) * ki for ki in k)
    else:
        w = tuple(tuple(float(x) for x in wi) for wi in w)
    base["rate_weights"] = w
    base["ue_distance_range"] = tuple(float(x) for x in base["ue_distance_range"])
    return NetworkConfig(**base)

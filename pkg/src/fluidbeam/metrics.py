"""Rates, weighted sum rate, and power accounting.

Inner products follow <h, w> = h^H w (channel conjugated).  All powers are
linear milliwatts here; dBm never appears below the config boundary.
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .channel import EffectiveChannels
from .config import NetworkConfig
from .errors import ShapeError

# Per-BS budget check allows this much relative slack over P.
POWER_REL_TOL = 1e-9


@dataclass(frozen=True)
class BeamformingSet:
    """Per-cell beamformers: w[i][k, :] is the N-vector for UE k of cell i.

    `fallback_cells` records cells where a zero-forcing solve was replaced by
    the regularized fallback (rank deficiency or K > N).
    """

    w: Tuple[np.ndarray, ...]
    fallback_cells: Tuple[int, ...] = field(default=())


@dataclass(frozen=True)
class RateReport:
    """Per-UE rates (bits/s/Hz), their weighted sum, and per-BS radiated power."""

    per_ue_rate: Tuple[np.ndarray, ...]
    per_ue_sinr: Tuple[np.ndarray, ...]
    wsr: float
    per_bs_power_mw: np.ndarray


@dataclass(frozen=True)
class PowerCheck:
    per_bs_power_mw: np.ndarray
    budget_mw: float
    within_budget: np.ndarray  # bool per BS

    @property
    def all_ok(self):
        return bool(np.all(self.within_budget))


def _check_pair(h: EffectiveChannels, w: BeamformingSet, cfg: NetworkConfig):
    if len(h.h) != cfg.num_cells or len(w.w) != cfg.num_cells:
        raise ShapeError("channel/beam cell counts do not match the config")
    for i, (hi, wi, ki) in enumerate(zip(h.h, w.w, cfg.ues_per_cell)):
        if hi.shape != (ki, cfg.num_cells, cfg.fas_per_bs):
            raise ShapeError(f"cell {i}: channel block is {hi.shape}, expected "
                             f"{(ki, cfg.num_cells, cfg.fas_per_bs)}")
        if wi.shape != (ki, cfg.fas_per_bs):
            raise ShapeError(f"cell {i}: beam block is {wi.shape}, expected "
                             f"{(ki, cfg.fas_per_bs)}")


def compute_rates(h: EffectiveChannels, w: BeamformingSet, cfg: NetworkConfig):
    """SINR and log2(1 + SINR) for every UE under the given beams.

    SINR_ik = |<h_iki, w_ik>|^2 / (sum over all other streams of
    |<h_ikj, w_jr>|^2 + noise).  Interference sums over both cells' own other
    UEs and every other cell's UEs.
    """
    _check_pair(h, w, cfg)
    noise = cfg.noise_mw
    # gains[i][j][k, r] = |h_ikj^H w_jr|^2
    rates, sinrs = [], []
    gain_rows = []
    for i in range(cfg.num_cells):
        row = [np.abs(np.conj(h.h[i][:, j, :]) @ w.w[j].T) ** 2
               for j in range(cfg.num_cells)]
        gain_rows.append(np.concatenate(row, axis=1))  # (K_i, K_tot)
    offsets = np.cumsum([0] + [k for k in cfg.ues_per_cell])
    for i in range(cfg.num_cells):
        block = gain_rows[i]
        own = np.arange(cfg.ues_per_cell[i]) + offsets[i]
        signal = block[np.arange(block.shape[0]), own]
        interference = block.sum(axis=1) - signal
        sinr = signal / (interference + noise)
        sinrs.append(sinr)
        rates.append(np.log2(1.0 + sinr))
    wsr = float(sum(np.dot(np.asarray(cfg.rate_weights[i]), rates[i])
                    for i in range(cfg.num_cells)))
    power = np.array([float(np.sum(np.abs(wi) ** 2)) for wi in w.w])
    return RateReport(per_ue_rate=tuple(rates), per_ue_sinr=tuple(sinrs),
                      wsr=wsr, per_bs_power_mw=power)


def check_power(w: BeamformingSet, cfg: NetworkConfig):
    """Per-BS sum power against the budget P * (1 + 1e-9)."""
    budget = cfg.tx_power_mw
    power = np.array([float(np.sum(np.abs(wi) ** 2)) for wi in w.w])
    return PowerCheck(per_bs_power_mw=power, budget_mw=budget,
                      within_budget=power <= budget * (1.0 + POWER_REL_TOL))

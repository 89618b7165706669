"""Shared helpers for the test suite: tiny configs, synthetic channel blocks,
and a central-difference gradient checker."""

import numpy as np
import pytest

from fluidbeam.channel import EffectiveChannels
from fluidbeam.config import default_config
from fluidbeam.seeds import make_rng


def tiny_cfg(**overrides):
    """Small but non-trivial scenario: 2 cells, 2 UEs, 2 FAs, 3 ports."""
    base = dict(num_cells=2, ues_per_cell=2, fas_per_bs=2, ports_per_fa=3,
                noise_dbm=-90.0, tx_power_dbm=3.0)
    base.update(overrides)
    return default_config(**base)


def make_eff(cfg, seed):
    """Synthetic EffectiveChannels with unit-scale complex entries.

    Bypasses the channel sampler so metric/baseline tests do not depend on
    it; magnitudes are O(1), which keeps conditioning boring.
    """
    rng = make_rng(seed)
    blocks = []
    for k in cfg.ues_per_cell:
        shape = (k, cfg.num_cells, cfg.fas_per_bs)
        blocks.append(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return EffectiveChannels(h=tuple(blocks))


def numeric_grad(fn, arr, eps=1e-6):
    """Central finite differences of the scalar fn() with respect to `arr`,
    mutating `arr` in place entry by entry."""
    grad = np.zeros_like(arr)
    flat = arr.ravel()
    gflat = grad.ravel()
    for idx in range(flat.size):
        saved = flat[idx]
        flat[idx] = saved + eps
        fp = fn()
        flat[idx] = saved - eps
        fm = fn()
        flat[idx] = saved
        gflat[idx] = (fp - fm) / (2.0 * eps)
    return grad


@pytest.fixture
def rng():
    return make_rng(20240817)

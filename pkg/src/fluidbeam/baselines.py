"""Classical per-cell linear precoders: MRT, ZF, MMSE.

Each BS uses only its own serving-cell channels, so all three are local
(per-cell) maps.  Solves go through numpy.linalg on matrices no larger than
K x N; rank deficiency is detected against the tolerance
1e-12 * max|H| before inverting.
"""

import numpy as np

from .channel import EffectiveChannels
from .config import NetworkConfig
from .metrics import BeamformingSet

_RANK_TOL = 1e-12


def _stacked(h: EffectiveChannels, cell):
    """Rows h_ik,i^H: the matrix whose pseudo-inverse nulls <h, w> cross terms."""
    return np.conj(h.serving(cell))


def mrt(h: EffectiveChannels, cfg: NetworkConfig):
    """Maximum ratio transmission: w_ik along h_ik,i with equal power split.

    A UE with a zero channel gets a zero beam and its power share is
    redistributed over the remaining UEs of that cell.
    """
    beams = []
    p = cfg.tx_power_mw
    for i in range(cfg.num_cells):
        hk = h.serving(i)
        norms = np.linalg.norm(hk, axis=1)
        active = norms > 0
        w = np.zeros_like(hk)
        if np.any(active):
            per_ue = p / int(active.sum())
            w[active] = np.sqrt(per_ue) * hk[active] / norms[active, None]
        beams.append(w)
    return BeamformingSet(w=tuple(beams))


def zf(h: EffectiveChannels, cfg: NetworkConfig):
    """Zero forcing: columns of H^H (H H^H)^(-1), each scaled to power P/K.

    Cells where H is rank deficient or has more UEs than antennas fall back
    to the MMSE solution for that cell and are listed in `fallback_cells`.
    """
    mmse_set = None
    beams = []
    fallbacks = []
    p = cfg.tx_power_mw
    for i in range(cfg.num_cells):
        hmat = _stacked(h, i)  # (K, N)
        k, n = hmat.shape
        tol = _RANK_TOL * max(np.abs(hmat).max(), 1e-300)
        if k > n or np.linalg.matrix_rank(hmat, tol=tol) < k:
            if mmse_set is None:
                mmse_set = mmse(h, cfg)
            beams.append(mmse_set.w[i])
            fallbacks.append(i)
            continue
        gram = hmat @ hmat.conj().T
        w_un = hmat.conj().T @ np.linalg.solve(gram, np.eye(k, dtype=complex))
        cols = np.linalg.norm(w_un, axis=0)
        w = (w_un * (np.sqrt(p / k) / cols)[None, :]).T  # rows per UE
        beams.append(w)
    return BeamformingSet(w=tuple(beams), fallback_cells=tuple(fallbacks))


def mmse(h: EffectiveChannels, cfg: NetworkConfig):
    """Regularized ZF: W = (H^H H + (K sigma^2 / P) I)^(-1) H^H, then one
    per-BS rescale so the cell radiates exactly P.  With zero noise the
    regularizer vanishes, so delegate to ZF outright."""
    if cfg.noise_mw == 0.0:
        return zf(h, cfg)
    beams = []
    p = cfg.tx_power_mw
    for i in range(cfg.num_cells):
        hmat = _stacked(h, i)
        k, n = hmat.shape
        a = hmat.conj().T @ hmat + (k * cfg.noise_mw / p) * np.eye(n, dtype=complex)
        w_un = np.linalg.solve(a, hmat.conj().T)  # (N, K)
        total = np.sum(np.abs(w_un) ** 2)
        scale = np.sqrt(p / total) if total > 0 else 0.0
        beams.append((w_un * scale).T)
    return BeamformingSet(w=tuple(beams))

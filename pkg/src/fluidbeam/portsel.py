"""Port selection strategies: random trials and exhaustive search.

A solver is any callable EffectiveChannels -> BeamformingSet; selections are
scored by the weighted sum rate the solver's beams achieve.  Random trials
draw selections from one seeded stream, so trial i is the same regardless of
how many trials follow it: best-of-T results are non-decreasing in T for a
fixed seed, and best-of-1 is exactly the single-trial outcome.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .channel import ChannelTensor, PortSelection, select_ports
from .config import NetworkConfig
from .errors import SearchCapError
from .metrics import compute_rates
from .seeds import make_rng

EXHAUSTIVE_CAP = 1_000_000


@dataclass(frozen=True)
class SelectionOutcome:
    """Winning selection with its beams and score.

    trial_index is the 0-based index of the winning trial (enumeration index
    for exhaustive search); ties keep the earliest trial.
    """

    selection: PortSelection
    wsr: float
    beams: object
    trial_index: int


def evaluate_selection(tensor: ChannelTensor, selection: PortSelection,
                       solver, cfg: NetworkConfig):
    """Score one selection: gather ports, solve beams, compute WSR."""
    h_eff = select_ports(tensor, selection)
    beams = solver(h_eff)
    report = compute_rates(h_eff, beams, cfg)
    return beams, report.wsr


def _draw(rng, cfg):
    return PortSelection(ports=rng.integers(
        0, cfg.ports_per_fa, size=(cfg.num_cells, cfg.fas_per_bs)))


def rps_single(tensor: ChannelTensor, solver, cfg: NetworkConfig, seed):
    """One random port selection."""
    return rps_best_of(tensor, solver, cfg, trials=1, seed=seed)


def rps_best_of(tensor: ChannelTensor, solver, cfg: NetworkConfig, trials, seed):
    """Best of `trials` random selections; duplicates are drawn as they come
    (sampling with replacement keeps the prefix property exact)."""
    if trials < 1:
        raise SearchCapError(f"trials must be >= 1, got {trials}")
    rng = make_rng(seed)
    best = None
    for t in range(trials):
        selection = _draw(rng, cfg)
        beams, wsr = evaluate_selection(tensor, selection, solver, cfg)
        if best is None or wsr > best.wsr:
            best = SelectionOutcome(selection=selection, wsr=wsr, beams=beams,
                                    trial_index=t)
    return best


def exhaustive(tensor: ChannelTensor, solver, cfg: NetworkConfig,
               cap=EXHAUSTIVE_CAP):
    """Enumerate every port assignment in lexicographic (row-major) order.

    The search space has L^(num_bs * N) points; anything over `cap` is
    refused with the count in the error.  Ties keep the lexicographically
    smallest selection (strict-improvement scan in enumeration order).
    """
    slots = cfg.num_cells * cfg.fas_per_bs
    count = cfg.ports_per_fa ** slots
    if count > cap:
        raise SearchCapError(
            f"exhaustive search over {count} selections exceeds cap {cap}")
    best = None
    for t, combo in enumerate(itertools.product(range(cfg.ports_per_fa), repeat=slots)):
        selection = PortSelection(ports=np.array(combo, dtype=int).reshape(
            cfg.num_cells, cfg.fas_per_bs))
        beams, wsr = evaluate_selection(tensor, selection, solver, cfg)
        if best is None or wsr > best.wsr:
            best = SelectionOutcome(selection=selection, wsr=wsr, beams=beams,
                                    trial_index=t)
    return best

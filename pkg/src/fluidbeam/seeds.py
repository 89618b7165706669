"""Deterministic derivation of named sub-seeds from one master seed.

Every stochastic stage (channel draws, weight init, port selection trials,
eval sets) gets its own 63-bit seed derived as

    seed = int.from_bytes(sha256(b"<master>:<label>")[:8], "big") >> 1

so runs are reproducible from a single integer and adding a new stage never
shifts the streams of existing ones.  All randomness then flows through
``numpy.random.Generator(PCG64(seed))``; PCG64 is pinned explicitly because
reproducibility across platforms requires pinning the bit generator, not
trusting the platform default.
"""

import hashlib

import numpy as np


def derive_seed(master_seed, label):
    """Return the sub-seed for `label` under `master_seed`."""
    digest = hashlib.sha256(f"{int(master_seed)}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def make_rng(seed):
    """The package-wide RNG construction: PCG64 pinned."""
    return np.random.Generator(np.random.PCG64(int(seed)))

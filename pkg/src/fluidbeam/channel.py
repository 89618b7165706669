"""Spatially correlated fluid-antenna channels.

The L ports of one fluid antenna see correlated Rayleigh fading with a
Jakes-type kernel: corr[l, l'] = J0(2*pi*W*|l - l'| / (L - 1)), where J0 is
the zero-order Bessel function of the first kind and W is the aperture in
wavelengths.  Port vectors are synthesized from the eigendecomposition
corr = Q diag(lam) Q^T as

    h = delta_amp * Q diag(sqrt(lam)) z,      z ~ CN(0, I_L),

which reproduces E[h h^H] = delta_lin * corr exactly.  The path-loss factor
delta is applied at sampling time, so the stored correlation has a unit
diagonal.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .config import NetworkConfig
from .errors import ConfigError, FluidbeamError, InputError, SelectionError, ShapeError
from .seeds import make_rng

# Eigenvalues of the correlation matrix are clamped to zero when they sit in
# [-EIG_CLAMP_TOL, 0); anything more negative means the kernel itself is broken.
EIG_CLAMP_TOL = 1e-9
_JACOBI_OFFDIAG_TOL = 1e-12
_SERIES_CUTOFF = 12.0


def bessel_j0(x):
    """Zero-order Bessel function of the first kind, |error| < 1e-10.

    Ascending series sum_m (-1)^m (x/2)^(2m) / (m!)^2 for |x| <= 12, where
    cancellation is still far below the target accuracy.  Beyond that the
    series loses digits to its large alternating terms, so the integral form
    J0(x) = (1/n) sum_k cos(x sin(pi (k + 1/2) / n)) takes over; the midpoint
    rule converges spectrally for this periodic integrand.
    """
    x = abs(float(x))
    if x <= _SERIES_CUTOFF:
        q = 0.25 * x * x
        term = 1.0
        total = 1.0
        m = 0
        while abs(term) > 1e-18 * abs(total) + 1e-300:
            m += 1
            term *= -q / (m * m)
            total += term
            if m > 200:
                break
        return total
    n = max(64, int(x) + 32)
    k = np.arange(n)
    return float(np.mean(np.cos(x * np.sin(math.pi * (k + 0.5) / n))))


def jacobi_eigh(a, offdiag_tol=_JACOBI_OFFDIAG_TOL, max_sweeps=100):
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Sweeps zero each off-diagonal entry in turn until the off-diagonal
    Frobenius norm drops below `offdiag_tol`.  Returns (eigvals, eigvecs)
    with eigenvalues sorted descending and eigvecs[:, i] the matching column.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"jacobi_eigh needs a square matrix, got {a.shape}")
    if not np.allclose(a, a.T, atol=1e-12):
        raise InputError("jacobi_eigh needs a symmetric matrix")
    n = a.shape[0]
    v = np.eye(n)
    strict_off = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        # measured directly from the off-diagonal entries; the subtraction
        # form sum(a*a) - sum(diag^2) hits a cancellation floor around 1e-8
        # and can never report convergence at this tolerance
        off = math.sqrt(np.sum(a[strict_off] ** 2))
        if off < offdiag_tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < offdiag_tol / (n * n):
                    continue
                # classic 2x2 rotation, numerically stable t formula
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q
    else:
        raise FluidbeamError("jacobi_eigh did not converge")
    eigvals = np.diag(a).copy()
    order = np.argsort(eigvals)[::-1]
    return eigvals[order], v[:, order]


@dataclass(frozen=True)
class CorrelationFactors:
    """Unit-diagonal port correlation with its eigenfactors.

    corr = eigvecs @ diag(eigvals) @ eigvecs.T; eigvals are clamped
    non-negative so sqrt() is always safe.
    """

    corr: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray

    @property
    def num_ports(self):
        return self.corr.shape[0]

    def shaping_matrix(self):
        """Q diag(sqrt(lam)): maps CN(0, I) vectors onto the port correlation."""
        return self.eigvecs * np.sqrt(self.eigvals)[None, :]


def build_correlation(num_ports, aperture_wavelengths):
    """Jakes correlation factors for `num_ports` ports over an aperture of
    `aperture_wavelengths`.  A single port degenerates to the identity."""
    if num_ports < 1:
        raise ConfigError(f"num_ports must be >= 1, got {num_ports}")
    if aperture_wavelengths <= 0:
        raise ConfigError(f"aperture must be positive, got {aperture_wavelengths}")
    if num_ports == 1:
        one = np.ones((1, 1))
        return CorrelationFactors(corr=one, eigvecs=np.eye(1), eigvals=np.ones(1))
    ell = np.arange(num_ports)
    gaps = np.abs(ell[:, None] - ell[None, :]) / (num_ports - 1)
    corr = np.empty((num_ports, num_ports))
    for i in range(num_ports):
        for j in range(i, num_ports):
            corr[i, j] = corr[j, i] = bessel_j0(
                2.0 * math.pi * aperture_wavelengths * gaps[i, j])
    eigvals, eigvecs = jacobi_eigh(corr)
    if np.any(eigvals < -EIG_CLAMP_TOL):
        raise FluidbeamError(
            f"correlation kernel produced eigenvalue {eigvals.min():.3e} < -{EIG_CLAMP_TOL}")
    eigvals = np.where(eigvals < 0.0, 0.0, eigvals)
    return CorrelationFactors(corr=corr, eigvecs=eigvecs, eigvals=eigvals)


def pathloss_db(distance_m, cfg: NetworkConfig):
    """Large-scale loss in dB at `distance_m` (must be > 0)."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise InputError(f"distances must be positive, got min {d.min()}")
    return cfg.ref_pathloss_db - cfg.pathloss_db_per_decade * np.log10(
        d / cfg.ref_distance_m)


@dataclass(frozen=True)
class ChannelTensor:
    """All port-resolved channels of one network realization.

    coeffs[i][k, j, n, l]: complex gain from FA n, port l of BS j to UE k of
    cell i.  distances[i][k, j] is the matching UE-to-BS distance in meters.
    """

    coeffs: Tuple[np.ndarray, ...]
    distances: Tuple[np.ndarray, ...]
    seed: int


@dataclass(frozen=True)
class PortSelection:
    """One port index per (BS, FA): ports[j, n] in [0, L)."""

    ports: np.ndarray

    def key(self):
        """Hashable lexicographic identity (row-major tuple)."""
        return tuple(int(p) for p in self.ports.ravel())


@dataclass(frozen=True)
class EffectiveChannels:
    """Channels after port selection: h[i][k, j, :] is the N-vector from BS j
    to UE k of cell i."""

    h: Tuple[np.ndarray, ...]

    def serving(self, cell):
        return self.h[cell][:, cell, :]


def _sample_with_rng(cfg, factors, rng, seed_tag):
    """Draw one ChannelTensor from an existing generator.

    Draw order is fixed and documented: per cell, first the K_i x I distance
    block, then the real parts of all fading innovations, then the imaginary
    parts.  Changing this order changes every stream, so it is frozen.
    """
    if factors.num_ports != cfg.ports_per_fa:
        raise ShapeError(
            f"correlation has {factors.num_ports} ports, config wants {cfg.ports_per_fa}")
    shaping_t = factors.shaping_matrix().T  # (L, L); right-multiplied below
    num_bs, n_fas, n_ports = cfg.num_cells, cfg.fas_per_bs, cfg.ports_per_fa
    lo, hi = cfg.ue_distance_range
    coeffs = []
    distances = []
    for k_i in cfg.ues_per_cell:
        dist = rng.uniform(lo, hi, size=(k_i, num_bs))
        shape = (k_i, num_bs, n_fas, n_ports)
        z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
        amp = 10.0 ** (pathloss_db(dist, cfg) / 20.0)
        coeffs.append(amp[:, :, None, None] * (z @ shaping_t))
        distances.append(dist)
    return ChannelTensor(coeffs=tuple(coeffs), distances=tuple(distances), seed=seed_tag)


def sample_channels(cfg: NetworkConfig, factors: CorrelationFactors, seed):
    """One seeded network realization: distances then correlated fading."""
    return _sample_with_rng(cfg, factors, make_rng(seed), int(seed))


def random_selection(cfg: NetworkConfig, rng):
    """Uniform i.i.d. port per (BS, FA)."""
    return PortSelection(ports=rng.integers(
        0, cfg.ports_per_fa, size=(cfg.num_cells, cfg.fas_per_bs)))


def select_ports(tensor: ChannelTensor, selection: PortSelection,
                 cfg: NetworkConfig = None):
    """Gather each FA's selected port out of the full tensor."""
    num_cells = len(tensor.coeffs)
    ports = np.asarray(selection.ports)
    first = tensor.coeffs[0]
    if ports.shape != (num_cells, first.shape[2]):
        raise SelectionError(
            f"selection shape {ports.shape} does not match "
            f"({num_cells}, {first.shape[2]}) BS/FA grid")
    n_ports = first.shape[3]
    if ports.dtype.kind not in "iu" or ports.min() < 0 or ports.max() >= n_ports:
        raise SelectionError(f"port indices must lie in [0, {n_ports})")
    out = []
    for block in tensor.coeffs:
        idx = np.broadcast_to(ports[None, :, :, None],
                              (block.shape[0], num_cells, block.shape[2], 1))
        out.append(np.take_along_axis(block, idx, axis=3)[..., 0])
    return EffectiveChannels(h=tuple(out))

"""Channel model: Bessel kernel, eigendecomposition, sampling statistics."""

import math

import numpy as np
import pytest

from conftest import tiny_cfg

from fluidbeam import channel as ch
from fluidbeam.config import default_config
from fluidbeam.errors import ConfigError, InputError, SelectionError, ShapeError
from fluidbeam.seeds import make_rng


# ---------------------------------------------------------------------------
# bessel_j0
# ---------------------------------------------------------------------------

def _j0_series(x, terms=40):
    """Independent ascending-series oracle, adequate for |x| <= 6."""
    total = 0.0
    for m in range(terms):
        total += (-1) ** m * (x / 2.0) ** (2 * m) / math.factorial(m) ** 2
    return total


def test_j0_matches_series_oracle_small_x():
    for x in np.linspace(0.0, 6.0, 61):
        assert abs(ch.bessel_j0(x) - _j0_series(float(x))) < 1e-12


def test_j0_frozen_values():
    # series-oracle values, frozen
    assert abs(ch.bessel_j0(math.pi) - (-0.30424217764409384)) < 1e-12
    assert abs(ch.bessel_j0(math.pi / 5.0) - 0.9037126420924663) < 1e-12
    assert ch.bessel_j0(0.0) == 1.0


def test_j0_even_function():
    for x in (0.3, 2.0, 9.5, 20.0):
        assert ch.bessel_j0(-x) == ch.bessel_j0(x)


def test_j0_large_x_against_dense_quadrature():
    # independent oracle: same integral form but with a very fine grid
    for x in (12.5, 15.0, 30.0, 75.0):
        k = np.arange(200_000)
        ref = np.mean(np.cos(x * np.sin(math.pi * (k + 0.5) / 200_000)))
        assert abs(ch.bessel_j0(x) - ref) < 1e-10


def test_j0_continuous_at_series_integral_handoff():
    lo, hi = 12.0 - 1e-9, 12.0 + 1e-9
    assert abs(ch.bessel_j0(lo) - ch.bessel_j0(hi)) < 1e-9


# ---------------------------------------------------------------------------
# jacobi_eigh
# ---------------------------------------------------------------------------

def test_jacobi_matches_numpy_eigh():
    rng = make_rng(101)
    for n in (2, 3, 5, 8):
        for _ in range(5):
            m = rng.standard_normal((n, n))
            a = (m + m.T) / 2.0
            vals, vecs = ch.jacobi_eigh(a)
            ref = np.sort(np.linalg.eigvalsh(a))[::-1]
            assert np.allclose(vals, ref, atol=1e-10)
            assert np.allclose(vecs @ np.diag(vals) @ vecs.T, a, atol=1e-10)
            assert np.allclose(vecs.T @ vecs, np.eye(n), atol=1e-10)


def test_jacobi_sorts_descending_and_keeps_pairing():
    a = np.diag([1.0, 5.0, -2.0])
    vals, vecs = ch.jacobi_eigh(a)
    assert np.allclose(vals, [5.0, 1.0, -2.0])
    # eigenvector for 5.0 is +-e1
    assert abs(abs(vecs[1, 0]) - 1.0) < 1e-12


def test_jacobi_rejects_non_symmetric_and_non_square():
    with pytest.raises(InputError):
        ch.jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ShapeError):
        ch.jacobi_eigh(np.zeros((2, 3)))


# ---------------------------------------------------------------------------
# build_correlation
# ---------------------------------------------------------------------------

def test_correlation_structure():
    f = ch.build_correlation(6, 0.5)
    assert np.allclose(np.diag(f.corr), 1.0)
    assert np.allclose(f.corr, f.corr.T)
    # adjacent ports: J0(2*pi*0.5/5); extremes: J0(pi)
    assert abs(f.corr[0, 1] - ch.bessel_j0(math.pi / 5.0)) < 1e-14
    assert abs(f.corr[0, 5] - ch.bessel_j0(math.pi)) < 1e-14
    assert np.all(f.eigvals >= 0.0)
    recon = f.eigvecs @ np.diag(f.eigvals) @ f.eigvecs.T
    assert np.allclose(recon, f.corr, atol=1e-10)


def test_correlation_shaping_reproduces_kernel():
    f = ch.build_correlation(8, 0.5)
    s = f.shaping_matrix()
    assert np.allclose(s @ s.T, f.corr, atol=1e-10)


def test_correlation_single_port_identity():
    f = ch.build_correlation(1, 0.5)
    assert f.corr.shape == (1, 1) and f.corr[0, 0] == 1.0


def test_correlation_validation():
    with pytest.raises(ConfigError):
        ch.build_correlation(0, 0.5)
    with pytest.raises(ConfigError):
        ch.build_correlation(4, 0.0)


# ---------------------------------------------------------------------------
# path loss
# ---------------------------------------------------------------------------

def test_pathloss_reference_values():
    cfg = default_config()
    assert abs(ch.pathloss_db(1.0, cfg) - (-30.0)) < 1e-12
    # -30 - 25*log10(20), frozen
    assert abs(ch.pathloss_db(20.0, cfg) - (-62.52574989159953)) < 1e-11
    with pytest.raises(InputError):
        ch.pathloss_db(0.0, cfg)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def test_sample_channels_deterministic():
    cfg = tiny_cfg()
    f = ch.build_correlation(cfg.ports_per_fa, cfg.fa_length_wavelengths)
    a = ch.sample_channels(cfg, f, 42)
    b = ch.sample_channels(cfg, f, 42)
    c = ch.sample_channels(cfg, f, 43)
    for xa, xb in zip(a.coeffs, b.coeffs):
        assert np.array_equal(xa, xb)
    assert not np.array_equal(a.coeffs[0], c.coeffs[0])
    assert a.seed == 42


def test_sample_channels_draw_order_contract():
    """Reconstruct the documented draw order (per cell: distances, then real,
    then imaginary innovations) straight from the generator and compare."""
    cfg = tiny_cfg()
    f = ch.build_correlation(cfg.ports_per_fa, cfg.fa_length_wavelengths)
    got = ch.sample_channels(cfg, f, 7)
    rng = make_rng(7)
    shaping_t = f.shaping_matrix().T
    for i, k_i in enumerate(cfg.ues_per_cell):
        dist = rng.uniform(20.0, 30.0, size=(k_i, cfg.num_cells))
        shape = (k_i, cfg.num_cells, cfg.fas_per_bs, cfg.ports_per_fa)
        z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
        amp = 10.0 ** (ch.pathloss_db(dist, cfg) / 20.0)
        expect = amp[:, :, None, None] * (z @ shaping_t)
        assert np.array_equal(got.distances[i], dist)
        assert np.array_equal(got.coeffs[i], expect)


def test_sample_shapes_and_distance_range():
    cfg = tiny_cfg(ues_per_cell=(2, 3))
    f = ch.build_correlation(cfg.ports_per_fa, cfg.fa_length_wavelengths)
    t = ch.sample_channels(cfg, f, 0)
    assert t.coeffs[0].shape == (2, 2, 2, 3)
    assert t.coeffs[1].shape == (3, 2, 2, 3)
    for d in t.distances:
        assert np.all((d >= 20.0) & (d <= 30.0))


def test_port_covariance_and_fa_independence():
    """Moderate-size Monte Carlo: port covariance tracks the kernel, distinct
    FAs decorrelate.  The tight 1e5-draw version lives in the acceptance
    suite."""
    cfg = default_config(num_cells=1, ues_per_cell=1, fas_per_bs=2,
                         ports_per_fa=4, ue_distance_range=(25.0, 25.0))
    f = ch.build_correlation(cfg.ports_per_fa, cfg.fa_length_wavelengths)
    rng = make_rng(55)
    draws = 20_000
    acc = np.zeros((4, 4), dtype=complex)
    cross = 0.0
    for _ in range(draws):
        t = ch._sample_with_rng(cfg, f, rng, seed_tag=-1)
        v0 = t.coeffs[0][0, 0, 0, :]
        v1 = t.coeffs[0][0, 0, 1, :]
        acc += np.outer(v0, np.conj(v0))
        cross += (v0[0] * np.conj(v1[0])).real
    delta_lin = 10.0 ** (ch.pathloss_db(25.0, cfg) / 10.0)
    emp = (acc / draws).real / delta_lin
    assert np.max(np.abs(emp - f.corr)) < 0.05
    assert abs(cross / draws) / delta_lin < 0.05


# ---------------------------------------------------------------------------
# port selection plumbing
# ---------------------------------------------------------------------------

def test_random_selection_bounds():
    cfg = tiny_cfg()
    rng = make_rng(3)
    for _ in range(50):
        sel = ch.random_selection(cfg, rng)
        assert sel.ports.shape == (cfg.num_cells, cfg.fas_per_bs)
        assert sel.ports.min() >= 0 and sel.ports.max() < cfg.ports_per_fa


def test_select_ports_gathers_expected_entries():
    cfg = tiny_cfg()
    f = ch.build_correlation(cfg.ports_per_fa, cfg.fa_length_wavelengths)
    t = ch.sample_channels(cfg, f, 9)
    sel = ch.PortSelection(ports=np.array([[0, 2], [1, 1]]))
    eff = ch.select_ports(t, sel)
    for i in range(cfg.num_cells):
        for k in range(cfg.ues_per_cell[i]):
            for j in range(cfg.num_cells):
                for n in range(cfg.fas_per_bs):
                    assert eff.h[i][k, j, n] == t.coeffs[i][k, j, n, sel.ports[j, n]]


def test_select_ports_validation():
    cfg = tiny_cfg()
    f = ch.build_correlation(cfg.ports_per_fa, cfg.fa_length_wavelengths)
    t = ch.sample_channels(cfg, f, 9)
    with pytest.raises(SelectionError):
        ch.select_ports(t, ch.PortSelection(ports=np.zeros((1, 2), dtype=int)))
    with pytest.raises(SelectionError):
        ch.select_ports(t, ch.PortSelection(ports=np.array([[0, 3], [0, 0]])))
    with pytest.raises(SelectionError):
        ch.select_ports(t, ch.PortSelection(ports=np.array([[0, -1], [0, 0]])))


def test_selection_key_is_row_major():
    sel = ch.PortSelection(ports=np.array([[0, 2], [1, 1]]))
    assert sel.key() == (0, 2, 1, 1)


def test_effective_serving_block():
    cfg = tiny_cfg()
    f = ch.build_correlation(cfg.ports_per_fa, cfg.fa_length_wavelengths)
    t = ch.sample_channels(cfg, f, 11)
    sel = ch.PortSelection(ports=np.zeros((2, 2), dtype=int))
    eff = ch.select_ports(t, sel)
    assert np.array_equal(eff.serving(1), eff.h[1][:, 1, :])

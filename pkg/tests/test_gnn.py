"""Graph network forward pass, batching, model files, and a small
end-to-end training run."""

import math
import struct
import zlib

import numpy as np
import pytest

from conftest import tiny_cfg

from fluidbeam import gnn
from fluidbeam.baselines import mrt
from fluidbeam.channel import build_correlation, sample_channels, select_ports
from fluidbeam.config import NetworkConfig, default_config
from fluidbeam.errors import ConfigError, InputError, ModelIOError, ShapeError
from fluidbeam.metrics import compute_rates
from fluidbeam.portsel import PortSelection
from fluidbeam.seeds import make_rng

DIMS = gnn.GnnDims(num_fas=2, wide=16, narrow=8)


def _params(seed=5, cell=0, dims=DIMS):
    return gnn.init_gnn_params(dims, cell, seed)


def _features(k, seed=1, dims=DIMS):
    return make_rng(seed).standard_normal((k, dims.in_dim))


def test_forward_shape_and_power():
    p = _params()
    for k in (1, 2, 3, 5):
        out = gnn.gnn_forward(p, _features(k, seed=k), 2.0)
        assert out.shape == (k, DIMS.in_dim)
        assert abs(np.sum(out ** 2) - 2.0) < 1e-9 * 2.0


def test_forward_rejects_bad_features():
    p = _params()
    with pytest.raises(ShapeError):
        gnn.gnn_forward(p, np.zeros((2, DIMS.in_dim + 1)), 1.0)
    with pytest.raises(ShapeError):
        gnn.gnn_forward(p, np.zeros((0, DIMS.in_dim)), 1.0)
    with pytest.raises(ShapeError):
        gnn.gnn_forward(p, np.zeros(DIMS.in_dim), 1.0)


def test_single_ue_pools_zero_vector():
    """With one UE the neighbor max-pool has nothing to pool and must feed a
    zero vector into the concat stages, so the weight rows that multiply the
    pooled half cannot influence the output."""
    dims = gnn.GnnDims(num_fas=2, wide=32, narrow=16)
    p = _params(seed=1, dims=dims)
    x = _features(1, seed=1, dims=dims)
    base = gnn.gnn_forward(p, x, 1.0)

    arrays = {k: v.copy() for k, v in p.arrays.items()}
    n = dims.narrow
    noise = make_rng(99)
    arrays["mlp2.0.w"][n:, :] += noise.standard_normal((n, n))
    arrays["mlp4.0.w"][n:, :] += noise.standard_normal((n, n))
    mangled = gnn.GnnParams(cell_index=0, dims=dims, arrays=arrays)
    assert np.array_equal(gnn.gnn_forward(mangled, x, 1.0), base)

    # with two UEs the pooled half is live and the same edit must matter
    x2 = _features(2, seed=1, dims=dims)
    assert not np.allclose(gnn.gnn_forward(mangled, x2, 1.0),
                           gnn.gnn_forward(p, x2, 1.0))


def test_permutation_equivariance():
    p = _params(seed=2)
    x = _features(4, seed=8)
    perm = np.array([2, 0, 3, 1])
    out = gnn.gnn_forward(p, x, 3.0)
    out_perm = gnn.gnn_forward(p, x[perm], 3.0)
    np.testing.assert_allclose(out_perm, out[perm], rtol=0, atol=1e-9)


def test_batched_matches_sequential():
    p = _params(seed=4)
    for batch in (1, 2, 4, 8):
        inputs = [_features(2 + (i % 3), seed=100 + i) for i in range(batch)]
        together = gnn.gnn_forward_batched(p, inputs, 1.5)
        single = [gnn.gnn_forward(p, x, 1.5) for x in inputs]
        assert len(together) == batch
        for got, want in zip(together, single):
            assert np.max(np.abs(got - want)) < 1e-9


def test_batch_of_one_is_bit_identical():
    p = _params(seed=6)
    x = _features(3, seed=31)
    assert np.array_equal(gnn.gnn_forward_batched(p, [x], 2.0)[0],
                          gnn.gnn_forward(p, x, 2.0))


def test_batched_rejects_empty():
    with pytest.raises(InputError):
        gnn.gnn_forward_batched(_params(), [], 1.0)


def test_batch_order_permutes_with_inputs():
    p = _params(seed=7)
    inputs = [_features(2, seed=50 + i) for i in range(4)]
    fwd = gnn.gnn_forward_batched(p, inputs, 1.0)
    rev = gnn.gnn_forward_batched(p, inputs[::-1], 1.0)
    for got, want in zip(rev, fwd[::-1]):
        assert np.max(np.abs(got - want)) < 1e-9


def test_init_determinism_and_xavier_bounds():
    a = _params(seed=11)
    b = _params(seed=11)
    c = _params(seed=12)
    for name, arr in a.arrays.items():
        assert np.array_equal(arr, b.arrays[name])
    assert any(not np.array_equal(arr, c.arrays[n]) for n, arr in a.arrays.items())
    for name, din, dout in DIMS.layer_specs():
        w = a.arrays[name + ".w"]
        bound = math.sqrt(6.0 / (din + dout))
        assert w.shape == (din, dout)
        assert np.max(np.abs(w)) <= bound
        assert np.std(w) > 0.1 * bound
        assert np.array_equal(a.arrays[name + ".b"], np.zeros(dout))


def test_param_count():
    assert DIMS.param_count() == 956
    assert gnn.GnnDims.paper(4).param_count() == 3_163_656
    total = sum(a.size for a in (dict(_params().ordered_arrays())).values())
    assert total == 956


def test_feature_gain_value_and_formula():
    cfg = default_config()
    gain = gnn.feature_gain(cfg)
    assert abs(gain - 1723.235097804087) < 1e-9
    lo, hi = cfg.ue_distance_range
    mid = math.sqrt(lo * hi)
    loss_db = cfg.ref_pathloss_db - cfg.pathloss_db_per_decade * math.log10(mid)
    assert abs(gain - 10.0 ** (-loss_db / 20.0)) < 1e-12
    # closer links mean less loss to undo
    near = gnn.feature_gain(default_config(ue_distance_range=(2.0, 3.0)))
    assert near < gain


def test_features_from_effective_layout():
    cfg = tiny_cfg()
    factors = build_correlation(cfg.ports_per_fa, cfg.fa_length_wavelengths)
    tensor = sample_channels(cfg, factors, seed=77)
    sel = PortSelection(tuple(tuple(0 for _ in range(cfg.fas_per_bs))
                              for _ in range(cfg.num_cells)))
    eff = select_ports(tensor, sel, cfg)
    n = cfg.fas_per_bs
    for i in range(cfg.num_cells):
        feats = gnn.features_from_effective(eff, i)
        serving = eff.serving(i)
        assert feats.shape == (cfg.ues_per_cell[i], 2 * n)
        assert np.array_equal(feats[:, :n], serving.real)
        assert np.array_equal(feats[:, n:], serving.imag)


def _repack(arrays, version=gnn._FORMAT_VERSION, cell=0, count=None,
            drop_tail=0, extra=b""):
    """Write a model file from raw pieces so each integrity check can be hit
    in isolation."""
    chunks = [struct.pack("<HHH", version, cell,
                          len(arrays) if count is None else count)]
    for arr in arrays:
        mat = np.atleast_2d(np.asarray(arr, dtype="<f8"))
        chunks.append(struct.pack("<II", mat.shape[0], mat.shape[1]))
        chunks.append(mat.tobytes(order="C"))
    payload = b"".join(chunks) + extra
    if drop_tail:
        payload = payload[:-drop_tail]
    return gnn._MAGIC + payload + struct.pack("<I", zlib.crc32(payload))


def test_model_file_round_trip(tmp_path):
    p = _params(seed=21, cell=3)
    path = tmp_path / "m.fbgn"
    gnn.save_params(p, path)

    size = path.stat().st_size
    n_arrays = 2 * len(DIMS.layer_specs())
    assert size == 4 + 6 + n_arrays * 8 + DIMS.param_count() * 8 + 4

    back = gnn.load_params(path)
    assert back.cell_index == 3
    assert back.dims == DIMS
    for name, arr in p.arrays.items():
        assert np.array_equal(arr, back.arrays[name])


def test_model_file_rejects_corruption(tmp_path):
    p = _params(seed=22)
    path = tmp_path / "m.fbgn"
    gnn.save_params(p, path)
    blob = path.read_bytes()
    arrays = [np.atleast_2d(a) for _, a in p.ordered_arrays()]

    def expect_failure(data, needle):
        bad = tmp_path / "bad.fbgn"
        bad.write_bytes(data)
        with pytest.raises(ModelIOError, match=needle):
            gnn.load_params(bad)

    expect_failure(b"FB", "too short")
    expect_failure(b"XXGN" + blob[4:], "magic")
    flipped = bytearray(blob)
    flipped[40] ^= 0xFF
    expect_failure(bytes(flipped), "CRC32")
    expect_failure(_repack(arrays, version=2), "version")
    expect_failure(_repack(arrays, drop_tail=8), "truncated")
    expect_failure(_repack(arrays, extra=b"\x00" * 4), "trailing")
    expect_failure(_repack(arrays[:3], count=3), "pairs")
    swapped = arrays[:-2] + [arrays[-1], arrays[-2]]
    expect_failure(_repack(swapped), "fc")


def test_train_rejects_mismatched_dims():
    cfg = tiny_cfg()  # num_fas=2
    with pytest.raises(ConfigError):
        gnn.train(cfg, gnn.GnnDims(num_fas=3, wide=8, narrow=4),
                  gnn.TrainSpec(epochs=1, samples_per_epoch=4, batch_size=2,
                                eval_samples=2, seed=0))


def test_training_beats_matched_filter():
    """Single cell, two UEs sharing two antennas: the matched filter ignores
    the cross-stream interference, so even a briefly trained model should
    clear it by a wide margin."""
    cfg = NetworkConfig(num_cells=1, ues_per_cell=(2,), fas_per_bs=2,
                        ports_per_fa=1, fa_length_wavelengths=0.5,
                        tx_power_dbm=3.0, noise_dbm=-90.0,
                        rate_weights=((1.0, 1.0),))
    spec = gnn.TrainSpec(epochs=60, samples_per_epoch=200, batch_size=50,
                         eval_samples=100, seed=3)
    params_list, history = gnn.train(cfg, DIMS, spec)
    assert len(params_list) == 1
    assert len(history) == spec.epochs
    final = history[-1].eval_wsr

    factors = build_correlation(cfg.ports_per_fa, cfg.fa_length_wavelengths)
    sel = PortSelection(((0, 0),))
    wsrs = []
    for d in range(200):
        tensor = sample_channels(cfg, factors, seed=9000 + d)
        eff = select_ports(tensor, sel, cfg)
        beams = mrt(eff, cfg)
        wsrs.append(compute_rates(eff, beams, cfg).wsr)
    mrt_mean = float(np.mean(wsrs))
    assert final > 1.3 * mrt_mean, (final, mrt_mean)
    # and training moved the needle relative to its own start
    assert final > history[0].eval_wsr

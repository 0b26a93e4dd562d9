import struct

import numpy as np
import pytest

from pnpsolve.cnn import (
    MAGIC,
    CnnDenoiser,
    CnnModel,
    ConvLayer,
    WeightsFormatError,
    infer,
    layer_table,
    load_model,
    model_from_bytes,
    model_to_bytes,
    random_model,
    save_model,
)


def loop_infer(m, x):
    a = np.asarray(x, dtype=np.float64)
    for layer in m.layers:
        w = layer.weights.astype(np.float64)
        cout, cin = w.shape[:2]
        _, h, wd = a.shape
        out = np.zeros((cout, h, wd))
        for o in range(cout):
            for i in range(h):
                for j in range(wd):
                    s = float(layer.bias[o])
                    for c in range(cin):
                        for p in range(3):
                            for q in range(3):
                                ii, jj = i + p - 1, j + q - 1
                                if 0 <= ii < h and 0 <= jj < wd:
                                    s += w[o, c, p, q] * a[c, ii, jj]
                    out[o, i, j] = max(s, 0.0) if layer.relu else s
        a = out
    return x - a if m.residual else a


def zero_model(channels=1, width=4):
    layers = [
        ConvLayer(np.zeros((width, channels, 3, 3)), np.zeros(width), True),
        ConvLayer(np.zeros((channels, width, 3, 3)), np.zeros(channels), False),
    ]
    return CnnModel(layers, True, channels)


def test_zero_residual_model_is_identity(rng):
    x = rng.standard_normal((3, 7, 5))
    y = infer(zero_model(3), x)
    assert np.array_equal(y, x)


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("residual", [True, False])
def test_random_model_matches_loop_oracle(seed, residual):
    m = random_model(input_channels=2, widths=(3, 4), residual=residual, scale=0.5, seed=seed)
    x = np.random.default_rng(seed + 10).standard_normal((2, 5, 6))
    np.testing.assert_allclose(infer(m, x), loop_infer(m, x), atol=1e-10)


def test_round_trip_is_byte_identical(tmp_path):
    m = random_model(3, (5,), seed=2)
    data = model_to_bytes(m)
    assert model_to_bytes(model_from_bytes(data)) == data
    save_model(m, tmp_path / "m.pnpw")
    assert (tmp_path / "m.pnpw").read_bytes() == data
    m2 = load_model(tmp_path / "m.pnpw")
    for a, b in zip(m.layers, m2.layers):
        assert np.array_equal(a.weights, b.weights) and a.relu == b.relu


def test_header_layout():
    data = model_to_bytes(zero_model(1, 2))
    assert data[:4] == MAGIC
    assert struct.unpack("<IIBI", data[4:17]) == (1, 1, 1, 2)
    assert struct.unpack("<IIB", data[17:26]) == (1, 2, 1)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: b"XXXX" + d[4:],
        lambda d: d[:4] + struct.pack("<I", 9) + d[8:],
        lambda d: d[:-1],
        lambda d: d + b"\x00",
        lambda d: d[:12] + b"\x07" + d[13:],
    ],
    ids=["magic", "version", "truncated", "trailing", "flag"],
)
def test_malformed_weights(mutate):
    data = model_to_bytes(zero_model())
    with pytest.raises(WeightsFormatError):
        model_from_bytes(mutate(data))


def test_model_validation():
    with pytest.raises(WeightsFormatError):
        CnnModel([], True, 1)
    with pytest.raises(WeightsFormatError):  # broken channel chain
        CnnModel([ConvLayer(np.zeros((2, 1, 3, 3)), np.zeros(2), False)], True, 1)
    with pytest.raises(WeightsFormatError):  # relu on the last layer
        CnnModel([ConvLayer(np.zeros((1, 1, 3, 3)), np.zeros(1), True)], True, 1)
    with pytest.raises(WeightsFormatError):
        ConvLayer(np.zeros((1, 1, 5, 5)), np.zeros(1))


def test_denoiser_wrapper_and_table():
    m = random_model(1, (4, 4), seed=0)
    g = CnnDenoiser(m)
    with pytest.raises(ValueError):
        g(np.zeros((3, 4, 4)))
    assert g(np.zeros((1, 4, 4))).shape == (1, 4, 4)
    table = layer_table(m)
    assert "layers 3" in table and "total parameters" in table

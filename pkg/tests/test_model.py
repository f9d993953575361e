import numpy as np
import pytest
from hypothesis import given, strategies as st

from ctf_mnmf.model import (
    ConfigError,
    CtfConfig,
    NmfFactors,
    compute_psd,
    delayed_psd,
    flatten_index,
    init_demixing,
    read_config_file,
    row_layout,
    shift_frames,
    unflatten_index,
)


def test_default_config_is_valid():
    cfg = CtfConfig()
    assert cfg.taps == [2, 2]
    assert cfg.bases == [3, 3]
    assert cfg.n_rows == cfg.n_channels == 4


def test_non_square_config_names_the_constraint():
    with pytest.raises(ConfigError, match="square"):
        CtfConfig(n_sources=2, n_channels=4, taps=[2, 3])


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(taps=[2]),
        dict(bases=[3, 3, 3]),
        dict(taps=[0, 4]),
        dict(update_rule="newton"),
        dict(psd_floor=0.0),
        dict(iterations=-1),
        dict(n_sources=0, taps=[], bases=[]),
    ],
)
def test_invalid_configs(kwargs):
    with pytest.raises(ConfigError):
        CtfConfig(**kwargs)


def test_config_file_round_trip(tmp_path):
    cfg = CtfConfig(n_sources=3, n_channels=6, taps=[3, 2, 1], bases=[4, 2, 5],
                    iterations=7, update_rule="ip", psd_floor=1e-8, seed=11)
    path = tmp_path / "run.cfg"
    path.write_text("# comment line\n" + cfg.to_text() + "window = 512  # ignored by the model\n")
    values = read_config_file(path)
    assert values["window"] == "512"
    assert CtfConfig.from_mapping(values) == cfg


def test_from_mapping_layers_over_base():
    base = CtfConfig(iterations=5, seed=3)
    cfg = CtfConfig.from_mapping({"rule": "IP", "seed": None}, base)
    assert cfg.update_rule == "ip"
    assert cfg.iterations == 5 and cfg.seed == 3


def test_malformed_config_file(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("taps 2 2\n")
    with pytest.raises(ConfigError, match="bad.cfg:1"):
        read_config_file(path)
    with pytest.raises(ConfigError):
        CtfConfig.from_mapping({"iters": "many"})


def test_flatten_examples():
    taps = [2, 3]
    assert flatten_index(0, 0, taps) == 0
    assert flatten_index(1, 2, taps) == 4
    with pytest.raises(IndexError):
        flatten_index(0, 2, taps)
    with pytest.raises(IndexError):
        flatten_index(2, 0, taps)
    with pytest.raises(IndexError):
        unflatten_index(5, taps)


@given(st.lists(st.integers(1, 5), min_size=1, max_size=5))
def test_flatten_unflatten_bijection(taps):
    seen = []
    for n, t in enumerate(taps):
        for l in range(t):
            r = flatten_index(n, l, taps)
            assert unflatten_index(r, taps) == (n, l)
            seen.append(r)
    assert sorted(seen) == list(range(sum(taps)))
    sources, lags = row_layout(taps)
    assert [unflatten_index(r, taps) for r in range(sum(taps))] == list(zip(sources, lags))


def test_shift_frames_clamps_to_first_frame():
    a = np.arange(10.0).reshape(2, 5)
    out = shift_frames(a, 2)
    np.testing.assert_array_equal(out[0], [0, 0, 0, 1, 2])
    np.testing.assert_array_equal(out[1], [5, 5, 5, 6, 7])
    assert shift_frames(a, 0) is a
    for j in range(5):
        np.testing.assert_array_equal(out[:, j], delayed_psd(a, j, 2))


def test_shift_longer_than_signal():
    a = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(shift_frames(a, 3), [[0, 0, 0], [3, 3, 3]])
    np.testing.assert_array_equal(shift_frames(a, 7), [[0, 0, 0], [3, 3, 3]])


def test_psd_floor_applies():
    f = NmfFactors([np.zeros((3, 1))], [np.ones((1, 4))], floor=1e-6)
    assert np.all(compute_psd(f, 0) == 1e-6)


def test_init_demixing_is_identity():
    W = init_demixing(3, 4)
    assert W.shape == (3, 4, 4) and W.dtype == np.complex128
    np.testing.assert_array_equal(W[2], np.eye(4))

import dataclasses
import math
import warnings

import numpy as np
import pytest

from qlsed.radar import (
    IQFormat,
    IQFrame,
    OPERATING_SIGMA2,
    RadarParams,
    estimate_noise_variance,
    load_iq,
    load_params,
    range_profile,
    synthetic_frames,
    write_iq,
)

P = RadarParams()


def _noise(rng, n, var):
    return math.sqrt(var / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def test_default_params():
    assert P.bandwidth_hz == pytest.approx(P.slope_hz_per_s * P.sweep_s, rel=1e-3)
    assert P.range_resolution == pytest.approx(0.1953, abs=1e-4)


def test_range_map():
    assert P.omega_to_range(0.0) == 0.0
    assert P.omega_to_range(2 * math.pi - 0.01) == pytest.approx(P.omega_to_range(-0.01))
    assert P.omega_to_range(-0.01) < 0
    w = np.linspace(-3.0, 3.0, 7)
    np.testing.assert_allclose(P.range_to_omega(P.omega_to_range(w)), w, rtol=1e-15)
    fast = dataclasses.replace(P, slope_hz_per_s=2 * P.slope_hz_per_s, bandwidth_hz=2 * P.bandwidth_hz)
    assert fast.omega_to_range(1.0) == pytest.approx(P.omega_to_range(1.0) / 2, rel=1e-14)
    # one DFT bin maps to one range-resolution cell
    assert P.omega_to_range(2 * math.pi / P.samples) == pytest.approx(P.range_resolution)


@pytest.mark.parametrize("change", [
    {"slope_hz_per_s": 0.0},
    {"slope_hz_per_s": -1e12},
    {"sample_rate_hz": 1e6},  # 256 samples no longer fit in the sweep
    {"bandwidth_hz": 1e9},
    {"samples": 0},
])
def test_params_validation(change):
    with pytest.raises(ValueError):
        dataclasses.replace(P, **change)


def test_load_params(tmp_path):
    p = tmp_path / "radar.toml"
    p.write_text("samples = 128\n")
    assert load_params(p).samples == 128
    p.write_text("speed = 1\n")
    with pytest.raises(ValueError):
        load_params(p)


def test_format_parse():
    fmt = IQFormat.parse("dtype=int16,order=qi,n=128,channels=2,layout=sample")
    assert (fmt.width, fmt.order, fmt.frame_length, fmt.channels, fmt.layout) == (2, "qi", 128, 2, "sample")
    assert IQFormat.parse("width=int32").width == 4
    for bad in ("order=xy", "layout=tile", "colour=red", "dtype"):
        with pytest.raises((ValueError, TypeError)):
            IQFormat.parse(bad)


def test_four_frames_from_1024_pairs(tmp_path, rng):
    path = tmp_path / "cap.bin"
    words = rng.integers(-500, 500, 2048).astype("<i2")
    path.write_bytes(words.tobytes())
    frames = load_iq(path, IQFormat())
    assert len(frames) == 4
    assert [f.frame_index for f in frames] == [0, 1, 2, 3]
    assert all(f.n == 256 for f in frames)
    np.testing.assert_array_equal(frames[1].samples.real, words[512:1024:2])
    np.testing.assert_array_equal(frames[1].samples.imag, words[513:1024:2])


def test_qi_order(tmp_path):
    path = tmp_path / "cap.bin"
    path.write_bytes(np.arange(64, dtype="<i2").tobytes())
    z = load_iq(path, IQFormat(order="qi", frame_length=32))[0].samples
    assert z[0] == 1 + 0j and z[1] == 3 + 2j


def test_wrong_width_raises(tmp_path):
    path = tmp_path / "cap.bin"
    path.write_bytes(b"\x00" * 6)  # three int16 words: not whole I/Q pairs
    with pytest.raises(ValueError):
        load_iq(path, IQFormat(frame_length=1))
    with pytest.raises(ValueError):
        load_iq(path, IQFormat(dtype="<i4", frame_length=1))


def test_sidecar_mismatch_raises(tmp_path, rng):
    path = tmp_path / "cap.bin"
    write_iq(path, [_noise(rng, 256, 100.0)], IQFormat())
    with pytest.raises(ValueError):
        # the byte count alone would parse as int32 with 128 samples
        load_iq(path, IQFormat(dtype="<i4", frame_length=128))


def test_partial_frame_warns(tmp_path):
    path = tmp_path / "cap.bin"
    path.write_bytes(np.zeros(2 * 256 + 20, dtype="<i2").tobytes())
    with pytest.warns(UserWarning):
        frames = load_iq(path, IQFormat())
    assert len(frames) == 1


@pytest.mark.parametrize("layout", ["frame", "sample"])
def test_round_trip_bit_exact(tmp_path, rng, layout):
    fmt = IQFormat(frame_length=64, channels=3, layout=layout)
    data = [rng.integers(-2000, 2000, (3, 64)) + 1j * rng.integers(-2000, 2000, (3, 64))
            for _ in range(2)]
    path = tmp_path / "cap.bin"
    write_iq(path, data, fmt)
    frames = load_iq(path, fmt)
    assert [(f.frame_index, f.channel) for f in frames] == [(f, c) for f in range(2) for c in range(3)]
    for f in frames:
        np.testing.assert_array_equal(f.samples, data[f.frame_index][f.channel])
    raw = path.read_bytes()
    write_iq(path, frames, fmt)
    assert path.read_bytes() == raw


def test_write_clips_to_word_range(tmp_path):
    path = tmp_path / "cap.bin"
    write_iq(path, [np.full(4, 1e6 - 1e6j)], IQFormat(frame_length=4))
    z = load_iq(path, IQFormat(frame_length=4))[0].samples
    assert z[0] == 32767 - 32768j


def test_frame_validation():
    with pytest.raises(ValueError):
        IQFrame(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        IQFrame(np.array([1.0, np.nan]))
    f = IQFrame(np.ones(4))
    with pytest.raises(ValueError):
        f.samples[0] = 2


def test_noise_estimator_operating_point():
    rng = np.random.default_rng(2024)
    est = np.array([estimate_noise_variance(_noise(rng, 256, OPERATING_SIGMA2)) for _ in range(1000)])
    assert abs(est.mean() / OPERATING_SIGMA2 - 1) < 0.02
    assert np.mean((est > 212) & (est < 288)) >= 0.85


def test_noise_estimator_ignores_on_grid_tones():
    rng = np.random.default_rng(8)
    n = np.arange(256)
    tones = 300 * np.exp(2j * math.pi * 45 * n / 256) + 80j * np.exp(2j * math.pi * 100 * n / 256)
    est = [estimate_noise_variance(_noise(rng, 256, OPERATING_SIGMA2) + tones) for _ in range(300)]
    assert np.mean(est) == pytest.approx(OPERATING_SIGMA2, rel=0.03)


def test_noise_estimator_off_grid_bias_is_upward():
    # rectangular-window sidelobes of an off-grid tone lift every bin
    rng = np.random.default_rng(9)
    tone = 40 * np.exp(0.7j * np.arange(256))
    est = [estimate_noise_variance(_noise(rng, 256, OPERATING_SIGMA2) + tone) for _ in range(300)]
    assert OPERATING_SIGMA2 < np.mean(est) < 1.5 * OPERATING_SIGMA2


def test_noise_estimator_scale_equivariant(rng):
    z = _noise(rng, 128, 4.0)
    assert estimate_noise_variance(3 * z) == pytest.approx(9 * estimate_noise_variance(z), rel=1e-12)


def test_noise_estimator_errors():
    with pytest.raises(ValueError):
        estimate_noise_variance(np.zeros(64))
    with pytest.raises(ValueError):
        estimate_noise_variance(np.ones(16))


@pytest.mark.parametrize("bits", [1, 2, 3, math.inf])
def test_synthetic_targets_recovered(bits):
    ranges = [4.88, 3.05]
    frames = synthetic_frames(P, ranges, [40.0, 25.0 * 1j], OPERATING_SIGMA2, n_frames=2,
                              rng=np.random.default_rng(5), leakage=35.0)
    dets = range_profile(frames, P, bits, full_scale=60.0)
    for fi in range(2):
        found = [d.range_m for d in dets if d.frame_index == fi]
        for r in ranges:
            assert min(abs(np.array(found) - r)) < P.range_resolution
        assert min(abs(np.array(found))) < P.range_resolution  # leakage near zero range
        assert found == sorted(found)


def test_range_profile_does_not_mutate(rng):
    z = synthetic_frames(P, [4.0], [40.0], OPERATING_SIGMA2, rng=rng)[0]
    before = z.copy()
    range_profile([z], P, math.inf, sigma2=OPERATING_SIGMA2)
    np.testing.assert_array_equal(z, before)


def test_range_profile_type_check():
    with pytest.raises(TypeError):
        range_profile([], {"samples": 256})

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from flashflow import fourier
from oracles import brute_cutoff, brute_dft2d, brute_high_freq_magnitude

PERCENTILES = [round(0.05 * k, 2) for k in range(1, 20)]


def test_constant_frame_is_dc_only():
    spec = fourier.dft2d(torch.full((6, 8), 0.5, dtype=torch.float64))
    assert abs(spec[3, 4] - 0.5 * 48) < 1e-12
    spec[3, 4] = 0
    assert spec.abs().max() < 1e-12


def test_impulse_has_flat_magnitude():
    frame = torch.zeros(8, 8, dtype=torch.float64)
    frame[0, 0] = 1.0
    mag = fourier.magnitude_map(fourier.dft2d(frame))
    torch.testing.assert_close(mag, torch.ones(8, 8, dtype=torch.float64))


@pytest.mark.parametrize("shape", [(8, 8), (5, 6), (7, 4)])
def test_dft_matches_double_sum(shape):
    rng = np.random.default_rng(sum(shape))
    frame = rng.standard_normal(shape)
    got = fourier.dft2d(torch.from_numpy(frame)).numpy()
    want = brute_dft2d(frame)
    assert np.abs(got - want).max() <= 1e-6 * np.abs(want).max()


def test_inverse_roundtrip_and_parseval():
    frame = torch.randn(3, 8, 8, dtype=torch.float64)
    spec = fourier.dft2d(frame)
    back = fourier.idft2d(spec)
    assert (back.real - frame).abs().max() <= 1e-6
    assert back.imag.abs().max() <= 1e-6
    lhs = (spec.abs() ** 2).sum(dim=(-2, -1)) / 64
    rhs = (frame**2).sum(dim=(-2, -1))
    assert ((lhs - rhs).abs() / rhs).max() <= 1e-6


def test_magnitude_map_examples():
    spec = torch.tensor([[3 + 4j, -2 + 0j]], dtype=torch.complex128)
    torch.testing.assert_close(fourier.magnitude_map(spec), torch.tensor([[5.0, 2.0]], dtype=torch.float64))
    rng = np.random.default_rng(0)
    z = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    got = fourier.magnitude_map(torch.from_numpy(z)).numpy()
    assert np.abs(got - np.hypot(z.real, z.imag)).max() <= 1e-9


def test_cutoff_dc_only_and_full_energy():
    m = torch.zeros(8, 8, dtype=torch.float64)
    m[4, 4] = 3.0
    for p in (0.01, 0.5, 1.0):
        assert fourier.cutoff_frequency(m, p).item() == 0.0
    full = torch.rand(8, 8, dtype=torch.float64) + 0.1
    assert fourier.cutoff_frequency(full, 1.0).item() == pytest.approx(fourier.radius_grid(8, 8).max().item())


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
def test_cutoff_matches_radius_scan(seed, p):
    m = np.random.default_rng(seed).random((8, 8))
    assert fourier.cutoff_frequency(torch.from_numpy(m), p).item() == pytest.approx(brute_cutoff(m, p))


def test_cutoff_rejects_bad_input():
    with pytest.raises(ValueError):
        fourier.cutoff_frequency(torch.zeros(4, 4), 0.5)
    with pytest.raises(ValueError):
        fourier.cutoff_frequency(torch.ones(4, 4), 0.0)
    with pytest.raises(ValueError):
        fourier.cutoff_frequency(torch.ones(4, 4), 1.5)


def test_masks():
    low, high = fourier.frequency_masks(8, 8, 0.0)
    assert low.sum() == 1 and low[4, 4] == 1
    torch.testing.assert_close(low + high, torch.ones(8, 8, dtype=torch.float64))
    _, high = fourier.frequency_masks(8, 8, 100.0)
    assert high.sum() == 0


def test_constant_frame_has_no_high_frequency():
    out = fourier.high_freq_magnitude(torch.full((2, 8, 8), -0.7, dtype=torch.float64), 0.5)
    assert out.abs().max() <= 1e-12


@pytest.mark.parametrize("seed", range(3))
def test_high_freq_matches_stagewise_oracle(seed):
    frame = np.random.default_rng(seed).standard_normal((8, 8))
    got = fourier.high_freq_magnitude(torch.from_numpy(frame), 0.5).numpy()
    assert np.abs(got - brute_high_freq_magnitude(frame, 0.5)).max() <= 1e-9


def test_high_freq_is_per_channel_and_preserves_shape():
    frames = torch.randn(4, 3, 8, 8, dtype=torch.float64)
    out = fourier.high_freq_magnitude(frames, 0.3)
    assert out.shape == frames.shape and out.min() >= 0
    torch.testing.assert_close(out[2, 1], fourier.high_freq_magnitude(frames[2, 1], 0.3))


def test_per_sample_percentiles_broadcast():
    frames = torch.randn(3, 2, 8, 8, dtype=torch.float64)
    p = torch.tensor([0.1, 0.5, 0.9], dtype=torch.float64)
    out = fourier.high_freq_magnitude(frames, p[:, None])
    for i in range(3):
        torch.testing.assert_close(out[i], fourier.high_freq_magnitude(frames[i], p[i].item()))


def test_float32_input_keeps_dtype():
    out = fourier.high_freq_magnitude(torch.randn(2, 8, 8), 0.2)
    assert out.dtype == torch.float32


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), p=st.sampled_from(PERCENTILES))
def test_exact_band_split(seed, p):
    frame = torch.from_numpy(np.random.default_rng(seed).standard_normal((3, 8, 8)))
    low, high = fourier.split_bands(frame, p)
    assert (low + high - frame).abs().max() <= 1e-6


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_monotone_in_percentile(seed):
    frame = torch.from_numpy(np.random.default_rng(seed).standard_normal((8, 8)))
    mag = fourier.magnitude_map(fourier.dft2d(frame))
    cutoffs = [fourier.cutoff_frequency(mag, p).item() for p in PERCENTILES]
    energies = [fourier.high_freq_magnitude(frame, p).norm().item() for p in PERCENTILES]
    assert all(a <= b for a, b in zip(cutoffs, cutoffs[1:]))
    assert all(a >= b - 1e-12 for a, b in zip(energies, energies[1:]))

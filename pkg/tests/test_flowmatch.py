import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from flashflow import flowmatch as fm


def pair(seed=0, shape=(2, 12, 4, 4, 4)):
    g = torch.Generator().manual_seed(seed)
    return (
        torch.randn(shape, generator=g, dtype=torch.float64),
        torch.randn(shape, generator=g, dtype=torch.float64),
    )


def test_interpolate_endpoints_exact():
    x, eps = pair()
    assert torch.equal(fm.interpolate(x, eps, 0.0), x)
    assert torch.equal(fm.interpolate(x, eps, 1.0), eps)


def test_interpolate_midpoint():
    x, eps = pair(1)
    assert (fm.interpolate(x, eps, 0.5) - (x + eps) / 2).abs().max() <= 1e-9


def test_interpolate_per_sample_time():
    x, eps = pair(2)
    t = torch.tensor([0.25, 0.8], dtype=torch.float64)
    out = fm.interpolate(x, eps, t)
    for i in range(2):
        torch.testing.assert_close(out[i], fm.interpolate(x[i], eps[i], float(t[i])))


def test_velocity_target_examples():
    x, eps = pair(3)
    assert torch.equal(fm.velocity_target(x, x), torch.zeros_like(x))
    assert torch.equal(fm.velocity_target(torch.zeros_like(x), eps), eps)


@pytest.mark.parametrize("t", [0.1, 0.5, 0.93])
def test_velocity_is_time_derivative(t):
    x, eps = pair(4)
    h = 1e-4
    fd = (fm.interpolate(x, eps, t + h) - fm.interpolate(x, eps, t - h)) / (2 * h)
    assert (fd - fm.velocity_target(x, eps)).abs().max() <= 1e-6


def test_shifted_state_zero_shift_is_t2v_state():
    x, eps = pair(5)
    phi = torch.zeros(2, 12, 4, 4, dtype=torch.float64)
    assert torch.equal(fm.shifted_state(x, eps, 0.3, phi), fm.interpolate(x, eps, 0.3))


def test_shifted_state_start_and_broadcast():
    x, eps = pair(6)
    phi = torch.randn(2, 12, 4, 4, dtype=torch.float64)
    start = fm.shifted_state(x, eps, 1.0, phi)
    for k in range(x.shape[2]):
        torch.testing.assert_close(start[:, :, k], eps[:, :, k] - phi)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), t=st.floats(0.01, 0.99))
def test_shift_leaves_velocity_unchanged(seed, t):
    x, eps = pair(seed, (1, 4, 3, 2, 2))
    phi = 3.0 * torch.randn(1, 4, 2, 2, dtype=torch.float64)
    h = 1e-4
    fd = (fm.shifted_state(x, eps, t + h, phi) - fm.shifted_state(x, eps, t - h, phi)) / (2 * h)
    assert (fd - fm.velocity_target(x, eps)).abs().max() <= 1e-6


def test_mse_loss_examples():
    a = torch.randn(3, 4, dtype=torch.float64)
    assert fm.mse_loss(a, a).item() == 0.0
    assert fm.mse_loss(a + 1, a).item() == pytest.approx(1.0)
    b = torch.randn(3, 4, dtype=torch.float64)
    acc = 0.0
    for i in range(3):
        for j in range(4):
            acc += (float(a[i, j]) - float(b[i, j])) ** 2
    assert abs(fm.mse_loss(a, b).item() - acc / 12) <= 1e-9


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        fm.interpolate(torch.zeros(2), torch.zeros(3), 0.5)
    with pytest.raises(ValueError):
        fm.mse_loss(torch.zeros(2), torch.zeros(3))


def test_timestep_moments_and_determinism():
    t = fm.sample_timestep(torch.Generator().manual_seed(0), 100_000, dtype=torch.float64).numpy()
    assert t.min() >= 0 and t.max() <= 1
    assert abs(t.mean() - 0.5) <= 0.01
    again = fm.sample_timestep(torch.Generator().manual_seed(0), 100_000, dtype=torch.float64).numpy()
    np.testing.assert_array_equal(t, again)


def test_timestep_ks_uniform():
    t = fm.sample_timestep(torch.Generator().manual_seed(1), 10_000, dtype=torch.float64).numpy()
    critical = 1.628 / np.sqrt(len(t))  # asymptotic 1% critical value
    assert stats.kstest(t, "uniform").statistic < critical

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from flashflow.latents import Codec, mixing_matrix


def test_rearrangement_with_identity_mix():
    codec = Codec(1, seed=None)
    video = torch.tensor([[[[1.0, 2.0], [3.0, 4.0]]]])  # 1 x 1 x 2 x 2
    latent = codec.encode(video)
    assert latent.shape == (4, 1, 1, 1)
    assert latent.flatten().tolist() == [1.0, 2.0, 3.0, 4.0]


def test_identity_mix_roundtrip_bit_exact():
    codec = Codec(3, seed=None)
    video = torch.randn(3, 8, 16, 16)
    assert torch.equal(codec.decode(codec.encode(video)), video)


def test_orthonormal_roundtrip():
    codec = Codec(3)
    video = torch.randn(3, 8, 16, 16, dtype=torch.float64)
    assert (codec.decode(codec.encode(video)) - video).abs().max() <= 1e-6
    latent = torch.randn(12, 8, 8, 8, dtype=torch.float64)
    assert (codec.encode(codec.decode(latent)) - latent).abs().max() <= 1e-6


def test_zero_maps_to_zero():
    codec = Codec(3)
    assert torch.equal(codec.encode(torch.zeros(3, 2, 4, 4)), torch.zeros(12, 2, 2, 2))
    assert torch.equal(codec.decode(torch.zeros(12, 2, 2, 2)), torch.zeros(3, 2, 4, 4))


def test_mixing_matrix_orthonormal_and_seeded():
    q = mixing_matrix(3)
    assert torch.allclose(q @ q.T, torch.eye(12, dtype=torch.float64), atol=1e-12)
    assert torch.equal(q, mixing_matrix(3))
    assert not torch.equal(q, mixing_matrix(3, seed=99))


def test_batched_and_frame_encoding():
    codec = Codec(3)
    videos = torch.randn(2, 3, 5, 8, 8)
    latent = codec.encode(videos)
    assert latent.shape == (2, 12, 5, 4, 4)
    torch.testing.assert_close(latent[1], codec.encode(videos[1]))
    torch.testing.assert_close(codec.encode_frame(videos[:, :, 0]), latent[:, :, 0])


def test_odd_dims_and_bad_channels_rejected():
    codec = Codec(3)
    with pytest.raises(ValueError):
        codec.encode(torch.zeros(3, 1, 5, 4))
    with pytest.raises(ValueError):
        codec.encode(torch.zeros(2, 1, 4, 4))
    with pytest.raises(ValueError):
        codec.decode(torch.zeros(10, 1, 2, 2))


@settings(max_examples=30, deadline=None)
@given(
    a=st.floats(-3, 3),
    b=st.floats(-3, 3),
    seed=st.integers(0, 2**16),
)
def test_linearity_and_norm(a, b, seed):
    codec = Codec(2)
    g = torch.Generator().manual_seed(seed)
    v1 = torch.randn(2, 3, 4, 6, generator=g, dtype=torch.float64)
    v2 = torch.randn(2, 3, 4, 6, generator=g, dtype=torch.float64)
    lhs = codec.encode(a * v1 + b * v2)
    rhs = a * codec.encode(v1) + b * codec.encode(v2)
    assert (lhs - rhs).abs().max() <= 1e-6
    assert abs(codec.encode(v1).norm() - v1.norm()) <= 1e-6

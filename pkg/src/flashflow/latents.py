"""Exact invertible codec standing in for the VAE encoder/decoder.

``encode`` moves every 2x2 pixel block into channels (space-to-channel), then
mixes the ``4c`` channels with a fixed orthonormal matrix. ``decode`` applies
the transpose and the inverse rearrangement. Time is not compressed, so latent
frame ``k`` corresponds to pixel frame ``k``.
"""
from __future__ import annotations

import torch
from torch import Tensor

DEFAULT_MIX_SEED = 1234


def mixing_matrix(channels: int, seed: int | None = DEFAULT_MIX_SEED) -> Tensor:
    """Orthonormal ``4c x 4c`` matrix from the QR of a seeded Gaussian; ``seed=None`` gives identity."""
    n = 4 * channels
    if seed is None:
        return torch.eye(n, dtype=torch.float64)
    gen = torch.Generator().manual_seed(seed)
    a = torch.randn(n, n, generator=gen, dtype=torch.float64)
    q, r = torch.linalg.qr(a)
    # fix the sign ambiguity of QR so the matrix is unique for the seed
    return q * torch.sign(torch.diagonal(r))


class Codec:
    """Lossless latent codec for clips shaped ``(..., c, t, h, w)``."""

    def __init__(self, channels: int = 3, seed: int | None = DEFAULT_MIX_SEED):
        self.channels = channels
        self.latent_channels = 4 * channels
        self.matrix = mixing_matrix(channels, seed)
        self.identity = seed is None

    def encode(self, video: Tensor) -> Tensor:
        *lead, c, t, h, w = video.shape
        if c != self.channels:
            raise ValueError(f"codec expects {self.channels} channels, got {c}")
        if h % 2 or w % 2:
            raise ValueError(f"spatial dims must be even, got {h}x{w}")
        x = video.reshape(*lead, c, t, h // 2, 2, w // 2, 2)
        # (..., c, t, h', dy, w', dx) -> (..., c, dy, dx, t, h', w')
        nd = len(lead)
        x = x.permute(*range(nd), nd, nd + 3, nd + 5, nd + 1, nd + 2, nd + 4)
        x = x.reshape(*lead, 4 * c, t, h // 2, w // 2)
        return self._mix(x, self.matrix)

    def decode(self, latent: Tensor) -> Tensor:
        *lead, c4, t, hh, ww = latent.shape
        if c4 != self.latent_channels:
            raise ValueError(f"codec expects {self.latent_channels} latent channels, got {c4}")
        x = self._mix(latent, self.matrix.T)
        c = c4 // 4
        x = x.reshape(*lead, c, 2, 2, t, hh, ww)
        nd = len(lead)
        # (..., c, dy, dx, t, h', w') -> (..., c, t, h', dy, w', dx)
        x = x.permute(*range(nd), nd, nd + 3, nd + 4, nd + 1, nd + 5, nd + 2)
        return x.reshape(*lead, c, t, 2 * hh, 2 * ww)

    def encode_frame(self, image: Tensor) -> Tensor:
        """Encode a single ``(..., c, h, w)`` image to a ``(..., 4c, h/2, w/2)`` latent frame."""
        return self.encode(image.unsqueeze(-3)).squeeze(-3)

    def _mix(self, x: Tensor, matrix: Tensor) -> Tensor:
        if self.identity:
            return x
        m = matrix.to(dtype=x.dtype, device=x.device)
        return torch.einsum("ij,...jthw->...ithw", m, x)

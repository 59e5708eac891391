"""Radial frequency filtering of latent frames.

All functions act on the last two axes and broadcast over any leading axes
(batch, channel, frame). Spectra are centred: the DC bin sits at
``(H // 2, W // 2)``. The transform is the direct DFT written as two dense
matrix products, which is exact enough and fast at the sizes used here.
"""
from __future__ import annotations

from functools import lru_cache

import torch
from torch import Tensor

IMAG_TOL = 1e-6


@lru_cache(maxsize=32)
def _dft_matrix(n: int, inverse: bool = False) -> Tensor:
    k = torch.arange(n, dtype=torch.float64)
    angle = 2.0 * torch.pi * torch.outer(k, k) / n
    sign = 1.0 if inverse else -1.0
    return torch.polar(torch.ones_like(angle), sign * angle)


@lru_cache(maxsize=32)
def radius_grid(height: int, width: int) -> Tensor:
    """Distance of each centred-spectrum bin from the plane centre."""
    u = torch.arange(height, dtype=torch.float64) - height // 2
    v = torch.arange(width, dtype=torch.float64) - width // 2
    return torch.sqrt(u[:, None] ** 2 + v[None, :] ** 2)


def dft2d(frame: Tensor) -> Tensor:
    """Centred 2-D spectrum ``sum_{h,w} f(h,w) exp(-2 pi i (uh/H + vw/W))``."""
    h, w = frame.shape[-2:]
    f = frame.to(torch.complex128)
    spec = _dft_matrix(h) @ f @ _dft_matrix(w).T
    return torch.roll(spec, shifts=(h // 2, w // 2), dims=(-2, -1))


def idft2d(spectrum: Tensor) -> Tensor:
    """Inverse of :func:`dft2d`, normalised by ``1 / (H W)``; returns a complex tensor."""
    h, w = spectrum.shape[-2:]
    s = torch.roll(spectrum.to(torch.complex128), shifts=(-(h // 2), -(w // 2)), dims=(-2, -1))
    return _dft_matrix(h, inverse=True) @ s @ _dft_matrix(w, inverse=True).T / (h * w)


def magnitude_map(spectrum: Tensor) -> Tensor:
    return torch.sqrt(spectrum.real**2 + spectrum.imag**2)


def cutoff_frequency(magnitude: Tensor, p: float | Tensor) -> Tensor:
    """Smallest occurring radius whose enclosed share of total magnitude reaches ``p``.

    ``magnitude`` is ``(..., H, W)``; ``p`` is a scalar or broadcasts against the
    leading axes. Returns one radius per leading index.
    """
    p = torch.as_tensor(p, dtype=torch.float64)
    if torch.any(p <= 0) or torch.any(p > 1):
        raise ValueError("cutoff percentile must lie in (0, 1]")
    h, w = magnitude.shape[-2:]
    radii, ring = torch.unique(radius_grid(h, w).flatten(), return_inverse=True)
    m = magnitude.to(torch.float64).flatten(-2)
    ring_energy = torch.zeros(*m.shape[:-1], radii.numel(), dtype=torch.float64)
    ring_energy.index_add_(-1, ring, m)
    cumulative = torch.cumsum(ring_energy, dim=-1)
    total = cumulative[..., -1:]
    if torch.any(total <= 0):
        raise ValueError("magnitude map has zero total energy; percentile undefined")
    share = cumulative / total
    share[..., -1] = 1.0
    # share is nondecreasing, so counting entries below p gives the first index >= p
    index = (share < p.unsqueeze(-1)).sum(dim=-1)
    return radii[index]


def frequency_masks(height: int, width: int, cutoff: float | Tensor) -> tuple[Tensor, Tensor]:
    """Binary low/high masks; low is the closed disc ``r <= cutoff`` so DC is always low."""
    cutoff = torch.as_tensor(cutoff, dtype=torch.float64)
    if torch.any(cutoff < 0):
        raise ValueError("cutoff must be >= 0")
    r = radius_grid(height, width)
    low = (r <= cutoff[..., None, None]).to(torch.float64)
    return low, 1.0 - low


def _real_part(x: Tensor) -> Tensor:
    scale = max(1.0, float(x.real.abs().max())) if x.numel() else 1.0
    residue = float(x.imag.abs().max()) if x.numel() else 0.0
    if residue > IMAG_TOL * scale:
        raise AssertionError(f"imaginary residue {residue:.3e} after masked inverse transform")
    return x.real


def split_bands(frame: Tensor, p: float | Tensor) -> tuple[Tensor, Tensor]:
    """Low- and high-pass spatial components of ``frame``; they sum back to ``frame``."""
    h, w = frame.shape[-2:]
    spectrum = dft2d(frame)
    cutoff = cutoff_frequency(magnitude_map(spectrum), p)
    low, high = frequency_masks(h, w, cutoff)
    return _real_part(idft2d(spectrum * low)), _real_part(idft2d(spectrum * high))


def high_freq_magnitude(latent_frame: Tensor, p: float | Tensor) -> Tensor:
    """Absolute value of the high-pass component of each channel of ``latent_frame``.

    Phase is discarded on purpose: only the local strength of edges survives.
    Output has the input's shape and dtype and is nonnegative.
    """
    _, high = split_bands(latent_frame, p)
    return high.abs().to(latent_frame.dtype)

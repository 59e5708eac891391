"""Straight-path flow matching with latent shifting.

Latents are ``(..., C, T, H, W)``. A per-sample time ``t`` may be a float or a
tensor over the leading batch axes. The shift ``phi_s`` has the shape of one
latent frame ``(..., C, H, W)`` and is subtracted from every frame.
"""
from __future__ import annotations

import torch
from torch import Tensor


def _expand_time(t: float | Tensor, like: Tensor) -> float | Tensor:
    if not isinstance(t, Tensor) or t.ndim == 0:
        return t
    return t.reshape(*t.shape, *([1] * (like.ndim - t.ndim))).to(like.dtype)


def interpolate(x: Tensor, eps: Tensor, t: float | Tensor) -> Tensor:
    """``(1 - t) x + t eps``: data at ``t = 0``, noise at ``t = 1``."""
    if x.shape != eps.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(eps.shape)}")
    t = _expand_time(t, x)
    return (1 - t) * x + t * eps


def velocity_target(x: Tensor, eps: Tensor) -> Tensor:
    if x.shape != eps.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(eps.shape)}")
    return eps - x


def broadcast_shift(phi_s: Tensor) -> Tensor:
    """View a single-frame shift ``(..., C, H, W)`` as ``(..., C, 1, H, W)``."""
    return phi_s.unsqueeze(-3)


def shifted_state(x: Tensor, eps: Tensor, t: float | Tensor, phi_s: Tensor) -> Tensor:
    """Noisy state with the conditional shift removed from every frame."""
    return interpolate(x, eps, t) - broadcast_shift(phi_s)


def mse_loss(pred_v: Tensor, target_v: Tensor) -> Tensor:
    if pred_v.shape != target_v.shape:
        raise ValueError(f"shape mismatch {tuple(pred_v.shape)} vs {tuple(target_v.shape)}")
    return torch.mean((pred_v - target_v) ** 2)


def sample_timestep(generator: torch.Generator, n: int | None = None, dtype=torch.float32) -> Tensor:
    """Uniform ``t`` on [0, 1]; a scalar tensor when ``n`` is None."""
    shape = () if n is None else (n,)
    return torch.rand(shape, generator=generator, dtype=dtype)

"""Euler ODE sampling with classifier-free guidance for every conditioning paradigm."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Protocol

import torch
from torch import Tensor

from flashflow import paradigms
from flashflow.flowmatch import broadcast_shift
from flashflow.fourier import high_freq_magnitude
from flashflow.latents import Codec


@dataclass
class SamplerConfig:
    steps: int = 50
    guidance: float = 5.0
    shift: float = 7.0
    cutoff_percentile: float = 0.1
    paradigm: str = paradigms.FLASH_I2V
    add_noise_mu: float = 0.0
    add_noise_sigma: float = 0.1
    rng_seed: int = 0
    readd_shift: bool = True

    def validate(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.guidance < 0:
            raise ValueError("guidance must be >= 0")
        if self.shift < 1:
            raise ValueError("shift must be >= 1")
        if not 0 < self.cutoff_percentile <= 1:
            raise ValueError("cutoff_percentile must lie in (0, 1]")
        paradigms.info(self.paradigm)


class VelocityModel(Protocol):
    null_index: int

    def shift(self, s: Tensor) -> Tensor: ...

    def __call__(self, state: Tensor, t, cond_index: Tensor, extra=None, s_high=None) -> Tensor: ...


class Condition(NamedTuple):
    """Per-clip conditioning prepared once before integration."""

    s: Tensor  # conditional latent frame (B, C, h, w)
    extra: Tensor | None  # concat channels for the baselines (B, C', T, h, w)


class DenoiserInput(NamedTuple):
    state: Tensor
    extra: Tensor | None = None
    s_high: Tensor | None = None

    def channels(self) -> Tensor:
        """Everything the denoiser sees, stacked along channels (inspection only)."""
        parts = [self.state]
        if self.extra is not None:
            parts.insert(0, self.extra)
        if self.s_high is not None:
            high = self.s_high.unsqueeze(2).expand(-1, -1, self.state.shape[2], -1, -1)
            parts.insert(0, high)
        return torch.cat(parts, dim=1)


def shifted_schedule(steps: int, shift: float) -> list[float]:
    """Descending grid ``t_N = 1 > ... > t_0 = 0`` warped by ``shift * t / (1 + (shift - 1) t)``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if shift < 1:
        raise ValueError("shift must be >= 1")
    grid = [(steps - i) / steps for i in range(steps + 1)]
    return [shift * t / (1 + (shift - 1) * t) for t in grid]


def cfg_velocity(v_uncond: Tensor, v_cond: Tensor, w: float) -> Tensor:
    """``v_u + w (v_c - v_u)``, written so that w = 0 and w = 1 return a branch exactly."""
    return (1.0 - w) * v_uncond + w * v_cond


def euler_step(z: Tensor, v: Tensor, t_cur: float, t_next: float) -> Tensor:
    return z + (t_next - t_cur) * v


def add_pixel_noise(image: Tensor, generator: torch.Generator, mu: float, sigma: float) -> Tensor:
    noise = torch.randn(image.shape, generator=generator, dtype=image.dtype)
    return image + mu + sigma * noise


def inpainting_mask(batch: int, frames: int, height: int, width: int, dtype=torch.float32) -> Tensor:
    """Pixel mask marking frames that carry information: ones on frame 0 only."""
    mask = torch.zeros(batch, 1, frames, height, width, dtype=dtype)
    mask[:, :, 0] = 1.0
    return mask


def downsample_mask(mask: Tensor) -> Tensor:
    """Bring a pixel mask to latent resolution (2x2 average; time unchanged)."""
    b, c, t, h, w = mask.shape
    return mask.reshape(b, c, t, h // 2, 2, w // 2, 2).mean(dim=(4, 6))


def prepare_condition(
    paradigm: str,
    image: Tensor,
    frames: int,
    codec: Codec,
    generator: torch.Generator | None = None,
    mu: float = 0.0,
    sigma: float = 0.1,
) -> Condition:
    """Encode the pixel conditional image ``(B, c, H, W)`` the way ``paradigm`` expects."""
    info = paradigms.info(paradigm)
    if info.noisy_condition:
        if generator is None:
            raise ValueError(f"{paradigm} needs a generator for the condition noise")
        image = add_pixel_noise(image, generator, mu, sigma)
    s = codec.encode_frame(image)
    extra = None
    if info.layout == "repeat":
        extra = s.unsqueeze(2).expand(-1, -1, frames, -1, -1)
    elif info.layout == "zeropad":
        extra = torch.zeros(*s.shape[:2], frames, *s.shape[2:], dtype=s.dtype)
        extra[:, :, 0] = s
    elif info.layout == "inpaint":
        b, c, h, w = image.shape
        padded = torch.zeros(b, c, frames, h, w, dtype=image.dtype)
        padded[:, :, 0] = image
        m = downsample_mask(inpainting_mask(b, frames, h, w, image.dtype))
        extra = torch.cat([m, codec.encode(padded)], dim=1)
    return Condition(s, extra)


def fourier_guidance(paradigm: str, s: Tensor, percentile: float | Tensor) -> Tensor | None:
    """High-frequency magnitude of ``s`` for paradigms that use it, else None."""
    if not paradigms.info(paradigm).fourier:
        return None
    p = torch.as_tensor(percentile, dtype=torch.float64)
    if p.ndim == 1:
        p = p[:, None]  # one percentile per sample, shared by its channels
    return high_freq_magnitude(s, p)


def assemble_input(
    paradigm: str,
    condition: Condition,
    z: Tensor,
    phi_s: Tensor | None = None,
    s_high: Tensor | None = None,
) -> DenoiserInput:
    info = paradigms.info(paradigm)
    if info.shift:
        if phi_s is None:
            raise ValueError(f"{paradigm} needs the projected shift phi(s)")
        return DenoiserInput(z - broadcast_shift(phi_s), None, s_high)
    return DenoiserInput(z, condition.extra, None)


def initial_noise(seed: int, shape: tuple[int, ...], dtype=torch.float32) -> Tensor:
    """Starting noise; drawn first from the seed so every paradigm gets the same ``z``."""
    generator = torch.Generator().manual_seed(seed)
    return torch.randn(shape, generator=generator, dtype=dtype)


def decode_latent(paradigm: str, z0: Tensor, phi_s: Tensor | None, readd_shift: bool = True) -> Tensor:
    """Latent handed to the decoder once integration reaches ``t = 0``.

    ``z0`` is the unshifted loop variable. For shift paradigms the denoiser's
    state is ``z0 - phi(s)``, which the learned field carries to ``x - phi(s)``;
    with ``readd_shift`` the shift is added back (giving ``z0``), otherwise the
    shifted state itself is decoded.
    """
    if paradigms.info(paradigm).shift and not readd_shift:
        return z0 - broadcast_shift(phi_s)
    return z0


@torch.no_grad()
def sample(
    model: VelocityModel,
    image: Tensor,
    cond_index: Tensor,
    config: SamplerConfig,
    frames: int,
    codec: Codec,
) -> Tensor:
    """Generate ``(B, c, frames, H, W)`` clips starting from pixel images ``(B, c, H, W)``."""
    config.validate()
    paradigm = config.paradigm
    b = image.shape[0]
    shape = (b, codec.latent_channels, frames, image.shape[-2] // 2, image.shape[-1] // 2)
    generator = torch.Generator().manual_seed(config.rng_seed)
    z = torch.randn(shape, generator=generator, dtype=image.dtype)
    condition = prepare_condition(
        paradigm, image, frames, codec, generator, config.add_noise_mu, config.add_noise_sigma
    )
    phi_s = model.shift(condition.s) if paradigms.info(paradigm).shift else None
    s_high = fourier_guidance(paradigm, condition.s, config.cutoff_percentile)

    null = torch.full_like(cond_index, model.null_index)
    schedule = shifted_schedule(config.steps, config.shift)
    for i in range(config.steps):
        t_cur, t_next = schedule[i], schedule[i + 1]
        inp = assemble_input(paradigm, condition, z, phi_s, s_high)
        v = guided_velocity(model, inp, t_cur, cond_index, null, config.guidance)
        z = euler_step(z, v, t_cur, t_next)
        if not torch.isfinite(z).all():
            raise FloatingPointError(
                f"non-finite state at step {i} (t={t_cur:.4f} -> {t_next:.4f}), paradigm {paradigm}"
            )
    return codec.decode(decode_latent(paradigm, z, phi_s, config.readd_shift))


def guided_velocity(
    model: VelocityModel,
    inp: DenoiserInput,
    t: float,
    cond_index: Tensor,
    null_index: Tensor,
    w: float,
) -> Tensor:
    """CFG-combined velocity; the two passes share one batched forward call."""
    def twice(x):
        return None if x is None else torch.cat([x, x])

    b = inp.state.shape[0]
    v = model(
        twice(inp.state),
        t,
        torch.cat([null_index, cond_index]),
        extra=twice(inp.extra),
        s_high=twice(inp.s_high),
    )
    return cfg_velocity(v[:b], v[b:], w)


class OracleField:
    """Perfect-transport stand-in for a trained denoiser.

    For a memorised target batch ``x`` and the starting noise ``eps`` the
    sampler will draw, it always answers ``eps - x``, so Euler integration
    lands on ``x`` exactly whatever the schedule. ``phi`` is zero.
    """

    def __init__(self, x: Tensor, eps: Tensor, num_classes: int = 8):
        if x.shape != eps.shape:
            raise ValueError("target and noise must share a shape")
        self.velocity = eps - x
        self.null_index = num_classes

    def shift(self, s: Tensor) -> Tensor:
        return torch.zeros_like(s)

    def __call__(self, state: Tensor, t, cond_index: Tensor, extra=None, s_high=None) -> Tensor:
        reps = state.shape[0] // self.velocity.shape[0]
        return self.velocity.repeat(reps, *([1] * (self.velocity.ndim - 1))).to(state.dtype)

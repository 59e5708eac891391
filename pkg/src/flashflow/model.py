"""Velocity-prediction denoiser with the FlashI2V input pathways.

The network patchifies the latent state into 2x2 tokens (``W_I``), optionally
adds an embedding of the high-frequency guidance (``W_F``), conditions on time
and class, and mixes tokens with residual blocks that act along the channel,
spatial and temporal token axes. A separate time-independent projection
``phi`` maps the conditional latent frame to a shift.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import Tensor, nn

from flashflow import paradigms


@dataclass
class ModelConfig:
    latent_channels: int = 12
    frames: int = 48
    latent_height: int = 8
    latent_width: int = 8
    num_classes: int = 8
    dim: int = 64
    depth: int = 3
    patch: int = 2
    skip: bool = True
    paradigm: str = paradigms.FLASH_I2V

    def to_dict(self) -> dict:
        return asdict(self)


class Phi(nn.Module):
    """Conv3d -> SiLU -> Conv3d on a single latent frame; the last layer starts at zero."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv3d(channels, channels, kernel_size=3, padding=1)
        self.act = nn.SiLU()
        self.conv2 = nn.Conv3d(channels, channels, kernel_size=3, padding=1)
        nn.init.zeros_(self.conv2.weight)
        nn.init.zeros_(self.conv2.bias)

    def forward(self, s: Tensor) -> Tensor:
        # (B, C, H, W) -> (B, C, 1, H, W) and back
        return self.conv2(self.act(self.conv1(s.unsqueeze(2)))).squeeze(2)


def timestep_embedding(t: Tensor, dim: int, max_period: float = 10000.0) -> Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=t.dtype) / half)
    args = (1000.0 * t)[:, None] * freqs[None]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=-1)
    return emb


def modulate(x: Tensor, shift: Tensor, scale: Tensor) -> Tensor:
    return x * (1 + scale[:, None, None, :]) + shift[:, None, None, :]


class MixerBlock(nn.Module):
    """Residual time-mix, space-mix and channel MLP, each modulated by the conditioning vector."""

    def __init__(self, dim: int, n_space: int, n_time: int):
        super().__init__()
        self.norm_t = nn.LayerNorm(dim, elementwise_affine=False)
        self.time_mix = nn.Linear(n_time, n_time)
        self.norm_s = nn.LayerNorm(dim, elementwise_affine=False)
        self.space_mix = nn.Linear(n_space, n_space)
        self.norm_c = nn.LayerNorm(dim, elementwise_affine=False)
        self.fc1 = nn.Linear(dim, dim)
        self.act = nn.SiLU()
        self.fc2 = nn.Linear(dim, dim)
        self.modulation = nn.Sequential(nn.SiLU(), nn.Linear(dim, 6 * dim))

    def forward(self, h: Tensor, c: Tensor) -> Tensor:
        # h: (B, T, N, D); c: (B, D)
        sh_t, sc_t, sh_s, sc_s, sh_c, sc_c = self.modulation(c).chunk(6, dim=-1)
        x = modulate(self.norm_t(h), sh_t, sc_t)
        h = h + self.time_mix(x.transpose(1, 3)).transpose(1, 3)
        x = modulate(self.norm_s(h), sh_s, sc_s)
        h = h + self.space_mix(x.transpose(2, 3)).transpose(2, 3)
        x = modulate(self.norm_c(h), sh_c, sc_c)
        h = h + self.fc2(self.act(self.fc1(x)))
        return h


class Denoiser(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        info = paradigms.info(config.paradigm)
        c, p, d = config.latent_channels, config.patch, config.dim
        if config.latent_height % p or config.latent_width % p:
            raise ValueError("latent spatial dims must be divisible by the patch size")
        self.extra_channels = info.extra_channels(c)
        self.n_space = (config.latent_height // p) * (config.latent_width // p)

        self.patch_embed = nn.Linear((c + self.extra_channels) * p * p, d)
        self.fourier_embed = None
        if info.fourier:
            self.fourier_embed = nn.Linear(c * p * p, d)
            nn.init.zeros_(self.fourier_embed.weight)
            nn.init.zeros_(self.fourier_embed.bias)
        self.phi = Phi(c) if info.shift else None

        self.frame_pos = nn.Parameter(torch.randn(config.frames, 1, d))
        self.space_pos = nn.Parameter(torch.randn(1, self.n_space, d))
        self.time_mlp = nn.Sequential(nn.Linear(d, d), nn.SiLU(), nn.Linear(d, d))
        # last row is the null condition
        self.cond_table = nn.Embedding(config.num_classes + 1, d)
        self.blocks = nn.ModuleList(
            MixerBlock(d, self.n_space, config.frames) for _ in range(config.depth)
        )
        self.norm_out = nn.LayerNorm(d, elementwise_affine=False)
        self.out_modulation = nn.Sequential(nn.SiLU(), nn.Linear(d, 2 * d))
        self.head = nn.Linear(d, c * p * p)
        # linear path from the input tokens straight to the output tokens
        self.skip = None
        if config.skip:
            self.skip = nn.Linear((c + self.extra_channels) * p * p, c * p * p)
            # per-frame and per-timestep gain on the skip path, starting at 1
            self.skip_frame_gain = nn.Parameter(torch.zeros(config.frames, 1, c * p * p))
            self.skip_time_gain = nn.Linear(d, c * p * p)
            nn.init.zeros_(self.skip_time_gain.weight)
            nn.init.zeros_(self.skip_time_gain.bias)

    @property
    def null_index(self) -> int:
        return self.config.num_classes

    def patchify(self, x: Tensor) -> Tensor:
        # (B, C, T, H, W) -> (B, T, N, C*p*p)
        b, c, t, h, w = x.shape
        p = self.config.patch
        x = x.reshape(b, c, t, h // p, p, w // p, p)
        x = x.permute(0, 2, 3, 5, 1, 4, 6)
        return x.reshape(b, t, (h // p) * (w // p), c * p * p)

    def unpatchify(self, tokens: Tensor) -> Tensor:
        cfg = self.config
        b, t = tokens.shape[:2]
        p, c = cfg.patch, cfg.latent_channels
        hh, ww = cfg.latent_height // p, cfg.latent_width // p
        x = tokens.reshape(b, t, hh, ww, c, p, p)
        x = x.permute(0, 4, 1, 2, 5, 3, 6)
        return x.reshape(b, c, t, hh * p, ww * p)

    def shift(self, s: Tensor) -> Tensor:
        """The learned shift of a conditional latent frame (zero when the paradigm has none)."""
        if self.phi is None:
            return torch.zeros_like(s)
        return self.phi(s)

    def tokens(self, state: Tensor, extra: Tensor | None = None) -> Tensor:
        """Patch tokens of the channel stack ``[extra; state]``."""
        if (extra is None) != (self.extra_channels == 0):
            raise ValueError(
                f"{self.config.paradigm} expects {self.extra_channels} extra condition channels"
            )
        if extra is not None:
            if extra.shape[1] != self.extra_channels or extra.shape[2:] != state.shape[2:]:
                raise ValueError(f"condition block has shape {tuple(extra.shape)}")
            state = torch.cat([extra, state], dim=1)
        return self.patchify(state)

    def embed(self, tokens: Tensor, s_high: Tensor | None = None) -> Tensor:
        """Hidden states ``W_I [extra; state] + W_F s_high`` before positional terms."""
        h = self.patch_embed(tokens)
        if s_high is not None:
            if self.fourier_embed is None:
                raise ValueError(f"{self.config.paradigm} takes no Fourier guidance")
            if s_high.ndim == 4:
                s_high = s_high.unsqueeze(2)
            s_high = s_high.expand(-1, -1, self.config.frames, -1, -1)
            h = h + self.fourier_embed(self.patchify(s_high))
        return h

    def forward(
        self,
        state: Tensor,
        t: Tensor | float,
        cond_index: Tensor,
        extra: Tensor | None = None,
        s_high: Tensor | None = None,
    ) -> Tensor:
        cfg = self.config
        if state.ndim != 5 or state.shape[1:] != (
            cfg.latent_channels,
            cfg.frames,
            cfg.latent_height,
            cfg.latent_width,
        ):
            raise ValueError(f"state has shape {tuple(state.shape)}")
        b = state.shape[0]
        t = torch.as_tensor(t, dtype=state.dtype)
        if t.ndim == 0:
            t = t.expand(b)
        tokens = self.tokens(state, extra)
        h = self.embed(tokens, s_high) + self.frame_pos + self.space_pos
        c = self.time_mlp(timestep_embedding(t, cfg.dim)) + self.cond_table(cond_index)
        for block in self.blocks:
            h = block(h, c)
        shift, scale = self.out_modulation(c).chunk(2, dim=-1)
        out = self.head(modulate(self.norm_out(h), shift, scale))
        if self.skip is not None:
            gain = 1 + self.skip_frame_gain + self.skip_time_gain(c)[:, None, None, :]
            out = out + gain * self.skip(tokens)
        return self.unpatchify(out)


@torch.no_grad()
def ema_update(ema: nn.Module, model: nn.Module, decay: float) -> None:
    """In place: ``e <- decay * e + (1 - decay) * p`` for every parameter."""
    for e, p in zip(ema.parameters(), model.parameters()):
        if e.shape != p.shape:
            raise ValueError("EMA and model parameters differ in shape")
        if decay == 1.0:
            continue
        if decay == 0.0:
            e.copy_(p)
        else:
            e.mul_(decay).add_(p, alpha=1.0 - decay)

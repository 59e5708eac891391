"""Training loop: flow-matching loss per paradigm, AdamW, EMA and prompt dropout."""
from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import Tensor

from flashflow import paradigms
from flashflow.flowmatch import interpolate, mse_loss, sample_timestep, velocity_target
from flashflow.latents import Codec
from flashflow.model import Denoiser, ModelConfig, ema_update
from flashflow.samplers import assemble_input, fourier_guidance, prepare_condition

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-15
    weight_decay: float = 1e-2
    ema_decay: float = 0.9999
    # ramp the EMA decay as min(decay, (1 + step) / (10 + step)); short toy
    # runs would otherwise leave the snapshot at the initial weights
    ema_warmup: bool = True
    prompt_dropout: float = 0.1
    cutoff_percentile_range: tuple[float, float] = (0.05, 0.95)
    add_noise_mu: float = 0.0
    add_noise_sigma: float = 0.1
    batch_size: int = 16
    steps: int = 500
    rng_seed: int = 0

    def validate(self) -> None:
        if not 0 < self.prompt_dropout < 1:
            raise ValueError("prompt_dropout must lie in (0, 1)")
        lo, hi = self.cutoff_percentile_range
        if not 0 < lo <= hi <= 1:
            raise ValueError("cutoff_percentile_range must satisfy 0 < lo <= hi <= 1")
        if self.batch_size < 1 or self.steps < 0:
            raise ValueError("batch_size must be >= 1 and steps >= 0")
        if not 0 <= self.ema_decay <= 1:
            raise ValueError("ema_decay must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cutoff_percentile_range"] = list(self.cutoff_percentile_range)
        return d


@dataclass
class Batch:
    """Latent targets plus the pixel conditional images and labels they came from."""

    x: Tensor  # (B, C, T, h, w)
    image: Tensor  # (B, c, H, W) frame 0 in pixel space
    labels: Tensor  # (B,)


@dataclass
class LossDraws:
    """All randomness of one loss evaluation, so the loss itself is deterministic."""

    t: Tensor
    eps: Tensor
    cond_index: Tensor
    percentile: Tensor
    condition_noise_seed: int = 0


def draw(batch: Batch, model: Denoiser, config: TrainConfig, generator: torch.Generator) -> LossDraws:
    b = batch.x.shape[0]
    t = sample_timestep(generator, b, dtype=batch.x.dtype)
    eps = torch.randn(batch.x.shape, generator=generator, dtype=batch.x.dtype)
    drop = torch.rand(b, generator=generator) < config.prompt_dropout
    cond_index = torch.where(drop, torch.full_like(batch.labels, model.null_index), batch.labels)
    lo, hi = config.cutoff_percentile_range
    percentile = lo + (hi - lo) * torch.rand(b, generator=generator, dtype=torch.float64)
    seed = int(torch.randint(0, 2**31 - 1, (1,), generator=generator))
    return LossDraws(t, eps, cond_index, percentile, seed)


def flow_loss(
    model: Denoiser,
    batch: Batch,
    draws: LossDraws,
    codec: Codec,
    config: TrainConfig,
) -> Tensor:
    """Velocity regression loss for the model's paradigm under fixed random draws."""
    paradigm = model.config.paradigm
    info = paradigms.info(paradigm)
    frames = batch.x.shape[2]
    generator = torch.Generator().manual_seed(draws.condition_noise_seed)
    condition = prepare_condition(
        paradigm, batch.image, frames, codec, generator, config.add_noise_mu, config.add_noise_sigma
    )
    phi_s = model.shift(condition.s) if info.shift else None
    s_high = fourier_guidance(paradigm, condition.s, draws.percentile)
    z_t = interpolate(batch.x, draws.eps, draws.t)
    # shift paradigms see z_t - phi(s); the regression target is unchanged
    inp = assemble_input(paradigm, condition, z_t, phi_s, s_high)
    pred = model(inp.state, draws.t, draws.cond_index, extra=inp.extra, s_high=inp.s_high)
    return mse_loss(pred, velocity_target(batch.x, draws.eps))


class Trainer:
    """Single-writer owner of the model, its EMA copy and the optimizer state."""

    def __init__(self, model: Denoiser, config: TrainConfig, codec: Codec | None = None):
        config.validate()
        self.model = model
        self.config = config
        self.codec = codec or Codec(model.config.latent_channels // 4)
        self.ema = copy.deepcopy(model).requires_grad_(False)
        self.optimizer = torch.optim.AdamW(
            model.parameters(),
            lr=config.learning_rate,
            betas=(config.adam_beta1, config.adam_beta2),
            eps=config.adam_eps,
            weight_decay=config.weight_decay,
        )
        self.generator = torch.Generator().manual_seed(config.rng_seed)
        self.step = 0
        self.losses: list[float] = []

    def ema_decay(self) -> float:
        if not self.config.ema_warmup:
            return self.config.ema_decay
        return min(self.config.ema_decay, (1 + self.step) / (10 + self.step))

    def train_step(self, batch: Batch) -> float:
        if batch.x.shape[0] == 0:
            raise ValueError("empty batch")
        draws = draw(batch, self.model, self.config, self.generator)
        loss = flow_loss(self.model, batch, draws, self.codec, self.config)
        if not torch.isfinite(loss):
            raise FloatingPointError(
                f"non-finite loss {loss.item()} at step {self.step} "
                f"(t range {draws.t.min().item():.3f}..{draws.t.max().item():.3f})"
            )
        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.optimizer.step()
        ema_update(self.ema, self.model, self.ema_decay())
        self.step += 1
        value = float(loss.detach())
        self.losses.append(value)
        return value

    def sample_batch(self, data: "LatentDataset") -> Batch:
        idx = torch.randint(0, len(data), (self.config.batch_size,), generator=self.generator)
        return data.batch(idx)

    def fit(self, data: "LatentDataset", steps: int | None = None, log_every: int = 50) -> list[float]:
        steps = self.config.steps if steps is None else steps
        for _ in range(steps):
            loss = self.train_step(self.sample_batch(data))
            if log_every and self.step % log_every == 0:
                log.info("step %d loss %.4f", self.step, loss)
        return self.losses


class LatentDataset:
    """Encoded clips held in memory for fast batch assembly."""

    def __init__(self, videos: np.ndarray, labels: np.ndarray, codec: Codec):
        videos_t = torch.as_tensor(videos, dtype=torch.float32)
        self.x = codec.encode(videos_t)
        self.images = videos_t[:, :, 0].clone()
        self.labels = torch.as_tensor(labels, dtype=torch.long)

    def __len__(self) -> int:
        return self.x.shape[0]

    def batch(self, idx: Tensor) -> Batch:
        return Batch(self.x[idx], self.images[idx], self.labels[idx])


def model_config_for(videos_shape: tuple[int, ...], paradigm: str, **overrides) -> ModelConfig:
    """Model dimensions matching a ``(N, c, T, H, W)`` pixel dataset."""
    _, c, t, h, w = videos_shape
    return ModelConfig(
        latent_channels=4 * c,
        frames=t,
        latent_height=h // 2,
        latent_width=w // 2,
        paradigm=paradigm,
        **overrides,
    )


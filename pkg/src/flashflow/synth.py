"""Synthetic moving-shape videos.

Each clip shows one shape (square, circle or triangle) translating with a
constant integer velocity over a constant ``-1`` background. Frame 0 of every
clip is the conditional image used downstream.

The motion class is the compass direction of the velocity (8 classes), so the
same labels apply to both splits while the in-domain and out-of-domain splits
use disjoint colour palettes and disjoint speeds.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Literal

import numpy as np

BACKGROUND = -1.0
SHAPE_KINDS = ("square", "circle", "triangle")
NUM_CLASSES = 8

# (sign(d_row), sign(d_col)) -> class label, clockwise from "up"
_DIRECTIONS = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]
DIRECTION_TO_CLASS = {d: i for i, d in enumerate(_DIRECTIONS)}

# per-channel colour levels; the two sets share no value, so no colour
# triple can occur in both splits
_COLOR_LEVELS = {
    "in_domain": (0.0, 0.5, 1.0),
    "out_of_domain": (-0.5, 0.25, 0.75),
}
# speed per velocity component
_SPEEDS = {"in_domain": 1, "out_of_domain": 2}
_SIZES = (4, 5, 6)

Split = Literal["in_domain", "out_of_domain"]


@dataclass(frozen=True)
class ShapeSpec:
    shape_kind: str
    color: tuple[float, float, float]
    size_px: int
    start_pos: tuple[int, int]
    velocity: tuple[int, int]
    motion_class: int

    def validate(self, height: int, width: int) -> None:
        if self.shape_kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.shape_kind!r}")
        if len(self.color) != 3 or any(not -1.0 <= c <= 1.0 for c in self.color):
            raise ValueError(f"color must be 3 values in [-1, 1], got {self.color}")
        if self.size_px < 2:
            raise ValueError(f"size_px must be >= 2, got {self.size_px}")
        if self.size_px > min(height, width):
            raise ValueError(
                f"shape of size {self.size_px} does not fit a {height}x{width} frame"
            )
        r, c = self.start_pos
        if not (0 <= r <= height - self.size_px and 0 <= c <= width - self.size_px):
            raise ValueError(f"start_pos {self.start_pos} puts the shape outside the frame")
        if not 0 <= self.motion_class < NUM_CLASSES:
            raise ValueError(f"motion_class {self.motion_class} out of range")


@dataclass(frozen=True)
class SplitConfig:
    split: Split = "in_domain"
    num_videos: int = 256
    frames: int = 48
    height: int = 16
    width: int = 16
    rng_seed: int = 0

    def validate(self) -> None:
        if self.split not in _COLOR_LEVELS:
            raise ValueError(f"unknown split {self.split!r}")
        if self.num_videos < 0:
            raise ValueError("num_videos must be >= 0")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.height < max(_SIZES) or self.width < max(_SIZES):
            raise ValueError(f"frames must be at least {max(_SIZES)} pixels on each side")


def shape_mask(kind: str, size: int) -> np.ndarray:
    """Boolean ``size x size`` footprint of a shape inside its bounding box."""
    rows, cols = np.mgrid[0:size, 0:size]
    if kind == "square":
        return np.ones((size, size), dtype=bool)
    if kind == "circle":
        centre = (size - 1) / 2.0
        return (rows - centre) ** 2 + (cols - centre) ** 2 <= (size / 2.0) ** 2
    if kind == "triangle":
        # apex at the top centre, base along the bottom row
        centre = (size - 1) / 2.0
        half_width = (rows + 1) * size / (2.0 * size)
        return np.abs(cols - centre) <= half_width
    raise ValueError(f"unknown shape kind {kind!r}")


def position_at(spec: ShapeSpec, k: int, height: int, width: int) -> tuple[int, int]:
    """Top-left corner at frame ``k``; the shape stops at the frame border."""
    r = spec.start_pos[0] + k * spec.velocity[0]
    c = spec.start_pos[1] + k * spec.velocity[1]
    r = min(max(r, 0), height - spec.size_px)
    c = min(max(c, 0), width - spec.size_px)
    return r, c


def render_video(spec: ShapeSpec, frames: int, height: int, width: int) -> np.ndarray:
    """Render a ``3 x frames x height x width`` float32 clip in [-1, 1]."""
    if frames < 1:
        raise ValueError("frames must be >= 1")
    spec.validate(height, width)
    video = np.full((3, frames, height, width), BACKGROUND, dtype=np.float32)
    mask = shape_mask(spec.shape_kind, spec.size_px)
    color = np.asarray(spec.color, dtype=np.float32)[:, None]
    n = spec.size_px
    for k in range(frames):
        r, c = position_at(spec, k, height, width)
        window = video[:, k, r : r + n, c : c + n]
        window[:, mask] = color
    return video


def color_palette(split: Split) -> list[tuple[float, float, float]]:
    levels = _COLOR_LEVELS[split]
    return list(itertools.product(levels, repeat=3))


def velocity_set(split: Split) -> list[tuple[int, int]]:
    speed = _SPEEDS[split]
    return [(dr * speed, dc * speed) for dr, dc in _DIRECTIONS]


def motion_class_of(velocity: tuple[int, int]) -> int:
    return DIRECTION_TO_CLASS[(int(np.sign(velocity[0])), int(np.sign(velocity[1])))]


def random_spec(rng: np.random.Generator, config: SplitConfig) -> ShapeSpec:
    palette = color_palette(config.split)
    velocities = velocity_set(config.split)
    kind = SHAPE_KINDS[rng.integers(len(SHAPE_KINDS))]
    color = palette[rng.integers(len(palette))]
    size = int(_SIZES[rng.integers(len(_SIZES))])
    start = (
        int(rng.integers(0, config.height - size + 1)),
        int(rng.integers(0, config.width - size + 1)),
    )
    velocity = velocities[rng.integers(len(velocities))]
    return ShapeSpec(kind, color, size, start, velocity, motion_class_of(velocity))


def make_specs(config: SplitConfig) -> list[ShapeSpec]:
    config.validate()
    rng = np.random.default_rng(config.rng_seed)
    return [random_spec(rng, config) for _ in range(config.num_videos)]


def make_dataset(config: SplitConfig) -> list[tuple[np.ndarray, int]]:
    """``num_videos`` rendered clips with their motion class, reproducible from the seed."""
    return [
        (render_video(spec, config.frames, config.height, config.width), spec.motion_class)
        for spec in make_specs(config)
    ]


def stack_dataset(items: list[tuple[np.ndarray, int]]) -> tuple[np.ndarray, np.ndarray]:
    """Stack dataset items into ``(N, 3, T, H, W)`` videos and ``(N,)`` labels."""
    if not items:
        return np.zeros((0,), dtype=np.float32), np.zeros((0,), dtype=np.int64)
    videos = np.stack([v for v, _ in items])
    labels = np.array([c for _, c in items], dtype=np.int64)
    return videos, labels

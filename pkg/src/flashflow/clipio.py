"""On-disk formats for clips, manifests and PGM frame dumps."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

CLIP_MAGIC = b"FLV1"
_HEADER = struct.Struct("<4s4I")


def write_clip(path: str | Path, video: np.ndarray) -> None:
    """Write a ``c x t x h x w`` clip: magic, four u32 dims, then little-endian float32 data."""
    video = np.asarray(video)
    if video.ndim != 4:
        raise ValueError(f"expected a 4-D clip, got shape {video.shape}")
    c, t, h, w = video.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(CLIP_MAGIC, c, t, h, w))
        f.write(np.ascontiguousarray(video, dtype="<f4").tobytes())


def read_clip(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, c, t, h, w = _HEADER.unpack_from(data)
    if magic != CLIP_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = c * t * h * w * 4
    if len(data) - _HEADER.size != expected:
        raise ValueError(f"{path}: expected {expected} payload bytes, got {len(data) - _HEADER.size}")
    return np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(c, t, h, w).astype(np.float32)


def write_manifest(path: str | Path, rows: list[tuple[str, int, str]]) -> None:
    """One line per clip: ``path motion_class split`` separated by tabs."""
    with open(path, "w") as f:
        for clip_path, motion_class, split in rows:
            f.write(f"{clip_path}\t{motion_class}\t{split}\n")


def read_manifest(path: str | Path) -> list[tuple[str, int, str]]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        clip_path, motion_class, split = line.split("\t")
        rows.append((clip_path, int(motion_class), split))
    return rows


def save_dataset(directory: str | Path, items: list[tuple[np.ndarray, int]], split: str) -> Path:
    """Write every clip plus a ``manifest.tsv``; clip paths are relative to ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (video, motion_class) in enumerate(items):
        name = f"{split}_{i:05d}.flv"
        write_clip(directory / name, video)
        rows.append((name, motion_class, split))
    manifest = directory / "manifest.tsv"
    write_manifest(manifest, rows)
    return manifest


def load_dataset(manifest: str | Path, split: str | None = None) -> list[tuple[np.ndarray, int]]:
    manifest = Path(manifest)
    items = []
    for clip_path, motion_class, clip_split in read_manifest(manifest):
        if split is not None and clip_split != split:
            continue
        items.append((read_clip(manifest.parent / clip_path), motion_class))
    return items


def to_gray8(frame: np.ndarray) -> np.ndarray:
    """Map [-1, 1] to 0..255 (values outside are clipped)."""
    return np.round((np.clip(frame, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Binary (P5) 8-bit grayscale image."""
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    pos += 1  # the single whitespace byte ending the header
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported")
    return np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w)


def dump_frames(directory: str | Path, video: np.ndarray, prefix: str = "frame") -> list[Path]:
    """Write every (channel, frame) plane of a clip as a PGM file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for k in range(video.shape[1]):
        for ch in range(video.shape[0]):
            path = directory / f"{prefix}_{k:03d}_c{ch}.pgm"
            write_pgm(path, to_gray8(video[ch, k]))
            written.append(path)
    return written

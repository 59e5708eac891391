"""Chunk-wise Fréchet distance, first-frame fidelity and leakage pattern diagnosis.

Features come from a fixed seeded random projection followed by tanh, a
stand-in for a pretrained video network. Scores are comparable with each
other, not with published FVD values.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

FEATURE_DIM = 64
FEATURE_SEED = 0
INCREASING_THRESHOLD = 0.8
CSV_HEADER = ["paradigm", "split", "chunk_0", "chunk_1", "chunk_2", "chunk_3", "overall", "verdict_label"]


@dataclass
class FeatureStats:
    mean: np.ndarray
    cov: np.ndarray


@dataclass
class ChunkReport:
    paradigm: str
    split: str
    per_chunk: list[float]
    overall: float
    label: str = field(default="")

    def scores(self) -> list[float]:
        return [*self.per_chunk, self.overall]


def usable_frames(frames: int, n_chunks: int) -> int:
    """Largest multiple of ``n_chunks`` not exceeding ``frames`` (49 -> 48 for 4 chunks)."""
    return (frames // n_chunks) * n_chunks


def split_chunks(video: np.ndarray, n_chunks: int = 4) -> list[np.ndarray]:
    """Equal contiguous temporal chunks of a ``(c, T, H, W)`` clip; trailing frames are dropped."""
    frames = video.shape[1]
    if n_chunks < 1 or frames < n_chunks:
        raise ValueError(f"cannot split {frames} frames into {n_chunks} chunks")
    length = frames // n_chunks
    return [video[:, i * length : (i + 1) * length] for i in range(n_chunks)]


def projection_matrix(size: int, dim: int = FEATURE_DIM, seed: int = FEATURE_SEED) -> np.ndarray:
    """``(dim, size)`` Gaussian projection scaled by ``1 / sqrt(size)``; depends only on its arguments."""
    rng = np.random.default_rng([seed, size, dim])
    return rng.standard_normal((dim, size)) / math.sqrt(size)


def chunk_features(chunk: np.ndarray, seed: int = FEATURE_SEED, dim: int = FEATURE_DIM) -> np.ndarray:
    flat = np.asarray(chunk, dtype=np.float64).ravel()
    return np.tanh(projection_matrix(flat.size, dim, seed) @ flat)


def batch_features(chunks: np.ndarray, seed: int = FEATURE_SEED, dim: int = FEATURE_DIM) -> np.ndarray:
    """Features for a stack of equally shaped chunks, one row each."""
    flat = np.asarray(chunks, dtype=np.float64).reshape(len(chunks), -1)
    return np.tanh(flat @ projection_matrix(flat.shape[1], dim, seed).T)


def gaussian_stats(features: np.ndarray) -> FeatureStats:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValueError("need at least two feature vectors")
    mean = features.mean(axis=0)
    centred = features - mean
    cov = centred.T @ centred / (features.shape[0] - 1)
    return FeatureStats(mean, 0.5 * (cov + cov.T))


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (matrix + matrix.T))
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """Squared 2-Wasserstein distance between two Gaussians."""
    if a.mean.shape != b.mean.shape:
        raise ValueError("feature dimensions differ")
    diff = a.mean - b.mean
    root_a = _psd_sqrt(a.cov)
    inner = root_a @ b.cov @ root_a
    vals = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    cross = np.sqrt(np.clip(vals, 0.0, None)).sum()
    value = diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * cross
    return float(max(value, 0.0))


def _set_distance(generated: np.ndarray, reference: np.ndarray, seed: int) -> float:
    return frechet_distance(
        gaussian_stats(batch_features(generated, seed)),
        gaussian_stats(batch_features(reference, seed)),
    )


def chunkwise_report(
    generated: np.ndarray,
    reference: np.ndarray,
    paradigm: str,
    split: str,
    n_chunks: int = 4,
    seed: int = FEATURE_SEED,
) -> ChunkReport:
    """Per-chunk and whole-clip Fréchet scores between two ``(N, c, T, H, W)`` clip sets."""
    generated = np.asarray(generated)
    reference = np.asarray(reference)
    if len(generated) == 0 or len(reference) == 0:
        raise ValueError("clip sets must be nonempty")
    if generated.shape[2] != reference.shape[2]:
        raise ValueError("generated and reference clips differ in frame count")
    length = usable_frames(generated.shape[2], n_chunks) // n_chunks
    per_chunk = [
        _set_distance(
            generated[:, :, i * length : (i + 1) * length],
            reference[:, :, i * length : (i + 1) * length],
            seed,
        )
        for i in range(n_chunks)
    ]
    overall = _set_distance(generated, reference, seed)
    return ChunkReport(paradigm, split, per_chunk, overall, trend_label(per_chunk))


def first_frame_fidelity(generated: np.ndarray, image: np.ndarray, peak: float = 2.0) -> float:
    """PSNR in dB of frame 0 of a ``(c, T, H, W)`` clip against the conditional image; inf if exact."""
    frame = np.asarray(generated, dtype=np.float64)[:, 0]
    image = np.asarray(image, dtype=np.float64)
    if frame.shape != image.shape:
        raise ValueError(f"shape mismatch {frame.shape} vs {image.shape}")
    mse = float(np.mean((frame - image) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def trend_label(scores: list[float], threshold: float = INCREASING_THRESHOLD) -> str:
    if len(scores) < 2 or np.ptp(scores) == 0:
        return "flat/other"
    rho = spearmanr(np.arange(len(scores)), scores).statistic
    return "increasing" if rho >= threshold else "flat/other"


def pattern_classify(report_in: ChunkReport, report_ood: ChunkReport) -> str:
    if len(report_in.per_chunk) != len(report_ood.per_chunk):
        raise ValueError("reports have different chunk counts")
    inc_in = trend_label(report_in.per_chunk) == "increasing"
    inc_ood = trend_label(report_ood.per_chunk) == "increasing"
    if inc_in and inc_ood:
        return "generalizing"
    if inc_in:
        return "leaking"
    return "inconclusive"


def reports_to_csv(reports: list[ChunkReport], verdicts: dict[str, str] | None = None) -> str:
    """CSV text, one row per report; ``verdict_label`` is ``<trend>|<paradigm verdict>``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in reports:
        if len(r.per_chunk) != 4:
            raise ValueError("the CSV layout has exactly four chunk columns")
        label = r.label or trend_label(r.per_chunk)
        if verdicts and r.paradigm in verdicts:
            label = f"{label}|{verdicts[r.paradigm]}"
        writer.writerow([r.paradigm, r.split, *(f"{s:.6g}" for s in r.scores()), label])
    return buf.getvalue()


def read_reports_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))

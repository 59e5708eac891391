"""Binary checkpoint format.

Layout: magic ``FLCK``, version (u32), then named tensors until end of file.
Each tensor is: name length (u16), UTF-8 name, rank (u32), dims (u32 each),
float32 little-endian data. Non-tensor metadata (configs, step counter) is
stored as tensors too: the step as a rank-0 value, the configs as the bytes
of a JSON document.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from flashflow.model import Denoiser, ModelConfig
from flashflow.training import TrainConfig, Trainer

MAGIC = b"FLCK"
VERSION = 1


def write_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        for name, value in tensors.items():
            # asarray rather than ascontiguousarray: the latter turns rank 0 into rank 1
            arr = np.asarray(value, dtype="<f4").copy(order="C")
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def read_tensors(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (magic {data[:4]!r})")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 8
    out = {}
    while pos < len(data):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<I", data, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        out[name] = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(dims).copy()
        pos += 4 * count
    return out


def _encode_json(obj: dict) -> np.ndarray:
    return np.frombuffer(json.dumps(obj, sort_keys=True).encode("utf-8"), dtype=np.uint8).astype(np.float32)


def _decode_json(arr: np.ndarray) -> dict:
    return json.loads(arr.astype(np.uint8).tobytes().decode("utf-8"))


def save_trainer(path: str | Path, trainer: Trainer) -> None:
    tensors: dict[str, np.ndarray] = {
        "meta.model_config": _encode_json(trainer.model.config.to_dict()),
        "meta.train_config": _encode_json(trainer.config.to_dict()),
        "meta.step": np.array(trainer.step, dtype=np.float32),
    }
    for name, p in trainer.model.state_dict().items():
        tensors[f"params.{name}"] = p.detach().numpy()
    for name, p in trainer.ema.state_dict().items():
        tensors[f"ema.{name}"] = p.detach().numpy()
    names = [n for n, _ in trainer.model.named_parameters()]
    for name, p in zip(names, trainer.model.parameters()):
        state = trainer.optimizer.state.get(p)
        if not state:
            continue
        tensors[f"opt.{name}.step"] = np.array(float(state["step"]), dtype=np.float32)
        tensors[f"opt.{name}.exp_avg"] = state["exp_avg"].numpy()
        tensors[f"opt.{name}.exp_avg_sq"] = state["exp_avg_sq"].numpy()
    write_tensors(path, tensors)


def load_trainer(path: str | Path) -> Trainer:
    tensors = read_tensors(path)
    model_cfg = ModelConfig(**_decode_json(tensors["meta.model_config"]))
    train_dict = _decode_json(tensors["meta.train_config"])
    train_dict["cutoff_percentile_range"] = tuple(train_dict["cutoff_percentile_range"])
    trainer = Trainer(Denoiser(model_cfg), TrainConfig(**train_dict))
    trainer.model.load_state_dict(_state(tensors, "params."))
    trainer.ema.load_state_dict(_state(tensors, "ema."))
    trainer.step = int(tensors["meta.step"])
    names = [n for n, _ in trainer.model.named_parameters()]
    for name, p in zip(names, trainer.model.parameters()):
        if f"opt.{name}.exp_avg" not in tensors:
            continue
        trainer.optimizer.state[p] = {
            "step": torch.tensor(float(tensors[f"opt.{name}.step"])),
            "exp_avg": torch.from_numpy(tensors[f"opt.{name}.exp_avg"]),
            "exp_avg_sq": torch.from_numpy(tensors[f"opt.{name}.exp_avg_sq"]),
        }
    return trainer


def load_model(path: str | Path, ema: bool = True) -> Denoiser:
    """The inference snapshot (EMA weights by default) stored in a checkpoint."""
    tensors = read_tensors(path)
    model = Denoiser(ModelConfig(**_decode_json(tensors["meta.model_config"])))
    model.load_state_dict(_state(tensors, "ema." if ema else "params."))
    return model.eval().requires_grad_(False)


def _state(tensors: dict[str, np.ndarray], prefix: str) -> dict[str, torch.Tensor]:
    return {k[len(prefix) :]: torch.from_numpy(v) for k, v in tensors.items() if k.startswith(prefix)}

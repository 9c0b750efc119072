"""Bit-exact binary checkpoints.

A checkpoint carries every named parameter with its optimizer moments
and step counter, the agent configuration, the training iteration and
the sampler state, so an interrupted run resumes with bitwise-identical
subsequent metrics.
"""

from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from .encoder import EncoderConfig
from .errors import CheckpointFormatError, ContractViolation
from .interval import EnvConfig
from .nn import ParamStore
from .rewards import RewardConfig
from .training import TrainConfig

MAGIC = b"TSPC"
FORMAT_VERSION = 1


@dataclasses.dataclass
class Checkpoint:
    store: ParamStore
    env_cfg: EnvConfig
    enc_cfg: EncoderConfig
    reward_cfg: RewardConfig
    train_cfg: TrainConfig
    iteration: int
    rng_state: dict | None


def _write_blob(fh, payload: bytes):
    fh.write(struct.pack("<I", len(payload)))
    fh.write(payload)


def save_checkpoint(path, ckpt: Checkpoint):
    configs = {
        "env": dataclasses.asdict(ckpt.env_cfg),
        "encoder": dataclasses.asdict(ckpt.enc_cfg),
        "reward": dataclasses.asdict(ckpt.reward_cfg),
        "train": dataclasses.asdict(ckpt.train_cfg),
    }
    state = ckpt.store.state()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        _write_blob(fh, json.dumps(configs, sort_keys=True).encode("utf-8"))
        fh.write(struct.pack("<Q", ckpt.iteration))
        rng_payload = b"" if ckpt.rng_state is None else json.dumps(ckpt.rng_state).encode("utf-8")
        _write_blob(fh, rng_payload)
        fh.write(struct.pack("<I", len(state)))
        for name in state:  # insertion order: stable across runs
            entry = state[name]
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<Q", entry["t"]))
            shape = entry["data"].shape
            fh.write(struct.pack("<B", len(shape)))
            fh.write(struct.pack(f"<{len(shape)}I", *shape))
            for key in ("data", "m", "v"):
                fh.write(np.ascontiguousarray(entry[key], dtype="<f8").tobytes())


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.blob):
            raise CheckpointFormatError(
                f"truncated checkpoint: wanted {size} bytes for {what}", self.offset
            )
        chunk = self.blob[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def blob_field(self, what: str) -> bytes:
        (size,) = self.unpack("<I", f"{what} length")
        return self.take(size, what)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    if reader.take(4, "magic") != MAGIC:
        raise CheckpointFormatError("bad magic", 0)
    (version,) = reader.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported version {version}", 4)
    configs = json.loads(reader.blob_field("config blob").decode("utf-8"))
    (iteration,) = reader.unpack("<Q", "iteration")
    rng_payload = reader.blob_field("rng state")
    rng_state = json.loads(rng_payload.decode("utf-8")) if rng_payload else None
    (count,) = reader.unpack("<I", "parameter count")
    state = {}
    for k in range(count):
        (name_len,) = reader.unpack("<H", f"parameter {k} name length")
        name = reader.take(name_len, f"parameter {k} name").decode("utf-8")
        (t,) = reader.unpack("<Q", f"{name} step counter")
        (ndim,) = reader.unpack("<B", f"{name} ndim")
        shape = reader.unpack(f"<{ndim}I", f"{name} shape")
        size = int(np.prod(shape)) if ndim else 1
        arrays = {}
        for key in ("data", "m", "v"):
            arrays[key] = (
                np.frombuffer(reader.take(size * 8, f"{name} {key}"), dtype="<f8")
                .reshape(shape)
                .copy()
            )
        state[name] = {**arrays, "t": t}
    try:
        env_cfg = EnvConfig(**configs["env"])
        enc_cfg = EncoderConfig(**configs["encoder"])
        reward_cfg = RewardConfig(**configs["reward"])
        train_cfg = TrainConfig(**configs["train"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"bad config blob: {exc}", 8) from exc
    return Checkpoint(
        store=ParamStore.from_state(state),
        env_cfg=env_cfg,
        enc_cfg=enc_cfg,
        reward_cfg=reward_cfg,
        train_cfg=train_cfg,
        iteration=int(iteration),
        rng_state=rng_state,
    )


def check_dims_match(ckpt: Checkpoint, enc_cfg: EncoderConfig):
    """Raise when a checkpoint's head/encoder widths disagree with a config."""
    got = ckpt.enc_cfg
    if (got.d_u, got.d_E, got.k_samples, got.d_state, got.d_hidden) != (
        enc_cfg.d_u,
        enc_cfg.d_E,
        enc_cfg.k_samples,
        enc_cfg.d_state,
        enc_cfg.d_hidden,
    ):
        raise ContractViolation(
            f"checkpoint encoder dims {dataclasses.asdict(got)} do not match "
            f"config {dataclasses.asdict(enc_cfg)}"
        )

"""Synthetic grounding episodes and their binary file format.

Each episode pairs a clip-feature matrix with a query embedding. A
latent event vector drives both the features inside the ground-truth
interval and the query, so the interval is recoverable from the query
by construction; clips outside the interval are independent Gaussian
distractors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractViolation, EpisodeFormatError
from .interval import GroundTruth

MAGIC = b"TSPE"
FORMAT_VERSION = 1


@dataclass
class Episode:
    unit_features: np.ndarray  # [N, d_u]
    query: np.ndarray          # [d_E]
    ground_truth: GroundTruth
    episode_id: str

    @property
    def n_clips(self) -> int:
        return self.unit_features.shape[0]

    def validate(self):
        n, d_u = self.unit_features.shape
        if n < 8 or d_u < 2 or self.query.shape[0] < 2:
            raise ContractViolation(
                f"episode {self.episode_id!r}: need N >= 8 and dims >= 2, "
                f"got N={n}, d_u={d_u}, d_E={self.query.shape[0]}"
            )
        if not (np.all(np.isfinite(self.unit_features)) and np.all(np.isfinite(self.query))):
            raise ContractViolation(f"episode {self.episode_id!r}: non-finite features")
        g = self.ground_truth
        if not (0.0 <= g.start < g.end <= n):
            raise ContractViolation(f"episode {self.episode_id!r}: invalid ground truth {g}")
        return self


@dataclass(frozen=True)
class GenSpec:
    n_clips: int = 32
    d_u: int = 16
    d_E: int = 16
    d_latent: int = 8
    noise_sigma: float = 0.2
    min_gt_width: float = 4.0
    max_gt_width: float = 16.0
    seed: int = 0

    def __post_init__(self):
        if not 1.0 <= self.min_gt_width <= self.max_gt_width <= self.n_clips:
            raise ContractViolation(
                f"need 1 <= min_gt_width ({self.min_gt_width}) <= "
                f"max_gt_width ({self.max_gt_width}) <= N ({self.n_clips})"
            )
        if self.n_clips < 8 or self.d_u < 2 or self.d_E < 2 or self.d_latent < 1:
            raise ContractViolation("need N >= 8, d_u/d_E >= 2, d_latent >= 1")


@lru_cache(maxsize=32)
def _projections(seed: int, d_latent: int, d_u: int, d_E: int):
    """Fixed random projections latent -> feature space, derived from the seed."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[0])
    scale = 1.0 / np.sqrt(d_latent)
    w_v = rng.standard_normal((d_latent, d_u)) * scale
    w_q = rng.standard_normal((d_latent, d_E)) * scale
    return w_v, w_q


def projections(spec: GenSpec):
    return _projections(spec.seed, spec.d_latent, spec.d_u, spec.d_E)


def in_interval_mask(n_clips: int, g: GroundTruth) -> np.ndarray:
    """Clip i counts as inside when its center i+0.5 falls in [start, end]."""
    centers = np.arange(n_clips) + 0.5
    return (centers >= g.start) & (centers <= g.end)


def generate_episode(spec: GenSpec, rng: np.random.Generator, episode_id: str = "ep") -> Episode:
    """Draw one episode; a pure function of (spec, rng state)."""
    w_v, w_q = projections(spec)
    width = rng.uniform(spec.min_gt_width, spec.max_gt_width)
    start = rng.uniform(0.0, spec.n_clips - width)
    gt = GroundTruth(start, start + width)
    z = rng.standard_normal(spec.d_latent)
    features = rng.standard_normal((spec.n_clips, spec.d_u))
    mask = in_interval_mask(spec.n_clips, gt)
    n_in = int(mask.sum())
    features[mask] = z @ w_v + spec.noise_sigma * rng.standard_normal((n_in, spec.d_u))
    query = z @ w_q + spec.noise_sigma * rng.standard_normal(spec.d_E)
    return Episode(features, query, gt, episode_id).validate()


def generate_dataset(spec: GenSpec, count: int, id_prefix: str = "ep") -> list[Episode]:
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(2)[1])
    return [
        generate_episode(spec, rng, episode_id=f"{id_prefix}{i:06d}") for i in range(count)
    ]


def query_similarity_auc(episodes: list[Episode], spec: GenSpec) -> float:
    """Learnability gate: AUC of a nearest-centroid clip scorer (no RL).

    Each clip is scored by cosine similarity to the query mapped through
    the generator's projections; inside-interval clips should rank above
    distractors. AUC near 0.5 would mean the task carries no signal.
    """
    w_v, w_q = projections(spec)
    to_latent = np.linalg.pinv(w_q)  # [d_E, d_latent]
    scores, labels = [], []
    for ep in episodes:
        predicted = (ep.query @ to_latent) @ w_v
        norm_p = np.linalg.norm(predicted)
        feats = ep.unit_features
        sims = feats @ predicted / (np.linalg.norm(feats, axis=1) * norm_p + 1e-12)
        scores.append(sims)
        labels.append(in_interval_mask(ep.n_clips, ep.ground_truth))
    scores = np.concatenate(scores)
    labels = np.concatenate(labels)
    pos = scores[labels]
    neg = scores[~labels]
    if pos.size == 0 or neg.size == 0:
        raise ContractViolation("AUC needs both in-interval and distractor clips")
    # Mann-Whitney AUC via rank sums (ties get average rank).
    order = np.argsort(np.concatenate([pos, neg]), kind="stable")
    ranks = np.empty(order.size)
    ranks[order] = np.arange(1, order.size + 1)
    return (ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2) / (pos.size * neg.size)


# -- binary episode file -------------------------------------------------------
#
# little-endian: magic "TSPE", version u32, count u32; per episode:
# id_len u16 + UTF-8 id, N u32, d_u u32, d_E u32, g_s f64, g_e f64,
# N*d_u f64 unit features (row-major), d_E f64 query embedding.


def write_episodes(path, episodes: list[Episode]):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(episodes)))
        for ep in episodes:
            ident = ep.episode_id.encode("utf-8")
            n, d_u = ep.unit_features.shape
            fh.write(struct.pack("<H", len(ident)))
            fh.write(ident)
            fh.write(struct.pack("<IIIdd", n, d_u, ep.query.shape[0],
                                 ep.ground_truth.start, ep.ground_truth.end))
            fh.write(np.ascontiguousarray(ep.unit_features, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(ep.query, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.blob):
            raise EpisodeFormatError(
                f"truncated payload: wanted {size} bytes for {what}", self.offset
            )
        chunk = self.blob[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_episodes(path) -> list[Episode]:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    if reader.take(4, "magic") != MAGIC:
        raise EpisodeFormatError("bad magic", 0)
    version, count = reader.unpack("<II", "header")
    if version != FORMAT_VERSION:
        raise EpisodeFormatError(f"unsupported version {version}", 4)
    episodes = []
    for k in range(count):
        (id_len,) = reader.unpack("<H", f"episode {k} id length")
        ident = reader.take(id_len, f"episode {k} id").decode("utf-8")
        header_at = reader.offset
        n, d_u, d_e, g_s, g_e = reader.unpack("<IIIdd", f"episode {k} header")
        if n < 8 or d_u < 2 or d_e < 2:
            raise EpisodeFormatError(
                f"episode {k} dimension mismatch: N={n}, d_u={d_u}, d_E={d_e}", header_at
            )
        feats = np.frombuffer(
            reader.take(n * d_u * 8, f"episode {k} unit features"), dtype="<f8"
        ).reshape(n, d_u).copy()
        query = np.frombuffer(reader.take(d_e * 8, f"episode {k} query"), dtype="<f8").copy()
        episodes.append(Episode(feats, query, GroundTruth(g_s, g_e), ident).validate())
    return episodes

"""Speaker profiles: estimation from masked feature frames, dummy pools, and
the deterministic synthetic voiceprint generator used by the simulator.

A profile is the fixed-length vector a posterior model conditions on. Real
embedding extractors are out of scope; the synthetic generator gives every
speaker identity a reproducible unit-norm vector so that profile quality can
be measured (same identity -> identical vector, distinct identities ->
near-orthogonal at reasonable dimensions).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .timeline import FrameGrid

DEFAULT_PROFILE_DIM = 64

_POOL_MAGIC = "tsdiar-profile-pool"
_FEAT_MAGIC = b"TSDIARF1"


class ProfileSource(str, Enum):
    ESTIMATED = "estimated"
    DUMMY_POOL = "dummy_pool"
    ORACLE = "oracle"


@dataclass(frozen=True)
class SpeakerProfile:
    """Fixed-length numeric summary of one speaker."""

    label: str
    vector: np.ndarray
    source: ProfileSource = ProfileSource.ESTIMATED

    def __post_init__(self) -> None:
        vec = np.array(self.vector, dtype=np.float64, copy=True).reshape(-1)
        if vec.size == 0 or not np.all(np.isfinite(vec)):
            raise ValueError(f"profile vector for {self.label!r} must be non-empty and finite")
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return int(self.vector.size)


@dataclass(frozen=True)
class FeatureStream:
    """T x D feature frames on a frame grid."""

    grid: FrameGrid
    frames: np.ndarray

    def __post_init__(self) -> None:
        frames = np.array(self.frames, dtype=np.float64, copy=True)
        if frames.ndim != 2:
            raise ValueError("feature frames must be a 2-D array")
        if frames.shape[0] != self.grid.total_frames:
            raise ValueError(
                f"frame count {frames.shape[0]} does not match grid total_frames {self.grid.total_frames}"
            )
        if frames.size and not np.all(np.isfinite(frames)):
            raise ValueError("feature frames must be finite")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])


@dataclass(frozen=True)
class ProfilePool:
    """Reservoir of profiles used to pad decoder input up to model capacity."""

    profiles: tuple[SpeakerProfile, ...]
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "profiles", tuple(self.profiles))
        labels = [p.label for p in self.profiles]
        if len(set(labels)) != len(labels):
            raise ValueError("pool profile labels must be unique")

    def __len__(self) -> int:
        return len(self.profiles)


def estimate_profile(
    feats: FeatureStream,
    weights: Sequence[float] | np.ndarray,
    label: str,
    profile_dim: int | None = None,
) -> SpeakerProfile:
    """Weighted mean of feature frames, projected to the profile length.

    ``weights`` holds one value in [0, 1] per frame (a binary mask or soft
    fusion weights); the result is invariant to uniform weight scaling. The
    projection is identity when the feature dimension already matches,
    truncation when it is larger, zero-padding when smaller.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (feats.grid.total_frames,):
        raise ValueError(f"weights shape {w.shape} does not match frame count")
    if w.min() < 0.0 or w.max() > 1.0:
        raise ValueError("weights must lie in [0, 1]")
    total = float(w.sum())
    if total <= 0.0:
        raise ValueError(f"no frames for speaker {label!r}")
    mean = (w @ feats.frames) / total
    dim = feats.dim if profile_dim is None else int(profile_dim)
    if dim <= 0:
        raise ValueError("profile_dim must be positive")
    if mean.size >= dim:
        vec = mean[:dim]
    else:
        vec = np.concatenate([mean, np.zeros(dim - mean.size)])
    return SpeakerProfile(label=label, vector=vec, source=ProfileSource.ESTIMATED)


def draw_dummies(pool: ProfilePool, k: int, rng_seed: int) -> list[SpeakerProfile]:
    """Draw ``k`` distinct pool profiles, reproducibly.

    The draw is the first ``k`` entries of a seeded permutation of the pool,
    so for a fixed seed the draws for growing ``k`` are prefixes of each
    other (a decode run can hold its dummies across iterations by reusing
    one seed).
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > len(pool):
        raise ValueError(f"pool holds {len(pool)} profiles, cannot draw {k}")
    if k == 0:
        return []
    order = np.random.default_rng(rng_seed).permutation(len(pool))
    return [replace(pool.profiles[int(i)], source=ProfileSource.DUMMY_POOL) for i in order[:k]]


def synth_embed(identity: str, dim: int = DEFAULT_PROFILE_DIM) -> np.ndarray:
    """Deterministic unit-norm voiceprint for a synthetic speaker identity.

    The vector is seeded from a stable hash of the identity string: calls
    with the same identity agree exactly, across runs and platforms.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    digest = hashlib.blake2b(identity.encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def make_synthetic_pool(size: int, dim: int = DEFAULT_PROFILE_DIM, seed: int = 0) -> ProfilePool:
    """Pool of ``size`` synthetic dummy profiles with labels ``dummy000``..."""
    profiles = tuple(
        SpeakerProfile(
            label=f"dummy{i:03d}",
            vector=synth_embed(f"pool{seed}-dummy{i:03d}", dim),
            source=ProfileSource.DUMMY_POOL,
        )
        for i in range(size)
    )
    return ProfilePool(profiles=profiles, rng_seed=seed)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector has zero norm."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def save_pool(pool: ProfilePool, path) -> None:
    """Write a pool as a versioned text table: header, then one
    ``label v1 ... vL`` row per profile (full float precision)."""
    dims = {p.dim for p in pool.profiles}
    if len(dims) > 1:
        raise ValueError(f"pool mixes profile dimensions: {sorted(dims)}")
    dim = dims.pop() if dims else 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {_POOL_MAGIC} v1 dim={dim} seed={pool.rng_seed} count={len(pool)}\n")
        for p in pool.profiles:
            values = " ".join(f"{x:.17g}" for x in p.vector)
            fh.write(f"{p.label} {values}\n")


def load_pool(path) -> ProfilePool:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        parts = header.split()
        if len(parts) < 3 or parts[0] != "#" or parts[1] != _POOL_MAGIC or parts[2] != "v1":
            raise ValueError(f"not a v1 profile pool file: {header!r}")
        meta = dict(kv.split("=", 1) for kv in parts[3:])
        dim = int(meta.get("dim", "0"))
        seed = int(meta.get("seed", "0"))
        profiles = []
        for line in fh:
            if not line.strip():
                continue
            label, *values = line.split()
            vec = np.array([float(v) for v in values])
            if dim and vec.size != dim:
                raise ValueError(f"profile {label!r} has dim {vec.size}, header says {dim}")
            profiles.append(SpeakerProfile(label=label, vector=vec, source=ProfileSource.DUMMY_POOL))
    return ProfilePool(profiles=tuple(profiles), rng_seed=seed)


def save_features(stream: FeatureStream, path) -> None:
    """Write a feature stream as flat binary: magic, T, D, frame_step,
    origin header, then row-major float64 frames (little-endian)."""
    header = struct.pack("<8sIIdd", _FEAT_MAGIC, stream.grid.total_frames, stream.dim,
                         stream.grid.frame_step, stream.grid.origin)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(stream.frames, dtype="<f8").tobytes())


def load_features(path) -> FeatureStream:
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize("<8sIIdd"))
        magic, total, dim, step, origin = struct.unpack("<8sIIdd", header)
        if magic != _FEAT_MAGIC:
            raise ValueError(f"not a feature stream file: bad magic {magic!r}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != total * dim:
        raise ValueError(f"feature payload holds {data.size} values, header implies {total * dim}")
    grid = FrameGrid(frame_step=step, total_frames=int(total), origin=origin)
    return FeatureStream(grid=grid, frames=data.reshape(int(total), int(dim)))

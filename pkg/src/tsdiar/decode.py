"""Iterative target-speaker decoding around a pluggable posterior model.

The harness runs the standard two-stage loop: estimate one profile per
hypothesized speaker from sole-speaker frames of the current hypothesis,
arrange the profiles to the model's fixed capacity (discarding the least
talkative speakers or padding with dummy pool profiles), run the model, and
post-process its frame posteriors back into turns. Dummy columns never
survive into the output.
"""

from __future__ import annotations

import configparser
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Protocol, Sequence, runtime_checkable

import numpy as np
from scipy.ndimage import median_filter

from .profiles import (
    FeatureStream,
    ProfilePool,
    SpeakerProfile,
    cosine,
    draw_dummies,
    estimate_profile,
    synth_embed,
)
from .timeline import ActivityMatrix, Diarization, rasterize, segmentize, speaking_durations

logger = logging.getLogger(__name__)


@runtime_checkable
class PosteriorModel(Protocol):
    """Contract for frame-posterior models.

    ``infer`` must return a T x capacity matrix of values in [0, 1] whose
    column k is the activity estimate for input profile k. Implementations
    must be safe for concurrent calls on distinct inputs, or set an
    ``exclusive = True`` attribute; the batch layer honors it.
    """

    capacity: int
    profile_dim: int

    def infer(self, feats: FeatureStream, profiles: Sequence[SpeakerProfile]) -> ActivityMatrix:
        ...


@dataclass(frozen=True)
class OracleNoisyModel:
    """Test double standing in for a trained posterior network.

    Each input profile is matched to the ground-truth speaker whose
    synthetic voiceprint it resembles most (cosine >= match_threshold); the
    matched column is the speaker's true activity, optionally corrupted by
    boundary smearing and per-frame flips. Unmatched profiles (dummies)
    yield zero columns before corruption. With zero noise the output is
    exactly the rasterized ground truth.
    """

    ground_truth: Diarization
    capacity: int = 8
    profile_dim: int = 64
    match_threshold: float = 0.8
    flip_prob: float = 0.0
    smear_frames: int = 0
    rng_seed: int = 0
    exclusive: bool = False

    def __post_init__(self) -> None:
        if not (0.0 <= self.flip_prob < 1.0):
            raise ValueError("flip_prob must lie in [0, 1)")
        if self.smear_frames < 0:
            raise ValueError("smear_frames must be >= 0")

    def infer(self, feats: FeatureStream, profiles: Sequence[SpeakerProfile]) -> ActivityMatrix:
        if len(profiles) != self.capacity:
            raise ValueError(f"expected exactly {self.capacity} profiles, got {len(profiles)}")
        grid = feats.grid
        gt_speakers = self.ground_truth.speakers
        act = rasterize(self.ground_truth, grid, speakers=gt_speakers)
        embeds = np.array([synth_embed(s, self.profile_dim) for s in gt_speakers])
        out = np.zeros((grid.total_frames, self.capacity))
        for k, profile in enumerate(profiles):
            if not gt_speakers:
                break
            sims = [cosine(profile.vector, e) for e in embeds]
            best = int(np.argmax(sims))
            if sims[best] >= self.match_threshold:
                out[:, k] = act.values[:, best]
        rng = np.random.default_rng(self.rng_seed)
        if self.smear_frames > 0:
            out = _smear_columns(out, self.smear_frames, rng)
        if self.flip_prob > 0.0:
            flips = rng.random(out.shape) < self.flip_prob
            out = np.abs(out - flips)
        labels = tuple(p.label for p in profiles)
        return ActivityMatrix(grid=grid, speakers=labels, values=out)


def _smear_columns(values: np.ndarray, smear: int, rng: np.random.Generator) -> np.ndarray:
    """Jitter every run boundary by a uniform integer in [-smear, smear]."""
    out = np.zeros_like(values)
    total = values.shape[0]
    for j in range(values.shape[1]):
        col = values[:, j] > 0.5
        edges = np.flatnonzero(np.diff(np.concatenate(([False], col, [False])).astype(np.int8)))
        for i0, i1 in zip(edges[::2], edges[1::2]):
            lo = int(np.clip(i0 + rng.integers(-smear, smear + 1), 0, total))
            hi = int(np.clip(i1 + rng.integers(-smear, smear + 1), 0, total))
            if hi > lo:
                out[lo:hi, j] = 1.0
    return out


@dataclass(frozen=True)
class DecodeConfig:
    """Knobs of the decode loop; every field has a CLI flag and a config key."""

    capacity: int = 8
    iterations: int = 2
    binarize_threshold: float = 0.5
    median_filter_frames: int = 11
    min_turn: float = 0.2

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not (0.0 < self.binarize_threshold < 1.0):
            raise ValueError("binarize_threshold must lie in (0, 1)")
        if self.median_filter_frames < 1 or self.median_filter_frames % 2 == 0:
            raise ValueError("median_filter_frames must be a positive odd count")
        if self.min_turn < 0:
            raise ValueError("min_turn must be >= 0")

    @classmethod
    def from_file(cls, path, **overrides) -> "DecodeConfig":
        """Load from an INI-style file with a [decode] section; keyword
        overrides win over file values, file values over defaults."""
        parser = configparser.ConfigParser()
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
        values: dict = {}
        if parser.has_section("decode"):
            section = parser["decode"]
            for key in ("capacity", "iterations", "median_filter_frames"):
                if key in section:
                    values[key] = section.getint(key)
            for key in ("binarize_threshold", "min_turn"):
                if key in section:
                    values[key] = section.getfloat(key)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class ArrangedProfiles(NamedTuple):
    profiles: tuple[SpeakerProfile, ...]
    kept_labels: tuple[str, ...]
    dummy_indices: frozenset[int]


@dataclass(frozen=True)
class DecodeResult:
    final: Diarization
    history: tuple[Diarization, ...]


def estimate_speaker_count(init: Diarization) -> int:
    """Speakers with nonzero speech in the initial hypothesis."""
    return len(init.speakers)


def arrange_profiles(
    estimated: Sequence[SpeakerProfile],
    capacity: int,
    pool: ProfilePool,
    init: Diarization,
    seed: int = 0,
) -> ArrangedProfiles:
    """Fit the estimated profiles to the model capacity.

    Too many speakers: keep the ``capacity`` speakers with the longest
    non-overlapping speaking duration in ``init`` (ties: longer total
    duration, then label order) and discard the rest. Too few: append
    dummy profiles drawn from the pool. The kept profiles stay in their
    original order; dummies occupy the trailing positions.
    """
    estimated = list(estimated)
    if len(estimated) > capacity:
        solo = speaking_durations(init, "non_overlapping")
        total = speaking_durations(init, "total")
        ranked = sorted(
            estimated,
            key=lambda p: (-solo.get(p.label, 0.0), -total.get(p.label, 0.0), p.label),
        )
        keep = {p.label for p in ranked[:capacity]}
        kept = [p for p in estimated if p.label in keep]
    else:
        kept = estimated
    dummies = draw_dummies(pool, capacity - len(kept), seed)
    profiles = tuple(kept) + tuple(dummies)
    return ArrangedProfiles(
        profiles=profiles,
        kept_labels=tuple(p.label for p in kept),
        dummy_indices=frozenset(range(len(kept), capacity)),
    )


def postprocess(
    raw: ActivityMatrix,
    dummy_indices: frozenset[int] | set[int],
    kept_labels: Sequence[str],
    cfg: DecodeConfig,
    *,
    recording_id: str = "rec",
) -> Diarization:
    """Posteriors to turns: median filter per column, binarize, drop dummy
    columns, segmentize with the minimum turn length, relabel with the kept
    speaker labels."""
    values = raw.values
    keep = [j for j in range(values.shape[1]) if j not in dummy_indices]
    if len(keep) != len(kept_labels):
        raise ValueError(f"{len(keep)} non-dummy columns but {len(kept_labels)} kept labels")
    if values.size:
        filtered = median_filter(values, size=(cfg.median_filter_frames, 1), mode="nearest")
    else:
        filtered = values
    binary = (filtered >= cfg.binarize_threshold).astype(np.float64)
    act = ActivityMatrix(grid=raw.grid, speakers=tuple(kept_labels), values=binary[:, keep])
    return segmentize(act, cfg.min_turn, recording_id=recording_id)


def hypothesis_profiles(
    feats: FeatureStream,
    hyp: Diarization,
    profile_dim: int,
) -> list[SpeakerProfile]:
    """One profile per hypothesized speaker, from sole-speaker frames.

    Frames where the hypothesis marks exactly one speaker active are the
    cleanest evidence; a speaker with no such frames falls back to all of
    their speech, and a speaker with no frames on the grid at all is dropped
    for this round with a warning.
    """
    act = rasterize(hyp, feats.grid, speakers=hyp.speakers)
    solo = act.values.sum(axis=1) == 1
    out: list[SpeakerProfile] = []
    for j, speaker in enumerate(hyp.speakers):
        weights = act.values[:, j] * solo
        if weights.sum() == 0:
            weights = act.values[:, j]
        if weights.sum() == 0:
            logger.warning(
                "speaker %r has no frames on the grid; dropped for this iteration", speaker
            )
            continue
        out.append(estimate_profile(feats, weights, speaker, profile_dim))
    return out


def decode(
    feats: FeatureStream,
    init: Diarization,
    model: PosteriorModel,
    pool: ProfilePool,
    cfg: DecodeConfig,
    seed: int = 0,
) -> DecodeResult:
    """Run the iterative decode loop from an initial hypothesis.

    Each iteration re-estimates profiles from the latest hypothesis,
    arranges them to capacity (the dummy draw reuses ``seed``, so the same
    dummies are held across iterations), runs the model, and post-processes.
    ``iterations == 0`` returns the initial hypothesis unchanged.
    """
    if model.capacity != cfg.capacity:
        raise ValueError(
            f"model capacity {model.capacity} does not match config capacity {cfg.capacity}"
        )
    current = init
    history: list[Diarization] = []
    for _ in range(cfg.iterations):
        estimated = hypothesis_profiles(feats, current, model.profile_dim)
        arranged = arrange_profiles(estimated, cfg.capacity, pool, current, seed=seed)
        raw = model.infer(feats, arranged.profiles)
        current = postprocess(
            raw,
            arranged.dummy_indices,
            arranged.kept_labels,
            cfg,
            recording_id=init.recording_id,
        )
        history.append(current)
    return DecodeResult(final=current, history=tuple(history))


def decode_many(
    jobs_input: Sequence[tuple[FeatureStream, Diarization]],
    model: PosteriorModel,
    pool: ProfilePool,
    cfg: DecodeConfig,
    seed: int = 0,
    jobs: int = 1,
) -> list[DecodeResult]:
    """Decode several recordings, concurrently when the model allows it.

    Each recording decodes independently and deterministically; a model that
    declares ``exclusive = True`` is never called from two threads at once.
    Results come back in input order.
    """
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    if getattr(model, "exclusive", False):
        jobs = 1
    if jobs == 1 or len(jobs_input) <= 1:
        return [decode(feats, init, model, pool, cfg, seed=seed) for feats, init in jobs_input]
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        return list(
            executor.map(lambda fi: decode(fi[0], fi[1], model, pool, cfg, seed=seed), jobs_input)
        )

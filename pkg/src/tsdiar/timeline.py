"""Speaker turn timelines and their frame-grid projections.

Two domains share these types: the segment domain (who spoke when, in
seconds) and the frame domain (per-frame activity values on a fixed grid).
Frame membership uses the midpoint rule throughout: a frame belongs to a
turn iff the frame's midpoint falls inside the turn's half-open interval,
which keeps boundary-touching turns unambiguous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from . import intervals

# Same-speaker turns closer than this are treated as abutting and merged;
# large enough to absorb float drift, far below 1 ms timing resolution.
_MERGE_EPS = 1e-9


@dataclass(frozen=True)
class Turn:
    """One contiguous stretch of speech by one speaker."""

    recording_id: str
    speaker: str
    onset: float
    duration: float

    def __post_init__(self) -> None:
        if not self.recording_id or any(c.isspace() for c in self.recording_id):
            raise ValueError(f"invalid recording_id: {self.recording_id!r}")
        if not self.speaker or any(c.isspace() for c in self.speaker):
            raise ValueError(f"invalid speaker label: {self.speaker!r}")
        if not (math.isfinite(self.onset) and self.onset >= 0.0):
            raise ValueError(f"turn onset must be finite and >= 0, got {self.onset!r}")
        if not (math.isfinite(self.duration) and self.duration > 0.0):
            raise ValueError(f"turn duration must be finite and > 0, got {self.duration!r}")

    @property
    def offset(self) -> float:
        return self.onset + self.duration


@dataclass(frozen=True)
class Diarization:
    """All turns of one recording, canonically normalized.

    Construction merges overlapping or abutting turns of the same speaker
    (field RTTMs routinely contain both, and merging makes per-speaker
    durations well defined) and sorts the result by (onset, speaker) so that
    serialization is deterministic.
    """

    recording_id: str
    turns: tuple[Turn, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", self._normalize(self.turns))

    def _normalize(self, turns: Iterable[Turn]) -> tuple[Turn, ...]:
        by_speaker: dict[str, list[Turn]] = {}
        for t in turns:
            if t.recording_id != self.recording_id:
                raise ValueError(
                    f"turn for {t.recording_id!r} cannot join diarization of {self.recording_id!r}"
                )
            by_speaker.setdefault(t.speaker, []).append(t)
        merged: list[Turn] = []
        for speaker, group in by_speaker.items():
            group.sort(key=lambda t: t.onset)
            cur_on, cur_off = group[0].onset, group[0].offset
            for t in group[1:]:
                if t.onset <= cur_off + _MERGE_EPS:
                    cur_off = max(cur_off, t.offset)
                else:
                    merged.append(Turn(self.recording_id, speaker, cur_on, cur_off - cur_on))
                    cur_on, cur_off = t.onset, t.offset
            merged.append(Turn(self.recording_id, speaker, cur_on, cur_off - cur_on))
        merged.sort(key=lambda t: (t.onset, t.speaker))
        return tuple(merged)

    @property
    def speakers(self) -> tuple[str, ...]:
        """Distinct speaker labels, sorted."""
        return tuple(sorted({t.speaker for t in self.turns}))

    @property
    def extent(self) -> float:
        """Largest turn offset, or 0.0 when empty."""
        return max((t.offset for t in self.turns), default=0.0)

    def speaker_intervals(self, speaker: str) -> list[intervals.Interval]:
        """Merged (onset, offset) intervals of one speaker."""
        return [(t.onset, t.offset) for t in self.turns if t.speaker == speaker]

    def speech_support(self) -> list[intervals.Interval]:
        """Union of all turns, as disjoint intervals."""
        return intervals.merge((t.onset, t.offset) for t in self.turns)

    def relabeled(self, label_map: dict[str, str]) -> "Diarization":
        """Copy with speaker labels translated; labels absent from the map are kept."""
        turns = tuple(
            Turn(self.recording_id, label_map.get(t.speaker, t.speaker), t.onset, t.duration)
            for t in self.turns
        )
        return Diarization(self.recording_id, turns)


@dataclass(frozen=True)
class FrameGrid:
    """Uniform frame grid: ``total_frames`` frames of ``frame_step`` seconds from ``origin``."""

    frame_step: float = 0.010
    total_frames: int = 0
    origin: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.frame_step) and self.frame_step > 0.0):
            raise ValueError(f"frame_step must be finite and > 0, got {self.frame_step!r}")
        if self.total_frames < 0:
            raise ValueError(f"total_frames must be >= 0, got {self.total_frames!r}")
        if not math.isfinite(self.origin):
            raise ValueError("origin must be finite")

    @classmethod
    def covering(cls, extent: float, frame_step: float = 0.010, origin: float = 0.0) -> "FrameGrid":
        """Smallest grid whose frames cover ``[origin, extent)``."""
        span = max(0.0, extent - origin)
        total = int(math.ceil(span / frame_step - 1e-9)) if span > 0 else 0
        return cls(frame_step=frame_step, total_frames=total, origin=origin)

    @property
    def duration(self) -> float:
        return self.total_frames * self.frame_step

    def midpoints(self) -> np.ndarray:
        """Frame midpoint times, shape (total_frames,)."""
        return self.origin + (np.arange(self.total_frames) + 0.5) * self.frame_step


@dataclass(frozen=True)
class ActivityMatrix:
    """Per-frame, per-speaker activity values in [0, 1] on a frame grid."""

    grid: FrameGrid
    speakers: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        speakers = tuple(self.speakers)
        if len(set(speakers)) != len(speakers):
            raise ValueError(f"duplicate speaker labels: {speakers!r}")
        vals = np.array(self.values, dtype=np.float64, copy=True)
        expected = (self.grid.total_frames, len(speakers))
        if vals.shape != expected:
            raise ValueError(f"values shape {vals.shape} does not match grid/speakers {expected}")
        if vals.size and (not np.all(np.isfinite(vals)) or vals.min() < 0.0 or vals.max() > 1.0):
            raise ValueError("activity values must lie in [0, 1]")
        vals.setflags(write=False)
        object.__setattr__(self, "speakers", speakers)
        object.__setattr__(self, "values", vals)

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))

    def column(self, speaker: str) -> np.ndarray:
        return self.values[:, self.speakers.index(speaker)]


def rasterize(
    diar: Diarization,
    grid: FrameGrid,
    speakers: Sequence[str] | None = None,
) -> ActivityMatrix:
    """Project turns onto a frame grid: entry (t, s) is 1 iff speaker ``s``
    has a turn covering frame ``t``'s midpoint.

    ``speakers`` fixes the column order and may include labels absent from
    the diarization (their columns stay zero); by default the diarization's
    own sorted speaker list is used. Turns of unlisted speakers are ignored.
    """
    cols = tuple(speakers) if speakers is not None else diar.speakers
    index = {s: j for j, s in enumerate(cols)}
    vals = np.zeros((grid.total_frames, len(cols)))
    mids = grid.midpoints()
    for t in diar.turns:
        j = index.get(t.speaker)
        if j is None:
            continue
        lo = int(np.searchsorted(mids, t.onset, side="left"))
        hi = int(np.searchsorted(mids, t.offset, side="left"))
        vals[lo:hi, j] = 1.0
    return ActivityMatrix(grid=grid, speakers=cols, values=vals)


def segmentize(
    act: ActivityMatrix,
    min_duration: float = 0.0,
    *,
    recording_id: str = "rec",
) -> Diarization:
    """Convert a binarized activity matrix back into turns.

    Maximal runs of ones become turns spanning their frames; runs shorter
    than ``min_duration`` are dropped. With ``min_duration=0`` this inverts
    :func:`rasterize` exactly on the same grid.
    """
    if not act.is_binary:
        raise ValueError("segmentize requires a binarized activity matrix")
    step, origin = act.grid.frame_step, act.grid.origin
    min_frames = max(1, int(math.ceil(min_duration / step - 1e-9))) if min_duration > 0 else 1
    turns: list[Turn] = []
    for j, speaker in enumerate(act.speakers):
        col = act.values[:, j] > 0.5
        edges = np.flatnonzero(np.diff(np.concatenate(([False], col, [False])).astype(np.int8)))
        for i0, i1 in zip(edges[::2], edges[1::2]):
            if i1 - i0 < min_frames:
                continue
            turns.append(Turn(recording_id, speaker, origin + i0 * step, (i1 - i0) * step))
    return Diarization(recording_id, tuple(turns))


def overlap_regions(diar: Diarization) -> list[tuple[float, float, frozenset[str]]]:
    """Partition the speech support into maximal regions with a constant
    active-speaker set. Regions whose set has two or more members are overlap.
    """
    if not diar.turns:
        return []
    points = np.array(sorted({b for t in diar.turns for b in (t.onset, t.offset)}))
    mids = (points[:-1] + points[1:]) / 2.0
    active = np.zeros((len(mids), len(diar.speakers)), dtype=bool)
    for j, speaker in enumerate(diar.speakers):
        ivs = diar.speaker_intervals(speaker)
        onsets = np.array([iv[0] for iv in ivs])
        offsets = np.array([iv[1] for iv in ivs])
        k = np.searchsorted(onsets, mids, side="right") - 1
        valid = k >= 0
        active[valid, j] = mids[valid] < offsets[k[valid]]
    regions: list[tuple[float, float, frozenset[str]]] = []
    labels = diar.speakers
    for i in range(len(mids)):
        present = frozenset(labels[j] for j in np.flatnonzero(active[i]))
        if not present:
            continue
        if regions and regions[-1][2] == present and regions[-1][1] == points[i]:
            regions[-1] = (regions[-1][0], float(points[i + 1]), present)
        else:
            regions.append((float(points[i]), float(points[i + 1]), present))
    return regions


def speaking_durations(
    diar: Diarization,
    mode: Literal["total", "non_overlapping"] = "total",
) -> dict[str, float]:
    """Per-speaker speaking time in seconds.

    ``total`` counts each speaker's full (merged) turn time;
    ``non_overlapping`` counts only the regions where the speaker is the
    sole active speaker.
    """
    if mode == "total":
        out = {s: 0.0 for s in diar.speakers}
        for t in diar.turns:
            out[t.speaker] += t.duration
        return out
    if mode == "non_overlapping":
        out = {s: 0.0 for s in diar.speakers}
        for on, off, present in overlap_regions(diar):
            if len(present) == 1:
                (speaker,) = present
                out[speaker] += off - on
        return out
    raise ValueError(f"unknown mode {mode!r}")

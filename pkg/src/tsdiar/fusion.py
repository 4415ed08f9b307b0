"""Cross-system label alignment and weighted frame-level fusion.

Multiple diarization systems label the same recording with unrelated speaker
names. Alignment maps every system into the label space of an anchor system
(the first hypothesis) by maximizing pairwise overlap duration; fusion then
combines the systems' binary activity indicators into per-frame weights
``W[i, s] = sum_n g_n * vad_n[i, s]`` with the system weights normalized to
sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import Mapping, optimal_speaker_mapping
from .timeline import ActivityMatrix, Diarization, FrameGrid, rasterize


@dataclass(frozen=True)
class SystemHypothesis:
    """One diarization system's output for a recording, with its fusion weight."""

    system_id: str
    diar: Diarization
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.weight < 0:
            raise ValueError(f"system weight must be >= 0, got {self.weight!r}")


@dataclass(frozen=True)
class FusedActivity:
    """Per-frame fused weights over a global speaker list; entries in [0, 1]."""

    grid: FrameGrid
    speakers: tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.weights, dtype=np.float64, copy=True)
        if vals.shape != (self.grid.total_frames, len(self.speakers)):
            raise ValueError(f"weights shape {vals.shape} does not match grid/speakers")
        if vals.size and (vals.min() < -1e-9 or vals.max() > 1.0 + 1e-9):
            raise ValueError("fused weights must lie in [0, 1]")
        vals = np.clip(vals, 0.0, 1.0)
        vals.setflags(write=False)
        object.__setattr__(self, "speakers", tuple(self.speakers))
        object.__setattr__(self, "weights", vals)


def _check_same_recording(hyps: list[SystemHypothesis]) -> str:
    if not hyps:
        raise ValueError("at least one system hypothesis is required")
    recording_ids = {h.diar.recording_id for h in hyps}
    if len(recording_ids) != 1:
        raise ValueError(f"hypotheses span multiple recordings: {sorted(recording_ids)}")
    return hyps[0].diar.recording_id


def align_labels(
    hyps: list[SystemHypothesis],
) -> tuple[tuple[str, ...], dict[str, Mapping]]:
    """Map every system's speakers into one global label space.

    The first hypothesis is the anchor; its labels are adopted unchanged.
    Every other system is assigned to the anchor's speakers by maximal
    overlap duration, independently per system; speakers that match nothing
    in the anchor become new global labels (renamed ``system_id:label`` only
    on collision). Returns the global speaker list and, per system, the
    Mapping from that system's labels (side a) to global labels (side b).
    """
    _check_same_recording(hyps)
    anchor = hyps[0]
    global_labels: list[str] = list(anchor.diar.speakers)
    mappings: dict[str, Mapping] = {
        anchor.system_id: Mapping(
            pairs=tuple((s, s) for s in anchor.diar.speakers),
            unmatched_b=frozenset(),
        )
    }
    for hyp in hyps[1:]:
        anchor_to_sys = optimal_speaker_mapping(anchor.diar, hyp.diar)
        sys_to_global = dict((s, a) for a, s in anchor_to_sys.pairs)
        for sys_label in hyp.diar.speakers:
            if sys_label in sys_to_global:
                continue
            candidate = sys_label
            if candidate in global_labels:
                candidate = f"{hyp.system_id}:{sys_label}"
            n = 2
            while candidate in global_labels:
                candidate = f"{hyp.system_id}:{sys_label}:{n}"
                n += 1
            global_labels.append(candidate)
            sys_to_global[sys_label] = candidate
        mappings[hyp.system_id] = Mapping(
            pairs=tuple(sorted(sys_to_global.items())),
            unmatched_b=frozenset(set(global_labels) - set(sys_to_global.values())),
        )
    globals_tuple = tuple(global_labels)
    # earlier systems miss labels introduced by later ones
    mappings = {
        sid: Mapping(pairs=m.pairs, unmatched_a=m.unmatched_a,
                     unmatched_b=frozenset(set(globals_tuple) - {b for _, b in m.pairs}))
        for sid, m in mappings.items()
    }
    return globals_tuple, mappings


def fuse(hyps: list[SystemHypothesis], grid: FrameGrid) -> FusedActivity:
    """Weighted per-frame fusion of aligned systems.

    Weights are normalized to sum to one on entry. A system that lacks a
    global speaker contributes zero activity for that speaker everywhere.
    """
    _check_same_recording(hyps)
    raw = np.array([h.weight for h in hyps], dtype=np.float64)
    if raw.sum() <= 0:
        raise ValueError("system weights must not all be zero")
    g = raw / raw.sum()
    global_labels, mappings = align_labels(hyps)
    weights = np.zeros((grid.total_frames, len(global_labels)))
    for h, g_n in zip(hyps, g):
        translated = h.diar.relabeled(mappings[h.system_id].a_to_b)
        vad = rasterize(translated, grid, speakers=global_labels)
        weights += g_n * vad.values
    return FusedActivity(grid=grid, speakers=global_labels, weights=weights)


def select_mask(
    fused: FusedActivity,
    threshold: float = 0.5,
    sole_speaker: bool = False,
) -> ActivityMatrix:
    """Binarize fused weights: active where ``W >= threshold``.

    With ``sole_speaker`` on, frames where two or more speakers pass the
    threshold are zeroed for everyone, leaving only unambiguous
    single-speaker frames (the mask used for profile estimation).
    """
    if not (0.0 < threshold <= 1.0):
        raise ValueError(f"threshold must lie in (0, 1], got {threshold!r}")
    mask = fused.weights >= threshold
    if sole_speaker:
        mask &= mask.sum(axis=1, keepdims=True) == 1
    return ActivityMatrix(grid=fused.grid, speakers=fused.speakers, values=mask.astype(np.float64))

"""Overlap-aware diarization and transcription metrics.

DER is computed with exact interval arithmetic over homogeneous regions (no
frame quantization), with overlap scored at multiplicity: a region with two
reference speakers and no hypothesis speakers contributes twice its duration
to the missed time. JER follows the DIHARD formulation. cpWER concatenates
each speaker's utterances in onset order and minimizes the total word error
over speaker pairings via optimal assignment.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass
from typing import Iterable, Mapping as MappingT, Sequence

import numpy as np

from . import intervals
from ._assignment import lexmin_assignment
from .rttm import SpeakerTranscript
from .timeline import Diarization


@dataclass(frozen=True)
class Mapping:
    """Partial bijection between two speaker label sets."""

    pairs: tuple[tuple[str, str], ...] = ()
    unmatched_a: frozenset[str] = frozenset()
    unmatched_b: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        pairs = tuple(sorted(self.pairs))
        a_side = [a for a, _ in pairs]
        b_side = [b for _, b in pairs]
        if len(set(a_side)) != len(a_side) or len(set(b_side)) != len(b_side):
            raise ValueError(f"mapping pairs are not a partial bijection: {pairs!r}")
        if set(a_side) & set(self.unmatched_a) or set(b_side) & set(self.unmatched_b):
            raise ValueError("a label cannot be both paired and unmatched")
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "unmatched_a", frozenset(self.unmatched_a))
        object.__setattr__(self, "unmatched_b", frozenset(self.unmatched_b))

    @property
    def a_to_b(self) -> dict[str, str]:
        return dict(self.pairs)

    @property
    def b_to_a(self) -> dict[str, str]:
        return {b: a for a, b in self.pairs}

    def to_dict(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "unmatched_a": sorted(self.unmatched_a),
            "unmatched_b": sorted(self.unmatched_b),
        }


@dataclass(frozen=True)
class DerReport:
    missed: float
    false_alarm: float
    confusion: float
    total_ref_speech: float
    der: float
    collar: float
    mapping: Mapping

    def to_dict(self) -> dict:
        return {
            "der": self.der,
            "missed": self.missed,
            "false_alarm": self.false_alarm,
            "confusion": self.confusion,
            "total_ref_speech": self.total_ref_speech,
            "collar": self.collar,
            "mapping": self.mapping.to_dict(),
        }


@dataclass(frozen=True)
class JerReport:
    per_speaker_jer: dict[str, float]
    jer: float

    def to_dict(self) -> dict:
        return {"jer": self.jer, "per_speaker_jer": dict(sorted(self.per_speaker_jer.items()))}


@dataclass(frozen=True)
class CpWerReport:
    substitutions: int
    deletions: int
    insertions: int
    ref_words: int
    cpwer: float
    permutation: Mapping

    def to_dict(self) -> dict:
        return {
            "cpwer": self.cpwer,
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "ref_words": self.ref_words,
            "permutation": self.permutation.to_dict(),
        }


def _speaker_intervals(diar: Diarization) -> dict[str, list[intervals.Interval]]:
    return {s: diar.speaker_intervals(s) for s in diar.speakers}


def overlap_duration_matrix(
    ref: Diarization, hyp: Diarization
) -> tuple[tuple[str, ...], tuple[str, ...], np.ndarray]:
    """Pairwise speech overlap in seconds between ref and hyp speakers."""
    ref_iv = _speaker_intervals(ref)
    hyp_iv = _speaker_intervals(hyp)
    ref_labels, hyp_labels = ref.speakers, hyp.speakers
    m = np.zeros((len(ref_labels), len(hyp_labels)))
    for i, r in enumerate(ref_labels):
        for j, h in enumerate(hyp_labels):
            m[i, j] = intervals.total(intervals.intersect(ref_iv[r], hyp_iv[h]))
    return ref_labels, hyp_labels, m


def optimal_speaker_mapping(ref: Diarization, hyp: Diarization) -> Mapping:
    """Speaker pairing that maximizes total pairwise overlap duration.

    Pairs with zero overlap are dropped (those labels stay unmatched); ties
    between equally good assignments break toward lexicographically smaller
    label pairs, so the result is deterministic.
    """
    ref_labels, hyp_labels, m = overlap_duration_matrix(ref, hyp)
    pairs = []
    for i, j in lexmin_assignment(m, maximize=True):
        if m[i, j] > 0.0:
            pairs.append((ref_labels[i], hyp_labels[j]))
    matched_a = {a for a, _ in pairs}
    matched_b = {b for _, b in pairs}
    return Mapping(
        pairs=tuple(pairs),
        unmatched_a=frozenset(set(ref_labels) - matched_a),
        unmatched_b=frozenset(set(hyp_labels) - matched_b),
    )


def _region_activity(
    points: np.ndarray, speaker_ivs: dict[str, list[intervals.Interval]], labels: Sequence[str]
) -> np.ndarray:
    """Boolean (regions x speakers) activity at the midpoint of each elementary region."""
    mids = (points[:-1] + points[1:]) / 2.0
    act = np.zeros((len(mids), len(labels)), dtype=bool)
    for j, label in enumerate(labels):
        ivs = speaker_ivs.get(label, [])
        if not ivs:
            continue
        onsets = np.array([iv[0] for iv in ivs])
        offsets = np.array([iv[1] for iv in ivs])
        k = np.searchsorted(onsets, mids, side="right") - 1
        valid = k >= 0
        act[valid, j] = mids[valid] < offsets[k[valid]]
    return act


def der(
    ref: Diarization,
    hyp: Diarization,
    collar: float = 0.0,
    uem: Iterable[intervals.Interval] | None = None,
) -> DerReport:
    """Diarization error rate with exact interval arithmetic.

    Every homogeneous region contributes ``duration * max(0, Nref - Nhyp)``
    to missed speech, ``duration * max(0, Nhyp - Nref)`` to false alarm, and
    ``duration * (min(Nref, Nhyp) - Ncorrect)`` to confusion, where Ncorrect
    counts reference speakers whose optimally mapped hypothesis speaker is
    active. The denominator is reference speaker time inside the scoring
    regions.

    ``collar`` excises a no-score zone of +/- ``collar`` seconds around every
    reference turn boundary. ``uem`` restricts scoring to the given regions;
    by default the full extent of both diarizations is scored. The speaker
    mapping is always computed from the full diarizations.
    """
    if collar < 0:
        raise ValueError("collar must be >= 0")
    mapping = optimal_speaker_mapping(ref, hyp)

    extent = max(ref.extent, hyp.extent)
    support = intervals.merge(uem) if uem is not None else ([(0.0, extent)] if extent > 0 else [])
    if collar > 0:
        zones = intervals.merge(
            (b - collar, b + collar) for t in ref.turns for b in (t.onset, t.offset)
        )
        support = intervals.subtract(support, zones)

    missed = false_alarm = confusion = total_ref = 0.0
    if support:
        ref_iv = _speaker_intervals(ref)
        hyp_iv = _speaker_intervals(hyp)
        bounds: set[float] = set()
        for ivs in (*ref_iv.values(), *hyp_iv.values(), support):
            for on, off in ivs:
                bounds.update((on, off))
        points = np.array(sorted(bounds))
        if len(points) >= 2:
            mids = (points[:-1] + points[1:]) / 2.0
            durations = np.diff(points)
            s_on = np.array([iv[0] for iv in support])
            s_off = np.array([iv[1] for iv in support])
            k = np.searchsorted(s_on, mids, side="right") - 1
            in_support = (k >= 0) & (mids < s_off[np.clip(k, 0, None)])

            ref_act = _region_activity(points, ref_iv, ref.speakers)
            hyp_act = _region_activity(points, hyp_iv, hyp.speakers)
            n_ref = ref_act.sum(axis=1)
            n_hyp = hyp_act.sum(axis=1)
            ref_pos = {s: i for i, s in enumerate(ref.speakers)}
            hyp_pos = {s: i for i, s in enumerate(hyp.speakers)}
            n_correct = np.zeros(len(mids), dtype=np.int64)
            for a, b in mapping.pairs:
                n_correct += ref_act[:, ref_pos[a]] & hyp_act[:, hyp_pos[b]]

            d = durations * in_support
            missed = float(np.sum(d * np.maximum(0, n_ref - n_hyp)))
            false_alarm = float(np.sum(d * np.maximum(0, n_hyp - n_ref)))
            confusion = float(np.sum(d * (np.minimum(n_ref, n_hyp) - n_correct)))
            total_ref = float(np.sum(d * n_ref))

    errors = missed + false_alarm + confusion
    if total_ref > 0:
        value = errors / total_ref
    else:
        value = math.inf if errors > 0 else 0.0
    return DerReport(
        missed=missed,
        false_alarm=false_alarm,
        confusion=confusion,
        total_ref_speech=total_ref,
        der=value,
        collar=collar,
        mapping=mapping,
    )


def jer(ref: Diarization, hyp: Diarization) -> JerReport:
    """Jaccard error rate: mean over reference speakers of 1 - overlap/union
    with the optimally mapped hypothesis speaker; unmapped speakers score 1.
    """
    mapping = optimal_speaker_mapping(ref, hyp)
    pair_of = mapping.a_to_b
    per_speaker: dict[str, float] = {}
    for r in ref.speakers:
        h = pair_of.get(r)
        if h is None:
            per_speaker[r] = 1.0
            continue
        r_iv = ref.speaker_intervals(r)
        h_iv = hyp.speaker_intervals(h)
        inter = intervals.total(intervals.intersect(r_iv, h_iv))
        union = intervals.total([*r_iv, *h_iv])
        per_speaker[r] = 1.0 - inter / union if union > 0 else 1.0
    mean = sum(per_speaker.values()) / len(per_speaker) if per_speaker else 0.0
    return JerReport(per_speaker_jer=per_speaker, jer=mean)


_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_words(tokens: Iterable[str]) -> list[str]:
    """cpWER text normalization: case-fold and strip punctuation."""
    out = []
    for tok in tokens:
        t = tok.casefold().translate(_PUNCT_TABLE)
        if t:
            out.append(t)
    return out


def _levenshtein_counts(ref: Sequence[int], hyp: Sequence[int]) -> tuple[int, int, int]:
    """(substitutions, deletions, insertions) of a minimal word-level edit
    script from hyp to ref, unit costs. Ties prefer substitution, then
    deletion, then insertion."""
    n, m = len(ref), len(hyp)
    if n == 0:
        return 0, 0, m
    if m == 0:
        return 0, n, 0
    ref_a = np.asarray(ref, dtype=np.int64)
    hyp_a = np.asarray(hyp, dtype=np.int64)
    d = np.zeros((n + 1, m + 1), dtype=np.int32)
    d[0, :] = np.arange(m + 1)
    d[:, 0] = np.arange(n + 1)
    slope = np.arange(m + 1, dtype=np.int32)
    for i in range(1, n + 1):
        sub = d[i - 1, :-1] + (hyp_a != ref_a[i - 1])
        dele = d[i - 1, 1:] + 1
        cand = np.empty(m + 1, dtype=np.int32)
        cand[0] = i
        cand[1:] = np.minimum(sub, dele)
        # horizontal (insertion) closure: d[i,j] = min_{k<=j} cand[k] + (j-k)
        d[i, :] = np.minimum.accumulate(cand - slope) + slope
    subs = dels = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + (ref_a[i - 1] != hyp_a[j - 1]):
            if ref_a[i - 1] != hyp_a[j - 1]:
                subs += 1
            i, j = i - 1, j - 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return subs, dels, ins


def cpwer(
    ref: MappingT[str, SpeakerTranscript],
    hyp: MappingT[str, SpeakerTranscript],
) -> CpWerReport:
    """Concatenated minimum-permutation word error rate.

    Each speaker's utterances are concatenated in onset order and normalized;
    the ref/hyp speaker pairing minimizing total edit cost is found by
    optimal assignment (total cost is additive over pairs, so this equals
    the brute-force minimum over pairings). Unmatched reference streams
    count as deletions, unmatched hypothesis streams as insertions.
    """
    ref_labels = tuple(sorted(ref))
    hyp_labels = tuple(sorted(hyp))
    vocab: dict[str, int] = {}

    def encode(transcript: SpeakerTranscript) -> list[int]:
        return [vocab.setdefault(w, len(vocab)) for w in normalize_words(transcript.words())]

    ref_words = {s: encode(ref[s]) for s in ref_labels}
    hyp_words = {s: encode(hyp[s]) for s in hyp_labels}
    n_ref_words = sum(len(w) for w in ref_words.values())
    if not ref_labels or n_ref_words == 0:
        raise ValueError("cpWER is undefined for an empty reference corpus")

    counts = {}
    cost = np.zeros((len(ref_labels), len(hyp_labels)))
    for i, r in enumerate(ref_labels):
        for j, h in enumerate(hyp_labels):
            sdi = _levenshtein_counts(ref_words[r], hyp_words[h])
            counts[(i, j)] = sdi
            # leaving r unmatched costs len(r) deletions and h unmatched
            # len(h) insertions, so the assignment must weigh each pair by
            # its saving over staying unmatched (constant offset aside)
            cost[i, j] = sum(sdi) - len(ref_words[r]) - len(hyp_words[h])

    pairs = lexmin_assignment(cost, maximize=False)
    subs = dels = ins = 0
    matched_r = set()
    matched_h = set()
    labeled_pairs = []
    for i, j in pairs:
        s, d, k = counts[(i, j)]
        subs, dels, ins = subs + s, dels + d, ins + k
        matched_r.add(i)
        matched_h.add(j)
        labeled_pairs.append((ref_labels[i], hyp_labels[j]))
    for i, r in enumerate(ref_labels):
        if i not in matched_r:
            dels += len(ref_words[r])
    for j, h in enumerate(hyp_labels):
        if j not in matched_h:
            ins += len(hyp_words[h])

    mapping = Mapping(
        pairs=tuple(labeled_pairs),
        unmatched_a=frozenset(r for i, r in enumerate(ref_labels) if i not in matched_r),
        unmatched_b=frozenset(h for j, h in enumerate(hyp_labels) if j not in matched_h),
    )
    total = subs + dels + ins
    return CpWerReport(
        substitutions=subs,
        deletions=dels,
        insertions=ins,
        ref_words=n_ref_words,
        cpwer=total / n_ref_words,
        permutation=mapping,
    )

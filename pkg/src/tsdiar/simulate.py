"""Synthetic meeting sessions for end-to-end pipeline testing.

Sessions are generated above the signal level: ground-truth turns with a
controlled overlap ratio, feature frames built from the speakers' synthetic
voiceprints, per-speaker transcripts, and perturbed copies of the ground
truth that imitate the error profiles of real initialization systems. All
turn boundaries are quantized to 1 ms, so RTTM round-trips are exact and
millisecond frame counting agrees with interval arithmetic.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable, Iterable, Literal, Sequence

import numpy as np

from . import intervals, metrics
from .profiles import DEFAULT_PROFILE_DIM, FeatureStream, save_features, synth_embed
from .rttm import SpeakerTranscript, dump_rttm, write_transcripts
from .timeline import Diarization, FrameGrid, Turn, overlap_regions, rasterize

PERTURB_STYLES = ("boundary_jitter", "miss_overlap", "merge_speakers")

_FEATURE_NOISE = 0.05
_MIN_UTT, _MAX_UTT = 2.0, 12.0
_TOKENS_PER_SECOND = 1.0 / 0.3

_LEXICON = (
    "the of and to in is that for with was on as are this by from at or an "
    "be we you not have it his they which one had all their were when who "
    "will more no out up time so what about than into them can only other "
    "new some could these two may then do first any my now such like our "
    "over man me even most made after also did many before must through"
).split()


class CalibrationError(RuntimeError):
    """A generation or perturbation target could not be reached."""


@dataclass(frozen=True)
class SessionSpec:
    """Recipe for one synthetic session."""

    n_speakers: int
    duration: float = 600.0
    target_overlap: float = 0.0
    silence_style: Literal["short", "long"] = "short"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_speakers < 1:
            raise ValueError("n_speakers must be >= 1")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if not (0.0 <= self.target_overlap <= 0.45):
            raise ValueError(f"target_overlap must lie in [0, 0.45], got {self.target_overlap!r}")
        if self.silence_style not in ("short", "long"):
            raise ValueError(f"silence_style must be 'short' or 'long', got {self.silence_style!r}")


@dataclass(frozen=True)
class SyntheticSession:
    ground_truth: Diarization
    feats: FeatureStream
    transcripts: dict[str, SpeakerTranscript]
    measured_overlap: float


def measure_overlap_ratio(diar: Diarization) -> float:
    """Overlapped fraction of the speech support: time with >= 2 active
    speakers divided by time with >= 1 active speaker."""
    regions = overlap_regions(diar)
    support = sum(off - on for on, off, _ in regions)
    if support == 0:
        return 0.0
    overlapped = sum(off - on for on, off, present in regions if len(present) >= 2)
    return overlapped / support


def _quantize(x: float) -> float:
    return round(x * 1000.0) / 1000.0


def _layout_turns(spec: SessionSpec, rng: np.random.Generator, recording_id: str) -> list[Turn]:
    """Place utterances sequentially, steering per-boundary overlap toward
    the target union-based ratio with a deficit feedback rule."""
    speakers = [f"spk{i}" for i in range(spec.n_speakers)]
    gap_scale = 4.0 if spec.silence_style == "long" else 1.0
    # union-based ratio r satisfies overlap = r/(1+r) * total speaker time
    ov_frac = spec.target_overlap / (1.0 + spec.target_overlap)

    order = list(rng.permutation(spec.n_speakers))
    utts: list[tuple[str, float, float]] = []
    speech_sum = 0.0
    overlap_sum = 0.0
    prev_speaker: str | None = None
    prev_onset = prev_end = 0.0
    guard_end = 0.0  # latest end among utterances before the previous one
    onset = float(rng.uniform(0.0, 0.5))
    k = 0
    while True:
        if k < len(order):
            speaker = speakers[order[k]]
        else:
            choices = [s for s in speakers if s != prev_speaker] or speakers
            speaker = choices[int(rng.integers(len(choices)))]
        dur = float(rng.uniform(_MIN_UTT, _MAX_UTT))
        if utts:
            deficit = ov_frac * (speech_sum + dur) - overlap_sum
            cap = min(prev_end - prev_onset - 0.1, prev_end - guard_end - 0.05, dur - 0.1, 5.0)
            want = deficit > 0.05 and speaker != prev_speaker and spec.n_speakers > 1
            o = min(cap, float(deficit * rng.uniform(0.9, 1.3))) if want else 0.0
            if o >= 0.2:
                onset = prev_end - o
                overlap_sum += o
            else:
                onset = prev_end + float(rng.uniform(0.2, 2.0)) * gap_scale
        if onset + dur > spec.duration:
            break
        utts.append((speaker, onset, dur))
        speech_sum += dur
        guard_end = max(guard_end, prev_end if len(utts) > 1 else 0.0)
        prev_speaker, prev_onset, prev_end = speaker, onset, onset + dur
        k += 1
    if len({s for s, _, _ in utts}) < spec.n_speakers:
        raise CalibrationError(
            f"duration {spec.duration}s is too short to seat {spec.n_speakers} speakers"
        )
    turns = []
    for speaker, on, dur in utts:
        q_on = _quantize(on)
        q_off = _quantize(on + dur)
        turns.append(Turn(recording_id, speaker, q_on, q_off - q_on))
    return turns


def generate(spec: SessionSpec, recording_id: str | None = None) -> SyntheticSession:
    """Generate one session: ground truth, features, and transcripts.

    Gap/overlap placement is resampled (with fresh sub-seeds) until the
    measured overlap ratio lands within 0.02 of the target; a zero target is
    exact by construction because gaps are strictly positive. Deterministic
    given the spec.
    """
    if spec.n_speakers == 1 and spec.target_overlap > 0:
        raise CalibrationError("overlap is unattainable with a single speaker")
    if recording_id is None:
        style = "L" if spec.silence_style == "long" else "S"
        recording_id = (
            f"sim{spec.n_speakers}spk-ov{round(spec.target_overlap * 100):02d}{style}-s{spec.seed}"
        )
    last_error: CalibrationError | None = None
    for attempt in range(100):
        rng = np.random.default_rng([spec.seed, attempt])
        try:
            turns = _layout_turns(spec, rng, recording_id)
        except CalibrationError as exc:
            last_error = exc
            continue
        gt = Diarization(recording_id, tuple(turns))
        measured = measure_overlap_ratio(gt)
        if abs(measured - spec.target_overlap) <= 0.02:
            break
    else:
        raise CalibrationError(
            f"could not reach overlap {spec.target_overlap} within 0.02 "
            f"after 100 attempts ({last_error or 'ratio out of tolerance'})"
        )

    grid = FrameGrid.covering(spec.duration, frame_step=0.010)
    act = rasterize(gt, grid, speakers=gt.speakers)
    embeds = np.array([synth_embed(s, DEFAULT_PROFILE_DIM) for s in gt.speakers])
    noise_rng = np.random.default_rng([spec.seed, 9999])
    frames = act.values @ embeds + _FEATURE_NOISE * noise_rng.standard_normal(
        (grid.total_frames, DEFAULT_PROFILE_DIM)
    )
    feats = FeatureStream(grid=grid, frames=frames)

    text_rng = np.random.default_rng([spec.seed, 31337])
    utt_tokens: dict[str, list[tuple[float, tuple[str, ...]]]] = {s: [] for s in gt.speakers}
    for t in gt.turns:
        count = max(1, int(round(t.duration * _TOKENS_PER_SECOND)))
        tokens = tuple(_LEXICON[i] for i in text_rng.integers(len(_LEXICON), size=count))
        utt_tokens[t.speaker].append((t.onset, tokens))
    transcripts = {
        s: SpeakerTranscript(recording_id, s, tuple(entries))
        for s, entries in utt_tokens.items()
    }
    return SyntheticSession(
        ground_truth=gt, feats=feats, transcripts=transcripts, measured_overlap=measured
    )


# --- perturbation -----------------------------------------------------------


def _measured_der(gt: Diarization, hyp: Diarization) -> float:
    return metrics.der(gt, hyp).der


def _rebuild(gt: Diarization, per_speaker: dict[str, list[tuple[float, float]]]) -> Diarization:
    turns = []
    for speaker, ivs in per_speaker.items():
        for on, off in ivs:
            q_on, q_off = max(0.0, _quantize(on)), _quantize(off)
            if q_off - q_on >= 0.001:
                turns.append(Turn(gt.recording_id, speaker, q_on, q_off - q_on))
    return Diarization(gt.recording_id, tuple(turns))


def _jittered(gt: Diarization, sigma: float, noise: np.ndarray) -> Diarization:
    per_speaker: dict[str, list[tuple[float, float]]] = {s: [] for s in gt.speakers}
    for i, t in enumerate(gt.turns):
        on = t.onset + sigma * noise[i, 0]
        off = t.offset + sigma * noise[i, 1]
        if off - on < 0.05:
            mid = (on + off) / 2.0
            on, off = mid - 0.025, mid + 0.025
        on = max(0.0, on)
        if off > on:
            per_speaker[t.speaker].append((on, off))
    return _rebuild(gt, per_speaker)


def _shrunk(diar: Diarization, sigma: float, noise: np.ndarray) -> Diarization:
    per_speaker: dict[str, list[tuple[float, float]]] = {s: [] for s in diar.speakers}
    for i, t in enumerate(diar.turns):
        on = t.onset + sigma * noise[i, 0]
        off = t.offset - sigma * noise[i, 1]
        if off - on < 0.05:
            mid = (t.onset + t.offset) / 2.0
            on, off = mid - 0.025, mid + 0.025
        per_speaker[t.speaker].append((on, off))
    return _rebuild(diar, per_speaker)


def _bisect_sigma(
    build: Callable[[float], Diarization],
    gt: Diarization,
    target: float,
    sigma_hi: float = 0.5,
) -> Diarization:
    """Scale a fixed noise pattern until the measured DER hits the target."""
    hi = sigma_hi
    d_hi = _measured_der(gt, build(hi))
    for _ in range(24):
        if d_hi >= target:
            break
        hi *= 2.0
        d_hi = _measured_der(gt, build(hi))
    else:
        raise CalibrationError(f"DER target {target} unreachable (max {d_hi:.3f})")
    lo = 0.0
    best = build(hi)
    best_d = d_hi
    for _ in range(48):
        mid = (lo + hi) / 2.0
        cand = build(mid)
        d = _measured_der(gt, cand)
        if abs(d - target) < abs(best_d - target):
            best, best_d = cand, d
        if abs(d - target) <= 0.01:
            return cand
        if d < target:
            lo = mid
        else:
            hi = mid
    return best


def _drop_overlap_losers(gt: Diarization) -> Diarization:
    """Silence everyone but the most dominant speaker in every overlap
    region (the single-speaker-assumption error profile)."""
    dominance = {s: sum(t.duration for t in gt.turns if t.speaker == s) for s in gt.speakers}
    cut: dict[str, list[tuple[float, float]]] = {s: [] for s in gt.speakers}
    for on, off, present in overlap_regions(gt):
        if len(present) < 2:
            continue
        keeper = max(present, key=lambda s: (dominance[s], s))
        for speaker in present:
            if speaker != keeper:
                cut[speaker].append((on, off))
    per_speaker = {
        s: intervals.subtract(gt.speaker_intervals(s), cut[s]) for s in gt.speakers
    }
    return _rebuild(gt, per_speaker)


def _merge_closest(gt: Diarization, target: float, seed: int) -> Diarization:
    """Merge the most voice-similar speaker pairs until the DER target is in
    reach (the speaker-count-underestimate error profile)."""
    speakers = list(gt.speakers)
    embeds = {s: synth_embed(s, DEFAULT_PROFILE_DIM) for s in speakers}
    pairs = sorted(
        ((a, b) for i, a in enumerate(speakers) for b in speakers[i + 1:]),
        key=lambda p: -float(np.dot(embeds[p[0]], embeds[p[1]])),
    )
    durations = {s: sum(t.duration for t in gt.turns if t.speaker == s) for s in speakers}
    alias: dict[str, str] = {}

    def resolve(s: str) -> str:
        while s in alias:
            s = alias[s]
        return s

    cur = gt
    d_cur = 0.0
    for a, b in pairs:
        if d_cur >= target - 0.05:
            break
        ra, rb = resolve(a), resolve(b)
        if ra == rb:
            continue
        keeper, absorbed = (ra, rb) if (durations[ra], ra) >= (durations[rb], rb) else (rb, ra)
        cand = cur.relabeled({absorbed: keeper})
        d_new = _measured_der(gt, cand)
        if d_new > target + 0.05:
            break
        alias[absorbed] = keeper
        durations[keeper] += durations[absorbed]
        cur, d_cur = cand, d_new
    return cur


def perturb(
    ground_truth: Diarization,
    der_target: float,
    style: str = "boundary_jitter",
    seed: int = 0,
) -> Diarization:
    """Degrade a ground truth to a target DER with a named error profile.

    ``boundary_jitter`` shifts turn edges by seeded noise scaled to the
    target. ``miss_overlap`` first silences the less dominant speaker in
    every overlap region, ``merge_speakers`` first merges the most
    voice-similar speakers; both then shrink turn edges to top up to the
    target. The achieved DER is within 0.05 of the target or a
    :class:`CalibrationError` is raised (deletion/merge floors above the
    target are unreachable by construction).
    """
    if not (0.0 <= der_target <= 0.6):
        raise ValueError(f"der_target must lie in [0, 0.6], got {der_target!r}")
    if style not in PERTURB_STYLES:
        raise ValueError(f"unknown style {style!r}; expected one of {PERTURB_STYLES}")
    if der_target == 0.0 or not ground_truth.turns:
        return ground_truth

    rng = np.random.default_rng([seed, PERTURB_STYLES.index(style)])
    if style == "boundary_jitter":
        noise = rng.standard_normal((len(ground_truth.turns), 2))
        result = _bisect_sigma(lambda s: _jittered(ground_truth, s, noise), ground_truth, der_target)
    else:
        base = (
            _drop_overlap_losers(ground_truth)
            if style == "miss_overlap"
            else _merge_closest(ground_truth, der_target, seed)
        )
        d_base = _measured_der(ground_truth, base)
        if d_base > der_target + 0.05:
            raise CalibrationError(
                f"{style} floor DER {d_base:.3f} already exceeds target {der_target} + 0.05"
            )
        if d_base < der_target - 0.01:
            noise = rng.uniform(0.2, 1.0, size=(len(base.turns), 2))
            result = _bisect_sigma(lambda s: _shrunk(base, s, noise), ground_truth, der_target)
        else:
            result = base

    achieved = _measured_der(ground_truth, result)
    if abs(achieved - der_target) > 0.05:
        raise CalibrationError(
            f"{style} reached DER {achieved:.3f}, outside {der_target} +/- 0.05"
        )
    return result


# --- corpus writing ---------------------------------------------------------


def condition_label(spec: SessionSpec) -> str:
    """Overlap condition name: 0S/0L for zero overlap, else the percentage."""
    if spec.target_overlap == 0.0:
        return "0L" if spec.silence_style == "long" else "0S"
    return f"{round(spec.target_overlap * 100)}"


def standard_conditions(
    n_speakers: int, duration: float = 600.0, seed: int = 0
) -> list[SessionSpec]:
    """The six canonical mini-session conditions: 0L, 0S, 10, 20, 30, 40."""
    specs = [
        SessionSpec(n_speakers, duration, 0.0, "long", seed * 1000),
        SessionSpec(n_speakers, duration, 0.0, "short", seed * 1000 + 1),
    ]
    for i, overlap in enumerate((0.10, 0.20, 0.30, 0.40), start=2):
        specs.append(SessionSpec(n_speakers, duration, overlap, "short", seed * 1000 + i))
    return specs


def batch(
    specs: Sequence[SessionSpec],
    out_dir,
    *,
    session_ids: Sequence[str] | None = None,
    perturb_styles: Iterable[str] = PERTURB_STYLES,
    perturb_der: float = 0.2,
) -> dict:
    """Generate a corpus: per-recording ground-truth RTTM, features,
    transcripts, and perturbed hypothesis RTTMs, plus a manifest.

    ``session_ids`` groups the specs into sessions (parallel list; default:
    a single session). Outputs are pure functions of (specs, seeds): running
    twice produces byte-identical files. Returns the manifest dict; an empty
    spec list yields an empty manifest and writes nothing.
    """
    specs = list(specs)
    styles = tuple(perturb_styles)
    if session_ids is None:
        session_ids = ["session0"] * len(specs)
    if len(session_ids) != len(specs):
        raise ValueError("session_ids must parallel specs")
    manifest: dict = {"format": "tsdiar-manifest", "version": 1, "sessions": []}
    if not specs:
        return manifest

    os.makedirs(out_dir, exist_ok=True)
    by_session: dict[str, list[dict]] = {}
    session_order: list[str] = []
    used_ids: set[str] = set()
    for spec, session_id in zip(specs, session_ids):
        condition = condition_label(spec)
        recording_id = f"{session_id}_{condition}"
        n = 2
        while recording_id in used_ids:
            recording_id = f"{session_id}_{condition}.{n}"
            n += 1
        used_ids.add(recording_id)

        session = generate(spec, recording_id=recording_id)
        files = {
            "ground_truth_rttm": f"{recording_id}.gt.rttm",
            "features": f"{recording_id}.feats",
            "transcripts": f"{recording_id}.trans.txt",
            "hypotheses": {},
        }
        dump_rttm({recording_id: session.ground_truth}, os.path.join(out_dir, files["ground_truth_rttm"]))
        save_features(session.feats, os.path.join(out_dir, files["features"]))
        with open(os.path.join(out_dir, files["transcripts"]), "w", encoding="utf-8") as fh:
            fh.write(write_transcripts(session.transcripts))
        for idx, style in enumerate(styles):
            hyp = perturb(session.ground_truth, perturb_der, style, seed=spec.seed * 1000 + idx)
            name = f"{recording_id}.hyp_{style}.rttm"
            dump_rttm({recording_id: hyp}, os.path.join(out_dir, name))
            files["hypotheses"][style] = name

        entry = {
            "recording_id": recording_id,
            "condition": condition,
            "n_speakers": spec.n_speakers,
            "duration": spec.duration,
            "target_overlap": spec.target_overlap,
            "silence_style": spec.silence_style,
            "seed": spec.seed,
            "measured_overlap": session.measured_overlap,
            "files": files,
        }
        if session_id not in by_session:
            by_session[session_id] = []
            session_order.append(session_id)
        by_session[session_id].append(entry)

    manifest["sessions"] = [
        {"session_id": sid, "mini_sessions": by_session[sid]} for sid in session_order
    ]
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest

"""Reading and writing NIST RTTM / UEM files and per-speaker transcript files.

Serialization is canonical: fixed field order, times printed with three
decimals (1 ms, lossless for every input in scope), lines sorted by
(recording_id, onset, speaker). ``parse(write(x)) == x`` for any diarization
whose times sit on the 1 ms grid, and ``write(parse(write(x))) == write(x)``
byte for byte, always.
"""

from __future__ import annotations

import logging
import math
from typing import IO, Iterable, Mapping

from dataclasses import dataclass

from . import intervals
from .timeline import Diarization, Turn

logger = logging.getLogger(__name__)


class RttmParseError(ValueError):
    """Structured parse failure; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        where = f" (line {line_number})" if line_number is not None else ""
        super().__init__(f"{message}{where}")


@dataclass(frozen=True)
class SpeakerTranscript:
    """All utterances of one speaker in one recording, ordered by onset."""

    recording_id: str
    speaker: str
    utterances: tuple[tuple[float, tuple[str, ...]], ...] = ()

    def __post_init__(self) -> None:
        utts = tuple(sorted(((float(on), tuple(toks)) for on, toks in self.utterances),
                            key=lambda u: u[0]))
        object.__setattr__(self, "utterances", utts)

    def words(self) -> list[str]:
        """Concatenation of all utterance tokens in onset order."""
        return [tok for _, toks in self.utterances for tok in toks]


def _as_lines(source: str | bytes | IO[str]) -> list[str]:
    if isinstance(source, bytes):
        source = source.decode("utf-8", errors="replace")
    if isinstance(source, str):
        return source.splitlines()
    return source.read().splitlines()


def parse_rttm(source: str | bytes | IO[str]) -> dict[str, Diarization]:
    """Parse RTTM text into one Diarization per recording.

    Only SPEAKER lines are consumed; other line types (SPKR-INFO,
    NON-SPEECH, ...) and zero-duration SPEAKER lines are skipped, with a
    summary warning. Malformed numeric fields and negative durations raise
    :class:`RttmParseError` with the offending line number.
    """
    turns: dict[str, list[Turn]] = {}
    skipped = 0
    for lineno, raw in enumerate(_as_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith((";;", "#")):
            continue
        fields = line.split()
        if fields[0] != "SPEAKER":
            skipped += 1
            continue
        if len(fields) < 9:
            raise RttmParseError(f"SPEAKER line has {len(fields)} fields, need at least 9", lineno)
        recording_id = fields[1]
        try:
            onset = float(fields[3])
            duration = float(fields[4])
        except ValueError:
            raise RttmParseError(f"non-numeric onset/duration {fields[3]!r} {fields[4]!r}", lineno) from None
        if not (math.isfinite(onset) and math.isfinite(duration)):
            raise RttmParseError("onset/duration must be finite", lineno)
        if duration < 0:
            raise RttmParseError(f"negative duration {duration}", lineno)
        if duration == 0:
            skipped += 1
            continue
        speaker = fields[7]
        try:
            turn = Turn(recording_id, speaker, onset, duration)
        except ValueError as exc:
            raise RttmParseError(str(exc), lineno) from None
        turns.setdefault(recording_id, []).append(turn)
    if skipped:
        logger.warning("parse_rttm skipped %d non-SPEAKER or zero-duration lines", skipped)
    return {rec: Diarization(rec, tuple(ts)) for rec, ts in turns.items()}


def write_rttm(diarizations: Mapping[str, Diarization] | Iterable[Diarization]) -> str:
    """Serialize diarizations to canonical RTTM text."""
    if isinstance(diarizations, Mapping):
        diarizations = diarizations.values()
    lines = []
    for diar in sorted(diarizations, key=lambda d: d.recording_id):
        for t in diar.turns:
            lines.append(
                f"SPEAKER {t.recording_id} 1 {t.onset:.3f} {t.duration:.3f} "
                f"<NA> <NA> {t.speaker} <NA> <NA>"
            )
    return "\n".join(lines) + ("\n" if lines else "")


def parse_uem(source: str | bytes | IO[str]) -> dict[str, list[intervals.Interval]]:
    """Parse UEM scoring regions: ``recording channel onset offset`` lines.

    Overlapping entries for the same recording are merged into their union.
    """
    regions: dict[str, list[intervals.Interval]] = {}
    for lineno, raw in enumerate(_as_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith((";;", "#")):
            continue
        fields = line.split()
        if len(fields) < 4:
            raise RttmParseError(f"UEM line has {len(fields)} fields, need 4", lineno)
        recording_id = fields[0]
        try:
            onset = float(fields[2])
            offset = float(fields[3])
        except ValueError:
            raise RttmParseError(f"non-numeric UEM bounds {fields[2]!r} {fields[3]!r}", lineno) from None
        if not (math.isfinite(onset) and math.isfinite(offset)) or offset <= onset:
            raise RttmParseError(f"UEM region must satisfy offset > onset, got [{onset}, {offset}]", lineno)
        regions.setdefault(recording_id, []).append((onset, offset))
    return {rec: intervals.merge(ivs) for rec, ivs in regions.items()}


def write_uem(regions: Mapping[str, Iterable[intervals.Interval]]) -> str:
    lines = []
    for rec in sorted(regions):
        for on, off in intervals.merge(regions[rec]):
            lines.append(f"{rec} 1 {on:.3f} {off:.3f}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_transcripts(source: str | bytes | IO[str], recording_id: str) -> dict[str, SpeakerTranscript]:
    """Parse a per-recording transcript file.

    Format: one utterance per line, ``speaker<TAB>onset<TAB>token token ...``,
    UTF-8. Returns one SpeakerTranscript per speaker.
    """
    utts: dict[str, list[tuple[float, tuple[str, ...]]]] = {}
    for lineno, raw in enumerate(_as_lines(source), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise RttmParseError(f"transcript line has {len(parts)} tab-separated fields, need 3", lineno)
        speaker, onset_text, words = parts
        try:
            onset = float(onset_text)
        except ValueError:
            raise RttmParseError(f"non-numeric utterance onset {onset_text!r}", lineno) from None
        utts.setdefault(speaker, []).append((onset, tuple(words.split())))
    return {
        spk: SpeakerTranscript(recording_id, spk, tuple(entries))
        for spk, entries in utts.items()
    }


def write_transcripts(transcripts: Mapping[str, SpeakerTranscript]) -> str:
    """Serialize transcripts to canonical text, lines sorted by (onset, speaker)."""
    rows = []
    for spk in sorted(transcripts):
        for onset, tokens in transcripts[spk].utterances:
            rows.append((onset, spk, tokens))
    rows.sort(key=lambda r: (r[0], r[1]))
    lines = [f"{spk}\t{onset:.3f}\t{' '.join(tokens)}" for onset, spk, tokens in rows]
    return "\n".join(lines) + ("\n" if lines else "")


def load_rttm(path) -> dict[str, Diarization]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_rttm(fh)


def dump_rttm(diarizations, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(write_rttm(diarizations))

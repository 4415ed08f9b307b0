"""Half-open time interval helpers shared by the timeline, metric, and simulator code.

An interval is a plain ``(onset, offset)`` tuple with ``onset < offset``.
All functions return canonical lists: sorted by onset, pairwise disjoint.
"""

from __future__ import annotations

from typing import Iterable

Interval = tuple[float, float]


def merge(ivs: Iterable[Interval], *, gap: float = 0.0) -> list[Interval]:
    """Merge overlapping (and, when ``gap`` allows, nearby) intervals.

    Empty or inverted inputs are dropped. ``gap`` extends the merge rule to
    intervals separated by at most that many seconds; the default merges
    only overlapping or exactly abutting intervals.
    """
    cleaned = sorted((on, off) for on, off in ivs if off > on)
    out: list[list[float]] = []
    for on, off in cleaned:
        if out and on <= out[-1][1] + gap:
            out[-1][1] = max(out[-1][1], off)
        else:
            out.append([on, off])
    return [(on, off) for on, off in out]


def total(ivs: Iterable[Interval]) -> float:
    """Union duration of the intervals, in seconds."""
    return float(sum(off - on for on, off in merge(ivs)))


def intersect(a: Iterable[Interval], b: Iterable[Interval]) -> list[Interval]:
    """Intersection of two interval sets."""
    xa, xb = merge(a), merge(b)
    out: list[Interval] = []
    i = j = 0
    while i < len(xa) and j < len(xb):
        on = max(xa[i][0], xb[j][0])
        off = min(xa[i][1], xb[j][1])
        if off > on:
            out.append((on, off))
        if xa[i][1] <= xb[j][1]:
            i += 1
        else:
            j += 1
    return out


def subtract(a: Iterable[Interval], b: Iterable[Interval]) -> list[Interval]:
    """Intervals of ``a`` not covered by ``b``."""
    xa, xb = merge(a), merge(b)
    out: list[Interval] = []
    j = 0
    for on, off in xa:
        cur = on
        while j < len(xb) and xb[j][1] <= cur:
            j += 1
        k = j
        while k < len(xb) and xb[k][0] < off:
            bon, boff = xb[k]
            if bon > cur:
                out.append((cur, bon))
            cur = max(cur, boff)
            if cur >= off:
                break
            k += 1
        if cur < off:
            out.append((cur, off))
    return out

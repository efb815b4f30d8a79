"""Contact-log parsing and aggregation into regular edge panels.

Input lines look like ``t i j [Si Sj]``: a time in seconds, two node ids and
optionally their status categories.  Lines starting with ``#`` are comments.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .exceptions import ValidationError
from .model import EdgePanel, all_pairs

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86_400


@dataclass(frozen=True)
class ContactEvent:
    time: int
    node_a: str
    node_b: str
    status_a: Optional[str] = None
    status_b: Optional[str] = None


@dataclass
class NodeRegistry:
    """Raw node ids mapped to dense indices ``0..N-1`` in order of first appearance."""

    index: Dict[str, int] = field(default_factory=dict)
    status: Dict[str, Optional[str]] = field(default_factory=dict)

    def add(self, node: str, status: Optional[str] = None, line: int = 0) -> int:
        if node not in self.index:
            self.index[node] = len(self.index)
            self.status[node] = status
        elif status is not None:
            known = self.status[node]
            if known is None:
                self.status[node] = status
            elif known != status:
                raise ValidationError(f"line {line}: node {node} has status {status}, "
                                      f"previously {known}")
        return self.index[node]

    @property
    def n_nodes(self) -> int:
        return len(self.index)

    @property
    def ids(self) -> List[str]:
        return sorted(self.index, key=self.index.get)

    @property
    def labels(self) -> Optional[Tuple[str, ...]]:
        statuses = [self.status[n] for n in self.ids]
        if not statuses or any(s is None for s in statuses):
            return None
        return tuple(statuses)

    def status_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for s in self.status.values():
            counts[s or ""] = counts.get(s or "", 0) + 1
        return counts


def parse_contacts(lines: Iterable[str]):
    """Parse a contact log.

    Returns
    -------
    events : list of ContactEvent
        Sorted by time (stable for equal times).
    registry : NodeRegistry

    Raises
    ------
    ValidationError
        On a malformed line (the message carries the line number), a
        self-contact or conflicting statuses for one node.
    """
    events, registry = [], NodeRegistry()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (3, 5):
            raise ValidationError(f"line {lineno}: expected 3 or 5 fields, got {len(parts)}")
        try:
            t = int(parts[0])
        except ValueError:
            raise ValidationError(f"line {lineno}: time {parts[0]!r} is not an integer") from None
        a, b = parts[1], parts[2]
        if a == b:
            raise ValidationError(f"line {lineno}: self-contact of node {a}")
        sa, sb = (parts[3], parts[4]) if len(parts) == 5 else (None, None)
        registry.add(a, sa, lineno)
        registry.add(b, sb, lineno)
        events.append(ContactEvent(t, a, b, sa, sb))
    events.sort(key=lambda e: e.time)
    return events, registry


def default_window_start(events: List[ContactEvent], window: int) -> int:
    """Largest multiple of ``window`` strictly below the first event time."""
    if not events:
        return 0
    return window * math.floor((events[0].time - 1) / window)


def aggregate(events: List[ContactEvent], registry: NodeRegistry, window: int,
              t_start: Optional[int] = None, t_end: Optional[int] = None,
              clock_start: Optional[int] = None, period_seconds: int = SECONDS_PER_DAY) -> EdgePanel:
    """Aggregate events into snapshots of ``window`` seconds.

    Snapshot ``l = 1..n`` covers ``(t_start + (l-1) w, t_start + l w]`` and an
    edge is on when at least one of its events falls inside; an event exactly
    at ``t_start`` is put in snapshot 1.  ``n = ceil((t_end - t_start) / w)``.
    Every one of the ``N(N-1)/2`` node pairs becomes a row, in lexicographic
    order of dense node indices.  Events outside ``[t_start, t_end]`` are
    dropped and counted in ``panel.meta["dropped_events"]``.

    ``clock_start`` is the wall-clock second of the day at ``t_start``.  When
    given, the harmonic phase origin is midnight; otherwise it is ``t_start``.
    Snapshot ``l`` sits at ``l + panel.phase_offset`` steps after the origin.
    """
    window = int(window)
    if window <= 0:
        raise ValidationError("window must be positive")
    if t_start is None:
        t_start = default_window_start(events, window)
    if t_end is None:
        t_end = events[-1].time if events else t_start + window
    if t_start >= t_end:
        raise ValidationError(f"need t_start < t_end (got {t_start}, {t_end})")
    N = registry.n_nodes
    if N < 2:
        raise ValidationError("need at least two nodes to form edges")
    n = math.ceil((t_end - t_start) / window)
    pairs = all_pairs(N)
    row_of = {(int(k), int(j)): r for r, (k, j) in enumerate(pairs)}
    values = np.zeros((len(pairs), n), dtype=np.int8)
    dropped = 0
    for ev in events:
        if ev.time < t_start or ev.time > t_end:
            dropped += 1
            continue
        l = max(math.ceil((ev.time - t_start) / window), 1)
        k, j = sorted((registry.index[ev.node_a], registry.index[ev.node_b]))
        values[row_of[(k, j)], l - 1] = 1
    if dropped:
        logger.warning("dropped %d events outside [%d, %d]", dropped, t_start, t_end)
    # harmonic time of snapshot l is the end of its interval, in steps from the origin
    if clock_start is None:
        phase_offset, origin = 0.0, "t_start"
    else:
        phase_offset, origin = (clock_start % period_seconds) / window, "midnight"
    meta = {"window_seconds": window, "t_start": int(t_start), "t_end": int(t_end),
            "phase_origin": origin, "dropped_events": dropped, "node_ids": registry.ids}
    if clock_start is not None:
        meta["clock_start"] = int(clock_start)
    return EdgePanel(values, np.arange(1, n + 1), pairs, registry.labels, phase_offset, meta)


def read_contacts(path) -> Tuple[List[ContactEvent], NodeRegistry]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_contacts(fh)


def parse_clock(text: str) -> int:
    """``HH:MM[:SS]`` to seconds after midnight."""
    try:
        parts = [int(p) for p in text.split(":")]
    except ValueError:
        raise ValidationError(f"invalid clock time {text!r}") from None
    if len(parts) not in (2, 3) or not (0 <= parts[0] < 24 and 0 <= parts[1] < 60):
        raise ValidationError(f"invalid clock time {text!r}")
    return parts[0] * 3600 + parts[1] * 60 + (parts[2] if len(parts) == 3 else 0)

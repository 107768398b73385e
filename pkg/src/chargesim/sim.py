"""Seeded discrete-event engine: total event ordering, virtual time, named
random streams, and replayable traces.

Virtual time is double-precision seconds, which comfortably spans the
microsecond-to-week range this testbed needs. Events execute in
``(at, seq)`` order; ``seq`` breaks ties in schedule order. Nothing on the
simulation path calls platform-dependent math (no libm transcendentals), so
identical ``(seed, config)`` inputs produce byte-identical traces on any
machine.
"""
from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

TRACE_FORMAT = "chargesim-trace/1"


class TraceParseError(ValueError):
    """Trace file is structurally invalid; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def canonical_json(obj: Any) -> str:
    """Stable one-line JSON used for trace records and digests."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def substream(master_seed: int, label: str) -> random.Random:
    """Random stream bound to (master_seed, label).

    Distinct labels yield independent streams, and a stream depends only on
    its own label, so adding entities to a scenario never perturbs anyone
    else's draws. Re-deriving the same label gives a fresh stream that
    replays the same sequence; protocol A/B comparisons rely on this to run
    against identical latency draws.
    """
    digest = hashlib.sha256(f"{master_seed}:{label}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:16], "big"))


Handler = Callable[["Engine", "Event"], Optional[dict]]


@dataclass
class Event:
    """One scheduled occurrence.

    ``fn`` runs when the event fires. If it returns a dict, the dict is
    recorded in the trace as the event's state summary; ``data`` is recorded
    as-is and must be JSON-serializable.
    """

    at: float
    seq: int
    kind: str
    data: dict | None = None
    fn: Handler | None = None


@dataclass
class EventTrace:
    """Ordered record of executed events.

    The trace digest is a pure function of (seed, config, scheduled work):
    replaying the same experiment reproduces it byte for byte.
    """

    seed: int
    config_digest: str = ""
    meta: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    failed: bool = False

    def header(self) -> dict:
        head = {"format": TRACE_FORMAT, "seed": self.seed, "config_digest": self.config_digest}
        head.update(self.meta)
        return head

    def lines(self) -> list[str]:
        return [canonical_json(self.header())] + [canonical_json(r) for r in self.records]

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.lines()).encode("utf-8")).hexdigest()

    def write(self, path) -> str:
        """Write header, one record per line, and a digest footer. Returns the digest."""
        digest = self.digest()
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.lines():
                fh.write(line + "\n")
            fh.write(canonical_json({"trace_digest": digest}) + "\n")
        return digest


@dataclass
class ParsedTrace:
    """A trace file read back for replay: header, records, and the stored digest."""

    header: dict
    records: list
    stored_digest: str


def read_trace(path) -> ParsedTrace:
    with open(path, "r", encoding="utf-8") as fh:
        raw_lines = fh.read().splitlines()
    if not raw_lines:
        raise TraceParseError("empty trace file", 1)
    parsed = []
    for i, line in enumerate(raw_lines, start=1):
        try:
            parsed.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise TraceParseError(f"bad JSON ({exc.msg})", i) from exc
    header = parsed[0]
    if not isinstance(header, dict) or header.get("format") != TRACE_FORMAT:
        raise TraceParseError("missing or unrecognized trace header", 1)
    footer = parsed[-1]
    if not isinstance(footer, dict) or "trace_digest" not in footer:
        raise TraceParseError("missing digest footer", len(raw_lines))
    return ParsedTrace(header=header, records=parsed[1:-1], stored_digest=footer["trace_digest"])


class Engine:
    """Single-threaded discrete-event engine.

    Strictly one thread may drive an engine at a time; run many engines on
    independent seeds for parallel experiments.
    """

    def __init__(self, seed: int, meta: dict | None = None):
        self.seed = seed
        self.meta = dict(meta or {})
        self.clock = 0.0
        self._heap: list[tuple[float, int, Event]] = []
        self._next_seq = 0
        self._streams: dict[str, random.Random] = {}
        cfg = self.meta.get("config")
        self.trace = EventTrace(
            seed=seed,
            config_digest=config_digest(cfg) if cfg is not None else "",
            meta=self.meta,
        )

    def stream(self, label: str) -> random.Random:
        """Named random stream; the same label always returns the same stream."""
        if label not in self._streams:
            self._streams[label] = substream(self.seed, label)
        return self._streams[label]

    def schedule(self, delay: float, kind: str, data: dict | None = None,
                 fn: Handler | None = None) -> Event:
        if delay < 0:
            raise ValueError(f"cannot schedule into the past: delay={delay!r}")
        return self.schedule_at(self.clock + delay, kind, data, fn)

    def schedule_at(self, at: float, kind: str, data: dict | None = None,
                    fn: Handler | None = None) -> Event:
        if at < self.clock:
            raise ValueError(f"cannot schedule at {at!r}, clock is {self.clock!r}")
        ev = Event(at=at, seq=self._next_seq, kind=kind, data=data, fn=fn)
        self._next_seq += 1
        heapq.heappush(self._heap, (at, ev.seq, ev))
        return ev

    def schedule_every(self, period: float, kind: str, fn: Handler,
                       first_at: float | None = None,
                       data: dict | None = None) -> Event:
        """Self-rescheduling periodic event; first occurrence at ``first_at``
        (default: one period from now). ``data`` rides along on every
        occurrence."""
        if period <= 0:
            raise ValueError(f"period must be positive, got {period!r}")

        def tick(eng: "Engine", ev: Event):
            eng.schedule_at(ev.at + period, kind, ev.data, tick)
            return fn(eng, ev)

        start = self.clock + period if first_at is None else first_at
        return self.schedule_at(start, kind, data, tick)

    def run_until(self, t_end: float) -> EventTrace:
        """Execute every event with at <= t_end; on a handler exception the
        trace is truncated with a failure record and the run stops."""
        if t_end < self.clock:
            raise ValueError(f"t_end {t_end!r} is before clock {self.clock!r}")
        while self._heap and self._heap[0][0] <= t_end:
            at, seq, ev = heapq.heappop(self._heap)
            self.clock = at
            record: dict = {"at": at, "seq": seq, "kind": ev.kind}
            if ev.data is not None:
                record["data"] = ev.data
            try:
                state = ev.fn(self, ev) if ev.fn is not None else None
            except Exception as exc:  # noqa: BLE001 - failures become trace records
                record["error"] = f"{type(exc).__name__}: {exc}"
                self.trace.records.append(record)
                self.trace.failed = True
                return self.trace
            if isinstance(state, dict) and state:
                record["state"] = state
            self.trace.records.append(record)
        self.clock = t_end
        return self.trace

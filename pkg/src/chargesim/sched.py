"""Local charging algorithms runnable on a station's control unit:
round-robin time multiplexing and fixed daily schedule windows, both under
the circuit-limit constraint.

Allocation is a pure function of (config, plugged set, now): slots align to
absolute time, so replays and restarts always agree, and plug changes take
effect at the next slot boundary rather than thrashing relays mid-slot.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class RoundRobinConfig:
    slot_length_s: float = 900.0
    max_concurrent: int = 1
    per_active_current: float = 16.0


@dataclass(frozen=True)
class ChargeWindow:
    """Daily window in seconds-of-day; start > end wraps past midnight and
    start == end is empty."""

    start_s: float
    end_s: float
    amps: float

    def active_at(self, time_of_day: float) -> bool:
        if self.start_s == self.end_s:
            return False
        if self.start_s < self.end_s:
            return self.start_s <= time_of_day < self.end_s
        return time_of_day >= self.start_s or time_of_day < self.end_s


@dataclass(frozen=True)
class ScheduleTimeConfig:
    """Per-outlet lists of daily charge windows; the first window matching
    the current time of day wins."""

    windows: Mapping  # outlet -> tuple[ChargeWindow, ...]


@dataclass(frozen=True)
class Violation:
    at: float
    total_amps: float
    limit: float


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple = ()


def round_robin_step(config: RoundRobinConfig, plugged: Iterable[int], now: float) -> dict:
    """Allocation for the slot containing ``now``: the next ``max_concurrent``
    plugged outlets in cyclic order get ``per_active_current``, the rest get
    zero. Deterministic in (config, plugged, now)."""
    order = sorted(set(plugged))
    n = len(order)
    alloc = {outlet: 0.0 for outlet in order}
    if n == 0:
        return alloc
    m = min(config.max_concurrent, n)
    if m <= 0:
        return alloc
    slot = int(now // config.slot_length_s)
    start = (slot * m) % n
    for j in range(m):
        alloc[order[(start + j) % n]] = config.per_active_current
    return alloc


def schedule_time_step(config: ScheduleTimeConfig, plugged: Iterable[int], now: float) -> dict:
    """Allocation from the daily windows: a plugged outlet inside one of its
    windows gets that window's current, everything else gets zero."""
    time_of_day = now % SECONDS_PER_DAY
    alloc = {}
    for outlet in sorted(set(plugged)):
        amps = 0.0
        for window in config.windows.get(outlet, ()):
            if window.active_at(time_of_day):
                amps = window.amps
                break
        alloc[outlet] = amps
    return alloc


def validate_config(config, circuit_limit: float) -> ValidationReport:
    """Check a scheduler config against the circuit limit; violations come
    back as values, never exceptions."""
    if isinstance(config, RoundRobinConfig):
        return _validate_round_robin(config, circuit_limit)
    if isinstance(config, ScheduleTimeConfig):
        return _validate_schedule(config, circuit_limit)
    raise TypeError(f"unknown scheduler config {type(config).__name__}")


def _validate_round_robin(config: RoundRobinConfig, circuit_limit: float) -> ValidationReport:
    violations = []
    if config.slot_length_s <= 0 or config.max_concurrent < 0 or config.per_active_current < 0:
        violations.append(Violation(at=0.0, total_amps=float("nan"), limit=circuit_limit))
        return ValidationReport(ok=False, violations=tuple(violations))
    worst = config.max_concurrent * config.per_active_current
    if worst > circuit_limit:
        violations.append(Violation(at=0.0, total_amps=worst, limit=circuit_limit))
    return ValidationReport(ok=not violations, violations=tuple(violations))


def _validate_schedule(config: ScheduleTimeConfig, circuit_limit: float) -> ValidationReport:
    """Event-boundary sweep: the total allocation is a step function that can
    only change where some window starts or ends, so checking each boundary
    instant finds the worst overlapping moment exactly."""
    boundaries = {0.0}
    for windows in config.windows.values():
        for w in windows:
            boundaries.add(w.start_s % SECONDS_PER_DAY)
            boundaries.add(w.end_s % SECONDS_PER_DAY)
    plugged = list(config.windows.keys())
    violations = []
    for t in sorted(boundaries):
        alloc = schedule_time_step(config, plugged, t)
        total = sum(alloc.values())
        if total > circuit_limit:
            violations.append(Violation(at=t, total_amps=total, limit=circuit_limit))
    return ValidationReport(ok=not violations, violations=tuple(violations))

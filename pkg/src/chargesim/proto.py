"""Wire messages and the three retrieval protocols: legacy per-meter pull,
aggregated single-request pull, and periodic push.

Wall times come from sampled link delays; the protocols themselves are pure
event generators the simulation engine drives. The line-delimited record
shapes are documented in docs/wire.md.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .domain import ChargingStation, MeterId, MeterSnapshot, meter_snapshot
from .latency import LinkModelSet, TimingBudget


class MessageKind(Enum):
    METER_POWER_REQ = "meter_power_req"
    METER_STATUS_REQ = "meter_status_req"
    METER_POWER_RESP = "meter_power_resp"
    METER_STATUS_RESP = "meter_status_resp"
    AGGREGATE_REQ = "aggregate_req"
    AGGREGATE_PACKET = "aggregate_packet"
    DUTY_CYCLE_SET = "duty_cycle_set"
    DUTY_CYCLE_ACK = "duty_cycle_ack"
    SETUP_ACK = "setup_ack"
    ERROR = "error"


class RequestTimeout(RuntimeError):
    """A whole retrieval request timed out; the caller may retry."""


@dataclass
class Message:
    kind: MessageKind
    station: int
    meter: Optional[MeterId] = None
    payload: object = None
    seq: int = 0
    sent_at: float = 0.0
    received_at: float = 0.0

    def __post_init__(self):
        if self.received_at and self.received_at < self.sent_at:
            raise ValueError("received_at precedes sent_at")

    def to_record(self) -> dict:
        rec: dict = {
            "kind": self.kind.value,
            "station": self.station,
            "seq": self.seq,
            "sent_at": self.sent_at,
            "received_at": self.received_at,
        }
        if self.meter is not None:
            rec["outlet"] = self.meter.outlet
        if isinstance(self.payload, (list, tuple)) and all(
            isinstance(s, MeterSnapshot) for s in self.payload
        ):
            rec["payload"] = {"snapshots": [s.to_record() for s in self.payload]}
        elif self.payload is not None:
            rec["payload"] = self.payload
        return rec


def make_aggregate_packet(station_id: int, snapshots, seq: int, sent_at: float) -> Message:
    """Aggregate packet carrying exactly one snapshot (with relay state) per
    registered meter."""
    snaps = tuple(snapshots)
    outlets = [s.meter.outlet for s in snaps]
    if len(set(outlets)) != len(outlets):
        raise ValueError("aggregate packet has duplicate meter entries")
    return Message(
        kind=MessageKind.AGGREGATE_PACKET,
        station=station_id,
        payload=snaps,
        seq=seq,
        sent_at=sent_at,
    )


@dataclass
class RetrievalResult:
    """Outcome of one retrieval as seen from the server.

    ``responses + len(errors) == request_count`` always holds: every issued
    request ends in exactly one terminal outcome.
    """

    snapshots: dict = field(default_factory=dict)   # MeterId -> MeterSnapshot | None
    wall_time: float = 0.0
    request_count: int = 0
    staleness: dict = field(default_factory=dict)   # MeterId -> seconds
    errors: list = field(default_factory=list)      # (MeterId, marker) per failed request
    responses: int = 0
    messages: list = field(default_factory=list)    # wire Messages, in emission order


def legacy_pull(station: ChargingStation, links: LinkModelSet, rng,
                include_status: bool = False, at: float = 0.0,
                timeout_s: float = 30.0, t_status_read: float = 0.0,
                pipelined: bool = False) -> RetrievalResult:
    """Per-meter pull: one full round trip per reading, issued sequentially.

    Each power reading costs cloud hops + link transit + metering; a relay
    status request is a register read, so it costs a round trip plus
    ``t_status_read`` (default 0). A request whose round trip exceeds the
    timeout yields a per-meter marker and charges the timeout to the wall
    clock; the rest of the retrieval continues.

    ``pipelined=True`` is the what-if mode: all requests go out at once and
    the wall clock is the slowest of them. The reference wall-time figures
    hold only for the default sequential issue.
    """
    link_model = links.for_link(station.link)
    cloud = links.t_server_cloud + links.t_cloud
    snapshots: dict = {}
    errors: list = []
    messages: list = []
    requests = 0
    responses = 0
    t = at
    slowest = 0.0
    for outlet in range(len(station.meters)):
        mid = MeterId(station.station_id, outlet)
        issue_at = at if pipelined else t
        requests += 1
        seq = requests
        link_s = link_model.sample(rng, issue_at)
        met_s = links.metering.sample(rng, issue_at)
        rtt = cloud + link_s + met_s
        messages.append(Message(kind=MessageKind.METER_POWER_REQ, station=station.station_id,
                                meter=mid, seq=seq, sent_at=issue_at))
        if rtt > timeout_s:
            snapshots[mid] = None
            errors.append((mid, "timeout"))
            messages.append(Message(kind=MessageKind.ERROR, station=station.station_id,
                                    meter=mid, payload={"reason": "timeout"}, seq=seq,
                                    sent_at=issue_at, received_at=issue_at + timeout_s))
            t += timeout_s
            slowest = max(slowest, timeout_s)
        else:
            captured = issue_at + 0.5 * (cloud + link_s) + met_s
            snap = meter_snapshot(station, outlet, captured)
            snapshots[mid] = snap
            responses += 1
            messages.append(Message(kind=MessageKind.METER_POWER_RESP, station=station.station_id,
                                    meter=mid, payload=(snap,), seq=seq,
                                    sent_at=captured, received_at=issue_at + rtt))
            t += rtt
            slowest = max(slowest, rtt)
        if include_status:
            issue_at = at if pipelined else t
            requests += 1
            seq = requests
            link_s2 = link_model.sample(rng, issue_at)
            rtt2 = cloud + link_s2 + t_status_read
            messages.append(Message(kind=MessageKind.METER_STATUS_REQ, station=station.station_id,
                                    meter=mid, seq=seq, sent_at=issue_at))
            if rtt2 > timeout_s:
                errors.append((mid, "status-timeout"))
                messages.append(Message(kind=MessageKind.ERROR, station=station.station_id,
                                        meter=mid, payload={"reason": "timeout"}, seq=seq,
                                        sent_at=issue_at, received_at=issue_at + timeout_s))
                t += timeout_s
                slowest = max(slowest, timeout_s)
            else:
                responses += 1
                relay = station.channel(outlet).relay
                messages.append(Message(kind=MessageKind.METER_STATUS_RESP, station=station.station_id,
                                        meter=mid, payload={"relay": relay.value}, seq=seq,
                                        sent_at=issue_at + 0.5 * (cloud + link_s2),
                                        received_at=issue_at + rtt2))
                t += rtt2
                slowest = max(slowest, rtt2)
    wall = slowest if pipelined else t - at
    done = at + wall
    staleness = {
        mid: done - snap.captured_at for mid, snap in snapshots.items() if snap is not None
    }
    return RetrievalResult(
        snapshots=snapshots,
        wall_time=wall,
        request_count=requests,
        staleness=staleness,
        errors=errors,
        responses=responses,
        messages=messages,
    )


def pic_pull(pic, links: LinkModelSet, rng, at: float = 0.0,
             timeout_s: float = 30.0) -> RetrievalResult:
    """Aggregated pull: one request over the station uplink only.

    ``pic`` is a collector endpoint exposing ``station`` and
    ``serve_aggregate(now) -> (snapshots, serve_cost)``; in cache-serving
    mode the cost is zero and no metering term reaches the server's wall
    clock. A timed-out request fails whole (retryable).
    """
    link_model = links.for_link(pic.station.link)
    cloud = links.t_server_cloud + links.t_cloud
    link_s = link_model.sample(rng, at)
    rtt = cloud + link_s
    if rtt > timeout_s:
        raise RequestTimeout(
            f"aggregate request to station {pic.station.station_id} exceeded {timeout_s} s"
        )
    arrive = at + 0.5 * rtt
    snaps, serve_cost = pic.serve_aggregate(arrive)
    wall = rtt + serve_cost
    done = at + wall
    snapshots = {s.meter: s for s in snaps}
    staleness = {m: done - s.captured_at for m, s in snapshots.items()}
    request = Message(kind=MessageKind.AGGREGATE_REQ, station=pic.station.station_id,
                      seq=1, sent_at=at)
    reply = make_aggregate_packet(pic.station.station_id, snaps, seq=1,
                                  sent_at=arrive + serve_cost)
    reply.received_at = done
    return RetrievalResult(
        snapshots=snapshots,
        wall_time=wall,
        request_count=1,
        staleness=staleness,
        errors=[],
        responses=1,
        messages=[request, reply],
    )


def push_cycle_time(budget: TimingBudget, meter_count: int) -> float:
    """Time for one full collect-and-push cycle: per-meter in-station hop plus
    metering, then the uplink transit."""
    if meter_count < 0:
        raise ValueError(f"meter count must be non-negative, got {meter_count}")
    return meter_count * (budget.t_ethernet + budget.t_metering) + budget.t_3g_uplink


def legacy_retrieval_time(budget: TimingBudget, meter_count: int = 4,
                          include_status: bool = False) -> float:
    """Analytic wall time of a sequential per-meter pull."""
    power = meter_count * (budget.t_3g + budget.t_metering)
    if include_status:
        power += meter_count * budget.t_3g
    return power


def t_save(budget: TimingBudget) -> float:
    """Analytic saving of push over four-meter sequential pull: the metering
    terms cancel, leaving 3.5x the cellular round trip minus the four
    in-station hops."""
    return 3.5 * budget.t_3g - 4.0 * budget.t_ethernet


def push_consume(store, packet: Message, now: float):
    """Fold a pushed aggregate packet into the server store.

    The per-station record is replaced in a single assignment (atomic from
    the store's point of view). Packets at or below the stored sequence are
    discarded with a diagnostic; duplicates are therefore no-ops. Returns the
    per-meter staleness report, or None for a discarded packet.
    """
    if packet.kind is not MessageKind.AGGREGATE_PACKET:
        raise ValueError(f"cannot consume {packet.kind.value} as a push packet")
    snaps = packet.payload
    if not isinstance(snaps, (list, tuple)) or not all(isinstance(s, MeterSnapshot) for s in snaps):
        raise ValueError("aggregate packet payload must be meter snapshots")
    current = store.stations.get(packet.station)
    if current is not None and packet.seq <= current.packet_seq:
        store.diagnostics.append(
            f"station {packet.station}: discarded packet seq {packet.seq} "
            f"(stored seq {current.packet_seq})"
        )
        return None
    staleness = {s.meter: now - s.captured_at for s in snaps}
    record = _StationRecord(
        snapshots={s.meter: s for s in snaps},
        packet_seq=packet.seq,
        updated_at=now,
        staleness=staleness,
    )
    store.stations[packet.station] = record
    return staleness


@dataclass
class _StationRecord:
    """Latest per-station server-side state; shared shape with the controller
    store so push consumption stays store-agnostic."""

    snapshots: dict
    packet_seq: int
    updated_at: float
    staleness: dict

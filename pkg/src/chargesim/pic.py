"""Station-local power information collector: an interrupt-driven firmware
state machine.

The firmware has three contexts: startup initialization, the main loop, and
two interrupt handlers (serial command, periodic timer). Interrupt handlers
only latch flags; every action with side effects (meter I/O, responses,
pushes) happens in the main loop according to those flags, so commands are
never missed while other work runs. In the simulator, interrupts are events
delivered between main-loop steps; ISR operations are safe at any such
boundary.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum

from .domain import ChargingStation, MeterId, MeterSnapshot, RelayState, meter_snapshot
from .latency import LatencyModel
from .proto import Message, MessageKind, make_aggregate_packet

COMMAND_QUEUE_DEPTH = 4


class Phase(Enum):
    INIT = "init"
    IDLE = "idle"
    COLLECTING = "collecting"
    PUSHING = "pushing"


class Opcode(Enum):
    POWER_INFO_REQUEST = "power_info_request"
    SET_PUSH_PERIOD = "set_push_period"
    SET_PUSH_ENABLED = "set_push_enabled"
    REJECT = "reject"  # pseudo-opcode latched for malformed commands


@dataclass(frozen=True)
class Command:
    opcode: object  # Opcode, or whatever garbage arrived on the line
    seq: int
    arg: object = None


class SerialLine:
    """Producer side of the serial link: hands out strictly increasing
    sequence numbers."""

    def __init__(self):
        self._seq = 0

    def command(self, opcode, arg=None) -> Command:
        self._seq += 1
        return Command(opcode=opcode, seq=self._seq, arg=arg)


@dataclass
class Flags:
    """The only state interrupt handlers may touch."""

    push_data: bool = False
    pending: deque = field(default_factory=deque)
    overflows: int = 0


@dataclass
class PicState:
    registered_meters: list
    cache: dict = field(default_factory=dict)       # MeterId -> MeterSnapshot
    flags: Flags = field(default_factory=Flags)
    push_period: float = 30.0
    push_enabled: bool = True
    serve_cache_mode: bool = False
    phase: Phase = Phase.INIT
    packet_seq: int = 0
    diagnostics: list = field(default_factory=list)
    overflows_noted: int = 0  # how many queue drops the main loop has logged


class StartupError(RuntimeError):
    """A meter slot did not answer during startup registration."""

    def __init__(self, outlet: int):
        super().__init__(f"meter slot {outlet} unreachable during startup")
        self.outlet = outlet


class BusTimeout(RuntimeError):
    """A registered meter did not answer a read."""

    def __init__(self, outlet: int):
        super().__init__(f"meter slot {outlet} timed out")
        self.outlet = outlet


class MeterBus:
    """The collector's access path to its station's meters.

    Reads cost one in-station hop plus the meter's reading time, both drawn
    from the given models. ``dead_outlets`` injects faults: dead slots fail
    discovery and time out on reads.
    """

    def __init__(self, station: ChargingStation, local_bus_model: LatencyModel,
                 metering_model: LatencyModel, rng, dead_outlets=(),
                 read_timeout_s: float = 2.0):
        self.station = station
        self.local_bus_model = local_bus_model
        self.metering_model = metering_model
        self.rng = rng
        self.dead_outlets = set(dead_outlets)
        self.read_timeout_s = read_timeout_s
        self.reads = 0

    def discover(self) -> list:
        found = []
        for outlet in range(len(self.station.meters)):
            if outlet in self.dead_outlets:
                raise StartupError(outlet)
            found.append(MeterId(self.station.station_id, outlet))
        return found

    def read(self, outlet: int, at: float):
        """Returns (snapshot, cost_seconds); raises BusTimeout on a dead slot."""
        self.reads += 1
        if outlet in self.dead_outlets:
            raise BusTimeout(outlet)
        cost = self.local_bus_model.sample(self.rng, at) + self.metering_model.sample(self.rng, at)
        return meter_snapshot(self.station, outlet, at + cost), cost


def startup_init(bus: MeterBus, push_period: float = 30.0, push_enabled: bool = True,
                 serve_cache: bool = False) -> PicState:
    """Power-on initialization: arm interrupts, register every discovered
    meter, and settle into the idle phase."""
    state = PicState(registered_meters=[], push_period=push_period,
                     push_enabled=push_enabled, serve_cache_mode=serve_cache)
    state.registered_meters = bus.discover()
    state.phase = Phase.IDLE
    return state


def on_serial_interrupt(state: PicState, cmd: Command) -> None:
    """Serial ISR: validate the opcode and latch the command. No meter I/O,
    no cache writes, no phase change; a malformed opcode latches a reject so
    the main loop can answer with an error instead of dropping it."""
    if isinstance(cmd.opcode, Opcode) and cmd.opcode is not Opcode.REJECT:
        latched = cmd
    else:
        latched = Command(opcode=Opcode.REJECT, seq=cmd.seq, arg=cmd.opcode)
    if len(state.flags.pending) >= COMMAND_QUEUE_DEPTH:
        state.flags.overflows += 1
        return
    state.flags.pending.append(latched)


def on_timer_interrupt(state: PicState) -> None:
    """Timer ISR: set the push flag and nothing else. The flag is a boolean,
    so back-to-back ticks coalesce into a single push."""
    state.flags.push_data = True


def collect_all(state: PicState, bus: MeterBus, now: float) -> float:
    """Refresh the cache for every registered meter; returns the total
    collection duration (sum of per-meter hop + read costs).

    A meter that times out keeps its previous cached snapshot, marked stale;
    the sweep still completes. A duration at or above the push period gets a
    budget-violation diagnostic, since collection must fit between ticks.
    """
    t = now
    for mid in state.registered_meters:
        try:
            snap, cost = bus.read(mid.outlet, t)
        except BusTimeout:
            cost = bus.read_timeout_s
            old = state.cache.get(mid)
            if old is not None:
                snap = replace(old, fault="bus-timeout")
            else:
                snap = MeterSnapshot(
                    meter=mid, volts=0.0, amps=0.0, watts=0.0, energy_kwh=0.0,
                    relay=RelayState.OFF, captured_at=0.0, fault="bus-timeout",
                )
        state.cache[mid] = snap
        t += cost
    duration = t - now
    if state.registered_meters and duration >= state.push_period:
        state.diagnostics.append(
            f"collection took {duration:.3f} s, at or above the {state.push_period:.3f} s push period"
        )
    return duration


def _cached_snapshots(state: PicState) -> tuple:
    return tuple(state.cache[mid] for mid in state.registered_meters)


def main_loop_step(state: PicState, bus: MeterBus, uplink=None, now: float = 0.0) -> list:
    """One pass of the main loop, acting on latched flags in priority order:
    pending commands first (server-initiated, latency-sensitive), then the
    periodic push. Returns every message emitted this step; push packets are
    also handed to ``uplink`` when given.
    """
    if state.phase is Phase.INIT:
        raise RuntimeError("main loop entered before startup completed")
    messages: list = []
    t = now
    if state.flags.overflows > state.overflows_noted:
        dropped = state.flags.overflows - state.overflows_noted
        state.diagnostics.append(
            f"{dropped} command(s) dropped: queue depth {COMMAND_QUEUE_DEPTH} exceeded"
        )
        state.overflows_noted = state.flags.overflows
    while state.flags.pending:
        cmd = state.flags.pending.popleft()
        if cmd.opcode is Opcode.POWER_INFO_REQUEST:
            cache_ready = all(mid in state.cache for mid in state.registered_meters)
            state.phase = Phase.COLLECTING
            if not (state.serve_cache_mode and cache_ready):
                t += collect_all(state, bus, t)
            state.phase = Phase.IDLE
            messages.append(make_aggregate_packet(
                bus.station.station_id, _cached_snapshots(state), seq=cmd.seq, sent_at=t))
        elif cmd.opcode is Opcode.SET_PUSH_PERIOD:
            state.push_period = float(cmd.arg)
            messages.append(Message(
                kind=MessageKind.SETUP_ACK, station=bus.station.station_id,
                payload={"push_period": state.push_period}, seq=cmd.seq, sent_at=t))
        elif cmd.opcode is Opcode.SET_PUSH_ENABLED:
            state.push_enabled = bool(cmd.arg)
            messages.append(Message(
                kind=MessageKind.SETUP_ACK, station=bus.station.station_id,
                payload={"push_enabled": state.push_enabled}, seq=cmd.seq, sent_at=t))
        else:
            messages.append(Message(
                kind=MessageKind.ERROR, station=bus.station.station_id,
                payload={"reason": f"unknown opcode {cmd.arg!r}"}, seq=cmd.seq, sent_at=t))
    if state.flags.push_data and state.push_enabled:
        state.phase = Phase.PUSHING
        t += collect_all(state, bus, t)
        state.packet_seq += 1
        packet = make_aggregate_packet(
            bus.station.station_id, _cached_snapshots(state),
            seq=state.packet_seq, sent_at=t)
        if uplink is not None:
            uplink(packet)
        messages.append(packet)
        state.flags.push_data = False
        state.phase = Phase.IDLE
    elif state.flags.push_data and not state.push_enabled:
        state.flags.push_data = False  # pushing disabled: tick consumed, nothing sent
    return messages


@dataclass
class PicEndpoint:
    """What the aggregated-pull protocol talks to: the collector's state plus
    its meter bus."""

    state: PicState
    bus: MeterBus

    @property
    def station(self) -> ChargingStation:
        return self.bus.station

    def serve_aggregate(self, now: float):
        """Build the reply to an aggregate request: (snapshots, local_cost).

        In cache-serving mode the periodic collection has already done the
        metering, so the request costs nothing locally; otherwise a fresh
        sweep runs and its duration is charged to the caller.
        """
        if self.state.serve_cache_mode and all(
            mid in self.state.cache for mid in self.state.registered_meters
        ):
            return _cached_snapshots(self.state), 0.0
        self.state.phase = Phase.COLLECTING
        duration = collect_all(self.state, self.bus, now)
        self.state.phase = Phase.IDLE
        return _cached_snapshots(self.state), duration

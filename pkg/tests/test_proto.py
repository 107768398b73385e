"""Protocol tests: wall-time arithmetic, request accounting, push consumption."""
import pytest

from chargesim.control import ServerStore
from chargesim.domain import ChargingStation, EvModel, MeterId, MeterSnapshot, RelayState, apply_relay, plug_ev, set_current
from chargesim.latency import LatencyModel, LinkKind, LinkModelSet, MixtureComponent, TimingBudget
from chargesim.pic import MeterBus, PicEndpoint, startup_init
from chargesim.proto import (
    Message,
    MessageKind,
    RequestTimeout,
    legacy_pull,
    legacy_retrieval_time,
    make_aggregate_packet,
    pic_pull,
    push_consume,
    push_cycle_time,
    t_save,
)
from chargesim.sim import substream


def fixed(location, hard_max=None):
    return LatencyModel(
        kind=LinkKind.ETHERNET,
        components=(MixtureComponent(1.0, location, 0.0),),
        hard_max=hard_max if hard_max is not None else max(location * 2, 1e-6),
    )


def fixed_links(threeg=4.5, metering=0.5, local_bus=1e-6, ethernet=1e-6):
    return LinkModelSet(
        ethernet=fixed(ethernet),
        wifi=fixed(0.02),
        threeg=fixed(threeg, hard_max=threeg or 1e-6),
        local_bus=fixed(local_bus),
        metering=fixed(metering, hard_max=metering or 1e-6),
    )


def charging_station(outlets=4):
    station = ChargingStation(station_id=0, circuit_limit=64.0, outlets=outlets)
    for outlet in range(outlets):
        plug_ev(station, outlet, EvModel(), 0.0)
        set_current(station, outlet, 16.0, 0.0)
        apply_relay(station, outlet, RelayState.ON, 0.0)
    return station


def cache_serving_endpoint(links, outlets=4):
    station = charging_station(outlets)
    bus = MeterBus(station, links.local_bus, links.metering, substream(0, "bus"))
    state = startup_init(bus, serve_cache=True)
    from chargesim.pic import collect_all
    collect_all(state, bus, 0.0)
    return PicEndpoint(state=state, bus=bus)


class TestLegacyPull:
    def test_worst_case_four_readings_take_twenty_seconds(self):
        links = fixed_links(threeg=4.5, metering=0.5)
        result = legacy_pull(charging_station(), links, substream(1, "t"))
        assert result.wall_time == pytest.approx(20.0, abs=1e-12)
        assert result.request_count == 4

    def test_zero_latency_gives_zero_wall_and_four_snapshots(self):
        links = fixed_links(threeg=1e-9, metering=1e-9, local_bus=1e-9)
        result = legacy_pull(charging_station(), links, substream(1, "t"))
        assert result.wall_time == pytest.approx(0.0, abs=1e-6)
        assert len(result.snapshots) == 4
        assert all(s is not None for s in result.snapshots.values())

    def test_with_status_fixed_rtt_costs_eight_round_trips(self):
        # every request pinned to the same 2.0 s round trip: metering folded
        # to zero and the status read given the same register cost
        links = fixed_links(threeg=2.0, metering=1e-9)
        result = legacy_pull(charging_station(), links, substream(1, "t"),
                             include_status=True, t_status_read=1e-9)
        # oracle: enumerate the eight requests and sum their costs
        expected = sum(2.0 + 1e-9 for _ in range(8))
        assert result.wall_time == pytest.approx(expected, rel=1e-9)
        assert result.request_count == 8

    def test_timeout_yields_partial_result_with_markers(self):
        links = fixed_links(threeg=4.5, metering=0.5)
        result = legacy_pull(charging_station(), links, substream(1, "t"), timeout_s=1.0)
        assert result.request_count == 4
        assert len(result.errors) == 4
        assert all(s is None for s in result.snapshots.values())
        assert result.wall_time == pytest.approx(4.0)  # four timeouts charged

    def test_every_request_has_exactly_one_outcome(self):
        # mixed fates: some requests inside the timeout, some beyond
        links = fixed_links(threeg=4.5, metering=0.5)
        for timeout in (0.1, 5.0, 30.0):
            result = legacy_pull(charging_station(), links, substream(2, "t"),
                                 include_status=True, timeout_s=timeout)
            assert result.responses + len(result.errors) == result.request_count
            # the wire trail agrees: one request message and one terminal
            # (response or error) message per issued request
            requests = [m for m in result.messages
                        if m.kind in (MessageKind.METER_POWER_REQ, MessageKind.METER_STATUS_REQ)]
            terminals = [m for m in result.messages
                         if m.kind in (MessageKind.METER_POWER_RESP,
                                       MessageKind.METER_STATUS_RESP, MessageKind.ERROR)]
            assert len(requests) == result.request_count
            assert len(terminals) == result.request_count
            for m in result.messages:
                if m.received_at:
                    assert m.received_at >= m.sent_at

    def test_pipelined_wall_time_is_slowest_request(self):
        links = fixed_links(threeg=4.0, metering=0.5)
        result = legacy_pull(charging_station(), links, substream(1, "t"), pipelined=True)
        assert result.wall_time == pytest.approx(4.5)  # one round trip, not four
        assert result.request_count == 4
        assert len(result.snapshots) == 4

    def test_staleness_reflects_return_path(self):
        links = fixed_links(threeg=4.0, metering=0.5)
        result = legacy_pull(charging_station(), links, substream(1, "t"))
        # last meter's reading is freshest: it only ages by its uplink leg
        last = MeterId(0, 3)
        assert result.staleness[last] == pytest.approx(2.0)  # half of 4.0 s link


class TestPicPull:
    def test_worst_case_single_request_wall_time(self):
        links = fixed_links(threeg=4.5, metering=0.5)
        endpoint = cache_serving_endpoint(links)
        result = pic_pull(endpoint, links, substream(1, "t"))
        assert result.wall_time == pytest.approx(4.5, abs=1e-12)
        assert result.request_count == 1

    def test_speedups_against_legacy_at_same_budget(self):
        links = fixed_links(threeg=4.5, metering=0.5)
        legacy4 = legacy_pull(charging_station(), links, substream(1, "a")).wall_time
        legacy8 = legacy_pull(charging_station(), links, substream(1, "b"),
                              include_status=True).wall_time
        agg = pic_pull(cache_serving_endpoint(links), links, substream(1, "c")).wall_time
        assert legacy4 / agg == pytest.approx(4.444, rel=0.01)
        assert legacy8 / agg == pytest.approx(8.444, rel=0.01)
        # both inside 5% of the coarse 4.4x / 8.4x figures
        assert abs(legacy4 / agg - 4.4) / 4.4 < 0.05
        assert abs(legacy8 / agg - 8.4) / 8.4 < 0.05

    def test_zero_latency_uplink_gives_zero_wall(self):
        links = fixed_links(threeg=1e-9, metering=0.5)
        endpoint = cache_serving_endpoint(links)
        result = pic_pull(endpoint, links, substream(1, "t"))
        assert result.wall_time == pytest.approx(0.0, abs=1e-6)

    def test_timeout_fails_whole_request(self):
        links = fixed_links(threeg=4.5, metering=0.5)
        endpoint = cache_serving_endpoint(links)
        with pytest.raises(RequestTimeout):
            pic_pull(endpoint, links, substream(1, "t"), timeout_s=1.0)

    def test_fresh_mode_charges_collection_to_wall(self):
        links = fixed_links(threeg=4.5, metering=0.2, local_bus=0.001)
        station = charging_station()
        bus = MeterBus(station, links.local_bus, links.metering, substream(0, "bus"))
        state = startup_init(bus, serve_cache=False)
        result = pic_pull(PicEndpoint(state=state, bus=bus), links, substream(1, "t"))
        assert result.wall_time == pytest.approx(4.5 + 4 * 0.201, abs=1e-9)


class TestTimingIdentities:
    def test_push_cycle_time_hand_value(self):
        # 4 * (0 + 0.5) + 0.5 * 5 = 4.5
        budget = TimingBudget(t_3g=5.0, t_metering=0.5, t_ethernet=0.0)
        assert push_cycle_time(budget, 4) == pytest.approx(4.5)

    def test_push_cycle_zero_budget(self):
        assert push_cycle_time(TimingBudget(), 4) == 0.0

    def test_retrieval_minus_cycle_is_seventeen_and_a_half(self):
        budget = TimingBudget(t_3g=5.0, t_metering=0.5, t_ethernet=0.0)
        saving = legacy_retrieval_time(budget, 4) - push_cycle_time(budget, 4)
        assert saving == pytest.approx(17.5)

    def test_t_save_worst_case(self):
        assert t_save(TimingBudget(t_3g=5.0, t_ethernet=0.0)) == pytest.approx(17.5)

    def test_t_save_zero(self):
        assert t_save(TimingBudget()) == 0.0

    def test_t_save_direct_substitution(self):
        # 3.5 * 2 - 4 * 0.001 = 6.996
        assert t_save(TimingBudget(t_3g=2.0, t_ethernet=0.001)) == pytest.approx(6.996)

    def test_negative_meter_count_rejected(self):
        with pytest.raises(ValueError):
            push_cycle_time(TimingBudget(), -1)


def snapshot(outlet, captured_at, amps=16.0):
    return MeterSnapshot(
        meter=MeterId(0, outlet), volts=208.0, amps=amps, watts=208.0 * amps,
        energy_kwh=0.0, relay=RelayState.ON, captured_at=captured_at,
    )


class TestPushConsume:
    def test_fresh_packet_staleness_is_transit_plus_offsets(self):
        # collection at t=100 with per-meter offsets, delivered at t=103
        snaps = [snapshot(i, 100.0 + 0.2 * (i + 1)) for i in range(4)]
        packet = make_aggregate_packet(0, snaps, seq=1, sent_at=100.8)
        store = ServerStore()
        staleness = push_consume(store, packet, now=103.0)
        # oracle: now - captured_at, meter by meter
        for i in range(4):
            assert staleness[MeterId(0, i)] == pytest.approx(103.0 - (100.0 + 0.2 * (i + 1)))

    def test_duplicate_seq_is_noop_with_diagnostic(self):
        store = ServerStore()
        packet = make_aggregate_packet(0, [snapshot(0, 1.0)], seq=5, sent_at=1.0)
        assert push_consume(store, packet, 2.0) is not None
        before = store.stations[0]
        assert push_consume(store, packet, 3.0) is None
        assert store.stations[0] is before
        assert len(store.diagnostics) == 1

    def test_stale_seq_discarded(self):
        store = ServerStore()
        push_consume(store, make_aggregate_packet(0, [snapshot(0, 2.0)], seq=7, sent_at=2.0), 3.0)
        old = make_aggregate_packet(0, [snapshot(0, 1.0)], seq=6, sent_at=1.0)
        assert push_consume(store, old, 4.0) is None
        assert store.stations[0].packet_seq == 7

    def test_duplicate_meter_entries_rejected(self):
        with pytest.raises(ValueError):
            make_aggregate_packet(0, [snapshot(0, 1.0), snapshot(0, 2.0)], seq=1, sent_at=2.0)

    def test_non_packet_kind_rejected(self):
        store = ServerStore()
        msg = Message(kind=MessageKind.ERROR, station=0, payload={"reason": "x"})
        with pytest.raises(ValueError):
            push_consume(store, msg, 1.0)


class TestMessage:
    def test_received_before_sent_rejected(self):
        with pytest.raises(ValueError):
            Message(kind=MessageKind.AGGREGATE_REQ, station=0, sent_at=5.0, received_at=4.0)

    def test_packet_record_is_line_serializable(self):
        import json
        packet = make_aggregate_packet(0, [snapshot(0, 1.0)], seq=1, sent_at=2.0)
        line = json.dumps(packet.to_record(), sort_keys=True)
        assert "snapshots" in line

import pytest

from etfleet.dispatch import (DispatchConfig, Dispatcher, ElectricTaxi, ETState,
                              RequestState, RideRequest, ScoreContext, f_demand,
                              predicted_soc_after, reachability_test, score,
                              select_candidate)
from etfleet.errors import ConfigError
from etfleet.geo import GeoPoint, Station, StationLayout

LAYOUT = StationLayout([Station(0, GeoPoint(0.0, 0.0), 2),
                        Station(1, GeoPoint(10.0, 0.0), 2),
                        Station(2, GeoPoint(0.0, 10.0), 2),
                        Station(3, GeoPoint(40.0, 40.0), 2)])


def taxi(tid, x=0.0, y=0.0, soc=1.0, income=0.0, state=ETState.AVAILABLE,
         empty_since=0.0):
    return ElectricTaxi(taxi_id=tid, position=GeoPoint(x, y), soc=soc,
                        battery_capacity=38.0, consumption=0.152, state=state,
                        cumulative_income=income, empty_since=empty_since)


def request(rid=0, ox=1.0, oy=0.0, dx=2.0, dy=0.0, t=0.0):
    return RideRequest(rid, GeoPoint(ox, oy), GeoPoint(dx, dy), t)


def ctx(now=0.0, demand=100.0, d_ref=2.0, mean_income=0.0, u=None):
    return ScoreContext(now=now, demand=demand, d_ref=d_ref, mean_income=mean_income,
                        u_by_station=u or {0: 0.5, 1: 0.5, 2: 0.5, 3: 0.5})


# -- f(demand) -----------------------------------------------------------------

def test_f_demand_values():
    assert f_demand(100.0, 0.1) == pytest.approx(1.0)
    assert f_demand(0.0, 0.1) == 0.0
    assert f_demand(64.0, 0.01) == pytest.approx(0.08)


def test_f_demand_rejects_negative():
    with pytest.raises(ValueError):
        f_demand(-1.0, 0.1)


# -- reachability -----------------------------------------------------------------

def test_reachability_full_battery_short_trip():
    assert reachability_test(taxi(1), request(), LAYOUT, buffer=0.1)


def test_reachability_zero_soc_fails():
    assert not reachability_test(taxi(1, soc=0.0), request(), LAYOUT, buffer=0.0)


def test_reachability_boundary_equality_passes():
    # pickup 1 km + trip 1 km + reserve leg 2 km = 4 km exactly
    t = taxi(1, x=1.0, y=0.0)
    r = RideRequest(0, GeoPoint(0.0, 0.0), GeoPoint(1.0, 0.0), 0.0)
    # destination (1,0) is 1 km from station 0... make reserve explicit:
    # nearest station to destination is station 0 at distance 1.0
    need_km = 1.0 + 1.0 + 1.0
    t.soc = need_km * t.consumption / t.battery_capacity
    assert reachability_test(t, r, LAYOUT, buffer=0.0)
    t.soc = t.soc * (1.0 - 1e-9)
    assert not reachability_test(t, r, LAYOUT, buffer=0.0)


def test_reachability_buffer_raises_the_bar():
    t = taxi(1, x=1.0, y=0.0)
    r = RideRequest(0, GeoPoint(0.0, 0.0), GeoPoint(1.0, 0.0), 0.0)
    t.soc = 3.0 * t.consumption / t.battery_capacity
    assert reachability_test(t, r, LAYOUT, buffer=0.0)
    assert not reachability_test(t, r, LAYOUT, buffer=0.1)


def test_predicted_soc_after_subtracts_both_legs():
    t = taxi(1, x=1.0, y=0.0)
    r = RideRequest(0, GeoPoint(0.0, 0.0), GeoPoint(3.0, 0.0), 0.0)
    expected = 1.0 - (1.0 + 3.0) * t.consumption / t.battery_capacity
    assert predicted_soc_after(t, r) == pytest.approx(expected)


# -- scoring -----------------------------------------------------------------------

def test_score_nearer_taxi_wins_with_negative_w1():
    cfg = DispatchConfig()
    r = request(ox=0.0, oy=0.0, dx=1.0, dy=0.0)
    near = score(taxi(1, x=0.5), r, ctx(), cfg, LAYOUT)
    far = score(taxi(2, x=3.0), r, ctx(), cfg, LAYOUT)
    assert near.total > far.total


def test_score_lower_income_wins_with_negative_w2():
    cfg = DispatchConfig()
    r = request(ox=1.0, oy=0.0)
    poor = score(taxi(1, x=1.0, income=10.0), r, ctx(mean_income=50.0), cfg, LAYOUT)
    rich = score(taxi(2, x=1.0, income=90.0), r, ctx(mean_income=50.0), cfg, LAYOUT)
    assert poor.total > rich.total


def test_score_w4_zero_ignores_empty_time():
    cfg = DispatchConfig(w4=0.0)
    r = request(ox=1.0, oy=0.0)
    fresh = score(taxi(1, x=1.0, empty_since=0.9), r, ctx(now=1.0), cfg, LAYOUT)
    stale = score(taxi(2, x=1.0, empty_since=0.0), r, ctx(now=1.0), cfg, LAYOUT)
    assert fresh.total == pytest.approx(stale.total)


def test_score_w4_positive_rewards_long_empty_time():
    cfg = DispatchConfig(w4=0.5)
    r = request(ox=1.0, oy=0.0)
    fresh = score(taxi(1, x=1.0, empty_since=0.9), r, ctx(now=1.0), cfg, LAYOUT)
    stale = score(taxi(2, x=1.0, empty_since=0.0), r, ctx(now=1.0), cfg, LAYOUT)
    assert stale.total > fresh.total


def test_score_breakdown_reconstructs_total():
    cfg = DispatchConfig(w4=0.25)
    r = request(ox=2.0, oy=1.0, dx=4.0, dy=0.0)
    b = score(taxi(3, x=0.5, y=0.5, soc=0.8, income=30.0), r,
              ctx(now=0.5, demand=49.0, mean_income=20.0), cfg, LAYOUT)
    total = (b.f_demand_value * cfg.w1 * b.d_norm + cfg.w2 * b.income_norm
             + cfg.w3 * b.matching + cfg.w4 * b.empty_norm)
    assert b.total == pytest.approx(total, rel=1e-12)
    assert b.f_demand_value == pytest.approx(0.07)


def test_matching_term_prefers_low_soc_to_quiet_station():
    # destination sub-region station quiet (u=0.1): the taxi that will arrive
    # low on charge matches it better than a full one
    cfg = DispatchConfig(w1=0.0, w2=0.0, w3=1.0)
    r = request(ox=0.0, oy=0.0, dx=1.0, dy=0.0)
    u = {0: 0.1, 1: 0.1, 2: 0.1, 3: 0.1}
    low = score(taxi(1, soc=0.25), r, ctx(u=u), cfg, LAYOUT)
    high = score(taxi(2, soc=1.0), r, ctx(u=u), cfg, LAYOUT)
    assert low.total > high.total


# -- selection ------------------------------------------------------------------------

def test_select_candidate_empty_returns_none():
    assert select_candidate([], request(), ctx(), DispatchConfig(), LAYOUT) is None


def test_select_candidate_single():
    t = taxi(7)
    assert select_candidate([t], request(), ctx(), DispatchConfig(), LAYOUT) is t


def test_select_candidate_matches_brute_force():
    cfg = DispatchConfig()
    r = request(ox=2.0, oy=2.0, dx=6.0, dy=1.0)
    c = ctx(mean_income=40.0)
    cands = [taxi(i, x=float(i) / 2, y=1.0, soc=0.4 + 0.06 * i, income=10.0 * i)
             for i in range(8)]
    best = max(cands, key=lambda t: (score(t, r, c, cfg, LAYOUT).total, -t.taxi_id))
    assert select_candidate(cands, r, c, cfg, LAYOUT) is best


def test_select_candidate_tie_breaks_by_smaller_id():
    cfg = DispatchConfig()
    r = request(ox=1.0, oy=0.0)
    a, b = taxi(5, x=2.0), taxi(3, x=2.0)  # identical except id
    assert select_candidate([a, b], r, ctx(), cfg, LAYOUT).taxi_id == 3


# -- config validation ------------------------------------------------------------------

def test_dispatch_config_rejects_cancel_before_escalation():
    with pytest.raises(ConfigError):
        DispatchConfig(wait_escalation_min=10.0, wait_cancel_min=5.0)


def test_dispatch_config_rejects_negative_buffer():
    with pytest.raises(ConfigError):
        DispatchConfig(reachability_buffer=-0.1)


# -- dispatcher state machine ----------------------------------------------------------

def make_dispatcher(taxis, cfg=None):
    return Dispatcher(taxis, LAYOUT, cfg or DispatchConfig())


def test_handle_request_assigns_in_region():
    d = make_dispatcher([taxi(0, x=0.5)])
    r = request()
    a = d.handle_request(r, ctx())
    assert a is not None and a.taxi.taxi_id == 0
    assert r.state is RequestState.ASSIGNED
    assert a.taxi.state is ETState.SERVING


def test_handle_request_waitlists_when_region_empty():
    # only taxi sits in station 1's sub-region; request is in station 0's
    d = make_dispatcher([taxi(0, x=10.0)])
    r = request()
    assert d.handle_request(r, ctx()) is None
    assert r.state is RequestState.WAITLISTED
    assert d.waitlist == [r]


def test_handle_request_waitlists_when_unreachable():
    d = make_dispatcher([taxi(0, x=0.5, soc=0.01)])
    r = request()
    assert d.handle_request(r, ctx()) is None
    assert r.state is RequestState.WAITLISTED


def test_waitlist_preserves_arrival_order():
    d = make_dispatcher([])
    rs = [request(rid=i, t=0.01 * i) for i in range(4)]
    for r in rs:
        d.handle_request(r, ctx())
    assert [r.request_id for r in d.waitlist] == [0, 1, 2, 3]


def test_waitlist_earlier_request_claims_freed_taxi():
    d = make_dispatcher([taxi(0, x=0.5)])
    d.fleet[0].state = ETState.SERVING     # busy at arrival time
    r1, r2 = request(rid=1, t=0.0), request(rid=2, t=0.001)
    d.handle_request(r1, ctx(now=0.0))
    d.handle_request(r2, ctx(now=0.001))
    d.fleet[0].state = ETState.AVAILABLE   # frees up
    assignments, cancelled = d.process_waitlist(ctx(now=0.01))
    assert [a.request.request_id for a in assignments] == [1]
    assert cancelled == []
    assert [r.request_id for r in d.waitlist] == [2]


def test_escalation_only_after_threshold():
    # taxi waits in adjacent sub-region 1; request origin is in sub-region 0
    d = make_dispatcher([taxi(0, x=9.0)])
    r = request(t=0.0)
    d.handle_request(r, ctx(now=0.0))
    # 4 minutes: below the 5-minute escalation threshold, no adjacent search
    a4, _ = d.process_waitlist(ctx(now=4.0 / 60.0))
    assert a4 == []
    # 6 minutes: adjacent sub-regions open up
    a6, _ = d.process_waitlist(ctx(now=6.0 / 60.0))
    assert [x.request.request_id for x in a6] == [r.request_id]


def test_escalation_searches_only_m_nearest_regions():
    # with m=1 only station 1's region joins; a taxi near station 2 stays out
    cfg = DispatchConfig(adjacency_m=1)
    d = Dispatcher([taxi(0, x=0.0, y=9.0)], LAYOUT, cfg)   # region 2
    r = request(t=0.0)  # origin region 0; nearest other station is 1 or 2 (tie -> 1)
    d.handle_request(r, ctx(now=0.0))
    a, _ = d.process_waitlist(ctx(now=10.0 / 60.0))
    assert a == []


def test_cancellation_only_after_cancel_threshold():
    d = make_dispatcher([])
    r = request(t=0.0)
    d.handle_request(r, ctx(now=0.0))
    _, c29 = d.process_waitlist(ctx(now=29.0 / 60.0))
    assert c29 == []
    _, c31 = d.process_waitlist(ctx(now=31.0 / 60.0))
    assert [x.request_id for x in c31] == [r.request_id]
    assert r.state is RequestState.CANCELLED
    assert d.waitlist == []


def test_no_request_is_both_assigned_and_cancelled():
    d = make_dispatcher([taxi(0, x=0.5)])
    d.fleet[0].state = ETState.SERVING
    r = request(t=0.0)
    d.handle_request(r, ctx(now=0.0))
    d.fleet[0].state = ETState.AVAILABLE
    assignments, cancelled = d.process_waitlist(ctx(now=31.0 / 60.0))
    # past the cancel threshold the request is declined, not assigned
    assert assignments == [] and [x.request_id for x in cancelled] == [0]


def test_one_taxi_never_double_assigned_within_scan():
    d = make_dispatcher([taxi(0, x=0.5)])
    d.fleet[0].state = ETState.SERVING
    r1, r2 = request(rid=1, t=0.0), request(rid=2, t=0.0)
    d.handle_request(r1, ctx(now=0.0))
    d.handle_request(r2, ctx(now=0.0))
    d.fleet[0].state = ETState.AVAILABLE
    assignments, _ = d.process_waitlist(ctx(now=0.05))
    assert len(assignments) == 1
    assert assignments[0].request.request_id == 1
    assert len(d.waitlist) == 1


def test_post_trip_decision_threshold_is_strict():
    d = make_dispatcher([])
    at_threshold = taxi(1, x=0.3, soc=0.2)
    below = taxi(2, x=0.3, soc=0.199)
    assert d.post_trip_decision(at_threshold) is None
    assert d.post_trip_decision(below) == 0


def test_handle_request_rejects_non_pending():
    d = make_dispatcher([taxi(0, x=0.5)])
    r = request()
    r.state = RequestState.CANCELLED
    with pytest.raises(ValueError):
        d.handle_request(r, ctx())

import math

import pytest

from ecrsim.distributions import (
    ExponentialParams,
    GammaParams,
    LognormalParams,
    TruncLognormalParams,
    UniformParams,
)
from ecrsim.kernel import Simulator, WarmupGate, derive_stream
from ecrsim.network import RatePlan, build_reference
from ecrsim.traffic import (
    Collector,
    FtpSession,
    FtpSessionParams,
    HttpSession,
    HttpSessionParams,
    TrafficMix,
    build_user_node,
)
from ecrsim.transport import OVERHEAD_BYTES, StreamConnection
from ecrsim.video import synthesize_trace

from .oracles import window_ramp_transfer_time


def _const_tln(value):
    return TruncLognormalParams(mu=math.log(value), sigma=1e-9, max=max(1.0, value * 10))


def _const_uniform(value):
    return UniformParams(a=value - 1e-6, b=value + 1e-6)


def _const_gamma(value):
    # mean=value with vanishing spread: rounds to value every draw
    return GammaParams(kappa=1e8, theta=value / 1e8)


FAST_PLAN = RatePlan(
    backbone_bps=10_000_000_000,
    distribution_bps=1_000_000_000,
    uni_bps=1_000_000_000,
    rtt=0.01,
    olt_buffer_bytes=1 << 20,
    other_buffer_bytes=1 << 20,
)


def _reference_net(sim, line_rate=1_000_000_000):
    return build_reference(sim, FAST_PLAN, line_rate=line_rate, n_onus=1, users_per_onu=1)


def _collector():
    return Collector(WarmupGate(warmup_end=0.0))


def test_degenerate_page_takes_about_one_round_trip():
    sim = Simulator(1)
    net = _reference_net(sim)
    coll = _collector()
    params = HttpSessionParams(
        html_size=_const_tln(1.0),
        n_embedded=GammaParams(kappa=1e-9, theta=1.0),  # rounds to zero objects
        parsing_time=TruncLognormalParams(mu=-40.0, sigma=1e-9, max=300.0),
        reading_time=LognormalParams(mu=5.0, sigma=1e-9),
        request_size=_const_uniform(100.0),
    )
    conn = StreamConnection(sim, net.down_route(0, 0), net.up_route(0, 0))
    s = HttpSession(sim, conn, params, derive_stream("h", 1), coll, who="t")
    s.start(at=0.0)
    sim.run_until(5.0)
    pages = coll.records["page_delay"]
    assert len(pages) == 1
    assert pages[0].value == pytest.approx(0.01, rel=0.2)  # ~1 RTT on a fast idle path


def test_frozen_draws_match_closed_form_page_delay():
    sim = Simulator(2)
    line = 100_000_000
    net = _reference_net(sim, line_rate=line)
    coll = _collector()
    params = HttpSessionParams(
        html_size=_const_tln(1000.0),
        embedded_size=_const_tln(1200.0),
        n_embedded=_const_gamma(2.0),
        parsing_time=_const_tln(0.5),
        reading_time=LognormalParams(mu=8.0, sigma=1e-9),
        request_size=_const_uniform(300.0),
    )
    conn = StreamConnection(sim, net.down_route(0, 0), net.up_route(0, 0))
    s = HttpSession(sim, conn, params, derive_stream("h", 2), coll, who="t")
    s.start(at=0.0)
    sim.run_until(30.0)
    pages = coll.records["page_delay"]
    assert len(pages) == 1

    # Independent store-and-forward reference model: per-hop FIFO servers,
    # serialization then propagation, busy state persisting across frames.
    bb, uni, dist = 10_000_000_000, 1_000_000_000, 1_000_000_000
    prop = 0.005

    class HopChain:
        def __init__(self, hops):  # [(rate_bps, prop_s), ...]
            self.hops = hops
            self.busy = [0.0] * len(hops)

        def send(self, t, wire):
            for i, (rate, p) in enumerate(self.hops):
                t = max(t, self.busy[i]) + wire * 8 / rate
                self.busy[i] = t
                t += p
            return t

    # upstream mirrors the contention-free delay hop (stage chain + one prop)
    up = HopChain([(uni, 0.0), (line, 0.0), (bb, prop)])
    down = HopChain([(bb, prop), (line, 0.0), (dist, 0.0), (uni, 0.0)])

    def fetch(t0, req_payload, resp_payload):
        t_req = up.send(t0, req_payload + 66)
        down.send(t_req, 66)  # request ACK leads the response downstream
        t_resp = down.send(t_req, resp_payload + 66)
        up.send(t_resp, 66)  # response ACK occupies the upstream chain
        return t_resp

    t = fetch(0.0, 300, 1000)  # html
    t += 0.5  # parsing
    t = fetch(t, 300, 1200)  # embedded 1
    t = fetch(t, 300, 1200)  # embedded 2
    assert pages[0].value == pytest.approx(t, rel=1e-6)


def test_embedded_object_count_is_capped():
    sim = Simulator(3)
    net = _reference_net(sim)
    coll = _collector()
    params = HttpSessionParams(
        html_size=_const_tln(500.0),
        embedded_size=_const_tln(200.0),
        n_embedded=_const_gamma(1000.0),  # draw far above the cap
        n_embedded_max=300,
        parsing_time=TruncLognormalParams(mu=-40.0, sigma=1e-9, max=300.0),
        reading_time=LognormalParams(mu=8.0, sigma=1e-9),
        request_size=_const_uniform(100.0),
    )
    conn = StreamConnection(sim, net.down_route(0, 0), net.up_route(0, 0))
    s = HttpSession(sim, conn, params, derive_stream("h", 3), coll, who="t")
    s.start(at=0.0)
    sim.run_until(60.0)
    assert len(coll.records["page_delay"]) == 1
    assert conn.transfers_completed == 1 + 300  # html + capped embedded fetches


def test_ftp_transfer_rate_matches_window_ramp_model():
    sim = Simulator(4)
    plan = RatePlan(
        backbone_bps=10_000_000_000,
        distribution_bps=100_000_000,
        uni_bps=100_000_000,
        rtt=0.01,
        olt_buffer_bytes=1_000_000,
        other_buffer_bytes=256_000,
    )
    net = build_reference(sim, plan, line_rate=100_000_000, n_onus=1, users_per_onu=1)
    coll = _collector()
    params = FtpSessionParams(
        file_size=_const_tln(2_000_000.0),
        reading_time=ExponentialParams(lam=1e-9),  # effectively one file
        request_size=_const_uniform(300.0),
    )
    conn = StreamConnection(sim, net.down_route(0, 0), net.up_route(0, 0))
    s = FtpSession(sim, conn, params, derive_stream("f", 4), coll, who="t")
    s.start(at=0.0)
    sim.run_until(10.0)
    recs = coll.records["ftp_rate"]
    assert len(recs) >= 1
    rec = recs[0]
    oracle_t = window_ramp_transfer_time(2_000_000, 1434, 100e6, 0.01)
    assert rec.value == pytest.approx(2_000_000 * 8 / oracle_t, rel=0.2)


def test_ten_ftp_sessions_record_independently():
    sim = Simulator(5)
    net = _reference_net(sim)
    coll = _collector()
    mix = TrafficMix(n_http=0, n_ftp=10, n_video=0)
    build_user_node(sim, net, 0, 0, mix, None, coll)
    sim.run_until(30.0)
    recs = coll.records["ftp_rate"]
    who = {r.who for r in recs}
    assert len(who) == 10
    assert all(r.value > 0 for r in recs)


def test_full_user_node_mix_produces_all_measures():
    sim = Simulator(6)
    net = _reference_net(sim)
    coll = Collector(WarmupGate(warmup_end=5.0))
    trace = synthesize_trace(n_frames=300, fps=30.0, mean_bit_rate=2_000_000.0)
    mix = TrafficMix(n_http=1, n_ftp=2, n_video=1)
    build_user_node(sim, net, 0, 0, mix, trace, coll)
    sim.run_until(60.0)
    assert coll.sample_mean("dfr") == 1.0  # uncontended path loses nothing
    assert coll.sample_mean("ftp_rate") > 0
    assert coll.sample_mean("page_delay") > 0
    # warmup gating: counted records all start at/after the gate
    for kind in ("page_delay", "ftp_rate", "dfr"):
        counted = coll.counted(kind)
        assert counted, kind
        assert min(r.start for r in counted) >= 5.0
        assert len(counted) < len(coll.records[kind])  # something was gated out


def test_collector_empty_mean_is_none():
    coll = Collector(WarmupGate(warmup_end=1e9))
    coll.add("page_delay", 1.0, 2.0, 1.0, "x")
    assert coll.sample_mean("page_delay") is None

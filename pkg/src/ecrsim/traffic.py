"""Session-level traffic sources and the user-perceived measures they record.

Each user node runs a static mix of sessions: web browsing (request an HTML
object, parse, then fetch the embedded objects sequentially over the same
persistent connection, read, repeat), background bulk downloads (request a
file, download, read, repeat), and one-way streaming video. Web and bulk
sessions record page delay and transfer rate; the video sink records one
decodable-fraction value per group of pictures.

All byte-valued draws are rounded half-up at the point of use and floored at
one byte; time draws stay continuous.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .distributions import (
    ExponentialParams,
    GammaParams,
    LognormalParams,
    TruncLognormalParams,
    UniformParams,
    round_half_up,
    sample_exponential,
    sample_gamma,
    sample_lognormal,
    sample_trunc_lognormal,
    sample_uniform,
)
from .kernel import RngStream, Simulator, WarmupGate
from .transport import StreamConnection
from .video import DfrSink, FrameTrace, VideoSource

log = logging.getLogger(__name__)

PAGE_DELAY = "page_delay"
FTP_RATE = "ftp_rate"
DFR = "dfr"

MEASURES = (PAGE_DELAY, FTP_RATE, DFR)


@dataclass(frozen=True)
class HttpSessionParams:
    html_size: TruncLognormalParams = TruncLognormalParams(mu=7.90272, sigma=1.7643, max=2e6)
    embedded_size: TruncLognormalParams = TruncLognormalParams(mu=7.51384, sigma=2.17454, max=6e6)
    n_embedded: GammaParams = GammaParams(kappa=0.141385, theta=40.3257)
    n_embedded_max: int = 300
    parsing_time: TruncLognormalParams = TruncLognormalParams(mu=-1.24892, sigma=2.08427, max=300.0)
    reading_time: LognormalParams = LognormalParams(mu=-0.495204, sigma=2.7731)
    request_size: UniformParams = UniformParams(a=0.0, b=700.0)


@dataclass(frozen=True)
class FtpSessionParams:
    file_size: TruncLognormalParams = TruncLognormalParams(mu=14.45, sigma=0.35, max=5e6)
    reading_time: ExponentialParams = ExponentialParams(lam=0.006)
    request_size: UniformParams = UniformParams(a=0.0, b=700.0)


@dataclass(frozen=True)
class TrafficMix:
    """Per-user session counts plus the model parameter blocks."""

    n_http: int = 1
    n_ftp: int = 10
    n_video: int = 1
    http: HttpSessionParams = HttpSessionParams()
    ftp: FtpSessionParams = FtpSessionParams()
    start_stagger: float = 1.0  # sessions start uniformly inside this window

    def __post_init__(self):
        if min(self.n_http, self.n_ftp, self.n_video) < 0:
            raise ValueError("session counts must be >= 0")


@dataclass
class SessionRecord:
    kind: str
    start: float
    end: float
    value: float
    who: str = ""


class Collector:
    """Gathers session records; only those starting after warmup feed means."""

    def __init__(self, warmup: WarmupGate):
        self.warmup = warmup
        self.records: dict[str, list[SessionRecord]] = {m: [] for m in MEASURES}
        self.aborted_transfers = 0

    def add(self, kind: str, start: float, end: float, value: float, who: str = "") -> None:
        self.records[kind].append(SessionRecord(kind, start, end, value, who))

    def note_abort(self, who: str) -> None:
        self.aborted_transfers += 1
        log.debug("transfer aborted, sample discarded: %s", who)

    def counted(self, kind: str) -> list[SessionRecord]:
        return [r for r in self.records[kind] if self.warmup.counts(r.start)]

    def sample_mean(self, kind: str) -> float | None:
        vals = [r.value for r in self.counted(kind)]
        if not vals:
            return None
        return sum(vals) / len(vals)


def _byte_draw(params, rng, sampler) -> int:
    return max(1, round_half_up(sampler(params, rng)))


class HttpSession:
    """Browse loop: request page, parse, fetch embedded objects sequentially,
    record the page delay (request emission to page ready, parsing included),
    read, repeat. Aborted pages are discarded and the loop continues."""

    def __init__(
        self,
        sim: Simulator,
        conn: StreamConnection,
        params: HttpSessionParams,
        rng: RngStream,
        collector: Collector,
        who: str = "http",
    ):
        self.sim = sim
        self.conn = conn
        self.p = params
        self.rng = rng
        self.collector = collector
        self.who = who
        self._page_start = 0.0
        self._remaining = 0
        self.pages_completed = 0

    def start(self, at: float) -> None:
        self.sim.call_at(at, self._begin_page, target=self.who)

    def _begin_page(self, _ev=None) -> None:
        req = _byte_draw(self.p.request_size, self.rng, sample_uniform)
        html = _byte_draw(self.p.html_size, self.rng, sample_trunc_lognormal)
        self._page_start = self.sim.now
        self.conn.transfer(req, html, self._html_done)

    def _html_done(self, record) -> None:
        if record is None:
            self.collector.note_abort(self.who)
            self._read_then_next()
            return
        parse = sample_trunc_lognormal(self.p.parsing_time, self.rng)
        count = round_half_up(sample_gamma(self.p.n_embedded, self.rng))
        self._remaining = min(count, self.p.n_embedded_max)
        self.sim.call_in(parse, self._fetch_next, target=self.who)

    def _fetch_next(self, _ev=None) -> None:
        if self._remaining <= 0:
            self._page_done()
            return
        req = _byte_draw(self.p.request_size, self.rng, sample_uniform)
        size = _byte_draw(self.p.embedded_size, self.rng, sample_trunc_lognormal)
        self.conn.transfer(req, size, self._embedded_done)

    def _embedded_done(self, record) -> None:
        if record is None:
            self.collector.note_abort(self.who)
            self._read_then_next()
            return
        self._remaining -= 1
        self._fetch_next()

    def _page_done(self) -> None:
        now = self.sim.now
        self.pages_completed += 1
        self.collector.add(PAGE_DELAY, self._page_start, now, now - self._page_start, self.who)
        self._read_then_next()

    def _read_then_next(self) -> None:
        delay = sample_lognormal(self.p.reading_time, self.rng)
        self.sim.call_in(delay, self._begin_page, target=self.who)


class FtpSession:
    """Bulk loop: request a file, download, record the transfer rate in b/s,
    read, repeat."""

    def __init__(
        self,
        sim: Simulator,
        conn: StreamConnection,
        params: FtpSessionParams,
        rng: RngStream,
        collector: Collector,
        who: str = "ftp",
    ):
        self.sim = sim
        self.conn = conn
        self.p = params
        self.rng = rng
        self.collector = collector
        self.who = who
        self.files_completed = 0

    def start(self, at: float) -> None:
        self.sim.call_at(at, self._begin_file, target=self.who)

    def _begin_file(self, _ev=None) -> None:
        req = _byte_draw(self.p.request_size, self.rng, sample_uniform)
        size = _byte_draw(self.p.file_size, self.rng, sample_trunc_lognormal)
        self.conn.transfer(req, size, self._file_done)

    def _file_done(self, record) -> None:
        if record is None:
            self.collector.note_abort(self.who)
        else:
            self.files_completed += 1
            rate = record.bytes * 8.0 / record.duration
            self.collector.add(FTP_RATE, record.start, record.end, rate, self.who)
        delay = sample_exponential(self.p.reading_time, self.rng)
        self.sim.call_in(delay, self._begin_file, target=self.who)


def build_user_node(
    sim: Simulator,
    net,
    onu: int,
    user: int,
    mix: TrafficMix,
    trace: FrameTrace | None,
    collector: Collector,
):
    """Instantiate the session mix for one user; returns the session objects.

    Every session draws from its own named random stream, so changing one
    session count never perturbs the others' draws.
    """
    sessions = []
    base = f"onu{onu}/user{user}"
    for i in range(mix.n_http):
        rng = sim.stream(f"{base}/http{i}")
        conn = StreamConnection(
            sim, net.down_route(onu, user), net.up_route(onu, user), name=f"{base}/http{i}"
        )
        s = HttpSession(sim, conn, mix.http, rng, collector, who=f"{base}/http{i}")
        s.start(at=float(rng.gen.uniform(0.0, mix.start_stagger)))
        sessions.append(s)
    for i in range(mix.n_ftp):
        rng = sim.stream(f"{base}/ftp{i}")
        conn = StreamConnection(
            sim, net.down_route(onu, user), net.up_route(onu, user), name=f"{base}/ftp{i}"
        )
        s = FtpSession(sim, conn, mix.ftp, rng, collector, who=f"{base}/ftp{i}")
        s.start(at=float(rng.gen.uniform(0.0, mix.start_stagger)))
        sessions.append(s)
    for i in range(mix.n_video):
        if trace is None:
            raise ValueError("video sessions configured but no trace provided")
        rng = sim.stream(f"{base}/video{i}")
        who = f"{base}/video{i}"
        sink = DfrSink(
            sim, lambda s_, e_, v_, who=who: collector.add(DFR, s_, e_, v_, who), name=who
        )
        src = VideoSource(sim, net.down_route(onu, user), trace, sink, rng, name=who)
        src.start(at=float(rng.gen.uniform(0.0, mix.start_stagger)))
        sessions.append(src)
    return sessions

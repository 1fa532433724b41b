"""Delivery services over the simulated network.

Two services share the link layer:

* a reliable byte stream with classic Reno congestion control (slow start,
  congestion avoidance, fast retransmit/fast recovery, RTO with exponential
  backoff), used for request/response transfers so that measured delays
  reflect flow and congestion dynamics; and
* an unreliable datagram service used for streaming video.

Every frame on the wire carries a fixed 66-octet header overhead
(RTP/UDP/IP/Ethernet for datagrams; the TCP/IP/Ethernet stack happens to sum
to the same figure), so the usable payload per 1500-byte MTU is 1434 bytes
and the default MSS matches it.

Links are modeled by two hop types:

* :class:`Port` - a rate-limited egress with a FIFO drop-tail byte buffer;
  frames serialize one at a time and may be dropped on overflow.
* :class:`DelayHop` - a fixed-function hop (serialization plus propagation,
  no queueing), used for heavily over-provisioned segments and for the
  contention-free upstream direction.

Frames advance hop to hop via their ``route`` tuple; the final callback
delivers to the receiving protocol entity.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import SimulationError
from .kernel import NS_PER_S, Simulator, to_ns

OVERHEAD_BYTES = 66
MTU_BYTES = 1500
MAX_PAYLOAD_BYTES = MTU_BYTES - OVERHEAD_BYTES  # 1434
DEFAULT_MSS = MAX_PAYLOAD_BYTES

MIN_RTO_S = 0.2
MAX_RTO_S = 60.0
INITIAL_RTO_S = 1.0
MAX_RTO_RETRIES = 10
INITIAL_SSTHRESH_SEGMENTS = 64  # caps the first slow-start overshoot

SLOW_START = "slow_start"
CONGESTION_AVOIDANCE = "congestion_avoidance"
RECOVERY = "recovery"


class Frame:
    """One link-layer frame in flight."""

    __slots__ = ("payload", "wire", "route", "hop", "arrive", "ctx", "onu")

    def __init__(self, payload, wire, route, arrive, ctx=None, onu=0):
        self.payload = payload
        self.wire = wire
        self.route = route
        self.hop = 0
        self.arrive = arrive
        self.ctx = ctx
        self.onu = onu


def forward(frame: Frame) -> None:
    """Advance a frame to its next hop, or deliver it."""
    i = frame.hop
    route = frame.route
    if i < len(route):
        frame.hop = i + 1
        route[i].push(frame)
    else:
        frame.arrive(frame)


class Port:
    """Rate-limited unidirectional egress with a drop-tail byte buffer."""

    __slots__ = (
        "sim",
        "name",
        "rate_bps",
        "prop_ns",
        "cap_bytes",
        "_q",
        "_q_bytes",
        "busy",
        "offered_frames",
        "offered_bytes",
        "sent_frames",
        "sent_bytes",
        "dropped_frames",
        "dropped_bytes",
    )

    def __init__(self, sim: Simulator, name: str, rate_bps: int, buffer_bytes: int, prop_delay: float = 0.0):
        if rate_bps <= 0:
            raise SimulationError(f"port {name}: rate must be positive")
        self.sim = sim
        self.name = name
        self.rate_bps = int(rate_bps)
        self.prop_ns = to_ns(prop_delay)
        self.cap_bytes = int(buffer_bytes)
        self._q = deque()
        self._q_bytes = 0
        self.busy = False
        self.offered_frames = 0
        self.offered_bytes = 0
        self.sent_frames = 0
        self.sent_bytes = 0
        self.dropped_frames = 0
        self.dropped_bytes = 0

    def tx_ns(self, wire_bytes: int) -> int:
        return (wire_bytes * 8 * NS_PER_S) // self.rate_bps

    @property
    def queued_frames(self) -> int:
        return len(self._q)

    @property
    def queued_bytes(self) -> int:
        return self._q_bytes

    @property
    def in_service(self) -> int:
        return 1 if self.busy else 0

    def push(self, frame: Frame) -> None:
        self.offered_frames += 1
        self.offered_bytes += frame.wire
        if self.busy:
            if self._q_bytes + frame.wire > self.cap_bytes:
                self.dropped_frames += 1
                self.dropped_bytes += frame.wire
                return
            self._q.append(frame)
            self._q_bytes += frame.wire
        else:
            self.busy = True
            self.sim.schedule_fast(self.sim.now_ns + self.tx_ns(frame.wire), self._tx_done, frame)

    def _tx_done(self, frame: Frame) -> None:
        self.sent_frames += 1
        self.sent_bytes += frame.wire
        if self.prop_ns:
            self.sim.schedule_fast(self.sim.now_ns + self.prop_ns, forward, frame)
        else:
            forward(frame)
        if self._q:
            nxt = self._q.popleft()
            self._q_bytes -= nxt.wire
            self.sim.schedule_fast(self.sim.now_ns + self.tx_ns(nxt.wire), self._tx_done, nxt)
        else:
            self.busy = False


class DelayHop:
    """Fixed-function hop: one or more serialization stages plus propagation,
    computed in a single event per frame.

    Each stage keeps the finish time of the previous frame, so frames on the
    same hop serialize in order and can never overtake each other; there is
    no buffer limit (the hop stands in for segments that are over-provisioned
    by construction)."""

    __slots__ = ("sim", "rates", "prop_ns", "_stage_busy_until", "frames", "bytes")

    def __init__(self, sim: Simulator, rates_bps, prop_delay: float = 0.0):
        self.sim = sim
        self.rates = tuple(int(r) for r in rates_bps)
        self.prop_ns = to_ns(prop_delay)
        self._stage_busy_until = [0] * len(self.rates)
        self.frames = 0
        self.bytes = 0

    def exit_ns(self, wire_bytes: int) -> int:
        bits_ns = wire_bytes * 8 * NS_PER_S
        t = self.sim.now_ns
        busy = self._stage_busy_until
        for i, rate in enumerate(self.rates):
            t = max(t, busy[i]) + bits_ns // rate
            busy[i] = t
        return t + self.prop_ns

    def push(self, frame: Frame) -> None:
        self.frames += 1
        self.bytes += frame.wire
        self.sim.schedule_fast(self.exit_ns(frame.wire), forward, frame)


# ---------------------------------------------------------------------------
# datagram service


@dataclass
class Datagram:
    """Application view of one datagram (fragment of a video frame, etc.)."""

    payload_size: int
    src: str
    dst: str
    emission_time: float
    overhead: int = OVERHEAD_BYTES

    @property
    def wire_size(self) -> int:
        return self.payload_size + self.overhead


def send_datagram(sim: Simulator, route, payload_size: int, on_arrive: Callable, ctx=None) -> None:
    """Enqueue one datagram on ``route``; it is either delivered (on_arrive)
    or silently dropped at a full buffer. Fragmentation is the caller's job."""
    if payload_size > MAX_PAYLOAD_BYTES:
        raise SimulationError(
            f"datagram payload {payload_size} exceeds capacity {MAX_PAYLOAD_BYTES}"
        )
    frame = Frame(payload_size, payload_size + OVERHEAD_BYTES, route, on_arrive, ctx)
    forward(frame)


# ---------------------------------------------------------------------------
# reliable stream


@dataclass
class TransferRecord:
    start: float
    end: float
    bytes: int

    @property
    def duration(self) -> float:
        return self.end - self.start


def _content_byte(offset: int) -> int:
    # Deterministic stream content used in audit mode.
    return (offset * 131 + 17) & 0xFF


def _deliver_data(frame: Frame) -> None:
    rx = frame.ctx[0]
    if frame.ctx[1] == rx.conn.epoch:
        rx.on_data(frame.ctx[2], frame.ctx[3], frame.ctx[4])


def _deliver_ack(frame: Frame) -> None:
    tx = frame.ctx[0]
    if frame.ctx[1] == tx.conn.epoch:
        tx.on_ack(frame.ctx[2])


class _Sender:
    """Reno sender for one direction of a connection."""

    __slots__ = (
        "conn",
        "sim",
        "route",
        "peer_rx",
        "mss",
        "cwnd",
        "ssthresh",
        "state",
        "srtt",
        "rttvar",
        "rto",
        "size",
        "una",
        "nxt",
        "sent_high",
        "dup",
        "retries",
        "active",
        "send_times",
        "deadline_ns",
        "_sched_ns",
        "cwnd_log",
    )

    def __init__(self, conn, route):
        self.conn = conn
        self.sim = conn.sim
        self.route = route
        self.peer_rx = None  # wired by StreamConnection
        self.mss = conn.mss
        self.reset_congestion_state()
        self.size = 0
        self.una = 0
        self.nxt = 0
        self.sent_high = 0
        self.dup = 0
        self.retries = 0
        self.active = False
        self.send_times = {}
        self.deadline_ns = None
        self._sched_ns = None
        self.cwnd_log = None  # optional [(t, cwnd)] trace for tests

    def reset_congestion_state(self):
        self.cwnd = float(self.mss)
        self.ssthresh = float(self.conn.init_ssthresh_segments * self.mss)
        self.state = SLOW_START
        self.srtt = None
        self.rttvar = None
        self.rto = INITIAL_RTO_S

    # -- transfer lifecycle -------------------------------------------------

    def start(self, size: int) -> None:
        self.size = size
        self.una = 0
        self.nxt = 0
        self.sent_high = 0
        self.dup = 0
        self.retries = 0
        self.active = True
        self.send_times = {}
        self._send_window()

    def finish(self) -> None:
        """Peer receiver has everything; stop timers and go quiet."""
        self.active = False
        self.deadline_ns = None

    # -- transmission ---------------------------------------------------------

    def _log_cwnd(self):
        if self.cwnd_log is not None:
            self.cwnd_log.append((self.sim.now, self.cwnd))

    def _send_window(self) -> None:
        mss = self.mss
        while self.nxt < self.size:
            seg = min(mss, self.size - self.nxt)
            if (self.nxt - self.una) + seg > self.cwnd:
                break
            self._emit(self.nxt, seg, rtx=False)
            self.nxt += seg
            if self.nxt > self.sent_high:
                self.sent_high = self.nxt
        if self.una < self.size and self.deadline_ns is None:
            self._set_deadline(self.sim.now_ns + to_ns(self.rto))

    def _emit(self, offset: int, length: int, rtx: bool) -> None:
        if rtx:
            self.send_times[offset] = None  # Karn: never sample retransmits
        elif offset not in self.send_times:
            self.send_times[offset] = self.sim.now_ns
        chunk = None
        if self.conn.audit:
            chunk = bytes(_content_byte(offset + i) for i in range(length))
        frame = Frame(
            length,
            length + OVERHEAD_BYTES,
            self.route,
            _deliver_data,
            (self.peer_rx, self.conn.epoch, offset, length, chunk),
        )
        forward(frame)

    # -- acknowledgements -----------------------------------------------------

    def on_ack(self, ack: int) -> None:
        if not self.active:
            return
        mss = self.mss
        if ack > self.una:
            ts = self.send_times.get(self.una)
            if ts is not None:
                self._rtt_sample((self.sim.now_ns - ts) / NS_PER_S)
            off = self.una
            while off < ack:
                self.send_times.pop(off, None)
                off += mss
            self.una = ack
            self.dup = 0
            self.retries = 0
            if self.state == RECOVERY:
                self.cwnd = self.ssthresh
                self.state = CONGESTION_AVOIDANCE
            elif self.state == SLOW_START:
                self.cwnd += mss
                if self.cwnd >= self.ssthresh:
                    self.state = CONGESTION_AVOIDANCE
            else:
                self.cwnd += mss * mss / self.cwnd
            self._log_cwnd()
            if self.una >= self.size:
                self.finish()
                return
            self._set_deadline(self.sim.now_ns + to_ns(self.rto))
            self._send_window()
        elif ack == self.una and self.nxt > self.una:
            self.dup += 1
            if self.state == RECOVERY:
                self.cwnd += mss
                self._send_window()
            elif self.dup == 3:
                flight = self.nxt - self.una
                self.ssthresh = max(flight / 2.0, 2.0 * mss)
                self.cwnd = self.ssthresh + 3 * mss
                self.state = RECOVERY
                self._log_cwnd()
                self._emit(self.una, min(mss, self.size - self.una), rtx=True)
                self._set_deadline(self.sim.now_ns + to_ns(self.rto))

    def _rtt_sample(self, r: float) -> None:
        if self.srtt is None:
            self.srtt = r
            self.rttvar = r / 2.0
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - r)
            self.srtt = 0.875 * self.srtt + 0.125 * r
        self.rto = min(max(self.srtt + 4.0 * self.rttvar, MIN_RTO_S), MAX_RTO_S)

    # -- retransmission timer ---------------------------------------------------
    #
    # One logical deadline, lazily backed by heap events: an event is only
    # (re)scheduled when the deadline moves earlier than the next tracked
    # fire; deadline extensions are caught by revalidation at fire time.

    def _set_deadline(self, deadline_ns: int) -> None:
        self.deadline_ns = deadline_ns
        if self._sched_ns is None or deadline_ns < self._sched_ns:
            self._sched_ns = deadline_ns
            self.sim.schedule_fast(deadline_ns, self._timer_fire, deadline_ns)

    def _timer_fire(self, fire_ns: int) -> None:
        if fire_ns != self._sched_ns:
            return  # superseded by an earlier reschedule
        self._sched_ns = None
        if not self.active or self.deadline_ns is None:
            return
        now = self.sim.now_ns
        if now < self.deadline_ns:
            self._set_deadline(self.deadline_ns)
            return
        self.retries += 1
        if self.retries > self.conn.max_retries:
            self.conn._abort()
            return
        flight = self.nxt - self.una
        self.ssthresh = max(flight / 2.0, 2.0 * self.mss)
        self.cwnd = float(self.mss)
        self.state = SLOW_START
        self.dup = 0
        self.rto = min(self.rto * 2.0, MAX_RTO_S)
        self._log_cwnd()
        # Everything in flight is presumed lost: rewind and slow-start the
        # resend from the cumulative-ACK point. Outstanding offsets keep a
        # None timestamp so their eventual ACKs are never RTT-sampled (Karn).
        for off in self.send_times:
            self.send_times[off] = None
        self.nxt = self.una
        self._set_deadline(now + to_ns(self.rto))
        self._send_window()


class _Receiver:
    """In-order reassembly with cumulative immediate ACKs."""

    __slots__ = ("conn", "ack_route", "peer_tx", "rcv_nxt", "ooo", "expected", "on_complete", "buf")

    def __init__(self, conn, ack_route):
        self.conn = conn
        self.ack_route = ack_route
        self.peer_tx = None
        self.rcv_nxt = 0
        self.ooo = {}
        self.expected = None
        self.on_complete = None
        self.buf = None

    def expect(self, size: int, on_complete: Callable) -> None:
        self.rcv_nxt = 0
        self.ooo = {}
        self.expected = size
        self.on_complete = on_complete
        self.buf = bytearray(size) if self.conn.audit else None

    def on_data(self, offset: int, length: int, chunk) -> None:
        if self.expected is None:
            return
        if self.buf is not None and chunk is not None:
            self.buf[offset : offset + length] = chunk
        if offset == self.rcv_nxt:
            self.rcv_nxt = offset + length
            while self.rcv_nxt in self.ooo:
                self.rcv_nxt += self.ooo.pop(self.rcv_nxt)
        elif offset > self.rcv_nxt:
            self.ooo[offset] = length
        self._send_ack()
        if self.rcv_nxt >= self.expected:
            cb = self.on_complete
            self.expected = None
            self.on_complete = None
            cb()

    def _send_ack(self) -> None:
        frame = Frame(
            0,
            OVERHEAD_BYTES,
            self.ack_route,
            _deliver_ack,
            (self.peer_tx, self.conn.epoch, self.rcv_nxt),
        )
        forward(frame)


class StreamConnection:
    """Reliable request/response byte stream between a client and a server.

    ``down_route`` carries server-to-client frames (response data, ACKs of the
    request); ``up_route`` carries client-to-server frames. Transfers are
    strictly sequential per connection, matching a browser or FTP client that
    works one object at a time.
    """

    def __init__(
        self,
        sim: Simulator,
        down_route,
        up_route,
        mss: int = DEFAULT_MSS,
        name: str = "",
        setup_handshake: bool = False,
        max_retries: int = MAX_RTO_RETRIES,
        audit: bool = False,
        init_ssthresh_segments: int = INITIAL_SSTHRESH_SEGMENTS,
    ):
        if mss > MAX_PAYLOAD_BYTES:
            raise SimulationError(f"mss {mss} exceeds payload capacity {MAX_PAYLOAD_BYTES}")
        self.sim = sim
        self.mss = mss
        self.name = name
        self.audit = audit
        self.max_retries = max_retries
        self.init_ssthresh_segments = init_ssthresh_segments
        self.setup_handshake = setup_handshake
        self.established = not setup_handshake
        self.epoch = 0
        self.down_route = tuple(down_route)
        self.up_route = tuple(up_route)
        # client sends requests up, server sends responses down
        self.client_tx = _Sender(self, self.up_route)
        self.server_tx = _Sender(self, self.down_route)
        self.server_rx = _Receiver(self, self.down_route)  # ACKs request downstream
        self.client_rx = _Receiver(self, self.up_route)  # ACKs response upstream
        self.client_tx.peer_rx = self.server_rx
        self.server_tx.peer_rx = self.client_rx
        self.server_rx.peer_tx = self.client_tx
        self.client_rx.peer_tx = self.server_tx
        self._on_done: Optional[Callable] = None
        self._start_time = 0.0
        self._response_size = 0
        self._busy = False
        self.transfers_completed = 0
        self.transfers_aborted = 0

    # -- public API ---------------------------------------------------------

    def transfer(self, request_size: int, response_size: int, on_done: Callable) -> None:
        """Send a request upstream, then the response downstream; ``on_done``
        receives a TransferRecord, or None if the transfer was aborted."""
        if self._busy:
            raise SimulationError(f"connection {self.name}: transfer already in progress")
        if request_size <= 0 or response_size <= 0:
            raise SimulationError(f"connection {self.name}: sizes must be positive")
        self._busy = True
        self.epoch += 1
        self._on_done = on_done
        self._start_time = self.sim.now
        self._response_size = response_size
        if not self.established:
            self._handshake(request_size)
            return
        self._begin_request(request_size)

    # -- internals ------------------------------------------------------------

    def _handshake(self, request_size: int) -> None:
        def synack_arrived(frame):
            if frame.ctx == self.epoch:
                self.established = True
                self._begin_request(request_size)

        def syn_arrived(frame):
            if frame.ctx == self.epoch:
                forward(Frame(0, OVERHEAD_BYTES, self.down_route, synack_arrived, self.epoch))

        forward(Frame(0, OVERHEAD_BYTES, self.up_route, syn_arrived, self.epoch))

    def _begin_request(self, request_size: int) -> None:
        self.server_rx.expect(request_size, self._request_received)
        self.client_tx.start(request_size)

    def _request_received(self) -> None:
        self.client_tx.finish()
        self.client_rx.expect(self._response_size, self._response_received)
        self.server_tx.start(self._response_size)

    def _response_received(self) -> None:
        self.server_tx.finish()
        rec = TransferRecord(start=self._start_time, end=self.sim.now, bytes=self._response_size)
        self.transfers_completed += 1
        self._finish(rec)

    def _abort(self) -> None:
        # RTO retry budget exhausted: reset both directions as a fresh
        # connection would and report failure upward.
        self.client_tx.finish()
        self.server_tx.finish()
        self.client_tx.reset_congestion_state()
        self.server_tx.reset_congestion_state()
        self.established = not self.setup_handshake
        self.transfers_aborted += 1
        self._finish(None)

    def _finish(self, record) -> None:
        self._busy = False
        self.epoch += 1  # retire in-flight frames of this transfer
        cb = self._on_done
        self._on_done = None
        if cb is not None:
            cb(record)

    # audit helper used by tests
    def received_payload(self) -> bytes:
        return bytes(self.client_rx.buf) if self.client_rx.buf is not None else b""


def stream_transfer(conn: StreamConnection, request_size: int, response_size: int, on_done: Callable) -> None:
    conn.transfer(request_size, response_size, on_done)


def expected_stream_content(size: int) -> bytes:
    """The deterministic byte stream senders emit in audit mode."""
    return bytes(_content_byte(i) for i in range(size))

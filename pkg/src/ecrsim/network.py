"""Access-network topologies under test.

Both architectures share the same downstream skeleton

    servers --(backbone, RTT/2)--> OLT --(*)--> ONU --(distribution)-->
      --(per-user UNI)--> user

and differ only in the OLT-to-ONU segment (*):

* reference: one dedicated line per ONU at the swept rate R;
* hybrid PON: per-ONU virtual queues at the OLT drained by ``n_tx`` tunable
  transmitters, each serving one frame at a time at the distribution rate,
  with at most one transmitter on a given ONU at any instant and an optional
  tuning penalty on wavelength switches. Aggregate downstream capacity is
  therefore n_tx times the distribution rate.

The scheduler is a documented simplification of the published sequential
scheduler it stands in for: global first-come-first-served over per-ONU
queue heads, preferring an already-tuned transmitter. It preserves the
elasticity mechanism (capacity scaling with transmitter count), which is
what the comparison framework exercises.

Upstream is modeled contention-free (requests and ACKs are small): a single
fixed-function delay hop covering UNI, access, and backbone serialization
plus propagation.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .errors import ConfigurationError
from .kernel import NS_PER_S, Simulator, to_ns
from .transport import DelayHop, Frame, Port, forward

DEFAULT_BACKBONE_BPS = 1_000_000_000_000
DEFAULT_DISTRIBUTION_BPS = 10_000_000_000
DEFAULT_UNI_BPS = 10_000_000_000
DEFAULT_RTT_S = 0.01


@dataclass(frozen=True)
class RatePlan:
    backbone_bps: int = DEFAULT_BACKBONE_BPS
    distribution_bps: int = DEFAULT_DISTRIBUTION_BPS
    uni_bps: int = DEFAULT_UNI_BPS
    rtt: float = DEFAULT_RTT_S
    olt_buffer_bytes: int = 1_000_000
    other_buffer_bytes: int = 256_000

    def __post_init__(self):
        for name in ("backbone_bps", "distribution_bps", "uni_bps"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.rtt < 0:
            raise ConfigurationError("rtt must be non-negative")
        if self.olt_buffer_bytes <= 0 or self.other_buffer_bytes <= 0:
            raise ConfigurationError("buffers must be positive")

    def scaled(self, factor: float) -> "RatePlan":
        """Rates multiplied by ``factor``; buffers scale with them but keep a
        floor of several MTUs so queues stay meaningful."""
        return RatePlan(
            backbone_bps=max(1, int(self.backbone_bps * factor)),
            distribution_bps=max(1, int(self.distribution_bps * factor)),
            uni_bps=max(1, int(self.uni_bps * factor)),
            rtt=self.rtt,
            olt_buffer_bytes=max(16_000, int(self.olt_buffer_bytes * factor)),
            other_buffer_bytes=max(16_000, int(self.other_buffer_bytes * factor)),
        )


class SchedulerInlet:
    """Per-ONU entry into the shared scheduler; stamps the destination ONU on
    the frame so callers never carry it separately."""

    __slots__ = ("sched", "onu")

    def __init__(self, sched: "PonScheduler", onu: int):
        self.sched = sched
        self.onu = onu

    def push(self, frame: Frame) -> None:
        frame.onu = self.onu
        self.sched.push(frame)


class PonScheduler:
    """Shared OLT downstream stage of the hybrid PON."""

    def __init__(
        self,
        sim: Simulator,
        n_onus: int,
        n_tx: int,
        rate_bps: int,
        buffer_bytes: int,
        tuning_time: float = 0.0,
    ):
        if not 1 <= n_tx <= n_onus:
            raise ConfigurationError(f"need 1 <= n_tx <= n_onus, got n_tx={n_tx}, n_onus={n_onus}")
        self.sim = sim
        self.n_onus = n_onus
        self.n_tx = n_tx
        self.rate_bps = int(rate_bps)
        self.cap_bytes = int(buffer_bytes)
        self.tuning_ns = to_ns(tuning_time)
        self._q: list[deque] = [deque() for _ in range(n_onus)]
        self._q_bytes = [0] * n_onus
        self.onu_busy = [False] * n_onus
        self.tx_last: list[int | None] = [None] * n_tx
        self.free_txs = list(range(n_tx))
        self.offered_frames = 0
        self.offered_bytes = 0
        self.sent_frames = 0
        self.sent_bytes = 0
        self.dropped_frames = 0
        self.dropped_bytes = 0
        self.tunings = 0

    def tx_ns(self, wire_bytes: int) -> int:
        return (wire_bytes * 8 * NS_PER_S) // self.rate_bps

    @property
    def queued_frames(self) -> int:
        return sum(len(q) for q in self._q)

    @property
    def queued_bytes(self) -> int:
        return sum(self._q_bytes)

    @property
    def in_service(self) -> int:
        return self.n_tx - len(self.free_txs)

    def eligible_backlog(self) -> bool:
        return any(q and not self.onu_busy[o] for o, q in enumerate(self._q))

    # hop interface -----------------------------------------------------------

    def push(self, frame: Frame) -> None:
        o = frame.onu
        self.offered_frames += 1
        self.offered_bytes += frame.wire
        if self._q_bytes[o] + frame.wire > self.cap_bytes:
            self.dropped_frames += 1
            self.dropped_bytes += frame.wire
            return
        self._q[o].append((frame, self.sim.now_ns))
        self._q_bytes[o] += frame.wire
        self._dispatch()

    # scheduling -------------------------------------------------------------

    def _dispatch(self) -> None:
        while self.free_txs:
            best_o = -1
            best_ts = 0
            for o, q in enumerate(self._q):
                if not q or self.onu_busy[o]:
                    continue
                ts = q[0][1]
                if best_o < 0 or ts < best_ts:
                    best_o, best_ts = o, ts
            if best_o < 0:
                return
            frame, _ts = self._q[best_o].popleft()
            self._q_bytes[best_o] -= frame.wire
            # prefer a transmitter already tuned to this wavelength
            tx = next((t for t in self.free_txs if self.tx_last[t] == best_o), None)
            if tx is None:
                tx = min(self.free_txs)
            self.free_txs.remove(tx)
            self.onu_busy[best_o] = True
            tune = 0
            if self.tx_last[tx] is not None and self.tx_last[tx] != best_o:
                tune = self.tuning_ns
                if tune:
                    self.tunings += 1
            self.tx_last[tx] = best_o
            fire = self.sim.now_ns + tune + self.tx_ns(frame.wire)
            self.sim.schedule_fast(fire, self._tx_done, (tx, best_o, frame))

    def _tx_done(self, arg) -> None:
        tx, o, frame = arg
        self.sent_frames += 1
        self.sent_bytes += frame.wire
        self.onu_busy[o] = False
        self.free_txs.append(tx)
        forward(frame)
        self._dispatch()


class AccessNetwork:
    """Built topology: per-(onu, user) routes plus the shared stages."""

    def __init__(self, sim, plan, kind, n_onus, users_per_onu):
        if n_onus < 1 or users_per_onu < 1:
            raise ConfigurationError("need at least one ONU and one user per ONU")
        self.sim = sim
        self.plan = plan
        self.kind = kind
        self.n_onus = n_onus
        self.users_per_onu = users_per_onu
        self.backbone = DelayHop(sim, (plan.backbone_bps,), prop_delay=plan.rtt / 2.0)
        self.scheduler: PonScheduler | None = None
        self.olt_ports: list[Port] = []
        self.dist_ports: list[Port] = []
        self.uni_ports: list[list[Port]] = []
        self._up_hop: DelayHop | None = None

    def down_route(self, onu: int, user: int) -> tuple:
        if self.scheduler is not None:
            olt_stage = SchedulerInlet(self.scheduler, onu)
        else:
            olt_stage = self.olt_ports[onu]
        return (self.backbone, olt_stage, self.dist_ports[onu], self.uni_ports[onu][user])

    def up_route(self, onu: int, user: int) -> tuple:
        return (self._up_hop,)

    # aggregate stats used for load reporting and reliability checks
    def olt_offered_bytes(self) -> int:
        if self.scheduler is not None:
            return self.scheduler.offered_bytes
        return sum(p.offered_bytes for p in self.olt_ports)

    def olt_sent_bytes(self) -> int:
        if self.scheduler is not None:
            return self.scheduler.sent_bytes
        return sum(p.sent_bytes for p in self.olt_ports)

    def olt_dropped_frames(self) -> int:
        if self.scheduler is not None:
            return self.scheduler.dropped_frames
        return sum(p.dropped_frames for p in self.olt_ports)

    def downstream_capacity_bps(self) -> float:
        if self.scheduler is not None:
            return self.scheduler.n_tx * self.scheduler.rate_bps
        return float(sum(p.rate_bps for p in self.olt_ports))


def _user_side(net: AccessNetwork, plan: RatePlan) -> None:
    sim = net.sim
    for o in range(net.n_onus):
        net.dist_ports.append(
            Port(sim, f"dist{o}", plan.distribution_bps, plan.other_buffer_bytes)
        )
        net.uni_ports.append(
            [
                Port(sim, f"uni{o}.{u}", plan.uni_bps, plan.other_buffer_bytes)
                for u in range(net.users_per_onu)
            ]
        )


def build_reference(
    sim: Simulator,
    plan: RatePlan,
    line_rate: int,
    n_onus: int,
    users_per_onu: int,
) -> AccessNetwork:
    """Dedicated point-to-point architecture at line rate R per ONU."""
    if line_rate <= 0:
        raise ConfigurationError("line_rate must be positive")
    net = AccessNetwork(sim, plan, "reference", n_onus, users_per_onu)
    for o in range(n_onus):
        net.olt_ports.append(
            Port(sim, f"olt{o}", int(line_rate), plan.olt_buffer_bytes)
        )
    _user_side(net, plan)
    net._up_hop = DelayHop(
        sim,
        (plan.uni_bps, int(line_rate), plan.backbone_bps),
        prop_delay=plan.rtt / 2.0,
    )
    return net


def build_hybrid_pon(
    sim: Simulator,
    plan: RatePlan,
    n_tx: int,
    n_onus: int,
    users_per_onu: int,
    tuning_time: float = 0.0,
) -> AccessNetwork:
    """Hybrid TDM/WDM PON with ``n_tx`` tunable OLT transmitters."""
    net = AccessNetwork(sim, plan, "hybrid_pon", n_onus, users_per_onu)
    net.scheduler = PonScheduler(
        sim,
        n_onus=n_onus,
        n_tx=n_tx,
        rate_bps=plan.distribution_bps,
        buffer_bytes=plan.olt_buffer_bytes,
        tuning_time=tuning_time,
    )
    _user_side(net, plan)
    net._up_hop = DelayHop(
        sim,
        (plan.uni_bps, plan.uni_bps, plan.backbone_bps),
        prop_delay=plan.rtt / 2.0,
    )
    return net

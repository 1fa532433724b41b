"""Deterministic discrete-event core.

The engine keeps the virtual clock as integer nanoseconds so that long runs
never accumulate floating-point drift; the public API speaks seconds. Events
with equal fire times are delivered in the order they were scheduled (a global
sequence counter breaks ties), which makes every run a pure function of the
scenario and the run seed.

Two scheduling paths share one heap:

* :meth:`Simulator.schedule` takes a :class:`SimEvent` and returns a handle
  that supports cancellation; this is the documented surface used by session
  actors and timers.
* ``schedule_fast`` is the internal hot path used by links and schedulers for
  per-frame events. It stores a bare ``(callback, arg)`` pair and supports no
  cancellation, which keeps per-event overhead minimal.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from heapq import heappop, heappush
from typing import Any, Callable

import numpy as np

from .errors import SimulationError

NS_PER_S = 1_000_000_000


def to_ns(seconds: float) -> int:
    """Convert seconds to integer nanoseconds (round to nearest)."""
    return round(seconds * NS_PER_S)


def to_seconds(ns: int) -> float:
    return ns / NS_PER_S


class RngStream:
    """Named, reproducible random stream.

    The underlying generator is counter-based (Philox) and keyed by a SHA-256
    hash of ``(run_seed, name)``, so adding or removing a component never
    perturbs the draws seen by any other component.
    """

    __slots__ = ("name", "run_seed", "gen")

    def __init__(self, name: str, run_seed: int):
        if not name:
            raise ValueError("stream name must be non-empty")
        self.name = name
        self.run_seed = int(run_seed)
        digest = hashlib.sha256(f"ecrsim\x00{self.run_seed}\x00{name}".encode()).digest()
        key = np.frombuffer(digest[:16], dtype=np.uint64)
        self.gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self):
        return f"RngStream({self.name!r}, run_seed={self.run_seed})"


def derive_stream(name: str, run_seed: int) -> RngStream:
    """Return the stream for ``(name, run_seed)``; identical inputs give
    identical sequences."""
    return RngStream(name, run_seed)


@dataclass(slots=True)
class SimEvent:
    """A deliverable event.

    ``fn`` is invoked as ``fn(event)`` when the event fires. ``target`` is a
    component path used for diagnostics and per-component statistics;
    ``payload`` is opaque to the engine.
    """

    fire_time: float
    target: str
    fn: Callable[["SimEvent"], None]
    payload: Any = None
    sequence: int = field(default=-1)
    cancelled: bool = field(default=False)


class EventHandle:
    """Cancellation token returned by :meth:`Simulator.schedule`."""

    __slots__ = ("_event", "_sim")

    def __init__(self, event: SimEvent, sim: "Simulator"):
        self._event = event
        self._sim = sim

    def cancel(self) -> bool:
        """Cancel the event; returns False if it already fired or was cancelled."""
        ev = self._event
        if ev.cancelled or ev.sequence < 0:
            return False
        ev.cancelled = True
        ev.sequence = -2
        self._sim._live -= 1
        return True


@dataclass
class RunSummary:
    """Result of one ``run_until`` call."""

    end_time: float
    events_delivered: int
    by_target: dict[str, int]


@dataclass
class WarmupGate:
    """Statistics gate: records that start before ``warmup_end`` do not count."""

    warmup_end: float
    enabled: bool = True

    def counts(self, start_time: float) -> bool:
        return (not self.enabled) or start_time >= self.warmup_end


class Simulator:
    """Single-threaded deterministic event loop.

    A simulator instance owns its clock, queue, and seed; independent
    instances never share mutable state and may run concurrently in separate
    processes.
    """

    def __init__(self, run_seed: int = 0):
        self.run_seed = int(run_seed)
        self._heap: list = []
        self._seq = 0
        self._now_ns = 0
        self._live = 0
        self._delivered_total = 0
        self._by_target: dict[str, int] = {}

    # -- clock ------------------------------------------------------------

    @property
    def now(self) -> float:
        return self._now_ns / NS_PER_S

    @property
    def now_ns(self) -> int:
        return self._now_ns

    @property
    def queue_size(self) -> int:
        """Number of live (not yet delivered, not cancelled) events."""
        return self._live

    # -- rng --------------------------------------------------------------

    def stream(self, name: str) -> RngStream:
        return derive_stream(name, self.run_seed)

    # -- scheduling -------------------------------------------------------

    def schedule(self, event: SimEvent) -> EventHandle:
        """Schedule ``event``; scheduling in the past is a model bug."""
        fire_ns = to_ns(event.fire_time)
        if fire_ns < self._now_ns:
            raise SimulationError(
                f"event scheduled in the past (fire={event.fire_time}, now={self.now})",
                component=event.target,
                sim_time=self.now,
            )
        event.sequence = self._seq
        self._seq += 1
        self._live += 1
        heappush(self._heap, (fire_ns, event.sequence, None, event))
        return EventHandle(event, self)

    def call_at(self, t: float, fn: Callable, payload: Any = None, target: str = "") -> EventHandle:
        return self.schedule(SimEvent(fire_time=t, target=target, fn=fn, payload=payload))

    def call_in(self, delay: float, fn: Callable, payload: Any = None, target: str = "") -> EventHandle:
        return self.call_at(self.now + delay, fn, payload, target)

    def schedule_fast(self, fire_ns: int, fn: Callable[[Any], None], arg: Any) -> None:
        """Hot-path scheduling: no handle, no cancellation, ns timestamps."""
        if fire_ns < self._now_ns:
            raise SimulationError(
                "fast event scheduled in the past", sim_time=self.now
            )
        seq = self._seq
        self._seq = seq + 1
        self._live += 1
        heappush(self._heap, (fire_ns, seq, fn, arg))

    # -- main loop ----------------------------------------------------------

    def run_until(self, t_end: float) -> RunSummary:
        """Deliver every event with fire_time <= t_end, then set clock = t_end."""
        if t_end < self.now:
            raise SimulationError(f"run_until({t_end}) is before current clock {self.now}")
        end_ns = to_ns(t_end)
        heap = self._heap
        delivered = 0
        by_target = self._by_target
        while heap:
            fire_ns, _seq, fn, arg = heap[0]
            if fire_ns > end_ns:
                break
            heappop(heap)
            if fn is not None:
                self._now_ns = fire_ns
                self._live -= 1
                try:
                    fn(arg)
                except SimulationError:
                    raise
                except Exception as exc:
                    raise SimulationError(
                        f"event handler failed: {exc!r}", sim_time=self.now
                    ) from exc
                delivered += 1
                continue
            ev = arg
            if ev.cancelled:
                continue
            self._now_ns = fire_ns
            self._live -= 1
            ev.sequence = -1
            try:
                ev.fn(ev)
            except SimulationError:
                raise
            except Exception as exc:
                raise SimulationError(
                    f"event handler failed: {exc!r}",
                    component=ev.target,
                    sim_time=self.now,
                ) from exc
            delivered += 1
            if ev.target:
                by_target[ev.target] = by_target.get(ev.target, 0) + 1
        self._now_ns = max(self._now_ns, end_ns)
        self._delivered_total += delivered
        return RunSummary(
            end_time=self.now,
            events_delivered=delivered,
            by_target=dict(by_target),
        )

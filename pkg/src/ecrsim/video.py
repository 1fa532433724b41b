"""Trace-driven streaming video over datagrams, and the decodable-frame-rate sink.

A trace is a cyclic list of frames. Rows are stored in coding (emission)
order; each row carries the frame's display index, which drives the
group-of-pictures structure. For toy traces without bidirectional frames the
two orders coincide.

Decodability follows the reference-dependency rules of an IBBP stream in
display order:

* an I frame is decodable iff it is received in full;
* a P frame additionally needs the nearest preceding I/P decodable;
* a B frame needs both the nearest preceding and the nearest following I/P
  decodable (the following anchor of a group's trailing B frames is the next
  group's I frame). A trailing B at the very end of a stream has no forward
  reference.

The sink reports one record per group: decodable frames / group size. Arrival
deadlines are not modeled; a frame counts once all its fragments arrive.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import TraceFormatError
from .kernel import RngStream, Simulator, to_ns
from .transport import MAX_PAYLOAD_BYTES, OVERHEAD_BYTES, Frame, forward

log = logging.getLogger(__name__)

GOP_FINALIZE_GRACE_S = 2.0


@dataclass(frozen=True)
class TraceFrame:
    display_index: int
    ftype: str  # 'I' | 'P' | 'B'
    size: int


@dataclass
class FrameTrace:
    """Frames in coding (emission) order plus stream metadata."""

    frames: list[TraceFrame]
    fps: float = 30.0
    gop_size: int = 12
    b_frames: int = 2
    name: str = ""

    # derived display-order structures, built in __post_init__
    _display: list[TraceFrame] = field(default_factory=list, repr=False)
    _gop_of_display: list[int] = field(default_factory=list, repr=False)
    _gop_sizes: list[int] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.frames:
            raise TraceFormatError("trace has no frames")
        if self.fps <= 0:
            raise TraceFormatError(f"fps must be positive, got {self.fps}")
        disp = sorted(self.frames, key=lambda f: f.display_index)
        expected = list(range(len(disp)))
        if [f.display_index for f in disp] != expected:
            raise TraceFormatError("display indices must be a permutation of 0..N-1")
        for f in self.frames:
            if f.size <= 0:
                raise TraceFormatError(f"frame {f.display_index}: size must be positive")
            if f.ftype not in ("I", "P", "B"):
                raise TraceFormatError(f"frame {f.display_index}: bad type {f.ftype!r}")
        self._display = disp
        # group membership: a group runs from one I (inclusive) to the next
        gop = -1
        gop_of = []
        sizes = []
        for f in disp:
            if f.ftype == "I":
                gop += 1
                sizes.append(0)
            gop_of.append(gop)
            if gop >= 0:
                sizes[gop] += 1
        if gop < 0:
            raise TraceFormatError("trace contains no I frame")
        self._gop_of_display = gop_of
        self._gop_sizes = sizes
        spacing = {s for s in sizes[:-1]}  # last group may be cut short
        if spacing and spacing != {self.gop_size}:
            log.warning(
                "trace %s: group sizes %s differ from declared gop_size=%d",
                self.name or "<unnamed>",
                sorted(spacing),
                self.gop_size,
            )

    def __len__(self):
        return len(self.frames)

    @property
    def n_gops(self) -> int:
        return len(self._gop_sizes)

    @property
    def total_bytes(self) -> int:
        return sum(f.size for f in self.frames)

    @property
    def mean_bit_rate(self) -> float:
        """Average offered payload rate in b/s at the trace's frame rate."""
        return self.total_bytes * 8.0 * self.fps / len(self.frames)

    @property
    def duration(self) -> float:
        return len(self.frames) / self.fps

    def gop_of(self, display_index: int) -> int:
        return self._gop_of_display[display_index]

    def gop_members(self, gop: int) -> int:
        return self._gop_sizes[gop]


def coding_order(display_frames: list[TraceFrame]) -> list[TraceFrame]:
    """Reorder display-ordered frames so each anchor precedes the B frames
    that reference it; trailing B frames stay at the end of the sequence."""
    out: list[TraceFrame] = []
    pending: list[TraceFrame] = []
    for f in display_frames:
        if f.ftype in ("I", "P"):
            out.append(f)
            out.extend(pending)
            pending.clear()
        else:
            pending.append(f)
    out.extend(pending)
    return out


# ---------------------------------------------------------------------------
# trace IO


def load_trace(path, fps: float | None = None) -> FrameTrace:
    """Parse a CSV trace: ``index,frame_type,size_bytes`` per line, ``#``
    comments (``# key=value`` comments carry metadata), optional header."""
    path = Path(path)
    meta = {"fps": 30.0, "gop_size": 12, "b_frames": 2}
    frames = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, val = body.partition("=")
                    key = key.strip()
                    if key in meta:
                        try:
                            meta[key] = float(val) if key == "fps" else int(val)
                        except ValueError:
                            raise TraceFormatError(
                                f"{path}:{lineno}: bad metadata value {val!r}"
                            ) from None
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise TraceFormatError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            if lineno == 1 or not frames:
                # tolerate a header row
                if not parts[0].lstrip("-").isdigit():
                    continue
            try:
                idx = int(parts[0])
                ftype = parts[1].upper()
                size = int(parts[2])
            except ValueError:
                raise TraceFormatError(f"{path}:{lineno}: malformed row {line!r}") from None
            if ftype == "IDR":
                ftype = "I"
            frames.append(TraceFrame(idx, ftype, size))
    if not frames:
        raise TraceFormatError(f"{path}: no frames found")
    return FrameTrace(
        frames,
        fps=fps if fps is not None else meta["fps"],
        gop_size=int(meta["gop_size"]),
        b_frames=int(meta["b_frames"]),
        name=path.name,
    )


def save_trace(trace: FrameTrace, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("# fps=%g\n# gop_size=%d\n# b_frames=%d\n" % (trace.fps, trace.gop_size, trace.b_frames))
        fh.write("index,frame_type,size_bytes\n")
        for f in trace.frames:
            fh.write(f"{f.display_index},{f.ftype},{f.size}\n")


def convert_verbose_trace(in_path, out_path, fps: float = 30.0) -> FrameTrace:
    """Convert a whitespace-separated verbose trace (display order; one frame
    per line with a type token among the columns and the frame length as the
    last integer column) into the canonical CSV format."""
    in_path = Path(in_path)
    display = []
    with in_path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith(("#", "%", "//")):
                continue
            tokens = line.split()
            ftype = None
            for tok in tokens:
                t = tok.strip('"').upper()
                if t in ("I", "P", "B", "IDR"):
                    ftype = "I" if t == "IDR" else t
                    break
            if ftype is None:
                continue  # header or annotation line
            size = None
            for tok in reversed(tokens):
                try:
                    v = int(float(tok))
                except ValueError:
                    continue
                if v > 0:
                    size = v
                    break
            if size is None:
                raise TraceFormatError(f"{in_path}:{lineno}: no frame length found")
            display.append(TraceFrame(len(display), ftype, size))
    if not display:
        raise TraceFormatError(f"{in_path}: no frames recognized")
    trace = FrameTrace(coding_order(display), fps=fps, name=in_path.name)
    save_trace(trace, out_path)
    return trace


def synthesize_trace(
    n_frames: int,
    fps: float,
    mean_bit_rate: float,
    gop_size: int = 12,
    b_frames: int = 2,
    seed: int = 12345,
    name: str = "synthetic",
) -> FrameTrace:
    """Generate a VBR-looking trace whose mean bit rate is exact.

    Frame sizes follow the usual I > P > B ordering with lognormal jitter and
    are scaled so ``total_bytes * 8 * fps / n_frames == mean_bit_rate``.
    """
    if n_frames < gop_size:
        raise TraceFormatError("need at least one full group of pictures")
    rng = RngStream(f"trace/{name}", seed).gen
    pattern = []
    step = b_frames + 1
    for i in range(gop_size):
        if i == 0:
            pattern.append("I")
        elif i % step == 0:
            pattern.append("P")
        else:
            pattern.append("B")
    weight = {"I": 5.0, "P": 2.5, "B": 1.0}
    display = []
    raw_sizes = []
    for d in range(n_frames):
        ftype = pattern[d % gop_size]
        raw = weight[ftype] * rng.lognormal(0.0, 0.2)
        display.append(ftype)
        raw_sizes.append(raw)
    target_total = mean_bit_rate * n_frames / (8.0 * fps)
    scale = target_total / sum(raw_sizes)
    sizes = [max(1, round(r * scale)) for r in raw_sizes]
    sizes[0] += round(target_total) - sum(sizes)  # absorb rounding drift
    frames = [TraceFrame(d, t, s) for d, (t, s) in enumerate(zip(display, sizes))]
    return FrameTrace(
        coding_order(frames), fps=fps, gop_size=gop_size, b_frames=b_frames, name=name
    )


# ---------------------------------------------------------------------------
# decodability


def gop_decodable_count(types, received, next_anchor_received=None) -> int:
    """Decodable frames in one display-ordered group.

    ``next_anchor_received``: reception of the first anchor after the group
    (the next group's I frame); None means end of stream, leaving trailing B
    frames with no forward dependency.
    """
    n = len(types)
    anchor_dec_before = [False] * n  # decodability of nearest preceding anchor
    dec = [False] * n
    last_anchor: bool | None = None
    for i in range(n):
        anchor_dec_before[i] = bool(last_anchor)
        t = types[i]
        if t == "I":
            dec[i] = bool(received[i])
            last_anchor = dec[i]
        elif t == "P":
            dec[i] = bool(received[i]) and bool(last_anchor)
            last_anchor = dec[i]
    # forward references for B frames
    next_anchor_dec: bool | None = (
        bool(next_anchor_received) if next_anchor_received is not None else None
    )
    for i in range(n - 1, -1, -1):
        t = types[i]
        if t == "B":
            fwd_ok = True if next_anchor_dec is None else next_anchor_dec
            dec[i] = bool(received[i]) and anchor_dec_before[i] and fwd_ok
        else:
            next_anchor_dec = dec[i]
    return sum(dec)


# ---------------------------------------------------------------------------
# source and sink


def _fragment_sizes(frame_size: int) -> list[int]:
    n = math.ceil(frame_size / MAX_PAYLOAD_BYTES)
    sizes = [MAX_PAYLOAD_BYTES] * (n - 1)
    sizes.append(frame_size - MAX_PAYLOAD_BYTES * (n - 1))
    return sizes


def _fragment_arrived(frame: Frame) -> None:
    sink, seq = frame.ctx
    sink.on_fragment(seq)


class VideoSource:
    """Emits one coding-order frame per tick, fragmented into datagrams,
    cycling the trace forever from a random start offset."""

    def __init__(self, sim: Simulator, route, trace: FrameTrace, sink: "DfrSink", rng: RngStream, name: str = "video"):
        self.sim = sim
        self.route = route
        self.trace = trace
        self.sink = sink
        self.name = name
        self.interval_ns = to_ns(1.0 / trace.fps)
        self.start_row = int(rng.gen.integers(0, len(trace)))
        self.ticks = 0
        self.frames_emitted = 0
        self.fragments_emitted = 0
        self.payload_bytes = 0
        self.wire_bytes = 0
        self.seq = 0

    def start(self, at: float = 0.0) -> None:
        self.sim.schedule_fast(to_ns(at), self._tick, None)

    def _tick(self, _arg) -> None:
        trace = self.trace
        L = len(trace)
        virtual = self.start_row + self.ticks
        row = virtual % L
        cycle = virtual // L
        f = trace.frames[row]
        gop = trace.gop_of(f.display_index)
        global_gop = cycle * trace.n_gops + gop if gop >= 0 else -1
        seq = self.seq
        self.seq += 1
        frags = _fragment_sizes(f.size)
        self.sink.note_sent(
            seq=seq,
            global_display=cycle * L + f.display_index,
            gop=global_gop,
            ftype=f.ftype,
            n_fragments=len(frags),
            expected_members=trace.gop_members(gop) if gop >= 0 else 0,
        )
        for payload in frags:
            frame = Frame(
                payload,
                payload + OVERHEAD_BYTES,
                self.route,
                _fragment_arrived,
                (self.sink, seq),
            )
            forward(frame)
            self.fragments_emitted += 1
            self.payload_bytes += payload
            self.wire_bytes += payload + OVERHEAD_BYTES
        self.frames_emitted += 1
        self.ticks += 1
        self.sim.schedule_fast(self.sim.now_ns + self.interval_ns, self._tick, None)


class DfrSink:
    """Tracks fragment arrivals, reconstructs per-group decodability, and
    reports one value per finalized group through ``on_record(start, end, v)``."""

    def __init__(self, sim: Simulator, on_record, name: str = "dfr"):
        self.sim = sim
        self.on_record = on_record
        self.name = name
        self._frames = {}  # seq -> [got, need]
        self._gops = {}  # gop -> list[(global_display, ftype, seq)]
        self._gop_start_seq = {}  # gop -> seq of its I frame
        self._gop_first_sent = {}  # gop -> sim time of first member emission
        self._gop_expected = {}
        self.records = 0
        self.skipped_partial = 0

    # -- source side ---------------------------------------------------------

    def note_sent(self, seq, global_display, gop, ftype, n_fragments, expected_members):
        self._frames[seq] = [0, n_fragments]
        if gop < 0:
            return
        members = self._gops.setdefault(gop, [])
        members.append((global_display, ftype, seq))
        if gop not in self._gop_first_sent:
            self._gop_first_sent[gop] = self.sim.now
            self._gop_expected[gop] = expected_members
        if ftype == "I":
            self._gop_start_seq[gop] = seq
            # all frames of gop-2 and the I of gop-1 have been emitted by now
            if gop >= 2:
                self.sim.schedule_fast(
                    self.sim.now_ns + to_ns(GOP_FINALIZE_GRACE_S), self._finalize, gop - 2
                )

    # -- network side -----------------------------------------------------------

    def on_fragment(self, seq) -> None:
        entry = self._frames.get(seq)
        if entry is not None:
            entry[0] += 1

    def _frame_received(self, seq) -> bool:
        entry = self._frames.get(seq)
        return entry is not None and entry[0] >= entry[1]

    # -- accounting ----------------------------------------------------------------

    def _finalize(self, gop) -> None:
        members = self._gops.pop(gop, None)
        if members is None:
            return
        start = self._gop_first_sent.pop(gop, self.sim.now)
        expected = self._gop_expected.pop(gop, 0)
        self._gop_start_seq.pop(gop - 1, None)
        if len(members) != expected:
            # truncated group at the stream join point: not a valid sample
            self.skipped_partial += 1
            for _, _, seq in members:
                self._frames.pop(seq, None)
            return
        members.sort(key=lambda m: m[0])
        types = [m[1] for m in members]
        received = [self._frame_received(m[2]) for m in members]
        next_i_seq = self._gop_start_seq.get(gop + 1)
        next_anchor = self._frame_received(next_i_seq) if next_i_seq is not None else None
        count = gop_decodable_count(types, received, next_anchor)
        for _, _, seq in members:
            self._frames.pop(seq, None)
        self.records += 1
        self.on_record(start, self.sim.now, count / len(members))

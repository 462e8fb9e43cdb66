"""Master playback clock: raster rows mapped onto a dilated timeline.

Simulated time is carried as integer microseconds so that 180,000 rows of
30 ms sum without drift. Realtime pacing sleeps to absolute deadlines
``start + seq * row_duration`` rather than accumulating relative sleeps.
"""
from __future__ import annotations

import json
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator


@dataclass(frozen=True)
class PlaybackConfig:
    dilation: float = 30.0
    start_row: int = 0
    end_row: int | None = None
    loop: bool = False
    passes: int | None = None
    mode: str = "offline"

    def __post_init__(self):
        if not self.dilation > 0:
            raise ValueError("dilation must be > 0")
        if self.mode not in ("offline", "realtime"):
            raise ValueError(f"mode must be 'offline' or 'realtime', got {self.mode!r}")
        if self.start_row < 0:
            raise ValueError("start_row must be >= 0")
        if self.end_row is not None and self.end_row <= self.start_row:
            raise ValueError("need start_row < end_row")
        if self.passes is not None and self.passes < 1:
            raise ValueError("passes must be >= 1")

    def bounds(self, n_rows: int) -> tuple[int, int]:
        end = n_rows if self.end_row is None else self.end_row
        if not self.start_row < end <= n_rows:
            raise ValueError(f"playback range [{self.start_row}, {end}) invalid for {n_rows} rows")
        return self.start_row, end

    def n_passes(self) -> int | None:
        """Number of passes; ``None`` means loop forever."""
        if not self.loop:
            return 1
        return self.passes


@dataclass(frozen=True)
class RowEvent:
    row: int
    t_sim_us: int
    seq: int
    pass_index: int = 0

    @property
    def t_sim(self) -> float:
        """Simulated time in milliseconds."""
        return self.t_sim_us / 1000.0

    def to_json(self) -> dict:
        return {"seq": self.seq, "pass": self.pass_index, "row": self.row,
                "t_sim_ms": self.t_sim_us / 1000.0}


@dataclass(frozen=True)
class DroppedFrames:
    """Delivered in place of events a slow realtime consumer missed."""
    count: int
    first_seq: int


def row_duration(config: PlaybackConfig, dt: float = 1.0) -> float:
    """Wall milliseconds per raster row."""
    return dt * config.dilation


def row_duration_us(config: PlaybackConfig, dt: float = 1.0) -> int:
    return int(round(dt * config.dilation * 1000.0))


@dataclass
class PacingStats:
    """Lateness of each realtime emission against its absolute deadline."""
    late_ns: list[int] = field(default_factory=list)

    @property
    def max_late_ms(self) -> float:
        return max(self.late_ns, default=0) / 1e6


def _sleep_until(deadline_ns: int) -> int:
    while True:
        remaining = deadline_ns - time.perf_counter_ns()
        if remaining <= 0:
            return -remaining
        if remaining > 2_000_000:
            time.sleep((remaining - 1_000_000) / 1e9)
        elif remaining > 200_000:
            time.sleep(0)


def schedule(config: PlaybackConfig, n_rows: int, dt: float = 1.0,
             stats: PacingStats | None = None) -> Iterator[RowEvent]:
    """Yield RowEvents for the playback range, pacing them in realtime mode.

    ``n_rows`` may also be a raster (anything with ``n_rows`` and ``dt_ms``).
    """
    if hasattr(n_rows, "n_rows"):
        dt = n_rows.dt_ms
        n_rows = n_rows.n_rows
    start, end = config.bounds(n_rows)
    step_us = row_duration_us(config, dt)
    passes = config.n_passes()
    realtime = config.mode == "realtime"
    t0 = time.perf_counter_ns() if realtime else 0
    seq = 0
    p = 0
    while passes is None or p < passes:
        for row in range(start, end):
            ev = RowEvent(row, (row - start) * step_us, seq, p)
            if realtime:
                late = _sleep_until(t0 + seq * step_us * 1000)
                if stats is not None:
                    stats.late_ns.append(late)
            yield ev
            seq += 1
        p += 1


def write_jsonl(path, events) -> int:
    n = 0
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_json(), separators=(",", ":")) + "\n")
            n += 1
    return n


class Subscription:
    """One ordered consumer of a :class:`ClockBus`.

    With ``maxsize`` > 0 the consumer's buffer is bounded; events arriving
    while it is full are dropped and replaced by a single
    :class:`DroppedFrames` notice ahead of the next delivered event.
    """

    def __init__(self, maxsize: int = 0):
        self.maxsize = maxsize
        self.dropped = 0
        self._buf: deque = deque()
        self._held = 0
        self._gap = 0
        self._gap_first = -1
        self._cv = threading.Condition()
        self._closed = False

    def _offer(self, ev) -> None:
        with self._cv:
            if self.maxsize and self._held >= self.maxsize:
                if self._gap == 0:
                    self._gap_first = ev.seq
                self._gap += 1
                self.dropped += 1
                return
            if self._gap:
                self._buf.append(DroppedFrames(self._gap, self._gap_first))
                self._gap = 0
            self._buf.append(ev)
            self._held += 1
            self._cv.notify()

    def close(self) -> None:
        with self._cv:
            self._closed = True
            self._cv.notify_all()

    def get(self, timeout: float | None = None):
        """Next event or notice; ``None`` once the bus is closed and drained."""
        with self._cv:
            while not self._buf:
                if self._closed:
                    return None
                if not self._cv.wait(timeout):
                    raise TimeoutError("no event within timeout")
            item = self._buf.popleft()
            if isinstance(item, RowEvent):
                self._held -= 1
            return item

    def __iter__(self):
        while True:
            item = self.get()
            if item is None:
                return
            yield item


class ClockBus:
    """Single producer, many consumers; per-consumer FIFO order is preserved."""

    def __init__(self):
        self._subs: list[Subscription] = []
        self._callbacks = []

    def subscribe(self, maxsize: int = 0) -> Subscription:
        sub = Subscription(maxsize)
        self._subs.append(sub)
        return sub

    def on_row(self, callback) -> None:
        """Register an in-process callback invoked synchronously per event."""
        self._callbacks.append(callback)

    def publish(self, ev: RowEvent) -> None:
        for cb in self._callbacks:
            cb(ev)
        for sub in self._subs:
            sub._offer(ev)

    def close(self) -> None:
        for sub in self._subs:
            sub.close()

    def run(self, events) -> int:
        n = 0
        try:
            for ev in events:
                self.publish(ev)
                n += 1
        finally:
            self.close()
        return n

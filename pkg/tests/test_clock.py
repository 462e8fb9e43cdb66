import itertools
import json
import threading

import pytest
from hypothesis import given, strategies as st

from simulacra.clock import (ClockBus, DroppedFrames, PacingStats, PlaybackConfig, RowEvent,
                             row_duration, row_duration_us, schedule, write_jsonl)


@pytest.mark.parametrize("dt,dilation,ms", [(1, 30, 30), (1, 1, 1), (2, 10, 20)])
def test_row_duration_examples(dt, dilation, ms):
    assert row_duration(PlaybackConfig(dilation=dilation), dt) == ms


def test_full_replay_span():
    n = 0
    last = None
    for last in schedule(PlaybackConfig(), 180_000):
        n += 1
    assert n == 180_000
    assert last.t_sim_us == 5_399_970_000
    assert last.t_sim == 5_399_970.0


def test_single_row_range():
    evs = list(schedule(PlaybackConfig(start_row=0, end_row=1), 5))
    assert [(e.row, e.t_sim_us, e.seq) for e in evs] == [(0, 0, 0)]


def test_loop_two_passes():
    evs = list(schedule(PlaybackConfig(loop=True, passes=2), 10))
    assert [e.seq for e in evs] == list(range(20))
    assert [e.row for e in evs] == list(range(10)) * 2
    assert [e.pass_index for e in evs] == [0] * 10 + [1] * 10
    assert evs[10].t_sim_us == 0


def test_endless_loop_keeps_going():
    evs = list(itertools.islice(schedule(PlaybackConfig(loop=True), 3), 10))
    assert [e.row for e in evs] == [0, 1, 2] * 3 + [0]


@given(start=st.integers(0, 50), length=st.integers(1, 50), dilation=st.floats(0.1, 100),
       dt=st.integers(1, 4))
def test_t_sim_steps_are_constant(start, length, dilation, dt):
    cfg = PlaybackConfig(dilation=dilation, start_row=start, end_row=start + length)
    evs = list(schedule(cfg, start + length, dt))
    step = row_duration_us(cfg, dt)
    assert len(evs) == length
    for i, e in enumerate(evs):
        assert e.t_sim_us == i * step
        assert e.row == start + i


@pytest.mark.parametrize("kwargs", [dict(dilation=0), dict(start_row=5, end_row=5),
                                    dict(mode="fast"), dict(start_row=-1)])
def test_invalid_configs(kwargs):
    with pytest.raises(ValueError):
        PlaybackConfig(**kwargs)


def test_end_past_raster_is_rejected():
    with pytest.raises(ValueError):
        list(schedule(PlaybackConfig(end_row=11), 10))


def test_realtime_matches_offline_and_paces():
    offline = list(schedule(PlaybackConfig(dilation=2.0), 60))
    stats = PacingStats()
    realtime = list(schedule(PlaybackConfig(dilation=2.0, mode="realtime"), 60, stats=stats))
    assert realtime == offline
    assert len(stats.late_ns) == 60
    assert stats.max_late_ms < 20.0


def test_jsonl_log(tmp_path):
    p = tmp_path / "rows.jsonl"
    assert write_jsonl(p, schedule(PlaybackConfig(), 3)) == 3
    lines = [json.loads(ln) for ln in p.read_text().splitlines()]
    assert lines[2] == {"seq": 2, "pass": 0, "row": 2, "t_sim_ms": 60.0}


def test_bus_fifo_for_every_consumer():
    bus = ClockBus()
    subs = [bus.subscribe() for _ in range(3)]
    seen = [[] for _ in subs]

    def drain(i):
        for ev in subs[i]:
            seen[i].append(ev.seq)

    threads = [threading.Thread(target=drain, args=(i,)) for i in range(3)]
    for t in threads:
        t.start()
    calls = []
    bus.on_row(lambda ev: calls.append(ev.seq))
    assert bus.run(schedule(PlaybackConfig(), 5000)) == 5000
    for t in threads:
        t.join(10)
    assert calls == list(range(5000))
    assert all(s == list(range(5000)) for s in seen)


def test_slow_consumer_sees_dropped_frames_not_reordering():
    bus = ClockBus()
    sub = bus.subscribe(maxsize=2)
    for seq in range(6):
        bus.publish(RowEvent(seq, seq * 30_000, seq))
    assert sub.get(0).seq == 0
    assert sub.get(0).seq == 1
    bus.publish(RowEvent(6, 180_000, 6))
    notice = sub.get(0)
    assert isinstance(notice, DroppedFrames)
    assert (notice.count, notice.first_seq) == (4, 2)
    assert sub.get(0).seq == 6
    assert sub.dropped == 4
    bus.close()
    assert sub.get(0) is None

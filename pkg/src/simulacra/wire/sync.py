"""Replay the clock through a simulated network and measure subscriber skew."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..clock import PlaybackConfig, row_duration_us, schedule
from .topics import TopicMessage
from .transport import LatencyModel, SimulatedNetworkTransport

ROW_TOPIC = "simulacra/clock/row"


@dataclass
class SyncReport:
    lag_samples: dict[str, np.ndarray]
    max_skew_rows: int
    mean_latency_ms: float
    dropped: int
    delivered: int
    published: int

    def to_json(self) -> dict:
        return {"max_skew_rows": self.max_skew_rows, "mean_latency_ms": self.mean_latency_ms,
                "dropped": self.dropped, "delivered": self.delivered,
                "published": self.published,
                "max_lag_rows": {k: int(v.max(initial=0)) for k, v in self.lag_samples.items()}}


def run_sync_harness(n_subscribers: int, model: LatencyModel = LatencyModel(),
                     replay: PlaybackConfig = PlaybackConfig(), n_rows: int = 180_000,
                     dt_ms: float = 1.0, seed: int = 0, every: int = 1) -> SyncReport:
    """Publish every ``every``-th row and track what each subscriber has seen.

    Skew is evaluated after each batch of simultaneous deliveries as the
    spread between the newest and oldest last-seen row across subscribers
    (a subscriber that has seen nothing counts as one row before the start).
    Lag is sampled right after every publish as the number of rows between
    the newest published row and each subscriber's last-seen row.
    """
    if n_subscribers < 1:
        raise ValueError("need at least one subscriber")
    if every < 1:
        raise ValueError("every must be >= 1")
    replay = PlaybackConfig(replay.dilation, replay.start_row, replay.end_row,
                            replay.loop, replay.passes, "offline")
    net = SimulatedNetworkTransport(model, seed)
    subs = [net.subscribe(ROW_TOPIC, f"sub{i}") for i in range(n_subscribers)]
    index = {id(s): i for i, s in enumerate(subs)}
    start, _ = replay.bounds(n_rows)
    last = [-1] * n_subscribers
    lags: list[list[int]] = [[] for _ in subs]
    state = {"skew": 0, "lat_sum": 0.0, "n": 0}

    def apply(deliveries):
        i = 0
        while i < len(deliveries):
            t = deliveries[i][0]
            while i < len(deliveries) and deliveries[i][0] == t:
                _, s, d = deliveries[i]
                k = index[id(s)]
                last[k] = max(last[k], d.seq)
                state["lat_sum"] += d.delivered_ms - d.sent_ms
                state["n"] += 1
                s.inbox.clear()
                i += 1
            state["skew"] = max(state["skew"], (max(last) - min(last)) * every)

    step_ms = row_duration_us(replay, dt_ms) / 1000.0
    published = 0
    for ev in schedule(replay, n_rows, dt_ms):
        if (ev.seq % every) != 0:
            continue
        # global time keeps increasing across loop passes
        now = ev.seq * step_ms
        apply(net.advance(now))
        net.publish(TopicMessage.from_json(ROW_TOPIC, {"row": ev.row, "t_sim_ms": ev.t_sim,
                                                       "seq": ev.seq, "pass": ev.pass_index}),
                    now)
        apply(net.advance(now))
        for k in range(n_subscribers):
            lags[k].append((published - last[k]) * every)
        published += 1
    apply(net.advance(np.inf))
    mean_lat = state["lat_sum"] / state["n"] if state["n"] else 0.0
    return SyncReport({s.name: np.asarray(l, dtype=np.int64) for s, l in zip(subs, lags)},
                      state["skew"], mean_lat, net.dropped, state["n"], published)

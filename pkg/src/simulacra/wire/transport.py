"""In-process publish/subscribe transports with per-subscriber FIFO delivery."""
from __future__ import annotations

import heapq
import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np

from .topics import TopicContract, TopicMessage, default_contract, topic_matches


@dataclass(frozen=True)
class Delivery:
    message: TopicMessage
    sent_ms: float
    delivered_ms: float
    seq: int


@dataclass(frozen=True)
class Ack:
    topic: str
    seq: int
    subscribers: int


class Subscriber:
    def __init__(self, pattern: str, name: str):
        self.pattern = pattern
        self.name = name
        self.inbox: deque[Delivery] = deque()
        self.last_delivered_ms = -np.inf

    def drain(self) -> list[Delivery]:
        out = list(self.inbox)
        self.inbox.clear()
        return out

    def __len__(self):
        return len(self.inbox)


class _Transport:
    def __init__(self, contract: TopicContract | None = None):
        self.contract = contract or default_contract()
        self.subscribers: list[Subscriber] = []
        self._seq = itertools.count()
        self._routes: dict[str, list[tuple[int, Subscriber]]] = {}

    def subscribe(self, pattern: str, name: str | None = None) -> Subscriber:
        sub = Subscriber(pattern, name or f"sub{len(self.subscribers)}")
        self.subscribers.append(sub)
        self._routes.clear()
        return sub

    def _route(self, topic: str) -> list[tuple[int, Subscriber]]:
        r = self._routes.get(topic)
        if r is None:
            r = [(k, s) for k, s in enumerate(self.subscribers)
                 if topic_matches(s.pattern, topic)]
            self._routes[topic] = r
        return r

    def matching(self, topic: str) -> list[Subscriber]:
        return [s for _, s in self._route(topic)]


class LoopbackTransport(_Transport):
    """Immediate, lossless, in-order delivery."""

    def publish(self, msg: TopicMessage, now_ms: float = 0.0) -> Ack:
        self.contract.validate(msg)
        seq = next(self._seq)
        route = self._route(msg.topic)
        for _, s in route:
            s.inbox.append(Delivery(msg, now_ms, now_ms, seq))
            s.last_delivered_ms = now_ms
        return Ack(msg.topic, seq, len(route))


@dataclass(frozen=True)
class LatencyModel:
    fixed_ms: float = 0.0
    jitter_ms: float = 0.0
    loss_p: float = 0.0

    def validate(self) -> "LatencyModel":
        if self.fixed_ms < 0 or self.jitter_ms < 0:
            raise ValueError("latency and jitter must be >= 0")
        if not 0.0 <= self.loss_p <= 1.0:
            raise ValueError("loss_p must be a probability")
        return self


class SimulatedNetworkTransport(_Transport):
    """Delivery after ``fixed + U(-jitter, +jitter)`` ms with independent loss.

    Each subscriber sees messages in publish order: a delivery is never
    scheduled earlier than the previous one to the same subscriber. Time is
    simulated; call :meth:`advance` to move deliveries into inboxes.
    """

    def __init__(self, model: LatencyModel = LatencyModel(), seed: int = 0,
                 contract: TopicContract | None = None):
        super().__init__(contract)
        self.model = model.validate()
        self.rng = np.random.default_rng(seed)
        self._pending: list = []
        self._draws: list[float] = []
        self.dropped = 0

    def _uniform(self) -> float:
        # draws come from the generator in fixed-size blocks, consumed in order
        if not self._draws:
            self._draws = self.rng.random(4096).tolist()[::-1]
        return self._draws.pop()

    def publish(self, msg: TopicMessage, now_ms: float = 0.0) -> Ack:
        self.contract.validate(msg)
        seq = next(self._seq)
        route = self._route(msg.topic)
        m = self.model
        for k, s in route:
            if m.loss_p and self._uniform() < m.loss_p:
                self.dropped += 1
                continue
            jitter = (2.0 * self._uniform() - 1.0) * m.jitter_ms if m.jitter_ms else 0.0
            t = max(now_ms + m.fixed_ms + jitter, now_ms, s.last_delivered_ms)
            s.last_delivered_ms = t
            heapq.heappush(self._pending, (t, seq, k, msg, now_ms))
        return Ack(msg.topic, seq, len(route))

    def advance(self, t_ms: float) -> list[tuple[float, Subscriber, Delivery]]:
        """Deliver everything due at or before ``t_ms``; returned in delivery order."""
        out = []
        while self._pending and self._pending[0][0] <= t_ms:
            t, seq, k, msg, sent = heapq.heappop(self._pending)
            s = self.subscribers[k]
            d = Delivery(msg, sent, t, seq)
            s.inbox.append(d)
            out.append((t, s, d))
        return out

    @property
    def in_flight(self) -> int:
        return len(self._pending)


def publish(msg: TopicMessage, transport, now_ms: float = 0.0) -> Ack:
    return transport.publish(msg, now_ms)

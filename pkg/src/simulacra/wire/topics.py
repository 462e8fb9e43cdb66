"""Topic contract: registered topic patterns and their JSON payload schemas."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

QOS_AT_MOST_ONCE = "at_most_once"


class TopicError(ValueError):
    pass


class UnregisteredTopicError(TopicError):
    pass


class PayloadError(TopicError):
    pass


@dataclass(frozen=True)
class TopicMessage:
    topic: str
    payload: bytes
    qos: str = QOS_AT_MOST_ONCE

    @classmethod
    def from_json(cls, topic: str, obj: dict) -> "TopicMessage":
        return cls(topic, json.dumps(obj, separators=(",", ":")).encode())


def topic_matches(pattern: str, topic: str) -> bool:
    """MQTT filter match: ``+`` is one level, a trailing ``#`` is any remainder."""
    p = pattern.split("/")
    t = topic.split("/")
    for i, level in enumerate(p):
        if level == "#":
            return i == len(p) - 1 and len(t) >= i
        if i >= len(t):
            return False
        if level != "+" and level != t[i]:
            return False
    return len(p) == len(t)


_CHECKS = {
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "string": lambda v: isinstance(v, str),
    "boolean": lambda v: isinstance(v, bool),
}


class TopicContract:
    def __init__(self, table: dict):
        self.table = table
        self.topics = table["topics"]
        self._resolved: dict[str, dict] = {}
        for pattern, schema in self.topics.items():
            for kind in list(schema.get("required", {}).values()) + \
                    list(schema.get("optional", {}).values()):
                if kind not in _CHECKS:
                    raise TopicError(f"{pattern}: unknown field type {kind!r}")

    @classmethod
    def load(cls, path=None) -> "TopicContract":
        if path is None:
            text = resources.files(__package__).joinpath("topics.json").read_text()
        else:
            with open(path) as fh:
                text = fh.read()
        return cls(json.loads(text))

    def schema_for(self, topic: str) -> dict:
        hit = self._resolved.get(topic)
        if hit is not None:
            return hit
        if not topic or "+" in topic or "#" in topic:
            raise UnregisteredTopicError(f"cannot publish to filter {topic!r}")
        for pattern, schema in self.topics.items():
            if topic_matches(pattern, topic):
                self._resolved[topic] = schema
                return schema
        raise UnregisteredTopicError(f"topic {topic!r} is not in the contract")

    def validate(self, msg: TopicMessage) -> dict:
        schema = self.schema_for(msg.topic)
        if msg.qos != QOS_AT_MOST_ONCE:
            raise TopicError(f"unsupported qos {msg.qos!r}")
        try:
            obj = json.loads(msg.payload)
        except (ValueError, UnicodeDecodeError) as exc:
            raise PayloadError(f"{msg.topic}: payload is not JSON ({exc})") from None
        if not isinstance(obj, dict):
            raise PayloadError(f"{msg.topic}: payload must be a JSON object")
        for name, kind in schema.get("required", {}).items():
            if name not in obj:
                raise PayloadError(f"{msg.topic}: missing required field {name!r}")
            if not _CHECKS[kind](obj[name]):
                raise PayloadError(f"{msg.topic}: field {name!r} must be {kind}")
        for name, kind in schema.get("optional", {}).items():
            if name in obj and not _CHECKS[kind](obj[name]):
                raise PayloadError(f"{msg.topic}: field {name!r} must be {kind}")
        return obj


_DEFAULT: TopicContract | None = None


def default_contract() -> TopicContract:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = TopicContract.load()
    return _DEFAULT

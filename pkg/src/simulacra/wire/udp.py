"""Fire-and-forget OSC over UDP."""
from __future__ import annotations

import socket

from .osc import OscMessage, osc_decode, osc_encode

DEFAULT_OUT_PORT = 9000
DEFAULT_IN_PORT = 9001


class OscUdpSender:
    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_OUT_PORT):
        self.addr = (host, port)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sent = 0

    def send(self, msg: OscMessage | bytes) -> int:
        data = msg if isinstance(msg, (bytes, bytearray)) else osc_encode(msg)
        n = self.sock.sendto(data, self.addr)
        self.sent += 1
        return n

    def close(self) -> None:
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class OscUdpReceiver:
    """Bound UDP socket; raises ``OSError`` if the port is taken."""

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_IN_PORT):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind((host, port))
        self.port = self.sock.getsockname()[1]

    def recv(self, timeout: float | None = 1.0) -> OscMessage:
        self.sock.settimeout(timeout)
        data, _ = self.sock.recvfrom(65535)
        return osc_decode(data)

    def close(self) -> None:
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

"""Wire formats and distribution: OSC codec, topic contract, transports."""
from .osc import (Blob, OscDecodeError, OscEncodeError, OscMessage, OscPaddingError,
                  OscTruncatedError, OscTypeTagError, osc_decode, osc_encode)
from .sync import SyncReport, run_sync_harness
from .topics import (PayloadError, TopicContract, TopicError, TopicMessage,
                     UnregisteredTopicError, default_contract, topic_matches)
from .transport import (Ack, LatencyModel, LoopbackTransport, SimulatedNetworkTransport,
                        Subscriber, publish)
from .udp import DEFAULT_IN_PORT, DEFAULT_OUT_PORT, OscUdpReceiver, OscUdpSender

__all__ = [
    "Ack", "Blob", "DEFAULT_IN_PORT", "DEFAULT_OUT_PORT", "LatencyModel", "LoopbackTransport",
    "OscDecodeError", "OscEncodeError", "OscMessage", "OscPaddingError", "OscTruncatedError",
    "OscTypeTagError", "OscUdpReceiver", "OscUdpSender", "PayloadError",
    "SimulatedNetworkTransport", "Subscriber", "SyncReport", "TopicContract", "TopicError",
    "TopicMessage", "UnregisteredTopicError", "default_contract", "osc_decode", "osc_encode",
    "publish", "run_sync_harness", "topic_matches",
]

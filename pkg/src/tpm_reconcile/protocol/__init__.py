from .messages import (
    Abort,
    AbortReason,
    Digest,
    DigestAck,
    Done,
    FrameBuffer,
    FrameError,
    Hello,
    HelloAck,
    Input,
    Message,
    MessageType,
    Output,
    decode_frame,
    encode_frame,
    pack_inputs,
    unpack_inputs,
)
from .session import (
    Aborted,
    Handshake,
    IterationBudgetExhausted,
    ParameterMismatch,
    ProtocolViolation,
    RetryExhausted,
    Role,
    Session,
    SessionAborted,
    SessionConfig,
    SessionDone,
    SessionResult,
    Syncing,
    Verifying,
    drive,
    weight_digest,
)
from .transport import Recorder, TransportError, connect, listen, recv_message, run_session, send_message

__all__ = [
    "Abort", "AbortReason", "Aborted", "Digest", "DigestAck", "Done", "FrameBuffer",
    "FrameError", "Handshake", "Hello", "HelloAck", "Input", "IterationBudgetExhausted",
    "Message", "MessageType", "Output", "ParameterMismatch", "ProtocolViolation",
    "Recorder", "RetryExhausted", "Role", "Session", "SessionAborted", "SessionConfig",
    "SessionDone", "SessionResult", "Syncing", "TransportError", "Verifying", "connect",
    "decode_frame", "drive", "encode_frame", "listen", "pack_inputs", "recv_message",
    "run_session", "send_message", "unpack_inputs", "weight_digest",
]

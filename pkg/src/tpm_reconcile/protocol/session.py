"""Sans-IO reconciliation session.

A :class:`Session` consumes one incoming message at a time and returns the
messages it wants sent. It never touches a transport, so the same machine
drives sockets, in-memory pipes and the Monte-Carlo harness.

Flow (initiator on the left)::

    HELLO            ->
                     <- HELLO_ACK
    INPUT(i, r, tau) ->
                     <- OUTPUT(i, r, tau)
    ... on matching taus both sides apply the Hebbian update ...
    DIGEST(i, h)     ->
                     <- DIGEST_ACK(matched)
    DONE(i)          ->
"""

from __future__ import annotations

import enum
import hashlib
import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from ..codec import KeyMaterial, apply_reduction, decode, encode, leakage, weight_count
from ..rng import SplitMix64
from ..tpm import StructureError, TpmParams, TreeParityMachine
from .messages import (
    Abort,
    AbortReason,
    Digest,
    DigestAck,
    Done,
    Hello,
    HelloAck,
    Input,
    Message,
    Output,
    packed_length,
    unpack_inputs,
)


class Role(str, enum.Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"


class SessionAborted(Exception):
    reason: AbortReason = AbortReason.PROTOCOL_VIOLATION

    def __init__(self, message: str = "", reason: AbortReason | None = None):
        if reason is not None:
            self.reason = reason
        super().__init__(message or self.reason.name)


class ParameterMismatch(SessionAborted):
    reason = AbortReason.PARAMETER_MISMATCH


class RetryExhausted(SessionAborted):
    reason = AbortReason.RETRY_EXHAUSTED


class IterationBudgetExhausted(SessionAborted):
    reason = AbortReason.ITERATION_BUDGET


class ProtocolViolation(SessionAborted):
    reason = AbortReason.PROTOCOL_VIOLATION


_ABORT_ERRORS = {
    cls.reason: cls
    for cls in (ParameterMismatch, RetryExhausted, IterationBudgetExhausted, ProtocolViolation)
}


def abort_error(reason: AbortReason, message: str = "") -> SessionAborted:
    return _ABORT_ERRORS[reason](message)


@dataclass(frozen=True)
class Handshake:
    pass


@dataclass(frozen=True)
class Syncing:
    iteration: int
    retry: int


@dataclass(frozen=True)
class Verifying:
    pass


@dataclass(frozen=True)
class SessionDone:
    iterations_used: int


@dataclass(frozen=True)
class Aborted:
    reason: AbortReason


Phase = Union[Handshake, Syncing, Verifying, SessionDone, Aborted]


@dataclass(frozen=True)
class SessionConfig:
    params: TpmParams
    key_length_bits: int
    role: Role = Role.INITIATOR
    max_iterations: int = 1000
    max_retries_per_iteration: int = 10
    digest_check_period: int = 1
    rng_seed: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", Role(self.role))
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 1 <= self.max_retries_per_iteration <= 255:
            raise ValueError("max_retries_per_iteration must lie in [1, 255]")
        if self.digest_check_period < 1:
            raise ValueError("digest_check_period must be >= 1")
        needed = weight_count(self.key_length_bits, self.params.L)
        if needed != self.params.weight_count:
            raise StructureError(
                f"{self.key_length_bits}-bit key at L={self.params.L} needs K*N={needed}, "
                f"got K={self.params.K}, N={self.params.N}"
            )


@dataclass(frozen=True)
class SessionResult:
    final_key: KeyMaterial
    iterations_used: int
    retries_total: int
    leakage_Z: float


def weight_digest(tpm: TreeParityMachine) -> bytes:
    """SHA-256 over K, N, L (u16be each) followed by the weights as signed bytes."""
    p = tpm.params
    header = struct.pack(">HHH", p.K, p.N, p.L)
    return hashlib.sha256(header + tpm.weights.astype("i1").tobytes(order="C")).digest()


class Session:
    """One party of a reconciliation session."""

    def __init__(self, key: KeyMaterial, config: SessionConfig):
        if key.length_bits != config.key_length_bits:
            raise StructureError(
                f"key has {key.length_bits} bits, config declares {config.key_length_bits}"
            )
        self.config = config
        p = config.params
        self.tpm = TreeParityMachine(p, encode(key, p.L, p))
        self.phase: Phase = Handshake()
        self.iterations = 0
        self.retries_total = 0
        self._rng = SplitMix64(config.rng_seed) if config.role is Role.INITIATOR else None
        self._pending = None  # initiator: (x, output) awaiting the peer's tau
        self._started = False

    @property
    def role(self) -> Role:
        return self.config.role

    @property
    def finished(self) -> bool:
        return isinstance(self.phase, (SessionDone, Aborted))

    def step(self, incoming: Message | None = None) -> tuple[list[Message], Phase]:
        """Advance the machine by one event.

        ``incoming=None`` starts the session; the initiator answers it with
        HELLO and the responder with nothing. Illegal messages abort with
        ProtocolViolation rather than raising.
        """
        if incoming is None:
            if self._started:
                raise RuntimeError("session already started")
            self._started = True
            if self.role is Role.INITIATOR:
                return [self._hello()], self.phase
            return [], self.phase
        if self.finished:
            return [], self.phase
        if isinstance(incoming, Abort):
            self.phase = Aborted(incoming.reason)
            return [], self.phase
        if self.role is Role.INITIATOR:
            out = self._initiator_step(incoming)
        else:
            out = self._responder_step(incoming)
        return out, self.phase

    def reconciled_key(self) -> KeyMaterial:
        """Key decoded from the current weights, before leakage reduction."""
        return decode(self.tpm.weights, self.config.params.L, self.config.key_length_bits)

    def result(self) -> SessionResult:
        """Final outcome of a finished session.

        Raises the matching :class:`SessionAborted` subclass for an aborted
        session and :class:`~tpm_reconcile.codec.EmptyKeyError` when the
        leakage reduction would consume the whole key.
        """
        if isinstance(self.phase, Aborted):
            raise abort_error(self.phase.reason)
        if not isinstance(self.phase, SessionDone):
            raise RuntimeError(f"session not finished: {self.phase}")
        L = self.config.params.L
        z = leakage(self.iterations, L)
        key = apply_reduction(self.reconciled_key(), z, L)
        return SessionResult(key, self.iterations, self.retries_total, z)

    def _abort(self, reason: AbortReason) -> list[Message]:
        self.phase = Aborted(reason)
        return [Abort(reason)]

    def _hello(self) -> Hello:
        p = self.config.params
        sid = self._rng.random_bytes(16)
        return Hello(p.K, p.N, p.L, self.config.key_length_bits, sid)

    # initiator ----------------------------------------------------------

    def _next_input(self, retry: int) -> list[Message]:
        p = self.config.params
        count = p.weight_count
        packed = bytearray(self._rng.random_bytes(packed_length(p.K, p.N)))
        if count % 8:
            packed[-1] &= (0xFF << (8 - count % 8)) & 0xFF
        packed = bytes(packed)
        x = unpack_inputs(packed, p.K, p.N)
        out = self.tpm.evaluate(x)
        self._pending = (x, out)
        self.phase = Syncing(self.iterations, retry)
        return [Input(self.iterations, retry, out.tau, packed)]

    def _initiator_step(self, msg: Message) -> list[Message]:
        phase = self.phase
        if isinstance(phase, Handshake) and isinstance(msg, HelloAck):
            if not msg.accepted:
                self.phase = Aborted(AbortReason.PARAMETER_MISMATCH)
                return []
            return self._next_input(0)
        if isinstance(phase, Syncing) and isinstance(msg, Output):
            if (msg.iteration, msg.retry) != (phase.iteration, phase.retry):
                return self._abort(AbortReason.PROTOCOL_VIOLATION)
            x, out = self._pending
            self._pending = None
            if msg.tau != out.tau:
                if phase.retry >= self.config.max_retries_per_iteration:
                    return self._abort(AbortReason.RETRY_EXHAUSTED)
                self.retries_total += 1
                return self._next_input(phase.retry + 1)
            self.tpm.update(x, out)
            self.iterations += 1
            cfg = self.config
            if self.iterations % cfg.digest_check_period == 0 or self.iterations >= cfg.max_iterations:
                self.phase = Verifying()
                return [Digest(self.iterations, weight_digest(self.tpm))]
            return self._next_input(0)
        if isinstance(phase, Verifying) and isinstance(msg, DigestAck):
            if msg.matched:
                self.phase = SessionDone(self.iterations)
                return [Done(self.iterations)]
            if self.iterations >= self.config.max_iterations:
                return self._abort(AbortReason.ITERATION_BUDGET)
            return self._next_input(0)
        return self._abort(AbortReason.PROTOCOL_VIOLATION)

    # responder ----------------------------------------------------------

    def _responder_step(self, msg: Message) -> list[Message]:
        phase = self.phase
        cfg = self.config
        p = cfg.params
        if isinstance(phase, Handshake) and isinstance(msg, Hello):
            if (msg.K, msg.N, msg.L, msg.key_length_bits) != (p.K, p.N, p.L, cfg.key_length_bits):
                self.phase = Aborted(AbortReason.PARAMETER_MISMATCH)
                return [HelloAck(False), Abort(AbortReason.PARAMETER_MISMATCH)]
            self.phase = Syncing(0, 0)
            return [HelloAck(True)]
        if isinstance(phase, Syncing) and isinstance(msg, Input):
            if (msg.iteration, msg.retry) != (phase.iteration, phase.retry):
                return self._abort(AbortReason.PROTOCOL_VIOLATION)
            if len(msg.packed_x) != packed_length(p.K, p.N):
                return self._abort(AbortReason.PROTOCOL_VIOLATION)
            if msg.iteration >= cfg.max_iterations:
                return self._abort(AbortReason.ITERATION_BUDGET)
            x = unpack_inputs(msg.packed_x, p.K, p.N)
            out = self.tpm.evaluate(x)
            reply = Output(msg.iteration, msg.retry, out.tau)
            if out.tau == msg.tau:
                self.tpm.update(x, out)
                self.iterations += 1
                self.phase = Syncing(self.iterations, 0)
            else:
                self.retries_total += 1
                self.phase = Syncing(self.iterations, msg.retry + 1)
            return [reply]
        if isinstance(phase, Syncing) and isinstance(msg, Digest):
            if msg.iteration != self.iterations or phase.retry != 0:
                return self._abort(AbortReason.PROTOCOL_VIOLATION)
            matched = msg.digest == weight_digest(self.tpm)
            if matched:
                self.phase = Verifying()
            return [DigestAck(matched)]
        if isinstance(phase, Verifying) and isinstance(msg, Done):
            if msg.iterations_used != self.iterations:
                return self._abort(AbortReason.PROTOCOL_VIOLATION)
            self.phase = SessionDone(self.iterations)
            return []
        return self._abort(AbortReason.PROTOCOL_VIOLATION)


Observer = Callable[[Role, Message], None]


@dataclass
class DriveOutcome:
    initiator: Session
    responder: Session
    messages: int = 0
    transcript: list = field(default_factory=list)


def drive(
    initiator: Session,
    responder: Session,
    observer: Observer | None = None,
    record: bool = False,
) -> DriveOutcome:
    """Run two sessions against each other in memory until both stop.

    ``observer(sender_role, message)`` sees every message in send order,
    which is all a passive eavesdropper gets.
    """
    outcome = DriveOutcome(initiator, responder)
    parties = {Role.INITIATOR: initiator, Role.RESPONDER: responder}
    queue: deque[tuple[Role, Message]] = deque()
    for party in (responder, initiator):
        out, _ = party.step(None)
        queue.extend((party.role, m) for m in out)
    while queue:
        sender, msg = queue.popleft()
        outcome.messages += 1
        if observer is not None:
            observer(sender, msg)
        if record:
            outcome.transcript.append((sender, msg))
        receiver = parties[Role.RESPONDER if sender is Role.INITIATOR else Role.INITIATOR]
        if receiver.finished:
            continue
        out, _ = receiver.step(msg)
        queue.extend((receiver.role, m) for m in out)
    return outcome

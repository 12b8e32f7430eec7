"""Synchronous-round backhaul simulator connecting the K operator nodes.

Each round has two signaling phases.  All phase-1 messages are collected
from every node before any node sees them, and likewise for phase 2, so the
outcome never depends on delivery order inside a phase.  Transport is an
in-process bus with copy-on-send semantics; a binary wire encoding of the
same messages exists for integration tests over a localhost socket.
"""

from __future__ import annotations

import enum
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MessageKind",
    "InterferenceMessage",
    "RoundLog",
    "ProtocolAbort",
    "run_rounds",
    "leak_check",
    "LeakFinding",
    "LeakReport",
    "encode_message",
    "decode_message",
    "WIRE_HEADER_BYTES",
]

WIRE_HEADER_BYTES = 32
_HEADER_STRUCT = struct.Struct("<IIIIQQ")  # round, sender, receiver, kind, rows, cols


class MessageKind(enum.IntEnum):
    """What expression generated a payload.

    The four IC kinds carry channel-mixed matrices only.  DC_SYMBOLS carries
    decoded symbols and exists for the data-cooperation baseline, which by
    construction leaks them.
    """

    EST_RESIDUAL = 0
    EST_REENCODED = 1
    MUD_STRIPPED = 2
    MUD_REMIXED = 3
    DC_SYMBOLS = 4


@dataclass(frozen=True)
class InterferenceMessage:
    """One round-tagged backhaul payload."""

    round: int
    sender: int
    receiver: int
    kind: MessageKind
    payload: np.ndarray  # complex matrix; copied on send

    def __post_init__(self):
        if self.sender == self.receiver:
            raise ValueError("sender and receiver must differ")
        p = np.asarray(self.payload)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2:
            raise ValueError("payload must be a matrix")
        object.__setattr__(self, "payload", p.astype(np.complex128, copy=True))

    @property
    def byte_size(self) -> int:
        """Payload bytes on the wire: 8 bytes real + 8 bytes imag per entry."""
        return 16 * self.payload.size


def encode_message(msg: InterferenceMessage) -> bytes:
    """Wire form: 32-byte header then row-major little-endian (re, im) float64."""
    rows, cols = msg.payload.shape
    header = _HEADER_STRUCT.pack(msg.round, msg.sender, msg.receiver,
                                 int(msg.kind), rows, cols)
    body = np.ascontiguousarray(msg.payload, dtype="<c16").tobytes()
    return header + body


def decode_message(data: bytes) -> InterferenceMessage:
    rnd, sender, receiver, kind, rows, cols = _HEADER_STRUCT.unpack(
        data[:WIRE_HEADER_BYTES])
    body = np.frombuffer(data[WIRE_HEADER_BYTES:], dtype="<c16", count=rows * cols)
    payload = body.reshape(rows, cols).astype(np.complex128)
    return InterferenceMessage(round=rnd, sender=sender, receiver=receiver,
                               kind=MessageKind(kind), payload=payload)


@dataclass
class RoundLog:
    """Everything that crossed the bus, plus signaling counters."""

    num_operators: int
    messages: list = field(default_factory=list)
    events: list = field(default_factory=list)  # (tick, round, phase, action, operator)
    sent_scalars: dict = field(default_factory=dict)      # (op, round) -> complex scalars
    received_scalars: dict = field(default_factory=dict)
    _tick: int = 0

    def _stamp(self, round_index: int, phase: int, action: str, operator: int) -> None:
        self.events.append((self._tick, round_index, phase, action, operator))
        self._tick += 1

    def _record(self, msg: InterferenceMessage) -> None:
        self.messages.append(msg)
        key = (msg.sender, msg.round)
        self.sent_scalars[key] = self.sent_scalars.get(key, 0) + msg.payload.size
        key = (msg.receiver, msg.round)
        self.received_scalars[key] = self.received_scalars.get(key, 0) + msg.payload.size

    def sent_in_round(self, operator: int, round_index: int) -> int:
        """Complex scalars operator sent during one round (both phases)."""
        return self.sent_scalars.get((operator, round_index), 0)

    def total_scalars(self) -> int:
        """Cumulative signaling tally over the whole run."""
        return sum(self.sent_scalars.values())

    def total_bytes(self) -> int:
        return sum(m.byte_size for m in self.messages)

    def rounds(self) -> list:
        return sorted({m.round for m in self.messages})

    def to_metadata(self) -> dict:
        """JSON-friendly export of per-message metadata, payloads excluded."""
        return {
            "num_operators": self.num_operators,
            "total_scalars": self.total_scalars(),
            "total_bytes": self.total_bytes(),
            "messages": [
                {
                    "round": m.round,
                    "sender": m.sender,
                    "receiver": m.receiver,
                    "kind": m.kind.name,
                    "rows": m.payload.shape[0],
                    "cols": m.payload.shape[1],
                    "bytes": m.byte_size,
                }
                for m in self.messages
            ],
        }

    def dump_payloads(self, directory) -> list:
        """Write every payload in wire encoding; returns the file names."""
        import os

        names = []
        for i, m in enumerate(self.messages):
            name = f"msg{i:05d}_r{m.round}_{m.sender}to{m.receiver}.bin"
            with open(os.path.join(directory, name), "wb") as fh:
                fh.write(encode_message(m))
            names.append(name)
        return names


class ProtocolAbort(RuntimeError):
    """A node failed mid-protocol; carries the partial log."""

    def __init__(self, message: str, round_index: int, operator: int, log: RoundLog):
        super().__init__(message)
        self.round_index = round_index
        self.operator = operator
        self.partial_log = log


class Protocol(enum.Enum):
    IC_ESTIMATION = "ic_est"
    IC_MUD = "ic_mud"
    DC_MUD = "dc_mud"


_PHASE_KINDS = {
    Protocol.IC_ESTIMATION: ({MessageKind.EST_RESIDUAL}, {MessageKind.EST_REENCODED}),
    Protocol.IC_MUD: ({MessageKind.MUD_REMIXED}, {MessageKind.MUD_STRIPPED}),
    Protocol.DC_MUD: ({MessageKind.DC_SYMBOLS}, set()),
}


def run_rounds(nodes, protocol: Protocol, n_rounds: int, *,
               log: RoundLog | None = None, round_hook=None,
               drop=None, threads: int = 0,
               start_round: int | None = None) -> RoundLog:
    """Drive `n_rounds` synchronous two-phase rounds over initialized nodes.

    Nodes implement phase1_messages / receive_phase1 / phase2_messages /
    receive_phase2 / end_round.  `drop` is a fault-injection predicate
    (message -> bool); dropping mail makes the starved node raise, which
    surfaces as ProtocolAbort carrying the partial log.  With threads > 1
    the per-node compute steps of a phase run on a pool; results must be
    (and are tested to be) schedule-independent.
    """
    if log is None:
        log = RoundLog(num_operators=len(nodes))
    allowed_p1, allowed_p2 = _PHASE_KINDS[protocol]
    if start_round is not None:
        start = start_round
    else:
        start = (log.rounds()[-1] + 1) if log.messages else 0
    pool = ThreadPoolExecutor(max_workers=threads) if threads and threads > 1 else None

    def collect(fn_name, round_index, phase, allowed):
        outbox = []

        def produce(node):
            return list(getattr(node, fn_name)(round_index))

        if pool is not None:
            produced = list(pool.map(produce, nodes))
        else:
            produced = [produce(node) for node in nodes]
        for node, msgs in zip(nodes, produced):
            log._stamp(round_index, phase, "emit", node.operator_id)
            for m in msgs:
                if m.kind not in allowed:
                    raise ProtocolAbort(
                        f"kind {m.kind.name} not allowed in phase {phase} of {protocol.value}",
                        round_index, node.operator_id, log)
                log._record(m)
                outbox.append(m)
        # delivery order is fixed regardless of production order
        outbox.sort(key=lambda m: (m.sender, m.receiver))
        return outbox

    def deliver(fn_name, round_index, phase, outbox):
        for node in nodes:
            inbox = [m for m in outbox if m.receiver == node.operator_id
                     and (drop is None or not drop(m))]
            log._stamp(round_index, phase, "deliver", node.operator_id)
            try:
                getattr(node, fn_name)(inbox)
            except Exception as exc:
                raise ProtocolAbort(f"operator {node.operator_id} failed: {exc}",
                                    round_index, node.operator_id, log) from exc

    try:
        for r in range(start, start + n_rounds):
            out1 = collect("phase1_messages", r, 1, allowed_p1)
            deliver("receive_phase1", r, 1, out1)
            out2 = collect("phase2_messages", r, 2, allowed_p2)
            deliver("receive_phase2", r, 2, out2)
            for node in nodes:
                log._stamp(r, 2, "finalize", node.operator_id)
                try:
                    node.end_round(r)
                except Exception as exc:
                    raise ProtocolAbort(f"operator {node.operator_id} failed: {exc}",
                                        r, node.operator_id, log) from exc
            if round_hook is not None:
                round_hook(r, nodes, log)
    finally:
        if pool is not None:
            pool.shutdown(wait=False)
    return log


@dataclass(frozen=True)
class LeakFinding:
    message_index: int
    round: int
    sender: int
    receiver: int
    kind: MessageKind
    secret: str  # which secret the payload matched


@dataclass(frozen=True)
class LeakReport:
    passed: bool
    findings: tuple

    def __bool__(self):
        return self.passed


def _matches_up_to_row_permutation(payload: np.ndarray, secret: np.ndarray,
                                   tol: float) -> bool:
    if payload.shape != secret.shape:
        return False
    if payload.shape[0] == 0:
        return True
    # greedy row matching; rows are few, so O(N^2 T) is fine
    unused = list(range(secret.shape[0]))
    for row in payload:
        hit = None
        for idx in unused:
            if np.max(np.abs(row - secret[idx])) <= tol:
                hit = idx
                break
        if hit is None:
            return False
        unused.remove(hit)
    return True


def leak_check(log: RoundLog, training_secrets=None, symbol_secrets=None,
               tol: float = 1e-12) -> LeakReport:
    """Structural privacy audit of a backhaul log.

    Flags any payload that equals (or is a row permutation of) a secret
    training matrix or symbol vector.  A hit on a channel-mixed kind means a
    degenerate mixing channel reproduced the raw secret; a hit on anything
    else is a protocol violation.  DC symbol messages are expected to match
    the sender's decoded symbols and are reported the same way so callers
    can see exactly what the DC baseline exposes.
    """
    secrets = []
    for k, mat in enumerate(training_secrets or []):
        secrets.append((f"training[{k}]", np.atleast_2d(np.asarray(mat))))
    for k, mat in enumerate(symbol_secrets or []):
        secrets.append((f"symbols[{k}]", np.atleast_2d(np.asarray(mat))))
    findings = []
    for i, msg in enumerate(log.messages):
        for name, secret in secrets:
            if _matches_up_to_row_permutation(msg.payload, secret, tol):
                findings.append(LeakFinding(
                    message_index=i, round=msg.round, sender=msg.sender,
                    receiver=msg.receiver, kind=msg.kind, secret=name))
                break
    return LeakReport(passed=not findings, findings=tuple(findings))

"""Two-party execution of the distributed protocol over a classical channel.

The global state vector lives with a referee, which is a simulation
artifact: the parties are spatially separated and only ever issue requests
for operations on subsystems they own, plus classical values.  The referee
walks the protocol script in order, enforces ownership on every request,
samples measurements, and relays classical values between the parties.

Wire format: each message is framed as a 4-byte little-endian unsigned
length prefix followed by a UTF-8 JSON object with exactly the keys
{seq, sender, kind, payload} in that order.  Frames above 1 MiB are
rejected.  Each direction of a connection numbers its messages with a
strictly increasing seq.  A connection's first message must be a
HANDSHAKE carrying (role, M, N, function-table hash) so both ends agree
on the protocol instance before any quantum step.

Two transports carry the same bytes: an in-process queue pair and a TCP
socket.  Runs are deterministic given (f, input, seed), so transcripts
are byte-identical across transports.
"""

from __future__ import annotations

import json
import queue
import socket
import struct
import threading
from dataclasses import dataclass

import numpy as np

from .locc import (
    OWNERS,
    ScriptStep,
    Transcript,
    build_locc_script,
    build_step_operator,
    initial_state,
    make_ledger,
    make_transcript,
    wire_bits,
)
from .oracle import FunctionTable, build_partition
from .quantum import (
    LocalOperator,
    StateVector,
    apply_local,
    entanglement_entropy,
    measure_computational,
)

MAX_FRAME_BYTES = 1 << 20
DEFAULT_TIMEOUT = 5.0

KINDS = (
    "CLASSICAL_VALUE",
    "OP_REQUEST",
    "MEASURE_REQUEST",
    "MEASURE_RESULT",
    "HANDSHAKE",
    "ERROR",
)

# Payload keys required per message kind (exact set).
_PAYLOAD_KEYS = {
    "CLASSICAL_VALUE": {"value", "bits"},
    "OP_REQUEST": {"operation", "targets", "matrix"},
    "MEASURE_REQUEST": {"subsystem"},
    "MEASURE_RESULT": {"subsystem", "outcome"},
    "HANDSHAKE": None,  # two shapes: party hello and referee ready
    "ERROR": {"code", "message"},
}


class WireFormatError(ValueError):
    """Malformed, oversize, or schema-violating wire data."""


class LocalityViolation(RuntimeError):
    """A party requested an operation outside its owned subsystems."""


class ProtocolOrderError(RuntimeError):
    """A message arrived out of script order or with a non-increasing seq."""


class TransportError(RuntimeError):
    """Connection failed, timed out, or closed mid-protocol."""


class HandshakeMismatch(RuntimeError):
    """The two endpoints disagree about the protocol instance."""


_ERROR_TYPES = {
    "LOCALITY_VIOLATION": LocalityViolation,
    "PROTOCOL_ORDER": ProtocolOrderError,
    "TRANSPORT": TransportError,
    "WIRE_FORMAT": WireFormatError,
    "HANDSHAKE_MISMATCH": HandshakeMismatch,
}


@dataclass(frozen=True)
class Party:
    """A protocol participant and the subsystem labels it owns."""

    id: str
    owned: frozenset[str]


PARTIES = {
    "alice": Party("alice", frozenset(l for l, p in OWNERS.items() if p == "alice")),
    "bob": Party("bob", frozenset(l for l, p in OWNERS.items() if p == "bob")),
}


@dataclass(frozen=True)
class WireMessage:
    seq: int
    sender: str
    kind: str
    payload: dict


def encode_wire(msg: WireMessage) -> bytes:
    """Frame a message: length prefix plus JSON with fixed key order."""
    body = json.dumps(
        {"seq": msg.seq, "sender": msg.sender, "kind": msg.kind, "payload": msg.payload}
    ).encode("utf-8")
    if len(body) > MAX_FRAME_BYTES:
        raise WireFormatError(f"frame of {len(body)} bytes exceeds the 1 MiB cap")
    return struct.pack("<I", len(body)) + body


def decode_wire(frame: bytes) -> WireMessage:
    """Parse one framed message, validating structure and payload schema."""
    if len(frame) < 4:
        raise WireFormatError("frame shorter than the 4-byte length prefix")
    (length,) = struct.unpack("<I", frame[:4])
    if length > MAX_FRAME_BYTES:
        raise WireFormatError(f"declared frame length {length} exceeds the 1 MiB cap")
    if len(frame) != 4 + length:
        raise WireFormatError(f"frame length {len(frame) - 4} does not match declared {length}")
    try:
        pairs = json.loads(frame[4:].decode("utf-8"), object_pairs_hook=list)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireFormatError(f"frame body is not valid JSON: {exc}") from exc
    if not isinstance(pairs, list) or [k for k, _ in pairs] != ["seq", "sender", "kind", "payload"]:
        raise WireFormatError("message keys must be exactly (seq, sender, kind, payload) in order")
    fields = dict(pairs)
    seq, sender, kind, payload = fields["seq"], fields["sender"], fields["kind"], fields["payload"]
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
        raise WireFormatError("seq must be a non-negative integer")
    if not isinstance(sender, str):
        raise WireFormatError("sender must be a string")
    if kind not in KINDS:
        raise WireFormatError(f"unknown message kind {kind!r}")
    if not isinstance(payload, list) or any(not isinstance(p, tuple) or len(p) != 2 for p in payload):
        raise WireFormatError("payload must be a JSON object")
    if len(dict(payload)) != len(payload):
        raise WireFormatError("payload has duplicate keys")
    payload = dict(payload)
    _check_payload(kind, payload)
    return WireMessage(seq, sender, kind, payload)


def _check_payload(kind: str, payload: dict) -> None:
    required = _PAYLOAD_KEYS[kind]
    if required is not None and set(payload) != required:
        raise WireFormatError(f"{kind} payload keys must be exactly {sorted(required)}")
    if kind == "CLASSICAL_VALUE":
        value, bits = payload["value"], payload["bits"]
        if not isinstance(value, int) or not isinstance(bits, int) or isinstance(value, bool):
            raise WireFormatError("CLASSICAL_VALUE value and bits must be integers")
        # A 0-bit width admits only the value 0 (the degenerate single-branch case).
        if bits < 0 or value < 0 or value >= (1 << bits):
            raise WireFormatError(f"value {value} does not fit in {bits} declared bits")
    elif kind == "HANDSHAKE":
        if set(payload) not in ({"role", "m", "n", "f_sha256"}, {"status"}):
            raise WireFormatError("HANDSHAKE payload must be a hello or a ready message")


def encode_matrix(matrix: np.ndarray) -> list:
    """Complex matrix as nested [real, imag] pairs for the JSON payload."""
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(matrix)]


def decode_matrix(data) -> np.ndarray:
    if not isinstance(data, list) or not data:
        raise WireFormatError("matrix payload must be a nonempty list of rows")
    rows = []
    for row in data:
        if not isinstance(row, list) or len(row) != len(data):
            raise WireFormatError("matrix payload must be square")
        entries = []
        for cell in row:
            if not isinstance(cell, list) or len(cell) != 2:
                raise WireFormatError("matrix entries must be [real, imag] pairs")
            re, im = cell
            if not isinstance(re, (int, float)) or not isinstance(im, (int, float)):
                raise WireFormatError("matrix entries must be numeric")
            entries.append(complex(re, im))
        rows.append(entries)
    return np.array(rows, dtype=np.complex128)


# --- channels -------------------------------------------------------------

class QueueChannel:
    """In-process byte channel: frames still pass through the wire codec."""

    def __init__(self, outgoing: "queue.Queue[bytes | None]", incoming: "queue.Queue[bytes | None]",
                 timeout: float = DEFAULT_TIMEOUT):
        self._out = outgoing
        self._in = incoming
        self._timeout = timeout

    @staticmethod
    def pair(timeout: float = DEFAULT_TIMEOUT) -> tuple["QueueChannel", "QueueChannel"]:
        left_to_right: queue.Queue = queue.Queue()
        right_to_left: queue.Queue = queue.Queue()
        return (
            QueueChannel(left_to_right, right_to_left, timeout),
            QueueChannel(right_to_left, left_to_right, timeout),
        )

    def send(self, frame: bytes) -> None:
        self._out.put(frame)

    def recv(self) -> bytes | None:
        try:
            return self._in.get(timeout=self._timeout)
        except queue.Empty:
            raise TransportError(f"no message within {self._timeout} s") from None

    def close(self) -> None:
        self._out.put(None)


class SocketChannel:
    """TCP byte channel; reads exactly one frame at a time."""

    def __init__(self, sock: socket.socket, timeout: float = DEFAULT_TIMEOUT):
        self._sock = sock
        self._sock.settimeout(timeout)

    def send(self, frame: bytes) -> None:
        try:
            self._sock.sendall(frame)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def recv(self) -> bytes | None:
        prefix = self._recv_exact(4, eof_ok=True)
        if prefix is None:
            return None
        (length,) = struct.unpack("<I", prefix)
        if length > MAX_FRAME_BYTES:
            raise WireFormatError(f"declared frame length {length} exceeds the 1 MiB cap")
        return prefix + self._recv_exact(length, eof_ok=False)

    def _recv_exact(self, count: int, eof_ok: bool) -> bytes | None:
        chunks = bytearray()
        while len(chunks) < count:
            try:
                chunk = self._sock.recv(count - len(chunks))
            except socket.timeout:
                raise TransportError(f"no data within the per-message deadline") from None
            except OSError as exc:
                raise TransportError(f"recv failed: {exc}") from exc
            if not chunk:
                if eof_ok and not chunks:
                    return None
                raise TransportError("connection closed mid-frame")
            chunks.extend(chunk)
        return bytes(chunks)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass
        self._sock.close()


class Connection:
    """Seq-numbered message stream over a byte channel.

    Outgoing messages are numbered 1, 2, ... per connection; incoming seq
    must strictly increase.  Receiving an ERROR raises the matching
    exception type.
    """

    def __init__(self, channel, local_id: str):
        self.channel = channel
        self.local_id = local_id
        self._next_seq = 1
        self._last_seen = 0

    def send(self, kind: str, payload: dict, sender: str | None = None) -> WireMessage:
        msg = WireMessage(self._next_seq, sender or self.local_id, kind, payload)
        self._next_seq += 1
        self.channel.send(encode_wire(msg))
        return msg

    def recv(self, expect: tuple[str, ...] | None = None) -> WireMessage:
        frame = self.channel.recv()
        if frame is None:
            raise TransportError("connection closed")
        msg = decode_wire(frame)
        if msg.seq <= self._last_seen:
            raise ProtocolOrderError(
                f"seq {msg.seq} does not increase past {self._last_seen}"
            )
        self._last_seen = msg.seq
        if msg.kind == "ERROR":
            exc_type = _ERROR_TYPES.get(msg.payload["code"], RuntimeError)
            raise exc_type(msg.payload["message"])
        if expect is not None and msg.kind not in expect:
            raise ProtocolOrderError(f"expected {expect}, got {msg.kind}")
        return msg

    def wait_closed(self) -> None:
        frame = self.channel.recv()
        if frame is not None:
            raise ProtocolOrderError("unexpected message after protocol completion")

    def close(self) -> None:
        self.channel.close()


# --- referee --------------------------------------------------------------

class Referee:
    """Holds the global state and executes the script against two connections."""

    def __init__(
        self,
        f: FunctionTable,
        input_state: StateVector,
        seed: int,
        script: tuple[ScriptStep, ...] | None = None,
    ):
        self.f = f
        self.input_state = input_state
        self.seed = int(seed)
        self.script = script if script is not None else build_locc_script(f)
        self.n_values = build_partition(f).n_values

    def execute(self, connections: dict[str, Connection]) -> tuple[StateVector, Transcript]:
        """Run handshakes plus the full script; returns final state and transcript."""
        self._handshake(connections)
        rng = np.random.default_rng(self.seed)
        state = initial_state(self.f, self.input_state)
        initial_entropy = entanglement_entropy(state, {"a"})
        outcomes: dict[str, int] = {}
        try:
            for step in self.script:
                state = self._execute_step(step, state, rng, outcomes, connections)
        except Exception as exc:
            code = next(
                (c for c, t in _ERROR_TYPES.items() if isinstance(exc, t)), "PROTOCOL_ORDER"
            )
            self._broadcast_error(connections, code, str(exc))
            raise
        final_entropy = entanglement_entropy(state, {"a"})
        ledger = make_ledger(self.n_values, initial_entropy, final_entropy)
        transcript = make_transcript(
            self.f, self.seed, outcomes["r"], outcomes["s"], ledger
        )
        for conn in connections.values():
            conn.wait_closed()
        return state, transcript

    def _handshake(self, connections: dict[str, Connection]) -> None:
        expected_hash = self.f.sha256()
        for role, conn in connections.items():
            msg = conn.recv(expect=("HANDSHAKE",))
            payload = msg.payload
            if "status" in payload:
                raise HandshakeMismatch("party sent a ready message instead of a hello")
            if payload["role"] != role:
                raise HandshakeMismatch(
                    f"connection for {role} introduced itself as {payload['role']}"
                )
            if (payload["m"], payload["n"]) != (self.f.M, self.f.N):
                self._broadcast_error(connections, "HANDSHAKE_MISMATCH", "dimension mismatch")
                raise HandshakeMismatch(
                    f"endpoint dims ({payload['m']}, {payload['n']}) vs ({self.f.M}, {self.f.N})"
                )
            if payload["f_sha256"] != expected_hash:
                self._broadcast_error(connections, "HANDSHAKE_MISMATCH", "function table mismatch")
                raise HandshakeMismatch("endpoints disagree on the function table")
        for conn in connections.values():
            conn.send("HANDSHAKE", {"status": "ready"}, sender="referee")

    def _execute_step(
        self,
        step: ScriptStep,
        state: StateVector,
        rng: np.random.Generator,
        outcomes: dict[str, int],
        connections: dict[str, Connection],
    ) -> StateVector:
        conn = connections[step.party]
        other = connections["bob" if step.party == "alice" else "alice"]
        if step.action == "apply":
            msg = conn.recv(expect=("OP_REQUEST",))
            op = self._authorize_op(msg, step)
            return apply_local(state, op)
        if step.action == "measure":
            msg = conn.recv(expect=("MEASURE_REQUEST",))
            self._check_sender(msg, step.party)
            subsystem = msg.payload["subsystem"]
            self._check_ownership(step.party, (subsystem,))
            if subsystem != step.targets[0]:
                raise ProtocolOrderError(
                    f"script expects a measurement of {step.targets[0]}, got {subsystem}"
                )
            record = measure_computational(state, subsystem, rng)
            outcomes["r" if step.step == 2 else "s"] = record.outcome
            conn.send(
                "MEASURE_RESULT",
                {"subsystem": subsystem, "outcome": record.outcome},
                sender="referee",
            )
            return record.post_state
        if step.action == "send":
            msg = conn.recv(expect=("CLASSICAL_VALUE",))
            self._check_sender(msg, step.party)
            other.send("CLASSICAL_VALUE", dict(msg.payload), sender=msg.sender)
            return state
        raise ProtocolOrderError(f"unknown script action {step.action!r}")

    def _authorize_op(self, msg: WireMessage, step: ScriptStep) -> LocalOperator:
        self._check_sender(msg, step.party)
        targets = msg.payload["targets"]
        if not isinstance(targets, list) or not all(isinstance(t, str) for t in targets):
            raise WireFormatError("OP_REQUEST targets must be a list of labels")
        requested = tuple(targets)
        self._check_ownership(step.party, requested)
        if msg.payload["operation"] != step.operation or requested != step.targets:
            raise ProtocolOrderError(
                f"script expects {step.operation} on {step.targets}, "
                f"got {msg.payload['operation']} on {requested}"
            )
        matrix = decode_matrix(msg.payload["matrix"])
        target = requested[0] if len(requested) == 1 else requested
        try:
            return LocalOperator(target, matrix, description=step.operation)
        except ValueError as exc:
            raise ProtocolOrderError(f"rejected operator: {exc}") from exc

    @staticmethod
    def _check_sender(msg: WireMessage, party: str) -> None:
        # The connection a message arrived on decides who sent it; a forged
        # sender field cannot borrow the other party's authority.
        if msg.sender != party:
            raise ProtocolOrderError(
                f"message on {party}'s connection claims sender {msg.sender!r}"
            )

    @staticmethod
    def _check_ownership(party_id: str, targets: tuple[str, ...]) -> None:
        owned = PARTIES[party_id].owned
        foreign = [t for t in targets if t not in owned]
        if foreign:
            raise LocalityViolation(
                f"{party_id} may not act on {foreign}; owns {sorted(owned)}"
            )

    def _broadcast_error(self, connections: dict[str, Connection], code: str, message: str) -> None:
        for conn in connections.values():
            try:
                conn.send("ERROR", {"code": code, "message": message}, sender="referee")
            except (TransportError, OSError):
                pass


def referee_execute(
    f: FunctionTable,
    input_state: StateVector,
    seed: int,
    connections: dict[str, Connection],
    script: tuple[ScriptStep, ...] | None = None,
) -> tuple[StateVector, Transcript]:
    """Run the referee side of a distributed execution over open connections."""
    return Referee(f, input_state, seed, script).execute(connections)


# --- party endpoint -------------------------------------------------------

class PartyEndpoint:
    """Walks the script from one party's perspective, issuing requests.

    The endpoint closes its connection once its own part of the script is
    finished; the referee reads that EOF as completion.
    """

    def __init__(self, role: str, f: FunctionTable, conn: Connection):
        if role not in PARTIES:
            raise ValueError(f"role must be alice or bob, not {role!r}")
        self.role = role
        self.f = f
        self.conn = conn
        self.known: dict[str, int] = {}

    def run(self) -> dict[str, int]:
        """Execute the party's side; returns the classical values it learned."""
        self.conn.send(
            "HANDSHAKE",
            {"role": self.role, "m": self.f.M, "n": self.f.N, "f_sha256": self.f.sha256()},
        )
        ready = self.conn.recv(expect=("HANDSHAKE",))
        if ready.payload.get("status") != "ready":
            raise HandshakeMismatch(f"unexpected handshake reply {ready.payload}")
        width = wire_bits(build_partition(self.f).n_values)
        try:
            for step in build_locc_script(self.f):
                self._run_step(step, width)
        finally:
            self.conn.close()
        return dict(self.known)

    def _run_step(self, step: ScriptStep, width: int) -> None:
        mine = step.party == self.role
        value_name = step.operation.removeprefix("send_")
        if not mine:
            if step.action == "send":
                msg = self.conn.recv(expect=("CLASSICAL_VALUE",))
                self.known[value_name] = msg.payload["value"]
            return
        if step.action == "apply":
            value = self.known[step.depends_on] if step.depends_on else None
            op = build_step_operator(self.f, step.operation, value)
            self.conn.send(
                "OP_REQUEST",
                {
                    "operation": step.operation,
                    "targets": list(step.targets),
                    "matrix": encode_matrix(op.matrix),
                },
            )
        elif step.action == "measure":
            self.conn.send("MEASURE_REQUEST", {"subsystem": step.targets[0]})
            result = self.conn.recv(expect=("MEASURE_RESULT",))
            self.known["r" if step.step == 2 else "s"] = result.payload["outcome"]
        elif step.action == "send":
            self.conn.send("CLASSICAL_VALUE", {"value": self.known[value_name], "bits": width})


# --- ready-made transports ------------------------------------------------

def run_in_process(
    f: FunctionTable, input_state: StateVector, seed: int, timeout: float = DEFAULT_TIMEOUT
) -> tuple[StateVector, Transcript]:
    """Full distributed run with both endpoints on threads and queue channels."""
    referee_side_a, alice_side = QueueChannel.pair(timeout)
    referee_side_b, bob_side = QueueChannel.pair(timeout)
    connections = {
        "alice": Connection(referee_side_a, "referee"),
        "bob": Connection(referee_side_b, "referee"),
    }
    endpoints = [
        PartyEndpoint("alice", f, Connection(alice_side, "alice")),
        PartyEndpoint("bob", f, Connection(bob_side, "bob")),
    ]
    failures: list[BaseException] = []

    def drive(endpoint: PartyEndpoint) -> None:
        try:
            endpoint.run()
        except BaseException as exc:  # propagated to the caller after join
            failures.append(exc)

    threads = [threading.Thread(target=drive, args=(e,), daemon=True) for e in endpoints]
    for t in threads:
        t.start()
    try:
        state, transcript = referee_execute(f, input_state, seed, connections)
    finally:
        for t in threads:
            t.join(timeout=timeout)
    if failures:
        raise failures[0]
    return state, transcript


def serve_socket(
    f: FunctionTable,
    input_state: StateVector,
    seed: int,
    host: str = "127.0.0.1",
    port: int = 0,
    timeout: float = DEFAULT_TIMEOUT,
    on_listening=None,
) -> tuple[StateVector, Transcript]:
    """Referee over TCP: listen, accept both parties, run the protocol.

    on_listening, if given, is called with the bound (host, port) before
    accepting, so callers can announce the ephemeral port.
    """
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as listener:
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((host, port))
        listener.listen(2)
        listener.settimeout(timeout)
        if on_listening is not None:
            on_listening(listener.getsockname()[0], listener.getsockname()[1])
        channels = []
        try:
            for _ in range(2):
                try:
                    sock, _addr = listener.accept()
                except socket.timeout:
                    raise TransportError("no connection within the deadline") from None
                channels.append(SocketChannel(sock, timeout))
            connections = _assign_roles(channels)
            return Referee(f, input_state, seed).execute(connections)
        finally:
            for channel in channels:
                channel.close()


def _assign_roles(channels: list[SocketChannel]) -> dict[str, Connection]:
    """Peek each connection's HANDSHAKE to learn which party it is.

    The handshake is consumed here, so the referee's own handshake step is
    replayed from the recorded message via a replaying connection.
    """
    connections: dict[str, Connection] = {}
    for channel in channels:
        conn = _ReplayConnection(channel, "referee")
        frame = channel.recv()
        if frame is None:
            raise TransportError("connection closed before handshake")
        msg = decode_wire(frame)
        if msg.kind != "HANDSHAKE" or "role" not in msg.payload:
            raise HandshakeMismatch("first message must be a HANDSHAKE hello")
        role = msg.payload["role"]
        if role in connections:
            raise HandshakeMismatch(f"both connections claim the role {role}")
        conn.stash(frame)
        connections[role] = conn
    if set(connections) != {"alice", "bob"}:
        raise HandshakeMismatch(f"expected alice and bob, got {sorted(connections)}")
    return connections


class _ReplayConnection(Connection):
    """Connection that can replay one already-read frame (the handshake)."""

    def __init__(self, channel, local_id: str):
        super().__init__(channel, local_id)
        self._stashed: bytes | None = None

    def stash(self, frame: bytes) -> None:
        self._stashed = frame

    def recv(self, expect: tuple[str, ...] | None = None) -> WireMessage:
        if self._stashed is not None:
            frame, self._stashed = self._stashed, None
            msg = decode_wire(frame)
            self._last_seen = msg.seq
            if expect is not None and msg.kind not in expect:
                raise ProtocolOrderError(f"expected {expect}, got {msg.kind}")
            return msg
        return super().recv(expect)


def connect_socket(
    role: str,
    f: FunctionTable,
    host: str,
    port: int,
    timeout: float = DEFAULT_TIMEOUT,
) -> dict[str, int]:
    """Run one party endpoint against a listening referee."""
    if role not in PARTIES:
        raise ValueError(f"role must be alice or bob, not {role!r}")
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
    channel = SocketChannel(sock, timeout)
    try:
        return PartyEndpoint(role, f, Connection(channel, role)).run()
    finally:
        channel.close()

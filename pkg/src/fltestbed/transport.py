"""Message transport between node processes.

Node i listens on 127.0.0.1:base_port+i. A frame on the wire is a 4-byte
big-endian length followed by exactly that many body bytes; the body is a
text object with keys src, dst, phase, iter, payload in that order, payload
in canonical value form. Messages that do not match the (phase, iteration)
a node is currently waiting for stay buffered, never dropped.

The in-process loopback transport shares the same surface and the same
serialize/deserialize path, so the two are observationally equivalent and
the protocol tests run against both.
"""

from __future__ import annotations

import enum
import json
import socket
import struct
import threading
import time
from collections import Counter, defaultdict
from dataclasses import dataclass

from .errors import ParseError, ProtocolTimeout, SerializationError, TransportError, UsageError
from .values import Value, dumps, validate_value


class Phase(enum.Enum):
    """Protocol phase tags; values are the on-wire names."""

    SRV_DATA = "SRV_DATA"  # server broadcast to clients (centralized)
    CLI_DATA = "CLI_DATA"  # client reply to server (centralized)
    DEC_P1 = "DEC_P1"      # all-to-all broadcast (decentralized phase I)
    DEC_P2 = "DEC_P2"      # per-peer reply (decentralized phase II)


@dataclass(frozen=True)
class Envelope:
    src: int
    dst: int
    phase: Phase
    iter: int
    payload: Value

    def __post_init__(self):
        for name in ("src", "dst", "iter"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise UsageError(f"envelope {name} must be a non-negative integer, got {v!r}")
        if self.src == self.dst:
            raise UsageError(f"envelope src and dst must differ, both are {self.src}")
        if not isinstance(self.phase, Phase):
            raise UsageError(f"envelope phase must be a Phase, got {self.phase!r}")
        validate_value(self.payload)


@dataclass(frozen=True)
class TransportConfig:
    base_port: int
    no_nodes: int
    connect_timeout: float = 5.0
    recv_timeout: float = 30.0
    retry_interval: float = 0.1

    def __post_init__(self):
        if self.no_nodes < 2:
            raise UsageError(f"a federation needs at least 2 nodes, got {self.no_nodes}")
        if not (0 < self.base_port and self.base_port + self.no_nodes - 1 <= 65535):
            raise UsageError(f"port range {self.base_port}..+{self.no_nodes - 1} out of bounds")
        if self.recv_timeout <= 0 or self.connect_timeout <= 0:
            raise UsageError("timeouts must be positive")


def encode_frame(env: Envelope) -> bytes:
    """Full wire frame (length prefix + body) for one envelope."""
    body = (
        '{"src":%d,"dst":%d,"phase":"%s","iter":%d,"payload":%s}'
        % (env.src, env.dst, env.phase.value, env.iter, dumps(env.payload))
    ).encode("ascii")
    return struct.pack("!I", len(body)) + body


def decode_body(body: bytes) -> Envelope:
    """Parse one frame body back into an Envelope."""
    try:
        obj = json.loads(body.decode("ascii"))
    except UnicodeDecodeError as e:
        raise ParseError("frame body is not ASCII", e.start) from None
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed frame body: {e.msg}", e.pos) from None
    if not isinstance(obj, dict) or set(obj) != {"src", "dst", "phase", "iter", "payload"}:
        raise ParseError("frame body must have exactly src,dst,phase,iter,payload", 0)
    try:
        phase = Phase(obj["phase"])
    except ValueError:
        raise ParseError(f"unknown phase tag {obj['phase']!r}", 0) from None
    try:
        validate_value(obj["payload"])
    except SerializationError as e:
        raise ParseError(f"invalid payload: {e}") from None
    try:
        return Envelope(
            src=obj["src"], dst=obj["dst"], phase=phase, iter=obj["iter"], payload=obj["payload"]
        )
    except UsageError as e:
        raise ParseError(f"invalid envelope fields: {e}") from None


def decode_frame(frame: bytes) -> Envelope:
    """Parse a complete frame, checking the length prefix."""
    if len(frame) < 4:
        raise ParseError("frame shorter than its 4-byte length prefix", 0)
    (length,) = struct.unpack("!I", frame[:4])
    if len(frame) - 4 != length:
        raise ParseError(f"length prefix says {length} body bytes, frame has {len(frame) - 4}", 0)
    return decode_body(frame[4:])


class _MessageBuffer:
    """Thread-safe store of received envelopes keyed by (phase, iteration)."""

    def __init__(self):
        self._cond = threading.Condition()
        self._buckets: dict[tuple[Phase, int], list[Envelope]] = defaultdict(list)
        self._error: Exception | None = None
        self.arrivals: list[tuple[int, Phase, int]] = []  # (src, phase, iter) in arrival order

    def put(self, env: Envelope) -> None:
        with self._cond:
            self._buckets[(env.phase, env.iter)].append(env)
            self.arrivals.append((env.src, env.phase, env.iter))
            self._cond.notify_all()

    def fail(self, exc: Exception) -> None:
        with self._cond:
            self._error = exc
            self._cond.notify_all()

    def take(
        self,
        phase: Phase,
        iteration: int,
        expected_count: int,
        timeout: float,
        *,
        node_id: int,
        no_nodes: int,
    ) -> list[Envelope]:
        if expected_count < 1:
            raise UsageError(f"expected_count must be >= 1, got {expected_count}")
        deadline = time.monotonic() + timeout
        key = (phase, iteration)
        with self._cond:
            while True:
                if self._error is not None:
                    raise TransportError(f"receive failed: {self._error}") from self._error
                bucket = self._buckets.get(key, [])
                if len(bucket) >= expected_count:
                    del self._buckets[key]
                    return sorted(bucket, key=lambda e: e.src)
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    arrived = sorted(e.src for e in bucket)
                    missing = [i for i in range(no_nodes) if i != node_id and i not in set(arrived)]
                    raise ProtocolTimeout(
                        f"timeout after {timeout}s waiting for {expected_count} "
                        f"{phase.value} envelope(s) at iteration {iteration}: "
                        f"received {len(bucket)} from nodes {arrived}, missing nodes {missing}",
                        phase=phase,
                        iteration=iteration,
                        missing=missing,
                    )
                self._cond.wait(remaining)


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly n bytes; None on clean EOF at a frame boundary."""
    chunks = []
    got = 0
    while got < n:
        data = sock.recv(n - got)
        if not data:
            return None
        chunks.append(data)
        got += len(data)
    return b"".join(chunks)


class TcpTransport:
    """Wire transport for one node; owns the listening socket.

    A handle belongs to one protocol loop: send/recv_matching are called from
    a single logical thread. Internal reader threads only feed the buffer.
    """

    def __init__(self, cfg: TransportConfig, node_id: int):
        if not (0 <= node_id < cfg.no_nodes):
            raise UsageError(f"node id {node_id} out of range for {cfg.no_nodes} nodes")
        self.cfg = cfg
        self.node_id = node_id
        self.port = cfg.base_port + node_id
        self.sent_to: Counter[int] = Counter()
        self.received_from: Counter[int] = Counter()
        self._buffer = _MessageBuffer()
        self._out: dict[int, socket.socket] = {}
        self._conns: list[socket.socket] = []
        self._closed = False
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            listener.bind(("127.0.0.1", self.port))
            listener.listen(cfg.no_nodes)
        except OSError as e:
            listener.close()
            raise TransportError(f"node {node_id} cannot bind port {self.port}: {e}") from e
        self._listener = listener
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name=f"accept-{node_id}", daemon=True
        )
        self._accept_thread.start()

    def _accept_loop(self):
        while True:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return  # listener closed
            self._conns.append(conn)
            threading.Thread(
                target=self._read_loop, args=(conn,), name=f"read-{self.node_id}", daemon=True
            ).start()

    def _read_loop(self, conn: socket.socket):
        try:
            while True:
                header = _recv_exact(conn, 4)
                if header is None:
                    return  # peer closed cleanly
                (length,) = struct.unpack("!I", header)
                body = _recv_exact(conn, length)
                if body is None:
                    self._buffer.fail(TransportError("peer closed mid-frame"))
                    return
                env = decode_body(body)
                self.received_from[env.src] += 1
                self._buffer.put(env)
        except OSError:
            return  # our own close
        except Exception as e:  # malformed frame: poison pending receives
            self._buffer.fail(e)

    def _connect(self, dst: int) -> socket.socket:
        port = self.cfg.base_port + dst
        deadline = time.monotonic() + self.cfg.connect_timeout
        while True:
            try:
                sock = socket.create_connection(("127.0.0.1", port), timeout=self.cfg.connect_timeout)
                sock.settimeout(None)  # back to blocking mode for sendall
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._out[dst] = sock
                return sock
            except OSError as e:
                if time.monotonic() >= deadline:
                    raise TransportError(
                        f"node {dst} unreachable on port {port} after "
                        f"{self.cfg.connect_timeout}s: {e}"
                    ) from e
                time.sleep(self.cfg.retry_interval)

    def send(self, env: Envelope) -> None:
        if self._closed:
            raise UsageError("transport is closed")
        if env.src != self.node_id:
            raise UsageError(f"envelope src {env.src} does not match sending node {self.node_id}")
        if not env.dst < self.cfg.no_nodes:
            raise UsageError(f"envelope dst {env.dst} out of range for {self.cfg.no_nodes} nodes")
        frame = encode_frame(env)
        try:
            sock = self._out.get(env.dst)
            if sock is None:
                sock = self._connect(env.dst)
            sock.sendall(frame)
        except (OSError, TransportError) as e:
            raise TransportError(
                f"send to node {env.dst} failed ({env.phase.value} iteration {env.iter}): {e}"
            ) from e
        self.sent_to[env.dst] += 1

    def recv_matching(self, phase: Phase, iteration: int, expected_count: int) -> list[Envelope]:
        if self._closed:
            raise UsageError("transport is closed")
        return self._buffer.take(
            phase,
            iteration,
            expected_count,
            self.cfg.recv_timeout,
            node_id=self.node_id,
            no_nodes=self.cfg.no_nodes,
        )

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        # shutdown() wakes the thread blocked in accept(); without it the
        # blocked syscall pins the socket open and the port stays bound
        try:
            self._listener.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._listener.close()
        self._accept_thread.join(timeout=2.0)
        for sock in list(self._out.values()) + list(self._conns):
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                sock.close()
            except OSError:
                pass


class LoopbackHub:
    """In-process rendezvous for a whole federation; one buffer per node.

    Tracks the multiset of sent and delivered frames so tests can assert
    no-loss/no-duplication directly.
    """

    def __init__(self, no_nodes: int, recv_timeout: float = 30.0):
        if no_nodes < 2:
            raise UsageError(f"a federation needs at least 2 nodes, got {no_nodes}")
        self.no_nodes = no_nodes
        self.recv_timeout = recv_timeout
        self._buffers = [_MessageBuffer() for _ in range(no_nodes)]
        self._stats_lock = threading.Lock()
        self.sent: Counter[bytes] = Counter()
        self.delivered: Counter[bytes] = Counter()
        self._received_from: list[Counter[int]] = [Counter() for _ in range(no_nodes)]

    def transport(self, node_id: int) -> "LoopbackTransport":
        if not (0 <= node_id < self.no_nodes):
            raise UsageError(f"node id {node_id} out of range for {self.no_nodes} nodes")
        return LoopbackTransport(self, node_id)

    def transports(self) -> list["LoopbackTransport"]:
        return [self.transport(i) for i in range(self.no_nodes)]


class LoopbackTransport:
    """Same contract as TcpTransport, delivered through shared queues."""

    def __init__(self, hub: LoopbackHub, node_id: int):
        self.hub = hub
        self.node_id = node_id
        self.sent_to: Counter[int] = Counter()
        self._closed = False

    @property
    def received_from(self) -> Counter[int]:
        return self.hub._received_from[self.node_id]

    def send(self, env: Envelope) -> None:
        if self._closed:
            raise UsageError("transport is closed")
        if env.src != self.node_id:
            raise UsageError(f"envelope src {env.src} does not match sending node {self.node_id}")
        if not env.dst < self.hub.no_nodes:
            raise UsageError(f"envelope dst {env.dst} out of range for {self.hub.no_nodes} nodes")
        # Round-trip through the wire codec: copies the payload and enforces
        # exactly the validation a TCP hop would.
        frame = encode_frame(env)
        delivered = decode_frame(frame)
        with self.hub._stats_lock:
            self.hub.sent[frame] += 1
            self.hub.delivered[frame] += 1
            self.hub._received_from[env.dst][env.src] += 1
        self.sent_to[env.dst] += 1
        self.hub._buffers[env.dst].put(delivered)

    def recv_matching(self, phase: Phase, iteration: int, expected_count: int) -> list[Envelope]:
        if self._closed:
            raise UsageError("transport is closed")
        return self.hub._buffers[self.node_id].take(
            phase,
            iteration,
            expected_count,
            self.hub.recv_timeout,
            node_id=self.node_id,
            no_nodes=self.hub.no_nodes,
        )

    def close(self) -> None:
        self._closed = True

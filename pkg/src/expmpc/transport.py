"""Framed, metered point-to-point links (in-process queues or TCP).

Every message is one frame::

    offset  size  field
    0       1     message-type tag
    1       1     ring-width code (0 = 64-bit, 1 = 128-bit)
    2       2     reserved, zero
    4       8     payload length in bytes, little-endian
    12      n     payload: little-endian ring elements

Both link kinds carry the same bytes, so metering is transport independent.
"""

from __future__ import annotations

import logging
import queue
import socket
import struct
import threading
import time

from .errors import ProtocolError, SessionAborted, TransportError, UsageError

log = logging.getLogger(__name__)

HEADER = struct.Struct("<BBHQ")
HEADER_SIZE = HEADER.size  # 12

WIDTH_CODES = {64: 0, 128: 1}
CODE_WIDTHS = {v: k for k, v in WIDTH_CODES.items()}

# message-type registry
TAG_OPEN = 0x01  # P0 <-> P1: masked values being opened
TAG_DEAL = 0x02  # P2 -> P1: correlated randomness (triples, masks, bit shares)
TAG_HELLO = 0x10  # handshake, never metered

TAG_NAMES = {TAG_OPEN: "open", TAG_DEAL: "deal", TAG_HELLO: "hello"}

_ABORT = object()


def width_code(width: int) -> int:
    try:
        return WIDTH_CODES[width]
    except KeyError:
        raise ProtocolError(f"no wire code for a {width}-bit ring") from None


def encode_frame(tag: int, width: int, payload: bytes) -> bytes:
    return HEADER.pack(tag, width_code(width), 0, len(payload)) + payload


def decode_header(header: bytes):
    if len(header) != HEADER_SIZE:
        raise ProtocolError(f"truncated frame header ({len(header)} of {HEADER_SIZE} bytes)")
    tag, code, reserved, length = HEADER.unpack(header)
    if code not in CODE_WIDTHS:
        raise ProtocolError(f"unknown ring-width code {code}")
    return tag, CODE_WIDTHS[code], length


class Link:
    """One end of a bidirectional channel to a single peer."""

    def __init__(self, local: int, peer: int):
        self.local = local
        self.peer = peer
        self.bytes_sent = 0
        self.messages_sent = 0
        self._lock = threading.Lock()

    def _count(self, nbytes):
        with self._lock:
            self.bytes_sent += nbytes
            self.messages_sent += 1

    def reset_counters(self):
        with self._lock:
            self.bytes_sent = 0
            self.messages_sent = 0

    def send_frame(self, frame: bytes):
        raise NotImplementedError

    def recv_frame(self, timeout=None) -> tuple[int, int, bytes]:
        raise NotImplementedError

    def abort(self):
        pass

    def drain(self):
        """Discard anything left over from an aborted run."""

    def close(self):
        pass


class LocalLink(Link):
    def __init__(self, local, peer, inbox: queue.SimpleQueue, outbox: queue.SimpleQueue):
        super().__init__(local, peer)
        self._inbox = inbox
        self._outbox = outbox

    def send_frame(self, frame: bytes):
        self._count(len(frame))
        self._outbox.put(frame)

    def recv_frame(self, timeout=None):
        try:
            frame = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TransportError(f"timed out waiting for P{self.peer}", peer=self.peer) from None
        if frame is _ABORT:
            raise SessionAborted(f"P{self.peer} aborted the session")
        tag, width, length = decode_header(frame[:HEADER_SIZE])
        payload = memoryview(frame)[HEADER_SIZE:]
        if len(payload) != length:
            raise ProtocolError(f"truncated frame from P{self.peer}: {len(payload)} of {length} payload bytes")
        return tag, width, payload

    def drain(self):
        while True:
            try:
                self._inbox.get_nowait()
            except queue.Empty:
                return

    def abort(self):
        # wake the local reader and the peer's reader
        self._inbox.put(_ABORT)
        self._outbox.put(_ABORT)


def local_pair(a: int, b: int) -> tuple[LocalLink, LocalLink]:
    ab, ba = queue.SimpleQueue(), queue.SimpleQueue()
    return LocalLink(a, b, inbox=ba, outbox=ab), LocalLink(b, a, inbox=ab, outbox=ba)


class TcpLink(Link):
    """Socket-backed link. Sends go through a writer thread so both ends of an
    opening can transmit large payloads simultaneously without deadlocking."""

    def __init__(self, local, peer, sock: socket.socket):
        super().__init__(local, peer)
        self.sock = sock
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._outq: queue.SimpleQueue = queue.SimpleQueue()
        self._send_error = None
        self._writer = threading.Thread(target=self._write_loop, name=f"tcp-P{local}->P{peer}", daemon=True)
        self._writer.start()

    def _write_loop(self):
        while True:
            frame = self._outq.get()
            if frame is None:
                return
            try:
                self.sock.sendall(frame)
            except OSError as exc:
                self._send_error = exc
                return

    def send_frame(self, frame: bytes):
        if self._send_error is not None:
            raise TransportError(f"connection to P{self.peer} failed: {self._send_error}", peer=self.peer)
        self._count(len(frame))
        self._outq.put(frame)

    def _read_exact(self, n, timeout):
        self.sock.settimeout(timeout)
        chunks, got = [], 0
        while got < n:
            try:
                chunk = self.sock.recv(min(n - got, 1 << 20))
            except socket.timeout:
                raise TransportError(f"timed out waiting for P{self.peer}", peer=self.peer) from None
            except OSError as exc:
                raise TransportError(f"connection to P{self.peer} failed: {exc}", peer=self.peer) from None
            if not chunk:
                if got:
                    raise ProtocolError(f"truncated frame from P{self.peer}")
                raise TransportError(f"P{self.peer} closed the connection", peer=self.peer)
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def recv_frame(self, timeout=None):
        tag, width, length = decode_header(self._read_exact(HEADER_SIZE, timeout))
        payload = self._read_exact(length, timeout) if length else b""
        return tag, width, payload

    def flush(self, timeout=10.0):
        self._outq.put(None)
        self._writer.join(timeout)

    def abort(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass

    def close(self):
        if self._writer.is_alive():
            self.flush()
        try:
            self.sock.close()
        except OSError:
            pass


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise UsageError(f"expected host:port, got {addr!r}")
    return host, int(port)


def connect(addr, local: int, peer: int, timeout: float) -> socket.socket:
    """Connect to ``addr``, retrying until ``timeout`` so peers may start in any order."""
    host, port = parse_address(addr) if isinstance(addr, str) else addr
    deadline = time.monotonic() + timeout
    last = None
    while time.monotonic() < deadline:
        try:
            return socket.create_connection((host, port), timeout=max(0.1, deadline - time.monotonic()))
        except OSError as exc:
            last = exc
            time.sleep(0.05)
    raise TransportError(f"P{local} could not reach P{peer} at {host}:{port}: {last}", peer=peer)


def listen(addr) -> socket.socket:
    host, port = parse_address(addr) if isinstance(addr, str) else addr
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        srv.bind((host, port))
    except OSError as exc:
        srv.close()
        raise TransportError(f"cannot listen on {host}:{port}: {exc.strerror}") from None
    srv.listen(4)
    return srv

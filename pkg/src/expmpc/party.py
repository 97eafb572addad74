"""Party contexts, local and networked sessions, and communication transcripts.

P0 and P1 hold additive shares. P2 is the data-free helper: it deals
correlated randomness and never receives protocol payloads. Wherever a
protocol would hand P2 an input share, P2 instead holds a zero placeholder
of the same shape, so one body of protocol code runs unchanged on all three
roles.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .config import ProtocolConfig
from .errors import HandshakeError, ProtocolError, SessionAborted, TransportError, UsageError
from .ring import zero_shares
from .transport import (
    HEADER_SIZE,
    TAG_DEAL,
    TAG_HELLO,
    TAG_NAMES,
    TAG_OPEN,
    Link,
    TcpLink,
    connect,
    encode_frame,
    listen,
    local_pair,
)

log = logging.getLogger(__name__)

P0, P1, P2 = 0, 1, 2
HELPER = P2
PROTOCOL_VERSION = 1


def _generator(key: bytes, epoch: int = 0) -> np.random.Generator:
    # the epoch goes into Philox's counter, so every run gets a disjoint stream
    return np.random.Generator(np.random.Philox(key=int.from_bytes(key[:16], "little"), counter=[0, 0, 0, epoch]))


class Party:
    """One party's view of a running session."""

    def __init__(self, role: int, config: ProtocolConfig, links: dict[int, Link]):
        if role not in (P0, P1, P2):
            raise UsageError(f"role must be 0, 1 or 2, got {role}")
        self.role = role
        self.config = config
        self.ring = config.ring
        self.fp = config.fixed
        self.links = links
        self.rounds = 0
        self.helper_inbound = 0
        self.begin(0)

    def begin(self, epoch: int):
        """Re-key the common-randomness streams for run number ``epoch``.

        All three parties call this with the same epoch before a run, so the
        streams stay aligned even after an earlier run was aborted midway.
        """
        keys = self.config.keys
        self._zero_counter = epoch << 32
        # P0 and P2 expand P0's half of every dealt value from a shared key,
        # so only P1's half crosses the wire
        self._prg02 = _generator(keys["02"], epoch) if self.role in (P0, P2) else None
        # uniform dealt values need no traffic at all: P1's half comes from a P1-P2 key
        self._prg12 = _generator(keys["12"], epoch) if self.role in (P1, P2) else None

    def __repr__(self):
        return f"Party(P{self.role})"

    @property
    def is_helper(self) -> bool:
        return self.role == HELPER

    @property
    def other(self) -> int:
        return 1 - self.role

    # messaging ----------------------------------------------------------

    def send(self, peer: int, tag: int, *arrays, masked: bool = False):
        if peer == HELPER and not masked:
            # audit hook: nothing may reach the helper unless masked
            raise ProtocolError(f"P{self.role} tried to send an unmasked {TAG_NAMES.get(tag, tag)} payload to P2")
        payload = b"".join(self.ring.to_bytes(a) for a in arrays)
        self.links[peer].send_frame(encode_frame(tag, self.ring.width, payload))

    def recv(self, peer: int, tag: int, *shapes) -> list:
        got_tag, width, payload = self.links[peer].recv_frame(timeout=self.config.timeout)
        if got_tag != tag:
            raise ProtocolError(
                f"P{self.role} expected {TAG_NAMES.get(tag, tag)} from P{peer}, got {TAG_NAMES.get(got_tag, got_tag)}"
            )
        if width != self.ring.width:
            raise ProtocolError(f"P{peer} sent {width}-bit elements in a {self.ring.width}-bit session")
        if self.role == HELPER:
            self.helper_inbound += 1
        sizes = [int(np.prod(s, dtype=np.int64)) for s in shapes]
        if len(payload) != sum(sizes) * self.ring.nbytes:
            raise ProtocolError(
                f"P{self.role} expected {sum(sizes)} elements from P{peer}, frame holds {len(payload) // self.ring.nbytes}"
            )
        out, pos = [], 0
        payload = memoryview(payload)
        for shape, n in zip(shapes, sizes):
            nb = n * self.ring.nbytes
            out.append(self.ring.from_bytes(payload[pos:pos + nb], shape))
            pos += nb
        return out

    def open(self, *arrays) -> list:
        """Reveal masked values between P0 and P1 (one round)."""
        if self.is_helper:
            raise UsageError("the helper never takes part in openings")
        self.send(self.other, TAG_OPEN, *arrays)
        theirs = self.recv(self.other, TAG_OPEN, *[np.shape(a) for a in arrays])
        self.rounds += 1
        return [self.ring.add(a, b) for a, b in zip(arrays, theirs)]

    def deal(self, *values):
        """Helper side: secret-share each value between P0 and P1."""
        if not self.is_helper:
            raise UsageError("only P2 deals")
        corrections = []
        for v in values:
            s0 = self.ring.random(self._prg02, np.shape(v))
            corrections.append(self.ring.sub(v, s0))
        self.send(P1, TAG_DEAL, *corrections)

    def correlated(self, *shapes) -> list:
        """Uniform shared values that cost no communication.

        P0 and P1 draw their halves from the keys they share with P2; the
        helper draws both and gets the full values.
        """
        R = self.ring
        if self.role == P0:
            return [R.random(self._prg02, s) for s in shapes]
        if self.role == P1:
            return [R.random(self._prg12, s) for s in shapes]
        return [R.add(R.random(self._prg02, s), R.random(self._prg12, s)) for s in shapes]

    def dealt(self, *shapes) -> list:
        """Primary side: receive this party's shares of values dealt by P2."""
        if self.role == P0:
            return [self.ring.random(self._prg02, s) for s in shapes]
        if self.role == P1:
            return self.recv(HELPER, TAG_DEAL, *shapes)
        raise UsageError("the helper does not receive dealt values")

    # local helpers ------------------------------------------------------

    def placeholder(self, shape):
        return self.ring.zeros(shape)

    def public(self, value: int, shape=()):
        """Shares of a public ring constant: P1 holds it, P0 (and P2) hold zero."""
        out = self.ring.zeros(shape)
        if self.role == P1:
            out = self.ring.wrap(out + self.ring.const(value))
        return out

    def zero_share(self, shape):
        """Fresh shares of zero from the P0/P1 common key (no communication)."""
        counter = self._zero_counter
        self._zero_counter += 1
        if self.is_helper:
            return self.ring.zeros(shape)
        u0, u1 = zero_shares(self.config.keys["01"], counter, self.ring, shape)
        return u0 if self.role == P0 else u1

    # bookkeeping --------------------------------------------------------

    def reset_counters(self):
        self.rounds = 0
        self.helper_inbound = 0
        for link in self.links.values():
            link.reset_counters()

    def abort(self):
        for link in self.links.values():
            link.abort()

    def close(self):
        for link in self.links.values():
            link.close()


@dataclass
class SessionTranscript:
    """Metered communication of one protocol run."""

    bytes_sent: dict = field(default_factory=dict)
    messages_sent: dict = field(default_factory=dict)
    rounds: int = 0
    wall_time: float = 0.0

    @property
    def total_bytes(self) -> int:
        return sum(self.bytes_sent.values())

    @property
    def total_messages(self) -> int:
        return sum(self.messages_sent.values())

    @property
    def megabytes(self) -> float:
        return self.total_bytes / 1e6

    def comm_signature(self):
        """Everything that must be identical across runs of the same shape."""
        return (tuple(sorted(self.bytes_sent.items())), tuple(sorted(self.messages_sent.items())), self.rounds)


def collect_transcript(parties, wall_time) -> SessionTranscript:
    t = SessionTranscript(wall_time=wall_time)
    for p in parties:
        for peer, link in sorted(p.links.items()):
            key = f"P{p.role}->P{peer}"
            t.bytes_sent[key] = link.bytes_sent
            t.messages_sent[key] = link.messages_sent
    primaries = [p for p in parties if not p.is_helper]
    rounds = {p.rounds for p in primaries}
    if len(rounds) > 1:
        raise ProtocolError(f"primaries disagree on round count: {sorted(rounds)}")
    t.rounds = rounds.pop() if rounds else 0
    return t


@dataclass
class SessionResult:
    outputs: tuple
    transcript: SessionTranscript


class Session:
    """Three party handles whose programs run on concurrent threads."""

    def __init__(self, config: ProtocolConfig, parties):
        self.config = config
        self.parties = parties
        self._dirty = False
        self._epoch = 0

    def run(self, program, inputs0, inputs1, declared_rounds=None) -> SessionResult:
        """Run ``program(party, *inputs)`` on all three parties.

        ``inputs0``/``inputs1`` are tuples of share arrays for P0/P1; P2 gets
        zero placeholders of the same shapes.
        """
        inputs0, inputs1 = tuple(inputs0), tuple(inputs1)
        if len(inputs0) != len(inputs1):
            raise UsageError("both primaries need the same number of inputs")
        for a, b in zip(inputs0, inputs1):
            if np.shape(a) != np.shape(b):
                raise UsageError(f"share shapes differ: {np.shape(a)} vs {np.shape(b)}")
        inputs2 = tuple(self.parties[P2].placeholder(np.shape(a)) for a in inputs0)
        per_party = (inputs0, inputs1, inputs2)
        for p in self.parties:
            p.reset_counters()
            p.begin(self._epoch)
            if self._dirty:
                for link in p.links.values():
                    link.drain()
        self._dirty = False
        self._epoch += 1

        results = [None, None, None]
        errors: list = [None, None, None]

        def target(p):
            try:
                results[p.role] = program(p, *per_party[p.role])
            except BaseException as exc:  # noqa: BLE001 - re-raised below
                errors[p.role] = exc
                self._dirty = True
                for q in self.parties:
                    q.abort()

        start = time.perf_counter()
        threads = [threading.Thread(target=target, args=(p,), name=f"party-P{p.role}") for p in self.parties]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        elapsed = time.perf_counter() - start

        real = [e for e in errors if e is not None and not isinstance(e, SessionAborted)]
        if real or any(errors):
            raise (real or [e for e in errors if e is not None])[0]
        transcript = collect_transcript(self.parties, elapsed)
        if declared_rounds is not None and transcript.rounds != declared_rounds:
            raise ProtocolError(f"protocol declared {declared_rounds} rounds but used {transcript.rounds}")
        return SessionResult((results[P0], results[P1]), transcript)

    def close(self):
        for p in self.parties:
            p.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def start_local_session(config: ProtocolConfig | None = None) -> Session:
    """Three in-process parties wired P0-P1, P0-P2, P1-P2."""
    config = (config or ProtocolConfig()).validate()
    links = {P0: {}, P1: {}, P2: {}}
    for a, b in ((P0, P1), (P0, P2), (P1, P2)):
        la, lb = local_pair(a, b)
        links[a][b] = la
        links[b][a] = lb
    return Session(config, [Party(r, config, links[r]) for r in (P0, P1, P2)])


# networked parties ----------------------------------------------------------

_HELLO = struct.Struct("<BBHHH16s")


def _hello_payload(config, role, protocol):
    return _HELLO.pack(
        PROTOCOL_VERSION, role, config.ring_bits, config.frac_bits, config.int_bits, protocol.encode()[:16]
    )


def _handshake(sock, config, role, protocol, expect_role=None, timeout=30.0) -> int:
    """Exchange session parameters; returns the peer's role."""
    link = TcpLink(role, -1, sock)
    link.send_frame(encode_frame(TAG_HELLO, config.ring_bits, _hello_payload(config, role, protocol)))
    tag, width, payload = link.recv_frame(timeout=timeout)
    link.flush()
    if tag != TAG_HELLO or len(payload) != _HELLO.size:
        raise HandshakeError("peer did not send a valid hello")
    version, peer_role, l, f, m, proto = _HELLO.unpack(payload)
    proto = proto.rstrip(b"\0").decode(errors="replace")
    mine = (PROTOCOL_VERSION, config.ring_bits, config.frac_bits, config.int_bits, protocol)
    theirs = (version, l, f, m, proto)
    if mine != theirs:
        names = ("version", "ring", "precision", "int-bits", "protocol")
        diff = ", ".join(f"{n}: ours={a} theirs={b}" for n, a, b in zip(names, mine, theirs) if a != b)
        raise HandshakeError(f"P{role} and P{peer_role} disagree on session parameters ({diff})", peer=peer_role)
    if expect_role is not None and peer_role != expect_role:
        raise HandshakeError(f"expected P{expect_role} but P{peer_role} connected", peer=peer_role)
    return peer_role


def start_network_party(
    config: ProtocolConfig,
    role: int,
    peer0,
    peer1,
    protocol: str = "",
    listener: socket.socket | None = None,
    timeout: float = 30.0,
) -> Party:
    """Join a TCP session as ``role``.

    P0 listens on ``peer0``; P1 listens on ``peer1`` and dials P0; P2 dials
    both. ``listener`` may supply an already-bound socket for P0 or P1.
    """
    config = config.validate()
    socks: dict[int, socket.socket] = {}
    try:
        if role in (P1, P2):
            s = connect(peer0, role, P0, timeout)
            _handshake(s, config, role, protocol, expect_role=P0, timeout=timeout)
            socks[P0] = s
        if role == P2:
            s = connect(peer1, role, P1, timeout)
            _handshake(s, config, role, protocol, expect_role=P1, timeout=timeout)
            socks[P1] = s
        if role in (P0, P1):
            srv = listener or listen(peer0 if role == P0 else peer1)
            srv.settimeout(timeout)
            wanted = {P1, P2} if role == P0 else {P2}
            try:
                while wanted:
                    try:
                        s, _ = srv.accept()
                    except socket.timeout:
                        missing = ", ".join(f"P{w}" for w in sorted(wanted))
                        raise TransportError(f"P{role} timed out waiting for {missing}", peer=min(wanted)) from None
                    peer_role = _handshake(s, config, role, protocol, timeout=timeout)
                    if peer_role not in wanted:
                        s.close()
                        raise HandshakeError(f"unexpected connection from P{peer_role}", peer=peer_role)
                    wanted.discard(peer_role)
                    socks[peer_role] = s
            finally:
                srv.close()
    except BaseException:
        for s in socks.values():
            s.close()
        raise
    links = {peer: TcpLink(role, peer, s) for peer, s in socks.items()}
    return Party(role, config, links)


def start_tcp_session(config: ProtocolConfig | None = None, host: str = "127.0.0.1", protocol: str = "") -> Session:
    """Three parties on loopback TCP inside this process (one thread each during setup)."""
    config = (config or ProtocolConfig()).validate()
    l0, l1 = listen((host, 0)), listen((host, 0))
    a0 = (host, l0.getsockname()[1])
    a1 = (host, l1.getsockname()[1])
    parties: list = [None, None, None]
    errors: list = []

    def join(role):
        try:
            parties[role] = start_network_party(
                config, role, a0, a1, protocol=protocol, listener={P0: l0, P1: l1}.get(role)
            )
        except BaseException as exc:  # noqa: BLE001
            errors.append(exc)

    threads = [threading.Thread(target=join, args=(r,)) for r in (P0, P1, P2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        for p in parties:
            if p is not None:
                p.close()
        raise errors[0]
    return Session(config, parties)


def run_network_party(party: Party, program, *inputs):
    """Run one role of a networked session; returns (output, transcript of this party's sends).

    The helper must be given zero placeholders of the input shapes.
    """
    party.reset_counters()
    start = time.perf_counter()
    try:
        out = program(party, *inputs)
    except BaseException:
        party.abort()
        raise
    elapsed = time.perf_counter() - start
    for link in party.links.values():
        if isinstance(link, TcpLink):
            link.flush()
    return out, collect_transcript([party], elapsed)


__all__ = [
    "P0",
    "P1",
    "P2",
    "HELPER",
    "HEADER_SIZE",
    "Party",
    "Session",
    "SessionResult",
    "SessionTranscript",
    "start_local_session",
    "start_network_party",
    "start_tcp_session",
    "run_network_party",
]

import socket
import threading

import numpy as np
import pytest

from expmpc.config import ProtocolConfig, max_divisor, max_exp_input
from expmpc.errors import ConfigError, HandshakeError, ProtocolError, TransportError, UsageError
from expmpc.party import P0, P1, P2, start_local_session, start_network_party, start_tcp_session
from expmpc.primitives import mul
from expmpc.protocols import run_shares, secure_eval, share_reals
from expmpc.transport import HEADER_SIZE, TAG_DEAL, TAG_OPEN, decode_header, encode_frame


def test_frame_of_four_64_bit_elements_is_44_bytes():
    payload = np.arange(4, dtype="<u8").tobytes()
    frame = encode_frame(TAG_OPEN, 64, payload)
    assert HEADER_SIZE == 12
    assert len(frame) == 44
    assert decode_header(frame[:12]) == (TAG_OPEN, 64, 32)


def test_frame_header_rejects_unknown_width_code():
    bad = bytes([TAG_OPEN, 7, 0, 0]) + (0).to_bytes(8, "little")
    with pytest.raises(ProtocolError):
        decode_header(bad)


def test_single_open_is_metered_exactly(sess64):
    def program(p, x):
        if p.is_helper:
            return x
        (y,) = p.open(x)
        return y

    x = np.zeros(4, dtype=np.uint64)
    res = sess64.run(program, [x], [x])
    t = res.transcript
    assert t.bytes_sent["P0->P1"] == 44 and t.bytes_sent["P1->P0"] == 44
    assert t.rounds == 1
    assert t.messages_sent["P0->P1"] == 1


def test_helper_never_receives(sess64):
    rng = np.random.default_rng(0)
    _, t = secure_eval(sess64, "sigmoid", rng.uniform(0, 4, 8), rng=rng)
    assert t.bytes_sent["P0->P2"] == 0 and t.bytes_sent["P1->P2"] == 0
    assert t.bytes_sent["P2->P0"] == 0
    assert t.bytes_sent["P2->P1"] > 0
    assert all(p.helper_inbound == 0 for p in sess64.parties)


def test_audit_hook_blocks_unmasked_sends_to_helper(sess64):
    def program(p, x):
        if p.role == P0:
            p.send(P2, TAG_OPEN, x)
        return x

    x = np.zeros(2, dtype=np.uint64)
    with pytest.raises(ProtocolError, match="unmasked"):
        sess64.run(program, [x], [x])


def test_wrong_tag_is_a_protocol_error(sess64):
    def program(p, x):
        if p.role == P0:
            p.send(P1, TAG_DEAL, x)
        elif p.role == P1:
            p.recv(P0, TAG_OPEN, x.shape)
        return x

    x = np.zeros(2, dtype=np.uint64)
    with pytest.raises(ProtocolError, match="expected open"):
        sess64.run(program, [x], [x])


def test_failure_in_one_party_aborts_the_others(sess64):
    def program(p, x):
        if p.role == P1:
            raise RuntimeError("boom")
        if p.role == P0:
            p.open(x)
        return x

    x = np.zeros(2, dtype=np.uint64)
    with pytest.raises(RuntimeError, match="boom"):
        sess64.run(program, [x], [x])
    # leftover frames are drained and the random streams re-aligned
    out, _ = secure_eval(sess64, "exp", [1.0, 2.0], rng=np.random.default_rng(0))
    assert np.allclose(out, np.exp([1.0, 2.0]), rtol=1e-2)


def test_declared_round_mismatch_raises(sess64):
    x = np.zeros(3, dtype=np.uint64)
    with pytest.raises(ProtocolError, match="declared"):
        sess64.run(mul, [x, x], [x, x], declared_rounds=2)


def test_outputs_rerandomised_across_seeds():
    x = np.full(4, 1.5)
    outs = []
    for seed in (1, 2):
        s = start_local_session(ProtocolConfig(seed=seed))
        a, b = share_reals(s.config, x, np.random.default_rng(9))
        res = run_shares(s, "sigmoid", [a], [b])
        outs.append(res.outputs[0])
    assert not np.array_equal(outs[0], outs[1])


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(ring_bits=32),
        dict(frac_bits=0),
        dict(frac_bits=40),
        dict(int_bits=0),
        dict(int_bits=6),
        dict(transport="carrier-pigeon"),
    ],
)
def test_invalid_configs(kwargs):
    with pytest.raises(ConfigError):
        ProtocolConfig(**kwargs).validate()


def test_int_bits_six_needs_the_wide_ring():
    with pytest.raises(ConfigError):
        ProtocolConfig(int_bits=6).validate()
    ProtocolConfig(int_bits=6, ring_bits=128).validate()
    with pytest.raises(ConfigError):
        ProtocolConfig(int_bits=7, ring_bits=128).validate()


def test_domain_bounds():
    c64, c128 = ProtocolConfig(), ProtocolConfig(ring_bits=128)
    assert 11.7 < max_exp_input(c64) < 11.8
    assert max_exp_input(c128) == 32.0
    assert max_exp_input(ProtocolConfig(int_bits=3)) == 8.0
    assert max_divisor(c64) == 2.0**25 - 1


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_unreachable_peer_names_the_peer():
    addr = f"127.0.0.1:{_free_port()}"
    with pytest.raises(TransportError) as info:
        start_network_party(ProtocolConfig(), P1, addr, f"127.0.0.1:{_free_port()}", timeout=0.5)
    assert info.value.peer == P0
    assert "P0" in str(info.value)


def test_handshake_mismatch_aborts():
    port0 = _free_port()
    errors = {}

    def run(role, cfg):
        try:
            start_network_party(cfg, role, f"127.0.0.1:{port0}", f"127.0.0.1:{_free_port()}", timeout=3).close()
        except Exception as exc:  # noqa: BLE001
            errors[role] = exc

    t0 = threading.Thread(target=run, args=(P0, ProtocolConfig(frac_bits=13)))
    t1 = threading.Thread(target=run, args=(P1, ProtocolConfig(frac_bits=12)))
    t0.start()
    t1.start()
    t0.join()
    t1.join()
    assert isinstance(errors[P1], HandshakeError)
    assert "precision" in str(errors[P1])
    assert isinstance(errors[P0], TransportError)


def test_tcp_and_local_transcripts_match():
    cfg = ProtocolConfig(seed=5)
    x = np.random.default_rng(3).uniform(0, 4, 12)
    local = start_local_session(cfg)
    tcp = start_tcp_session(cfg)
    try:
        ya, ta = secure_eval(local, "exp", x, rng=np.random.default_rng(1))
        yb, tb = secure_eval(tcp, "exp", x, rng=np.random.default_rng(1))
    finally:
        tcp.close()
    assert np.array_equal(ya, yb)
    assert ta.comm_signature() == tb.comm_signature()


def test_primaries_only_role_checks(sess64):
    p2 = sess64.parties[P2]
    with pytest.raises(UsageError):
        p2.open(np.zeros(1, dtype=np.uint64))
    p1 = sess64.parties[P1]
    with pytest.raises(UsageError):
        p1.deal(np.zeros(1, dtype=np.uint64))

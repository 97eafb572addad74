import math

import numpy as np
import pytest
from conftest import evaluate
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from expmpc.activations import ROUNDS, exp, exp_table, valid_domain
from expmpc.config import ProtocolConfig
from expmpc.errors import RangeError, UsageError
from expmpc.oracle import TOLERANCES, fixed_oracle, real_oracle
from expmpc.party import start_local_session
from expmpc.protocols import run_shares, share_reals

ULP = 2.0**-13
PROPS = settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])

# fixed-point oracle outputs, frozen (identical for l = 64 and l = 128)
FROZEN = {
    "taylor_exp": ([0.0, 0.5, 0.999], [1.0, 1.6483154296875, 2.7052001953125]),
    "exp": ([0.0, 1.0, 2.5, 7.5], [1.0, 2.71826171875, 12.179443359375, 1807.5782470703125]),
    "sigmoid": ([0.0, 1.0, 4.0], [0.5, 0.73095703125, 0.98193359375]),
    "d_sigmoid": ([0.0, 1.0], [0.25, 0.1966552734375]),
    "tanh": ([0.0, 0.5, 2.0], [0.0, 0.4619140625, 0.9638671875]),
    "d_tanh": ([0.0, 1.0], [1.0, 0.419921875]),
}


def within(name, got, expected):
    tol = TOLERANCES[name]
    return np.all(np.abs(np.asarray(got) - np.asarray(expected)) <= tol.bound(np.asarray(expected)))


@pytest.mark.parametrize("name", sorted(FROZEN))
def test_frozen_oracle_values(name):
    x, frozen = FROZEN[name]
    ref = "taylor5" if name == "taylor_exp" else name
    assert fixed_oracle(ref, x).tolist() == frozen


@pytest.mark.parametrize("sess", ["sess64", "sess128"])
@pytest.mark.parametrize("name", sorted(FROZEN))
def test_protocol_tracks_frozen_values(sess, name, request):
    session = request.getfixturevalue(sess)
    x, frozen = FROZEN[name]
    got = evaluate(session, name, x)
    assert within(name, got, frozen), (got, frozen)


@pytest.mark.parametrize("sess", ["sess64", "sess128"])
def test_fixed_points_at_zero(sess, request):
    session = request.getfixturevalue(sess)
    assert abs(evaluate(session, "exp", [0.0])[0] - 1.0) <= 2 * ULP
    assert abs(evaluate(session, "sigmoid", [0.0])[0] - 0.5) <= 0.005
    assert abs(evaluate(session, "d_sigmoid", [0.0])[0] - 0.25) <= 0.005
    assert abs(evaluate(session, "tanh", [0.0])[0]) <= 8 * ULP
    assert abs(evaluate(session, "d_tanh", [0.0])[0] - 1.0) <= 0.02


def test_taylor_half(sess64):
    assert abs(evaluate(sess64, "taylor_exp", [0.5])[0] - 1.6484375) <= 8 * ULP


def test_exp_table():
    fp = ProtocolConfig().fixed
    table = exp_table(fp, 5)
    assert table[0] == math.floor(math.e * 8192)
    assert table[4] == math.floor(math.exp(16) * 8192)


def test_exp_factors(sess64):
    cfg = sess64.config
    fp, R = cfg.fixed, cfg.ring
    x = np.array([0.0, 1.25, 2.5, 5.75, 11.5])
    a, b = share_reals(cfg, x, np.random.default_rng(0))
    parts = {0: {}, 1: {}, 2: {}}
    sess64.run(lambda p, v: exp(p, v, parts=parts[p.role]), [a], [b])
    whole = fp.decode(R.add(parts[0]["integer"], parts[1]["integer"]))
    frac = fp.decode(R.add(parts[0]["fraction"], parts[1]["fraction"]))
    assert np.allclose(whole, np.exp(np.floor(x)), rtol=1e-3)
    assert np.all(np.abs(frac - real_oracle("taylor5", x - np.floor(x))) <= 8 * ULP)


@pytest.mark.parametrize("name", ["sigmoid", "d_sigmoid", "tanh", "d_tanh", "exp", "taylor_exp", "softmax"])
def test_declared_rounds_hold(sess64, name):
    cfg = sess64.config
    x = np.full((2, 3), 0.5)
    a, b = share_reals(cfg, x, np.random.default_rng(0))
    res = run_shares(sess64, name, [a], [b])
    assert res.transcript.rounds == ROUNDS[name](cfg)


def test_sigmoid_round_count_values():
    assert ROUNDS["exp"](ProtocolConfig()) == 30
    assert ROUNDS["sigmoid"](ProtocolConfig()) == 1720
    assert ROUNDS["sigmoid"](ProtocolConfig(ring_bits=128)) == 3384


def _pair_runs(cfg, first, second, x, scale):
    """Run ``first`` on x and ``second`` on scale*x (scaled shares) in twin sessions."""
    R = cfg.ring
    a, b = share_reals(cfg, x, np.random.default_rng(11))
    r1 = run_shares(start_local_session(cfg), first, [a], [b])
    r2 = run_shares(start_local_session(cfg), second, [R.scale(a, scale)], [R.scale(b, scale)])
    return R.add(*r1.outputs), R.add(*r2.outputs)


@pytest.mark.parametrize("l", [64, 128])
def test_d_tanh_is_four_d_sigmoid_of_2x_exactly(l):
    cfg = ProtocolConfig(ring_bits=l, seed=3)
    R = cfg.ring
    x = np.linspace(0, 4, 9)
    dt, ds = _pair_runs(cfg, "d_tanh", "d_sigmoid", x, 2)
    assert np.array_equal(R.to_int(dt), R.to_int(R.scale(ds, 4)))


def test_tanh_is_two_sigmoid_of_2x_minus_one_exactly():
    cfg = ProtocolConfig(seed=4)
    R = cfg.ring
    th, sg = _pair_runs(cfg, "tanh", "sigmoid", np.linspace(0, 4, 9), 2)
    expect = R.sub(R.scale(sg, 2), R.const(cfg.fixed.one))
    assert np.array_equal(th, expect)


def test_softmax_sums_to_one_and_is_permutation_equivariant(sess64):
    z = np.array([[0.5, 2.0, 1.0, 3.5]])
    perm = [2, 0, 3, 1]
    a = evaluate(sess64, "softmax", z)
    b = evaluate(sess64, "softmax", z[:, perm])
    assert abs(a.sum() - 1) <= 0.01
    assert np.all(np.abs(a[:, perm] - b) <= 4 * ULP)
    assert within("softmax", a, real_oracle("softmax", z))


def test_softmax_rows_independent(sess64):
    z = np.array([[0.0, 1.0], [2.0, 2.0], [0.0, 5.0]])
    got = evaluate(sess64, "softmax", z)
    assert within("softmax", got, real_oracle("softmax", z))


def test_softmax_needs_classes(sess64):
    with pytest.raises(UsageError):
        evaluate(sess64, "softmax", np.zeros((2, 0)))


@pytest.mark.parametrize("name", ["sigmoid", "d_sigmoid", "tanh", "d_tanh", "exp"])
@PROPS
@given(data=st.data())
def test_random_points_within_tolerance(sess64, name, data):
    lo, hi = valid_domain(name, sess64.config)
    xs = data.draw(st.lists(st.floats(min_value=lo, max_value=hi, exclude_max=True), min_size=1, max_size=6))
    got = evaluate(sess64, name, xs)
    assert within(name, got, real_oracle(name, xs))


@PROPS
@given(st.lists(st.floats(min_value=0, max_value=1, exclude_max=True), min_size=1, max_size=6))
def test_taylor_matches_fixed_oracle(sess64, xs):
    got = evaluate(sess64, "taylor_exp", xs)
    assert np.all(np.abs(got - fixed_oracle("taylor5", xs)) <= 8 * ULP)


@PROPS
@given(st.lists(st.floats(min_value=0, max_value=3.5), min_size=2, max_size=5))
def test_softmax_sum_property(sess64, zs):
    got = evaluate(sess64, "softmax", [zs])
    assert abs(got.sum() - 1.0) <= 0.01
    assert np.all(got >= 0)


def test_valid_domains():
    c64, c128 = ProtocolConfig(), ProtocolConfig(ring_bits=128)
    assert valid_domain("taylor_exp", c64) == (0.0, 1.0)
    assert valid_domain("exp", c64)[1] == pytest.approx(11.7835, abs=1e-3)
    assert valid_domain("exp", c128)[1] == 32.0
    assert valid_domain("tanh", c64)[1] == pytest.approx(valid_domain("sigmoid", c64)[1] / 2)
    assert valid_domain("softmax", c64, classes=10)[1] <= valid_domain("softmax", c64)[1]
    with pytest.raises(UsageError):
        valid_domain("relu", c64)


def test_secure_eval_rejects_out_of_domain(sess64):
    with pytest.raises(RangeError, match="outside"):
        evaluate(sess64, "sigmoid", [-0.5])
    with pytest.raises(RangeError):
        evaluate(sess64, "exp", [12.0])
    with pytest.raises(RangeError):
        evaluate(sess64, "taylor_exp", [1.0])

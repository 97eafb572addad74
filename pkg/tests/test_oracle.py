import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from expmpc.activations import exp_table
from expmpc.errors import RangeError, UsageError
from expmpc.oracle import TOLERANCE_VERSION, TOLERANCES, Tolerance, compare_runs, fixed_oracle, real_oracle
from expmpc.ring import FixedPoint

ULP = 2.0**-13


def test_real_examples():
    assert real_oracle("taylor5", [0.5])[0] == 1.6484375
    assert real_oracle("taylorExp", [0.5])[0] == 1.6484375
    assert real_oracle("sigmoid", [0.0])[0] == 0.5
    assert np.allclose(real_oracle("softmax", [[1.0, 1.0, 1.0]]), 1 / 3)
    assert real_oracle("d_tanh", [0.0])[0] == 1.0
    assert real_oracle("division", [1.0], divisors=[4.0])[0] == 0.25


def test_unknown_function():
    with pytest.raises(UsageError):
        real_oracle("relu", [1.0])
    with pytest.raises(UsageError):
        fixed_oracle("relu", [1.0])


def test_division_needs_divisors():
    with pytest.raises(UsageError):
        real_oracle("division", [1.0])


def test_fixed_taylor_half():
    assert abs(fixed_oracle("taylor5", [0.5])[0] - 1.6484375) <= 5 * ULP


def test_fixed_exp_is_table_times_taylor():
    fp = FixedPoint()
    e2 = exp_table(fp, 2)[1]
    t = int(fixed_oracle("taylor5", [0.5])[0] * fp.scale)
    expect = e2 * t / fp.scale**2
    assert abs(fixed_oracle("exp", [2.5])[0] - expect) <= 5 * ULP


def test_fixed_overflow_raises():
    with pytest.raises(RangeError):
        fixed_oracle("exp", [40.0], params=FixedPoint(13, 64), int_bits=6)
    with pytest.raises(RangeError):
        fixed_oracle("exp", [-1.0])
    # integer part beyond m bits
    with pytest.raises(RangeError):
        fixed_oracle("exp", [9.0], int_bits=3)


def test_fixed_exp_wide_ring_handles_m6():
    got = fixed_oracle("exp", [40.0], params=FixedPoint(13, 128), int_bits=6)[0]
    assert abs(got / math.exp(40) - 1) < 0.01


def test_fixed_division_exact_floor():
    got = fixed_oracle("division", [1.0, 6.0], divisors=[3.0, 3.0])
    assert got.tolist() == [math.floor(8192 / 3) / 8192, 2.0]


@given(st.lists(st.floats(min_value=0, max_value=1, exclude_max=True), min_size=1, max_size=20))
def test_fixed_taylor_close_to_series(xs):
    # three truncating products plus three public divisions plus input encoding
    err = np.abs(fixed_oracle("taylor5", xs) - real_oracle("taylor5", xs))
    assert np.all(err <= 8 * ULP)


@given(st.lists(st.floats(min_value=0, max_value=8, exclude_max=True), min_size=1, max_size=10))
def test_fixed_exp_relative_error(xs):
    got = fixed_oracle("exp", xs, int_bits=3)
    assert np.all(np.abs(got / np.exp(xs) - 1) <= 0.01)


@given(st.lists(st.floats(min_value=0, max_value=10), min_size=1, max_size=10))
def test_fixed_sigmoid_within_tolerance(xs):
    got = fixed_oracle("sigmoid", xs)
    exp_ = real_oracle("sigmoid", xs)
    assert np.all(np.abs(got - exp_) <= TOLERANCES["sigmoid"].bound(exp_))


def test_compare_identical_zero_tolerance():
    r = compare_runs([1.0, 2.0], [1.0, 2.0], 0.0)
    assert r.failures == 0 and r.ok


def test_compare_one_off():
    r = compare_runs([1.0, 2.5, 3.0], [1.0, 2.0, 3.0], 0.1)
    assert r.failures == 1 and not r.ok


def test_compare_max_error_by_hand():
    r = compare_runs([1.0, 2.25, 2.5], [1.5, 2.0, 3.0], Tolerance(abs=1.0))
    assert r.max_abs_err == 0.5
    assert r.mean_abs_err == pytest.approx((0.5 + 0.25 + 0.5) / 3)
    assert r.max_rel_err == pytest.approx(1 / 3)
    assert r.failures == 0


def test_compare_relative_tolerance():
    tol = Tolerance(abs=0.0, rel=0.01)
    assert compare_runs([100.5], [100.0], tol).ok
    assert not compare_runs([102.0], [100.0], tol).ok


def test_compare_length_mismatch():
    with pytest.raises(UsageError):
        compare_runs([1.0], [1.0, 2.0], 0.0)


def test_compare_nan_is_failure():
    assert compare_runs([float("nan")], [1.0], 1.0).failures == 1


def test_report_csv_and_summary():
    r = compare_runs([1.0, 2.0], [1.0, 2.5], 0.1, label="demo")
    rows = list(csv.reader(io.StringIO(r.to_csv())))
    assert rows[0] == ["sample", "expected", "got", "abs_err", "rel_err"]
    assert len(rows) == 3
    assert float(rows[2][3]) == 0.5
    assert r.summary().startswith("demo: 2 samples, 1 failures")


@given(
    st.lists(st.floats(min_value=-100, max_value=100), min_size=1, max_size=20),
    st.floats(min_value=0, max_value=1),
)
def test_report_consistency(vals, noise):
    got = np.asarray(vals) + noise
    r = compare_runs(got, vals, 0.5)
    assert r.failures == int(np.sum(r.abs_err > r.bound))
    assert r.max_abs_err == pytest.approx(float(np.max(r.abs_err)))


def test_tolerance_table_is_versioned():
    assert TOLERANCE_VERSION == 1
    assert TOLERANCES["taylor_exp"].abs == 8 * ULP
    assert TOLERANCES["exp"].rel == 0.01
    assert TOLERANCES["d_sigmoid"].rel == 0.02
    assert TOLERANCES["division"].abs == 4 * ULP

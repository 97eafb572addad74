"""Plaintext references for the protocols.

``real_oracle`` evaluates closed forms in double precision. ``fixed_oracle``
replays each protocol on a single machine with exact integers and the same
encoding, truncation and table rules, but with deterministic rounding and no
share noise; unlike the protocols it can see overflow and raises RangeError.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .activations import TAYLOR_TERMS, exp_table
from .errors import RangeError, UsageError
from .ring import FixedPoint

ALIASES = {"taylor_exp": "taylor5", "taylorExp": "taylor5"}
ORACLE_FUNCTIONS = ("taylor5", "exp", "sigmoid", "d_sigmoid", "tanh", "d_tanh", "softmax", "division")

TOLERANCE_VERSION = 1


@dataclass(frozen=True)
class Tolerance:
    """Pass when |got - expected| <= max(abs, rel * |expected|)."""

    abs: float = 0.0
    rel: float = 0.0

    def bound(self, expected):
        return np.maximum(self.abs, self.rel * np.abs(expected))


ULP13 = 2.0**-13

# Versioned acceptance tolerances, in units of the default precision f = 13.
# The absolute floor covers outputs near zero where a relative bound is
# meaningless for fixed-point values.
TOLERANCES = {
    "taylor_exp": Tolerance(abs=8 * ULP13),
    "exp": Tolerance(abs=2 * ULP13, rel=0.01),
    "sigmoid": Tolerance(abs=8 * ULP13, rel=0.01),
    "tanh": Tolerance(abs=8 * ULP13, rel=0.01),
    "softmax": Tolerance(abs=8 * ULP13, rel=0.01),
    "d_sigmoid": Tolerance(abs=8 * ULP13, rel=0.02),
    "d_tanh": Tolerance(abs=8 * ULP13, rel=0.02),
    "division": Tolerance(abs=4 * ULP13),
    "pre_mult": None,  # m ulp, depends on the vector length
}

# which reference each protocol is checked against
REFERENCE_KIND = {"taylor_exp": "fixed"}


def _name(fn_name):
    name = ALIASES.get(fn_name, fn_name)
    if name not in ORACLE_FUNCTIONS:
        raise UsageError(f"unknown oracle function {fn_name!r}; expected one of {', '.join(ORACLE_FUNCTIONS)}")
    return name


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def real_oracle(fn_name: str, inputs, divisors=None) -> np.ndarray:
    """Double-precision closed forms.

    ``taylor5`` is the five-term series itself, not e^x. ``softmax`` works
    along the last axis; ``division`` needs ``divisors``.
    """
    name = _name(fn_name)
    x = np.asarray(inputs, dtype=np.float64)
    if name == "taylor5":
        return sum(x**k / math.factorial(k) for k in range(TAYLOR_TERMS))
    if name == "exp":
        return np.exp(x)
    if name == "sigmoid":
        return _sigmoid(x)
    if name == "d_sigmoid":
        s = _sigmoid(x)
        return s * (1.0 - s)
    if name == "tanh":
        return np.tanh(x)
    if name == "d_tanh":
        return 1.0 - np.tanh(x) ** 2
    if name == "softmax":
        e = np.exp(x - np.max(x, axis=-1, keepdims=True))
        return e / np.sum(e, axis=-1, keepdims=True)
    if divisors is None:
        raise UsageError("division needs divisors")
    return x / np.asarray(divisors, dtype=np.float64)


# ---------------------------------------------------------------------------
# exact fixed-point simulation


class _Sim:
    def __init__(self, fp: FixedPoint, int_bits: int):
        self.fp = fp
        self.f = fp.frac_bits
        self.m = int_bits
        self.limit = 1 << (fp.ring_bits - 1)
        self.one = fp.scale

    def check(self, v, what):
        if not -self.limit <= v < self.limit:
            raise RangeError(f"{what} overflows the {self.fp.ring_bits}-bit ring")
        return v

    def encode(self, x):
        x = float(x)
        if not math.isfinite(x) or abs(x) > self.fp.max_abs:
            raise RangeError(f"{x!r} is outside the fixed-point range")
        return math.floor(x * self.fp.scale)

    def mul(self, a, b):
        return self.check(a * b, "fixed-point product") >> self.f

    def taylor(self, x):
        c = self.one + x
        num, den = x, 1
        for i in range(2, TAYLOR_TERMS):
            num = self.mul(num, x)
            den *= i
            c += num // den
        return c

    def pre_mult(self, vals):
        level = list(vals)
        while len(level) > 1:
            nxt = [self.mul(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
            if len(level) % 2:
                nxt.append(level[-1])
            level = nxt
        return level[0]

    def exp(self, x):
        if x < 0:
            raise RangeError("exponentiation is defined for non-negative inputs only")
        integer = x >> self.f
        if integer >= 1 << self.m:
            raise RangeError(f"integer part {integer} needs more than {self.m} bits")
        fraction = x - (integer << self.f)
        table = exp_table(self.fp, self.m)
        for e in table:
            self.check(e, "exponent table entry")
        sel = [table[i] if (integer >> i) & 1 else self.one for i in range(self.m)]
        return self.mul(self.pre_mult(sel), self.taylor(fraction))

    def div(self, a, b):
        if b <= 0:
            raise RangeError("divisor must be positive")
        self.check(a << self.f, "dividend")
        self.check(b << (2 * self.f - 1), "divisor")
        q = (a << self.f) // b
        if q >= 1 << (2 * self.f):
            raise RangeError("quotient exceeds the long-division bit budget")
        return q

    def sigmoid(self, x):
        e = self.exp(x)
        return self.div(e, e + self.one)

    def d_sigmoid(self, x):
        s = self.sigmoid(x)
        return self.mul(s, self.one - s)


def fixed_oracle(fn_name: str, inputs, params: FixedPoint | None = None, int_bits: int = 5, divisors=None):
    """Deterministic fixed-point replay; returns decoded floats."""
    name = _name(fn_name)
    fp = params or FixedPoint()
    sim = _Sim(fp, int_bits)
    x = np.asarray(inputs, dtype=np.float64)
    raw = np.vectorize(sim.encode, otypes=[object])(x) if x.size else np.asarray(x, dtype=object)

    def each(fn, arr):
        out = np.empty(arr.shape, dtype=object)
        for idx in np.ndindex(arr.shape):
            out[idx] = fn(int(arr[idx]))
        return out

    if name == "taylor5":
        res = each(sim.taylor, raw)
    elif name == "exp":
        res = each(sim.exp, raw)
    elif name == "sigmoid":
        res = each(sim.sigmoid, raw)
    elif name == "d_sigmoid":
        res = each(sim.d_sigmoid, raw)
    elif name == "tanh":
        res = each(lambda v: 2 * sim.sigmoid(2 * v) - sim.one, raw)
    elif name == "d_tanh":
        res = each(lambda v: 4 * sim.d_sigmoid(2 * v), raw)
    elif name == "softmax":
        es = each(sim.exp, raw)
        res = np.empty(raw.shape, dtype=object)
        for idx in np.ndindex(raw.shape[:-1]):
            row = es[idx]
            total = sum(int(v) for v in row)
            res[idx] = [sim.div(int(v), total) for v in row]
    else:
        if divisors is None:
            raise UsageError("division needs divisors")
        yraw = np.vectorize(sim.encode, otypes=[object])(np.asarray(divisors, dtype=np.float64))
        res = np.empty(raw.shape, dtype=object)
        for idx in np.ndindex(raw.shape):
            res[idx] = sim.div(int(raw[idx]), int(yraw[idx]))
    for v in res.flat:
        sim.check(v, "result")
    return np.vectorize(lambda v: v / fp.scale, otypes=[np.float64])(res) if res.size else res.astype(np.float64)


# ---------------------------------------------------------------------------
# comparison reports


@dataclass
class OracleReport:
    expected: np.ndarray
    got: np.ndarray
    abs_err: np.ndarray
    rel_err: np.ndarray
    bound: np.ndarray
    failures: int
    max_abs_err: float
    mean_abs_err: float
    max_rel_err: float
    label: str = ""

    @property
    def ok(self) -> bool:
        return self.failures == 0

    def rows(self):
        for i, (e, g, a, r) in enumerate(zip(self.expected, self.got, self.abs_err, self.rel_err)):
            yield i, e, g, a, r

    def to_csv(self, out=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample", "expected", "got", "abs_err", "rel_err"])
        for i, e, g, a, r in self.rows():
            w.writerow([i, repr(float(e)), repr(float(g)), repr(float(a)), repr(float(r))])
        text = buf.getvalue()
        if out is not None:
            out.write(text)
        return text

    def summary(self) -> str:
        head = f"{self.label}: " if self.label else ""
        return (
            f"{head}{len(self.expected)} samples, {self.failures} failures, "
            f"max abs err {self.max_abs_err:.3g}, mean abs err {self.mean_abs_err:.3g}, "
            f"max rel err {self.max_rel_err:.3g}"
        )


def compare_runs(got, expected, tolerance, label: str = "") -> OracleReport:
    """Element-wise comparison; ``tolerance`` is a Tolerance or an absolute float."""
    got = np.asarray(got, dtype=np.float64).reshape(-1)
    expected = np.asarray(expected, dtype=np.float64).reshape(-1)
    if got.shape != expected.shape:
        raise UsageError(f"length mismatch: {got.size} outputs vs {expected.size} references")
    tol = tolerance if isinstance(tolerance, Tolerance) else Tolerance(abs=float(tolerance))
    abs_err = np.abs(got - expected)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        rel_err = np.where(expected != 0, abs_err / np.abs(expected), np.where(abs_err == 0, 0.0, np.inf))
    bound = tol.bound(expected)
    failures = int(np.count_nonzero(~(abs_err <= bound)))
    return OracleReport(
        expected=expected,
        got=got,
        abs_err=abs_err,
        rel_err=rel_err,
        bound=bound,
        failures=failures,
        max_abs_err=float(abs_err.max()) if abs_err.size else 0.0,
        mean_abs_err=float(abs_err.mean()) if abs_err.size else 0.0,
        max_rel_err=float(rel_err.max()) if rel_err.size else 0.0,
        label=label,
    )

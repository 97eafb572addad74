"""Exponentiation-based activations as three-party protocols.

All inputs and outputs are fixed-point shares. Exponentiation, and everything
built on it, is defined for non-negative inputs only: the integer part of x
is found by bit decomposition, which has no notion of sign. Negative inputs
are not detected (they are hidden by the sharing) and give garbage.

sigmoid is evaluated as e^x / (1 + e^x), which equals 1 / (1 + e^-x) but needs
only e^x for x >= 0.
"""

from __future__ import annotations

import math

import numpy as np

from .config import ProtocolConfig, max_divisor, max_exp_input
from .errors import UsageError
from .party import Party
from .primitives import (
    add_public,
    bit_decomp,
    div_public,
    division,
    mul_fixed,
    pre_mult,
    rounds_bit_decomp,
    rounds_division,
    rounds_pre_mult,
    rounds_trunc_floor,
    trunc_floor,
)

TAYLOR_TERMS = 5


def exp_table(fp, int_bits: int) -> list[int]:
    """Raw fixed-point encodings of e^(2^i), i = 0 .. int_bits-1."""
    return [math.floor(math.exp(2.0**i) * fp.scale) for i in range(int_bits)]


def taylor_exp(p: Party, x):
    """e^x for shared x in [0, 1) from 1 + x + x^2/2 + x^3/6 + x^4/24.

    Powers of x cost one multiplication each; the factorials are public and
    divide shares locally. The output is re-randomised with a zero share.
    """
    R = p.ring
    c = R.add(p.public(p.fp.one, np.shape(x)), x)
    numerator = x
    denominator = 1
    for i in range(2, TAYLOR_TERMS):
        numerator = mul_fixed(p, numerator, x)
        denominator *= i
        c = R.add(c, div_public(p, numerator, denominator))
    return R.add(c, p.zero_share(np.shape(x)))


def exp(p: Party, x, parts: dict | None = None):
    """e^x for shared x in [0, 2^m) as e^floor(x) * e^frac(x).

    e^floor(x) is the product over the set bits c_i of floor(x) of e^(2^i),
    selected per bit as v_i = e^(2^i) * c_i + (1 - c_i). ``parts``, when
    given, receives the two factors for inspection.
    """
    R, fp = p.ring, p.fp
    shape = np.shape(x)
    m = p.config.int_bits
    integer, integer_fixed = trunc_floor(p, x)
    fraction = R.sub(x, integer_fixed)
    bits = bit_decomp(p, integer, m)
    one = p.public(fp.one, shape)
    selectors = [R.wrap(bits[i] * R.const(e - fp.one) + one) for i, e in enumerate(exp_table(fp, m))]
    whole = pre_mult(p, selectors)
    frac = taylor_exp(p, fraction)
    if parts is not None:
        parts["integer"] = whole
        parts["fraction"] = frac
    return mul_fixed(p, whole, frac)


def sigmoid(p: Party, x):
    """1 / (1 + e^-x), computed as e^x / (1 + e^x) for x >= 0."""
    R = p.ring
    a = exp(p, x)
    b = add_public(p, a, p.fp.one)
    c = division(p, a, b)
    return R.add(c, p.zero_share(np.shape(x)))


def d_sigmoid(p: Party, x):
    """sigmoid(x) * (1 - sigmoid(x))."""
    R = p.ring
    s = sigmoid(p, x)
    t = add_public(p, R.neg(s), p.fp.one)
    return R.add(mul_fixed(p, s, t), p.zero_share(np.shape(x)))


def tanh(p: Party, x):
    """2 * sigmoid(2x) - 1."""
    R = p.ring
    s = sigmoid(p, R.scale(x, 2))
    out = add_public(p, R.scale(s, 2), -p.fp.one)
    return R.add(out, p.zero_share(np.shape(x)))


def d_tanh(p: Party, x):
    """4 * sigmoid'(2x), which equals 1 - tanh(x)^2."""
    R = p.ring
    b = d_sigmoid(p, R.scale(x, 2))
    return R.add(R.scale(b, 4), p.zero_share(np.shape(x)))


def softmax(p: Party, z):
    """e^z_i / sum_j e^z_j along the last axis."""
    R = p.ring
    z = np.asarray(z)
    if z.ndim == 0 or z.shape[-1] == 0:
        raise UsageError("softmax needs at least one class along the last axis")
    c = exp(p, z)
    total = R.sum(c, axis=-1, keepdims=True)
    out = division(p, c, np.broadcast_to(total, c.shape).copy())
    return R.add(out, p.zero_share(z.shape))


# ---------------------------------------------------------------------------
# declared round counts and input domains


def rounds_taylor_exp(cfg: ProtocolConfig) -> int:
    return TAYLOR_TERMS - 2


def rounds_exp(cfg: ProtocolConfig) -> int:
    m = cfg.int_bits
    return rounds_trunc_floor(cfg) + rounds_bit_decomp(m) + rounds_pre_mult(m) + rounds_taylor_exp(cfg) + 1


def rounds_sigmoid(cfg: ProtocolConfig) -> int:
    return rounds_exp(cfg) + rounds_division(cfg)


ROUNDS = {
    "taylor_exp": rounds_taylor_exp,
    "exp": rounds_exp,
    "sigmoid": rounds_sigmoid,
    "d_sigmoid": lambda cfg: rounds_sigmoid(cfg) + 1,
    "tanh": rounds_sigmoid,
    "d_tanh": lambda cfg: rounds_sigmoid(cfg) + 1,
    "softmax": rounds_sigmoid,
}


def valid_domain(name: str, cfg: ProtocolConfig, classes: int = 1) -> tuple[float, float]:
    """Half-open input interval [lo, hi) on which ``name`` is supported for ``cfg``.

    Bounds come from three limits: the bit width of the integer part, the
    truncation safety margin on e^x * 2^2f, and the divisor bound of the
    long division.
    """
    e_hi = max_exp_input(cfg)
    if name == "taylor_exp":
        return 0.0, 1.0
    if name == "exp":
        return 0.0, e_hi
    # the largest divisor is 1 + e^x (sigmoid) or sum of e^z (softmax)
    div_hi = math.log(max_divisor(cfg) / max(classes, 1) - 1.0)
    hi = min(e_hi, div_hi)
    if name in ("sigmoid", "d_sigmoid", "softmax"):
        return 0.0, hi
    if name in ("tanh", "d_tanh"):
        return 0.0, hi / 2
    raise UsageError(f"no domain for {name!r}")

"""Three-party building blocks over additively shared ring arrays.

Every function takes the calling :class:`~expmpc.party.Party` first and runs
identically on P0, P1 and P2; the helper's copies of shared arrays are zero
placeholders and its return values carry shape only.

Correlated randomness comes from P2 acting as a dealer. Openings happen
between P0 and P1 only, and each opening is one communication round.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import UsageError
from .party import P0, P1, Party

# ---------------------------------------------------------------------------
# local operations (no communication)


def truncate(p: Party, x, bits: int):
    """Drop ``bits`` low bits of a shared value, each party on its own share.

    P0 shifts arithmetically; P1 negates, shifts and negates back. The
    reconstruction is floor or ceil of x / 2^bits, except with probability
    about |x| / 2^l when the shares straddle the signed boundary.
    """
    R = p.ring
    if p.role == P0:
        return R.sar(x, bits)
    if p.role == P1:
        return R.neg(R.sar(R.neg(x), bits))
    return x


def div_public(p: Party, x, d: int):
    """Divide a shared value by a public positive integer (within one unit)."""
    if d <= 0:
        raise UsageError(f"public divisor must be positive, got {d}")
    R = p.ring
    if p.role == P0:
        return R.floordiv(x, d)
    if p.role == P1:
        return R.neg(R.floordiv(R.neg(x), d))
    return x


def add_public(p: Party, x, value: int):
    """x + value for a public ring constant (P1 adds it)."""
    return p.ring.add(x, p.public(value, np.shape(x)))


# ---------------------------------------------------------------------------
# multiplication


def _beaver(p: Party, x, y, a, b, c, product=np.multiply):
    R = p.ring
    e, f = p.open(R.sub(x, a), R.sub(y, b))
    z = R.wrap(product(e, b) + product(a, f) + c)
    if p.role == P1:
        z = R.wrap(z + product(e, f))
    return z


def mul(p: Party, x, y):
    """Element-wise product of two shared arrays, no rescaling (one round)."""
    shape = np.shape(x)
    if np.shape(y) != shape:
        raise UsageError(f"element-wise product needs equal shapes, got {shape} and {np.shape(y)}")
    R = p.ring
    a, b = p.correlated(shape, shape)
    if p.is_helper:
        p.deal(R.mul(a, b))
        return p.placeholder(shape)
    (c,) = p.dealt(shape)
    return _beaver(p, x, y, a, b, c)


def mul_fixed(p: Party, x, y):
    """Element-wise fixed-point product, truncated by f bits."""
    return truncate(p, mul(p, x, y), p.fp.frac_bits)


def mat_mul(p: Party, X, Y, fixed: bool = True):
    """Shares of X @ Y using a dealer-supplied matrix triple (one round).

    With ``fixed`` the result is rescaled by f bits, so both operands are
    read as fixed-point; otherwise the product is exact modulo 2^l.
    """
    X, Y = np.asarray(X), np.asarray(Y)
    if X.ndim != 2 or Y.ndim != 2:
        raise UsageError(f"mat_mul needs 2-D operands, got {X.shape} and {Y.shape}")
    if X.shape[1] != Y.shape[0]:
        raise UsageError(f"inner dimensions differ: {X.shape} @ {Y.shape}")
    R = p.ring
    out_shape = (X.shape[0], Y.shape[1])
    A, B = p.correlated(X.shape, Y.shape)
    if p.is_helper:
        p.deal(R.matmul(A, B))
        return p.placeholder(out_shape)
    (C,) = p.dealt(out_shape)
    Z = _beaver(p, X, Y, A, B, C, product=np.matmul)
    return truncate(p, Z, p.fp.frac_bits) if fixed else Z


# ---------------------------------------------------------------------------
# bits


def _bit_decomp(p: Party, a, k: int, top_only: bool):
    R = p.ring
    shape = np.shape(a)
    r, masks = p.correlated(shape, (k - 1,) + shape)
    if p.is_helper:
        rbits = np.stack([R.bit(r, i) for i in range(k)])
        p.deal(rbits, R.mul(rbits[1:], masks))
        return p.placeholder(shape if top_only else (k,) + shape)

    rbits, rmask = p.dealt((k,) + shape, (k - 1,) + shape)
    (c,) = p.open(R.sub(a, r))
    two = R.const(2)
    is_p1 = p.role == P1

    def xor_public(cbit, t):
        # cbit xor t for a public bit and a shared bit
        out = R.wrap(t - two * cbit * t)
        return R.wrap(out + cbit) if is_p1 else out

    c0 = R.bit(c, 0)
    bits = [xor_public(c0, rbits[0])]
    carry = R.wrap(c0 * rbits[0])
    for i in range(1, k):
        ci = R.bit(c, i)
        (e,) = p.open(R.sub(carry, masks[i - 1]))
        # r_i * carry with r_i known to the dealer: e*r_i + r_i*mask_i
        prod = R.wrap(e * rbits[i] + rmask[i - 1])
        t = R.wrap(rbits[i] + carry - two * prod)
        bits.append(xor_public(ci, t))
        if i < k - 1:
            carry = R.wrap(prod + ci * t)
    if top_only:
        return bits[-1]
    return np.stack(bits)


def bit_decomp(p: Party, a, k: int):
    """Shares of the k low bits of a, least significant first: shape (k, *a.shape).

    P2 deals a uniform mask r with shares of its low bits; P0 and P1 open
    c = a - r and add c to the shared bits of r with a ripple-carry adder.
    Each carry is one multiplication, so the cost is k rounds. The result is
    exact for every input; it equals a's binary expansion when a is in [0, 2^k).
    """
    if not 1 <= k <= p.ring.width:
        raise UsageError(f"bit count must be in [1, {p.ring.width}], got {k}")
    return _bit_decomp(p, a, k, top_only=False)


def bits_to_int(p: Party, bits, start: int = 0):
    """Recombine shared bits[start:] into an integer share."""
    R = p.ring
    acc = R.zeros(np.shape(bits)[1:])
    for i in range(start, np.shape(bits)[0]):
        acc = R.add(acc, R.shl(bits[i], i - start))
    return acc


def trunc_floor(p: Party, x):
    """Integer part of a non-negative fixed-point x in [0, 2^m).

    Returns ``(integer_shares, fixed_shares)`` where the first reconstructs
    to floor(x) unscaled and the second to floor(x) * 2^f. The floor is read
    off an exact bit decomposition of the m + f low bits of x.
    """
    f, m = p.fp.frac_bits, p.config.int_bits
    bits = bit_decomp(p, x, m + f)
    integer = bits_to_int(p, bits, start=f)
    return integer, p.ring.shl(integer, f)


def compare_ge(p: Party, a, b):
    """Shares of [a >= b] (as ring 0/1), valid while |a - b| < 2^(l-2)."""
    R = p.ring
    msb = _bit_decomp(p, R.sub(a, b), R.width, top_only=True)
    return R.sub(p.public(1, np.shape(msb)), msb)


# ---------------------------------------------------------------------------
# products and quotients


def pre_mult(p: Party, values):
    """Fixed-point product of a sequence of shared arrays.

    Multiplies along a balanced binary tree, one batched round per level.
    """
    level = list(values)
    if not level:
        raise UsageError("pre_mult needs at least one factor")
    while len(level) > 1:
        half = len(level) // 2
        left = np.stack(level[0:2 * half:2])
        right = np.stack(level[1:2 * half:2])
        nxt = list(mul_fixed(p, left, right))
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def division(p: Party, x, y, quotient_bits: int | None = None):
    """Fixed-point x / y for shared x >= 0 and y > 0 by restoring long division.

    Produces ``quotient_bits`` (default 2f) quotient bits from the top down:
    compare the running remainder with y * 2^i, subtract where it fits. The
    result is floor(x * 2^f / y) in raw units, so exact to within one ulp. A
    divisor below one ulp saturates every quotient bit.
    """
    R = p.ring
    f = p.fp.frac_bits
    nq = 2 * f if quotient_bits is None else quotient_bits
    if np.shape(x) != np.shape(y):
        raise UsageError(f"division needs equal shapes, got {np.shape(x)} and {np.shape(y)}")
    remainder = R.shl(x, f)
    quotient = R.zeros(np.shape(x))
    for i in reversed(range(nq)):
        trial = R.shl(y, i)
        fits = compare_ge(p, remainder, trial)
        remainder = R.sub(remainder, mul(p, fits, trial))
        quotient = R.add(quotient, R.shl(fits, i))
    return quotient


# ---------------------------------------------------------------------------
# declared round counts


def rounds_bit_decomp(k: int) -> int:
    return k


def rounds_compare(width: int) -> int:
    return width


def rounds_trunc_floor(cfg) -> int:
    return cfg.int_bits + cfg.frac_bits


def rounds_pre_mult(n: int) -> int:
    return math.ceil(math.log2(n)) if n > 1 else 0


def rounds_division(cfg, quotient_bits: int | None = None) -> int:
    nq = 2 * cfg.frac_bits if quotient_bits is None else quotient_bits
    return nq * (rounds_compare(cfg.ring_bits) + 1)

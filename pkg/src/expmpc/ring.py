"""Arithmetic in Z_{2^l}, fixed-point encoding and 2-out-of-2 additive sharing.

Ring values are carried in numpy arrays. Widths up to 64 bits use the
matching unsigned dtype, whose arithmetic already wraps modulo 2^l. The
128-bit ring has no native word, so it is held in ``object`` arrays of Python
ints that are masked back into range after every operation.

Protocol code should never apply bare operators to mixed operands; build
public constants with :meth:`Ring.const` and reduce compound expressions with
:meth:`Ring.wrap`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import RangeError, UsageError

SUPPORTED_WIDTHS = (8, 16, 32, 64, 128)

_NATIVE = {
    8: (np.uint8, np.int8),
    16: (np.uint16, np.int16),
    32: (np.uint32, np.int32),
    64: (np.uint64, np.int64),
}

_M64 = (1 << 64) - 1


class Ring:
    """Vectorised arithmetic modulo 2^width."""

    def __init__(self, width: int):
        if width not in SUPPORTED_WIDTHS:
            raise UsageError(f"unsupported ring width {width}")
        self.width = width
        self.modulus = 1 << width
        self.mask = self.modulus - 1
        self.half = 1 << (width - 1)
        self.nbytes = width // 8
        self.native = width in _NATIVE
        if self.native:
            self.dtype = np.dtype(_NATIVE[width][0])
            self.sdtype = np.dtype(_NATIVE[width][1])
        else:
            self.dtype = np.dtype(object)
            self.sdtype = np.dtype(object)

    def __repr__(self):
        return f"Ring({self.width})"

    def __eq__(self, other):
        return isinstance(other, Ring) and other.width == self.width

    def __hash__(self):
        return hash(self.width)

    # construction -------------------------------------------------------

    def const(self, value: int):
        """A public constant reduced into the ring, usable as an operand."""
        value = int(value) & self.mask
        return self.dtype.type(value) if self.native else value

    def wrap(self, a):
        """Reduce the result of a compound expression modulo 2^width."""
        if self.native:
            return a
        # object ufuncs unwrap 0-d results to Python ints; keep arrays
        return np.asarray(np.bitwise_and(a, self.mask), dtype=object)

    def zeros(self, shape=()) -> np.ndarray:
        if self.native:
            return np.zeros(shape, dtype=self.dtype)
        out = np.empty(shape, dtype=object)
        out.fill(0)
        return out

    def from_int(self, values) -> np.ndarray:
        """Python ints (any sign, any size) to ring elements."""
        arr = np.asarray(np.bitwise_and(np.asarray(values, dtype=object), self.mask), dtype=object)
        if self.native:
            return arr.astype(self.dtype)
        return arr

    def to_int(self, a) -> np.ndarray:
        """Unsigned Python-int view (object array)."""
        return np.asarray(a).astype(object)

    def random(self, gen: np.random.Generator, shape=()) -> np.ndarray:
        """Uniform ring elements drawn from ``gen``."""
        n = int(np.prod(shape, dtype=np.int64))
        raw = gen.bit_generator.random_raw(n if self.native else 2 * n)
        if self.native:
            return raw.astype(self.dtype, copy=False).reshape(shape)
        lo = raw[:n].astype(object)
        hi = raw[n:].astype(object)
        return ((hi << 64) | lo).reshape(shape)

    # signed views -------------------------------------------------------

    def signed(self, a) -> np.ndarray:
        """Two's-complement interpretation."""
        a = np.asarray(a)
        if self.native:
            return a.view(self.sdtype)
        return np.where(a >= self.half, a - self.modulus, a)

    def from_signed(self, s) -> np.ndarray:
        s = np.asarray(s)
        if self.native:
            return s.astype(self.sdtype).view(self.dtype)
        return np.asarray(np.mod(s.astype(object), self.modulus), dtype=object)

    # arithmetic ---------------------------------------------------------

    def add(self, a, b):
        return self.wrap(a + b)

    def sub(self, a, b):
        return self.wrap(a - b)

    def mul(self, a, b):
        return self.wrap(a * b)

    def neg(self, a):
        return self.wrap(self.const(0) - a)

    def scale(self, a, k: int):
        """Multiply by a public integer (any sign)."""
        return self.wrap(a * self.const(k))

    def matmul(self, a, b):
        return self.wrap(np.matmul(a, b))

    def sum(self, a, axis=None, keepdims=False):
        if self.native:
            return np.sum(a, axis=axis, dtype=self.dtype, keepdims=keepdims)
        return self.wrap(np.sum(a, axis=axis, keepdims=keepdims))

    def shl(self, a, k: int):
        if self.native:
            return np.left_shift(a, self.dtype.type(k))
        return self.wrap(a << k)

    def sar(self, a, k: int):
        """Arithmetic right shift of the signed interpretation."""
        return self.from_signed(np.right_shift(self.signed(a), k))

    def floordiv(self, a, d: int):
        """Floor division of the signed interpretation by a positive int."""
        return self.from_signed(np.floor_divide(self.signed(a), d))

    def bit(self, a, i: int):
        """Bit ``i`` of each element, as ring elements 0/1."""
        if self.native:
            one = self.dtype.type(1)
            return np.bitwise_and(np.right_shift(a, self.dtype.type(i)), one)
        return np.bitwise_and(np.right_shift(a, i), 1)

    def low_bits(self, a, k: int):
        """Elements reduced modulo 2^k (k <= width)."""
        if k >= self.width:
            return a
        return np.bitwise_and(a, self.const((1 << k) - 1))

    # serialisation ------------------------------------------------------

    def to_bytes(self, a) -> bytes:
        """Little-endian, exactly width/8 bytes per element."""
        a = np.asarray(a)
        if self.native:
            return a.astype(self.dtype.newbyteorder("<"), copy=False).tobytes()
        flat = a.reshape(-1)
        lo = np.bitwise_and(flat, _M64).astype(np.uint64)
        hi = np.right_shift(flat, 64).astype(np.uint64)
        return np.stack([lo, hi], axis=-1).astype("<u8", copy=False).tobytes()

    def from_bytes(self, buf, shape=None) -> np.ndarray:
        if len(buf) % self.nbytes:
            raise UsageError(f"buffer of {len(buf)} bytes is not a whole number of {self.width}-bit elements")
        if self.native:
            out = np.frombuffer(buf, dtype=self.dtype.newbyteorder("<")).astype(self.dtype)
        else:
            words = np.frombuffer(buf, dtype="<u8").reshape(-1, 2)
            out = (words[:, 1].astype(object) << 64) | words[:, 0].astype(object)
        if shape is not None:
            out = out.reshape(shape)
        return out


@lru_cache(maxsize=None)
def get_ring(width: int) -> Ring:
    return Ring(width)


@dataclass(frozen=True)
class RingElement:
    """A single element of Z_{2^width}."""

    value: int
    width: int = 64

    def __post_init__(self):
        if self.width not in SUPPORTED_WIDTHS:
            raise UsageError(f"unsupported ring width {self.width}")
        object.__setattr__(self, "value", int(self.value) % (1 << self.width))

    def _check(self, other):
        if isinstance(other, RingElement):
            if other.width != self.width:
                raise UsageError(f"cannot mix Z_2^{self.width} and Z_2^{other.width}")
            return other.value
        if isinstance(other, (int, np.integer)):
            return int(other)
        return NotImplemented

    def __add__(self, other):
        v = self._check(other)
        return NotImplemented if v is NotImplemented else RingElement(self.value + v, self.width)

    __radd__ = __add__

    def __sub__(self, other):
        v = self._check(other)
        return NotImplemented if v is NotImplemented else RingElement(self.value - v, self.width)

    def __rsub__(self, other):
        v = self._check(other)
        return NotImplemented if v is NotImplemented else RingElement(v - self.value, self.width)

    def __mul__(self, other):
        v = self._check(other)
        return NotImplemented if v is NotImplemented else RingElement(self.value * v, self.width)

    __rmul__ = __mul__

    def __neg__(self):
        return RingElement(-self.value, self.width)

    @property
    def signed(self) -> int:
        return self.value - (1 << self.width) if self.value >> (self.width - 1) else self.value

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(self.width // 8, "little")

    @classmethod
    def from_bytes(cls, data: bytes, width: int = 64) -> "RingElement":
        if len(data) != width // 8:
            raise UsageError(f"expected {width // 8} bytes, got {len(data)}")
        return cls(int.from_bytes(data, "little"), width)


# fixed point --------------------------------------------------------------


@dataclass(frozen=True)
class FixedPoint:
    """Fixed-point codec: a real x is stored as floor(x * 2^frac_bits) mod 2^ring_bits."""

    frac_bits: int = 13
    ring_bits: int = 64

    def __post_init__(self):
        if self.ring_bits not in SUPPORTED_WIDTHS:
            raise UsageError(f"unsupported ring width {self.ring_bits}")
        if not 0 < self.frac_bits < self.ring_bits / 2:
            raise UsageError(
                f"fractional bits must satisfy 0 < f < l/2, got f={self.frac_bits}, l={self.ring_bits}"
            )

    @property
    def ring(self) -> Ring:
        return get_ring(self.ring_bits)

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def one(self) -> int:
        return self.scale

    @property
    def ulp(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def max_abs(self) -> int:
        return 2 ** (self.ring_bits - 1 - self.frac_bits) - 1

    def encode(self, x) -> np.ndarray:
        """Encode reals; raises RangeError outside +-(2^(l-1-f) - 1)."""
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise RangeError("cannot encode non-finite values")
        bad = np.abs(x) > self.max_abs
        if np.any(bad):
            first = float(x[bad].flat[0])
            raise RangeError(f"{first!r} is outside the fixed-point range +-{self.max_abs}")
        scaled = np.floor(x * float(self.scale))
        if self.ring_bits <= 64:
            return self.ring.from_signed(scaled.astype(np.int64))
        ints = np.vectorize(int, otypes=[object])(scaled) if scaled.ndim else np.asarray(int(scaled), dtype=object)
        return self.ring.from_signed(ints)

    def decode(self, raw) -> np.ndarray:
        s = self.ring.signed(np.asarray(raw))
        if self.ring.native:
            return s.astype(np.float64) / self.scale
        return np.vectorize(lambda v: v / self.scale, otypes=[np.float64])(s) if s.ndim else np.float64(int(s) / self.scale)

    def encode_int(self, n) -> np.ndarray:
        """Encode exact integers without passing through floats."""
        return self.ring.from_int(np.asarray(n, dtype=object) * self.scale)


# additive sharing ---------------------------------------------------------


@dataclass(frozen=True)
class Share:
    """One party's additive share of a ring array."""

    raw: np.ndarray
    party: int
    width: int = 64

    def __post_init__(self):
        if self.party not in (0, 1):
            raise UsageError(f"share party must be 0 or 1, got {self.party}")


def share(x, ring: Ring, rng: np.random.Generator, mask=None) -> tuple[Share, Share]:
    """Split ring array ``x`` into two additive shares.

    Share 0 is uniform from ``rng`` (or the forced ``mask``); share 1 is
    ``x - share0``.
    """
    x = np.asarray(x, dtype=ring.dtype)
    s0 = ring.random(rng, x.shape) if mask is None else np.asarray(mask, dtype=ring.dtype)
    s1 = ring.sub(x, s0)
    return Share(s0, 0, ring.width), Share(s1, 1, ring.width)


def reconstruct(s0: Share, s1: Share) -> np.ndarray:
    if s0.party != 0 or s1.party != 1:
        raise UsageError(f"reconstruct expects shares of parties (0, 1), got ({s0.party}, {s1.party})")
    if s0.width != s1.width:
        raise UsageError(f"share widths differ: {s0.width} vs {s1.width}")
    ring = get_ring(s0.width)
    return ring.add(np.asarray(s0.raw), np.asarray(s1.raw))


def prf_elements(key: bytes, counter: int, ring: Ring, shape=()) -> np.ndarray:
    """Keyed pseudorandom ring elements: SHAKE-256(len(key) || key || counter)."""
    n = int(np.prod(shape, dtype=np.int64)) if shape != () else 1
    h = hashlib.shake_256()
    h.update(len(key).to_bytes(2, "little"))
    h.update(key)
    h.update(int(counter).to_bytes(16, "little"))
    out = ring.from_bytes(h.digest(n * ring.nbytes))
    return out.reshape(shape)


def zero_shares(key: bytes, counter: int, ring: Ring, shape=()) -> tuple[np.ndarray, np.ndarray]:
    """Non-interactive shares of zero from a key common to P0 and P1."""
    u0 = prf_elements(key, counter, ring, shape)
    return u0, ring.neg(u0)


"""On-disk share files and the data-owner CSV codec.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"SPPSHARE"
    8       1     version (1)
    9       1     ring code (0 = 64-bit, 1 = 128-bit)
    10      1     fractional bits f
    11      1     exponent integer bits m
    12      1     party index (0 or 1)
    13      3     reserved, zero
    16      8     element count n
    24      n*l/8 shares
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, RangeError
from .ring import FixedPoint, get_ring, share

MAGIC = b"SPPSHARE"
VERSION = 1
HEADER = struct.Struct("<8sBBBBB3sQ")
HEADER_SIZE = HEADER.size  # 24

RING_CODES = {64: 0, 128: 1}
CODE_RINGS = {v: k for k, v in RING_CODES.items()}

_DECIMAL = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")


@dataclass
class ShareFile:
    party: int
    ring_bits: int
    frac_bits: int
    int_bits: int
    raw: np.ndarray

    @property
    def count(self) -> int:
        return int(np.size(self.raw))

    def header(self) -> bytes:
        return HEADER.pack(
            MAGIC, VERSION, RING_CODES[self.ring_bits], self.frac_bits, self.int_bits, self.party, b"\0\0\0", self.count
        )

    def to_bytes(self) -> bytes:
        return self.header() + get_ring(self.ring_bits).to_bytes(np.reshape(self.raw, -1))

    def matches(self, other: "ShareFile") -> bool:
        """Same parameters and length; the party index is allowed to differ."""
        return (self.ring_bits, self.frac_bits, self.int_bits, self.count) == (
            other.ring_bits,
            other.frac_bits,
            other.int_bits,
            other.count,
        )

    @classmethod
    def from_bytes(cls, data: bytes, source: str = "share file") -> "ShareFile":
        if len(data) < HEADER_SIZE:
            raise InputError(f"{source}: {len(data)} bytes is too short for a header")
        magic, version, code, f, m, party, reserved, count = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise InputError(f"{source}: bad magic {magic!r}")
        if version != VERSION:
            raise InputError(f"{source}: unsupported version {version}")
        if code not in CODE_RINGS:
            raise InputError(f"{source}: unknown ring code {code}")
        if party not in (0, 1):
            raise InputError(f"{source}: party index must be 0 or 1, got {party}")
        ring = get_ring(CODE_RINGS[code])
        body = data[HEADER_SIZE:]
        if len(body) != count * ring.nbytes:
            raise InputError(f"{source}: header declares {count} elements but body holds {len(body)} bytes")
        return cls(party, ring.width, f, m, ring.from_bytes(body))

    def write(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def read(cls, path) -> "ShareFile":
        return cls.from_bytes(Path(path).read_bytes(), source=str(path))


def reconstruct_files(a: ShareFile, b: ShareFile) -> np.ndarray:
    """Raw plaintext ring elements from a P0/P1 pair."""
    if {a.party, b.party} != {0, 1}:
        raise InputError(f"need one share from each primary, got parties {a.party} and {b.party}")
    if not a.matches(b):
        raise InputError("share files disagree on ring, precision, exponent bits or length")
    return get_ring(a.ring_bits).add(a.raw, b.raw)


# ---------------------------------------------------------------------------
# CSV


def parse_csv(text: str) -> np.ndarray:
    """One decimal per line; a single trailing newline is allowed."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    values = []
    for row, line in enumerate(lines, start=1):
        s = line.strip()
        if not _DECIMAL.fullmatch(s):
            raise InputError(f"row {row}: expected one decimal value with '.' as separator, got {line!r}")
        v = float(s)
        if not np.isfinite(v):
            raise InputError(f"row {row}: {line!r} is not finite")
        values.append(v)
    return np.asarray(values, dtype=np.float64)


def format_csv(values) -> str:
    return "".join(f"{float(v)!r}\n" for v in np.reshape(values, -1))


def encode_rows(fp: FixedPoint, values) -> np.ndarray:
    """Fixed-point encode, naming the first out-of-range row on failure."""
    values = np.asarray(values, dtype=np.float64)
    bad = np.flatnonzero(np.abs(values) > fp.max_abs)
    if bad.size:
        i = int(bad[0])
        raise InputError(f"row {i + 1}: {float(values[i])!r} is outside the fixed-point range +-{fp.max_abs}")
    try:
        return fp.encode(values)
    except RangeError as exc:
        raise InputError(str(exc)) from None


def split_values(values, ring_bits: int, frac_bits: int, int_bits: int, rng: np.random.Generator):
    """Encode and share reals; returns the (P0, P1) ShareFile pair."""
    fp = FixedPoint(frac_bits, ring_bits)
    raw = encode_rows(fp, values)
    s0, s1 = share(raw, fp.ring, rng)
    return (
        ShareFile(0, ring_bits, frac_bits, int_bits, s0.raw),
        ShareFile(1, ring_bits, frac_bits, int_bits, s1.raw),
    )


def decode_files(a: ShareFile, b: ShareFile) -> np.ndarray:
    return FixedPoint(a.frac_bits, a.ring_bits).decode(reconstruct_files(a, b))

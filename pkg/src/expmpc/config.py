"""Session configuration and its start-up range checks."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .ring import FixedPoint, get_ring

# Bits of headroom kept below 2^(l-1) for values that pass through a local
# share truncation; a truncation of |v| fails with probability ~ |v| / 2^l.
TRUNCATION_MARGIN_BITS = 20

TRANSPORTS = ("local", "tcp")


@dataclass(frozen=True)
class ProtocolConfig:
    ring_bits: int = 64
    frac_bits: int = 13
    int_bits: int = 5
    transport: str = "local"
    seed: int = 0
    timeout: float = 120.0
    keys: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.keys is None:
            object.__setattr__(self, "keys", derive_pairwise_keys(self.seed))

    @property
    def ring(self):
        return get_ring(self.ring_bits)

    @property
    def fixed(self) -> FixedPoint:
        return FixedPoint(self.frac_bits, self.ring_bits)

    def with_(self, **changes) -> "ProtocolConfig":
        if "seed" in changes and "keys" not in changes:
            changes["keys"] = None
        return replace(self, **changes)

    def validate(self) -> "ProtocolConfig":
        l, f, m = self.ring_bits, self.frac_bits, self.int_bits
        if l not in (64, 128):
            raise ConfigError(f"ring width must be 64 or 128, got {l}")
        if not 1 <= f <= 20:
            raise ConfigError(f"precision must be between 1 and 20 fractional bits, got {f}")
        if not f < l / 2:
            raise ConfigError(f"precision f={f} leaves no multiplication headroom in a {l}-bit ring")
        if m < 1:
            raise ConfigError(f"exponent integer bits must be >= 1, got {m}")
        if self.transport not in TRANSPORTS:
            raise ConfigError(f"unknown transport {self.transport!r}")
        # the largest table product e^(2^m - 1), times the Taylor factor (< e),
        # must be encodable
        if 2.0**m * math.log2(math.e) >= l - 1 - f:
            raise ConfigError(
                f"e^(2^{m}) does not fit the fixed-point range of a {l}-bit ring with f={f}; "
                f"lower --int-bits or use --ring 128"
            )
        for name in ("01", "02", "12"):
            if not isinstance(self.keys.get(name), bytes):
                raise ConfigError(f"missing pairwise key {name}")
        return self

    def handshake_tuple(self):
        return (self.ring_bits, self.frac_bits, self.int_bits)


def derive_pairwise_keys(seed: int) -> dict:
    """Pairwise common-randomness keys "01", "02" and "12"."""
    def k(label):
        return hashlib.sha256(f"expmpc/{label}/{seed}".encode()).digest()
    return {"01": k("01"), "02": k("02"), "12": k("12")}


def max_exp_input(cfg: ProtocolConfig) -> float:
    """Largest x for which exp keeps every truncated product inside the safety margin.

    The final fixed-point product carries e^x * 2^(2f) before truncation.
    """
    l, f = cfg.ring_bits, cfg.frac_bits
    headroom = (l - 1 - TRUNCATION_MARGIN_BITS - 2 * f) * math.log(2)
    return min(float(2**cfg.int_bits), headroom)


def max_divisor(cfg: ProtocolConfig) -> float:
    """Largest divisor (real) accepted by the long division.

    The first trial subtrahend is y * 2^(2f - 1) in raw units and must stay
    below 2^(l-1).
    """
    l, f = cfg.ring_bits, cfg.frac_bits
    return 2.0 ** (l - 3 * f) - 1.0

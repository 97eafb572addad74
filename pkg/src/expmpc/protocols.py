"""Name-indexed protocol registry and a convenience runner for plaintext callers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import activations, primitives
from .config import ProtocolConfig
from .errors import RangeError, UsageError
from .party import Session, SessionResult, start_local_session, start_tcp_session
from .ring import share


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    program: Callable
    arity: int = 1
    rounds: Callable | None = None


PROTOCOLS = {
    "taylor_exp": ProtocolSpec("taylor_exp", activations.taylor_exp, rounds=activations.ROUNDS["taylor_exp"]),
    "exp": ProtocolSpec("exp", activations.exp, rounds=activations.ROUNDS["exp"]),
    "sigmoid": ProtocolSpec("sigmoid", activations.sigmoid, rounds=activations.ROUNDS["sigmoid"]),
    "d_sigmoid": ProtocolSpec("d_sigmoid", activations.d_sigmoid, rounds=activations.ROUNDS["d_sigmoid"]),
    "tanh": ProtocolSpec("tanh", activations.tanh, rounds=activations.ROUNDS["tanh"]),
    "d_tanh": ProtocolSpec("d_tanh", activations.d_tanh, rounds=activations.ROUNDS["d_tanh"]),
    "softmax": ProtocolSpec("softmax", activations.softmax, rounds=activations.ROUNDS["softmax"]),
    "division": ProtocolSpec("division", primitives.division, arity=2, rounds=primitives.rounds_division),
    "mat_mul": ProtocolSpec("mat_mul", primitives.mat_mul, arity=2, rounds=lambda cfg: 1),
}

ALIASES = {
    "taylorExp": "taylor_exp",
    "taylor": "taylor_exp",
    "Exp": "exp",
    "dsigmoid": "d_sigmoid",
    "sigmoid_derivative": "d_sigmoid",
    "dtanh": "d_tanh",
    "tanh_derivative": "d_tanh",
    "matmul": "mat_mul",
}

# activations and their batch form (element-wise over rows x cols; softmax per row)
ACTIVATIONS = ("exp", "sigmoid", "tanh", "softmax", "d_sigmoid", "d_tanh", "taylor_exp")


def resolve(name: str) -> ProtocolSpec:
    key = ALIASES.get(name, name)
    if key not in PROTOCOLS:
        raise UsageError(f"unknown protocol {name!r}; choose from {', '.join(PROTOCOLS)}")
    return PROTOCOLS[key]


def open_session(config: ProtocolConfig, transport: str | None = None) -> Session:
    kind = transport or config.transport
    if kind == "local":
        return start_local_session(config)
    if kind == "tcp":
        return start_tcp_session(config)
    raise UsageError(f"unknown transport {kind!r}")


def share_reals(config: ProtocolConfig, values, rng: np.random.Generator):
    """Encode reals and split them into (P0 raw, P1 raw)."""
    raw = config.fixed.encode(np.atleast_1d(np.asarray(values, dtype=np.float64)))
    s0, s1 = share(raw, config.ring, rng)
    return s0.raw, s1.raw


def run_shares(session: Session, name: str, shares0, shares1, check_rounds: bool = True) -> SessionResult:
    spec = resolve(name)
    if len(shares0) != spec.arity:
        raise UsageError(f"{spec.name} takes {spec.arity} input(s), got {len(shares0)}")
    declared = spec.rounds(session.config) if (check_rounds and spec.rounds) else None
    return session.run(spec.program, shares0, shares1, declared_rounds=declared)


def check_domain(name: str, cfg: ProtocolConfig, x) -> None:
    """Reject plaintext inputs the protocol cannot evaluate; the parties never see them."""
    x = np.asarray(x, dtype=float)
    classes = x.shape[-1] if name == "softmax" and x.ndim else 1
    lo, hi = activations.valid_domain(name, cfg, classes=classes)
    bad = ~((x >= lo) & (x < hi))
    if np.any(bad):
        raise RangeError(f"{name} input {float(x[bad].flat[0])!r} is outside [{lo}, {hi:.6g})")


def secure_eval(session: Session, name: str, *inputs, rng: np.random.Generator | None = None):
    """Share real ``inputs``, run ``name`` and return (decoded output, transcript)."""
    rng = rng if rng is not None else np.random.default_rng()
    cfg = session.config
    spec = resolve(name)
    if spec.name in ACTIVATIONS:
        check_domain(spec.name, cfg, inputs[0])
    pairs = [share_reals(cfg, x, rng) for x in inputs]
    res = run_shares(session, name, [a for a, _ in pairs], [b for _, b in pairs])
    out = cfg.ring.add(res.outputs[0], res.outputs[1])
    return cfg.fixed.decode(out), res.transcript

"""Benchmark runner: timed protocol runs over random in-domain batches."""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field

import numpy as np

from .activations import valid_domain
from .config import ProtocolConfig
from .errors import UsageError
from .protocols import open_session, resolve, run_shares, share_reals

COLUMNS = ("Protocol", "Dimension", "Time(s)", "Comm.(mb)")
PRESETS = ((64, 16), (128, 128), (576, 20))

# published timings (i5, LAN) and communication; shown for context only
REFERENCE = {
    "exp": {(64, 16): (0.08, 0.025), (128, 128): (2.134, 0.393), (576, 20): (0.882, 0.276)},
    "sigmoid": {(64, 16): (0.252, 2.58), (128, 128): (5.631, 41.288), (576, 20): (2.615, 29.03)},
    "tanh": {(64, 16): (0.275, 2.58), (128, 128): (5.32, 41.288), (576, 20): (2.613, 29.03)},
    "softmax": {(64, 16): (0.324, 2.58), (128, 128): (5.438, 41.288), (576, 20): (2.617, 29.03)},
    "d_sigmoid": {(64, 16): (0.464, 2.597), (128, 128): (8.033, 41.55), (576, 20): (4.121, 29.214)},
    "d_tanh": {(64, 16): (0.383, 2.58), (128, 128): (4.465, 41.288), (576, 20): (2.84, 29.03)},
    "taylor_exp": {(64, 16): (0.032, 0.005), (128, 128): (0.092, 0.079), (576, 20): (0.427, 0.055)},
}

DISPLAY = {"taylor_exp": "taylorExp"}


@dataclass
class BenchSpec:
    """One benchmark cell. ``rows x cols`` is an element-wise batch for
    activations (softmax normalises each row) and ``(rows x cols) @ (cols x cols)``
    for mat_mul."""

    protocol: str
    rows: int
    cols: int
    reps: int = 1
    config: ProtocolConfig = field(default_factory=ProtocolConfig)

    def __post_init__(self):
        self.protocol = resolve(self.protocol).name
        if self.rows < 1 or self.cols < 1:
            raise UsageError(f"dimensions must be positive, got {self.rows}x{self.cols}")
        if self.reps < 1:
            raise UsageError(f"repetitions must be >= 1, got {self.reps}")

    @property
    def dimension(self) -> str:
        return f"{self.rows}x{self.cols}"


def sample_inputs(name: str, rows: int, cols: int, cfg: ProtocolConfig, rng: np.random.Generator) -> list:
    """Random real inputs inside the protocol's supported domain."""
    name = resolve(name).name
    shape = (rows, cols)
    if name == "division":
        return [rng.uniform(0.0, 8.0, shape), rng.uniform(1.0, 8.0, shape)]
    if name == "mat_mul":
        return [rng.uniform(-1.0, 1.0, shape), rng.uniform(-1.0, 1.0, (cols, cols))]
    lo, hi = valid_domain(name, cfg, classes=cols if name == "softmax" else 1)
    return [rng.uniform(lo, hi, shape)]


def run_once(session, spec: BenchSpec, rng: np.random.Generator):
    cfg = session.config
    pairs = [share_reals(cfg, x, rng) for x in sample_inputs(spec.protocol, spec.rows, spec.cols, cfg, rng)]
    return run_shares(session, spec.protocol, [a for a, _ in pairs], [b for _, b in pairs])


def run_bench(spec: BenchSpec, session=None, rng: np.random.Generator | None = None) -> dict:
    """Median wall time over ``reps`` runs and the transcript size in MB (10^6 bytes).

    Raises if repetitions disagree on communication, which would mean the
    transcript depends on the data.
    """
    rng = rng if rng is not None else np.random.default_rng(spec.config.seed)
    own = session is None
    session = session or open_session(spec.config)
    try:
        times, comm = [], set()
        for _ in range(spec.reps):
            res = run_once(session, spec, rng)
            times.append(res.transcript.wall_time)
            comm.add(res.transcript.total_bytes)
    finally:
        if own:
            session.close()
    if len(comm) != 1:
        raise RuntimeError(f"{spec.protocol} {spec.dimension}: communication varied across repetitions: {sorted(comm)}")
    return {
        "Protocol": DISPLAY.get(spec.protocol, spec.protocol),
        "Dimension": spec.dimension,
        "Time(s)": round(statistics.median(times), 3),
        "Comm.(mb)": round(comm.pop() / 1e6, 6),
    }


def write_rows(rows, out=None) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def reference_note(protocol: str, rows: int, cols: int) -> str | None:
    name = resolve(protocol).name
    ref = REFERENCE.get(name, {}).get((rows, cols))
    if ref is None:
        return None
    return f"reference {DISPLAY.get(name, name)} {rows}x{cols}: {ref[0]} s, {ref[1]} MB (published, not asserted)"

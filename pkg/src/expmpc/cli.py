"""Command-line front end: ``expmpc {bench,verify,split,reconstruct,party}``.

Exit status: 0 success, 1 verification failures, 2 usage or input errors,
3 transport, handshake or protocol errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench as benchmod
from .activations import valid_domain
from .config import ProtocolConfig
from .errors import ConfigError, InputError, MPCError, RangeError, UsageError
from .oracle import REFERENCE_KIND, TOLERANCES, Tolerance, compare_runs, fixed_oracle, real_oracle
from .party import HELPER, P0, P1, run_network_party, start_network_party
from .protocols import ACTIVATIONS, PROTOCOLS, open_session, resolve, secure_eval
from .sharefile import ShareFile, decode_files, format_csv, parse_csv, split_values

log = logging.getLogger("expmpc")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

# keys accepted in --config files, mapped to argparse destinations
CONFIG_KEYS = {
    "protocol": "protocol",
    "rows": "rows",
    "cols": "cols",
    "ring": "ring",
    "precision": "precision",
    "int_bits": "int_bits",
    "int-bits": "int_bits",
    "transport": "transport",
    "role": "role",
    "peer0": "peer0",
    "peer1": "peer1",
    "seed": "seed",
    "reps": "reps",
    "out": "out",
    "samples": "samples",
    "timeout": "timeout",
}
DEFAULTS = {
    "ring": 64,
    "precision": 13,
    "int_bits": 5,
    "transport": "local",
    "seed": 0,
    "reps": 1,
    "samples": 100,
    "timeout": 120.0,
}


def read_config_file(path) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        out[CONFIG_KEYS[key]] = value
    return out


def _common(p: argparse.ArgumentParser):
    # defaults are None so config-file values can fill in; flags win
    p.add_argument("--config", help="flat key=value file; command-line flags win on conflict")
    p.add_argument("--ring", type=int, choices=(64, 128), help="ring width l (default 64)")
    p.add_argument("--precision", type=int, metavar="F", help="fractional bits f (default 13)")
    p.add_argument("--int-bits", type=int, metavar="M", dest="int_bits", help="exponent integer bits m (default 5)")
    p.add_argument("--transport", choices=("local", "tcp"), help="local threads or TCP loopback (default local)")
    p.add_argument("--seed", type=int, help="seed for keys and input sampling (default 0)")
    p.add_argument("--timeout", type=float, help="seconds to wait for a peer (default 120)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expmpc", description="Three-party exponentiation-based activations.")
    sub = parser.add_subparsers(dest="command", required=True)
    names = ", ".join(PROTOCOLS)

    b = sub.add_parser(
        "bench",
        help="time protocols and report communication",
        description=(
            "Writes CSV with columns Protocol, Dimension, Time(s), Comm.(mb). Dimension rows x cols is an "
            "element-wise batch for activations (softmax normalises each row) and (rows x cols) @ (cols x cols) "
            "for mat_mul. Without --rows/--cols the three presets 64x16, 128x128 and 576x20 are run. "
            "Published reference figures go to stderr."
        ),
    )
    _common(b)
    b.add_argument("--protocol", action="append", help=f"protocol (repeatable; default: all activations). One of {names}")
    b.add_argument("--rows", type=int)
    b.add_argument("--cols", type=int)
    b.add_argument("--reps", type=int, help="repetitions; time is the median (default 1)")
    b.add_argument("--out", help="CSV path (default stdout)")

    v = sub.add_parser("verify", help="compare a protocol with its plaintext reference")
    _common(v)
    v.add_argument("--protocol", help=f"one of {names}")
    v.add_argument("--samples", type=int, help="number of samples, or rows for softmax (default 100)")
    v.add_argument("--cols", type=int, help="classes per softmax row (default 4)")
    v.add_argument("--low", type=float, help="lowest input (default: bottom of the valid domain)")
    v.add_argument("--high", type=float, help="input upper bound, exclusive (default: top of the valid domain)")
    v.add_argument("--at", type=float, action="append", help="evaluate at this exact point (repeatable)")
    v.add_argument("--tolerance", type=float, help="absolute tolerance overriding the versioned one")
    v.add_argument("--out", help="write the per-sample report CSV here")

    s = sub.add_parser("split", help="encode a CSV of reals into two share files")
    _common(s)
    s.add_argument("--input", required=True, help="CSV, one decimal per line")
    s.add_argument("--out", required=True, help="output prefix; writes PREFIX.p0 and PREFIX.p1")

    r = sub.add_parser("reconstruct", help="combine two share files into a CSV of reals")
    r.add_argument("shares", nargs=2, help="the P0 and P1 share files, in any order")
    r.add_argument("--out", help="CSV path (default stdout)")
    r.add_argument("-v", "--verbose", action="store_true")

    pa = sub.add_parser(
        "party",
        help="run one role of a networked session",
        description=(
            "P0 listens on --peer0, P1 listens on --peer1 and dials P0, P2 dials both. P0 and P1 read their "
            "inputs from share files (two --input for division and mat_mul) and write their output share to "
            "--out. P2 takes no inputs and needs --rows (and --cols) to know the batch shape."
        ),
    )
    _common(pa)
    pa.add_argument("--role", type=int, choices=(0, 1, 2))
    pa.add_argument("--protocol", help=f"one of {names}")
    pa.add_argument("--peer0", help="host:port of P0")
    pa.add_argument("--peer1", help="host:port of P1")
    pa.add_argument("--input", action="append", help="input share file (P0/P1 only)")
    pa.add_argument("--rows", type=int, help="batch rows (default: element count of the input)")
    pa.add_argument("--cols", type=int, help="batch columns (default 1; softmax normalises each row)")
    pa.add_argument("--out", help="output share file (P0/P1)")
    return parser


def resolve_settings(args) -> argparse.Namespace:
    """Merge defaults < config file < flags."""
    from_file = read_config_file(args.config) if getattr(args, "config", None) else {}
    merged = {**DEFAULTS, **from_file}
    merged["seed_given"] = getattr(args, "seed", None) is not None or "seed" in from_file
    for key, value in vars(args).items():
        if value is not None or key not in merged:
            merged[key] = value
    for key in ("ring", "precision", "int_bits", "seed", "reps", "rows", "cols", "samples", "role"):
        if key in merged and merged[key] is not None:
            try:
                merged[key] = int(merged[key])
            except (TypeError, ValueError):
                raise UsageError(f"{key} must be an integer, got {merged[key]!r}") from None
    merged["timeout"] = float(merged["timeout"])
    return argparse.Namespace(**merged)


def make_config(ns) -> ProtocolConfig:
    return ProtocolConfig(
        ring_bits=ns.ring,
        frac_bits=ns.precision,
        int_bits=ns.int_bits,
        transport=ns.transport,
        seed=ns.seed,
        timeout=ns.timeout,
    ).validate()


# ---------------------------------------------------------------------------
# commands


def cmd_bench(ns, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    cfg = make_config(ns)
    protocols = [resolve(p).name for p in (ns.protocol if isinstance(ns.protocol, list) else [ns.protocol])] if getattr(
        ns, "protocol", None
    ) else list(ACTIVATIONS)
    rows, cols = getattr(ns, "rows", None), getattr(ns, "cols", None)
    if (rows is None) != (cols is None):
        raise UsageError("give both --rows and --cols, or neither for the presets")
    dims = [(rows, cols)] if rows is not None else list(benchmod.PRESETS)
    specs = [benchmod.BenchSpec(p, r, c, reps=ns.reps, config=cfg) for p in protocols for r, c in dims]
    rng = np.random.default_rng(cfg.seed)
    results = []
    with open_session(cfg) as session:
        for spec in specs:
            log.info("bench %s %s", spec.protocol, spec.dimension)
            results.append(benchmod.run_bench(spec, session=session, rng=rng))
            note = benchmod.reference_note(spec.protocol, spec.rows, spec.cols)
            if note:
                print(note, file=err)
    if getattr(ns, "out", None):
        with open(ns.out, "w", newline="") as fh:
            benchmod.write_rows(results, fh)
    else:
        benchmod.write_rows(results, out)
    return EXIT_OK


def verify_inputs(name, ns, cfg, rng):
    """(inputs, divisors) for a verification sweep."""
    n = ns.samples
    if n < 1:
        raise UsageError("--samples must be positive")
    if name == "division":
        x = rng.uniform(0.0, 8.0, n)
        y = rng.uniform(1.0, 8.0, n)
        return [x, y], y
    if name == "mat_mul":
        raise UsageError("verify covers the element-wise protocols; mat_mul is exact and checked by the test suite")
    k = getattr(ns, "cols", None) or 4
    lo, hi = valid_domain(name, cfg, classes=k if name == "softmax" else 1)
    lo = ns.low if getattr(ns, "low", None) is not None else lo
    hi = ns.high if getattr(ns, "high", None) is not None else hi
    if getattr(ns, "at", None):
        x = np.asarray(ns.at, dtype=np.float64)
        if name == "softmax":
            x = x.reshape(1, -1)
    elif name == "softmax":
        x = rng.uniform(lo, hi, (n, k))
    else:
        x = rng.uniform(lo, hi, n)
    return [x], None


def cmd_verify(ns, out=None) -> int:
    out = out or sys.stdout
    if not getattr(ns, "protocol", None):
        raise UsageError("--protocol is required")
    name = resolve(ns.protocol).name
    cfg = make_config(ns)
    rng = np.random.default_rng(cfg.seed)
    inputs, divisors = verify_inputs(name, ns, cfg, rng)
    with open_session(cfg) as session:
        got, transcript = secure_eval(session, name, *inputs, rng=rng)
    ref_name = "taylor5" if name == "taylor_exp" else name
    if REFERENCE_KIND.get(name) == "fixed":
        expected = fixed_oracle(ref_name, inputs[0], params=cfg.fixed, int_bits=cfg.int_bits)
    else:
        expected = real_oracle(ref_name, inputs[0], divisors=divisors)
    tol = Tolerance(abs=ns.tolerance) if getattr(ns, "tolerance", None) is not None else TOLERANCES[name]
    report = compare_runs(got, expected, tol, label=name)
    if getattr(ns, "out", None):
        with open(ns.out, "w", newline="") as fh:
            report.to_csv(fh)
    print(report.summary(), file=out)
    print(f"communication {transcript.total_bytes} bytes in {transcript.rounds} rounds", file=out)
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_split(ns, out=None) -> int:
    cfg = make_config(ns)
    try:
        text = Path(ns.input).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {ns.input}: {exc.strerror}") from None
    values = parse_csv(text)
    # fresh entropy unless a seed was asked for explicitly
    rng = np.random.default_rng([ns.seed, 0x5EED]) if ns.seed_given else np.random.default_rng()
    f0, f1 = split_values(values, cfg.ring_bits, cfg.frac_bits, cfg.int_bits, rng)
    f0.write(f"{ns.out}.p0")
    f1.write(f"{ns.out}.p1")
    print(f"wrote {f0.count} shares to {ns.out}.p0 and {ns.out}.p1", file=out or sys.stderr)
    return EXIT_OK


def cmd_reconstruct(ns, out=None) -> int:
    a, b = (ShareFile.read(p) for p in ns.shares)
    text = format_csv(decode_files(a, b))
    if ns.out:
        Path(ns.out).write_text(text)
    else:
        (out or sys.stdout).write(text)
    return EXIT_OK


def cmd_party(ns) -> int:
    if ns.role is None:
        raise UsageError("--role is required")
    if not ns.protocol:
        raise UsageError("--protocol is required")
    if not ns.peer0 or not ns.peer1:
        raise UsageError("--peer0 and --peer1 are required")
    spec = resolve(ns.protocol)
    cfg = make_config(ns)
    role = ns.role
    files = ns.input or []
    if role == HELPER:
        if files:
            raise UsageError("P2 is data-free and takes no --input")
        if ns.rows is None:
            raise UsageError("P2 needs --rows (and --cols) to know the batch shape")
    else:
        if len(files) != spec.arity:
            raise UsageError(f"{spec.name} needs {spec.arity} --input share file(s), got {len(files)}")
        if not ns.out:
            raise UsageError("--out is required for P0 and P1")
    shares = [ShareFile.read(f) for f in files]
    for sf in shares:
        if sf.party != role:
            raise InputError(f"share file belongs to P{sf.party}, this is P{role}")
        if (sf.ring_bits, sf.frac_bits, sf.int_bits) != (cfg.ring_bits, cfg.frac_bits, cfg.int_bits):
            raise InputError(
                f"share file parameters l={sf.ring_bits} f={sf.frac_bits} m={sf.int_bits} differ from the session's"
            )
    count = shares[0].count if shares else None
    cols = ns.cols or 1
    rows = ns.rows if ns.rows is not None else (count // cols if count is not None else None)
    shapes = _input_shapes(spec.name, rows, cols)
    if shares and [int(np.prod(s)) for s in shapes] != [sf.count for sf in shares]:
        raise InputError(f"share files hold {[sf.count for sf in shares]} elements, expected shapes {shapes}")

    party = start_network_party(cfg, role, ns.peer0, ns.peer1, protocol=spec.name, timeout=ns.timeout)
    try:
        if role == HELPER:
            inputs = [party.placeholder(s) for s in shapes]
        else:
            inputs = [sf.raw.reshape(s) for sf, s in zip(shares, shapes)]
        output, transcript = run_network_party(party, spec.program, *inputs)
    finally:
        party.close()
    if role in (P0, P1):
        ShareFile(role, cfg.ring_bits, cfg.frac_bits, cfg.int_bits, np.reshape(output, -1)).write(ns.out)
    log.info("P%d done: %d bytes sent in %d rounds", role, transcript.total_bytes, transcript.rounds)
    return EXIT_OK


def _input_shapes(name, rows, cols):
    if rows is None or rows < 1 or cols < 1:
        raise UsageError(f"invalid batch shape {rows}x{cols}")
    if name == "mat_mul":
        return [(rows, cols), (cols, cols)]
    if name == "division":
        return [(rows, cols), (rows, cols)]
    return [(rows, cols)]


COMMANDS = {
    "bench": cmd_bench,
    "verify": cmd_verify,
    "split": cmd_split,
    "reconstruct": cmd_reconstruct,
    "party": cmd_party,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        ns = resolve_settings(args) if args.command != "reconstruct" else args
        return COMMANDS[args.command](ns)
    except (UsageError, InputError, ConfigError, RangeError) as exc:
        print(f"expmpc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        if isinstance(exc, ConnectionError):
            print(f"expmpc {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"expmpc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MPCError as exc:
        print(f"expmpc {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

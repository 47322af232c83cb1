"""Command-line entry points.

Subcommands: provision, server, client, bench, randomness, vectors.
Exit codes are a stable scripting contract: 0 success, 1 operational
failure, 2 usage error. Reports and other machine-readable output go
to stdout or the --csv path; diagnostics go to stderr, with verbosity
controlled by the KISS_LOG environment variable (error, info, debug).
"""

from __future__ import annotations

import argparse
import logging
import os
import socket
import sys
from pathlib import Path

from . import bench as bench_mod
from .association import (
    Mode,
    generate_provision,
    load_association,
    read_provision_file,
    write_provision_file,
)
from .channel import ChannelEndpoint
from .errors import KissError
from .idvv import idvv_init, idvv_next
from .idvv import Root, Seed
from .randomness import (
    DEFAULT_ALPHA,
    DEFAULT_STREAM_BITS,
    DEFAULT_TRIALS,
    run_battery,
)

log = logging.getLogger("kiss")

# fixed demo chain inputs for the randomness and vectors subcommands;
# any 32-byte pair works, these keep default runs reproducible
DEMO_SEED = bytes.fromhex(
    "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f"
)
DEMO_ROOT = bytes.fromhex(
    "202122232425262728292a2b2c2d2e2f303132333435363738393a3b3c3d3e3f"
)

_MODE_BY_FLAG = {"auth": Mode.AUTH_ONLY, "aead": Mode.AEAD}


def _setup_logging() -> None:
    level_name = os.environ.get("KISS_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        print(
            f"warning: KISS_LOG={level_name!r} not one of error/info/debug; "
            "using error",
            file=sys.stderr,
        )
        level_name = "error"
    logging.basicConfig(
        stream=sys.stderr,
        level=levels[level_name],
        format="%(levelname)s %(name)s: %(message)s",
    )


def _parse_addr(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise KissError(f"address must be host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError:
        raise KissError(f"bad port in address {text!r}") from None


def _parse_hex32(text: str, what: str) -> bytes:
    try:
        data = bytes.fromhex(text)
    except ValueError:
        raise KissError(f"{what} must be hex") from None
    if len(data) != 32:
        raise KissError(f"{what} must be 64 hex chars (32 bytes)")
    return data


# -- subcommands -------------------------------------------------------


def cmd_provision(args) -> int:
    init_pf, resp_pf = generate_provision(
        mode=_MODE_BY_FLAG[args.mode], resync_window=args.window
    )
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_provision_file(init_pf, out_dir / "initiator.prov")
        write_provision_file(resp_pf, out_dir / "responder.prov")
    except OSError as exc:
        print(f"error: cannot write provision files: {exc}", file=sys.stderr)
        return 1
    log.info("wrote initiator.prov and responder.prov under %s", out_dir)
    print(init_pf.assoc_id.hex())
    return 0


def cmd_server(args) -> int:
    pf = read_provision_file(args.provision)
    host, port = _parse_addr(args.listen)
    with socket.create_server((host, port)) as listener:
        bound_port = listener.getsockname()[1]
        print(f"listening {host}:{bound_port}", file=sys.stderr, flush=True)
        conn, peer = listener.accept()
        log.info("connection from %s", peer)
        with conn:
            endpoint = ChannelEndpoint(load_association(pf), conn)
            endpoint.handshake()
            log.info("handshake complete")
            served = 0
            while True:
                payload = endpoint.receive()
                if payload is None:
                    break
                endpoint.send(payload)
                served += 1
                log.debug("acknowledged record %d (%d bytes)", served, len(payload))
    log.info("served %d records, clean close", served)
    return 0


def cmd_client(args) -> int:
    pf = read_provision_file(args.provision)
    host, port = _parse_addr(args.connect)
    if args.send is not None:
        payloads = [args.send.encode("utf-8")]
    else:
        payloads = [b"msg-%08d" % i for i in range(args.count)]
    with socket.create_connection((host, port), timeout=30.0) as conn:
        conn.settimeout(30.0)
        endpoint = ChannelEndpoint(load_association(pf), conn)
        endpoint.handshake()
        log.info("handshake complete")
        for i, payload in enumerate(payloads):
            endpoint.send(payload)
            ack = endpoint.receive()
            if ack != payload:
                raise KissError(f"acknowledgment mismatch on record {i}")
            log.debug("record %d acknowledged", i)
        if args.send is not None:
            print(payloads[0].decode("utf-8"))
        endpoint.close()
    log.info("%d records exchanged, clean close", len(payloads))
    return 0


def _parse_sizes(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise KissError(f"sizes must be comma-separated integers, got {text!r}") from None
    if not sizes:
        raise KissError("sizes list is empty")
    return sizes


def cmd_bench(args) -> int:
    sizes = _parse_sizes(args.sizes) if args.sizes else bench_mod.DEFAULT_SIZES
    cfg = bench_mod.BenchConfig(
        sizes=sizes, iterations=args.iterations, duration=args.duration
    )
    if args.suite == "primitives":
        report = bench_mod.bench_primitives(cfg)
        csv_text = report.to_csv()
        print(report.format_markdown())
    elif args.suite == "channel":
        cases = []
        for mode in bench_mod.CHANNEL_MODES:
            part = bench_mod.bench_channel(
                mode, msg_size=args.msg_size, duration=args.duration or 1.0
            )
            cases.extend(part.cases)
        report = bench_mod.BenchReport(
            "channel", tuple(cases), bench_mod.environment_fingerprint()
        )
        csv_text = report.to_csv()
        print(report.format_markdown())
    else:  # tls
        kiss_report = bench_mod.bench_channel(
            "AUTH_ONLY", msg_size=args.msg_size, duration=args.duration or 1.0
        )
        tls_cfg = bench_mod.BenchConfig(
            sizes=(args.msg_size,), duration=max(args.duration or 1.0, 1.0)
        )
        tls_report = bench_mod.bench_tls_baseline(tls_cfg, args.tls_command)
        comparison = bench_mod.compare_report(
            kiss_report, tls_report, baseline=kiss_report.cases[0].case
        )
        csv_text = comparison.to_csv()
        print(comparison.to_markdown())
        print(bench_mod.headline_summary(kiss_report, tls_report))
    if args.csv:
        Path(args.csv).write_text(csv_text, encoding="utf-8")
        log.info("wrote CSV to %s", args.csv)
    return 0


def cmd_randomness(args) -> int:
    seed = _parse_hex32(args.seed, "--seed") if args.seed else DEMO_SEED
    root = _parse_hex32(args.root, "--root") if args.root else DEMO_ROOT
    report = run_battery(
        seed, root, n_bits=args.bits, trials=args.trials, alpha=args.alpha
    )
    print(report.format_table())
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
        log.info("wrote CSV to %s", args.csv)
    return 0


def cmd_vectors(args) -> int:
    seed = _parse_hex32(args.seed, "--seed") if args.seed else bytes(32)
    root = _parse_hex32(args.root, "--root") if args.root else bytes(32)
    label = args.label.encode("utf-8")
    state = idvv_init(Seed(seed), Root(root), label)
    print(f"seed = {seed.hex()}")
    print(f"root = {root.hex()}")
    print(f"label = {args.label}")
    print(f"v0 = {state.value.hex()}")
    for i in range(1, args.count):
        value = idvv_next(state)
        print(f"v{i} = {value.bytes.hex()}")
    return 0


# -- argument wiring ---------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kiss",
        description="Deterministic key-chain secure channel toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("provision", help="generate an association file pair")
    p.add_argument("--out-dir", default=".", help="directory for the two files")
    p.add_argument("--mode", choices=("auth", "aead"), default="auth")
    p.add_argument("--window", type=int, default=1024, help="resync window")
    p.set_defaults(func=cmd_provision)

    p = sub.add_parser("server", help="run the demo echo-acknowledging endpoint")
    p.add_argument("--provision", required=True, help="responder provision file")
    p.add_argument("--listen", default="127.0.0.1:0", help="host:port (0 = ephemeral)")
    p.set_defaults(func=cmd_server)

    p = sub.add_parser("client", help="drive records through a server")
    p.add_argument("--provision", required=True, help="initiator provision file")
    p.add_argument("--connect", required=True, help="server host:port")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--send", help="send one UTF-8 payload and print the echo")
    group.add_argument("--count", type=int, default=1, help="send N counter payloads")
    p.set_defaults(func=cmd_client)

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("--suite", choices=("primitives", "channel", "tls"), required=True)
    p.add_argument("--csv", help="also write machine-readable CSV here")
    p.add_argument("--sizes", help="comma-separated message sizes")
    p.add_argument("--duration", type=float, default=1.0, help="seconds per case")
    p.add_argument(
        "--iterations", type=int, default=None, help="fixed ops per timed batch"
    )
    p.add_argument(
        "--msg-size", type=int, default=1500, help="record size for channel/tls suites"
    )
    p.add_argument(
        "--tls-command",
        default="openssl speed -evp aes-256-gcm -bytes {size} -seconds 1",
        help="external speed command template ({size} placeholder)",
    )
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("randomness", help="run the statistical battery")
    p.add_argument("--bits", type=int, default=DEFAULT_STREAM_BITS)
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--csv", help="also write per-trial CSV here")
    p.add_argument("--seed", help="chain seed, 64 hex chars")
    p.add_argument("--root", help="chain root, 64 hex chars")
    p.set_defaults(func=cmd_randomness)

    p = sub.add_parser("vectors", help="print known-answer chain vectors")
    p.add_argument("--seed", help="chain seed, 64 hex chars (default all zero)")
    p.add_argument("--root", help="chain root, 64 hex chars (default all zero)")
    p.add_argument("--label", default="c2s", help="direction label")
    p.add_argument("--count", type=int, default=4, help="number of values to print")
    p.set_defaults(func=cmd_vectors)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KissError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

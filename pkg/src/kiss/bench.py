"""Micro-benchmarks for the primitives and the channel itself.

Three layers of measurement, all sharing one report shape:

* ``bench_primitive`` times raw crypto operations (hashing, MAC, AEAD,
  signatures, chain stepping, record sealing) over counter-filled
  buffers so runs are byte-comparable.
* ``bench_channel`` drives a two-thread loopback pair and measures
  sustained record throughput, with a plaintext framing baseline that
  isolates the cost of the cryptography.
* ``bench_tls_baseline`` shells out to a locally installed TLS
  toolchain's speed facility and parses its output for side-by-side
  comparison. A missing tool degrades to skipped rows, never a failure.

Signature primitives are included purely as comparison anchors; the
channel itself never signs anything.

All timing uses the monotonic clock and batched loops, with warmup
excluded. Throughput and percentiles come from the same samples.
Per-batch op cost feeds the percentiles, so p50/p99 describe batch
means, not single-op tails.
"""

from __future__ import annotations

import hashlib
import hmac
import itertools
import platform
import re
import shlex
import socket
import subprocess
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .association import (
    Association,
    Mode,
    ProvisionFile,
    Role,
    generate_provision,
    load_association,
)
from .channel import HEADER_LEN, ChannelEndpoint, MsgType, Record, TAG_LEN
from .channel import decode_record, encode_record, seal
from .errors import BenchError, InvalidParameterError
from .idvv import Root, Seed, idvv_init, idvv_next

DEFAULT_SIZES = (64, 512, 1500, 16384)

PRIMITIVES = (
    "hash-sha256",
    "hmac-sha256",
    "aead-aes256gcm",
    "sign-rsa2048",
    "sign-ecdsa-p256",
    "idvv-step",
    "idvv-seal-authonly",
)

CHANNEL_MODES = ("AUTH_ONLY", "AEAD", "plaintext-baseline")

CORE_MODULES = ("idvv.py", "association.py", "channel.py")

# per-batch rate spread beyond this fraction marks the case noisy;
# flagged, never failed
NOISE_SPREAD = 0.15


@dataclass(frozen=True)
class BenchConfig:
    """Knobs for a primitive run.

    Either ``iterations`` (>= 1000, exact ops per timed batch) or
    ``duration`` (>= 1 s per case, with self-calibrated batches) must
    make the run long enough to measure. ``samples`` counts timed
    batches in iterations mode; duration mode keeps timing batches
    until the budget is spent.
    """

    sizes: tuple[int, ...] = DEFAULT_SIZES
    iterations: int | None = None
    duration: float | None = 1.0
    samples: int = 10
    warmup: int = 1

    def validate(self) -> None:
        if not self.sizes:
            raise InvalidParameterError("at least one message size required")
        for size in self.sizes:
            if not isinstance(size, int) or size <= 0:
                raise InvalidParameterError(f"message sizes must be > 0, got {size}")
        if self.iterations is not None and self.iterations <= 0:
            raise InvalidParameterError(
                f"iterations must be positive, got {self.iterations}"
            )
        if self.duration is not None and self.duration <= 0:
            raise InvalidParameterError(
                f"duration must be positive, got {self.duration}"
            )
        enough_iters = self.iterations is not None and self.iterations >= 1000
        enough_time = self.duration is not None and self.duration >= 1.0
        if not (enough_iters or enough_time):
            raise InvalidParameterError(
                "config too short to measure: need iterations >= 1000 "
                "or duration >= 1 s"
            )
        if self.samples < 1:
            raise InvalidParameterError(f"samples must be >= 1, got {self.samples}")
        if self.warmup < 0:
            raise InvalidParameterError(f"warmup must be >= 0, got {self.warmup}")


@dataclass(frozen=True)
class BenchCase:
    case: str
    size_bytes: int
    ops_per_sec: float
    mb_per_sec: float
    p50_us: float
    p99_us: float
    skipped: bool = False
    note: str = ""
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class BenchReport:
    suite: str
    cases: tuple[BenchCase, ...]
    environment: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["case,size_bytes,ops_per_sec,mb_per_sec,p50_us,p99_us"]
        for c in self.cases:
            lines.append(
                f"{c.case},{c.size_bytes},{c.ops_per_sec:.2f},"
                f"{c.mb_per_sec:.3f},{c.p50_us:.3f},{c.p99_us:.3f}"
            )
        return "\n".join(lines) + "\n"

    def format_markdown(self) -> str:
        head = (
            f"| {'case':24} | {'size':>6} | {'ops/sec':>12} | {'MB/sec':>9} "
            f"| {'p50 us':>8} | {'p99 us':>8} | note |"
        )
        rule = f"|{'-' * 26}|{'-' * 8}|{'-' * 14}|{'-' * 11}|{'-' * 10}|{'-' * 10}|------|"
        lines = [head, rule]
        for c in self.cases:
            note = c.note
            if c.flags:
                note = (note + " " if note else "") + ",".join(c.flags)
            if c.skipped:
                lines.append(
                    f"| {c.case:24} | {c.size_bytes:>6} | {'skipped':>12} "
                    f"| {'-':>9} | {'-':>8} | {'-':>8} | {note} |"
                )
            else:
                lines.append(
                    f"| {c.case:24} | {c.size_bytes:>6} | {c.ops_per_sec:>12.1f} "
                    f"| {c.mb_per_sec:>9.3f} | {c.p50_us:>8.3f} | {c.p99_us:>8.3f} "
                    f"| {note} |"
                )
        env = self.environment
        lines.append("")
        lines.append(
            f"suite: {self.suite}; cpu: {env.get('cpu', 'unknown')}; "
            f"python: {env.get('python', '?')}; at: {env.get('timestamp', '?')}"
        )
        return "\n".join(lines) + "\n"


def environment_fingerprint() -> dict:
    cpu = platform.processor() or platform.machine()
    try:
        with open("/proc/cpuinfo", "r", encoding="utf-8") as fh:
            for line in fh:
                if line.lower().startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return {
        "cpu": cpu,
        "python": platform.python_version(),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


# -- timing core ------------------------------------------------------


def _run_batch(op, n: int) -> float:
    t0 = time.perf_counter()
    for _ in itertools.repeat(None, n):
        op()
    return time.perf_counter() - t0


def _calibrate_batch(op, target: float = 0.02) -> int:
    """Pick a batch size whose runtime is near ``target`` seconds."""
    n = 1
    while True:
        dt = _run_batch(op, n)
        if dt >= 0.004 or n >= 1 << 20:
            break
        n *= 8
    return max(1, int(n * target / max(dt, 1e-9)))


def _measure(op, cfg: BenchConfig, case: str, size: int) -> BenchCase:
    if cfg.iterations is not None:
        batch = cfg.iterations
    else:
        batch = _calibrate_batch(op)
    for _ in range(cfg.warmup):
        _run_batch(op, batch)

    times: list[float] = []
    if cfg.duration is not None:
        spent = 0.0
        while spent < cfg.duration or len(times) < 3:
            dt = _run_batch(op, batch)
            times.append(dt)
            spent += dt
    else:
        for _ in range(cfg.samples):
            times.append(_run_batch(op, batch))

    total = sum(times)
    ops = len(times) * batch
    per_op_us = sorted(t / batch * 1e6 for t in times)
    rate = ops / total
    flags = ()
    spread = (per_op_us[-1] - per_op_us[0]) / per_op_us[len(per_op_us) // 2]
    if spread > NOISE_SPREAD:
        flags = ("noisy",)
    return BenchCase(
        case=case,
        size_bytes=size,
        ops_per_sec=rate,
        mb_per_sec=rate * size / 1e6,
        p50_us=_percentile(per_op_us, 50.0),
        p99_us=_percentile(per_op_us, 99.0),
        flags=flags,
    )


def _percentile(sorted_vals: list[float], pct: float) -> float:
    if not sorted_vals:
        return 0.0
    k = (len(sorted_vals) - 1) * pct / 100.0
    lo = int(k)
    hi = min(lo + 1, len(sorted_vals) - 1)
    frac = k - lo
    return sorted_vals[lo] * (1.0 - frac) + sorted_vals[hi] * frac


# -- primitive benchmarks ---------------------------------------------


def _counter_buffer(size: int) -> bytes:
    return bytes(i & 0xFF for i in range(size))


def _bench_assoc() -> Association:
    pf = ProvisionFile(
        assoc_id=bytes(8),
        role=Role.INITIATOR,
        mode=Mode.AUTH_ONLY,
        seed=bytes(range(32)),
        root=bytes(range(32, 64)),
    )
    return load_association(pf)


def _make_primitive_op(name: str, size: int):
    msg = _counter_buffer(size)
    if name == "hash-sha256":
        return lambda: hashlib.sha256(msg).digest()
    if name == "hmac-sha256":
        key = bytes(range(32))
        return lambda: hmac.digest(key, msg, "sha256")
    if name == "aead-aes256gcm":
        # the record layer never reuses a key, so the schedule setup is
        # part of the honest per-message cost; key varies per op
        nonce = bytes(12)
        counter = itertools.count()

        def gcm_op():
            key = next(counter).to_bytes(32, "big")
            AESGCM(key).encrypt(nonce, msg, b"")

        return gcm_op
    if name == "sign-rsa2048":
        key = rsa.generate_private_key(public_exponent=65537, key_size=2048)
        pad = padding.PKCS1v15()
        algo = hashes.SHA256()
        return lambda: key.sign(msg, pad, algo)
    if name == "sign-ecdsa-p256":
        key = ec.generate_private_key(ec.SECP256R1())
        algo = ec.ECDSA(hashes.SHA256())
        return lambda: key.sign(msg, algo)
    if name == "idvv-step":
        state = idvv_init(Seed(bytes(range(32))), Root(bytes(range(32, 64))), b"bench")

        def step_op():
            idvv_next(state).wipe()

        return step_op
    if name == "idvv-seal-authonly":
        assoc = _bench_assoc()
        return lambda: encode_record(seal(assoc, MsgType.DATA, msg))
    raise InvalidParameterError(f"unknown primitive {name!r}")


def bench_primitive(name: str, cfg: BenchConfig | None = None) -> BenchReport:
    """Measure one primitive across the configured message sizes."""
    cfg = cfg or BenchConfig()
    cfg.validate()
    if name not in PRIMITIVES:
        raise InvalidParameterError(f"unknown primitive {name!r}")
    cases = tuple(
        _measure(_make_primitive_op(name, size), cfg, name, size) for size in cfg.sizes
    )
    return BenchReport("primitives", cases, environment_fingerprint())


def bench_primitives(cfg: BenchConfig | None = None, names=None) -> BenchReport:
    """All primitives (or a subset) in one report."""
    cfg = cfg or BenchConfig()
    cfg.validate()
    names = tuple(names) if names is not None else PRIMITIVES
    for name in names:
        if name not in PRIMITIVES:
            raise InvalidParameterError(f"unknown primitive {name!r}")
    cases = []
    for name in names:
        for size in cfg.sizes:
            cases.append(_measure(_make_primitive_op(name, size), cfg, name, size))
    return BenchReport("primitives", tuple(cases), environment_fingerprint())


# -- channel benchmarks -----------------------------------------------


def bench_channel(mode: str, msg_size: int = 1500, duration: float = 2.0) -> BenchReport:
    """Sustained one-way record throughput over a loopback pair.

    ``plaintext-baseline`` ships identical frames with a zeroed tag and
    no key derivation, isolating what the cryptography costs.
    """
    if mode not in CHANNEL_MODES:
        raise InvalidParameterError(f"unknown channel mode {mode!r}")
    if msg_size <= 0:
        raise InvalidParameterError(f"msg_size must be > 0, got {msg_size}")
    if duration <= 0:
        raise InvalidParameterError(f"duration must be > 0, got {duration}")

    if mode == "plaintext-baseline":
        count, elapsed, deltas = _run_plaintext_loopback(msg_size, duration)
    else:
        count, elapsed, deltas = _run_channel_loopback(Mode[mode], msg_size, duration)

    rate = count / elapsed if elapsed > 0 else 0.0
    deltas_us = sorted(d * 1e6 for d in deltas)
    case = BenchCase(
        case=f"channel-{mode}",
        size_bytes=msg_size,
        ops_per_sec=rate,
        mb_per_sec=rate * msg_size / 1e6,
        p50_us=_percentile(deltas_us, 50.0),
        p99_us=_percentile(deltas_us, 99.0),
    )
    return BenchReport("channel", (case,), environment_fingerprint())


def _loopback_pair():
    left, right = socket.socketpair()
    return left, right


def _run_channel_loopback(mode: Mode, msg_size: int, duration: float):
    init_pf, resp_pf = generate_provision(mode=mode)
    left, right = _loopback_pair()
    result: dict = {}

    def receiver():
        endpoint = ChannelEndpoint(load_association(resp_pf), right)
        endpoint.handshake()
        stamps = []
        while True:
            payload = endpoint.receive()
            if payload is None:
                break
            stamps.append(time.perf_counter())
        result["stamps"] = stamps

    thread = threading.Thread(target=receiver, daemon=True)
    thread.start()
    sender = ChannelEndpoint(load_association(init_pf), left)
    sender.handshake()
    msg = _counter_buffer(msg_size)
    deadline = time.perf_counter() + duration
    while time.perf_counter() < deadline:
        sender.send(msg)
    sender.close()
    thread.join(timeout=60.0)
    left.close()
    right.close()
    if thread.is_alive() or "stamps" not in result:
        raise BenchError("loopback receiver did not finish")
    return _loopback_stats(result["stamps"])


def _run_plaintext_loopback(msg_size: int, duration: float):
    left, right = _loopback_pair()
    assoc_id = bytes(8)
    zero_tag = bytes(TAG_LEN[Mode.AUTH_ONLY])
    result: dict = {}

    def receiver():
        stamps = []
        buf = b""
        want = HEADER_LEN + msg_size + len(zero_tag)
        while True:
            chunk = right.recv(65536)
            if not chunk:
                break
            buf += chunk
            while len(buf) >= want:
                decode_record(buf[:want])
                buf = buf[want:]
                stamps.append(time.perf_counter())
        result["stamps"] = stamps

    thread = threading.Thread(target=receiver, daemon=True)
    thread.start()
    msg = _counter_buffer(msg_size)
    deadline = time.perf_counter() + duration
    seq = itertools.count(1)
    while time.perf_counter() < deadline:
        record = Record(MsgType.DATA, Mode.AUTH_ONLY, assoc_id, next(seq), msg, zero_tag)
        left.sendall(encode_record(record))
    left.shutdown(socket.SHUT_WR)
    thread.join(timeout=60.0)
    left.close()
    right.close()
    if thread.is_alive() or "stamps" not in result:
        raise BenchError("loopback receiver did not finish")
    return _loopback_stats(result["stamps"])


def _loopback_stats(stamps: list[float]):
    if len(stamps) < 16:
        raise BenchError(f"loopback produced too few records ({len(stamps)})")
    # first chunk of records doubles as warmup
    skip = min(100, len(stamps) // 4)
    window = stamps[skip:]
    elapsed = window[-1] - window[0]
    deltas = [b - a for a, b in zip(window, window[1:])]
    return len(window) - 1, elapsed, deltas


# -- external TLS baseline --------------------------------------------

_SPEED_HEADER = re.compile(r"^type\s+(.*)$", re.MULTILINE)
_SPEED_COL = re.compile(r"(\d+)\s+bytes")


def parse_speed_output(text: str) -> dict[str, dict[int, float]]:
    """Parse a TLS toolchain's throughput table.

    Expects the classic layout: a ``type`` header row naming byte-size
    columns, then one row per algorithm with throughput figures in
    1000s of bytes per second (``123456.78k``). Returns
    ``{algorithm: {size: bytes_per_sec}}``.
    """
    header = _SPEED_HEADER.search(text)
    if header is None:
        raise BenchError("no throughput table in external output", raw_output=text)
    sizes = [int(m.group(1)) for m in _SPEED_COL.finditer(header.group(1))]
    if not sizes:
        raise BenchError("throughput header names no sizes", raw_output=text)
    rows: dict[str, dict[int, float]] = {}
    for line in text[header.end() :].splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        vals = []
        for part in parts[len(parts) - len(sizes) :]:
            if not part.endswith("k"):
                break
            try:
                vals.append(float(part[:-1]) * 1000.0)
            except ValueError:
                break
        if len(vals) != len(sizes):
            continue
        name = " ".join(parts[: len(parts) - len(sizes)])
        if name:
            rows[name] = dict(zip(sizes, vals))
    if not rows:
        raise BenchError("no throughput rows parsed", raw_output=text)
    return rows


def bench_tls_baseline(
    cfg: BenchConfig | None = None,
    command_template: str = "openssl speed -evp aes-256-gcm -bytes {size} -seconds 1",
) -> BenchReport:
    """Throughput of an external TLS toolchain for side-by-side reporting.

    The template is formatted once per configured size with ``{size}``.
    A missing tool yields skipped rows; output that cannot be parsed
    raises a BenchError carrying the raw output.
    """
    cfg = cfg or BenchConfig()
    cfg.validate()
    cases = []
    for size in cfg.sizes:
        argv = shlex.split(command_template.format(size=size))
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, timeout=300.0
            )
        except FileNotFoundError:
            cases.append(
                BenchCase(
                    case="tls-external",
                    size_bytes=size,
                    ops_per_sec=0.0,
                    mb_per_sec=0.0,
                    p50_us=0.0,
                    p99_us=0.0,
                    skipped=True,
                    note=f"external tool not found: {argv[0]}",
                )
            )
            continue
        except subprocess.TimeoutExpired as exc:
            raise BenchError(
                f"external tool timed out: {argv[0]}", raw_output=str(exc)
            ) from exc
        output = proc.stdout + proc.stderr
        if proc.returncode != 0:
            raise BenchError(
                f"external tool exited {proc.returncode}", raw_output=output
            )
        rows = parse_speed_output(output)
        for name, by_size in rows.items():
            if size not in by_size:
                raise BenchError(
                    f"external output lacks size {size} for {name!r}",
                    raw_output=output,
                )
            bps = by_size[size]
            cases.append(
                BenchCase(
                    case=f"tls-{name.lower().replace(' ', '-')}",
                    size_bytes=size,
                    ops_per_sec=bps / size,
                    mb_per_sec=bps / 1e6,
                    p50_us=0.0,
                    p99_us=0.0,
                    note="latency not reported by external tool",
                )
            )
    return BenchReport("tls", tuple(cases), environment_fingerprint())


# -- comparison and headline ------------------------------------------


@dataclass(frozen=True)
class CompareRow:
    case: str
    size_bytes: int
    ops_per_sec: float
    mb_per_sec: float
    p50_us: float
    p99_us: float
    ratio: float | None
    skipped: bool


@dataclass(frozen=True)
class Comparison:
    baseline: str
    rows: tuple[CompareRow, ...]

    def to_csv(self) -> str:
        lines = ["case,size_bytes,ops_per_sec,mb_per_sec,p50_us,p99_us,ratio"]
        for r in self.rows:
            ratio = f"{r.ratio:.4f}" if r.ratio is not None else ""
            lines.append(
                f"{r.case},{r.size_bytes},{r.ops_per_sec:.2f},{r.mb_per_sec:.3f},"
                f"{r.p50_us:.3f},{r.p99_us:.3f},{ratio}"
            )
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        lines = [
            f"| {'case':24} | {'size':>6} | {'ops/sec':>12} | {'MB/sec':>9} "
            f"| {'vs ' + self.baseline:>18} |",
            f"|{'-' * 26}|{'-' * 8}|{'-' * 14}|{'-' * 11}|{'-' * 20}|",
        ]
        for r in self.rows:
            if r.skipped:
                lines.append(
                    f"| {r.case:24} | {r.size_bytes:>6} | {'skipped':>12} "
                    f"| {'-':>9} | {'-':>18} |"
                )
            else:
                ratio = f"{r.ratio:.2f}x" if r.ratio is not None else "-"
                lines.append(
                    f"| {r.case:24} | {r.size_bytes:>6} | {r.ops_per_sec:>12.1f} "
                    f"| {r.mb_per_sec:>9.3f} | {ratio:>18} |"
                )
        return "\n".join(lines) + "\n"


def compare_report(*reports: BenchReport, baseline: str | None = None) -> Comparison:
    """Merge reports into one ratio table against a named baseline case."""
    if len(reports) < 2:
        raise InvalidParameterError("comparison needs at least two reports")
    all_cases = [c for r in reports for c in r.cases]
    by_case: dict[str, dict[int, BenchCase]] = {}
    for c in all_cases:
        by_case.setdefault(c.case, {})[c.size_bytes] = c
    if baseline is None:
        baseline = next((c.case for c in all_cases if not c.skipped), None)
        if baseline is None:
            raise InvalidParameterError("no measurable case to use as baseline")
    if baseline not in by_case:
        raise InvalidParameterError(f"baseline case {baseline!r} not in reports")
    base_sizes = by_case[baseline]
    axis = set(base_sizes)
    for case, sizes in by_case.items():
        if set(sizes) != axis:
            raise InvalidParameterError(
                f"case {case!r} covers sizes {sorted(sizes)} but baseline "
                f"{baseline!r} covers {sorted(axis)}"
            )
    rows = []
    for c in all_cases:
        base = base_sizes[c.size_bytes]
        if c.skipped or base.skipped or base.ops_per_sec == 0.0:
            ratio = None
        else:
            ratio = c.ops_per_sec / base.ops_per_sec
        rows.append(
            CompareRow(
                c.case,
                c.size_bytes,
                c.ops_per_sec,
                c.mb_per_sec,
                c.p50_us,
                c.p99_us,
                ratio,
                c.skipped,
            )
        )
    return Comparison(baseline, tuple(rows))


def core_line_count() -> int:
    """Non-blank, non-comment source lines of the protocol core."""
    total = 0
    pkg = Path(__file__).parent
    for name in CORE_MODULES:
        for line in (pkg / name).read_text(encoding="utf-8").splitlines():
            stripped = line.strip()
            if stripped and not stripped.startswith("#"):
                total += 1
    return total


def headline_summary(kiss: BenchReport, tls: BenchReport) -> str:
    """Side-by-side throughput ratio and code size, with no verdict.

    Both figures are environment-dependent; they are reported, not
    judged against a threshold.
    """
    kiss_case = next((c for c in kiss.cases if not c.skipped), None)
    tls_rows = [c for c in tls.cases if not c.skipped]
    lines = []
    match = None
    if kiss_case is not None:
        match = next(
            (c for c in tls_rows if c.size_bytes == kiss_case.size_bytes), None
        )
    if kiss_case is not None and match is not None:
        ratio = kiss_case.mb_per_sec / match.mb_per_sec if match.mb_per_sec else 0.0
        lines.append(
            f"throughput at {kiss_case.size_bytes} B: "
            f"{kiss_case.case} {kiss_case.mb_per_sec:.2f} MB/s vs "
            f"{match.case} {match.mb_per_sec:.2f} MB/s (ratio {ratio:.3f})"
        )
    else:
        lines.append("throughput ratio: not available (no comparable external row)")
    lines.append(f"protocol core: {core_line_count()} source lines")
    return "\n".join(lines) + "\n"

"""Statistical randomness battery for chain-derived keystreams.

Implements a seven-test subset of the NIST SP 800-22 rev. 1a suite:
monobit, block frequency, runs, longest run of ones, cumulative sums,
approximate entropy, and serial. Each test returns its p-value; the
battery runs every test across independent trial streams and applies
the SP 800-22 proportion rule (a three-sigma confidence bound on the
expected pass rate) to reach a verdict.

Bit streams under test come from the deterministic key chain itself:
one chain per trial, distinguished by direction label, each 32-byte
value unpacked most significant bit first. The battery is sequential
and fully reproducible from (seed, root); reports carry no timestamps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import InvalidParameterError
from .idvv import Root, Seed, idvv_init, idvv_next

MIN_STREAM_BITS = 100

DEFAULT_ALPHA = 0.01
DEFAULT_TRIALS = 100
DEFAULT_STREAM_BITS = 1_000_000

# longest-run tiers: (min stream bits, block size M, category lower/upper
# clamp, reference probabilities). Probabilities are the published
# SP 800-22 tables; each row sums to 1 within rounding.
_LONGEST_RUN_TIERS = (
    (750_000, 10_000, 10, 16, (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
    (6_272, 128, 4, 9, (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    (128, 8, 1, 4, (0.2148, 0.3672, 0.2305, 0.1875)),
)


@dataclass(frozen=True)
class TestResult:
    name: str
    p_value: float
    passed: bool
    params: dict = field(default_factory=dict)


class BitStream:
    """A finite 0/1 sequence held as a numpy uint8 vector."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.ndim != 1:
            raise InvalidParameterError("bit stream must be one-dimensional")
        if arr.size and arr.max() > 1:
            raise InvalidParameterError("bit stream values must be 0 or 1")
        self.bits = arr

    @classmethod
    def from_bytes(cls, data: bytes, n_bits: int | None = None) -> "BitStream":
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        if n_bits is not None:
            if n_bits > bits.size:
                raise InvalidParameterError(
                    f"{n_bits} bits requested from {bits.size} available"
                )
            bits = bits[:n_bits]
        return cls(bits)

    def __len__(self) -> int:
        return self.bits.size


def generate_stream(seed, root, label: bytes, n_bits: int) -> BitStream:
    """Expand the chain keyed by (seed, root, label) into n_bits bits."""
    if n_bits < MIN_STREAM_BITS:
        raise InvalidParameterError(
            f"stream must be at least {MIN_STREAM_BITS} bits, got {n_bits}"
        )
    state = idvv_init(_as_seed(seed), _as_root(root), label)
    steps = -(-n_bits // 256)
    out = bytearray()
    for _ in range(steps):
        value = idvv_next(state)
        out += value.bytes
        value.wipe()
    return BitStream.from_bytes(bytes(out), n_bits)


def _as_seed(seed) -> Seed:
    return seed if isinstance(seed, Seed) else Seed(seed)


def _as_root(root) -> Root:
    return root if isinstance(root, Root) else Root(root)


def _bit_array(bits) -> np.ndarray:
    if isinstance(bits, BitStream):
        return bits.bits
    return BitStream(bits).bits


# -- individual tests ------------------------------------------------


def monobit_test(bits, alpha: float = DEFAULT_ALPHA) -> TestResult:
    b = _bit_array(bits)
    n = b.size
    if n < MIN_STREAM_BITS:
        raise InvalidParameterError(
            f"monobit test needs >= {MIN_STREAM_BITS} bits, got {n}"
        )
    s_n = 2 * int(b.sum()) - n
    s_obs = abs(s_n) / math.sqrt(n)
    p = math.erfc(s_obs / math.sqrt(2))
    return TestResult("monobit", p, p >= alpha, {"n": n, "s_n": s_n})


def block_frequency_test(bits, block_size: int = 128, alpha: float = DEFAULT_ALPHA) -> TestResult:
    b = _bit_array(bits)
    n = b.size
    if block_size < 2:
        raise InvalidParameterError(f"block size must be >= 2, got {block_size}")
    n_blocks = n // block_size
    if n_blocks < 1:
        raise InvalidParameterError(
            f"stream too short for block size {block_size} ({n} bits)"
        )
    pi = (
        b[: n_blocks * block_size]
        .reshape(n_blocks, block_size)
        .mean(axis=1, dtype=np.float64)
    )
    chi_sq = 4.0 * block_size * float(np.sum((pi - 0.5) ** 2))
    p = float(special.gammaincc(n_blocks / 2.0, chi_sq / 2.0))
    return TestResult(
        "block-frequency",
        p,
        p >= alpha,
        {"n": n, "block_size": block_size, "n_blocks": n_blocks, "chi_sq": chi_sq},
    )


def runs_test(bits, alpha: float = DEFAULT_ALPHA) -> TestResult:
    b = _bit_array(bits)
    n = b.size
    pi = float(b.mean(dtype=np.float64))
    # the test presumes the monobit statistic is unremarkable; outside
    # that band the run count is meaningless and the result is a hard fail
    tau = 2.0 / math.sqrt(n)
    if abs(pi - 0.5) >= tau:
        return TestResult(
            "runs", 0.0, False, {"n": n, "pi": pi, "prerequisite_failed": True}
        )
    v_n = int(np.count_nonzero(b[1:] != b[:-1])) + 1
    num = abs(v_n - 2.0 * n * pi * (1.0 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1.0 - pi)
    p = math.erfc(num / den)
    return TestResult("runs", p, p >= alpha, {"n": n, "pi": pi, "v_n": v_n})


def longest_run_test(bits, alpha: float = DEFAULT_ALPHA) -> TestResult:
    b = _bit_array(bits)
    n = b.size
    for min_n, block_size, lo, hi, ref in _LONGEST_RUN_TIERS:
        if n >= min_n:
            break
    else:
        raise InvalidParameterError(f"longest-run test needs >= 128 bits, got {n}")
    n_blocks = n // block_size
    blocks = b[: n_blocks * block_size].reshape(n_blocks, block_size)
    # longest run of ones per row: running count of ones that resets at
    # each zero, computed as cumsum minus its most recent value at a zero
    csum = np.cumsum(blocks, axis=1, dtype=np.int32)
    at_zero = np.where(blocks == 0, csum, 0)
    run_len = csum - np.maximum.accumulate(at_zero, axis=1)
    longest = run_len.max(axis=1)
    cats = np.clip(longest, lo, hi) - lo
    counts = np.bincount(cats, minlength=len(ref)).astype(np.float64)
    expected = n_blocks * np.asarray(ref)
    chi_sq = float(np.sum((counts - expected) ** 2 / expected))
    k = len(ref) - 1
    p = float(special.gammaincc(k / 2.0, chi_sq / 2.0))
    return TestResult(
        "longest-run",
        p,
        p >= alpha,
        {
            "n": n,
            "block_size": block_size,
            "n_blocks": n_blocks,
            "counts": counts.astype(int).tolist(),
            "chi_sq": chi_sq,
        },
    )


def cusum_test(bits, forward: bool = True, alpha: float = DEFAULT_ALPHA) -> TestResult:
    b = _bit_array(bits)
    n = b.size
    x = b.astype(np.int64) * 2 - 1
    if not forward:
        x = x[::-1]
    z = int(np.max(np.abs(np.cumsum(x))))
    sqrt_n = math.sqrt(n)
    k1 = np.arange(math.floor((-n / z + 1) / 4), math.floor((n / z - 1) / 4) + 1)
    k2 = np.arange(math.floor((-n / z - 3) / 4), math.floor((n / z - 1) / 4) + 1)
    term1 = np.sum(
        special.ndtr((4 * k1 + 1) * z / sqrt_n) - special.ndtr((4 * k1 - 1) * z / sqrt_n)
    )
    term2 = np.sum(
        special.ndtr((4 * k2 + 3) * z / sqrt_n) - special.ndtr((4 * k2 + 1) * z / sqrt_n)
    )
    p = float(min(max(1.0 - term1 + term2, 0.0), 1.0))
    direction = "forward" if forward else "backward"
    return TestResult(
        "cusum", p, p >= alpha, {"n": n, "z": z, "direction": direction}
    )


def approximate_entropy_test(
    bits, pattern_len: int = 10, alpha: float = DEFAULT_ALPHA
) -> TestResult:
    b = _bit_array(bits)
    n = b.size
    if pattern_len < 1:
        raise InvalidParameterError(f"pattern length must be >= 1, got {pattern_len}")
    if 1 << (pattern_len + 1) >= n:
        raise InvalidParameterError(
            f"pattern length {pattern_len} too large for {n} bits"
        )
    ap_en = _phi(b, pattern_len) - _phi(b, pattern_len + 1)
    chi_sq = 2.0 * n * (math.log(2.0) - ap_en)
    p = float(special.gammaincc(2.0 ** (pattern_len - 1), chi_sq / 2.0))
    return TestResult(
        "approximate-entropy",
        p,
        p >= alpha,
        {"n": n, "pattern_len": pattern_len, "ap_en": ap_en, "chi_sq": chi_sq},
    )


def serial_test(bits, pattern_len: int = 16, alpha: float = DEFAULT_ALPHA) -> TestResult:
    b = _bit_array(bits)
    n = b.size
    if pattern_len < 2:
        raise InvalidParameterError(f"pattern length must be >= 2, got {pattern_len}")
    if 1 << pattern_len >= n:
        raise InvalidParameterError(
            f"pattern length {pattern_len} too large for {n} bits"
        )
    psi_m = _psi_sq(b, pattern_len)
    psi_m1 = _psi_sq(b, pattern_len - 1)
    psi_m2 = _psi_sq(b, pattern_len - 2)
    d1 = psi_m - psi_m1
    d2 = psi_m - 2.0 * psi_m1 + psi_m2
    p1 = float(special.gammaincc(2.0 ** (pattern_len - 2), d1 / 2.0))
    p2 = float(special.gammaincc(2.0 ** (pattern_len - 3), d2 / 2.0))
    return TestResult(
        "serial",
        p1,
        p1 >= alpha,
        {"n": n, "pattern_len": pattern_len, "delta1": d1, "delta2": d2, "p2": p2},
    )


def _pattern_counts(b: np.ndarray, m: int) -> np.ndarray:
    """Counts of all overlapping m-bit patterns, sequence wrapped around."""
    n = b.size
    ext = np.concatenate([b, b[: m - 1]]) if m > 1 else b
    v = np.zeros(n, dtype=np.int64)
    for j in range(m):
        v = (v << 1) | ext[j : j + n]
    return np.bincount(v, minlength=1 << m)


def _phi(b: np.ndarray, m: int) -> float:
    counts = _pattern_counts(b, m)
    freq = counts[counts > 0] / b.size
    return float(np.sum(freq * np.log(freq)))


def _psi_sq(b: np.ndarray, m: int) -> float:
    if m < 1:
        return 0.0
    counts = _pattern_counts(b, m).astype(np.float64)
    return float((1 << m) / b.size * np.sum(counts * counts) - b.size)


ALL_TESTS = {
    "monobit": monobit_test,
    "block-frequency": block_frequency_test,
    "runs": runs_test,
    "longest-run": longest_run_test,
    "cusum": cusum_test,
    "approximate-entropy": approximate_entropy_test,
    "serial": serial_test,
}


# -- battery ----------------------------------------------------------


@dataclass
class RandomnessReport:
    n_bits: int
    trials: int
    alpha: float
    min_pass: int
    results: dict[str, list[TestResult]]
    pass_counts: dict[str, int]
    passed: bool

    def to_csv(self) -> str:
        lines = ["test,trial,p_value,pass"]
        for name, trial_results in self.results.items():
            for i, r in enumerate(trial_results):
                lines.append(f"{name},{i},{r.p_value:.10g},{int(r.passed)}")
        return "\n".join(lines) + "\n"

    def format_table(self) -> str:
        width = max(len(name) for name in self.results)
        lines = [
            f"{'test'.ljust(width)}  passed  required",
            f"{'-' * width}  ------  --------",
        ]
        for name, count in self.pass_counts.items():
            lines.append(
                f"{name.ljust(width)}  {count:3d}/{self.trials:<3d} {self.min_pass:8d}"
            )
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(
            f"verdict: {verdict} "
            f"(alpha={self.alpha:g}, {self.n_bits} bits x {self.trials} trials)"
        )
        return "\n".join(lines) + "\n"


def min_pass_count(trials: int, alpha: float) -> int:
    """Minimum per-test passes under the SP 800-22 proportion bound.

    The expected pass proportion is 1 - alpha with a three-sigma
    allowance of sqrt(alpha (1 - alpha) / trials); any count at or
    above the floor of that bound is unremarkable.
    """
    bound = (1.0 - alpha) - 3.0 * math.sqrt(alpha * (1.0 - alpha) / trials)
    return max(0, math.floor(trials * bound))


def run_battery(
    seed,
    root,
    n_bits: int = DEFAULT_STREAM_BITS,
    trials: int = DEFAULT_TRIALS,
    alpha: float = DEFAULT_ALPHA,
    test_names=None,
    stream_factory=None,
) -> RandomnessReport:
    """Run the battery over ``trials`` independent streams.

    Every trial draws a fresh stream (chain labeled ``rs%04d`` by
    default; ``stream_factory(trial, n_bits)`` overrides the source)
    and runs each selected test on it at significance ``alpha``.
    """
    if trials < 20:
        # below ~20 trials the proportion bound has no resolving power
        raise InvalidParameterError(f"trials must be >= 20, got {trials}")
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError(f"alpha must be in (0, 1), got {alpha}")
    if test_names is None:
        test_names = list(ALL_TESTS)
    else:
        unknown = [t for t in test_names if t not in ALL_TESTS]
        if unknown:
            raise InvalidParameterError(f"unknown tests: {', '.join(unknown)}")
    if stream_factory is None:
        def stream_factory(trial: int, length: int) -> BitStream:
            return generate_stream(seed, root, b"rs%04d" % trial, length)

    results: dict[str, list[TestResult]] = {name: [] for name in test_names}
    for trial in range(trials):
        stream = stream_factory(trial, n_bits)
        for name in test_names:
            results[name].append(ALL_TESTS[name](stream, alpha=alpha))

    threshold = min_pass_count(trials, alpha)
    pass_counts = {
        name: sum(r.passed for r in trial_results)
        for name, trial_results in results.items()
    }
    verdict = all(count >= threshold for count in pass_counts.values())
    return RandomnessReport(
        n_bits=n_bits,
        trials=trials,
        alpha=alpha,
        min_pass=threshold,
        results=results,
        pass_counts=pass_counts,
        passed=verdict,
    )

"""Benchmark harness: config, parsing, comparison, report plumbing."""

import platform

import pytest

import kiss.bench as bench_mod
from kiss.bench import (
    PRIMITIVES,
    BenchCase,
    BenchConfig,
    BenchReport,
    bench_channel,
    bench_primitive,
    bench_primitives,
    bench_tls_baseline,
    compare_report,
    core_line_count,
    environment_fingerprint,
    headline_summary,
    parse_speed_output,
    _make_primitive_op,
    _measure,
    _percentile,
)
from kiss.errors import BenchError, InvalidParameterError


# -- configuration -----------------------------------------------------


def test_config_defaults_are_valid():
    BenchConfig().validate()


@pytest.mark.parametrize(
    "kwargs",
    [
        {"sizes": ()},
        {"sizes": (0,)},
        {"sizes": (-5,)},
        {"iterations": 0, "duration": None},
        {"iterations": -10, "duration": None},
        {"iterations": 500, "duration": None},  # too short to measure
        {"duration": 0.5},  # likewise
        {"duration": -1.0},
        {"iterations": None, "duration": None},
        {"samples": 0},
        {"warmup": -1},
    ],
)
def test_config_rejections(kwargs):
    with pytest.raises(InvalidParameterError):
        BenchConfig(**kwargs).validate()


@pytest.mark.parametrize(
    "kwargs",
    [
        {"iterations": 1000, "duration": None},
        {"duration": 1.0},
        {"iterations": 500, "duration": 2.0},  # duration carries it
    ],
)
def test_config_acceptable_shapes(kwargs):
    BenchConfig(**kwargs).validate()


# -- timing core, deterministically scripted ----------------------------


def _scripted_measure(monkeypatch, script, size=64):
    script = list(script)
    monkeypatch.setattr(bench_mod, "_run_batch", lambda op, n: script.pop(0))
    cfg = BenchConfig(sizes=(size,), iterations=1000, duration=None,
                      samples=10, warmup=0)
    return _measure(lambda: None, cfg, "scripted", size)


def test_measure_arithmetic(monkeypatch):
    case = _scripted_measure(monkeypatch, [0.010] * 10)
    assert case.ops_per_sec == pytest.approx(100_000.0, rel=1e-9)
    assert case.mb_per_sec == pytest.approx(6.4, rel=1e-9)
    assert case.p50_us == pytest.approx(10.0, rel=1e-9)
    assert case.p99_us == pytest.approx(10.0, rel=1e-9)
    assert case.flags == ()


def test_measure_flags_noise_without_failing(monkeypatch):
    case = _scripted_measure(monkeypatch, [0.010] * 9 + [0.020])
    assert case.flags == ("noisy",)
    assert not case.skipped
    assert case.p50_us == pytest.approx(10.0, rel=1e-9)
    assert case.p99_us == pytest.approx(19.1, rel=1e-9)


def test_percentile_interpolation():
    vals = [float(v) for v in range(1, 11)]
    assert _percentile(vals, 0.0) == 1.0
    assert _percentile(vals, 50.0) == 5.5
    assert _percentile(vals, 100.0) == 10.0
    assert _percentile(vals, 50.0) <= _percentile(vals, 99.0)
    assert _percentile([], 50.0) == 0.0


# -- primitive ops -----------------------------------------------------


@pytest.mark.parametrize("name", PRIMITIVES)
def test_every_primitive_op_runs(name):
    op = _make_primitive_op(name, 64)
    op()


def test_unknown_primitive_rejected():
    with pytest.raises(InvalidParameterError):
        _make_primitive_op("sign-dsa1024", 64)
    with pytest.raises(InvalidParameterError):
        bench_primitive("sign-dsa1024")


def test_seal_op_produces_framed_records():
    op = _make_primitive_op("idvv-seal-authonly", 64)
    first, second = op(), op()
    assert len(first) == len(second) == 25 + 64 + 32
    assert first != second  # sequence and tag advance every call


def test_bench_primitives_report_shape():
    cfg = BenchConfig(sizes=(64,), iterations=1000, duration=None,
                      samples=3, warmup=0)
    report = bench_primitives(cfg, names=("hash-sha256", "hmac-sha256"))
    assert report.suite == "primitives"
    assert [c.case for c in report.cases] == ["hash-sha256", "hmac-sha256"]
    for case in report.cases:
        assert case.ops_per_sec > 0
        assert case.p50_us <= case.p99_us
    with pytest.raises(InvalidParameterError):
        bench_primitives(cfg, names=("hash-sha256", "mystery"))


def test_hash_latency_grows_with_size():
    cfg = BenchConfig(sizes=(64, 65536), iterations=2000, duration=None,
                      samples=5, warmup=1)
    report = bench_primitive("hash-sha256", cfg)
    small, big = report.cases
    assert small.size_bytes == 64 and big.size_bytes == 65536
    assert small.p50_us < big.p50_us
    assert big.mb_per_sec > small.mb_per_sec  # hashing amortizes per byte


# -- channel loopback ---------------------------------------------------


def test_bench_channel_validates_arguments():
    with pytest.raises(InvalidParameterError):
        bench_channel("carrier-pigeon")
    with pytest.raises(InvalidParameterError):
        bench_channel("AEAD", msg_size=0)
    with pytest.raises(InvalidParameterError):
        bench_channel("AEAD", duration=0.0)


def test_bench_channel_plaintext_baseline_runs():
    report = bench_channel("plaintext-baseline", msg_size=256, duration=0.3)
    assert report.suite == "channel"
    (case,) = report.cases
    assert case.case == "channel-plaintext-baseline"
    assert case.size_bytes == 256
    assert case.ops_per_sec > 0
    assert case.p50_us <= case.p99_us


# -- external tool parsing ----------------------------------------------


SINGLE_SIZE_OUTPUT = """\
Doing AES-256-GCM ops for 1s on 256 size blocks: 1054836 AES-256-GCM ops in 0.99s
version: 3.0.13
built on: Wed Jan 31 00:00:00 2024 UTC
options: bn(64,64)
The 'numbers' are in 1000s of bytes per second processed.
type            256 bytes
AES-256-GCM    272856.27k
"""

MULTI_SIZE_OUTPUT = """\
The 'numbers' are in 1000s of bytes per second processed.
type             16 bytes     64 bytes    256 bytes   1024 bytes   8192 bytes
aes-128-cbc     123456.78k   234567.89k  345678.90k  456789.01k   567890.12k
aes-256-gcm      98765.43k   187654.32k  276543.21k  365432.10k   454321.09k
"""


def test_parse_single_size_table():
    rows = parse_speed_output(SINGLE_SIZE_OUTPUT)
    assert rows == {"AES-256-GCM": {256: pytest.approx(272_856_270.0)}}


def test_parse_multi_size_table():
    rows = parse_speed_output(MULTI_SIZE_OUTPUT)
    assert set(rows) == {"aes-128-cbc", "aes-256-gcm"}
    assert rows["aes-256-gcm"][64] == pytest.approx(187_654_320.0)
    assert rows["aes-128-cbc"][8192] == pytest.approx(567_890_120.0)
    assert set(rows["aes-256-gcm"]) == {16, 64, 256, 1024, 8192}


@pytest.mark.parametrize(
    "text",
    [
        "no table here at all\n",
        "type    apples oranges\n",  # header without byte sizes
        "type    256 bytes\nnothing that parses\n",
    ],
)
def test_parse_rejects_malformed_output(text):
    with pytest.raises(BenchError) as err:
        parse_speed_output(text)
    assert err.value.raw_output == text


def test_tls_baseline_missing_tool_degrades_to_skipped():
    report = bench_tls_baseline(
        BenchConfig(sizes=(64, 256)),
        command_template="definitely-not-installed-xyz speed -bytes {size}",
    )
    assert [c.size_bytes for c in report.cases] == [64, 256]
    assert all(c.skipped for c in report.cases)
    assert all("not found" in c.note for c in report.cases)


def test_tls_baseline_garbage_output_raises_with_raw():
    with pytest.raises(BenchError) as err:
        bench_tls_baseline(
            BenchConfig(sizes=(64,)),
            command_template="/bin/echo pretend speed table {size}",
        )
    assert "pretend speed table 64" in err.value.raw_output


def test_tls_baseline_nonzero_exit_raises():
    with pytest.raises(BenchError, match="exited 3"):
        bench_tls_baseline(
            BenchConfig(sizes=(64,)),
            command_template="sh -c 'exit 3'",
        )


# -- comparison ---------------------------------------------------------


def _case(name, size, ops, skipped=False):
    return BenchCase(name, size, ops, ops * size / 1e6, 1.0, 2.0, skipped=skipped)


def _report(name, *cases):
    return BenchReport(name, tuple(cases), {"cpu": "test", "python": "x"})


def test_compare_identical_reports_ratio_one():
    a = _report("one", _case("alpha", 64, 1000.0), _case("alpha", 512, 500.0))
    b = _report("two", _case("beta", 64, 1000.0), _case("beta", 512, 500.0))
    cmp = compare_report(a, b, baseline="alpha")
    assert cmp.baseline == "alpha"
    assert [r.ratio for r in cmp.rows] == [1.0, 1.0, 1.0, 1.0]


def test_compare_ratio_arithmetic_and_default_baseline():
    a = _report("one", _case("alpha", 64, 2000.0))
    b = _report("two", _case("beta", 64, 500.0))
    cmp = compare_report(a, b)  # first non-skipped case is the baseline
    assert cmp.baseline == "alpha"
    by_name = {r.case: r for r in cmp.rows}
    assert by_name["beta"].ratio == pytest.approx(0.25)
    assert by_name["alpha"].ratio == pytest.approx(1.0)


def test_compare_requires_two_reports():
    a = _report("one", _case("alpha", 64, 1000.0))
    with pytest.raises(InvalidParameterError):
        compare_report(a)


def test_compare_rejects_axis_mismatch():
    a = _report("one", _case("alpha", 64, 1000.0), _case("alpha", 512, 900.0))
    b = _report("two", _case("beta", 64, 1000.0))
    with pytest.raises(InvalidParameterError, match="covers sizes"):
        compare_report(a, b, baseline="alpha")


def test_compare_rejects_unknown_baseline():
    a = _report("one", _case("alpha", 64, 1000.0))
    b = _report("two", _case("beta", 64, 1000.0))
    with pytest.raises(InvalidParameterError):
        compare_report(a, b, baseline="gamma")


def test_compare_skipped_rows_have_no_ratio():
    a = _report("one", _case("alpha", 64, 1000.0))
    b = _report("two", _case("beta", 64, 0.0, skipped=True))
    cmp = compare_report(a, b, baseline="alpha")
    by_name = {r.case: r for r in cmp.rows}
    assert by_name["beta"].ratio is None
    assert by_name["beta"].skipped
    csv = cmp.to_csv()
    assert csv.splitlines()[0] == (
        "case,size_bytes,ops_per_sec,mb_per_sec,p50_us,p99_us,ratio"
    )
    assert csv.splitlines()[2].endswith(",")  # empty ratio cell
    assert "skipped" in cmp.to_markdown()


def test_report_csv_shape():
    report = _report("one", _case("alpha", 64, 1234.5), _case("alpha", 512, 678.9))
    lines = report.to_csv().strip().split("\n")
    assert lines[0] == "case,size_bytes,ops_per_sec,mb_per_sec,p50_us,p99_us"
    assert len(lines) == 3
    assert lines[1].startswith("alpha,64,1234.50,")


def test_report_markdown_mentions_environment():
    report = BenchReport(
        "primitives",
        (_case("alpha", 64, 1000.0),),
        {"cpu": "Example CPU", "python": "3.12.0", "timestamp": "sometime"},
    )
    text = report.format_markdown()
    assert "alpha" in text
    assert "Example CPU" in text


# -- headline -----------------------------------------------------------


def test_environment_fingerprint_keys():
    env = environment_fingerprint()
    assert set(env) == {"cpu", "python", "timestamp"}
    assert env["python"] == platform.python_version()


def test_core_line_count_is_stable_and_sane():
    count = core_line_count()
    assert count == core_line_count()
    assert 100 < count < 2000


def test_headline_reports_ratio_without_judgement():
    kiss = _report("channel", _case("channel-AUTH_ONLY", 1500, 10_000.0))
    tls = _report("tls", _case("tls-aes-256-gcm", 1500, 20_000.0))
    text = headline_summary(kiss, tls)
    assert "ratio 0.500" in text
    assert "source lines" in text
    lowered = text.lower()
    for verdict_word in ("pass", "fail", "threshold"):
        assert verdict_word not in lowered


def test_headline_survives_missing_external_row():
    kiss = _report("channel", _case("channel-AUTH_ONLY", 1500, 10_000.0))
    tls = _report("tls", _case("tls-aes-256-gcm", 512, 20_000.0))
    text = headline_summary(kiss, tls)
    assert "not available" in text
    assert "source lines" in text

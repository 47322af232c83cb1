"""End-to-end command-line behavior, driven through subprocesses."""

import os
import socket
import subprocess
import sys

import pytest

from oracles import chain_values_ref

from kiss.association import Mode, ProvisionFile, Role, read_provision_file

CLI = [sys.executable, "-m", "kiss.cli"]


def run_cli(*args, env_extra=None, timeout=120):
    env = os.environ.copy()
    env.setdefault("KISS_LOG", "error")
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        CLI + list(args), capture_output=True, text=True, env=env, timeout=timeout
    )


def _start_server(provision_path):
    """Spawn the echo server; return (process, bound_port)."""
    proc = subprocess.Popen(
        CLI + ["server", "--provision", str(provision_path)],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    line = proc.stderr.readline().strip()
    assert line.startswith("listening "), f"unexpected server banner: {line!r}"
    port = int(line.rpartition(":")[2])
    return proc, port


# -- provision ----------------------------------------------------------


def test_provision_writes_pair(tmp_path):
    result = run_cli("provision", "--out-dir", str(tmp_path))
    assert result.returncode == 0
    assoc_hex = result.stdout.strip()
    init_pf = read_provision_file(tmp_path / "initiator.prov")
    resp_pf = read_provision_file(tmp_path / "responder.prov")
    assert init_pf.assoc_id.hex() == assoc_hex
    assert (init_pf.role, resp_pf.role) == (Role.INITIATOR, Role.RESPONDER)
    assert init_pf.mode is Mode.AUTH_ONLY
    assert init_pf.seed == resp_pf.seed


def test_provision_honors_mode_and_window(tmp_path):
    result = run_cli(
        "provision", "--out-dir", str(tmp_path), "--mode", "aead", "--window", "64"
    )
    assert result.returncode == 0
    pf = read_provision_file(tmp_path / "initiator.prov")
    assert pf.mode is Mode.AEAD
    assert pf.resync_window == 64


def test_provision_unwritable_path_exits_one():
    result = run_cli("provision", "--out-dir", "/dev/null/nope")
    assert result.returncode == 1
    assert "error" in result.stderr.lower()


# -- usage errors --------------------------------------------------------


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["not-a-command"],
        ["bench"],  # --suite is required
        ["client", "--provision", "x", "--connect", "y:1",
         "--send", "a", "--count", "2"],  # mutually exclusive
        ["provision", "--window", "soon"],
    ],
)
def test_usage_errors_exit_two(argv):
    assert run_cli(*argv).returncode == 2


# -- vectors -------------------------------------------------------------


def _parse_kv_output(text):
    out = {}
    for line in text.strip().split("\n"):
        key, _, value = line.partition(" = ")
        out[key] = value
    return out


def test_vectors_default_match_reference_chain():
    result = run_cli("vectors")
    assert result.returncode == 0
    got = _parse_kv_output(result.stdout)
    ref = chain_values_ref(bytes(32), bytes(32), b"c2s", 3)
    assert got["seed"] == "00" * 32
    assert got["root"] == "00" * 32
    assert got["label"] == "c2s"
    for i in range(4):
        assert got[f"v{i}"] == ref[i].hex()


def test_vectors_custom_inputs():
    seed = "11" * 32
    root = "22" * 32
    result = run_cli(
        "vectors", "--seed", seed, "--root", root, "--label", "s2c", "--count", "2"
    )
    assert result.returncode == 0
    got = _parse_kv_output(result.stdout)
    ref = chain_values_ref(bytes.fromhex(seed), bytes.fromhex(root), b"s2c", 1)
    assert got["v0"] == ref[0].hex()
    assert got["v1"] == ref[1].hex()
    assert "v2" not in got


def test_vectors_rejects_bad_hex():
    result = run_cli("vectors", "--seed", "xyz")
    assert result.returncode == 1
    assert "error" in result.stderr


# -- server/client loop ----------------------------------------------------


def test_echo_round_trip_send(tmp_path):
    assert run_cli("provision", "--out-dir", str(tmp_path)).returncode == 0
    proc, port = _start_server(tmp_path / "responder.prov")
    try:
        client = run_cli(
            "client",
            "--provision", str(tmp_path / "initiator.prov"),
            "--connect", f"127.0.0.1:{port}",
            "--send", "hello channel",
        )
        assert client.returncode == 0, client.stderr
        assert client.stdout.strip() == "hello channel"
        out, err = proc.communicate(timeout=30)
        assert proc.returncode == 0, err
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.communicate()


def test_echo_round_trip_counted(tmp_path):
    assert run_cli(
        "provision", "--out-dir", str(tmp_path), "--mode", "aead"
    ).returncode == 0
    proc, port = _start_server(tmp_path / "responder.prov")
    try:
        client = run_cli(
            "client",
            "--provision", str(tmp_path / "initiator.prov"),
            "--connect", f"127.0.0.1:{port}",
            "--count", "25",
            env_extra={"KISS_LOG": "info"},
        )
        assert client.returncode == 0, client.stderr
        assert "25 records exchanged" in client.stderr
        out, err = proc.communicate(timeout=30)
        assert proc.returncode == 0, err
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.communicate()


def test_mismatched_secrets_fail_closed(tmp_path):
    # same association id, different seeds: both ends must error out
    common = dict(
        assoc_id=bytes.fromhex("0011223344556677"),
        mode=Mode.AUTH_ONLY,
        root=bytes(range(64, 96)),
    )
    resp = ProvisionFile(role=Role.RESPONDER, seed=bytes(range(32)), **common)
    init = ProvisionFile(role=Role.INITIATOR, seed=bytes(range(1, 33)), **common)
    (tmp_path / "responder.prov").write_text(resp.to_text())
    (tmp_path / "initiator.prov").write_text(init.to_text())

    proc, port = _start_server(tmp_path / "responder.prov")
    try:
        client = run_cli(
            "client",
            "--provision", str(tmp_path / "initiator.prov"),
            "--connect", f"127.0.0.1:{port}",
            "--send", "should never arrive",
        )
        assert client.returncode == 1
        assert "AuthenticationError" in client.stderr
        out, err = proc.communicate(timeout=30)
        assert proc.returncode == 1
        assert "AuthenticationError" in err
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.communicate()


def test_server_refuses_occupied_port(tmp_path):
    assert run_cli("provision", "--out-dir", str(tmp_path)).returncode == 0
    blocker = socket.socket()
    try:
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        result = run_cli(
            "server",
            "--provision", str(tmp_path / "responder.prov"),
            "--listen", f"127.0.0.1:{port}",
        )
        assert result.returncode == 1
        assert "error" in result.stderr
    finally:
        blocker.close()


def test_client_bad_address_exits_one(tmp_path):
    assert run_cli("provision", "--out-dir", str(tmp_path)).returncode == 0
    result = run_cli(
        "client",
        "--provision", str(tmp_path / "initiator.prov"),
        "--connect", "127.0.0.1",  # no port
    )
    assert result.returncode == 1
    assert "error" in result.stderr


# -- randomness -----------------------------------------------------------


def test_randomness_small_battery(tmp_path):
    csv_path = tmp_path / "battery.csv"
    result = run_cli(
        "randomness", "--bits", "70000", "--trials", "20", "--csv", str(csv_path)
    )
    assert result.returncode == 0
    assert "verdict: PASS" in result.stdout
    lines = csv_path.read_text().strip().split("\n")
    assert lines[0] == "test,trial,p_value,pass"
    assert len(lines) == 1 + 7 * 20


def test_randomness_rejects_bad_parameters():
    assert run_cli("randomness", "--bits", "70000", "--trials", "19").returncode == 1
    assert run_cli(
        "randomness", "--bits", "70000", "--trials", "20", "--alpha", "0"
    ).returncode == 1
    assert run_cli("randomness", "--seed", "abc").returncode == 1


# -- bench ----------------------------------------------------------------


def test_bench_primitives_cli(tmp_path):
    csv_path = tmp_path / "prim.csv"
    result = run_cli(
        "bench", "--suite", "primitives",
        "--sizes", "64", "--iterations", "1000", "--duration", "0.2",
        "--csv", str(csv_path),
    )
    assert result.returncode == 0, result.stderr
    for name in ("hash-sha256", "hmac-sha256", "aead-aes256gcm",
                 "sign-rsa2048", "sign-ecdsa-p256", "idvv-step",
                 "idvv-seal-authonly"):
        assert name in result.stdout
    lines = csv_path.read_text().strip().split("\n")
    assert lines[0] == "case,size_bytes,ops_per_sec,mb_per_sec,p50_us,p99_us"
    assert len(lines) == 1 + 7


def test_bench_tls_with_missing_tool_still_reports(tmp_path):
    csv_path = tmp_path / "tls.csv"
    result = run_cli(
        "bench", "--suite", "tls",
        "--msg-size", "256", "--duration", "1.0",
        "--tls-command", "definitely-not-installed-xyz speed {size}",
        "--csv", str(csv_path),
    )
    assert result.returncode == 0, result.stderr
    assert "skipped" in result.stdout
    assert "not available" in result.stdout
    assert "source lines" in result.stdout
    assert csv_path.read_text().startswith(
        "case,size_bytes,ops_per_sec,mb_per_sec,p50_us,p99_us,ratio"
    )


# -- logging contract -------------------------------------------------------


def test_invalid_log_level_warns_but_works(tmp_path):
    result = run_cli(
        "provision", "--out-dir", str(tmp_path), env_extra={"KISS_LOG": "chatty"}
    )
    assert result.returncode == 0
    assert "KISS_LOG" in result.stderr


def test_info_logging_reports_handshake(tmp_path):
    assert run_cli("provision", "--out-dir", str(tmp_path)).returncode == 0
    proc, port = _start_server(tmp_path / "responder.prov")
    try:
        client = run_cli(
            "client",
            "--provision", str(tmp_path / "initiator.prov"),
            "--connect", f"127.0.0.1:{port}",
            "--send", "log check",
            env_extra={"KISS_LOG": "info"},
        )
        assert client.returncode == 0
        assert "handshake complete" in client.stderr
        proc.communicate(timeout=30)
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.communicate()

import json
import shutil
import socket
import subprocess
import sys

import pytest

from uvmpc.cli import main
from uvmpc.field import ParameterError, is_probable_prime
from uvmpc.harness import (
    CSV_COLUMNS,
    BenchSpec,
    parse_mode,
    records_from_csv,
    records_to_csv,
    run_bitconv_bench,
    run_verify_bench,
)
from uvmpc.transport import ZERO_SESSION, Frame, MsgType, encode_frame


def test_mode_sweep_counters():
    recs = run_verify_bench(BenchSpec("mode", ["square", "product", "inverse"], {"parties": 3, "field_bits": 256, "vector_len": 100}))
    assert [r.mode for r in recs] == ["square", "product", "inverse"]
    assert all(r.status == "ok" for r in recs)
    by = {r.mode: r for r in recs}
    assert by["product"].field_mults == 2 * 100
    assert by["product"].field_mults < by["inverse"].field_mults
    assert by["inverse"].field_exps == 100
    assert by["square"].field_exps == 0


def test_square_naive_costs_more():
    recs = run_verify_bench(BenchSpec("mode", ["square", "square-naive"], {"parties": 5, "field_bits": 64, "vector_len": 10}))
    assert recs[0].field_mults < recs[1].field_mults
    assert recs[1].field_exps == 4 * 10


def test_parties_sweep_bytes():
    recs = run_verify_bench(BenchSpec("parties", [3, 5, 7], {"field_bits": 64, "vector_len": 10}))
    w = 8
    for r in recs:
        P = r.parties
        # resplit plus partials, P entries each, to P - 1 peers
        assert r.bytes_sent == 2 * P * (P - 1) * w
        # header (tag, N, P) plus P blinded entries and N aggregation entries
        assert r.client_bytes == P * (7 + (P + 10) * w)
        assert r.rounds == 2


def test_vector_len_sweep_rounds_constant():
    recs = run_verify_bench(BenchSpec("vector_len", [10, 100, 1000], {"field_bits": 64}))
    assert {r.rounds for r in recs} == {2}
    assert len({r.bytes_sent for r in recs}) == 1


def test_queries_sweep():
    recs = run_verify_bench(BenchSpec("queries", [1, 4], {"field_bits": 64, "vector_len": 5}))
    assert [r.queries for r in recs] == [1, 4]
    assert recs[0].bytes_sent == recs[1].bytes_sent


def test_bitconv_bench_width_four_exhaustive_matches_oracle():
    # every seed draws a different (sum, thresh) pair inside the window
    recs = []
    for seed in range(8):
        recs += run_bitconv_bench(BenchSpec("bit_width", [4], seed=seed, repetitions=2))
    assert all(r.status == "ok" for r in recs)
    assert all(r.field_bits == 4 for r in recs)


def test_bitconv_bench_counts_scale():
    recs = run_bitconv_bench(BenchSpec("bit_width", [8, 16]))
    assert all(r.status == "ok" for r in recs)
    assert recs[1].bgw_mults > recs[0].bgw_mults
    assert recs[1].rounds > recs[0].rounds


def test_csv_round_trip(tmp_path):
    out = tmp_path / "r.csv"
    recs = run_verify_bench(BenchSpec("parties", [3, 4], {"field_bits": 64, "vector_len": 4}, out=out))
    text = out.read_text()
    assert text.splitlines()[0].split(",") == CSV_COLUMNS
    again = records_from_csv(text)
    assert [(r.parties, r.bytes_sent, r.field_mults) for r in again] == [
        (r.parties, r.bytes_sent, r.field_mults) for r in recs
    ]
    assert records_to_csv(again) == text


def test_bench_config_validation():
    with pytest.raises(ParameterError):
        BenchSpec("colour")
    with pytest.raises(ParameterError):
        BenchSpec("mode", repetitions=0)
    with pytest.raises(ParameterError):
        BenchSpec("mode", fixed={"bogus": 1})
    with pytest.raises(ParameterError):
        run_verify_bench(BenchSpec("bit_width"))
    with pytest.raises(ParameterError):
        run_bitconv_bench(BenchSpec("mode"))
    assert BenchSpec("parties").values == [3, 5, 7, 9]


def test_parse_mode():
    assert parse_mode("square-naive") == (parse_mode("square")[0], True)
    with pytest.raises(ParameterError):
        parse_mode("product-naive")
    with pytest.raises(ParameterError):
        parse_mode("square-fast")


def test_failed_point_is_recorded_and_run_continues():
    # P=1 cannot split, so the first point fails and the second still runs
    recs = run_verify_bench(BenchSpec("parties", [1, 3], {"field_bits": 64, "vector_len": 3}))
    assert recs[0].status.startswith("failed")
    assert recs[1].status == "ok"


# -- CLI ------------------------------------------------------------------------


def test_cli_prime_gen(capsys):
    assert main(["prime-gen", "--bits", "256", "--seed", "7"]) == 0
    p = int(capsys.readouterr().out.strip(), 16)
    assert p.bit_length() == 256 and p >> 254 == 0b11 and is_probable_prime(p)


def test_console_script_installed():
    exe = shutil.which("uvmpc")
    cmd = [exe] if exe else [sys.executable, "-m", "uvmpc.cli"]
    out = subprocess.run(cmd + ["prime-gen", "--bits", "8", "--seed", "1"], capture_output=True, text=True)
    assert out.returncode == 0
    assert int(out.stdout, 16) in (193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251)


def test_cli_bench_verify(tmp_path):
    out = tmp_path / "r.csv"
    rc = main(["bench", "verify", "--sweep", "mode", "--parties", "3", "--field-bits", "256", "--n", "100", "--out", str(out)])
    assert rc == 0
    recs = records_from_csv(out.read_text())
    assert len(recs) >= 3


def test_cli_bench_bitconv(capsys):
    assert main(["bench", "bitconv", "--widths", "4,6", "--parties", "3"]) == 0
    recs = records_from_csv(capsys.readouterr().out)
    assert [r.bit_width for r in recs] == [4, 6]


def test_cli_config_file_fills_missing_flags(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"parties": 4, "field_bits": 64, "mode": "inverse"}))
    assert main(["bench", "verify", "--sweep", "vector_len", "--values", "3", "--config", str(cfg)]) == 0
    (rec,) = records_from_csv(capsys.readouterr().out)
    assert (rec.parties, rec.field_bits, rec.mode) == (4, 64, "inverse")
    # explicit flag wins
    assert main(["bench", "verify", "--sweep", "vector_len", "--values", "3", "--parties", "3", "--config", str(cfg)]) == 0
    (rec,) = records_from_csv(capsys.readouterr().out)
    assert rec.parties == 3


def test_cli_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"colour": 1}))
    assert main(["prime-gen", "--bits", "8", "--config", str(cfg)]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "usage"


def test_cli_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as err:
        main(["bench", "verify", "--sweep", "mode", "--bogus"])
    assert err.value.code == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "usage"
    assert main(["prime-gen", "--bits", "2"]) == 2


def test_cli_aggregate_and_audit(tmp_path, capsys):
    tr = tmp_path / "t.bin"
    rc = main(["aggregate", "--random-users", "6", "--n", "4", "--parties", "3", "--thresh", "2", "--seed", "1", "--transcript", str(tr)])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["accepted"] == 6
    assert sum(out["released"]) <= 6
    assert main(["audit", "transcript", str(tr)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["violations"] == []
    assert set(report["reveal_frames"]) <= {"0x01", "0x02", "0x03", "0x04"}


def test_cli_audit_flags_bit_reveal(tmp_path, capsys):
    tr = tmp_path / "bad.bin"
    ok = encode_frame(Frame(MsgType.REVEAL_SHARE, ZERO_SESSION, 1, b"\x04\x00\x00\x00\x00"))
    bad = encode_frame(Frame(MsgType.REVEAL_SHARE, ZERO_SESSION, 2, b"\x05\x00\x00\x00\x00"))
    tr.write_bytes(ok + bad)
    assert main(["audit", "transcript", str(tr)]) == 1
    report = json.loads(capsys.readouterr().out)
    assert report["violations"] == [{"frame": 1, "sender": 2, "purpose": 5}]
    tr.write_bytes(ok[:-2])
    assert main(["audit", "transcript", str(tr)]) == 1


def test_cli_abort_exit_3(capsys):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    rc = main([
        "client", "submit", "--parties", f"127.0.0.1:{port},127.0.0.1:{port}",
        "--field-bits", "16", "--index", "0", "--n", "3", "--timeout-ms", "500",
    ])
    assert rc == 3
    assert json.loads(capsys.readouterr().err)["error"] in ("protocol-abort", "io")


def _free_ports(k):
    socks = [socket.socket() for _ in range(k)]
    for s in socks:
        s.bind(("127.0.0.1", 0))
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return ports


def test_cli_verifier_daemons_and_client():
    roster = ",".join(f"127.0.0.1:{p}" for p in _free_ports(3))
    common = ["--parties", roster, "--field-bits", "64", "--timeout-ms", "20000"]
    procs = [
        subprocess.Popen(
            [sys.executable, "-m", "uvmpc.cli", "verifier", "--id", str(i), "--users", "2"] + common,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        for i in (1, 2, 3)
    ]
    try:
        clients = [
            subprocess.Popen(
                [sys.executable, "-m", "uvmpc.cli", "client", "submit", "--mode", "product"] + args + common,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
            )
            for args in (["--index", "1", "--n", "4"], ["--vector", "0,2,0,0"])
        ]
        replies = [json.loads(c.communicate(timeout=60)[0]) for c in clients]
        assert [r["accepted"] for r in replies] == [True, False]
        outs = [json.loads(p.communicate(timeout=60)[0]) for p in procs]
        assert all(p.returncode == 0 for p in procs)
        assert len({json.dumps(o["verdicts"], sort_keys=True) for o in outs}) == 1
    finally:
        for p in procs:
            p.kill()


def test_naive_square_gap_over_product_grows_with_field():
    gaps = []
    for bits in (128, 512, 2048):
        fixed = {"field_bits": bits, "parties": 5, "vector_len": 10}
        naive, product = run_verify_bench(BenchSpec("mode", ["square-naive", "product"], fixed))
        assert naive.field_mults > product.field_mults
        gaps.append(naive.limb_mults - product.limb_mults)
    assert gaps[0] < gaps[1] < gaps[2]

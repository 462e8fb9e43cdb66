import hashlib
import json

import pytest

from simulacra.cli import EXIT_OK, EXIT_VALIDATION, EXIT_VERIFY, main

SMALL_ECO = ["--set", "ecology.field_size=32", "--set", 'ecology.species=[{"count":100}]',
             "--set", "ecology.termite_field=16", "--set", "ecology.n_boids=20",
             "--set", "ecology.boids_world=32.0"]


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_gen_data_is_deterministic(tmp_path, capsys):
    args = ["gen-data", "--seed", "7", "--rows", "180000", "--channels", "131"]
    assert main(args + ["--out", str(tmp_path / "a.snr")]) == EXIT_OK
    first = json.loads(capsys.readouterr().out)
    assert main(args + ["--out", str(tmp_path / "b.snr")]) == EXIT_OK
    second = json.loads(capsys.readouterr().out)
    assert _sha(tmp_path / "a.snr") == _sha(tmp_path / "b.snr") == first["sha256"]
    assert first["sha256"] == second["sha256"]
    assert _sha(tmp_path / "a.meta.csv") == _sha(tmp_path / "b.meta.csv")
    # 18-byte header then ceil(131 / 8) = 17 bytes per row
    assert first["bytes"] == (tmp_path / "a.snr").stat().st_size == 18 + 180_000 * 17
    assert first["rows"] == 180_000 and len(first["backbone_channels"]) == 27


def test_gen_data_csv(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["gen-data", "--rows", "50", "--channels", "30", "--out", str(out)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["format"] == "csv"
    assert len(out.read_text().splitlines()) == 51


@pytest.mark.parametrize("argv", [
    ["gen-data", "--channels", "0"],
    ["gen-data", "--rows", "-3"],
    ["bench", "--physarum-counts", "0"],
    ["nope"],
    ["config", "--set", "nope=1"],
    ["config", "--set", "missing-equals"],
    ["sync", "--loss", "2"],
])
def test_usage_errors_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as info:
        rc = main(argv)
        raise SystemExit(rc)
    assert info.value.code == EXIT_VALIDATION
    assert capsys.readouterr().err


def test_unwritable_output_is_a_runtime_failure(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    rc = main(["gen-data", "--rows", "10", "--channels", "30",
               "--out", str(blocker / "sub" / "r.snr")])
    assert rc == 2
    assert "gen-data" in capsys.readouterr().err


def test_run_dumps_ten_composites(tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["run", "--rows", "10000", "--dump-every", "1000", "--out", str(out)] + SMALL_ECO)
    assert rc == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["rows"] == 10_000 and summary["dumps"] == 10
    assert len(list((out / "frames").glob("composite_*.ppm"))) == 10
    assert len((out / "rows.jsonl").read_text().splitlines()) == 10_000


def test_config_round_trip_gives_same_run(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    assert main(["config", "--rows", "500", "--seed", "3", "--write", str(cfg)] + SMALL_ECO) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    a = json.loads(capsys.readouterr().out)
    assert main(["run", "--rows", "500", "--seed", "3", "--out", str(tmp_path / "b")]
                + SMALL_ECO) == 0
    b = json.loads(capsys.readouterr().out)
    assert a["digests"] == b["digests"]


def test_config_prints_defaults(capsys):
    assert main(["config"]) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed["playback"]["dilation"] == 30.0 and printed["seed"] == 0


def test_verify_passes_clean(capsys):
    assert main(["verify"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("mapping_endpoints", "mass_conservation", "codec_roundtrip", "determinism",
                 "burst_detection"):
        assert f"[PASS] {name}: measured=" in out
        assert "expected=" in out


def test_verify_fault_injection_names_the_check(capsys):
    assert main(["verify", "--inject-decay", "1.01"]) == EXIT_VERIFY
    out = capsys.readouterr().out
    assert "[FAIL] mass_conservation" in out
    assert "[PASS] codec_roundtrip" in out


def test_verify_json_only(capsys):
    assert main(["verify", "--only", "codec_roundtrip", "--json"]) == EXIT_OK
    (res,) = json.loads(capsys.readouterr().out)
    assert res["passed"] is True


def test_bench_csv_one_line_per_model_and_count(tmp_path, capsys):
    csv_path = tmp_path / "b.csv"
    rc = main(["bench", "--physarum-counts", "1000,2000", "--boids-counts", "100,200",
               "--field", "64", "--repeats", "1", "--csv", str(csv_path)])
    assert rc == EXIT_OK
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("model,backend,count")
    keys = [tuple(ln.split(",")[:3:2]) for ln in lines[1:]]
    assert keys == [("physarum", "1000"), ("physarum", "2000"), ("boids_naive", "100"),
                    ("boids_naive", "200"), ("boids_grid", "100"), ("boids_grid", "200")]
    assert capsys.readouterr().out == csv_path.read_text()


def test_sync_command(capsys):
    assert main(["sync", "--rows", "3000", "--max-skew", "1"]) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert rep["max_skew_rows"] <= 1
    assert main(["sync", "--rows", "2000", "--latency-ms", "0", "--jitter-ms", "200",
                 "--max-skew", "1"]) == EXIT_VERIFY

import csv
from pathlib import Path

import pytest

from ceas_sim.cli import EXIT_CONFIG, EXIT_OK, EXIT_STALL, EXIT_VALIDATION, main, worker_count
from ceas_sim.errors import ConfigError
from ceas_sim.metrics_io import CSV_HEADER

DATA = Path(__file__).parent / "data"
SMALL = "n_nodes = 20\nrounds = {rounds}\nsamples_per_node = 100\neval_samples = 2000\nmin_active = 5\n"


def _cfg(tmp_path, rounds=12, extra=""):
    path = tmp_path / "c.cfg"
    path.write_text(SMALL.format(rounds=rounds) + extra)
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_writes_csv_and_summary(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", "--config", _cfg(tmp_path), "--seed", "3", "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "metrics_ceas_seed3.csv")
    assert tuple(rows[0]) == CSV_HEADER
    assert [int(r[0]) for r in rows[1:]] == list(range(1, 13))
    summary = (out / "summary_ceas_seed3.txt").read_text()
    for word in ("accuracy", "utilisation", "isolation"):
        assert word in summary
    assert "accuracy" in capsys.readouterr().out


def test_run_with_defaults_has_300_rows(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--seed", "1", "--out", str(out)]) == EXIT_OK
    assert len(_rows(out / "metrics_ceas_seed1.csv")) == 301


def test_run_zero_rounds_header_only(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", _cfg(tmp_path, rounds=0), "--out", str(out)]) == EXIT_OK
    assert (out / "metrics_ceas_seed1.csv").read_text() == ",".join(CSV_HEADER) + "\n"


def test_run_is_byte_identical(tmp_path):
    cfg = _cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["run", "--config", cfg, "--seed", "5", "--out", str(out), "--protocol", "random-baseline"]) == 0
    assert (a / "metrics_random-baseline_seed5.csv").read_bytes() == (b / "metrics_random-baseline_seed5.csv").read_bytes()


def test_golden_csv(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", str(DATA / "golden.cfg"), "--seed", "7", "--out", str(out)]) == EXIT_OK
    assert (out / "metrics_ceas_seed7.csv").read_text() == (DATA / "golden_metrics.csv").read_text()


@pytest.mark.parametrize("text", ["n_nodes = 1\n", "bogus_key = 3\n", "rounds = ten\n", "no equals sign\n"])
def test_bad_config_exits_2(tmp_path, capsys, text):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "configuration error" in err
    key = text.split("=")[0].strip()
    if "=" in text:
        assert key in err


def test_missing_config_exits_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_stall_exits_3(tmp_path, capsys):
    # Zero stamp mass: without forgery every reported stamp underflows to zero.
    cfg = _cfg(tmp_path, rounds=5, extra="process_distance = 1000\nforge_stamps = false\n")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_STALL
    assert "stall at round 1" in capsys.readouterr().err
    assert len(_rows(tmp_path / "o" / "metrics_ceas_seed1.csv")) == 1


def test_sweep_plot_pipeline(tmp_path, monkeypatch):
    monkeypatch.setenv("CEAS_THREADS", "2")
    out = tmp_path / "s"
    assert main(["sweep", "--config", _cfg(tmp_path, rounds=8), "--seeds", "1..3", "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "sweep.csv")
    assert len(rows) == 1 + 3 * 2 * 8
    keys = [(r[1], int(r[2]), int(r[0])) for r in rows[1:]]
    assert keys == sorted(keys, key=lambda k: (k[0] != "ceas", k[1], k[2]))
    agg = _rows(out / "aggregate.csv")
    assert len(agg) == 1 + 2 * 8
    std_cols = [i for i, h in enumerate(agg[0]) if h.endswith("_std")]
    assert std_cols and all(float(r[i]) >= 0 for r in agg[1:] for i in std_cols)
    assert (out / "summary.txt").read_text().count("\n") >= 6

    img = tmp_path / "env.svg"
    assert main(["plot", "--in", str(out / "sweep.csv"), "--out", str(img)]) == EXIT_OK
    first = img.read_bytes()
    assert len(first) > 0
    assert main(["plot", "--in", str(out / "sweep.csv"), "--out", str(img)]) == EXIT_OK
    assert img.read_bytes() == first


def test_sweep_serial_matches_parallel(tmp_path, monkeypatch):
    cfg = _cfg(tmp_path, rounds=6)
    outs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("CEAS_THREADS", threads)
        out = tmp_path / f"t{threads}"
        assert main(["sweep", "--config", cfg, "--seeds", "2..3", "--out", str(out)]) == EXIT_OK
        outs.append((out / "sweep.csv").read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.parametrize("text", ["round,protocol\n1,ceas\n", ",".join(CSV_HEADER) + "\n", ",".join(CSV_HEADER) + "\nx,ceas,1,0.5,1,0,20,0.9,0\n"])
def test_plot_rejects_malformed_csv(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    assert main(["plot", "--in", str(path), "--out", str(tmp_path / "x.svg")]) == EXIT_CONFIG


def test_bad_seed_range(tmp_path):
    assert main(["sweep", "--seeds", "5..2", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_worker_count(monkeypatch):
    monkeypatch.setenv("CEAS_THREADS", "3")
    assert worker_count(20) == 3 and worker_count(2) == 2
    monkeypatch.delenv("CEAS_THREADS")
    assert worker_count(1) == 1
    for bad in ("0", "many"):
        monkeypatch.setenv("CEAS_THREADS", bad)
        with pytest.raises(ConfigError):
            worker_count(4)


def test_invalid_threads_exit_2(tmp_path, monkeypatch):
    monkeypatch.setenv("CEAS_THREADS", "zero")
    assert main(["sweep", "--config", _cfg(tmp_path, rounds=2), "--seeds", "1..2", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_validate_and_negative_control(capsys):
    assert main(["validate"]) == EXIT_OK
    table = capsys.readouterr().out
    assert table.count("PASS") >= 5 and "FAIL" not in table
    assert main(["validate", "--inject-fault", "inverse-variance"]) == EXIT_VALIDATION
    captured = capsys.readouterr()
    assert "FAIL" in captured.out and "inverse" in captured.err

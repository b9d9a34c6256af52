import math

import pytest

from rsma_isac.cli import main
from rsma_isac.harness import CSV_COLUMNS, read_csv

CONFIG = """
[system]
n_tx = 4
n_rx = 4
n_rf = 3
n_users = 2

[sweep]
kind = scnr
values = 5, 10
schemes = RsmaHybrid
profiles = LowCorrelation
seeds = 0:2
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(CONFIG, encoding="utf-8")
    return path


def test_validate(config, capsys):
    assert main(["validate", str(config)]) == 0
    assert "4 runs" in capsys.readouterr().out


def test_validate_reports_key(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(CONFIG.replace("n_rf = 3", "n_rf = 2"))
    assert main(["validate", str(bad)]) == 2
    assert "system.n_rf" in capsys.readouterr().err


def test_missing_file(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "none.ini")]) == 1
    assert "not found" in capsys.readouterr().err


def test_run_writes_outputs(config, tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(config), "--output-dir", str(out), "--jobs", "1", "--quiet"]) == 0
    for name in ("runs.csv", "aggregate.csv", "figure.csv", "wsr.svg"):
        assert (out / name).exists()
    recs = read_csv(out / "runs.csv")
    assert len(recs) == 4 and all(r.sweep_kind == "ScnrSweep" for r in recs)
    assert (out / "runs.csv").read_text().splitlines()[0] == ",".join(CSV_COLUMNS)


def test_trace_subcommand(config, tmp_path, capsys):
    out = tmp_path / "tr"
    assert main(["trace", str(config), "--seed", "1", "--output-dir", str(out)]) == 0
    files = list(out.glob("trace_*seed1.csv"))
    assert len(files) == 1
    assert files[0].read_text().startswith("outer,inner,al_objective")


def test_seed_required(config):
    with pytest.raises(SystemExit):
        main(["trace", str(config)])

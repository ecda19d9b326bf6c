import json

import pytest

from stgmsfem.cli import main


@pytest.fixture(scope="module")
def sanity_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "run"
    code = main(["reproduce", "--config", "constant-sanity", "--out", str(out), "--no-cache"])
    return code, out


def test_reproduce_writes_outputs(sanity_run, capsys):
    code, out = sanity_run
    assert code == 0
    for name in ("table1.csv", "compare_poly.csv", "lambda_star.csv", "spectrum.csv", "run.json"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "run.json").read_text())
    assert manifest["name"] == "constant-sanity"
    assert set(manifest["outputs_sha256"]) >= {"table1.csv", "spectrum.csv"}
    rows = (out / "table1.csv").read_text().splitlines()
    assert rows[0] == "L,dim,snapshot_ratio,e1,e2" and len(rows) == 3
    assert all(float(r.split(",")[3]) <= 1e-12 for r in rows[1:])


def test_report_command(sanity_run, capsys):
    _, out = sanity_run
    assert main(["report", "--out", str(out), "--config", "constant-sanity"]) == 0
    text = (out / "report.txt").read_text()
    assert "Errors against the fine solution" in text and text in capsys.readouterr().out


def test_report_without_tables_fails(tmp_path):
    assert main(["report", "--out", str(tmp_path), "--config", "constant-sanity"]) == 1


def test_unknown_preset_returns_2(tmp_path):
    assert main(["solve", "--config", "no-such-preset", "--out", str(tmp_path)]) == 2


def test_invalid_toml_returns_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text('[problem]\nu0 = "sin(t)"\n')
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_bad_l_list_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["solve", "--L", "1,x"])
    assert info.value.code == 2

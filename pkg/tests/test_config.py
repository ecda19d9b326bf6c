import pytest

from stgmsfem.config import PRESETS, RunConfig, from_dict, load_config, preset


def test_presets_validate():
    for name in PRESETS:
        cfg = preset(name)
        assert cfg.name == name
    assert preset("example2-desk").problem.u0 == "1-x*y"
    assert preset("example1-full").mesh.refine_space == 10


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset("nope")


def test_toml_file(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('preset = "constant-sanity"\n[method]\nL = [2, 4]\nmode = "dg"\n[problem]\nu0 = "x"\n')
    cfg = load_config(p)
    assert cfg.name == "run" and cfg.method.L == (2, 4) and cfg.method.mode == "dg"
    assert cfg.problem.u0 == "x" and cfg.mesh.nx_coarse == 4


def test_kappa_file_resolved_relative_to_config(tmp_path):
    (tmp_path / "k.txt").write_text("1 1\n1\n")
    p = tmp_path / "run.toml"
    p.write_text('[velocity]\nkappa_file = "k.txt"\n')
    assert load_config(p).velocity.kappa_file == "k.txt"
    p.write_text('[velocity]\nkappa_file = "missing.txt"\n')
    with pytest.raises(FileNotFoundError):
        load_config(p)


@pytest.mark.parametrize("data", [
    {"bogus": {}}, {"mesh": 3}, {"mesh": {"nx": 3}}, {"method": {"mode": "fem"}},
    {"velocity": {"source": "file"}}, {"problem": {"u0": "sin(t)"}}, {"problem": {"g": "1 +"}},
    {"method": {"L": [0]}}, {"method": {"poly_degrees": [0]}},
])
def test_invalid(data):
    with pytest.raises(ValueError):
        from_dict(data)


def test_replace_and_round_trip():
    cfg = RunConfig().replace(method={"mode": "dg", "L": (1, 2)})
    assert cfg.method.mode == "dg" and cfg.method.L == (1, 2) and cfg.method.pod_tol == 1e-8
    d = cfg.to_dict()
    assert d["method"]["mode"] == "dg" and d["mesh"]["nx_coarse"] == RunConfig().mesh.nx_coarse

import json

import pytest

from wicknls.config import defaults, describe_defaults, parse_config, parse_config_text
from wicknls.exceptions import ConfigError, HashMismatchError
from wicknls.io import check_same_hash, read_csv, staged_output, write_csv, write_json

MINIMAL = "[lattice]\ndimension = 1\nn_cut = 16\n"


def test_minimal_config_fills_defaults():
    cfg = parse_config_text(MINIMAL)
    d = defaults()
    assert cfg["lattice"] == {"dimension": 1, "n_cut": 16}
    for sec in d:
        if sec != "lattice":
            assert cfg[sec] == d[sec]


def test_positive_beta_rejected():
    with pytest.raises(ConfigError, match="beta must be < 0"):
        parse_config_text("[measure]\nbeta = 0.1\n")


@pytest.mark.parametrize("text", [
    "[lattice]\nbogus = 1\n",
    "[nowhere]\nx = 1\n",
    "[lattice]\nn_cut = eight\n",
    "[lattice]\ndimension = 3\n",
    "[flow]\nintegrator = euler\n",
    "[flow]\nangular_convention = -1\n",
    "[invariance]\nalpha = 2\n",
    "not an ini file",
])
def test_malformed_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_effective_config_round_trip(tmp_path):
    cfg = parse_config_text(MINIMAL + "[flow]\ndt = 0.0025\nangular_convention = 2pi\n[level]\nr = 1.5\n")
    path = tmp_path / "effective.ini"
    path.write_text(cfg.to_ini())
    again = parse_config(path)
    assert again.hash == cfg.hash and again.values == cfg.values


def test_hash_tracks_content():
    a = parse_config_text(MINIMAL)
    assert a.with_overrides(seed=5).hash != a.hash
    assert a.with_overrides().hash == a.hash
    assert len(a.hash) == 16


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "absent.ini")


def test_describe_defaults_lists_every_section():
    text = describe_defaults()
    for sec in defaults():
        assert f"[{sec}]" in text


def test_csv_round_trip_and_hash_refusal(tmp_path):
    rows = [dict(N=4, value=0.1 + 0.2), dict(N=8, value=1e-300)]
    write_csv(tmp_path / "a.csv", rows, ["N", "value"], "aaaa")
    h, back = read_csv(tmp_path / "a.csv")
    assert h == "aaaa" and float(back[0]["value"]) == 0.1 + 0.2 and float(back[1]["value"]) == 1e-300
    write_json(tmp_path / "b.json", {"x": 1}, "aaaa")
    assert check_same_hash([str(tmp_path / "a.csv"), str(tmp_path / "b.json")]) == "aaaa"
    write_json(tmp_path / "c.json", {"x": 1}, "bbbb")
    assert json.loads((tmp_path / "c.json").read_text())["config_hash"] == "bbbb"
    with pytest.raises(HashMismatchError):
        check_same_hash([str(tmp_path / "a.csv"), str(tmp_path / "c.json")])


def test_staged_output_leaves_nothing_on_error(tmp_path):
    out = tmp_path / "run"
    with pytest.raises(RuntimeError):
        with staged_output(str(out)) as scratch:
            (tmp_path / "run_marker").write_text("")
            open(f"{scratch}/partial.csv", "w").close()
            raise RuntimeError("boom")
    assert not out.exists()
    assert [p.name for p in tmp_path.iterdir()] == ["run_marker"]
    with staged_output(str(out)) as scratch:
        open(f"{scratch}/ok.csv", "w").close()
    assert [p.name for p in out.iterdir()] == ["ok.csv"]

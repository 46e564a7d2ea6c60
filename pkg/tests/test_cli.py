from __future__ import annotations

import csv
import json
import math

import pytest

from primeorbit import __version__, cli
from primeorbit.config import ConfigError, ExperimentConfig, from_dict, load_catalog, load_config, map_from_entry, parse_number
from primeorbit.thermo import NumericFailure


def run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path)])


def read_csv(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith(f"# primeorbit {__version__} config ")
    return list(csv.reader(lines[1:]))


def test_parse_number():
    assert parse_number("2-3i") == 2 - 3j
    assert math.isinf(parse_number("inf").real)
    assert parse_number(4) == 4


def test_catalog_entries():
    cat = load_catalog()
    assert "lattes4" in cat
    f = map_from_entry(cat["lattes4"])
    assert f.degree == 4
    bad = dict(cat["lattes4"], postcritical=["0", "1", "2", "inf"])
    with pytest.raises(ConfigError):
        map_from_entry(bad)


def test_config_validation_and_hash(tmp_path):
    a = ExperimentConfig()
    b = from_dict({"out": "elsewhere", "verify": True})
    assert a.hash == b.hash
    assert from_dict({"seed": 1}).hash != a.hash
    for bad in ({"N_max": 0}, {"potential": "wave:1"}, {"tolerances": {"tau_x": 1}}, {"tolerances": {"tau_root": 0}}, {"nope": 1}, {"numerator": [1, 0, 1]}):
        with pytest.raises(ConfigError):
            from_dict(bad)
    p = tmp_path / "exp.toml"
    p.write_text('potential = "constant:2"\nN_max = 3\n[tolerances]\ntau_dedupe = 1e-9\n')
    cfg = load_config(p, {"N_max": 4, "seed": None})
    assert cfg.potential == "constant:2" and cfg.N_max == 4
    assert cfg.tolerances["tau_dedupe"] == 1e-9 and cfg.tolerances["tau_root"] > 0
    j = tmp_path / "exp.json"
    j.write_text(json.dumps({"numerator": ["1", "0", "2", "0", "1"], "denominator": ["0", "-4", "0", "4"]}))
    assert load_config(j).rational_map().degree == 4


def test_catalog_command(capsys):
    assert cli.main(["catalog"]) == 0
    assert json.loads(capsys.readouterr().out)[0]["name"] == "lattes4"


def test_tiles_level_3(tmp_path):
    assert run(tmp_path, "tiles", "--level", "3") == 0
    rows = read_csv(tmp_path / "tiles_L3.csv")
    assert rows[0] == ["word", "side0", "re", "im", "diam_estimate"]
    assert len(rows) - 1 == 128
    summary = json.loads((tmp_path / "tiles_L3.json").read_text())
    assert summary["version"] == __version__ and summary["black"] == summary["white"] == 64


def test_s0_constant(tmp_path, capsys):
    assert run(tmp_path, "s0", "--potential", "constant:1", "--level", "3") == 0
    out = capsys.readouterr().out
    assert "s0 = 1.386294" in out
    rec = json.loads((tmp_path / "s0.json").read_text())
    assert abs(rec["s0"] - math.log(4)) < 1e-7 and rec["residual"] < 1e-7


def test_verify_reruns_are_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        assert cli.main(["orbits", "--nmax", "3", "--verify", "--out", str(d)]) == 0
        assert cli.main(["pressure", "--depth", "5", "--verify", "--out", str(d)]) == 0
        outs.append([(d / n).read_bytes() for n in ("orbits.csv", "orbits.json", "pressure.csv")])
    assert outs[0] == outs[1]
    rows = read_csv(tmp_path / "0" / "orbits.csv")
    assert rows[0] == ["period", "re", "im", "weighted_length", "degree_weight", "word", "primitive"]
    # infinity is a fixed point and is written as inf
    assert any(r[1] == "inf" for r in rows[1:])


def test_count_writes_csv_and_svg(tmp_path):
    assert run(tmp_path, "count", "--nmax", "4") == 0
    rows = read_csv(tmp_path / "count.csv")
    assert rows[0] == ["T", "pi", "li", "ratio", "secondary"]
    svg = (tmp_path / "count.svg").read_text()
    assert svg.startswith("<svg") and "config" in svg
    assert json.loads((tmp_path / "count.json").read_text())["oscillating"] is False


def test_zeta_sni_cohom_decay(tmp_path):
    assert run(tmp_path, "zeta", "--nmax", "3", "--s", "2,1.5+3i") == 0
    assert run(tmp_path, "sni", "--depth", "6") == 0
    assert run(tmp_path, "cohom", "--nmax", "4") == 0
    assert run(tmp_path, "probe-decay", "--s", "1.39+20i", "--level", "4") == 0
    rec = json.loads((tmp_path / "sni.json").read_text())
    assert rec["epsilon_estimate (empirical)"] > 0
    for name in ("zeta.json", "sni.json", "cohom.json", "decay.json"):
        assert "config_hash" in json.loads((tmp_path / name).read_text())


def test_exit_codes(tmp_path, monkeypatch, capsys):
    assert run(tmp_path, "tiles", "--map", "nope") == 2
    assert "unknown map" in capsys.readouterr().err
    assert run(tmp_path, "s0", "--potential", "constant:-1") == 2
    assert run(tmp_path, "count", "--tgrid", "1:0:1") == 2
    assert cli.main(["tiles", "--config", str(tmp_path / "missing.toml")]) == 2

    def boom(args, cfg):
        raise NumericFailure("no convergence")

    monkeypatch.setitem(cli.COMMANDS, "s0", boom)
    assert run(tmp_path, "s0") == 3

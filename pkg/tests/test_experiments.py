import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scenery_homog import cli
from scenery_homog.errors import ConfigError, DomainError
from scenery_homog.experiments import (config_hash, emit, read_table, resolve_config, run,
                                       trapezoid_eq2_oracle, validate_config)


@pytest.mark.parametrize("config, pointer", [
    ({"kind": "nope"}, "/kind"),
    ({"kind": "homogenize", "t": -1}, "/t"),
    ({"kind": "homogenize", "budget": {"n_paths": 1}}, "/budget/n_paths"),
    ({"kind": "homogenize", "model": {"d": 9}}, "/model/d"),
    ({"kind": "spde", "moments": [[1]]}, "/moments/0"),
    ({"kind": "field_check", "budget": {"n_realizations": 50}}, "/budget/n_realizations"),
    ({"kind": "effective", "bogus": 1}, "/"),
])
def test_schema_pointer(config, pointer):
    with pytest.raises(ConfigError) as exc:
        validate_config(config)
    assert exc.value.pointer == pointer


def test_resolve_fills_defaults():
    cfg = resolve_config({"kind": "homogenize", "model": {"d": 2}}, seed=9, output="o")
    assert cfg["x"] == [0.0, 0.0]
    assert cfg["initial"]["kappa"] == [1.0, 0.0]
    assert cfg["master_seed"] == 9 and cfg["output"] == "o"
    assert cfg["budget"]["n_paths"] == 10000


def test_resolve_rejects_tapered_without_radius():
    with pytest.raises(ConfigError) as exc:
        resolve_config({"kind": "effective", "model": {"kind": "tapered_gaussian"}})
    assert exc.value.pointer == "/model/taper_radius"


def test_config_hash_ignores_output():
    a = resolve_config({"kind": "effective"}, output="a")
    b = resolve_config({"kind": "effective"}, output="b")
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(resolve_config({"kind": "effective"}, seed=1))


finite = st.floats(allow_nan=False, allow_infinity=False)


@given(st.lists(st.tuples(finite, st.integers(-10**6, 10**6), st.booleans()), min_size=1, max_size=5))
def test_emit_round_trip(tmp_path_factory, items):
    d = tmp_path_factory.mktemp("rt")
    rows = [{"a": a, "n": n, "ok": ok} for a, n, ok in items]
    for fmt in ("csv", "json"):
        p = emit(rows, fmt, d / f"t.{fmt}")
        back = read_table(p)
        assert back == rows
        for r, s in zip(rows, back):
            assert type(s["a"]) is float and np.float64(s["a"]).tobytes() == np.float64(r["a"]).tobytes()


def test_emit_nonfinite(tmp_path):
    rows = [{"v": math.nan, "w": math.inf}]
    back = read_table(emit(rows, "csv", tmp_path / "x.csv"))
    assert math.isnan(back[0]["v"]) and back[0]["w"] == math.inf
    text = (emit(rows, "json", tmp_path / "x.json") and (tmp_path / "x.json").read_text())
    assert "NaN" in text and "Infinity" in text


def test_emit_one_row_and_columns(tmp_path):
    p = emit([{"a": 1.0, "b": 2, "extra": 3}], "csv", tmp_path / "one.csv", columns=["a", "b"])
    assert open(p).read() == "a,b\n1.0,2\n"


def test_emit_errors(tmp_path):
    with pytest.raises(DomainError):
        emit([], "csv", tmp_path / "e.csv")
    with pytest.raises(OSError, match="missing"):
        emit([{"a": 1}], "csv", tmp_path / "missing" / "e.csv")


def test_trapezoid_oracle_independent(gauss):
    assert trapezoid_eq2_oracle(gauss) == pytest.approx(0.62508466758116, rel=1e-7)


def test_run_effective(tmp_path):
    man = run({"kind": "effective"}, out_dir=tmp_path)
    assert man.passed
    assert set(man.files) >= {"results.json"}
    res = json.loads((tmp_path / "results.json").read_text())
    assert res["config_hash"] == man.config_hash
    assert all(not c["check"].endswith("runtime") for c in res["checks"])


def _small_homogenize(out, workers):
    cfg = {"kind": "homogenize", "alphas": [2], "eps_schedule": [0.5, 0.35], "J": 4,
           "budget": {"n_paths": 300, "n_fields": 2}}
    run(cfg, out_dir=out, workers=workers)
    return sorted(f for f in os.listdir(out) if f.endswith(".csv"))


def test_run_deterministic_across_workers(tmp_path):
    a = _small_homogenize(tmp_path / "a", 1)
    b = _small_homogenize(tmp_path / "b", 2)
    assert a == b and a
    for name in a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "results.json").read_text().replace(str(tmp_path / "a"), "") == \
        (tmp_path / "b" / "results.json").read_text().replace(str(tmp_path / "b"), "")


def test_cli_effective(tmp_path, capsys):
    assert cli.main(["effective", "--out", str(tmp_path), "--check"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_cli_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "effective", "t": "x"}))
    assert cli.main(["effective", "--config", str(bad), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "/t" in capsys.readouterr().err
    other = tmp_path / "other.json"
    other.write_text(json.dumps({"kind": "scenery"}))
    assert cli.main(["effective", "--config", str(other)]) == cli.EXIT_CONFIG
    assert cli.main(["effective", "--config", str(tmp_path / "none.json")]) == cli.EXIT_CONFIG


def test_cli_seed_flag_overrides_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "effective", "master_seed": 3}))
    assert cli.main(["effective", "--config", str(cfg), "--seed", "11", "--out", str(tmp_path / "o")]) == 0
    res = json.loads((tmp_path / "o" / "results.json").read_text())
    assert res["config"]["master_seed"] == 11


def test_cli_env_workers(tmp_path, monkeypatch):
    monkeypatch.setenv("SCENERY_HOMOG_WORKERS", "2")
    assert cli.main(["effective", "--out", str(tmp_path)]) == 0

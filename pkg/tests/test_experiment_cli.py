import csv
import json
import xml.etree.ElementTree as ET

import pytest

import pinlab
from pinlab.experiment_cli import (
    ConfigError,
    ExperimentResult,
    emit_outputs,
    load_result,
    parse_config,
    run_experiment,
    validate,
)
from pinlab.experiment_cli import outputs
from pinlab.experiment_cli.cli import main
from pinlab.experiment_cli.config import KINDS
from pinlab.experiment_cli.runner import ExperimentError

SMALL = {"n_max": 1 << 14}


def test_minimal_beta2_config_parses():
    cfg = parse_config('{"experiment": "beta2", "model": {"alpha": 0.3, "disorder": "gaussian"}}')
    assert cfg.experiment == "beta2" and cfg.model["alpha"] == 0.3


def test_alpha_out_of_range_is_named():
    with pytest.raises(ConfigError) as info:
        parse_config('{"experiment": "beta2", "model": {"alpha": 1.2}}')
    assert any(e.startswith("model.alpha") for e in info.value.errors)


def test_duplicated_key_rejected():
    with pytest.raises(ConfigError, match="duplicated key"):
        parse_config('{"experiment": "beta2", "model": {"alpha": 0.3, "alpha": 0.4}}')


def test_all_errors_reported_together():
    doc = {"experiment": "nope", "model": {"alpha": 2, "colour": 1}, "params": {"N_grid": []},
           "run": {"workers": 0}}
    with pytest.raises(ConfigError) as info:
        validate(doc)
    text = "\n".join(info.value.errors)
    for field in ("experiment", "model.alpha", "model.colour", "params.N_grid", "run.workers"):
        assert field in text


def test_required_params_per_kind():
    with pytest.raises(ConfigError, match="params.h_grid"):
        validate({"experiment": "homogeneous-curve"})
    with pytest.raises(ConfigError, match="not valid JSON"):
        parse_config("{experiment")


def test_every_kind_is_known():
    assert len(KINDS) == 10


def test_hash_ignores_key_order_and_workers():
    a = validate({"experiment": "beta2", "model": {"alpha": 0.3, "disorder": "gaussian"}, "run": {"workers": 1}})
    b = validate({"run": {"workers": 4}, "model": {"disorder": "gaussian", "alpha": 0.3}, "experiment": "beta2"})
    assert a.config_hash() == b.config_hash()
    c = validate({"experiment": "beta2", "model": {"alpha": 0.31}})
    assert c.config_hash() != a.config_hash()


def _martingale_cfg(workers):
    return validate({"experiment": "martingale", "model": SMALL,
                     "params": {"beta": 0.4, "N_grid": [32, 64, 128]},
                     "run": {"n_samples": 40, "chunk": 7, "workers": workers}})


def test_worker_count_does_not_change_payload():
    r1 = run_experiment(_martingale_cfg(1))
    r2 = run_experiment(_martingale_cfg(3))
    assert r1.payload() == r2.payload()
    assert r1.version == pinlab.__version__
    assert r1.seeds["seed_base"] == 0


def test_quenched_surface_parallel_determinism():
    base = {"experiment": "quenched-surface", "model": SMALL,
            "params": {"beta_grid": [0.2, 0.6], "h_grid": [-0.1, 0.1], "N_grid": [64]},
            "run": {"n_samples": 12, "chunk": 5}}
    assert run_experiment(validate(base), workers=1).payload() == run_experiment(validate(base), workers=2).payload()


def test_config_echo_reruns_itself():
    r = run_experiment(_martingale_cfg(1))
    again = run_experiment(validate(r.config))
    assert again.payload() == r.payload()
    assert again.config_hash == r.config_hash


def test_json_round_trip(tmp_path):
    r = run_experiment(_martingale_cfg(1))
    paths = emit_outputs(r, tmp_path, ["json"])
    back = load_result(paths["json"])
    assert back == r
    assert back.to_dict() == json.loads(json.dumps(r.to_dict()))


def test_homogeneous_curve_csv_one_row_per_grid_point(tmp_path):
    grid = [-0.2, 0.0, 0.01, 0.1, 0.5, 1.0]
    r = run_experiment(validate({"experiment": "homogeneous-curve", "model": SMALL, "params": {"h_grid": grid}}))
    paths = emit_outputs(r, tmp_path, ["csv", "svg", "json"])
    assert paths["csv"].name == f"homogeneous-curve-{r.config_hash[:12]}.csv"
    raw = paths["csv"].read_bytes()
    assert raw.count(b"\r\n") == len(grid) + 1
    with open(paths["csv"], newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["h", "F"] and len(rows) == len(grid) + 1
    assert [float(x[0]) for x in rows[1:]] == grid
    ET.parse(paths["svg"])


def test_csv_quoting():
    text = outputs.to_csv([{"a": 'x, "y"', "b": 1}, {"a": "z", "c": [1, 2]}])
    rows = list(csv.reader(text.splitlines()))
    assert rows[0] == ["a", "b", "c"]
    assert rows[1] == ['x, "y"', "1", ""]
    assert rows[2] == ["z", "", "[1, 2]"]


def test_exponent_fit_svg_has_fit_and_slope(tmp_path):
    r = run_experiment(validate({"experiment": "exponent-fit", "model": {"alpha": 0.5, "n_max": 1 << 16},
                                 "params": {"n_points": 9}}))
    svg = emit_outputs(r, tmp_path, ["svg"])["svg"]
    root = ET.parse(svg).getroot()
    ns = "{http://www.w3.org/2000/svg}"
    assert root.findall(f".//{ns}line[@class='fit']")
    slope = root.findall(f".//{ns}text[@class='slope']")
    assert slope and f"{r.summary['slope']:.4f}" in slope[0].text
    assert len(root.findall(f".//{ns}circle")) == 9


def test_interrupted_write_leaves_no_file(tmp_path, monkeypatch):
    r = run_experiment(_martingale_cfg(1))

    def boom(*args, **kwargs):
        raise KeyboardInterrupt

    monkeypatch.setattr(outputs.os, "replace", boom)
    with pytest.raises(KeyboardInterrupt):
        emit_outputs(r, tmp_path, ["json"])
    assert list(tmp_path.iterdir()) == []


def test_unwritable_directory(tmp_path):
    r = run_experiment(_martingale_cfg(1))
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_outputs(r, blocker / "sub", ["json"])


def test_oracle_suite_kind():
    r = run_experiment(validate({"experiment": "oracle-suite", "params": {"oracle_tuples": 6, "oracle_N_max": 9}}))
    assert r.summary["passed"] == 6 and r.summary["failed"] == 0
    assert len(r.rows) == 6


def test_runtime_errors_carry_cell_coordinates():
    cfg = validate({"experiment": "martingale", "model": {**SMALL, "recurrent": False, "L": {"c": 0.2}},
                    "params": {"beta": 0.4, "N_grid": [16]}, "run": {"n_samples": 4, "chunk": 2}})
    with pytest.raises(ExperimentError, match="cell 0"):
        run_experiment(cfg)


def test_beta_in_units_of_beta2():
    cfg = validate({"experiment": "martingale", "model": SMALL,
                    "params": {"beta": 0.5, "beta_units": "beta2", "N_grid": [8]}, "run": {"n_samples": 2}})
    r = run_experiment(cfg)
    assert 0.5 < r.summary["beta"] < 0.8


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"experiment": "beta2", "model": SMALL}))
    assert main(["run", str(good), "--out", str(tmp_path / "out")]) == 0
    assert any(p.suffix == ".json" for p in (tmp_path / "out").iterdir())

    bad = tmp_path / "bad.json"
    bad.write_text('{"experiment": "beta2", "model": {"alpha": 1.2}}')
    assert main(["run", str(bad)]) == 1
    assert "model.alpha" in capsys.readouterr().err

    assert main(["run", str(tmp_path / "missing.json")]) == 1

    failing = tmp_path / "fail.json"
    failing.write_text(json.dumps({"experiment": "kernel-diagnostics", "model": {"n_max": 64}}))
    assert main(["run", str(failing), "--out", str(tmp_path / "out")]) == 2


def test_cli_environment_overrides(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "beta2", "model": SMALL}))
    monkeypatch.setenv("PINLAB_OUT_DIR", str(tmp_path / "env_out"))
    monkeypatch.setenv("PINLAB_WORKERS", "2")
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "env_out").is_dir()
    monkeypatch.setenv("PINLAB_WORKERS", "many")
    assert main(["run", str(cfg)]) == 1


def test_cli_oracle_suite_and_plot(tmp_path):
    assert main(["oracle-suite", "--tuples", "3", "--n-max", "6", "--out", str(tmp_path)]) == 0
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "homogeneous-curve", "model": SMALL,
                               "params": {"h_grid": [0.0, 0.1, 0.2]}, "run": {"formats": ["json"]}}))
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == 0
    result = next(p for p in tmp_path.iterdir() if p.name.startswith("homogeneous-curve") and p.suffix == ".json")
    assert main(["plot", str(result), "--axes", "linear"]) == 0
    assert result.with_suffix(".svg").exists()
    oracle = next(p for p in tmp_path.iterdir() if p.name.startswith("oracle-suite") and p.suffix == ".json")
    assert main(["plot", str(oracle)]) == 2


def test_result_from_dict_rejects_unknown_fields():
    with pytest.raises(TypeError):
        ExperimentResult.from_dict({"bogus": 1})

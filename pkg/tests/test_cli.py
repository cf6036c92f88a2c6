import json
import re
from pathlib import Path

from levelmesh.cli import main

REPO = Path(__file__).resolve().parents[1]


def write_config(tmp_path, **overrides):
    cfg = {
        "problem": "drop_wave",
        "max_level": 3,
        "seed": 0,
        "oracle": {"kind": "gaussian"},
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def strip_created(text: str) -> str:
    text = re.sub(r'"created": "[^"]*"', '"created": "X"', text)
    return re.sub(r"# created=.*", "# created=X", text)


def test_run_writes_four_files(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "-o", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["checkpoint.json", "ledger.json", "levelset.csv", "run.json"]
    run = json.loads((out / "run.json").read_text())
    assert run["n_leaves"] > 0
    assert run["meta"]["config_hash"]
    assert run["meta"]["seed"] == 0


def test_run_rejects_bad_R(tmp_path):
    cfg = write_config(tmp_path, R=2.5)
    assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == 2


def test_run_missing_config(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.json"), "-o", str(tmp_path)]) == 2
    assert "cannot read config" in capsys.readouterr().err


def test_run_unknown_key(tmp_path):
    cfg = write_config(tmp_path, bogus=1)
    assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == 2


def test_runs_are_byte_identical_modulo_timestamp(tmp_path):
    cfg = write_config(tmp_path, max_level=2)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg), "-o", str(out1)]) == 0
    assert main(["run", str(cfg), "-o", str(out2)]) == 0
    for name in ("checkpoint.json", "ledger.json", "levelset.csv", "run.json"):
        a = strip_created((out1 / name).read_text())
        b = strip_created((out2 / name).read_text())
        assert a == b, name


def test_seed_override_changes_outputs(tmp_path):
    cfg = write_config(tmp_path, max_level=2)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg), "-o", str(out1)]) == 0
    assert main(["run", str(cfg), "-o", str(out2), "--seed", "99"]) == 0
    a = strip_created((out1 / "checkpoint.json").read_text())
    b = strip_created((out2 / "checkpoint.json").read_text())
    assert a != b


def test_epsilon_maps_to_level(tmp_path):
    cfg_path = tmp_path / "eps.json"
    cfg_path.write_text(json.dumps({
        "problem": "drop_wave",
        "epsilon": 0.01,
        "oracle": {"kind": "deterministic"},
    }))
    out = tmp_path / "out"
    assert main(["run", str(cfg_path), "-o", str(out)]) == 0
    run = json.loads((out / "run.json").read_text())
    # h_L <= sqrt(0.01) = 0.1 with h0 = 0.15625 requires L >= 1
    assert run["config"]["max_level"] == 1


def test_sweep_writes_csv_and_summary(tmp_path):
    cfg = write_config(tmp_path, L_range=[1, 2], n_runs=2, n_points=32)
    out = tmp_path / "sweep"
    assert main(["sweep", str(cfg), "-o", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    header = next(ln for ln in lines if not ln.startswith("#"))
    assert header == "L,h_L,mean_error,std_error,total_work,n_cells"
    assert len([ln for ln in lines if not ln.startswith("#")]) == 3
    summary = json.loads((out / "sweep.json").read_text())
    assert "fitted_slope" in summary and "target_slope" in summary


def test_sweep_empty_range_fails(tmp_path):
    cfg = write_config(tmp_path, L_range=[])
    assert main(["sweep", str(cfg), "-o", str(tmp_path / "out")]) == 2


def test_sweep_deterministic_reruns_identical(tmp_path):
    cfg = write_config(tmp_path, L_range=[1, 2], n_runs=2, n_points=32,
                       oracle={"kind": "deterministic"})
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert main(["sweep", str(cfg), "-o", str(out1)]) == 0
    assert main(["sweep", str(cfg), "-o", str(out2)]) == 0
    a = strip_created((out1 / "sweep.csv").read_text())
    b = strip_created((out2 / "sweep.csv").read_text())
    assert a == b


def test_extract_and_validate_roundtrip(tmp_path):
    cfg = write_config(tmp_path, max_level=2)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "-o", str(out)]) == 0
    target = tmp_path / "pieces.csv"
    assert main(["extract", str(out / "checkpoint.json"),
                 "--format", "segments-csv", "-o", str(target)]) == 0
    assert target.exists()
    assert main(["validate", str(out / "checkpoint.json")]) == 0


def test_extract_obj_on_2d_fails(tmp_path):
    cfg = write_config(tmp_path, max_level=2)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "-o", str(out)]) == 0
    assert main(["extract", str(out / "checkpoint.json"),
                 "--format", "obj", "-o", str(tmp_path / "x.obj")]) == 2


def test_validate_detects_corruption(tmp_path, capsys):
    cfg = write_config(tmp_path, max_level=2)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "-o", str(out)]) == 0
    ck = out / "checkpoint.json"
    data = json.loads(ck.read_text())
    data["cells"][5]["values"] = data["cells"][5]["values"][:-1]
    ck.write_text(json.dumps(data))
    assert main(["validate", str(ck)]) == 2  # corrupted record -> error message
    assert "corrupted cell record" in capsys.readouterr().err


def test_validate_detects_missing_cell(tmp_path):
    cfg = write_config(tmp_path, max_level=2)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "-o", str(out)]) == 0
    ck = out / "checkpoint.json"
    data = json.loads(ck.read_text())
    del data["cells"][5]
    ck.write_text(json.dumps(data))
    assert main(["validate", str(ck)]) == 1


def test_shipped_config_examples(tmp_path):
    for name in ("drop_wave.json", "custom_oracle.json"):
        out = tmp_path / name.replace(".json", "")
        assert main(["run", str(REPO / "configs" / name), "-o", str(out)]) == 0, name


def test_shipped_3d_config(tmp_path):
    cfg = json.loads((REPO / "configs" / "styblinski_tang.json").read_text())
    cfg["max_level"] = 2
    path = tmp_path / "st.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert main(["run", str(path), "-o", str(out)]) == 0
    assert (out / "levelset.obj").exists()

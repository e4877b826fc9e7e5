import json

import numpy as np
import pytest

from sdrn import cli
from sdrn import evalsuite as ev
from sdrn.estimator import SdrnModel
from sdrn.sparse_grid import basis_size


def _write_training_csv(path, n=200, seed=0):
    spec = ev.SimModelSpec(model_id=1, n=n, noise="normal", seed=seed)
    data = ev.generate(spec)
    header = ["x1", "x2", "x3", "x4", "x5", "y"]
    lines = [",".join(header)]
    for row, target in zip(data.X, data.y):
        lines.append(",".join([repr(float(v)) for v in row] + [repr(float(target))]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_fit_writes_model_with_full_gamma(tmp_path, capsys):
    train = tmp_path / "train.csv"
    model_path = tmp_path / "model.json"
    _write_training_csv(train)
    rc = cli.main(
        [
            "fit",
            "--input", str(train),
            "--target", "y",
            "--model-out", str(model_path),
            "--epochs", "150",
            "--seed", "7",
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    model = SdrnModel.load(model_path)
    # n=200: schedule gives m = floor(0.2 * log2 200) = 1
    assert model.m == 1 and model.R == 3
    assert len(model.gamma) == basis_size(5, 1)
    assert "basis size=112" in out
    assert model.column_names == ("x1", "x2", "x3", "x4", "x5")


def test_fit_override_flags_echoed(tmp_path, capsys):
    train = tmp_path / "train.csv"
    _write_training_csv(train, n=120)
    rc = cli.main(
        [
            "fit",
            "--input", str(train),
            "--target", "y",
            "--model-out", str(tmp_path / "m.json"),
            "--m", "2",
            "--r", "6",
            "--epochs", "30",
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "m=2 R=6 (overridden)" in out


def test_fit_data_errors(tmp_path, capsys):
    train = tmp_path / "train.csv"
    _write_training_csv(train)
    assert cli.main(["fit", "--input", str(train), "--target", "nope",
                     "--model-out", str(tmp_path / "m.json")]) == 2
    assert "nope" in capsys.readouterr().err

    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,y\n1.0,2.0,3.0\n1.5,oops,2.5\n", encoding="utf-8")
    assert cli.main(["fit", "--input", str(bad), "--target", "y",
                     "--model-out", str(tmp_path / "m.json")]) == 2
    err = capsys.readouterr().err
    assert "row 3" in err and "'b'" in err

    const = tmp_path / "const.csv"
    const.write_text("a,b,y\n1.0,5.0,3.0\n2.0,5.0,2.5\n3.0,5.0,2.0\n", encoding="utf-8")
    assert cli.main(["fit", "--input", str(const), "--target", "y",
                     "--model-out", str(tmp_path / "m.json")]) == 2


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["fit", "--input", "x.csv"])  # missing required flags
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--model", "9"])  # outside the model choices
    assert exc.value.code == 1


def _fit_small(tmp_path, loss="quadratic"):
    train = tmp_path / "train.csv"
    model_path = tmp_path / "model.json"
    _write_training_csv(train, n=80)
    args = [
        "fit", "--input", str(train), "--target", "y",
        "--model-out", str(model_path), "--epochs", "60", "--loss", loss,
    ]
    if loss == "logistic":
        # rewrite targets as labels
        lines = train.read_text().splitlines()
        header = lines[0]
        rows = []
        for i, line in enumerate(lines[1:]):
            cells = line.split(",")
            cells[-1] = str(float(i % 2))
            rows.append(",".join(cells))
        train.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")
    assert cli.main(args) == 0
    return train, model_path


def test_predict_round_trip_and_column_matching(tmp_path):
    train, model_path = _fit_small(tmp_path)
    out1 = tmp_path / "pred1.csv"
    assert cli.main(["predict", "--model", str(model_path),
                     "--input", str(train), "--output", str(out1)]) == 0
    text = out1.read_text(encoding="utf-8")
    assert text.splitlines()[1].endswith("prediction")
    assert len(text.splitlines()) == 2 + 80  # comment + header + rows

    # permute columns: same predictions (matched by name)
    lines = train.read_text().splitlines()
    header = lines[0].split(",")
    perm = [4, 0, 2, 1, 3, 5]
    permuted = tmp_path / "permuted.csv"
    rows = [",".join([line.split(",")[j] for j in perm]) for line in lines]
    permuted.write_text("\n".join(rows) + "\n", encoding="utf-8")
    out2 = tmp_path / "pred2.csv"
    assert cli.main(["predict", "--model", str(model_path),
                     "--input", str(permuted), "--output", str(out2)]) == 0
    pred1 = [line.split(",")[-1] for line in out1.read_text().splitlines()[2:]]
    pred2 = [line.split(",")[-1] for line in out2.read_text().splitlines()[2:]]
    assert pred1 == pred2


def test_predict_header_only_and_schema_errors(tmp_path, capsys):
    train, model_path = _fit_small(tmp_path)
    empty = tmp_path / "empty.csv"
    empty.write_text("x1,x2,x3,x4,x5\n", encoding="utf-8")
    out = tmp_path / "pred.csv"
    assert cli.main(["predict", "--model", str(model_path),
                     "--input", str(empty), "--output", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 2  # comment + header only

    missing = tmp_path / "missing.csv"
    missing.write_text("x1,x2,x3\n0.1,0.2,0.3\n", encoding="utf-8")
    assert cli.main(["predict", "--model", str(model_path),
                     "--input", str(missing), "--output", str(out)]) == 2

    doc = json.loads(model_path.read_text())
    doc["schema_version"] = 42
    bad_model = tmp_path / "bad_model.json"
    bad_model.write_text(json.dumps(doc), encoding="utf-8")
    assert cli.main(["predict", "--model", str(bad_model),
                     "--input", str(train), "--output", str(out)]) == 2


def test_predict_logistic_adds_probability(tmp_path):
    train, model_path = _fit_small(tmp_path, loss="logistic")
    out = tmp_path / "pred.csv"
    assert cli.main(["predict", "--model", str(model_path),
                     "--input", str(train), "--output", str(out)]) == 0
    header = out.read_text().splitlines()[1]
    assert header.endswith("prediction,probability")


def test_simulate_deterministic_bytes(tmp_path):
    outs = []
    for run in range(2):
        csv_path = tmp_path / f"sim{run}.csv"
        json_path = tmp_path / f"sim{run}.json"
        rc = cli.main(
            [
                "simulate", "--model", "1", "--n", "90", "--reps", "2",
                "--seed", "7", "--kappas", "1.0", "--cs=-2,-1",
                "--epochs", "40",
                "--out-csv", str(csv_path), "--out-json", str(json_path),
            ]
        )
        assert rc == 0
        outs.append((csv_path.read_bytes(), json_path.read_bytes()))
    assert outs[0] == outs[1]
    text = outs[0][0].decode()
    assert text.startswith("# model=1 n=90")
    assert "avg_mse" in text.splitlines()[1]


def test_simulate_classification_columns(tmp_path):
    csv_path = tmp_path / "sim4.csv"
    rc = cli.main(
        [
            "simulate", "--model", "4", "--n", "60", "--reps", "1",
            "--loss", "logistic", "--kappas", "1.0", "--cs=-2",
            "--epochs", "30", "--out-csv", str(csv_path),
        ]
    )
    assert rc == 0
    header = csv_path.read_text().splitlines()[1]
    assert "accuracy" in header and "avg_mse" not in header


def test_basis_info(capsys):
    assert cli.main(["basis-info", "--d", "2", "--m", "2"]) == 0
    assert "basis size=17" in capsys.readouterr().out
    assert cli.main(["basis-info", "--d", "5", "--m", "4"]) == 0
    assert "basis size=2882" in capsys.readouterr().out
    assert cli.main(["basis-info", "--d", "3", "--m", "1", "--r", "4"]) == 0
    out = capsys.readouterr().out
    assert "per-feature network (R=4): depth=12 units=84 weights=446" in out


def test_predict_on_training_file_matches_diagnostics(tmp_path):
    train, model_path = _fit_small(tmp_path)
    out = tmp_path / "roundtrip.csv"
    assert cli.main(["predict", "--model", str(model_path),
                     "--input", str(train), "--output", str(out)]) == 0
    preds = [abs(float(line.split(",")[-1])) for line in out.read_text().splitlines()[2:]]
    doc = json.loads(model_path.read_text())
    assert max(preds) == doc["diagnostics"]["sup_norm"]


def test_fit_rejects_m_with_c(tmp_path, capsys):
    train = tmp_path / "train.csv"
    _write_training_csv(train, n=60)
    rc = cli.main(["fit", "--input", str(train), "--target", "y",
                   "--model-out", str(tmp_path / "m.json"),
                   "--m", "1", "--c", "1", "--epochs", "10"])
    assert rc == 2
    assert "contradictory" in capsys.readouterr().err


def test_verify_bounds_csv_has_config_echo(tmp_path, monkeypatch):
    import sdrn.evalsuite as ev_mod

    light = ev_mod.BoundConfig(
        square_grid=501, square_rs=(1,), pair_grid=21, pair_rs=(1,),
        product_dims=(2,), product_rs=(2,), product_points=20,
        interp_ms=(1, 2), mc_points=500,
    )
    monkeypatch.setattr(cli, "verify_bounds", lambda: ev_mod.verify_bounds(light))
    out = tmp_path / "bounds.csv"
    assert cli.main(["verify-bounds", "--out-csv", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("#")
    assert lines[1] == "name,measured,bound,passed,asserted,note"


def test_verify_bounds_exit_three_on_violation(monkeypatch, capsys):
    import sdrn.evalsuite as ev_mod

    failing = ev_mod.BoundReport(
        checks=[ev_mod.BoundCheck(name="demo", measured=2.0, bound=1.0, passed=False)]
    )
    monkeypatch.setattr(cli, "verify_bounds", lambda: failing)
    assert cli.main(["verify-bounds"]) == 3
    assert "violations" in capsys.readouterr().err

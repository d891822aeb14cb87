import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from gae.cli import EXIT_CONFIG, EXIT_NUMERIC, main
from gae.config import ConfigError, resolve
from gae.serialize import load_model

SMALL = {
    "dataset": {"synthetic": {"class_count": 3, "per_class": 8, "dim": 5, "spread": 0.3}},
    "graph": {"kind": "knn", "k": 3},
    "dims": [4, 3],
    "optimizer": {"max_iter": 15},
    "seed": 4,
}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


def snapshot(folder):
    return {p.name: p.read_bytes() for p in sorted(Path(folder).iterdir()) if p.is_file()}


def test_train_writes_artifacts_and_rerun_is_identical(tmp_path):
    out = tmp_path / "run"
    cfg = write(tmp_path / "c.json", {**SMALL, "output": {"dir": str(out)}})
    assert main(["train", str(cfg)]) == 0
    first = snapshot(out)
    assert {"model.gae", "train_log.csv", "manifest.json"} <= set(first)
    assert first["train_log.csv"].startswith(b"layer,iter,objective,grad_norm\n")
    assert load_model(out / "model.gae").dims == [5, 4, 3]
    rows = [line.split(",") for line in first["train_log.csv"].decode().splitlines()[1:]]
    for layer in {r[0] for r in rows}:
        objective = [float(r[2]) for r in rows if r[0] == layer]
        assert all(b <= a for a, b in zip(objective, objective[1:]))
    keep = tmp_path / "manifest.json"
    shutil.copy(out / "manifest.json", keep)
    shutil.rmtree(out)
    assert main(["rerun", str(keep)]) == 0
    assert snapshot(out) == first
    # a manifest is also accepted as a config
    assert main(["train", str(keep)]) == 0
    assert snapshot(out) == first


def test_seed_override_changes_model(tmp_path):
    cfg = write(tmp_path / "c.json", SMALL)
    main(["train", str(cfg), "--out", str(tmp_path / "a")])
    main(["train", str(cfg), "--out", str(tmp_path / "b"), "--seed", "5"])
    assert (tmp_path / "a/model.gae").read_bytes() != (tmp_path / "b/model.gae").read_bytes()
    manifest = json.loads((tmp_path / "b/manifest.json").read_text())
    assert manifest["seed"] == 5 and manifest["command"] == "train"


def test_sgae_train(tmp_path):
    cfg = write(tmp_path / "c.json", {**SMALL, "method": "sgae",
                                      "protocol": {"labeled_fraction": 0.25}})
    assert main(["train", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert load_model(tmp_path / "o/model.gae").graph_spec["kind"] == "semi"


def test_encode_and_metrics(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", {**SMALL, "dims": [2]})
    main(["train", str(cfg), "--out", str(tmp_path / "o")])
    data = tmp_path / "d.csv"
    rng = np.random.default_rng(0)
    rows = [",".join(f"{v:.3f}" for v in rng.uniform(size=5)) + f",{i % 2}" for i in range(6)]
    data.write_text("\n".join(rows) + "\n")
    enc = tmp_path / "h.csv"
    assert main(["encode", str(tmp_path / "o/model.gae"), str(data), str(enc)]) == 0
    lines = enc.read_text().splitlines()
    assert len(lines) == 6 and all(len(line.split(",")) == 2 for line in lines)
    before = enc.read_bytes()
    assert main(["rerun", str(enc) + ".manifest.json"]) == 0
    assert enc.read_bytes() == before

    pred = tmp_path / "p.csv"
    pred.write_text("\n".join(str(1 - i % 2) for i in range(6)) + "\n")
    capsys.readouterr()
    assert main(["metrics", str(data), str(pred)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out == {"AC": 1.0, "MI": 1.0}


def test_encode_dimension_mismatch(tmp_path):
    main(["train", str(write(tmp_path / "c.json", SMALL)), "--out", str(tmp_path / "o")])
    data = tmp_path / "d.csv"
    data.write_text("0.1,0.2\n0.3,0.4\n")
    assert main(["encode", str(tmp_path / "o/model.gae"), str(data), str(tmp_path / "h.csv"),
                 "--no-labels"]) == EXIT_CONFIG


def test_graph_command(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("0,0,0\n0.1,0,0\n5,5,1\n5.1,5,1\n")
    out = tmp_path / "g.txt"
    capsys.readouterr()
    assert main(["graph", str(data), str(out), "--kind", "knn", "--k", "1"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary == {"edges": 4, "error_rate": 0.0, "kind": "knn"}
    assert out.read_text().startswith("# n=4 kind=knn\n")
    before = out.read_bytes()
    assert main(["rerun", str(out) + ".manifest.json"]) == 0
    assert out.read_bytes() == before


def test_benchmark_and_rerun(tmp_path):
    out = tmp_path / "bench"
    cfg = write(tmp_path / "c.json", {
        "dataset": {"synthetic": {"class_count": 3, "per_class": 6, "dim": 4, "spread": 0.2}},
        "methods": ["gae", "pca", "kmeans_raw"],
        "optimizer": {"max_iter": 5},
        "protocol": {"class_subset_sizes": [2], "repeats": 2, "depth": 1, "restarts": 2},
        "hyper_grid": {"lam": [0.1], "k": [3]},
        "output": {"dir": str(out)},
    })
    assert main(["benchmark", str(cfg)]) == 0
    first = snapshot(out)
    assert first["benchmark.csv"].decode().splitlines()[-1].startswith("Average,")
    shutil.rmtree(out)
    (tmp_path / "m.json").write_bytes(first["manifest.json"])
    assert main(["rerun", str(tmp_path / "m.json")]) == 0
    assert snapshot(out) == first


@pytest.mark.parametrize("cfg", [
    {"dataset": {}},
    {**SMALL, "method": "deep"},
    {**SMALL, "graph": {"kind": "epsilon"}},
    {**SMALL, "lam": [0.1]},
    {**SMALL, "dataset": {"path": "/no/such/file.csv"}},
    {**SMALL, "unknown": 1},
])
def test_bad_configs_exit_2(tmp_path, cfg):
    assert main(["train", str(write(tmp_path / "c.json", cfg))]) == EXIT_CONFIG


def test_unreadable_config_exit_2(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert main(["train", str(p)]) == EXIT_CONFIG


def test_numerical_failure_exit_3(tmp_path, monkeypatch):
    from gae import cli
    from gae.optim import NumericalError

    def boom(*a, **k):
        raise NumericalError("objective became nan")
    monkeypatch.setattr(cli, "train_stack", boom)
    assert main(["train", str(write(tmp_path / "c.json", SMALL))]) == EXIT_NUMERIC


def test_resolve_fills_defaults():
    cfg = resolve({"dataset": {"synthetic": {"class_count": 2, "per_class": 2, "dim": 2,
                                             "spread": 0.1}}})
    assert cfg["graph"] == {"kind": "knn", "k": 5} and cfg["seed"] == 0
    with pytest.raises(ConfigError):
        resolve({"dataset": {"path": "a", "synthetic": {}}})

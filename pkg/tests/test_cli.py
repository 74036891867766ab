import hashlib
import json
import shutil
import subprocess
import sys

import pytest

from cocoanet import cli
from cocoanet.synthetic import write_image_tree
from cocoanet.training import TrainingError

TINY_VIT = {"family": "vit", "depth": 1, "embed_dim": 64, "heads": 4, "mlp_hidden": 128,
            "class_head_hidden": 32}
TRAIN = {"epochs": 2, "batch_size": 4, "lr": 0.001, "weight_decay": 0.0,
         "dropout_attention": 0.0, "dropout_feedforward": 0.0}


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    """Fixture tree -> split -> 2-epoch train; shared by the eval/predict tests."""
    base = tmp_path_factory.mktemp("cli")
    data = write_image_tree(base / "data", n_per_class=8, size=300)
    assert cli.main(["split", "--data-dir", str(data), "--out", str(base / "m.json"),
                     "--ratios", "0.5,0.25,0.25", "--seed", "1"]) == 0
    (base / "c.json").write_text(json.dumps({"model": TINY_VIT, "train": TRAIN}))
    assert cli.main(["train", "--config", str(base / "c.json"), "--manifest", str(base / "m.json"),
                     "--out-dir", str(base / "run")]) == 0
    return base


# split

def test_split_prints_table_and_is_reproducible(tmp_path, capsys):
    data = write_image_tree(tmp_path / "d", n_per_class=10, size=16)
    args = ["split", "--data-dir", str(data), "--seed", "3"]
    assert cli.main(args + ["--out", str(tmp_path / "a.json")]) == 0
    out = capsys.readouterr().out
    assert "#Images" in out and "24" in out.splitlines()[-1]
    assert cli.main(args + ["--out", str(tmp_path / "b.json")]) == 0
    assert sha(tmp_path / "a.json") == sha(tmp_path / "b.json")
    manifest = json.loads((tmp_path / "a.json").read_text())
    assert {e["split"] for e in manifest["entries"]} == {"train", "val", "test"}


def test_split_bad_ratios(tmp_path, capsys):
    data = write_image_tree(tmp_path / "d", n_per_class=3, size=8)
    assert cli.main(["split", "--data-dir", str(data), "--out", str(tmp_path / "m.json"),
                     "--ratios", "0.8,0.1,0.2"]) == 2
    assert "sum" in capsys.readouterr().err


def test_split_layout_error_names_directory(tmp_path, capsys):
    (tmp_path / "root" / "Healthy").mkdir(parents=True)
    assert cli.main(["split", "--data-dir", str(tmp_path / "root"), "--out", str(tmp_path / "m.json")]) == 2
    assert "Healthy" in capsys.readouterr().err


def test_split_from_manifest(tmp_path):
    entries = [{"path": f"{c}/{i}.jpg", "label": c, "split": None}
               for c, n in (("Anthracnose", 20), ("CSSVD", 30), ("Healthy", 10)) for i in range(n)]
    src = tmp_path / "src.json"
    src.write_text(json.dumps({"class_names": ["Anthracnose", "CSSVD", "Healthy"], "seed": None,
                               "channel_means": None, "entries": entries}))
    assert cli.main(["split", "--from-manifest", str(src), "--out", str(tmp_path / "out.json")]) == 0
    doc = json.loads((tmp_path / "out.json").read_text())
    assert sum(e["split"] == "test" for e in doc["entries"]) == 2 + 3 + 1


# train

def test_train_outputs(run):
    out = run / "run"
    for name in ("best.ckpt", "last.ckpt", "history.json", "config.resolved.json", "normalization.json"):
        assert (out / name).is_file()
    history = json.loads((out / "history.json").read_text())
    assert len(history) == 2
    assert all(r["train_loss"] > 0 and r["val_loss"] > 0 for r in history)
    resolved = json.loads((out / "config.resolved.json").read_text())
    assert resolved["train"]["beta2"] == 0.999 and resolved["train"]["scheduler"] == "halve_per_epoch"
    assert resolved["model"]["depth"] == 1


def test_resolved_config_reruns(run, tmp_path):
    cfg = run / "run" / "config.resolved.json"
    assert cli.main(["train", "--config", str(cfg), "--manifest", str(run / "m.json"),
                     "--out-dir", str(tmp_path / "again")]) == 0
    a = json.loads((run / "run" / "history.json").read_text())
    b = json.loads((tmp_path / "again" / "history.json").read_text())
    assert a == b


def test_vgg16_config_expands_table_defaults(tmp_path):
    from cocoanet.config import load_config
    (tmp_path / "vgg16.json").write_text('{"model": {"family": "vgg16"}}')
    cfg = load_config(tmp_path / "vgg16.json")
    assert cfg.resolved["train"]["lr"] == 1e-2 and cfg.resolved["train"]["weight_decay"] == 0.0005


def test_train_missing_manifest(run, tmp_path, capsys):
    code = cli.main(["train", "--config", str(run / "c.json"), "--manifest", str(tmp_path / "nope.json"),
                     "--out-dir", str(tmp_path / "r")])
    assert code == 2
    assert "manifest not found" in capsys.readouterr().err


def test_train_unknown_config_key(run, tmp_path):
    (tmp_path / "bad.json").write_text('{"model": {"family": "vit"}, "train": {"learning_rate": 1}}')
    assert cli.main(["train", "--config", str(tmp_path / "bad.json"), "--manifest", str(run / "m.json")]) == 2


def test_train_failure_exit_3(run, tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise TrainingError("non-finite loss", 2)

    monkeypatch.setattr(cli, "fit", boom)
    code = cli.main(["train", "--config", str(run / "c.json"), "--manifest", str(run / "m.json"),
                     "--out-dir", str(tmp_path / "r")])
    assert code == 3
    assert "epoch 2" in capsys.readouterr().err


# eval

def test_eval_reports(run, tmp_path):
    args = ["eval", "--checkpoint", str(run / "run" / "best.ckpt"), "--manifest", str(run / "m.json"),
            "--split", "test"]
    assert cli.main(args + ["--report", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--report", str(tmp_path / "b")]) == 0
    for name in ("report.json", "report.csv", "report.txt", "confusion_matrix.csv"):
        assert sha(tmp_path / "a" / name) == sha(tmp_path / "b" / name)
    rows = [line.split()[0] for line in (tmp_path / "a" / "report.txt").read_text().splitlines()
            if line and not line.startswith("-")]
    assert rows[1:] == ["Anthracnose", "CSSVD", "Healthy", "Overall"]
    doc = json.loads((tmp_path / "a" / "report.json").read_text())
    assert doc["split"] == "test" and doc["model"] == "vit"
    assert sum(map(sum, doc["confusion_matrix"])) == 6


def test_eval_memorized_train_split(run, tmp_path):
    assert cli.main(["eval", "--checkpoint", str(run / "run" / "best.ckpt"), "--manifest",
                     str(run / "m.json"), "--split", "train", "--report", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "report.json").read_text())["overall"]["accuracy"] == 100.0


def test_eval_class_mismatch(run, tmp_path, capsys):
    doc = json.loads((run / "m.json").read_text())
    doc["class_names"] = ["Anthracnose", "CSSVD", "Sick"]
    doc["entries"] = [dict(e, label="Sick") if e["label"] == "Healthy" else e for e in doc["entries"]]
    (tmp_path / "m.json").write_text(json.dumps(doc))
    code = cli.main(["eval", "--checkpoint", str(run / "run" / "best.ckpt"), "--manifest",
                     str(tmp_path / "m.json"), "--report", str(tmp_path / "r")])
    assert code == 2
    assert "do not match" in capsys.readouterr().err


def test_eval_bad_checkpoint(run, tmp_path):
    (tmp_path / "x.ckpt").write_bytes(b"garbage!" * 4)
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "x.ckpt"), "--manifest", str(run / "m.json"),
                     "--report", str(tmp_path / "r")]) == 2


# predict

def _predict(run, image, capsys):
    code = cli.main(["predict", "--checkpoint", str(run / "run" / "best.ckpt"), "--image", str(image)])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_predict_output(run, capsys):
    image = next((run / "data" / "CSSVD").iterdir())
    code, out, _ = _predict(run, image, capsys)
    assert code == 0
    lines = out.splitlines()
    probs = {name: float(v) for name, v in (line.split(": ") for line in lines[1:])}
    assert list(probs) == ["Anthracnose", "CSSVD", "Healthy"]
    assert abs(sum(probs.values()) - 100) <= 0.1
    assert lines[0] == f"prediction: {max(probs, key=probs.get)}"
    assert _predict(run, image, capsys)[:2] == (code, out)


def test_predict_undecodable(run, tmp_path, capsys):
    (tmp_path / "bad.png").write_bytes(b"nope")
    code, _, err = _predict(run, tmp_path / "bad.png", capsys)
    assert code == 2
    assert "bad.png" in err


# info

def test_info_counts(capsys):
    assert cli.main(["info", "--arch", "resnet50", "--classes", "3"]) == 0
    out = capsys.readouterr().out
    assert "23,514,179" in out and "(23.51M)" in out
    assert cli.main(["info", "--arch", "vgg16", "--classes", "1000"]) == 0
    assert "138,357,544" in capsys.readouterr().out
    assert cli.main(["info", "--arch", "vit"]) == 0
    n = int(capsys.readouterr().out.split("parameters: ")[1].split()[0].replace(",", ""))
    assert abs(n - 6.8e6) / 6.8e6 < 0.05


def test_info_unknown_arch():
    with pytest.raises(SystemExit) as exc:
        cli.main(["info", "--arch", "alexnet"])
    assert exc.value.code == 2


def test_console_script_exit_codes(tmp_path):
    exe = shutil.which("cocoanet")
    cmd = [exe] if exe else [sys.executable, "-m", "cocoanet.cli"]
    proc = subprocess.run(cmd + ["info", "--arch", "nope"], capture_output=True, text=True)
    assert proc.returncode == 2
    proc = subprocess.run(cmd + ["eval", "--checkpoint", "x", "--manifest", str(tmp_path / "m.json"),
                                 "--report", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 2


def test_thread_limit_env(monkeypatch, capsys):
    monkeypatch.setenv("COCOA_THREADS", "0")
    assert cli.main(["info", "--arch", "vit", "--classes", "4"]) == 0
    assert "(4 classes)" in capsys.readouterr().out

import numpy as np
import pytest

from hginet import config as config_mod
from hginet.cli import UsageError, main, resolve_jobs
from hginet.config import ModelConfig
from hginet.pnm import read_pixmap


def tiny_cfg() -> ModelConfig:
    return ModelConfig(
        input_size=32,
        stage_channels=(4, 8, 12, 16),
        stage_blocks=(1, 1, 1, 1),
        latent_channels=8,
        graph_vertices=4,
        hgit_layers=1,
        hgit_heads=2,
        seed=3,
    ).validate()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["synth", "--out", str(data), "--count", "6", "--size", "32", "--seed", "5"]) == 0
    cfg_path = root / "tiny.cfg"
    config_mod.save(tiny_cfg(), cfg_path)
    run = root / "run"
    rc = main(
        ["train", "--data", str(data), "--out", str(run), "--config", str(cfg_path), "--epochs", "1", "--batch", "2"]
    )
    assert rc == 0
    return root


def test_usage_errors():
    assert main([]) == 1
    assert main(["bogus"]) == 1
    assert main(["synth"]) == 1  # missing --out
    assert main(["synth", "--out", "x", "--seed", "-1"]) == 1


def test_synth_with_bad_count(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--count", "0"]) == 2


def test_synth_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["synth", "--out", str(out), "--count", "2", "--size", "32"]) == 0
    rel = "images/0001.ppm"
    assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_train_outputs(workspace):
    run = workspace / "run"
    for name in ("model.cfg", "best.ckpt", "steps.csv", "epochs.csv"):
        assert (run / name).exists(), name
    assert "input_size=32" in (run / "model.cfg").read_text()


def test_train_seed_override(workspace, tmp_path):
    out = tmp_path / "run"
    rc = main(
        [
            "train",
            "--data",
            str(workspace / "data"),
            "--out",
            str(out),
            "--config",
            str(workspace / "tiny.cfg"),
            "--epochs",
            "1",
            "--batch",
            "2",
            "--seed",
            "7",
        ]
    )
    assert rc == 0
    assert "seed=7" in (out / "model.cfg").read_text()


def test_infer_writes_deterministic_maps(workspace, tmp_path):
    preds_a, preds_b = tmp_path / "a", tmp_path / "b"
    ckpt = str(workspace / "run" / "best.ckpt")
    data = str(workspace / "data")
    for out in (preds_a, preds_b):
        assert main(["infer", "--checkpoint", ckpt, "--data", data, "--out", str(out)]) == 0
    names = sorted(p.name for p in preds_a.iterdir())
    assert names == [f"{i:04d}.pgm" for i in range(6)]
    gray = read_pixmap(preds_a / "0000.pgm")
    assert gray.shape == (32, 32)
    for name in names:
        assert (preds_a / name).read_bytes() == (preds_b / name).read_bytes()


def test_infer_parallel_matches_serial(workspace, tmp_path):
    ckpt = str(workspace / "run" / "best.ckpt")
    data = str(workspace / "data")
    serial, parallel = tmp_path / "s", tmp_path / "p"
    assert main(["infer", "--checkpoint", ckpt, "--data", data, "--out", str(serial)]) == 0
    assert main(["infer", "--checkpoint", ckpt, "--data", data, "--out", str(parallel), "--jobs", "3"]) == 0
    for path in sorted(serial.iterdir()):
        assert path.read_bytes() == (parallel / path.name).read_bytes()


def test_infer_resizes_offsize_inputs(workspace, tmp_path):
    from hginet.pnm import write_ppm

    src = tmp_path / "imgs"
    src.mkdir()
    rgb = np.random.default_rng(0).integers(0, 256, size=(48, 40, 3), dtype=np.uint8)
    write_ppm(src / "wide.ppm", rgb)
    out = tmp_path / "maps"
    ckpt = str(workspace / "run" / "best.ckpt")
    assert main(["infer", "--checkpoint", ckpt, "--data", str(src), "--out", str(out)]) == 0
    gray = read_pixmap(out / "wide.pgm")
    assert gray.shape == (48, 40)


def test_infer_missing_checkpoint(workspace, tmp_path):
    rc = main(
        ["infer", "--checkpoint", str(tmp_path / "none.ckpt"), "--data", str(workspace / "data"), "--out", str(tmp_path)]
    )
    assert rc == 2


def test_eval_perfect_predictions(workspace, tmp_path, capsys):
    preds = tmp_path / "preds"
    preds.mkdir()
    for mask in (workspace / "data" / "masks").iterdir():
        (preds / mask.name).write_bytes(mask.read_bytes())
    assert main(["eval", str(preds), "--data", str(workspace / "data")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "image,s_measure,weighted_f,mean_e,mae"
    assert out[-1] == "mean,1.000000,1.000000,1.000000,0.000000"
    assert len(out) == 8  # header + 6 rows + mean


def test_eval_writes_csv_file(workspace, tmp_path):
    preds = tmp_path / "preds"
    ckpt = str(workspace / "run" / "best.ckpt")
    assert main(["infer", "--checkpoint", ckpt, "--data", str(workspace / "data"), "--out", str(preds)]) == 0
    out = tmp_path / "scores"
    assert main(["eval", str(preds), "--data", str(workspace / "data"), "--out", str(out)]) == 0
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == "image,s_measure,weighted_f,mean_e,mae"
    assert lines[1].startswith("0000.pgm,")
    assert lines[-1].startswith("mean,")


def test_eval_unmatched_filenames(workspace, tmp_path, capsys):
    preds = tmp_path / "preds"
    preds.mkdir()
    masks = sorted((workspace / "data" / "masks").iterdir())
    for mask in masks[:-1]:
        (preds / mask.name).write_bytes(mask.read_bytes())
    assert main(["eval", str(preds), "--data", str(workspace / "data")]) == 2
    err = capsys.readouterr().err
    assert masks[-1].stem in err


def test_jobs_env_cap(monkeypatch):
    monkeypatch.delenv("HGI_THREADS", raising=False)
    assert resolve_jobs(8) == 8
    monkeypatch.setenv("HGI_THREADS", "2")
    assert resolve_jobs(8) == 2
    assert resolve_jobs(1) == 1
    monkeypatch.setenv("HGI_THREADS", "soup")
    with pytest.raises(UsageError):
        resolve_jobs(4)


def test_golden_cycle(tmp_path):
    golden = tmp_path / "goldens"
    assert main(["golden", "regenerate", "--out", str(golden)]) == 0
    for rel in ("config.cfg", "model.ckpt", "images/0000.ppm", "maps/0000.pgm"):
        assert (golden / rel).exists(), rel
    assert main(["golden", "verify", "--out", str(golden)]) == 0
    # tamper with one committed map: verification must fail numerically
    target = golden / "maps" / "0001.pgm"
    raw = bytearray(target.read_bytes())
    raw[-1] ^= 0x01
    target.write_bytes(bytes(raw))
    assert main(["golden", "verify", "--out", str(golden)]) == 3


def test_golden_verify_incomplete(tmp_path):
    (tmp_path / "g").mkdir()
    assert main(["golden", "verify", "--out", str(tmp_path / "g")]) == 2

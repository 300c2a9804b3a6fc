"""
Tests for blockvit CLI commands.

Every command runs end to end on small images in a temporary directory.
"""

import json

import pandas as pd
import pytest
import yaml
from typer.testing import CliRunner

from app.cli import app
from app.imagecore import read_image, write_image
from app.keyschedule import MasterKey, save_key
from tests.sample_images import fixed_key, random_image


@pytest.fixture
def runner():
    """Create a CLI test runner."""
    return CliRunner()


@pytest.fixture
def key_file(tmp_path):
    return save_key(fixed_key(), tmp_path / "test.key")


@pytest.fixture
def plain_file(tmp_path):
    return write_image(random_image(16, 16, seed=21), tmp_path / "plain.png")


def _encrypt(runner, plain_file, key_file, *extra):
    return runner.invoke(app, ["encrypt", str(plain_file), "--key", str(key_file), "--grid", "2x2", *extra])


def test_keygen_writes_key_and_refuses_overwrite(runner, tmp_path):
    result = runner.invoke(app, ["keygen", str(tmp_path / "k.key")])

    assert result.exit_code == 0
    assert "key_id:" in result.output
    assert len((tmp_path / "k.key").read_text().strip()) == 64

    again = runner.invoke(app, ["keygen", str(tmp_path / "k.key")])
    assert again.exit_code == 1
    assert runner.invoke(app, ["keygen", str(tmp_path / "k.key"), "--force"]).exit_code == 0


def test_encrypt_then_decrypt_round_trip(runner, tmp_path, plain_file, key_file):
    result = _encrypt(runner, plain_file, key_file)

    assert result.exit_code == 0, result.output
    assert "1 image(s) encrypted" in result.output
    assert (tmp_path / "plain.enc.png").exists()
    assert (tmp_path / "plain.enc.json").exists()
    assert json.loads((tmp_path / "run-config.json").read_text())["command"] == "encrypt"

    result = runner.invoke(app, ["decrypt", str(tmp_path / "plain.enc.png"), "--key", str(key_file)])

    assert result.exit_code == 0, result.output
    assert "1 image(s) decrypted" in result.output
    assert read_image(tmp_path / "plain.dec.png") == read_image(plain_file)


def test_decrypt_with_wrong_key_fails(runner, tmp_path, plain_file, key_file):
    _encrypt(runner, plain_file, key_file)
    other = save_key(MasterKey.from_seed(5, "other"), tmp_path / "other.key")

    result = runner.invoke(app, ["decrypt", str(tmp_path / "plain.enc.png"), "--key", str(other)])

    assert result.exit_code == 1
    assert "failed" in result.output
    assert not (tmp_path / "plain.dec.png").exists()


def test_encrypt_duplicate_stems_into_one_folder(runner, tmp_path, key_file):
    cats = write_image(random_image(16, 16, seed=1), tmp_path / "cats" / "img1.png")
    dogs = write_image(random_image(16, 16, seed=2), tmp_path / "dogs" / "img1.png")
    out = tmp_path / "enc"

    result = _encrypt(runner, cats, key_file, str(dogs), "--out", str(out))

    assert result.exit_code == 0, result.output
    assert "2 image(s) encrypted" in result.output
    for source in (cats, dogs):
        cipher = out / source.parent.name / "img1.enc.png"
        assert runner.invoke(app, ["decrypt", str(cipher), "--key", str(key_file)]).exit_code == 0
        assert read_image(cipher.with_name("img1.dec.png")) == read_image(source)


def test_encrypt_write_failure_is_reported_per_file(runner, tmp_path, plain_file, key_file):
    other = write_image(random_image(16, 16, seed=3), tmp_path / "other.png")
    out = tmp_path / "enc"
    (out / "plain.enc.png").mkdir(parents=True)

    result = _encrypt(runner, plain_file, key_file, str(other), "--out", str(out))

    assert result.exit_code == 1
    assert "1 image(s) encrypted" in result.output
    assert "write failed" in result.output
    assert (out / "other.enc.png").exists()
    assert json.loads((out / "run-config.json").read_text())["command"] == "encrypt"


def test_decrypt_records_run_config_next_to_ciphertexts(runner, tmp_path, plain_file, key_file):
    _encrypt(runner, plain_file, key_file)
    (tmp_path / "run-config.json").unlink()

    result = runner.invoke(app, ["decrypt", str(tmp_path / "plain.enc.png"), "--key", str(key_file)])

    assert result.exit_code == 0, result.output
    record = json.loads((tmp_path / "run-config.json").read_text())
    assert record["command"] == "decrypt"
    assert record["key_id"] == fixed_key().key_id


def test_encrypt_bad_grid_string_is_an_argument_error(runner, plain_file, key_file):
    result = runner.invoke(app, ["encrypt", str(plain_file), "--key", str(key_file), "--grid", "3y3"])

    assert result.exit_code == 2


def test_encrypt_grid_that_does_not_divide_is_a_file_failure(runner, tmp_path, key_file):
    odd = write_image(random_image(10, 10), tmp_path / "odd.png")

    result = runner.invoke(app, ["encrypt", str(odd), "--key", str(key_file), "--grid", "4x4"])

    assert result.exit_code == 1
    assert not (tmp_path / "odd.enc.png").exists()


def test_encrypt_center_crop(runner, tmp_path, key_file):
    odd = write_image(random_image(10, 10), tmp_path / "odd.png")

    result = runner.invoke(app, ["encrypt", str(odd), "--key", str(key_file), "--grid", "4x4", "--center-crop"])

    assert result.exit_code == 0, result.output
    assert read_image(tmp_path / "odd.enc.png").shape == (8, 8, 3)


def test_config_file_and_flag_precedence(runner, tmp_path, plain_file, key_file):
    config = tmp_path / "run.yaml"
    config.write_text(yaml.dump({"grid": "4x4", "negpos": False}))

    result = runner.invoke(app, ["encrypt", str(plain_file), "--key", str(key_file), "--config", str(config)])
    assert result.exit_code == 0, result.output
    sidecar = json.loads((tmp_path / "plain.enc.json").read_text())
    assert (sidecar["grid_rows"], sidecar["negpos"]) == (4, False)

    result = runner.invoke(
        app, ["encrypt", str(plain_file), "--key", str(key_file), "--config", str(config), "--grid", "2x2", "--negpos"]
    )
    assert result.exit_code == 0, result.output
    sidecar = json.loads((tmp_path / "plain.enc.json").read_text())
    assert (sidecar["grid_rows"], sidecar["negpos"]) == (2, True)


def test_encrypt_preset_none_writes_plaintext_copy(runner, tmp_path, plain_file, key_file):
    result = _encrypt(runner, plain_file, key_file, "--preset", "none")

    assert result.exit_code == 0, result.output
    assert read_image(tmp_path / "plain.enc.png") == read_image(plain_file)


def test_attack_command_writes_reconstruction_and_report(runner, tmp_path, plain_file, key_file):
    _encrypt(runner, plain_file, key_file)

    result = runner.invoke(
        app, ["attack", str(tmp_path / "plain.enc.png"), "--kind", "combined", "--truth", str(plain_file)]
    )

    assert result.exit_code == 0, result.output
    assert "NPCR" in result.output
    report = json.loads((tmp_path / "plain.attack-combined.json").read_text())
    assert report["kind"] == "combined"
    assert read_image(tmp_path / "plain.attack-combined.png").shape == (16, 16, 3)


def test_attack_unknown_kind(runner, tmp_path, plain_file, key_file):
    _encrypt(runner, plain_file, key_file)

    result = runner.invoke(app, ["attack", str(tmp_path / "plain.enc.png"), "--kind", "brute-force"])

    assert result.exit_code == 2


def test_metrics_command_writes_csv(runner, tmp_path, plain_file, key_file):
    _encrypt(runner, plain_file, key_file)
    out = tmp_path / "metrics.csv"

    result = runner.invoke(app, ["metrics", str(plain_file), str(tmp_path / "plain.enc.png"), "--out", str(out)])

    assert result.exit_code == 0, result.output
    assert "1 pair(s) measured" in result.output
    assert len(pd.read_csv(out)) == 1


def test_metrics_requires_pairs(runner, plain_file):
    result = runner.invoke(app, ["metrics", str(plain_file)])

    assert result.exit_code == 2


def test_sensitivity_identical_key_control(runner, tmp_path, plain_file, key_file):
    out = tmp_path / "sens.json"

    result = runner.invoke(
        app, ["sensitivity", str(plain_file), "--key", str(key_file), "--grid", "2x2", "--flip-bits", "0", "--out", str(out)]
    )

    assert result.exit_code == 0, result.output
    assert json.loads(out.read_text())["npcr"] == 0.0


def test_validate_sidecar_manifest_and_garbage(runner, tmp_path, plain_file, key_file):
    _encrypt(runner, plain_file, key_file)
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"class_names": ["a"], "entries": [{"path": "x.png", "label": 0, "client_id": "c"}]}))
    garbage = tmp_path / "garbage.json"
    garbage.write_text("{not json")

    sidecar = runner.invoke(app, ["validate", str(tmp_path / "plain.enc.json")])
    assert sidecar.exit_code == 0
    assert "Valid sidecar: grid 2x2" in sidecar.output

    listed = runner.invoke(app, ["validate", str(manifest)])
    assert listed.exit_code == 0
    assert "Valid manifest: 1 entries" in listed.output

    assert runner.invoke(app, ["validate", str(garbage)]).exit_code == 1
    assert runner.invoke(app, ["validate", str(tmp_path / "missing.json")]).exit_code == 2


def test_info_command(runner):
    result = runner.invoke(app, ["info"])

    assert result.exit_code == 0
    assert "Version: 1.0.0" in result.output
    assert "BLOCKVIT_LOG_LEVEL" in result.output
    assert "pixel-shuffle" in result.output


def test_demo_command(runner, tmp_path):
    sample = write_image(random_image(32, 32, seed=22), tmp_path / "sample.png")

    result = runner.invoke(app, ["demo", str(tmp_path / "demo"), "--sample", str(sample), "--grid", "4x4"])

    assert result.exit_code == 0, result.output
    assert read_image(tmp_path / "demo" / "demo.png").shape == (32, 32 * 3 + 8, 3)
    summary = json.loads((tmp_path / "demo" / "demo-summary.json").read_text())
    assert set(summary["attacks"]) == {"leading-bit", "minimum-difference", "combined"}


@pytest.fixture
def dataset(runner, tmp_path):
    root = tmp_path / "data"
    result = runner.invoke(
        app,
        ["build-dataset", str(root), "--clients", "2", "--num-per-class", "2", "--size", "16", "--grid", "2x2"],
    )
    assert result.exit_code == 0, result.output
    assert "Server split: 6 train / 2 val" in result.output
    return root


def test_build_dataset_then_train_and_eval(runner, tmp_path, dataset):
    server = dataset / "server"
    model_dir = tmp_path / "model"
    tiny = ["--patch-size", "8", "--embed-dim", "8", "--num-heads", "2", "--num-layers", "1", "--mlp-dim", "16"]

    result = runner.invoke(
        app,
        ["train", str(server / "train.json"), "--val", str(server / "val.json"), "--out", str(model_dir),
         "--epochs", "1", "--batch-size", "4", *tiny],
    )

    assert result.exit_code == 0, result.output
    assert (model_dir / "model.ckpt").exists()
    assert list(pd.read_csv(model_dir / "train-report.csv")["epoch"]) == [1]

    result = runner.invoke(app, ["eval", str(server / "val.json"), "--checkpoint", str(model_dir / "model.ckpt")])

    assert result.exit_code == 0, result.output
    assert "Accuracy:" in result.output
    assert runner.invoke(app, ["validate", str(model_dir / "model.ckpt.json")]).exit_code == 0


def test_ingest_directory_command(runner, tmp_path):
    for name in ("a", "b"):
        write_image(random_image(8, 8), tmp_path / "images" / name / "img.png")
    out = tmp_path / "manifest.json"

    result = runner.invoke(app, ["ingest", str(tmp_path / "images"), "--out", str(out)])

    assert result.exit_code == 0, result.output
    assert json.loads(out.read_text())["class_names"] == ["a", "b"]


def test_ingest_with_key_encrypts(runner, tmp_path, key_file):
    for name in ("a", "b"):
        write_image(random_image(8, 8), tmp_path / "images" / name / f"{name}.png")
    out = tmp_path / "out" / "manifest.json"

    result = runner.invoke(
        app, ["ingest", str(tmp_path / "images"), "--out", str(out), "--key", str(key_file), "--grid", "2x2"]
    )

    assert result.exit_code == 0, result.output
    assert len(list((tmp_path / "out" / "enc").glob("*.enc.png"))) == 2


def test_ingest_stage_flags_reach_the_sidecars(runner, tmp_path, key_file):
    for name in ("a", "b"):
        write_image(random_image(8, 8), tmp_path / "images" / name / f"{name}.png")
    out = tmp_path / "out" / "manifest.json"

    result = runner.invoke(
        app,
        [
            "ingest", str(tmp_path / "images"), "--out", str(out), "--key", str(key_file),
            "--grid", "2x2", "--no-negpos", "--no-channel-shuffle",
        ],
    )

    assert result.exit_code == 0, result.output
    sidecars = [json.loads(p.read_text()) for p in (tmp_path / "out" / "enc").glob("*.enc.json")]
    assert len(sidecars) == 2
    assert all(s["negpos"] is False and s["channel_shuffle"] is False and s["pixel_scramble"] for s in sidecars)
    record = json.loads((tmp_path / "out" / "enc" / "run-config.json").read_text())
    assert (record["negpos"], record["block_shuffle"]) == (False, True)


def test_experiment_command(runner, tmp_path):
    result = runner.invoke(
        app,
        ["experiment", str(tmp_path / "exp"), "--num-per-class", "3", "--size", "8", "--patch-size", "4",
         "--embed-dim", "8", "--num-heads", "2", "--num-layers", "1", "--mlp-dim", "16", "--epochs", "1"],
    )

    assert result.exit_code == 0, result.output
    summary = json.loads((tmp_path / "exp" / "learnability.json").read_text())
    assert set(summary["arms"]) == {"plain", "shared_key", "distinct_keys"}
    assert (tmp_path / "exp" / "plain-report.csv").exists()

import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from mfld import cli, harness
from mfld.datagen import dataset_read
from mfld.ensemble import LoraAdapter, read_matrix, save_adapter
from mfld.records import read_csv

from .conftest import random_system

TINY_HEATMAP = {"task": {"kind": "circles", "n": 40}, "train": {"epochs": 3}, "n_inf": 20,
                "n_list": [4, 8], "m_max": 3, "m_list": [1, 3], "subsample_repeats": 2}
TINY_TRAIN = {"task": {"kind": "circles", "n": 40}, "train": {"epochs": 4}, "n_particles": 6}


def write_json(path, body):
    path.write_text(json.dumps(body))
    return str(path)


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_heatmap_writes_csv_svg_and_manifest(tmp_path, capsys):
    cfg = write_json(tmp_path / "desk.json", TINY_HEATMAP)
    out = tmp_path / "out"
    assert cli.main(["heatmap", "--config", cfg, "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"heatmap.csv", "heatmap.svg", "manifest.json"}
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3 and all(line.startswith("wrote ") for line in lines)
    assert (out / "heatmap.svg").read_text().count('class="cell"') == 4


def test_rerun_from_manifest_is_bitwise_identical(tmp_path):
    cfg = write_json(tmp_path / "desk.json", TINY_HEATMAP)
    first, second = tmp_path / "a", tmp_path / "b"
    assert cli.main(["heatmap", "--config", cfg, "--out", str(first), "--seed", "9"]) == 0
    assert cli.main(["heatmap", "--config", str(first / "manifest.json"),
                     "--out", str(second), "--threads", "8"]) == 0
    for name in ("heatmap.csv", "heatmap.svg"):
        assert digest(first / name) == digest(second / name)
    assert json.loads((second / "manifest.json").read_text())["master_seed"] == 9


def test_train_rerun_gives_identical_checkpoint(tmp_path):
    cfg = write_json(tmp_path / "circles.json", TINY_TRAIN)
    hashes = []
    for run in ("a", "b"):
        assert cli.main(["train", "--config", cfg, "--out", str(tmp_path / run)]) == 0
        hashes.append(digest(tmp_path / run / "network.csv"))
    assert hashes[0] == hashes[1]
    assert harness.read_checkpoint(str(tmp_path / "a" / "network.csv")).n_particles == 6


def test_flags_before_and_after_subcommand(tmp_path):
    cfg = write_json(tmp_path / "c.json", TINY_TRAIN)
    assert cli.main(["--seed", "3", "--out", str(tmp_path / "x"), "gen-data",
                     "--config", cfg]) == 0
    tr = dataset_read(tmp_path / "x" / "train.csv")
    te = dataset_read(tmp_path / "x" / "test.csv")
    assert (len(tr), len(te)) == (32, 8)


def test_merge_and_prune_commands(tmp_path, rng):
    paths = []
    for j in range(2):
        path = str(tmp_path / f"net{j}.csv")
        harness.write_checkpoint(random_system(rng, 5, 2), path)
        paths.append(path)
    out = tmp_path / "out"
    assert cli.main(["merge", *paths, "--out", str(out)]) == 0
    merged = harness.read_checkpoint(str(out / "merged.csv"))
    assert merged.n_particles == 10
    assert cli.main(["prune", str(out / "merged.csv"), "--keep", "3", "--out", str(out)]) == 0
    assert harness.read_checkpoint(str(out / "pruned.csv")).n_particles == 3


def test_lora_merge_command(tmp_path, rng):
    adapters = [LoraAdapter(rng.standard_normal((2, 3)), rng.standard_normal((4, 2)))
                for _ in range(3)]
    stems = []
    for j, ad in enumerate(adapters):
        stems.append(str(tmp_path / f"ad{j}"))
        save_adapter(ad, stems[-1])
    assert cli.main(["merge", "--lora", *stems, "--out", str(tmp_path)]) == 0
    np.testing.assert_allclose(read_matrix(tmp_path / "merged_delta.csv"),
                               np.mean([a.delta() for a in adapters], axis=0),
                               rtol=0, atol=1e-15)


def test_missing_config_exits_one_with_path(tmp_path, capsys):
    missing = str(tmp_path / "nope.json")
    assert cli.main(["heatmap", "--config", missing]) == 1
    assert missing in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["fly"], ["heatmap", "--bogus"], ["prune", "x.csv"]])
def test_usage_errors_exit_one(argv, capsys):
    assert cli.main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_invalid_config_exits_one(tmp_path):
    cfg = write_json(tmp_path / "c.json", {"n_inf": 1})
    assert cli.main(["heatmap", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_runtime_failure_exits_two(tmp_path, capsys):
    assert cli.main(["prune", str(tmp_path / "absent.csv"), "--keep", "1"]) == 2
    assert "prune failed" in capsys.readouterr().err


def test_lora_and_stationary_commands(tmp_path):
    lora = write_json(tmp_path / "l.json", {"lora": {"k": 2, "d": 4, "n": 30, "rank": 2,
                                                      "members": 2, "tasks": 1,
                                                      "optimizer": {"epochs": 2}}})
    assert cli.main(["lora", "--config", lora, "--out", str(tmp_path / "l")]) == 0
    assert len(read_csv(tmp_path / "l" / "lora_merge.csv")) == 3
    stat = write_json(tmp_path / "s.json", {"train": {"epochs": 10}, "n_particles": 20})
    assert cli.main(["stationary", "--config", stat, "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "stationary.csv").exists()


def test_module_entry_point(tmp_path):
    result = subprocess.run([sys.executable, "-m", "mfld", "--help"], capture_output=True,
                            text=True, check=False)
    assert result.returncode == 0 and "heatmap" in result.stdout

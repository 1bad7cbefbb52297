import dataclasses
import math

import numpy as np
import pytest

from mfld import harness
from mfld.config import ConfigError, Experiment, ExperimentConfig, default_config, load_config
from mfld.records import CSV_COLUMNS, MetricRecord, emit_csv, read_csv, select

from .conftest import random_system


def small_heatmap(**changes):
    base = dict(experiment="merge_heatmap", task={"kind": "circles", "n": 60},
                train={"epochs": 5}, n_inf=40, n_list=(5, 10), m_max=4, m_list=(1, 2, 4),
                subsample_repeats=3)
    return ExperimentConfig(**{**base, **changes})


@pytest.fixture(scope="module")
def heatmap_records():
    return harness.run_merge_heatmap(small_heatmap())


def test_records_csv_round_trip(tmp_path):
    records = [MetricRecord("x", "mse", 0.1 + 0.2, N=3, lam=1e-5, epoch=2),
               MetricRecord("x", "accuracy", 1 / 3)]
    emit_csv(records, tmp_path / "r.csv")
    assert read_csv(tmp_path / "r.csv") == records
    assert (tmp_path / "r.csv").read_text().splitlines()[2] == "x,,,,,,accuracy,0.33333333333333331"


def test_empty_records_give_header_only(tmp_path):
    emit_csv([], tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == ",".join(CSV_COLUMNS) + "\n"
    assert read_csv(tmp_path / "e.csv") == []


def test_record_validation(tmp_path):
    with pytest.raises(ValueError, match="metric"):
        MetricRecord("x", "rmse", 1.0)
    with pytest.raises(ValueError, match="non-finite"):
        MetricRecord("x", "mse", math.inf)
    with pytest.raises(ValueError, match="duplicate"):
        emit_csv([MetricRecord("x", "mse", 1.0)] * 2, tmp_path / "d.csv")


def test_heatmap_records_cover_grid(heatmap_records):
    cells = select(heatmap_records, metric="sup_norm", repeat=None)
    assert {(r.N, r.M) for r in cells} == {(n, m) for n in (5, 10) for m in (1, 2, 4)}
    assert len(select(heatmap_records, metric="log_sup_norm")) == 6
    for r in cells:
        reps = [x.value for x in select(heatmap_records, metric="sup_norm", N=r.N, M=r.M)
                if x.repeat is not None]
        assert len(reps) == 3 and r.value == pytest.approx(np.mean(reps))


def test_full_pool_repeats_are_identical(heatmap_records):
    for n in (5, 10):
        reps = {r.value for r in select(heatmap_records, metric="sup_norm", N=n, M=4)
                if r.repeat is not None}
        assert len(reps) == 1


def test_threads_do_not_change_results(heatmap_records):
    assert harness.run_merge_heatmap(small_heatmap(), threads=8) == heatmap_records


def test_svg_has_one_cell_per_grid_point(tmp_path, heatmap_records):
    harness.emit_heatmap_svg(heatmap_records, tmp_path / "h.svg")
    text = (tmp_path / "h.svg").read_text()
    assert text.count('<rect class="cell"') == 6
    assert text.startswith("<svg") and ">N</text>" in text and ">M</text>" in text


def test_svg_needs_aggregates(tmp_path):
    with pytest.raises(ValueError):
        harness.emit_heatmap_svg([], tmp_path / "h.svg")


def test_checkpoint_round_trip(tmp_path, rng):
    s = random_system(rng, 7, 3, scale=2.5)
    s = s.replace_params(s.params, provenance="seed=1")
    harness.write_checkpoint(s, str(tmp_path / "net.csv"))
    back = harness.read_checkpoint(str(tmp_path / "net.csv"))
    assert back.params.tobytes() == s.params.tobytes()
    assert (back.scale, back.provenance) == (2.5, "seed=1")
    assert (tmp_path / "net.csv").read_text().startswith("w0,w1,w2,b,c\n")


def test_lambda_sweep_records():
    cfg = dataclasses.replace(
        default_config(Experiment.LAMBDA_SWEEP),
        task={"kind": "multi_index", "n": 40, "d": 4, "k": 2, "r": 2.0, "label_scale": 2.0},
        n_list=(5,), m_max=3, lambdas=(0.1, 0.0))
    records = harness.run_lambda_sweep(cfg)
    assert len(select(records, metric="ln_mse")) == 2 * 5
    merged = select(records, metric="mse")
    assert [(r.lam, r.M, r.epoch) for r in merged] == [(0.1, 3, 5), (0.0, 3, 5)]


def test_lambda_sweep_needs_squared_error():
    cfg = dataclasses.replace(default_config(Experiment.LAMBDA_SWEEP),
                              train={"loss": "logistic", "epochs": 1})
    with pytest.raises(ConfigError):
        harness.run_lambda_sweep(cfg)


def test_stationary_zero_temperature_contracts():
    cfg = dataclasses.replace(default_config(Experiment.STATIONARY_CHECK),
                              train={"step_size": 0.1, "l2": 0.1, "epochs": 500,
                                     "loss": "squared_error"},
                              lambdas=(0.0, 0.01), n_particles=200)
    records = harness.run_stationary_check(cfg)
    var = {r.lam: r.value for r in select(records, metric="variance")}
    assert var[0.0] < 1e-6
    assert select(records, metric="target_variance", lam=0.01)[0].value == pytest.approx(0.05)


def test_lora_runner_keys_and_jensen():
    cfg = dataclasses.replace(default_config(Experiment.LORA_MERGE),
                              lora={"k": 3, "d": 6, "n": 60, "rank": 4, "members": 3, "tasks": 2,
                                    "optimizer": {"lr": 0.1, "epochs": 5}})
    records = harness.run_lora_merge(cfg)
    assert len(records) == 2 * 3
    for t in range(2):
        merged = select(records, metric="mse", repeat=t)[0]
        mean = select(records, metric="mean_member_mse", repeat=t)[0]
        assert merged.value <= mean.value + 1e-9 and merged.M == 3 and merged.N == 4


def test_run_train_reports_accuracy():
    cfg = dataclasses.replace(default_config(Experiment.TRAIN), n_particles=10,
                              train={**default_config("train").train, "epochs": 3})
    system, records = harness.run_train(cfg)
    assert system.n_particles == 10
    assert len(select(records, metric="train_loss")) == 3
    assert len(select(records, metric="accuracy")) == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_failures_carry_context():
    cfg = small_heatmap(train={"epochs": 2, "step_size": 1e300})
    with pytest.raises(RuntimeError, match="N=40, reference"):
        harness.run_merge_heatmap(cfg)
    with pytest.raises(RuntimeError, match="N=5, member 0"):
        harness.run_lambda_sweep(dataclasses.replace(
            default_config(Experiment.LAMBDA_SWEEP), n_list=(5,), m_max=2,
            train={"loss": "squared_error", "epochs": 2, "step_size": 1e300}))


@pytest.mark.parametrize("changes,match", [
    (dict(n_inf=5), "n_inf"), (dict(m_list=(1, 9)), "m_list"), (dict(train_frac=1.0), "train_frac"),
    (dict(task={"kind": "spiral"}), "task.kind"), (dict(train={"bogus": 1}), "train"),
    (dict(lambdas=(-1.0,)), "lambdas"), (dict(experiment="nope"), "experiment"),
])
def test_config_validation(changes, match):
    with pytest.raises(ConfigError, match=match):
        small_heatmap(**changes)


def test_config_file_layering_and_manifest(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"n_list": [7], "train": {"epochs": 3}}')
    cfg = load_config(path, "merge_heatmap")
    assert cfg.n_list == (7,) and cfg.train["epochs"] == 3 and cfg.train["l2"] == 0.1
    harness.write_manifest(cfg, tmp_path, ["a.csv"])
    assert load_config(tmp_path / "manifest.json") == cfg
    with pytest.raises(ConfigError, match="configures"):
        load_config(tmp_path / "manifest.json", "lora_merge")


@pytest.mark.parametrize("text", ["{", "[1]", '{"unknown_key": 1}'])
def test_bad_config_files(tmp_path, text):
    (tmp_path / "c.json").write_text(text)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.json", "merge_heatmap")

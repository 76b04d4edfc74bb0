from __future__ import annotations

import tests._path_setup  # noqa: F401

import json
import math
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np

from ngseq.errors import ConfigurationError, TrainingAborted, UsageError
from ngseq.harness import (
    CSV_HEADER,
    MetricsLog,
    RowType,
    RunConfig,
    SyntheticTaskConfig,
    ce_pretrain,
    generate_task,
    train,
)
from ngseq.harness.training import SUMMARY_KEYS, frame_accuracy
from ngseq.harness.verify import TINY_TASK
from ngseq.net import Network, load_checkpoint
from ngseq.optim import OptimizerConfig, UpdateRecord

TASK = SyntheticTaskConfig(**{**TINY_TASK.to_mapping(), "num_train": 8, "num_validation": 4})


def _run(method: str = "ng", **changes) -> RunConfig:
    base = RunConfig(
        task=TASK,
        hidden=(4,),
        criterion="mpe",
        optimizer=OptimizerConfig.from_mapping(method, {} if method == "sgd" else {"curvature_minimum": 2}),
        epochs=2,
        ce_epochs=2,
        ce_batch_size=4,
    )
    return base.replace(**changes)


def _record(index: int, **kwargs) -> UpdateRecord:
    base = dict(
        index=index,
        method="hf",
        loss_before=1.0,
        loss_after=0.5,
        step_norm=0.1,
        damping=1.0,
        cg_iterations=3,
        wall_clock=0.01,
        gradient_evaluations=4,
        curvature_products=6,
    )
    base.update(kwargs)
    return UpdateRecord(**base)


class RunConfigTest(unittest.TestCase):
    def test_rejects_frame_criterion_and_bad_kappa(self) -> None:
        with self.assertRaises(ConfigurationError):
            RunConfig(criterion="ce")
        with self.assertRaises(ConfigurationError):
            RunConfig(criterion="bleu")
        with self.assertRaises(ConfigurationError):
            RunConfig(kappa=0.0)
        with self.assertRaises(ConfigurationError):
            RunConfig(hidden=(4, 0))

    def test_updates_per_epoch(self) -> None:
        self.assertEqual(_run("hf").updates_per_epoch(), 4)
        self.assertEqual(_run("sgd").updates_per_epoch(), 2)
        ng = _run("ng", optimizer=OptimizerConfig.from_mapping("ng", {"batch_fraction": 0.3}))
        self.assertEqual(ng.updates_per_epoch(), 4)

    def test_layer_dims(self) -> None:
        self.assertEqual(_run().layer_dims, (3, 4, 4))


class MetricsLogTest(unittest.TestCase):
    def test_update_indices_must_increase(self) -> None:
        log = MetricsLog()
        log.append_update(1, _record(1))
        with self.assertRaises(UsageError):
            log.append_update(1, _record(1))

    def test_compute_accumulates(self) -> None:
        log = MetricsLog()
        log.append_update(1, _record(1))
        row = log.append_update(1, _record(2, rho=0.8))
        self.assertEqual(log.compute, {"gradient_evaluations": 8, "curvature_products": 12})
        self.assertEqual(row["cumulative_compute"], 20)
        self.assertEqual(log.num_updates, 2)

    def test_csv_layout(self) -> None:
        log = MetricsLog()
        log.append_ce(1, 1.25, 0.5, 0.1)
        log.append_update(1, _record(1, accepted=False))
        lines = log.to_csv().splitlines()
        self.assertEqual(lines[0], ",".join(CSV_HEADER))
        self.assertEqual(len(lines), 3)
        update = dict(zip(CSV_HEADER, lines[2].split(",")))
        self.assertEqual(update["row"], "update")
        self.assertEqual(update["accepted"], "0")
        self.assertEqual(update["rho"], "")
        self.assertEqual(update["loss_after"], "0.5")
        self.assertEqual(len(log.rows_of(RowType.CE)), 1)
        self.assertNotIn("wall_clock", log.deterministic_rows()[0])


class CEPretrainTest(unittest.TestCase):
    def test_lowers_frame_cross_entropy(self) -> None:
        dataset = generate_task(TASK)
        net = Network((3, 4, 4))
        theta0 = net.init_parameters(np.random.default_rng(0))
        log = MetricsLog()
        ce_pretrain(net, theta0, dataset, 20, 0.5, batch_size=4, metrics=log)
        ce_rows = log.rows_of(RowType.CE)
        self.assertEqual(len(ce_rows), 20)
        self.assertLess(ce_rows[-1]["train_loss"], ce_rows[0]["train_loss"])

    def test_separable_features_are_learned_within_twenty_epochs(self) -> None:
        task = SyntheticTaskConfig(
            num_states=4,
            num_symbols=2,
            feature_dim=8,
            min_length=20,
            max_length=30,
            num_train=48,
            num_validation=8,
            noise=0.1,
            confusion=0.0,
        )
        dataset = generate_task(task)
        net = Network((8, 8, 4))
        theta0 = net.init_parameters(np.random.default_rng(0))
        theta = ce_pretrain(net, theta0, dataset, 20, 2.0, batch_size=2)
        self.assertGreater(frame_accuracy(net, theta, dataset.validation), 0.9)

    def test_default_task_beats_twice_chance(self) -> None:
        task = SyntheticTaskConfig()
        dataset = generate_task(task)
        net = Network(RunConfig(task=task).layer_dims)
        theta0 = net.init_parameters(np.random.default_rng(0))
        theta = ce_pretrain(net, theta0, dataset, 20, 0.5)
        self.assertGreaterEqual(frame_accuracy(net, theta, dataset.validation), 2.0 / task.num_states)

    def test_zero_epochs_returns_a_copy(self) -> None:
        dataset = generate_task(TASK)
        net = Network((3, 4, 4))
        theta0 = net.init_parameters(np.random.default_rng(0))
        theta = ce_pretrain(net, theta0, dataset, 0, 0.5)
        np.testing.assert_array_equal(theta, theta0)
        self.assertIsNot(theta, theta0)


class TrainTest(unittest.TestCase):
    def test_every_method_completes(self) -> None:
        dataset = generate_task(TASK)
        for method in ("sgd", "hf", "dsag_hf", "ng"):
            result = train(_run(method), dataset=dataset)
            summary = result.summary
            for key in SUMMARY_KEYS:
                self.assertIn(key, summary)
            self.assertEqual(summary["method"], method)
            self.assertEqual(summary["updates"], 2 * _run(method).updates_per_epoch())
            self.assertTrue(math.isfinite(summary["validation_accuracy"]))
            self.assertEqual(len(result.metrics.rows_of(RowType.EPOCH)), 3)
            self.assertEqual(summary["ce_baseline"]["method"], "ce")

    def test_runs_are_deterministic(self) -> None:
        first = train(_run("dsag_hf"))
        second = train(_run("dsag_hf"))
        self.assertEqual(first.metrics.deterministic_rows(), second.metrics.deterministic_rows())
        np.testing.assert_array_equal(first.theta, second.theta)

    def test_sgd_improves_the_criterion_over_eight_epochs(self) -> None:
        task = SyntheticTaskConfig(num_train=64, num_validation=16)
        run = RunConfig(task=task, optimizer=OptimizerConfig.from_mapping("sgd", {"learning_rate": 1e-4}), epochs=8)
        result = train(run)
        epochs = result.metrics.rows_of(RowType.EPOCH)
        self.assertEqual(len(epochs), 9)
        self.assertLess(epochs[-1]["train_loss"], epochs[0]["train_loss"])

    def test_zero_epochs_reports_the_ce_baseline(self) -> None:
        result = train(_run("hf", epochs=0))
        summary = result.summary
        self.assertEqual(summary["updates"], 0)
        self.assertEqual(summary["method"], "ce")
        for key in ("train_accuracy", "validation_accuracy", "validation_token_error_rate"):
            self.assertEqual(summary[key], summary["ce_baseline"][key])
        np.testing.assert_array_equal(result.theta, result.theta_ce)

    def test_writes_outputs(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            out = Path(td) / "run"
            train(_run("ng", output_dir=out, epochs=1))
            for name in ("ce.npz", "final.npz", "metrics.csv", "summary.json"):
                self.assertTrue((out / name).is_file(), name)
            summary = json.loads((out / "summary.json").read_text())
            self.assertEqual(summary["criterion"], "mpe")
            self.assertIn("curvature_fraction", summary["compute"])
            net, _ = load_checkpoint(out / "final.npz")
            self.assertEqual(net.layer_dims, (3, 4, 4))

    def test_non_finite_update_aborts_with_partial_metrics(self) -> None:
        def diverging(objective, theta, batch, cfg, state):
            state.update_index += 1
            return theta, _record(state.update_index, loss_after=float("nan"))

        with tempfile.TemporaryDirectory() as td:
            out = Path(td)
            with patch("ngseq.harness.training.get_optimizer", return_value=diverging):
                with self.assertRaises(TrainingAborted) as ctx:
                    train(_run("hf", output_dir=out))
            self.assertTrue((out / "metrics.csv").is_file())
            self.assertFalse((out / "summary.json").exists())
        self.assertEqual(len(ctx.exception.metrics.rows_of(RowType.UPDATE)), 0)
        self.assertEqual(len(ctx.exception.metrics.rows_of(RowType.EPOCH)), 1)

    def test_dataset_must_match_task_shape(self) -> None:
        other = generate_task(SyntheticTaskConfig(**{**TASK.to_mapping(), "feature_dim": 5}))
        with self.assertRaises(ConfigurationError):
            train(_run(), dataset=other)

    def test_listener_sees_every_update_and_epoch(self) -> None:
        seen: list[str] = []

        class Listener:
            def emit_update(self, record, method):
                seen.append(f"update {record.index}")

            def emit_epoch(self, row):
                seen.append(f"epoch {row['epoch']}")

        train(_run("hf", epochs=1), listener=Listener())
        self.assertEqual(seen, ["epoch 0", "update 1", "update 2", "update 3", "update 4", "epoch 1"])


if __name__ == "__main__":
    unittest.main()

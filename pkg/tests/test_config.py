from __future__ import annotations

import tests._path_setup  # noqa: F401

import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from ngseq import config as cfg
from ngseq.errors import ConfigurationError
from ngseq.harness import available_presets, get_preset
from ngseq.optim import OptimizerConfig, OptimizerMethod


def _write(td: str, text: str) -> Path:
    path = Path(td) / "run.toml"
    path.write_text(text, encoding="utf-8")
    return path


@patch.dict(os.environ, {}, clear=True)
class LoadRunConfigTest(unittest.TestCase):
    def test_defaults(self) -> None:
        run = cfg.load_run_config()
        self.assertEqual(run.method, OptimizerMethod.NG)
        self.assertEqual(run.hidden, (32, 32))
        self.assertEqual(run.task.num_train, 256)
        self.assertIsNone(run.output_dir)

    def test_file_overrides_preset(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            path = _write(
                td,
                '[optimizer]\nmethod = "hf"\ndamping = 10.0\n\n'
                '[cg]\nmax_iters = 12\n\n'
                '[training]\nepochs = 1\ncriterion = "smbr"\n',
            )
            run = cfg.load_run_config(path, preset="tiny")
        self.assertEqual(run.hidden, (4,))
        self.assertEqual(run.task.num_states, 4)
        self.assertEqual(run.method, OptimizerMethod.HF)
        self.assertEqual(run.optimizer.damping, 10.0)
        self.assertEqual(run.optimizer.curvature_minimum, 2)
        self.assertEqual(run.optimizer.cg.max_iters, 12)
        self.assertEqual(run.epochs, 1)
        self.assertEqual(str(run.criterion), "smbr")

    def test_preset_keys_that_do_not_apply_are_dropped(self) -> None:
        run = cfg.load_run_config(preset="small-data", overrides={"optimizer": {"method": "sgd"}})
        self.assertEqual(run.method, OptimizerMethod.SGD)
        self.assertEqual(run.task.num_train, 128)

    def test_file_keys_that_do_not_apply_are_rejected(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            path = _write(td, '[optimizer]\nmethod = "sgd"\nbatch_fraction = 0.5\n')
            with self.assertRaisesRegex(ConfigurationError, "do not apply"):
                cfg.load_run_config(path)

    def test_seed_env_sets_task_and_training_seed(self) -> None:
        with patch.dict(os.environ, {"NGSEQ_SEED": "7", "NGSEQ_OUT": "/tmp/ngseq-run"}):
            run = cfg.load_run_config()
        self.assertEqual(run.seed, 7)
        self.assertEqual(run.task.seed, 7)
        self.assertEqual(run.output_dir, Path("/tmp/ngseq-run"))

    def test_invalid_int_env_is_ignored(self) -> None:
        with patch.dict(os.environ, {"NGSEQ_SEED": "seven"}):
            with self.assertLogs("ngseq.config", level="WARNING"):
                run = cfg.load_run_config()
        self.assertEqual(run.seed, 0)

    def test_flags_beat_env(self) -> None:
        with patch.dict(os.environ, {"NGSEQ_SEED": "7", "NGSEQ_DEBUG": "true"}):
            run = cfg.load_run_config(overrides={"training": {"seed": 3}})
        self.assertEqual(run.seed, 3)
        self.assertEqual(run.task.seed, 7)
        self.assertTrue(run.debug)

    def test_telemetry_from_env(self) -> None:
        env = {
            "OTEL_EXPORTER_OTLP_ENDPOINT": "http://collector:4318",
            "OTEL_EXPORTER_OTLP_HEADERS": "k=v",
        }
        with patch.dict(os.environ, env):
            run = cfg.load_run_config()
        self.assertEqual(run.telemetry_endpoint, "http://collector:4318")
        self.assertEqual(run.telemetry_headers, "k=v")

    def test_rejects_unknown_sections_keys_and_values(self) -> None:
        bad = [
            "[model]\nlayers = 3\n",
            "[training]\nlearning_rate = 0.1\n",
            "[task]\nvocabulary = 3\n",
            "[training]\nepochs = \"many\"\n",
            "training = 3\n",
            "[optimizer]\nmethod = \"adam\"\n",
        ]
        with tempfile.TemporaryDirectory() as td:
            for text in bad:
                path = _write(td, text)
                with self.assertRaises(ConfigurationError, msg=text):
                    cfg.load_run_config(path)

    def test_missing_and_malformed_files(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            with self.assertRaisesRegex(ConfigurationError, "not found"):
                cfg.load_run_config(Path(td) / "missing.toml")
            path = _write(td, "[training\n")
            with self.assertRaisesRegex(ConfigurationError, "cannot read"):
                cfg.load_run_config(path)

    def test_unknown_preset(self) -> None:
        with self.assertRaises(ConfigurationError):
            cfg.load_run_config(preset="huge")

    def test_saved_config_loads_back_unchanged(self) -> None:
        run = cfg.load_run_config(
            preset="tiny",
            overrides={"optimizer": {"method": "dsag_hf"}, "training": {"output_dir": "/tmp/x"}},
        )
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "config.resolved.toml"
            cfg.save_run_config(run, path)
            loaded = cfg.load_run_config(path)
        self.assertEqual(loaded, run)

    def test_snapshot_leaves_out_headers(self) -> None:
        run = cfg.load_run_config().replace(telemetry_endpoint="http://c:4318", telemetry_headers="k=secret")
        data = cfg.run_config_to_mapping(run)
        self.assertEqual(data["telemetry"], {"endpoint": "http://c:4318"})
        self.assertNotIn("cg", cfg.run_config_to_mapping(run.replace(optimizer=OptimizerConfig("sgd"))))


class PresetTest(unittest.TestCase):
    def test_presets_are_copies(self) -> None:
        self.assertEqual(available_presets(), ["desk", "small-data", "tiny"])
        preset = get_preset("tiny")
        preset["task"]["num_train"] = 1
        self.assertEqual(get_preset("tiny")["task"]["num_train"], 16)


if __name__ == "__main__":
    unittest.main()

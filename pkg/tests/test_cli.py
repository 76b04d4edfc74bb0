from __future__ import annotations

import tests._path_setup  # noqa: F401

import json
import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from ngseq import cli


def _exit_code(argv: list[str]) -> int:
    with patch.object(cli, "configure"):
        try:
            cli.main(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
    raise AssertionError("main() did not exit")


@patch.dict(os.environ, {}, clear=True)
class CliTest(unittest.TestCase):
    def test_no_command_prints_help(self) -> None:
        self.assertEqual(_exit_code([]), 0)

    def test_version(self) -> None:
        self.assertEqual(_exit_code(["version"]), 0)

    def test_missing_config_is_a_usage_error(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            code = _exit_code(["train", "--config", str(Path(td) / "missing.toml"), "--out", td])
        self.assertEqual(code, cli.EXIT_USAGE)

    def test_train_needs_an_output_directory(self) -> None:
        self.assertEqual(_exit_code(["train", "--preset", "tiny"]), cli.EXIT_USAGE)

    def test_verify_single_check(self) -> None:
        self.assertEqual(_exit_code(["verify", "--check", "cg"]), 0)

    def test_failed_check_exits_with_runtime_status(self) -> None:
        from ngseq.harness.verify import CheckResult

        failing = [CheckResult("cg", False, 1.0, "diverged")]
        with patch.object(cli, "run_checks", return_value=failing):
            self.assertEqual(_exit_code(["verify"]), cli.EXIT_RUNTIME)

    def test_generate_then_train_on_the_saved_dataset(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            data = Path(td) / "data"
            run = Path(td) / "run"
            self.assertEqual(_exit_code(["generate", "--preset", "tiny", "--out", str(data)]), 0)
            self.assertTrue((data / "manifest.json").is_file())
            code = _exit_code(
                [
                    "train", "--preset", "tiny", "--method", "hf", "--epochs", "1",
                    "--data", str(data), "--out", str(run),
                ]
            )
            self.assertEqual(code, 0)
            for name in ("config.resolved.toml", "ce.npz", "final.npz", "metrics.csv", "summary.json"):
                self.assertTrue((run / name).is_file(), name)
            summary = json.loads((run / "summary.json").read_text())
            self.assertEqual(summary["method"], "hf")
            self.assertEqual(summary["epochs"], 1)

    def test_seed_flag_reaches_the_run(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            code = _exit_code(
                ["train", "--preset", "tiny", "--epochs", "0", "--seed", "5", "--out", td]
            )
            self.assertEqual(code, 0)
            summary = json.loads((Path(td) / "summary.json").read_text())
        self.assertEqual(summary["seed"], 5)

    def test_compare(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            code = _exit_code(
                [
                    "compare", "--preset", "tiny", "--epochs", "1", "--seeds", "1",
                    "--methods", "sgd", "ng", "--out", td,
                ]
            )
            self.assertEqual(code, 0)
            lines = (Path(td) / "compare.csv").read_text().splitlines()
        self.assertEqual([line.split(",")[0] for line in lines[1:]], ["ce", "sgd", "ng"])

    def test_compare_rejects_zero_seeds(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            code = _exit_code(["compare", "--preset", "tiny", "--seeds", "0", "--out", td])
        self.assertEqual(code, cli.EXIT_USAGE)


if __name__ == "__main__":
    unittest.main()

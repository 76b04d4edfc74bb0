"""Tests for ngseq.logging_setup."""

from __future__ import annotations

import tests._path_setup  # noqa: F401

import logging
from pathlib import Path
from unittest.mock import patch

import pytest
from rich.logging import RichHandler

from ngseq.logging_setup import _PACKAGE, configure


@pytest.fixture(autouse=True)
def _clean_logger():
    """Reset the package logger between tests."""
    pkg = logging.getLogger(_PACKAGE)
    pkg.handlers.clear()
    pkg.setLevel(logging.WARNING)
    yield
    for h in pkg.handlers:
        h.close()
    pkg.handlers.clear()
    pkg.setLevel(logging.WARNING)


class TestConfigure:
    def test_attaches_file_and_console_handlers(self, tmp_path: Path):
        configure(tmp_path / "run.log", debug=True)
        pkg = logging.getLogger(_PACKAGE)
        assert len(pkg.handlers) == 2
        handler_types = {type(h).__name__ for h in pkg.handlers}
        assert "RotatingFileHandler" in handler_types
        assert "RichHandler" in handler_types

    def test_without_log_file_only_console(self):
        configure(None)
        pkg = logging.getLogger(_PACKAGE)
        assert len(pkg.handlers) == 1
        assert isinstance(pkg.handlers[0], RichHandler)

    def test_idempotent_without_reconfigure(self, tmp_path: Path):
        configure(tmp_path / "run.log")
        configure(tmp_path / "run.log")
        assert len(logging.getLogger(_PACKAGE).handlers) == 2

    def test_reconfigure_replaces_handlers(self, tmp_path: Path):
        configure(tmp_path / "first.log")
        configure(None, reconfigure=True)
        assert len(logging.getLogger(_PACKAGE).handlers) == 1

    def test_console_level_follows_debug(self):
        configure(None, debug=False)
        pkg = logging.getLogger(_PACKAGE)
        assert pkg.level == logging.INFO
        assert pkg.handlers[0].level == logging.WARNING

        configure(None, debug=True, reconfigure=True)
        assert pkg.level == logging.DEBUG
        assert pkg.handlers[0].level == logging.INFO

    def test_file_handler_failure_prints_to_stderr(self, capsys):
        bad_path = Path("/nonexistent/deeply/nested/dir/run.log")
        with patch("ngseq.logging_setup.Path.mkdir", side_effect=OSError("permission denied")):
            configure(bad_path)
        captured = capsys.readouterr()
        assert "WARNING" in captured.err
        assert "permission denied" in captured.err
        assert len(logging.getLogger(_PACKAGE).handlers) == 1

    def test_writes_progress_to_log_file(self, tmp_path: Path):
        log_file = tmp_path / "run.log"
        configure(log_file)
        logging.getLogger(f"{_PACKAGE}.harness.training").info("epoch 1 done")
        for h in logging.getLogger(_PACKAGE).handlers:
            h.flush()
        assert "epoch 1 done" in log_file.read_text()

    def test_propagate_is_false(self):
        configure(None)
        assert logging.getLogger(_PACKAGE).propagate is False

"""Logging for ngseq runs.

Progress lines (one per update and per epoch) go to the package logger at
INFO. The console shows WARNING and above through rich; with a log file
every record down to DEBUG is kept there, rotated.
"""

from __future__ import annotations

import logging
import logging.handlers
import sys
from pathlib import Path

from rich.console import Console
from rich.logging import RichHandler

_PACKAGE = "ngseq"
_LOG_BYTES = 4 * 1024 * 1024
_LOG_BACKUPS = 3
_FILE_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"


def _file_handler(log_file: Path) -> logging.Handler | None:
    try:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        fh = logging.handlers.RotatingFileHandler(
            log_file,
            maxBytes=_LOG_BYTES,
            backupCount=_LOG_BACKUPS,
            encoding="utf-8",
        )
    except OSError as exc:
        print(f"ngseq: WARNING: could not open log file {log_file}: {exc}", file=sys.stderr)
        return None
    fh.setLevel(logging.DEBUG)
    fh.setFormatter(logging.Formatter(_FILE_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"))
    return fh


def configure(log_file: Path | None, *, debug: bool = False, reconfigure: bool = False) -> None:
    """Attach handlers to the ngseq package logger.

    Idempotent unless *reconfigure* is True. With *debug* the console also
    shows INFO progress and the package level drops to DEBUG.
    """
    pkg_logger = logging.getLogger(_PACKAGE)
    if pkg_logger.handlers and not reconfigure:
        return
    for handler in list(pkg_logger.handlers):
        handler.close()
    pkg_logger.handlers.clear()

    pkg_logger.setLevel(logging.DEBUG if debug else logging.INFO)

    if log_file is not None:
        fh = _file_handler(Path(log_file))
        if fh is not None:
            pkg_logger.addHandler(fh)

    console = RichHandler(
        console=Console(stderr=True),
        show_path=False,
        show_time=debug,
        markup=False,
        rich_tracebacks=debug,
    )
    console.setLevel(logging.INFO if debug else logging.WARNING)
    pkg_logger.addHandler(console)

    pkg_logger.propagate = False

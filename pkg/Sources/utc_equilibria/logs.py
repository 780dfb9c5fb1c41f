# MIT License
# Copyright (c) 2025 Ronnie Garrison
"""Logger factory shared by the CLI and long-running tools."""
from __future__ import annotations

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional, Union

LOG_FORMAT = "[%(asctime)s] %(levelname)s %(name)s: %(message)s"
MAX_LOG_BYTES = 5 * 1024 * 1024
LOG_BACKUPS = 3


def setup_logger(
    name: str = "utc_equilibria",
    log_file: Optional[Union[str, Path]] = None,
    level: int = logging.INFO,
) -> logging.Logger:
    """
    Sets up and returns the package logger.
    Args:
        name (str): Logger name.
        log_file (str | Path | None): Optional rotating log file.
        level (int): Logging level.
    Returns:
        logging.Logger: Configured logger.
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    formatter = logging.Formatter(LOG_FORMAT)
    if not any(isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler)
               for h in logger.handlers):
        stream_handler = logging.StreamHandler()
        stream_handler.setFormatter(formatter)
        logger.addHandler(stream_handler)
    if log_file is not None:
        target = str(Path(log_file).expanduser().resolve())
        if not any(isinstance(h, RotatingFileHandler) and h.baseFilename == target for h in logger.handlers):
            Path(target).parent.mkdir(parents=True, exist_ok=True)
            file_handler = RotatingFileHandler(
                target, maxBytes=MAX_LOG_BYTES, backupCount=LOG_BACKUPS, encoding="utf-8"
            )
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)
    for handler in logger.handlers:
        handler.setLevel(level)
    return logger

#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Logging configuration for latentprobit.
Colored console output for interactive runs, optional rotating log file for
long experiment sweeps.
"""

import copy
import logging
import sys
from pathlib import Path
from typing import Optional, TextIO
from logging.handlers import RotatingFileHandler


LOGGER_NAME = "latentprobit"


class Colors:
    """ANSI color codes for terminal output."""
    RESET = '\033[0m'
    BOLD = '\033[1m'
    RED = '\033[31m'
    YELLOW = '\033[33m'
    CYAN = '\033[36m'
    BRIGHT_BLACK = '\033[90m'
    BRIGHT_RED = '\033[91m'
    BRIGHT_YELLOW = '\033[93m'
    BRIGHT_BLUE = '\033[94m'


class ColoredFormatter(logging.Formatter):
    """Formatter that colors the level name and message on a TTY."""

    LEVEL_COLORS = {
        logging.DEBUG: Colors.BRIGHT_BLACK,
        logging.INFO: Colors.BRIGHT_BLUE,
        logging.WARNING: Colors.BRIGHT_YELLOW,
        logging.ERROR: Colors.BRIGHT_RED,
        logging.CRITICAL: Colors.BOLD + Colors.BRIGHT_RED,
    }

    MESSAGE_COLORS = {
        logging.WARNING: Colors.YELLOW,
        logging.ERROR: Colors.RED,
        logging.CRITICAL: Colors.RED,
    }

    def __init__(self, fmt: str = None, datefmt: str = None, use_color: bool = True, stream: TextIO = None):
        super().__init__(fmt, datefmt)
        # Color only when the stream the handler writes to is a terminal.
        stream = sys.stderr if stream is None else stream
        self.use_color = use_color and stream.isatty()

    def format(self, record: logging.LogRecord) -> str:
        if not self.use_color:
            return super().format(record)

        # The record is shared with the file handler, so color a copy.
        record = copy.copy(record)
        color = self.LEVEL_COLORS.get(record.levelno, Colors.RESET)
        record.levelname = f"{color}{record.levelname}{Colors.RESET}"
        message_color = self.MESSAGE_COLORS.get(record.levelno)
        if message_color:
            record.msg = f"{message_color}{record.getMessage()}{Colors.RESET}"
            record.args = None
        return super().format(record)


def setup_logger(
    name: str = LOGGER_NAME,
    level: int = logging.INFO,
    log_file: Optional[str] = None,
    console: bool = True,
    colored: bool = True,
    max_bytes: int = 10 * 1024 * 1024,
    backup_count: int = 3
) -> logging.Logger:
    """
    Set up the package logger with console and file handlers.

    Args:
        name: Logger name
        level: Logging level
        log_file: Path to a rotating log file (optional)
        console: Enable console output (stderr, so CSV on stdout stays clean)
        colored: Enable colored console output
        max_bytes: Maximum size of log file before rotation
        backup_count: Number of rotated files to keep

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    logger.handlers.clear()

    if console:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(level)
        if colored:
            console_fmt = ColoredFormatter(fmt='%(levelname)s - %(message)s', use_color=True,
                                           stream=console_handler.stream)
        else:
            console_fmt = logging.Formatter(fmt='%(levelname)s - %(message)s')
        console_handler.setFormatter(console_fmt)
        logger.addHandler(console_handler)

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)

        file_handler = RotatingFileHandler(
            log_file,
            maxBytes=max_bytes,
            backupCount=backup_count,
            encoding='utf-8'
        )
        file_handler.setLevel(level)
        file_handler.setFormatter(logging.Formatter(
            fmt='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger


def get_logger(name: str = LOGGER_NAME) -> logging.Logger:
    """Return the package logger, configuring defaults on first use."""
    logger = logging.getLogger(name)
    if not logger.handlers:
        return setup_logger(name, level=logging.WARNING)
    return logger

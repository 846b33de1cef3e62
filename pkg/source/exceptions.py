#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Custom exceptions for the latent probit model toolkit.
Every error raised by the package derives from LPMException so the CLI can
map it onto an exit code.
"""


class LPMException(Exception):
    """Base exception class for all latentprobit errors."""

    exit_code = 1


class ValidationError(LPMException):
    """Raised when an input violates a documented precondition."""

    def __init__(self, message: str, field: str = None):
        self.message = message
        self.field = field
        super().__init__(self.message)

    def __str__(self):
        if self.field:
            return f"Validation Error ({self.field}): {self.message}"
        return f"Validation Error: {self.message}"


class ConfigError(LPMException):
    """Raised when configuration loading or parsing fails."""

    def __init__(self, message: str, config_file: str = None):
        self.message = message
        self.config_file = config_file
        super().__init__(self.message)

    def __str__(self):
        if self.config_file:
            return f"Config Error ({self.config_file}): {self.message}"
        return f"Config Error: {self.message}"


class ParseError(LPMException):
    """Raised when a parameter file cannot be decoded."""

    exit_code = 2

    def __init__(self, message: str, field: str = None):
        self.message = message
        self.field = field
        super().__init__(self.message)

    def __str__(self):
        if self.field:
            return f"Parse Error ({self.field}): {self.message}"
        return f"Parse Error: {self.message}"


class UnsupportedVersionError(ParseError):
    """Raised when a parameter file carries an unknown format version."""

    def __init__(self, version, supported: int = None):
        self.version = version
        self.supported = supported
        super().__init__(f"unsupported parameter file version {version!r}", field="version")

    def __str__(self):
        if self.supported is not None:
            return f"Unsupported version {self.version!r} (this build reads version {self.supported})"
        return f"Unsupported version {self.version!r}"


class DataError(LPMException):
    """Raised when a dataset cannot be read or cannot support a requested split."""

    exit_code = 2

    def __init__(self, message: str, row: int = None, column: str = None):
        self.message = message
        self.row = row
        self.column = column
        super().__init__(self.message)

    def __str__(self):
        where = []
        if self.row is not None:
            where.append(f"row {self.row}")
        if self.column is not None:
            where.append(f"column {self.column}")
        if where:
            return f"Data Error ({', '.join(where)}): {self.message}"
        return f"Data Error: {self.message}"


class NumericalError(LPMException):
    """Raised when a linear-algebra step fails (singular or non-PD matrix)."""

    exit_code = 3

    def __init__(self, message: str, context: str = None):
        self.message = message
        self.context = context
        super().__init__(self.message)

    def __str__(self):
        if self.context:
            return f"Numerical Error ({self.context}): {self.message}"
        return f"Numerical Error: {self.message}"


class DivergenceError(NumericalError):
    """Raised when the log posterior becomes non-finite during fitting."""

    def __init__(self, message: str = "log posterior is not finite", trace=None):
        super().__init__(message, context="fit")
        self.trace = trace

    def __str__(self):
        if self.trace is not None and self.trace.iterations:
            return (f"Divergence after {self.trace.iterations} iterations: {self.message} "
                    f"(last finite log posterior {self.trace.log_posterior[-1]:.6g})")
        return f"Divergence: {self.message}"

"""Exception types shared across the toolkit.

Argument misuse raises plain ValueError; the classes here cover conditions
that callers (and the CLI exit-code mapping) need to tell apart.
"""

from __future__ import annotations


class ReprbenchError(Exception):
    """Base class for toolkit-specific failures."""


class FormatError(ReprbenchError):
    """A file does not look like the expected format (bad magic, bad header)."""


class CorruptionError(ReprbenchError):
    """A file has the right format markers but inconsistent or truncated content."""


class DataValidationError(ReprbenchError):
    """Decoded or supplied data violates an invariant (non-finite values, bad ids)."""


class StageError(ReprbenchError):
    """A token sequence was passed to an operation at the wrong pipeline stage."""


class ConfigError(ReprbenchError):
    """A run configuration is inconsistent or references missing inputs."""


class DivergenceError(ReprbenchError):
    """Iterative training diverged and could not be recovered."""

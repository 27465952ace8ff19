"""Run configuration files: line-based key=value text with [section] headers.

Sections are named after CLI subcommands; keys use the same spelling as the
command's flags without the leading dashes. A [common] section supplies
defaults shared by every command (keys placed before any header also land in
[common]). Precedence, highest first: explicit CLI flag, [command] section,
[common] section, built-in default.

Lines starting with # are comments; blank lines are ignored; values keep
internal whitespace but are stripped at both ends.
"""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path

from .errors import ConfigError

COMMON_SECTION = "common"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_config(text: str, origin: str = "<config>") -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current = COMMON_SECTION
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"{origin}:{lineno}: malformed section header {line!r}")
            current = line[1:-1].strip()
            if not current:
                raise ConfigError(f"{origin}:{lineno}: empty section name")
            sections.setdefault(current, {})
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{origin}:{lineno}: expected key=value, got {line!r}")
        key = key.strip()
        section = sections.setdefault(current, {})
        if key in section:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r} in [{current}]")
        section[key] = value.strip()
    return sections


def load_config(path: str | Path) -> dict[str, dict[str, str]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, origin=str(path))


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError(f"expected a boolean (true/false/on/off/1/0), got {text!r}")


def parse_fraction(text: str) -> Fraction:
    try:
        value = Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"expected a rational number, got {text!r}") from exc
    return value

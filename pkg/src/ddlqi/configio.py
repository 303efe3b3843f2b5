"""Configuration files and deterministic result serialization.

Run configurations are YAML mappings with a strict key whitelist —
unknown keys are an error, not a warning, so typos cannot silently fall
back to defaults.  All numeric output is formatted with 12 significant
digits through a single code path, which makes result files
byte-reproducible for a fixed seed.
"""

from __future__ import annotations

import csv
import io

import numpy as np
import yaml

from .errors import ConfigError

__all__ = [
    "format_number",
    "write_csv",
    "write_matrix_text",
    "pack_to_text",
    "load_config",
    "merge_config",
    "validate_config",
]

#: significant digits used for every number written to disk
SIG_DIGITS = 12


def format_number(value):
    """Canonical text form of a scalar: 12 significant digits, plain
    ``0`` for signed zeros so formatting is platform-stable."""
    x = float(value)
    if x == 0.0:
        return "0"
    return f"{x:.{SIG_DIGITS}g}"


def write_csv(path, header, rows):
    """Write rows to ``path`` as RFC-4180-style CSV.

    Fields containing separators or quotes are quoted with doubled
    inner quotes; numeric fields are formatted via
    :func:`format_number`; the line terminator is a bare newline on
    every platform.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n",
                            quoting=csv.QUOTE_MINIMAL)
        writer.writerow(header)
        for row in rows:
            writer.writerow([
                cell if isinstance(cell, str) else format_number(cell)
                for cell in row])


def write_matrix_text(fh, name, matrix):
    """Append a labelled matrix block to an open text stream."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    fh.write(f"{name} ({matrix.shape[0]}x{matrix.shape[1]}):\n")
    for row in matrix:
        fh.write("  " + "  ".join(format_number(v) for v in row) + "\n")


def pack_to_text(pack):
    """Human-readable, deterministic dump of a covariance pack."""
    out = io.StringIO()
    out.write(f"variant: {pack.variant}\n")
    out.write(f"samples: {pack.num_samples}\n")
    write_matrix_text(out, "state_covariance", pack.xbar)
    write_matrix_text(out, "input_covariance", pack.ubar)
    write_matrix_text(out, "shifted_state_covariance", pack.xpbar)
    write_matrix_text(out, "output_covariance", pack.ybar)
    return out.getvalue()


def load_config(path):
    """Load a YAML run configuration; the top level must be a mapping."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(
            f"config file {path} must contain a mapping at the top level, "
            f"got {type(raw).__name__}")
    return raw


def merge_config(schema, file_values, overrides):
    """Resolve a configuration from schema defaults, file values and
    command-line overrides (increasing precedence).

    ``schema`` maps key -> (python type, default); a default of ``None``
    marks the key as having no value until supplied.  Unknown keys in
    either source raise :class:`ConfigError`.
    """
    validate_config(file_values, schema, "config file")
    validate_config(overrides, schema, "command line")
    resolved = {}
    for key, (typ, default) in schema.items():
        value = default
        if key in file_values and file_values[key] is not None:
            value = _coerce(key, file_values[key], typ)
        if key in overrides and overrides[key] is not None:
            value = _coerce(key, overrides[key], typ)
        resolved[key] = value
    return resolved


def validate_config(values, schema, source):
    unknown = sorted(set(values) - set(schema))
    if unknown:
        known = ", ".join(sorted(schema))
        raise ConfigError(
            f"unknown option(s) in {source}: {', '.join(unknown)} "
            f"(known options: {known})")


def _coerce(key, value, typ):
    if typ is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"option {key} expects true/false, got {value!r}")
    try:
        return typ(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(
            f"option {key} expects {typ.__name__}, got {value!r}") from exc

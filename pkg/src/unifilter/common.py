"""Shared plumbing: error types, seed derivation, deterministic JSON output.

Everything downstream assumes two things from this module: exceptions map onto
CLI exit codes (DataError -> 3, NumericError -> 4), and any randomness flows
through child_rng so one --seed reproduces the whole pipeline byte for byte.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

__version__ = "0.1.0"


class DataError(Exception):
    """Malformed records, schema violations, missing files, bad user input."""


class SchemaError(DataError):
    """A record failed validation; carries the offending line when known."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class NumericError(Exception):
    """Non-finite values, divergent training, failed gradient checks."""


# --- seeding ---------------------------------------------------------------
#
# Child streams are derived from (seed, path components) through SeedSequence
# so that independent pipeline stages never share or reuse a stream.  String
# components are hashed; ints pass through.


def _key_part(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def child_seed(seed: int, *path) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(_key_part(p) for p in path))


def child_rng(seed: int, *path) -> np.random.Generator:
    """Generator for one purpose, e.g. child_rng(seed, "kmeans", restart_idx)."""
    return np.random.default_rng(child_seed(seed, *path))


# --- json ------------------------------------------------------------------


def dump_json_line(obj) -> str:
    """One JSONL line. repr-based floats survive a round trip exactly."""
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_json_file(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def read_json_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)

"""Deterministic on-disk artifacts: canonical JSON, stable CSV, manifests.

Every file written here is a pure function of its inputs: JSON objects are
serialized with sorted keys and compact separators, CSV cells use the
shortest round-trip float representation, and line endings are always plain
newlines.  A run directory gets a ``manifest.json`` naming every artifact
with its SHA-256 content hash plus a digest over the whole manifest, so
rerunning a command with the same configuration and seed must reproduce the
digest bit for bit.  Wall-clock timings are diagnostic only: they live in a
separate ``timings.json`` that is neither listed nor hashed in the manifest.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy

from . import __version__

__all__ = [
    "MANIFEST_NAME",
    "TIMINGS_NAME",
    "canonical_json",
    "config_hash",
    "manifest_digest",
    "sha256_file",
    "write_csv",
    "write_json",
    "write_manifest",
    "write_timings",
]

MANIFEST_NAME = "manifest.json"
TIMINGS_NAME = "timings.json"


def canonical_json(obj) -> str:
    """Sorted-key, compact, NaN-free JSON; the only JSON writer used."""
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), allow_nan=False
    )


def _sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def config_hash(config: Mapping) -> str:
    return _sha256_hex(canonical_json(config).encode())


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path: Path, obj) -> None:
    path.write_text(canonical_json(obj) + "\n")


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(
    path: Path, header: Sequence[str], rows: Iterable[Sequence]
) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(cell) for cell in row])


def _versions() -> dict:
    return {
        "migswitch": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def manifest_digest(manifest: Mapping) -> str:
    """Digest over the manifest content, ignoring the digest field itself."""
    body = {k: v for k, v in manifest.items() if k != "digest"}
    return _sha256_hex(canonical_json(body).encode())


def write_manifest(
    out_dir: Path,
    command: str,
    config: Mapping,
    seed: int | None = None,
) -> dict:
    """Hash every artifact in ``out_dir`` and write ``manifest.json``.

    All regular files except the manifest itself and the timings file are
    listed.  Returns the manifest dictionary including its digest.
    """
    out_dir = Path(out_dir)
    files = {}
    for path in sorted(out_dir.iterdir()):
        if not path.is_file() or path.name in (MANIFEST_NAME, TIMINGS_NAME):
            continue
        files[path.name] = sha256_file(path)
    manifest = {
        "command": command,
        "config": dict(config),
        "config_hash": config_hash(config),
        "seed": seed,
        "files": files,
        "versions": _versions(),
    }
    manifest["digest"] = manifest_digest(manifest)
    write_json(out_dir / MANIFEST_NAME, manifest)
    return manifest


def write_timings(out_dir: Path, timings: Mapping[str, float]) -> None:
    """Diagnostic wall-clock times; excluded from the manifest on purpose."""
    write_json(
        Path(out_dir) / TIMINGS_NAME,
        {"timings": {k: float(v) for k, v in timings.items()}},
    )

import hashlib
import json
import os
import re
from pathlib import Path


def sanitize_name(name: str) -> str:
    """
    Sanitizes a dataset or run name for use in file names and CSV rows.
    - Allows only alphanumeric characters, dashes and underscores.
    - Falls back to "dataset" when nothing survives.
    - Truncates to 64 characters.
    """
    clean = re.sub(r"[^a-zA-Z0-9_\-]", "_", name.strip())
    clean = clean.strip("_")
    return (clean or "dataset")[:64]


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_atomic(path, text: str) -> Path:
    """Write through a sibling temp file and rename, so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return path


def write_json_atomic(path, payload) -> Path:
    return write_atomic(path, json.dumps(payload, indent=2, sort_keys=False) + "\n")

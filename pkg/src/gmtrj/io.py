"""File output helpers: atomic writes and provenance headers."""

from __future__ import annotations

import hashlib
import os
import tempfile
from pathlib import Path

from . import __version__


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to a temp file beside ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def header_lines(config_digest: str, seed, extra: dict | None = None) -> str:
    """Comment lines naming tool version, config digest and seed."""
    lines = [f"# tool=gmtrj {__version__}", f"# config_digest={config_digest}", f"# seed={seed}"]
    for key, value in (extra or {}).items():
        lines.append(f"# {key}={value}")
    return "\n".join(lines) + "\n"

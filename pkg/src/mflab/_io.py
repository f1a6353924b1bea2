"""Small file-writing helpers: atomic replacement and stable float text."""

from __future__ import annotations

import json
import os
import tempfile


def fmt(x) -> str:
    """Shortest round-trip decimal form; stable across reruns."""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, header: str, rows, comments=()) -> None:
    lines = [f"# {c}" for c in comments]
    lines.append(header)
    for row in rows:
        lines.append(",".join(fmt(x) for x in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path: str, payload) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")

"""File helpers: atomic writes, JSON with positioned errors, run manifests."""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path


class InputError(ValueError):
    """A user-supplied file is missing or malformed."""


def atomic_write(path, text: str) -> None:
    """Write ``text`` to a sibling temp file and rename it over ``path``."""
    path = Path(path)
    parent = path.parent if str(path.parent) else Path(".")
    parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    atomic_write(path, dumps(obj))


def read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"{path}: file not found") from None
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None


def parse_json(text: str, source="<string>"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{source}: malformed JSON at line {exc.lineno}, column {exc.colno}: "
                         f"{exc.msg}") from None


def read_json(path):
    return parse_json(read_text(path), str(path))


def read_jsonl(path) -> list:
    rows = []
    for k, line in enumerate(read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: malformed JSON at line {k}, column {exc.colno}: "
                             f"{exc.msg}") from None
    return rows


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def manifest_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


def write_manifest(out, command: str, options: dict, inputs, outputs, seed=None, wall_time=0.0,
                   extra=None) -> None:
    """Record enough to replay a command next to its primary output ``out``."""
    from . import __version__

    m = {
        "command": command,
        "options": options,
        "config_hash": config_hash(options),
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "code_version": __version__,
        "wall_time": wall_time,
    }
    if extra:
        m.update(extra)
    write_json(manifest_path(out), m)

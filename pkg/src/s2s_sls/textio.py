"""Flat ``key = value`` text files.

Values are Python literals (numbers, strings, booleans, lists). Floats are
written with 17 significant digits so a write/read cycle is bit-exact.
"""
from __future__ import annotations

import ast
import json
import os
import tempfile

import numpy as np


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "True" if v else "False"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not np.isfinite(v):
            raise ValueError("cannot serialize non-finite float")
        s = "%.17g" % v
        return s if any(ch in s for ch in ".en") else s + ".0"
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if v is None:
        return "None"
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(format_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def dumps_kv(items: dict, header: str = "") -> str:
    lines = [f"# {line}" for line in header.splitlines()] if header else []
    for k, v in items.items():
        lines.append(f"{k} = {format_value(v)}")
    return "\n".join(lines) + "\n"


def loads_kv(text: str, source: str = "<text>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        if key in out:
            raise ValueError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = ast.literal_eval(val.strip())
        except (ValueError, SyntaxError) as exc:
            raise ValueError(f"{source}:{lineno}: cannot parse value for {key!r}: {val.strip()!r}") from exc
    return out


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_kv(path, items: dict, header: str = "") -> None:
    atomic_write_text(path, dumps_kv(items, header))


def read_kv(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return loads_kv(fh.read(), source=os.fspath(path))

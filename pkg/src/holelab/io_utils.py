"""Atomic file outputs: CSV, JSON, and flat binary fields."""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile

import numpy as np


def atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(path: str, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    atomic_write_text(path, buf.getvalue())


def write_json(path: str, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_field(path: str, values: np.ndarray, h: float) -> None:
    """Flat binary field: int64 n, float64 h, int64 d, then float64 node
    values in lexicographic (C) order."""
    values = np.asarray(values, dtype=np.float64)
    header = struct.pack("<qdq", values.shape[0], float(h), values.ndim)
    atomic_write_bytes(path, header + values.tobytes(order="C"))


def read_field(path: str):
    with open(path, "rb") as fh:
        raw = fh.read()
    n, h, d = struct.unpack_from("<qdq", raw)
    values = np.frombuffer(raw, dtype=np.float64, offset=24)
    return values.reshape((n,) * d), h

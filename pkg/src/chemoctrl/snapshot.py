"""Snapshot files and CSV logs.

Snapshot layout: a short ASCII header, one ``key value...`` pair per line,
terminated by ``end``, followed by the little-endian float64 payload in
row-major order::

    CHEMOCTRL-SNAPSHOT 1
    dims 64 64
    spacing 0.015625 0.015625
    step 10
    time 0.05
    end
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = "CHEMOCTRL-SNAPSHOT 1"


class SnapshotError(ValueError):
    pass


class SnapshotFormatError(SnapshotError):
    """Bad magic string or malformed header."""


class SnapshotTruncatedError(SnapshotError):
    """Payload length disagrees with the header dims."""


@dataclass
class Snapshot:
    values: np.ndarray
    spacing: tuple[float, ...]
    step: int = 0
    time: float = 0.0


def write_snapshot(field, path, spacing, step: int = 0, time: float = 0.0) -> Path:
    path = Path(path)
    values = np.asarray(field, dtype=np.float64)
    spacing = tuple(float(h) for h in spacing)
    if len(spacing) != values.ndim:
        raise ValueError("spacing must have one entry per axis")
    header = [
        MAGIC,
        "dims " + " ".join(str(n) for n in values.shape),
        "spacing " + " ".join(repr(h) for h in spacing),
        f"step {int(step)}",
        f"time {float(time)!r}",
        "end",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(values).astype("<f8").tobytes())
    return path


def read_snapshot(path) -> Snapshot:
    data = Path(path).read_bytes()
    meta = {}
    pos = 0
    first = True
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise SnapshotFormatError(f"{path}: header not terminated")
        try:
            line = data[pos:nl].decode("ascii")
        except UnicodeDecodeError as exc:
            raise SnapshotFormatError(f"{path}: non-ASCII header") from exc
        pos = nl + 1
        if first:
            if line != MAGIC:
                raise SnapshotFormatError(f"{path}: bad magic string {line[:40]!r}")
            first = False
            continue
        if line == "end":
            break
        key, _, rest = line.partition(" ")
        meta[key] = rest.split()
    try:
        dims = tuple(int(x) for x in meta["dims"])
        spacing = tuple(float(x) for x in meta["spacing"])
        step = int(meta["step"][0])
        time = float(meta["time"][0])
    except (KeyError, ValueError, IndexError) as exc:
        raise SnapshotFormatError(f"{path}: malformed header ({exc})") from exc
    if len(spacing) != len(dims) or any(n < 1 for n in dims):
        raise SnapshotFormatError(f"{path}: inconsistent dims/spacing")
    payload = data[pos:]
    expected = int(np.prod(dims)) * 8
    if len(payload) != expected:
        raise SnapshotTruncatedError(f"{path}: payload has {len(payload)} bytes, header dims {dims} need {expected}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
    return Snapshot(values, spacing, step, time)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return path

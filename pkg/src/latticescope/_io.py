"""File formats shared by all modules: atomic writes, CSV, 16-bit PGM, sidecars."""
from __future__ import annotations

import csv
import hashlib
import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PGM_MAX = 65535


def atomic_write_bytes(path, data: bytes) -> Path:
    """Write ``data`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def format_number(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else format_number(v) for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    return atomic_write_text(path, csv_text(header, rows))


def read_csv(path, expected_header: Sequence[str] | None = None) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV with a mandatory header row."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty CSV file") from None
        if expected_header is not None and header != list(expected_header):
            raise ValueError(f"{path}: expected header {','.join(expected_header)}, got {','.join(header)}")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return header, data


def encode_pgm(values: np.ndarray, binary: bool = True) -> bytes:
    """Encode a 2D array of integers in ``[0, 65535]`` as a 16-bit PGM.

    The array is stored row-major with ``values[row, col]``.
    """
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("PGM data must be two-dimensional")
    if values.min() < 0 or values.max() > PGM_MAX:
        raise ValueError("PGM samples must lie in [0, 65535]")
    rows, cols = values.shape
    header = f"{'P5' if binary else 'P2'}\n{cols} {rows}\n{PGM_MAX}\n".encode("ascii")
    if binary:
        return header + values.astype(">u2").tobytes()
    lines = [" ".join(str(int(v)) for v in row) for row in values]
    return header + ("\n".join(lines) + "\n").encode("ascii")


def decode_pgm(data: bytes) -> np.ndarray:
    """Inverse of :func:`encode_pgm` (comments are not supported)."""
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ValueError("not a P2/P5 PGM file")
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    cols, rows, maxval = tokens
    pos += 1
    if magic == b"P5":
        dtype = ">u2" if maxval > 255 else "u1"
        arr = np.frombuffer(data[pos:], dtype=dtype, count=rows * cols)
    else:
        arr = np.array(data[pos:].split(), dtype=int)[: rows * cols]
    return arr.reshape(rows, cols).astype(np.int64)


def write_pgm(path, values: np.ndarray, binary: bool = True) -> Path:
    return atomic_write_bytes(path, encode_pgm(values, binary=binary))


def read_pgm(path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_suffix(path.suffix + ".txt")


def write_sidecar(path, fields: dict) -> Path:
    lines = [f"{k} = {format_number(v) if not isinstance(v, str) else v}" for k, v in fields.items()]
    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_sidecar(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()

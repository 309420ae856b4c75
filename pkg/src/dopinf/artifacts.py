"""On-disk artifacts of a training run.

Matrices are stored as ``BLOB1`` files: one ASCII header line
``BLOB1 <rows> <cols>\\n`` followed by ``rows * cols`` little-endian float64
values in row-major order. Scalars go to a ``key=value`` text file.
"""

import os

import numpy as np

from .errors import FormatError

__all__ = ["save_blob", "load_blob", "write_record", "read_record",
           "save_vector", "load_vector"]

_BLOB_MAGIC = "BLOB1"


def save_blob(path, array):
    a = np.asarray(array, dtype="<f8")
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError("blobs hold 1-D or 2-D arrays")
    with open(path, "wb") as f:
        f.write(f"{_BLOB_MAGIC} {a.shape[0]} {a.shape[1]}\n".encode("ascii"))
        f.write(np.ascontiguousarray(a).tobytes())


def load_blob(path):
    with open(path, "rb") as f:
        header = f.readline().decode("ascii", errors="replace").split()
        if len(header) != 3 or header[0] != _BLOB_MAGIC:
            raise FormatError(f"{path}: not a {_BLOB_MAGIC} file")
        rows, cols = int(header[1]), int(header[2])
        data = np.frombuffer(f.read(), dtype="<f8")
    if data.size != rows * cols:
        raise FormatError(f"{path}: expected {rows * cols} values, found {data.size}")
    return data.reshape(rows, cols).astype(np.float64)


def save_vector(path, values):
    """Headerless little-endian float64 vector (probe outputs)."""
    np.asarray(values, dtype="<f8").tofile(path)


def load_vector(path):
    return np.fromfile(path, dtype="<f8").astype(np.float64)


def write_record(path, record):
    with open(path, "w", encoding="utf-8") as f:
        for key, value in record.items():
            if isinstance(value, float):
                value = repr(value)
            f.write(f"{key}={value}\n")


def read_record(path):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    record = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line and "=" in line:
                key, value = line.split("=", 1)
                record[key] = value
    return record

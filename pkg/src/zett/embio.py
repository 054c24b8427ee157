"""Binary artifact formats.

Embedding matrix (magic ZETTEMB1): header then data,

    "ZETTEMB1" | u32 LE rows | u32 LE dim | u8 role | f32 LE row-major

with role 0 = input, 1 = output, 2 = tied.

Parameter checkpoint (magic ZETTCKPT): a named-tensor container,

    "ZETTCKPT" | u32 LE count | count * entry
    entry = u32 LE name_len | name UTF-8 | u32 rows | u32 cols | u8 flag | f32 data

i.e. each tensor uses the ZETTEMB1 numeric layout; flag values 0/1/2 as
above plus 3 = 1-D vector (stored rows=1, cols=n) and 4 = generic
matrix. Values are 32-bit on disk: loading returns float64 arrays whose
values are exactly the stored f32s, so save-then-load is idempotent.
"""

import struct

import numpy as np

from .errors import DataError

EMB_MAGIC = b"ZETTEMB1"
CKPT_MAGIC = b"ZETTCKPT"

ROLE_INPUT, ROLE_OUTPUT, ROLE_TIED, FLAG_VECTOR, FLAG_MATRIX = 0, 1, 2, 3, 4


def _write_tensor(f, arr: np.ndarray, flag: int):
    arr = np.asarray(arr)
    if arr.ndim == 1:
        rows, cols = 1, arr.shape[0]
    elif arr.ndim == 2:
        rows, cols = arr.shape
    else:
        raise DataError(f"only 1-D/2-D tensors serializable, got {arr.shape}")
    f.write(struct.pack("<IIB", rows, cols, flag))
    f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_tensor(f):
    rows, cols, flag = struct.unpack("<IIB", f.read(9))
    data = np.frombuffer(f.read(4 * rows * cols), dtype="<f4").astype(np.float64)
    if flag == FLAG_VECTOR:
        return data.reshape(cols), flag
    return data.reshape(rows, cols), flag


def save_embeddings(path, matrix, role: int) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise DataError(f"embedding matrix must be 2-D, got {matrix.shape}")
    if role not in (ROLE_INPUT, ROLE_OUTPUT, ROLE_TIED):
        raise DataError(f"bad role {role}")
    with open(path, "wb") as f:
        f.write(EMB_MAGIC)
        _write_tensor(f, matrix, role)


def load_embeddings(path) -> tuple[np.ndarray, int]:
    with open(path, "rb") as f:
        if f.read(8) != EMB_MAGIC:
            raise DataError(f"{path}: not a ZETTEMB1 file")
        arr, role = _read_tensor(f)
    if arr.ndim != 2:
        raise DataError(f"{path}: embedding file holds a vector")
    return arr, role


def save_checkpoint(path, params: dict, flags: dict | None = None) -> None:
    """Write name->array tensors (arrays or nanograd Tensors)."""
    flags = flags or {}
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = params[name]
            arr = arr.data if hasattr(arr, "data") and not isinstance(arr, np.ndarray) else arr
            arr = np.asarray(arr)
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            flag = flags.get(name, FLAG_VECTOR if arr.ndim == 1 else FLAG_MATRIX)
            _write_tensor(f, arr, flag)


def load_checkpoint(path) -> dict:
    out = {}
    with open(path, "rb") as f:
        if f.read(8) != CKPT_MAGIC:
            raise DataError(f"{path}: not a ZETTCKPT file")
        (count,) = struct.unpack("<I", f.read(4))
        for _ in range(count):
            (nlen,) = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode("utf-8")
            arr, _ = _read_tensor(f)
            out[name] = arr
    return out

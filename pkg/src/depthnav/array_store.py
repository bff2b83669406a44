"""NPY / NPZ reader and writer for little-endian float depth arrays.

Writes NPY format version 1.0; reads 1.0 and 2.0. NPZ archives are written
with stored (uncompressed) members and fixed timestamps so identical records
always produce identical bytes. Reading goes through :mod:`zipfile`, so
deflated archives from other tools load as well.
"""

from __future__ import annotations

import ast
import io
import math
import struct
import zipfile
from dataclasses import dataclass

import numpy as np

from depthnav.errors import (
    ArrayStoreError,
    BadMagicError,
    DuplicateEntryError,
    EntryError,
    FortranOrderUnsupportedError,
    HeaderTooLongError,
    MissingEntryError,
    NotAZipError,
    TruncatedPayloadError,
    UnsupportedDtypeError,
    UnsupportedShapeError,
)

MAGIC = b"\x93NUMPY"
ALIGN = 64
SUPPORTED_DTYPES = {"<f4": 4, "<f8": 8}
SUPPORTED_RANKS = (2, 3)
# DOS epoch: the smallest timestamp a ZIP header can carry.
ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class ArrayRecord:
    name: str
    dtype: str
    shape: tuple[int, ...]
    data: bytes

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        _check_dtype(self.dtype)
        _check_shape(self.shape)
        expected = SUPPORTED_DTYPES[self.dtype] * math.prod(self.shape)
        if len(self.data) != expected:
            raise ValueError(
                f"{self.name}: data has {len(self.data)} bytes, expected {expected}"
            )

    @classmethod
    def from_array(cls, name: str, array: np.ndarray) -> ArrayRecord:
        array = np.asarray(array)
        return cls(name, array.dtype.str, array.shape, np.ascontiguousarray(array).tobytes())

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=self.dtype).reshape(self.shape).copy()


def _check_dtype(dtype: str) -> None:
    if dtype not in SUPPORTED_DTYPES:
        raise UnsupportedDtypeError(
            f"dtype {dtype!r} not supported (only little-endian f4/f8)"
        )


def _check_shape(shape: tuple[int, ...]) -> None:
    if len(shape) not in SUPPORTED_RANKS:
        raise UnsupportedShapeError(f"rank {len(shape)} not supported, need 2 or 3")
    if any(d < 0 for d in shape):
        raise UnsupportedShapeError(f"negative dimension in {shape}")


def _header_text(record: ArrayRecord) -> str:
    shape = "(" + ", ".join(str(d) for d in record.shape) + ")"
    return f"{{'descr': '{record.dtype}', 'fortran_order': False, 'shape': {shape}, }}"


def write_npy(record: ArrayRecord) -> bytes:
    text = _header_text(record).encode("latin1")
    # magic(6) + version(2) + u16 length(2)
    preamble = len(MAGIC) + 2 + 2
    total = preamble + len(text) + 1
    padded = total + (-total % ALIGN)
    header_len = padded - preamble
    if header_len > 0xFFFF:
        raise HeaderTooLongError(f"header of {header_len} bytes exceeds v1.0 limit")
    header = text + b" " * (header_len - len(text) - 1) + b"\n"
    return MAGIC + b"\x01\x00" + struct.pack("<H", header_len) + header + record.data


def read_npy(data: bytes, name: str = "") -> ArrayRecord:
    data = bytes(data)
    if not data.startswith(MAGIC):
        raise BadMagicError(f"not an NPY stream (starts with {data[:6]!r})")
    if len(data) < 10:
        raise TruncatedPayloadError("stream ends inside the preamble")
    major, minor = data[6], data[7]
    if major == 1:
        (header_len,) = struct.unpack_from("<H", data, 8)
        start = 10
    elif major in (2, 3):
        if len(data) < 12:
            raise TruncatedPayloadError("stream ends inside the preamble")
        (header_len,) = struct.unpack_from("<I", data, 8)
        start = 12
    else:
        raise BadMagicError(f"unknown NPY version {major}.{minor}")
    end = start + header_len
    if len(data) < end:
        raise TruncatedPayloadError("stream ends inside the header")
    encoding = "utf8" if major == 3 else "latin1"
    try:
        header = ast.literal_eval(data[start:end].decode(encoding).strip())
    except (ValueError, SyntaxError) as exc:
        raise BadMagicError(f"unparseable NPY header: {exc}") from exc
    if not isinstance(header, dict) or not {"descr", "fortran_order", "shape"} <= header.keys():
        raise BadMagicError(f"NPY header missing required keys: {header!r}")
    descr = header["descr"]
    if not isinstance(descr, str):
        raise UnsupportedDtypeError(f"structured dtype {descr!r} not supported")
    _check_dtype(descr)
    if header["fortran_order"]:
        raise FortranOrderUnsupportedError("fortran_order=True arrays are not supported")
    shape = tuple(header["shape"])
    _check_shape(shape)
    nbytes = SUPPORTED_DTYPES[descr] * math.prod(shape)
    payload = data[end : end + nbytes]
    if len(payload) < nbytes:
        raise TruncatedPayloadError(f"payload has {len(payload)} bytes, expected {nbytes}")
    return ArrayRecord(name, descr, shape, payload)


def write_npz(records: list[ArrayRecord]) -> bytes:
    seen = set()
    for rec in records:
        if rec.name in seen:
            raise DuplicateEntryError(f"duplicate entry name {rec.name!r}")
        seen.add(rec.name)
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        for rec in records:
            info = zipfile.ZipInfo(rec.name + ".npy", date_time=ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_STORED
            info.create_system = 3
            info.external_attr = 0o644 << 16
            zf.writestr(info, write_npy(rec))
    return buf.getvalue()


def read_npz(data: bytes) -> list[ArrayRecord]:
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as exc:
        raise NotAZipError(str(exc)) from exc
    records = []
    with zf:
        for info in zf.infolist():
            entry = info.filename
            if info.is_dir():
                continue
            if not entry.endswith(".npy"):
                raise EntryError(entry, BadMagicError("member is not an .npy file"))
            try:
                records.append(read_npy(zf.read(info), name=entry[: -len(".npy")]))
            except (ArrayStoreError, ValueError, zipfile.BadZipFile) as exc:
                raise EntryError(entry, exc) from exc
    return records


def load_entry(path, entry: str = "depth") -> ArrayRecord:
    """Read one named entry from an NPZ file on disk."""
    with open(path, "rb") as fh:
        records = read_npz(fh.read())
    for rec in records:
        if rec.name == entry:
            return rec
    raise MissingEntryError(f"{path}: no entry {entry!r}")


def save_npz(path, records: list[ArrayRecord]) -> None:
    with open(path, "wb") as fh:
        fh.write(write_npz(records))

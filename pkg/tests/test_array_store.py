import io
import struct
import zipfile

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from depthnav import array_store
from depthnav.array_store import ArrayRecord, read_npy, read_npz, write_npy, write_npz
from depthnav.errors import (
    BadMagicError,
    DuplicateEntryError,
    EntryError,
    FortranOrderUnsupportedError,
    MissingEntryError,
    NotAZipError,
    TruncatedPayloadError,
    UnsupportedDtypeError,
    UnsupportedShapeError,
)

from conftest import GOLDEN


def _shapes():
    return st.one_of(
        st.tuples(st.integers(0, 64), st.integers(0, 64)),
        st.tuples(st.integers(0, 16), st.integers(0, 16), st.integers(0, 16)),
    ).filter(lambda s: np.prod(s) <= 4096)


arrays = st.sampled_from(["<f4", "<f8"]).flatmap(
    lambda dt: hnp.arrays(dt, _shapes(), elements=st.floats(width=32 if dt == "<f4" else 64))
)


def test_one_by_one_zero_layout():
    data = write_npy(ArrayRecord.from_array("x", np.zeros((1, 1), dtype="<f4")))
    assert len(data) == 128 + 4
    assert data[:8] == b"\x93NUMPY\x01\x00"
    (hlen,) = struct.unpack("<H", data[8:10])
    assert 10 + hlen == 128
    assert data[127:128] == b"\n"
    assert data[128:] == b"\x00" * 4
    header = data[10:128].decode("latin1")
    assert "'descr': '<f4'" in header and "'fortran_order': False" in header
    assert "'shape': (1, 1)" in header


def test_payload_length_for_default_field():
    data = write_npy(ArrayRecord.from_array("d", np.zeros((360, 640), dtype="<f4")))
    (hlen,) = struct.unpack("<H", data[8:10])
    assert len(data) - 10 - hlen == 921600


def test_numpy_reads_our_npy():
    arr = np.random.default_rng(0).standard_normal((3, 4, 5))
    back = np.load(io.BytesIO(write_npy(ArrayRecord.from_array("a", arr))))
    assert np.array_equal(back, arr)


@given(arrays)
def test_npy_roundtrip_is_byte_stable(arr):
    rec = ArrayRecord.from_array("r", arr)
    data = write_npy(rec)
    assert len(data) % 64 == len(rec.data) % 64
    back = read_npy(data, "r")
    assert back == rec
    assert write_npy(back) == data
    assert np.array_equal(np.load(io.BytesIO(data)), arr, equal_nan=True)


@given(st.lists(arrays, min_size=1, max_size=4))
def test_npz_roundtrip_preserves_order(arrs):
    recs = [ArrayRecord.from_array(f"e{i}", a) for i, a in enumerate(arrs)]
    data = write_npz(recs)
    assert read_npz(data) == recs
    assert write_npz(read_npz(data)) == data


def test_npz_member_naming_and_determinism():
    rec = ArrayRecord.from_array("depth", np.ones((9, 16), dtype="<f4"))
    data = write_npz([rec])
    with zipfile.ZipFile(io.BytesIO(data)) as zf:
        assert zf.namelist() == ["depth.npy"]
        info = zf.infolist()[0]
        assert info.compress_type == zipfile.ZIP_STORED
        assert info.date_time == (1980, 1, 1, 0, 0, 0)
    assert write_npz([rec]) == data
    assert np.array_equal(np.load(io.BytesIO(data))["depth"], np.ones((9, 16)))


def test_three_entries_in_order():
    recs = [ArrayRecord.from_array(n, np.full((2, 2), i, dtype="<f8")) for i, n in enumerate("cab")]
    assert [r.name for r in read_npz(write_npz(recs))] == ["c", "a", "b"]


def test_duplicate_entry():
    rec = ArrayRecord.from_array("a", np.zeros((1, 1)))
    with pytest.raises(DuplicateEntryError):
        write_npz([rec, rec])


def test_not_a_zip():
    with pytest.raises(NotAZipError):
        read_npz(b"definitely not a zip archive")


def test_non_npy_member_names_entry():
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr("depth.npy", write_npy(ArrayRecord.from_array("depth", np.zeros((2, 2)))))
        zf.writestr("notes.txt", "hello")
    with pytest.raises(EntryError) as info:
        read_npz(buf.getvalue())
    assert info.value.entry == "notes.txt"
    assert "notes.txt" in str(info.value)


def test_bad_member_payload_names_entry():
    good = write_npy(ArrayRecord.from_array("d", np.zeros((2, 2), dtype="<f4")))
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr("d.npy", good[:-3])
    with pytest.raises(EntryError) as info:
        read_npz(buf.getvalue())
    assert info.value.entry == "d.npy"
    assert isinstance(info.value.cause, TruncatedPayloadError)


def test_pk_magic_is_bad_magic():
    with pytest.raises(BadMagicError):
        read_npy(b"PK\x03\x04" + b"\x00" * 60)


def test_truncated_payload():
    data = write_npy(ArrayRecord.from_array("t", np.zeros((2, 2), dtype="<f4")))
    with pytest.raises(TruncatedPayloadError):
        read_npy(data[:-8])


def _npy_with_header(header: str, payload: bytes = b"") -> bytes:
    text = header.encode("latin1")
    total = 10 + len(text) + 1
    pad = -total % 64
    body = text + b" " * pad + b"\n"
    return b"\x93NUMPY\x01\x00" + struct.pack("<H", len(body)) + body + payload


def test_header_key_order_and_whitespace_tolerated():
    payload = np.arange(6, dtype="<f8").tobytes()
    data = _npy_with_header("{ 'shape' : (2,3) , 'fortran_order':False,'descr':'<f8' }", payload)
    assert read_npy(data).to_array().tolist() == [[0, 1, 2], [3, 4, 5]]


@pytest.mark.parametrize("descr", ["<i4", ">f4", "<f2", "|u1"])
def test_unsupported_dtype(descr):
    with pytest.raises(UnsupportedDtypeError):
        read_npy(_npy_with_header(f"{{'descr': '{descr}', 'fortran_order': False, 'shape': (1, 1), }}", b"\0" * 8))


def test_fortran_order_rejected():
    with pytest.raises(FortranOrderUnsupportedError):
        read_npy(_npy_with_header("{'descr': '<f4', 'fortran_order': True, 'shape': (2, 2), }", b"\0" * 16))


def test_unsupported_rank():
    with pytest.raises(UnsupportedShapeError):
        ArrayRecord.from_array("v", np.zeros(4))


def test_missing_entry_on_disk(tmp_path):
    path = tmp_path / "a.npz"
    array_store.save_npz(path, [ArrayRecord.from_array("other", np.zeros((1, 1)))])
    with pytest.raises(MissingEntryError):
        array_store.load_entry(path, "depth")


# golden files written by numpy ----------------------------------------------

def test_golden_npy_f4():
    rec = read_npy((GOLDEN / "f4_2d.npy").read_bytes())
    assert rec.dtype == "<f4" and rec.shape == (3, 4)
    assert rec.to_array().tolist() == [[0, 0.5, 1, 1.5], [2, 2.5, 3, 3.5], [4, 4.5, 5, 5.5]]


def test_golden_npz_mixed():
    recs = {r.name: r for r in read_npz((GOLDEN / "mixed.npz").read_bytes())}
    assert set(recs) == {"depth", "volume"}
    assert recs["depth"].dtype == "<f4" and recs["depth"].shape == (2, 3)
    assert np.allclose(recs["depth"].to_array().ravel(), [0.25, 1.8, 3.35, 4.9, 6.45, 8.0])
    vol = recs["volume"]
    assert vol.dtype == "<f8" and vol.shape == (2, 3, 4)
    assert np.array_equal(vol.to_array(), np.arange(24).reshape(2, 3, 4) / 8.0)


def test_golden_npz_compressed():
    (rec,) = read_npz((GOLDEN / "compressed.npz").read_bytes())
    assert rec.name == "depth" and rec.shape == (5, 7)
    expect = np.random.default_rng(11).uniform(0.5, 20.0, (5, 7)).astype("<f4")
    assert np.array_equal(rec.to_array(), expect)


def test_golden_npy_version_2():
    data = (GOLDEN / "v2_f8.npy").read_bytes()
    assert data[6:8] == b"\x02\x00"
    rec = read_npy(data)
    assert np.array_equal(rec.to_array(), np.eye(3, 5) * 3.0)

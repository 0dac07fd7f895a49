from __future__ import annotations

import struct

import numpy as np
import pytest

from cellmetry.errors import CorruptFile, UnsupportedTiff
from cellmetry.tiff import read_tiff, write_tiff


def build_tiff(volume: np.ndarray, byte_order: str = "<", compression: int = 1) -> bytes:
    """Hand-rolled TIFF builder independent of the library writer."""
    bo = byte_order
    mark = b"II" if bo == "<" else b"MM"
    nz, ny, nx = volume.shape
    bits = volume.dtype.itemsize * 8
    page_bytes = nx * ny * volume.dtype.itemsize
    entries_per_ifd = 8
    ifd_size = 2 + entries_per_ifd * 12 + 4
    out = bytearray()
    out += mark + struct.pack(bo + "HI", 42, 8)
    pos = 8
    for z in range(nz):
        data_offset = pos + ifd_size
        next_ifd = data_offset + page_bytes if z + 1 < nz else 0
        entries = [
            (256, 4, 1, nx),
            (257, 4, 1, ny),
            (258, 3, 1, bits),
            (259, 3, 1, compression),
            (262, 3, 1, 1),
            (273, 4, 1, data_offset),
            (278, 4, 1, ny),
            (279, 4, 1, page_bytes),
        ]
        out += struct.pack(bo + "H", len(entries))
        for tag, ftype, count, value in entries:
            if ftype == 3:
                value_field = struct.pack(bo + "HH", value, 0)
                if bo == ">":
                    value_field = struct.pack(bo + "HH", value, 0)
            else:
                value_field = struct.pack(bo + "I", value)
            out += struct.pack(bo + "HHI", tag, ftype, count) + value_field
        out += struct.pack(bo + "I", next_ifd)
        out += np.ascontiguousarray(volume[z], dtype=volume.dtype.newbyteorder(bo)).tobytes()
        pos = data_offset + page_bytes
    return bytes(out)


@pytest.fixture
def volume_u8():
    rng = np.random.default_rng(1)
    return rng.integers(0, 256, size=(2, 4, 4)).astype(np.uint8)


def test_writer_reader_round_trip_u8(tmp_path, volume_u8):
    path = tmp_path / "v.tif"
    write_tiff(path, volume_u8)
    stack = read_tiff(path)
    assert len(stack.pages) == 2
    assert (stack.width, stack.height, stack.bits_per_sample) == (4, 4, 8)
    assert stack.endianness == "little"
    np.testing.assert_array_equal(stack.to_array(), volume_u8)


def test_big_endian_variant_same_voxels(tmp_path, volume_u8):
    le = tmp_path / "le.tif"
    be = tmp_path / "be.tif"
    le.write_bytes(build_tiff(volume_u8, "<"))
    be.write_bytes(build_tiff(volume_u8, ">"))
    a = read_tiff(le)
    b = read_tiff(be)
    assert a.endianness == "little" and b.endianness == "big"
    np.testing.assert_array_equal(a.to_array(), b.to_array())


def test_round_trip_u16_both_endians(tmp_path):
    rng = np.random.default_rng(2)
    volume = rng.integers(0, 65536, size=(3, 5, 7)).astype(np.uint16)
    path = tmp_path / "v.tif"
    write_tiff(path, volume)
    np.testing.assert_array_equal(read_tiff(path).to_array(), volume)
    be = tmp_path / "be.tif"
    be.write_bytes(build_tiff(volume, ">"))
    np.testing.assert_array_equal(read_tiff(be).to_array(), volume)


def test_lzw_compression_rejected(tmp_path, volume_u8):
    path = tmp_path / "lzw.tif"
    path.write_bytes(build_tiff(volume_u8, "<", compression=5))
    with pytest.raises(UnsupportedTiff, match="compression"):
        read_tiff(path)


def test_truncated_file_rejected(tmp_path, volume_u8):
    path = tmp_path / "trunc.tif"
    full = build_tiff(volume_u8, "<")
    path.write_bytes(full[: len(full) - 10])
    with pytest.raises(CorruptFile):
        read_tiff(path)


def test_not_a_tiff(tmp_path):
    path = tmp_path / "x.tif"
    path.write_bytes(b"PNG........")
    with pytest.raises(CorruptFile):
        read_tiff(path)


def test_unknown_tags_ignored(tmp_path, volume_u8):
    # append an ASCII Software tag; decoding must not trip over it
    bo = "<"
    nz, ny, nx = volume_u8.shape
    page_bytes = nx * ny
    entries = [
        (256, 4, 1, nx), (257, 4, 1, ny), (258, 3, 1, 8), (259, 3, 1, 1),
        (262, 3, 1, 1), (273, 4, 1, 0), (279, 4, 1, page_bytes),
        (305, 2, 4, int.from_bytes(b"abc\0", "little")),  # Software, inline ASCII
    ]
    ifd_size = 2 + len(entries) * 12 + 4
    data_offset = 8 + ifd_size
    out = bytearray(b"II" + struct.pack(bo + "HI", 42, 8))
    out += struct.pack(bo + "H", len(entries))
    for tag, ftype, count, value in entries:
        if tag == 273:
            value = data_offset
        if ftype == 3:
            field = struct.pack(bo + "HH", value, 0)
        else:
            field = struct.pack(bo + "I", value)
        out += struct.pack(bo + "HHI", tag, ftype, count) + field
    out += struct.pack(bo + "I", 0)
    out += volume_u8[0].tobytes()
    path = tmp_path / "tagged.tif"
    path.write_bytes(bytes(out))
    stack = read_tiff(path)
    np.testing.assert_array_equal(stack.pages[0], volume_u8[0])


def test_many_pages(tmp_path):
    volume = np.arange(10 * 3 * 2, dtype=np.uint8).reshape(10, 3, 2)
    path = tmp_path / "many.tif"
    write_tiff(path, volume)
    np.testing.assert_array_equal(read_tiff(path).to_array(), volume)

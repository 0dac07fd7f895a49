"""Minimal baseline TIFF reader and writer.

Supported subset: grayscale, 8 or 16 bit unsigned, strip-organized,
uncompressed, multi-page via the IFD chain, little- or big-endian.
Anything else raises :class:`UnsupportedTiff` naming the offending tag.
The writer emits little-endian files with one strip per page.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptFile, UnsupportedTiff

# tag ids
IMAGE_WIDTH = 256
IMAGE_LENGTH = 257
BITS_PER_SAMPLE = 258
COMPRESSION = 259
PHOTOMETRIC = 262
STRIP_OFFSETS = 273
SAMPLES_PER_PIXEL = 277
ROWS_PER_STRIP = 278
STRIP_BYTE_COUNTS = 279
SAMPLE_FORMAT = 339
TILE_WIDTH = 322
TILE_LENGTH = 323

_TYPE_SIZES = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 6: 1, 7: 1, 8: 2, 9: 4, 10: 8, 11: 4, 12: 8}
_TYPE_CODES = {1: "B", 3: "H", 4: "I", 6: "b", 8: "h", 9: "i", 11: "f", 12: "d"}


@dataclass
class TiffStack:
    """Decoded multi-page grayscale stack."""

    pages: list[np.ndarray]
    width: int
    height: int
    bits_per_sample: int
    endianness: str  # "little" | "big"

    def to_array(self) -> np.ndarray:
        """Stack pages into a (nz, ny, nx) array."""
        return np.stack(self.pages, axis=0)


def _read_values(data: bytes, bo: str, ftype: int, count: int, value_field: bytes):
    size = _TYPE_SIZES.get(ftype)
    if size is None or ftype not in _TYPE_CODES:
        raise UnsupportedTiff(f"unsupported TIFF field type {ftype}")
    total = size * count
    if total <= 4:
        raw = value_field[:total]
    else:
        (offset,) = struct.unpack(bo + "I", value_field)
        if offset + total > len(data):
            raise CorruptFile("TIFF value offset beyond end of file")
        raw = data[offset : offset + total]
    return struct.unpack(bo + _TYPE_CODES[ftype] * count, raw)


def read_tiff(path: str | Path) -> TiffStack:
    """Decode a baseline grayscale TIFF into a :class:`TiffStack`."""
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise CorruptFile(f"{path}: too short for a TIFF header")
    order = data[:2]
    if order == b"II":
        bo, endianness = "<", "little"
    elif order == b"MM":
        bo, endianness = ">", "big"
    else:
        raise CorruptFile(f"{path}: bad byte-order mark {order!r}")
    (magic,) = struct.unpack(bo + "H", data[2:4])
    if magic != 42:
        raise CorruptFile(f"{path}: bad TIFF magic {magic}")
    (ifd_offset,) = struct.unpack(bo + "I", data[4:8])

    pages: list[np.ndarray] = []
    width = height = bits = None
    seen_offsets = set()
    while ifd_offset:
        if ifd_offset in seen_offsets:
            raise CorruptFile(f"{path}: IFD chain loops")
        seen_offsets.add(ifd_offset)
        if ifd_offset + 2 > len(data):
            raise CorruptFile(f"{path}: IFD offset beyond end of file")
        (n_entries,) = struct.unpack(bo + "H", data[ifd_offset : ifd_offset + 2])
        end = ifd_offset + 2 + n_entries * 12
        if end + 4 > len(data):
            raise CorruptFile(f"{path}: truncated IFD")
        tags: dict[int, tuple] = {}
        needed = {
            IMAGE_WIDTH, IMAGE_LENGTH, BITS_PER_SAMPLE, COMPRESSION, PHOTOMETRIC,
            STRIP_OFFSETS, SAMPLES_PER_PIXEL, ROWS_PER_STRIP, STRIP_BYTE_COUNTS,
            SAMPLE_FORMAT,
        }
        for i in range(n_entries):
            off = ifd_offset + 2 + i * 12
            tag, ftype, count = struct.unpack(bo + "HHI", data[off : off + 8])
            if tag in (TILE_WIDTH, TILE_LENGTH):
                tags[tag] = ()  # presence alone marks a tiled file
            elif tag in needed:
                tags[tag] = _read_values(data, bo, ftype, count, data[off + 8 : off + 12])
            # all other tags are ignored
        (ifd_offset,) = struct.unpack(bo + "I", data[end : end + 4])

        pages.append(_decode_page(path, data, bo, tags))
        page = pages[-1]
        if width is None:
            height, width = page.shape
            bits = page.dtype.itemsize * 8
        elif page.shape != (height, width) or page.dtype.itemsize * 8 != bits:
            raise UnsupportedTiff(f"{path}: pages differ in size or bit depth")

    if not pages:
        raise CorruptFile(f"{path}: no pages (empty IFD chain)")
    return TiffStack(pages=pages, width=width, height=height,
                     bits_per_sample=bits, endianness=endianness)


def _decode_page(path, data: bytes, bo: str, tags: dict[int, tuple]) -> np.ndarray:
    def one(tag, default=None):
        if tag in tags:
            return tags[tag][0]
        if default is None:
            raise CorruptFile(f"{path}: missing required tag {tag}")
        return default

    if TILE_WIDTH in tags or TILE_LENGTH in tags:
        raise UnsupportedTiff(f"{path}: tiled layout (tag {TILE_WIDTH}) is not supported")
    compression = one(COMPRESSION, 1)
    if compression != 1:
        raise UnsupportedTiff(
            f"{path}: compression {compression} (tag {COMPRESSION}) is not supported"
        )
    spp = one(SAMPLES_PER_PIXEL, 1)
    if spp != 1:
        raise UnsupportedTiff(
            f"{path}: {spp} samples per pixel (tag {SAMPLES_PER_PIXEL}); only grayscale"
        )
    photometric = one(PHOTOMETRIC, 1)
    if photometric not in (0, 1):
        raise UnsupportedTiff(
            f"{path}: photometric {photometric} (tag {PHOTOMETRIC}); only grayscale"
        )
    sample_format = one(SAMPLE_FORMAT, 1)
    if sample_format != 1:
        raise UnsupportedTiff(
            f"{path}: sample format {sample_format} (tag {SAMPLE_FORMAT}); only unsigned"
        )
    bits = one(BITS_PER_SAMPLE, 1)
    if bits not in (8, 16):
        raise UnsupportedTiff(f"{path}: {bits} bits per sample; only 8 or 16")
    width = int(one(IMAGE_WIDTH))
    height = int(one(IMAGE_LENGTH))

    offsets = tags.get(STRIP_OFFSETS)
    counts = tags.get(STRIP_BYTE_COUNTS)
    if offsets is None or counts is None or len(offsets) != len(counts):
        raise CorruptFile(f"{path}: missing or inconsistent strip tags")
    raw = bytearray()
    for off, cnt in zip(offsets, counts):
        if off + cnt > len(data):
            raise CorruptFile(f"{path}: strip at {off} runs beyond end of file")
        raw += data[off : off + cnt]
    expected = width * height * (bits // 8)
    if len(raw) != expected:
        raise CorruptFile(
            f"{path}: strip data is {len(raw)} bytes, expected {expected}"
        )
    dtype = np.dtype(bo + ("u1" if bits == 8 else "u2"))
    page = np.frombuffer(bytes(raw), dtype=dtype).reshape(height, width)
    return page.astype(page.dtype.newbyteorder("="))


def write_tiff(path: str | Path, volume: np.ndarray) -> None:
    """Write a (nz, ny, nx) u8/u16 volume as a multi-page little-endian TIFF."""
    volume = np.asarray(volume)
    if volume.ndim == 2:
        volume = volume[None]
    if volume.ndim != 3:
        raise ValueError(f"expected a 2D or 3D array, got shape {volume.shape}")
    if volume.dtype == np.uint8:
        bits = 8
    elif volume.dtype == np.uint16:
        bits = 16
    else:
        raise ValueError(f"only u8/u16 volumes can be written, got {volume.dtype}")

    nz, ny, nx = volume.shape
    page_bytes = nx * ny * (bits // 8)
    entries = [
        (IMAGE_WIDTH, 4, 1, nx),
        (IMAGE_LENGTH, 4, 1, ny),
        (BITS_PER_SAMPLE, 3, 1, bits),
        (COMPRESSION, 3, 1, 1),
        (PHOTOMETRIC, 3, 1, 1),
        (STRIP_OFFSETS, 4, 1, 0),  # patched per page
        (SAMPLES_PER_PIXEL, 3, 1, 1),
        (ROWS_PER_STRIP, 4, 1, ny),
        (STRIP_BYTE_COUNTS, 4, 1, page_bytes),
        (SAMPLE_FORMAT, 3, 1, 1),
    ]
    ifd_size = 2 + len(entries) * 12 + 4
    out = bytearray()
    out += b"II" + struct.pack("<HI", 42, 8)
    pos = 8
    for z in range(nz):
        ifd_offset = pos
        data_offset = ifd_offset + ifd_size
        next_ifd = data_offset + page_bytes if z + 1 < nz else 0
        out += struct.pack("<H", len(entries))
        for tag, ftype, count, value in entries:
            if tag == STRIP_OFFSETS:
                value = data_offset
            if ftype == 3:
                packed = struct.pack("<HH", value, 0)
            else:
                packed = struct.pack("<I", value)
            out += struct.pack("<HHI", tag, ftype, count) + packed
        out += struct.pack("<I", next_ifd)
        out += np.ascontiguousarray(volume[z], dtype=volume.dtype.newbyteorder("<")).tobytes()
        pos = data_offset + page_bytes
    Path(path).write_bytes(bytes(out))

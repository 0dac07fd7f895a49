"""Chunked on-disk project container.

A project is a directory ``NAME.n5`` holding a root ``attributes.json``
(project metadata plus the dataset registry), one subdirectory per dataset
and the ``analysis/`` / ``export/`` output folders.  Dataset voxels are
stored as raw little-endian blocks named ``i_j_k`` (block indices along
x, y, z), x-fastest within a block.  All-zero blocks are never written;
absent block files read back as zeros.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    AlreadyExists,
    DimensionMismatch,
    DuplicateId,
    InvalidMeta,
    InvariantViolation,
    NoSuchDataset,
    OutOfRange,
)

log = logging.getLogger(__name__)

VERSION = "0.1.0"

DATASET_KINDS = (
    "raw",
    "mask",
    "labels",
    "boundary",
    "membrane",
    "filaments_labels",
    "distance_map",
)
BINARY_KINDS = frozenset({"mask", "boundary", "membrane"})
LABEL_KINDS = frozenset({"labels", "filaments_labels"})

DATA_TYPES = {
    "u8": np.dtype("<u1"),
    "u16": np.dtype("<u2"),
    "u32": np.dtype("<u4"),
    "f32": np.dtype("<f4"),
}

DEFAULT_BLOCK_SIZE = (64, 64, 64)

# names that can never be dataset ids because they are project subfolders
RESERVED_IDS = frozenset({"analysis", "export"})


def dtype_name(dtype: np.dtype) -> str:
    for name, dt in DATA_TYPES.items():
        if dt == dtype.newbyteorder("<"):
            return name
    raise InvalidMeta(f"unsupported data type {dtype}")


def _check_dataset_id(dataset_id: str) -> None:
    if not dataset_id or "/" in dataset_id or "\\" in dataset_id:
        raise InvalidMeta(f"invalid dataset id {dataset_id!r}")
    if dataset_id in RESERVED_IDS or dataset_id.startswith("."):
        raise InvalidMeta(f"dataset id {dataset_id!r} is reserved")


@dataclass(frozen=True)
class ProjectMeta:
    """Global project metadata stored in the root attributes.json."""

    name: str
    pixel_to_um: float
    version: str = VERSION

    def validate(self) -> None:
        if not self.name or "/" in self.name or "\\" in self.name:
            raise InvalidMeta(f"invalid project name {self.name!r}")
        if not (self.pixel_to_um > 0):
            raise InvalidMeta(f"pixel_to_um must be positive, got {self.pixel_to_um}")


@dataclass(frozen=True)
class DatasetMeta:
    """Per-dataset metadata stored in the dataset's attributes.json.

    ``dimensions`` and ``block_size`` are (nx, ny, nz); arrays are stored
    z-slowest, so the matching numpy shape is ``(nz, ny, nx)``.
    """

    id: str
    kind: str
    dimensions: tuple[int, int, int]
    block_size: tuple[int, int, int]
    data_type: str
    color: tuple[int, int, int, int] = (255, 255, 255, 255)
    source_dataset: str | None = None
    produced_at: str | None = None
    stale: bool = False

    def validate(self) -> None:
        _check_dataset_id(self.id)
        if self.kind not in DATASET_KINDS:
            raise InvalidMeta(f"unknown dataset kind {self.kind!r}")
        if self.data_type not in DATA_TYPES:
            raise InvalidMeta(f"unknown data type {self.data_type!r}")
        if len(self.dimensions) != 3 or any(int(d) <= 0 for d in self.dimensions):
            raise InvalidMeta(f"dimensions must be positive, got {self.dimensions}")
        if len(self.block_size) != 3 or any(int(b) <= 0 for b in self.block_size):
            raise InvalidMeta(f"block_size must be positive, got {self.block_size}")
        if len(self.color) != 4 or any(not (0 <= int(c) <= 255) for c in self.color):
            raise InvalidMeta(f"color must be 4 bytes RGBA, got {self.color}")
        if self.kind in BINARY_KINDS and self.data_type != "u8":
            raise InvalidMeta(f"{self.kind} datasets must be u8")
        if self.kind in LABEL_KINDS and self.data_type not in ("u8", "u16", "u32"):
            raise InvalidMeta(f"{self.kind} datasets must have an integer data type")
        if self.kind == "distance_map" and self.data_type != "f32":
            raise InvalidMeta("distance_map datasets must be f32")

    @property
    def dtype(self) -> np.dtype:
        return DATA_TYPES[self.data_type]

    @property
    def shape_zyx(self) -> tuple[int, int, int]:
        nx, ny, nz = self.dimensions
        return (nz, ny, nx)

    def block_grid(self) -> tuple[int, int, int]:
        """Number of blocks along (x, y, z)."""
        return tuple(-(-d // b) for d, b in zip(self.dimensions, self.block_size))

    def block_slices(self, index: tuple[int, int, int]) -> tuple[slice, slice, slice]:
        """zyx slices of block ``index`` (bi, bj, bk along x, y, z)."""
        bi, bj, bk = index
        grid = self.block_grid()
        if any(i < 0 or i >= g for i, g in zip((bi, bj, bk), grid)):
            raise OutOfRange(f"block index {index} outside block grid {grid}")
        nx, ny, nz = self.dimensions
        bx, by, bz = self.block_size
        return (
            slice(bk * bz, min((bk + 1) * bz, nz)),
            slice(bj * by, min((bj + 1) * by, ny)),
            slice(bi * bx, min((bi + 1) * bx, nx)),
        )

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "kind": self.kind,
            "dimensions": list(self.dimensions),
            "block_size": list(self.block_size),
            "data_type": self.data_type,
            "color": list(self.color),
        }
        if self.source_dataset is not None:
            out["source_dataset"] = self.source_dataset
        if self.produced_at is not None:
            out["produced_at"] = self.produced_at
        if self.kind == "distance_map":
            out["stale"] = self.stale
        return out

    @classmethod
    def from_json(cls, obj: dict) -> DatasetMeta:
        return cls(
            id=obj["id"],
            kind=obj["kind"],
            dimensions=tuple(obj["dimensions"]),
            block_size=tuple(obj["block_size"]),
            data_type=obj["data_type"],
            color=tuple(obj.get("color", (255, 255, 255, 255))),
            source_dataset=obj.get("source_dataset"),
            produced_at=obj.get("produced_at"),
            stale=bool(obj.get("stale", False)),
        )


def default_block_size(dimensions: tuple[int, int, int]) -> tuple[int, int, int]:
    return tuple(min(b, d) for b, d in zip(DEFAULT_BLOCK_SIZE, dimensions))


@dataclass
class VoxelGrid:
    """A dataset's metadata together with its dense voxel array (zyx)."""

    meta: DatasetMeta
    data: np.ndarray = field(repr=False)

    @classmethod
    def from_array(
        cls,
        dataset_id: str,
        kind: str,
        data: np.ndarray,
        color: tuple[int, int, int, int] = (255, 255, 255, 255),
        block_size: tuple[int, int, int] | None = None,
        **extra,
    ) -> VoxelGrid:
        data = np.asarray(data)
        if data.ndim != 3:
            raise InvalidMeta(f"expected a 3D array, got shape {data.shape}")
        nz, ny, nx = data.shape
        dims = (nx, ny, nz)
        meta = DatasetMeta(
            id=dataset_id,
            kind=kind,
            dimensions=dims,
            block_size=block_size or default_block_size(dims),
            data_type=dtype_name(data.dtype),
            color=tuple(color),
            **extra,
        )
        return cls(meta=meta, data=data)

    def validate(self) -> None:
        self.meta.validate()
        if self.data.shape != self.meta.shape_zyx:
            raise InvariantViolation(
                f"array shape {self.data.shape} does not match dimensions "
                f"{self.meta.dimensions} (expected zyx {self.meta.shape_zyx})"
            )
        if self.data.dtype.newbyteorder("<") != self.meta.dtype:
            raise InvariantViolation(
                f"array dtype {self.data.dtype} does not match {self.meta.data_type}"
            )
        if self.meta.kind in BINARY_KINDS:
            bad = np.setdiff1d(np.unique(self.data), [0, 1])
            if bad.size:
                raise InvariantViolation(
                    f"{self.meta.kind} dataset {self.meta.id!r} contains values "
                    f"{bad.tolist()[:8]}; only 0 and 1 are allowed"
                )
        if self.meta.kind == "distance_map" and self.data.size:
            if not np.all(np.isfinite(self.data)) or float(self.data.min()) < 0:
                raise InvariantViolation("distance maps must be finite and >= 0")


def _atomic_write_json(path: Path, obj: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


class Project:
    """Handle to an on-disk project directory."""

    def __init__(self, path: Path, meta: ProjectMeta, dimensions, datasets):
        self.path = Path(path)
        self.meta = meta
        self._dimensions = tuple(dimensions) if dimensions else None
        self._datasets: list[str] = list(datasets)

    # -- creation / opening -------------------------------------------------

    @classmethod
    def create(cls, parent_dir: str | Path, name: str, pixel_to_um: float) -> Project:
        meta = ProjectMeta(name=name, pixel_to_um=float(pixel_to_um))
        meta.validate()
        parent = Path(parent_dir)
        if not parent.is_dir():
            raise InvalidMeta(f"parent directory {parent} does not exist")
        path = parent / f"{name}.n5"
        if path.exists():
            raise AlreadyExists(f"project directory {path} already exists")
        path.mkdir()
        (path / "analysis").mkdir()
        (path / "export").mkdir()
        (path / "export" / "meshes").mkdir()
        project = cls(path, meta, None, [])
        project._write_root()
        log.info("created project %s", path)
        return project

    @classmethod
    def open(cls, path: str | Path) -> Project:
        path = Path(path)
        attrs_path = path / "attributes.json"
        if not attrs_path.is_file():
            raise InvalidMeta(f"{path} is not a project directory")
        attrs = json.loads(attrs_path.read_text(encoding="utf-8"))
        meta = ProjectMeta(
            name=attrs["name"],
            pixel_to_um=float(attrs["pixel_to_um"]),
            version=attrs.get("version", VERSION),
        )
        return cls(path, meta, attrs.get("dimensions"), attrs.get("datasets", []))

    def _write_root(self) -> None:
        _atomic_write_json(
            self.path / "attributes.json",
            {
                "name": self.meta.name,
                "pixel_to_um": self.meta.pixel_to_um,
                "version": self.meta.version,
                "dimensions": list(self._dimensions) if self._dimensions else None,
                "datasets": self._datasets,
            },
        )

    # -- paths ----------------------------------------------------------------

    @property
    def name(self) -> str:
        return self.meta.name

    @property
    def pixel_to_um(self) -> float:
        return self.meta.pixel_to_um

    @property
    def analysis_dir(self) -> Path:
        return self.path / "analysis"

    @property
    def export_dir(self) -> Path:
        return self.path / "export"

    @property
    def meshes_dir(self) -> Path:
        return self.path / "export" / "meshes"

    def dataset_dir(self, dataset_id: str) -> Path:
        return self.path / dataset_id

    @property
    def dimensions(self) -> tuple[int, int, int] | None:
        """(nx, ny, nz) shared by every dataset, or None before the first put."""
        return self._dimensions

    # -- registry ---------------------------------------------------------------

    def dataset_ids(self) -> list[str]:
        return list(self._datasets)

    def has_dataset(self, dataset_id: str) -> bool:
        return dataset_id in self._datasets

    def dataset_meta(self, dataset_id: str) -> DatasetMeta:
        if dataset_id not in self._datasets:
            raise NoSuchDataset(f"no dataset {dataset_id!r} in project {self.name}")
        attrs = json.loads(
            (self.dataset_dir(dataset_id) / "attributes.json").read_text(encoding="utf-8")
        )
        return DatasetMeta.from_json(attrs)

    def datasets_of_kind(self, *kinds: str) -> list[str]:
        return [d for d in self._datasets if self.dataset_meta(d).kind in kinds]

    # -- block IO -----------------------------------------------------------------

    def put_dataset(self, grid: VoxelGrid) -> str:
        """Write a dataset; returns its id.

        Blocks that contain only zeros are skipped, keeping all-zero grids
        at zero block files on disk.
        """
        grid.validate()
        meta = grid.meta
        if meta.id in self._datasets:
            raise DuplicateId(f"dataset {meta.id!r} already exists")
        if self._dimensions is not None and meta.dimensions != self._dimensions:
            raise DimensionMismatch(
                f"dataset {meta.id!r} has dimensions {meta.dimensions}, "
                f"project datasets are {self._dimensions}"
            )
        ddir = self.dataset_dir(meta.id)
        if ddir.exists():
            shutil.rmtree(ddir)  # leftovers from an interrupted write
        ddir.mkdir(parents=True)
        _atomic_write_json(ddir / "attributes.json", meta.to_json())
        data = np.ascontiguousarray(grid.data, dtype=meta.dtype)
        gx, gy, gz = meta.block_grid()
        for bk in range(gz):
            for bj in range(gy):
                for bi in range(gx):
                    block = data[meta.block_slices((bi, bj, bk))]
                    if not block.any():
                        continue
                    (ddir / f"{bi}_{bj}_{bk}").write_bytes(
                        np.ascontiguousarray(block).tobytes()
                    )
        self._datasets.append(meta.id)
        if self._dimensions is None:
            self._dimensions = meta.dimensions
        self._write_root()
        return meta.id

    def read_block(self, dataset_id: str, index: tuple[int, int, int]) -> np.ndarray:
        """One block as a zyx array; absent block files come back as zeros."""
        meta = self.dataset_meta(dataset_id)
        zs, ys, xs = meta.block_slices(index)
        shape = (zs.stop - zs.start, ys.stop - ys.start, xs.stop - xs.start)
        bi, bj, bk = index
        path = self.dataset_dir(dataset_id) / f"{bi}_{bj}_{bk}"
        if not path.is_file():
            return np.zeros(shape, dtype=meta.dtype)
        raw = path.read_bytes()
        expected = int(np.prod(shape)) * meta.dtype.itemsize
        if len(raw) != expected:
            raise InvariantViolation(
                f"block {path} has {len(raw)} bytes, expected {expected}"
            )
        return np.frombuffer(raw, dtype=meta.dtype).reshape(shape)

    def read_dataset(self, dataset_id: str) -> VoxelGrid:
        meta = self.dataset_meta(dataset_id)
        data = np.zeros(meta.shape_zyx, dtype=meta.dtype)
        gx, gy, gz = meta.block_grid()
        for bk in range(gz):
            for bj in range(gy):
                for bi in range(gx):
                    path = self.dataset_dir(dataset_id) / f"{bi}_{bj}_{bk}"
                    if path.is_file():
                        data[meta.block_slices((bi, bj, bk))] = self.read_block(
                            dataset_id, (bi, bj, bk)
                        )
        return VoxelGrid(meta=meta, data=data)

    def delete_dataset(self, dataset_id: str) -> None:
        """Remove a dataset and mark distance maps computed from it as stale."""
        if dataset_id not in self._datasets:
            raise NoSuchDataset(f"no dataset {dataset_id!r} in project {self.name}")
        shutil.rmtree(self.dataset_dir(dataset_id), ignore_errors=True)
        self._datasets.remove(dataset_id)
        self._write_root()
        for other in self._datasets:
            meta = self.dataset_meta(other)
            if meta.kind == "distance_map" and meta.source_dataset == dataset_id:
                self.update_dataset_meta(other, stale=True)
                log.info("marked distance map %s stale (source %s deleted)", other, dataset_id)

    def update_dataset_meta(self, dataset_id: str, **changes) -> DatasetMeta:
        meta = replace(self.dataset_meta(dataset_id), **changes)
        meta.validate()
        _atomic_write_json(self.dataset_dir(dataset_id) / "attributes.json", meta.to_json())
        return meta


def create_project(parent_dir: str | Path, name: str, pixel_to_um: float) -> Project:
    """Create an empty ``parent_dir/name.n5`` project directory."""
    return Project.create(parent_dir, name, pixel_to_um)

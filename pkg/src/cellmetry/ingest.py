"""Dataset ingestion: TIFF stacks to normalized, isotropically scaled grids.

Masks and labelmaps are resampled with nearest-neighbor lookup so voxel
values are never blended; raw intensity data uses trilinear interpolation.
Adding a boundary automatically derives the one-voxel ``membrane`` shell.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import numpy as np

from .errors import EmptyBoundary, InvalidMeta, NotBinary
from .store import Project, VoxelGrid, default_block_size
from .tiff import read_tiff

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScaleSpec:
    """Per-axis resampling factors (output voxels per input voxel)."""

    sx: float = 1.0
    sy: float = 1.0
    sz: float = 1.0

    def validate(self) -> None:
        if not (self.sx > 0 and self.sy > 0 and self.sz > 0):
            raise InvalidMeta(f"scale factors must be positive, got {self}")

    @property
    def is_identity(self) -> bool:
        return self.sx == 1.0 and self.sy == 1.0 and self.sz == 1.0

    @classmethod
    def from_pixel_sizes(
        cls, source_pixel_nm: tuple[float, float, float], target_um: float
    ) -> ScaleSpec:
        """Factors taking data at ``source_pixel_nm`` to isotropic ``target_um``.

        Computed in decimal so factors like 3.4 nm / 0.016 um come out as the
        exact float closest to their decimal quotient (0.2125).
        """
        if target_um <= 0:
            raise InvalidMeta(f"target pixel size must be positive, got {target_um}")
        target_nm = Decimal(str(target_um)) * 1000
        factors = [float(Decimal(str(s)) / target_nm) for s in source_pixel_nm]
        if any(f <= 0 for f in factors):
            raise InvalidMeta(f"source pixel sizes must be positive, got {source_pixel_nm}")
        return cls(*factors)


def normalize_mask(stack: np.ndarray) -> np.ndarray:
    """Map a {0,1}/{0,255} stack to u8 {0,1}; anything else raises NotBinary."""
    stack = np.asarray(stack)
    values = np.unique(stack)
    bad = np.setdiff1d(values, [0, 1, 255])
    if bad.size:
        raise NotBinary(
            f"mask contains values {bad.tolist()[:8]}; expected 0 background "
            "and 1 or 255 foreground"
        )
    return (stack != 0).astype(np.uint8)


def normalize_labels(stack: np.ndarray) -> np.ndarray:
    """Labelmap as u16, promoted to u32 when the largest label needs it."""
    stack = np.asarray(stack)
    if not np.issubdtype(stack.dtype, np.integer):
        raise NotBinary(f"labelmaps must be integer valued, got {stack.dtype}")
    max_label = int(stack.max()) if stack.size else 0
    dtype = np.uint32 if max_label > 65535 else np.uint16
    return stack.astype(dtype)


def _nn_indices(n_out: int, n_in: int, s: float) -> np.ndarray:
    idx = np.floor((np.arange(n_out) + 0.5) / s).astype(np.int64)
    return np.clip(idx, 0, n_in - 1)


def _scaled_dim(n_in: int, s: float) -> int:
    return max(1, int(n_in * s + 0.5))


def rescale(data: np.ndarray, spec: ScaleSpec, method: str = "nearest") -> np.ndarray:
    """Resample a (nz, ny, nx) array by ``spec``.

    ``nearest`` picks the input voxel containing each output voxel center and
    can never introduce values absent from the input; ``trilinear`` is for
    raw intensity data only.
    """
    spec.validate()
    if spec.is_identity:
        return data
    nz, ny, nx = data.shape
    out_shape = (_scaled_dim(nz, spec.sz), _scaled_dim(ny, spec.sy), _scaled_dim(nx, spec.sx))
    if method == "nearest":
        zi = _nn_indices(out_shape[0], nz, spec.sz)
        yi = _nn_indices(out_shape[1], ny, spec.sy)
        xi = _nn_indices(out_shape[2], nx, spec.sx)
        return data[np.ix_(zi, yi, xi)]
    if method == "trilinear":
        return _trilinear(data, out_shape, spec)
    raise ValueError(f"unknown resampling method {method!r}")


def _trilinear(data: np.ndarray, out_shape, spec: ScaleSpec) -> np.ndarray:
    coords = []
    for n_out, n_in, s in zip(out_shape, data.shape, (spec.sz, spec.sy, spec.sx)):
        c = (np.arange(n_out) + 0.5) / s - 0.5
        coords.append(np.clip(c, 0, n_in - 1))
    cz, cy, cx = np.meshgrid(*coords, indexing="ij")
    z0 = np.floor(cz).astype(np.int64)
    y0 = np.floor(cy).astype(np.int64)
    x0 = np.floor(cx).astype(np.int64)
    z1 = np.minimum(z0 + 1, data.shape[0] - 1)
    y1 = np.minimum(y0 + 1, data.shape[1] - 1)
    x1 = np.minimum(x0 + 1, data.shape[2] - 1)
    fz, fy, fx = cz - z0, cy - y0, cx - x0
    d = data.astype(np.float64)
    out = (
        d[z0, y0, x0] * (1 - fz) * (1 - fy) * (1 - fx)
        + d[z0, y0, x1] * (1 - fz) * (1 - fy) * fx
        + d[z0, y1, x0] * (1 - fz) * fy * (1 - fx)
        + d[z0, y1, x1] * (1 - fz) * fy * fx
        + d[z1, y0, x0] * fz * (1 - fy) * (1 - fx)
        + d[z1, y0, x1] * fz * (1 - fy) * fx
        + d[z1, y1, x0] * fz * fy * (1 - fx)
        + d[z1, y1, x1] * fz * fy * fx
    )
    if np.issubdtype(data.dtype, np.integer):
        out = np.rint(out)
    return out.astype(data.dtype)


def derive_membrane(boundary: np.ndarray) -> np.ndarray:
    """Outside shell of a filled boundary mask.

    A voxel belongs to the membrane when it is background and has at least
    one face-adjacent (6-connected) foreground neighbor; neighbors outside
    the grid are simply absent.
    """
    fg = np.asarray(boundary) != 0
    if not fg.any():
        raise EmptyBoundary("boundary mask has no foreground voxels")
    near = np.zeros_like(fg)
    for axis in range(3):
        for shift in (1, -1):
            near |= np.roll(fg, shift, axis=axis) & _roll_valid(fg.shape, axis, shift)
    membrane = near & ~fg
    if not membrane.any():
        log.warning("boundary fills the whole grid; membrane is empty")
    return membrane.astype(np.uint8)


def _roll_valid(shape, axis: int, shift: int) -> np.ndarray:
    """Mask that is False where np.roll wrapped around."""
    valid = np.ones(shape, dtype=bool)
    index = [slice(None)] * 3
    index[axis] = slice(0, 1) if shift == 1 else slice(-1, None)
    valid[tuple(index)] = False
    return valid


def add_component(
    project: Project,
    path: str | Path,
    kind: str,
    dataset_id: str,
    color: tuple[int, int, int, int] = (255, 255, 255, 255),
    scale: ScaleSpec | None = None,
) -> str:
    """Read, normalize, rescale and register one cell component.

    Boundary components additionally register the derived ``membrane``
    dataset.  Returns the new dataset id.
    """
    scale = scale or ScaleSpec()
    stack = read_tiff(path).to_array()
    if kind in ("mask", "boundary", "membrane"):
        data = rescale(normalize_mask(stack), scale)
    elif kind == "labels":
        data = rescale(normalize_labels(stack), scale)
    elif kind == "raw":
        data = rescale(stack, scale, method="trilinear")
    else:
        raise InvalidMeta(f"components of kind {kind!r} cannot be added from TIFF")
    grid = VoxelGrid.from_array(dataset_id, kind, data, color=color)
    project.put_dataset(grid)
    if kind == "boundary":
        membrane = derive_membrane(data)
        project.put_dataset(
            VoxelGrid.from_array(
                "membrane",
                "membrane",
                membrane,
                color=color,
                block_size=default_block_size((data.shape[2], data.shape[1], data.shape[0])),
            )
        )
        log.info("derived membrane from boundary %r", dataset_id)
    return dataset_id

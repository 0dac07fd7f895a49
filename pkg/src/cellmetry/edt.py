"""Exact 3D Euclidean distance transform.

Separable three-pass algorithm over squared distances: a two-sweep pass
along x, then lower-envelope-of-parabolas passes along y and z.  All
squared distances are integers and the envelope comparisons use
cross-multiplied integer arithmetic, so the result is exact; the square
root happens only once at the end when converting to micrometers.
"""

from __future__ import annotations

import numba
import numpy as np
from numba import njit, prange

from .errors import EmptyComponent, OutOfMemoryBudget

DEFAULT_MEMORY_BUDGET_BYTES = 4 * 1024**3

# peak working set per voxel: int64 squared map, f32 copy + f32 result, u8 source
_BYTES_PER_VOXEL = 8 + 4 + 4 + 1


def estimate_distance_map_bytes(dimensions: tuple[int, int, int]) -> int:
    """Peak bytes needed to compute one distance map of the given size."""
    nx, ny, nz = dimensions
    return int(nx) * int(ny) * int(nz) * _BYTES_PER_VOXEL


def check_memory_budget(dimensions: tuple[int, int, int], budget_bytes: int) -> None:
    needed = estimate_distance_map_bytes(dimensions)
    if needed > budget_bytes:
        raise OutOfMemoryBudget(
            f"distance map of {dimensions} needs ~{needed / 1024**2:.0f} MiB, "
            f"budget is {budget_bytes / 1024**2:.0f} MiB"
        )


def set_compute_threads(n: int | None) -> int:
    """Cap numba worker threads; returns the effective count."""
    limit = numba.config.NUMBA_NUM_THREADS
    effective = limit if n is None else max(1, min(int(n), limit))
    numba.set_num_threads(effective)
    return effective


@njit(cache=True, parallel=True)
def _pass_x(fg, d2, inf_linear):
    nz, ny, nx = fg.shape
    for line in prange(nz * ny):
        z = line // ny
        y = line % ny
        d = inf_linear
        for x in range(nx):
            if fg[z, y, x]:
                d = 0
            elif d < inf_linear:
                d += 1
            d2[z, y, x] = d
        d = inf_linear
        for x in range(nx - 1, -1, -1):
            if fg[z, y, x]:
                d = 0
            elif d < inf_linear:
                d += 1
            if d < d2[z, y, x]:
                d2[z, y, x] = d
        for x in range(nx):
            d2[z, y, x] = d2[z, y, x] * d2[z, y, x]


@njit(cache=True)
def _envelope_line(f, v, num, den, out):
    """One lower-envelope pass over a line of squared distances.

    Parabola intersections are kept as integer fractions num/den (den > 0);
    comparisons cross-multiply, keeping the pass exact.
    """
    n = f.shape[0]
    k = 0
    v[0] = 0
    num[0] = np.int64(-1)
    den[0] = np.int64(0)  # z[0] = -infinity
    for q in range(1, n):
        while True:
            vk = v[k]
            s_num = (f[q] + q * q) - (f[vk] + vk * vk)
            s_den = 2 * (q - vk)
            if k > 0 and s_num * den[k] <= num[k] * s_den:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        num[k] = s_num
        den[k] = s_den
    last = k
    k = 0
    for q in range(n):
        while k < last and num[k + 1] < q * den[k + 1]:
            k += 1
        dq = q - v[k]
        out[q] = dq * dq + f[v[k]]


@njit(cache=True, parallel=True)
def _pass_y(d2):
    nz, ny, nx = d2.shape
    for line in prange(nz * nx):
        z = line // nx
        x = line % nx
        f = np.empty(ny, dtype=np.int64)
        out = np.empty(ny, dtype=np.int64)
        v = np.empty(ny, dtype=np.int64)
        num = np.empty(ny + 1, dtype=np.int64)
        den = np.empty(ny + 1, dtype=np.int64)
        for y in range(ny):
            f[y] = d2[z, y, x]
        _envelope_line(f, v, num, den, out)
        for y in range(ny):
            d2[z, y, x] = out[y]


@njit(cache=True, parallel=True)
def _pass_z(d2):
    nz, ny, nx = d2.shape
    for line in prange(ny * nx):
        y = line // nx
        x = line % nx
        f = np.empty(nz, dtype=np.int64)
        out = np.empty(nz, dtype=np.int64)
        v = np.empty(nz, dtype=np.int64)
        num = np.empty(nz + 1, dtype=np.int64)
        den = np.empty(nz + 1, dtype=np.int64)
        for z in range(nz):
            f[z] = d2[z, y, x]
        _envelope_line(f, v, num, den, out)
        for z in range(nz):
            d2[z, y, x] = out[z]


def distance_transform_squared(foreground: np.ndarray) -> np.ndarray:
    """Exact squared voxel distance to the nearest foreground voxel (int64)."""
    fg = np.ascontiguousarray(foreground != 0)
    if not fg.any():
        raise EmptyComponent("distance transform needs at least one foreground voxel")
    nz, ny, nx = fg.shape
    inf_linear = np.int64(nx + ny + nz + 1)
    d2 = np.empty(fg.shape, dtype=np.int64)
    _pass_x(fg.view(np.uint8), d2, inf_linear)
    if ny > 1:
        _pass_y(d2)
    if nz > 1:
        _pass_z(d2)
    return d2


def distance_transform(foreground: np.ndarray, pixel_to_um: float) -> np.ndarray:
    """Distance map in micrometers (f32), exactly zero on the foreground."""
    d2 = distance_transform_squared(foreground)
    # squared distances are < 2**24 for any realistic volume, so the f32
    # conversion below is exact and the sqrt correctly rounded
    return np.sqrt(d2.astype(np.float32)) * np.float32(pixel_to_um)

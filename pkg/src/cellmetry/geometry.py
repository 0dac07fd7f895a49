"""Surface extraction and binary STL export.

Marching cubes over the 256-case table.  The table is generated at import
time from two fixed rules that make the output provably watertight:

* on an ambiguous face (two diagonal foreground corners) the foreground
  corners are always kept separate, so any two cells sharing a face agree
  on the contour through it;
* surface loops inside a cell are triangulated without diagonals whose two
  vertices lie on a common cell face, so no interior edge can coincide
  with a neighbor's contour segment.

Cell configurations come from the binary mask, which pins the topology
(single voxels and one-voxel sheets survive).  Vertex positions interpolate
the 0.5 level of a sign-clamped 3x3x3 occupancy mean between the two voxel
centers, which removes most of the staircase area bias of pure binary
midpoint placement.
"""

from __future__ import annotations

import json
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import EmptyComponent
from .store import Project

log = logging.getLogger(__name__)

# corner c of a cell -> offset (x, y, z)
_CORNER_OFF = [(c & 1, (c >> 1) & 1, (c >> 2) & 1) for c in range(8)]

# 12 cell edges as corner pairs, x edges then y edges then z edges
_EDGES = [
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
]
_EDGE_INDEX = {frozenset(e): i for i, e in enumerate(_EDGES)}
_EDGE_AXIS = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]


def _face_cycles() -> list[list[int]]:
    """Corner cycles of the six cell faces, CCW seen from outside the cell."""
    faces = []
    for axis in range(3):
        for side in (0, 1):
            corners = [c for c in range(8) if _CORNER_OFF[c][axis] == side]
            cyc = [corners[0]]
            rest = set(corners[1:])
            while rest:
                nxt = [c for c in rest if bin(c ^ cyc[-1]).count("1") == 1]
                cyc.append(nxt[0])
                rest.remove(nxt[0])
            normal = np.zeros(3)
            normal[axis] = 1 if side else -1
            p = [np.array(_CORNER_OFF[c], float) for c in cyc]
            if np.dot(np.cross(p[1] - p[0], p[2] - p[1]), normal) < 0:
                cyc = [cyc[0]] + cyc[1:][::-1]
            faces.append(cyc)
    return faces


_FACES = _face_cycles()

_EDGE_FACES = [set() for _ in range(12)]
for _fi, _cyc in enumerate(_FACES):
    for _i in range(4):
        _EDGE_FACES[_EDGE_INDEX[frozenset((_cyc[_i], _cyc[(_i + 1) % 4]))]].add(_fi)


@lru_cache(maxsize=None)
def _polygon_triangulations(n: int):
    """Every triangulation of a convex n-gon, as tuples of index triples."""

    def rec(idx):
        if len(idx) == 2:
            return [[]]
        if len(idx) == 3:
            return [[tuple(idx)]]
        out = []
        a, b = idx[0], idx[-1]
        for m in range(1, len(idx) - 1):
            for left in rec(idx[: m + 1]):
                for right in rec(idx[m:]):
                    out.append(left + right + [(a, idx[m], b)])
        return out

    return tuple(tuple(t) for t in rec(tuple(range(n))))


def _triangulate_loop(loop: list[int]) -> list[tuple[int, int, int]]:
    n = len(loop)
    if n == 3:
        return [tuple(loop)]
    for tris in _polygon_triangulations(n):
        ok = True
        for t in tris:
            for u, v in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                if abs(u - v) in (1, n - 1):
                    continue  # polygon boundary, not a diagonal
                if _EDGE_FACES[loop[u]] & _EDGE_FACES[loop[v]]:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return [(loop[a], loop[b], loop[c]) for a, b, c in tris]
    raise AssertionError(f"no face-free triangulation for loop {loop}")


def _build_case_table() -> list[list[tuple[int, int, int]]]:
    table = []
    for config in range(256):
        inside = [(config >> c) & 1 for c in range(8)]
        segment: dict[int, int] = {}
        for cyc in _FACES:
            bits = [inside[c] for c in cyc]
            if sum(bits) in (0, 4):
                continue
            # each maximal run of inside corners contributes one oriented
            # contour segment; diagonal pairs therefore stay separated
            for i in range(4):
                if bits[i] and not bits[i - 1]:
                    j = i
                    while bits[(j + 1) % 4]:
                        j = (j + 1) % 4
                    e_out = _EDGE_INDEX[frozenset((cyc[j], cyc[(j + 1) % 4]))]
                    e_in = _EDGE_INDEX[frozenset((cyc[(i - 1) % 4], cyc[i]))]
                    segment[e_out] = e_in
        tris: list[tuple[int, int, int]] = []
        seen: set[int] = set()
        for start in sorted(segment):
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            cur = segment[start]
            while cur != start:
                loop.append(cur)
                seen.add(cur)
                cur = segment[cur]
            loop.reverse()  # wind triangles outward (positive signed volume)
            tris.extend(_triangulate_loop(loop))
        table.append(tris)
    return table


_CASE_TABLE = _build_case_table()


@dataclass
class TriangleMesh:
    """Indexed triangle mesh; vertices in micrometers."""

    vertices: np.ndarray  # (n, 3) float64, x y z
    triangles: np.ndarray  # (m, 3) int64, outward winding

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def surface_area(self) -> float:
        v = self.vertices
        t = self.triangles
        cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        return float(np.linalg.norm(cross, axis=1).sum() / 2.0)

    def signed_volume(self) -> float:
        v = self.vertices
        t = self.triangles
        return float(
            np.einsum("ij,ij->i", v[t[:, 0]], np.cross(v[t[:, 1]], v[t[:, 2]])).sum() / 6.0
        )


def _occupancy(binary: np.ndarray) -> np.ndarray:
    """Sign-clamped 3x3x3 occupancy mean (strictly >0.5 inside, <0.5 outside)."""
    counts = binary.astype(np.int16)
    for axis in range(3):
        shifted_fwd = np.zeros_like(counts)
        shifted_back = np.zeros_like(counts)
        front = [slice(None)] * 3
        back = [slice(None)] * 3
        front[axis] = slice(1, None)
        back[axis] = slice(None, -1)
        shifted_fwd[tuple(back)] = counts[tuple(front)]
        shifted_back[tuple(front)] = counts[tuple(back)]
        counts = counts + shifted_fwd + shifted_back
    f = counts.astype(np.float64) / 27.0
    delta = 1.0 / 54.0
    inside = binary != 0
    f[inside] = np.maximum(f[inside], 0.5 + delta)
    f[~inside] = np.minimum(f[~inside], 0.5 - delta)
    return f


def marching_cubes(
    mask: np.ndarray, isolevel: float = 0.5, pixel_to_um: float = 1.0
) -> TriangleMesh:
    """Extract the surface of a binary mask as a closed triangle mesh.

    The grid is virtually zero-padded by one voxel so components touching
    the volume border still produce closed surfaces.  Voxel (0, 0, 0) is
    centered at the micrometer origin.
    """
    binary = np.ascontiguousarray(np.asarray(mask) != 0)
    if not binary.any():
        raise EmptyComponent("mask has no foreground voxels to mesh")
    if not (0.0 < isolevel < 1.0):
        raise ValueError(f"isolevel must be in (0, 1), got {isolevel}")
    b = np.pad(binary, 1).astype(np.uint8)
    f = _occupancy(b)
    nzp, nyp, nxp = b.shape

    config = np.zeros((nzp - 1, nyp - 1, nxp - 1), dtype=np.uint8)
    for c, (ox, oy, oz) in enumerate(_CORNER_OFF):
        config |= b[oz : oz + nzp - 1, oy : oy + nyp - 1, ox : ox + nxp - 1] << c
    active = np.argwhere((config != 0) & (config != 255))

    verts: list[tuple[float, float, float]] = []
    vert_id: dict[tuple[int, int, int, int], int] = {}
    tris: list[tuple[int, int, int]] = []
    for z, y, x in active:
        for tri in _CASE_TABLE[config[z, y, x]]:
            idx = []
            for e in tri:
                ca, cb = _EDGES[e]
                oa, ob = _CORNER_OFF[ca], _CORNER_OFF[cb]
                axis = _EDGE_AXIS[e]
                key = (x + min(oa[0], ob[0]), y + min(oa[1], ob[1]),
                       z + min(oa[2], ob[2]), axis)
                vid = vert_id.get(key)
                if vid is None:
                    fa = f[z + oa[2], y + oa[1], x + oa[0]]
                    fb = f[z + ob[2], y + ob[1], x + ob[0]]
                    t = (isolevel - fa) / (fb - fa)
                    pos = [float(x + oa[0]), float(y + oa[1]), float(z + oa[2])]
                    pos[axis] += t * (ob[axis] - oa[axis])
                    vid = len(verts)
                    vert_id[key] = vid
                    # shift out of the padded frame, scale to micrometers
                    verts.append(
                        ((pos[0] - 1) * pixel_to_um,
                         (pos[1] - 1) * pixel_to_um,
                         (pos[2] - 1) * pixel_to_um)
                    )
                idx.append(vid)
            tris.append(tuple(idx))
    return TriangleMesh(vertices=np.array(verts), triangles=np.array(tris))


# -- binary STL -------------------------------------------------------------------


def write_stl(path: str | Path, mesh: TriangleMesh, name: str = "mesh") -> None:
    """Binary little-endian STL: 80-byte header, u32 count, 50 bytes/triangle."""
    header = name.encode("ascii", "replace")[:80].ljust(80, b"\0")
    v32 = mesh.vertices.astype(np.float32)
    out = bytearray()
    out += header
    out += struct.pack("<I", mesh.n_triangles)
    for a, b, c in mesh.triangles:
        p0 = v32[a].astype(np.float64)
        p1 = v32[b].astype(np.float64)
        p2 = v32[c].astype(np.float64)
        n = np.cross(p1 - p0, p2 - p0)
        norm = np.linalg.norm(n)
        n = n / norm if norm > 0 else np.zeros(3)
        out += np.asarray(n, dtype="<f4").tobytes()
        out += v32[a].astype("<f4").tobytes()
        out += v32[b].astype("<f4").tobytes()
        out += v32[c].astype("<f4").tobytes()
        out += struct.pack("<H", 0)
    Path(path).write_bytes(bytes(out))


def read_stl(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Parse a binary STL; returns (normals (m,3), triangles (m,3,3)) as f32."""
    data = Path(path).read_bytes()
    (count,) = struct.unpack_from("<I", data, 80)
    # each record is 50 bytes: normal + 3 vertices as f32, then a u16 attribute
    rec = np.frombuffer(
        data, dtype=np.dtype([("v", "<f4", 12), ("attr", "<u2")]), count=count, offset=84
    )
    values = rec["v"].reshape(count, 4, 3)
    return values[:, 0, :].copy(), values[:, 1:, :].copy()


def mesh_from_stl(path: str | Path) -> TriangleMesh:
    """Rebuild an indexed mesh from an STL file (vertices deduplicated)."""
    _, tris = read_stl(path)
    flat = tris.reshape(-1, 3)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    return TriangleMesh(vertices=uniq.astype(np.float64), triangles=inverse.reshape(-1, 3))


# -- project-level export ------------------------------------------------------------


MESHABLE_KINDS = ("mask", "boundary", "membrane", "labels", "filaments_labels")


def _selected(dataset_id: str, include: list[str], exclude: list[str]) -> bool:
    if include and not any(pat in dataset_id for pat in include):
        return False
    if any(pat in dataset_id for pat in exclude):
        return False
    return True


def _split_csv(arg) -> list[str]:
    if not arg:
        return []
    if isinstance(arg, str):
        return [p for p in (s.strip() for s in arg.split(",")) if p]
    return list(arg)


def export_meshes(
    project: Project,
    include=None,
    exclude=None,
    split_labels: bool = False,
    threads: int | None = None,
) -> list[Path]:
    """Write one STL per selected component into ``export/meshes``.

    ``include``/``exclude`` are comma-separated substring filters on the
    component name.  Labelmaps produce a single merged mesh unless
    ``split_labels`` asks for one mesh per label.  A ``scene.json`` manifest
    with each mesh's RGBA color is written next to the STL files.
    """
    include = _split_csv(include)
    exclude = _split_csv(exclude)
    candidates = [
        d for d in project.dataset_ids()
        if project.dataset_meta(d).kind in MESHABLE_KINDS
        and _selected(d, include, exclude)
    ]
    if not candidates:
        log.warning("no components match include=%r exclude=%r; nothing exported",
                    include, exclude)
        return []

    project.meshes_dir.mkdir(parents=True, exist_ok=True)
    pixel = project.pixel_to_um

    def export_one(dataset_id: str) -> list[tuple[str, str, tuple[int, int, int, int]]]:
        meta = project.dataset_meta(dataset_id)
        grid = project.read_dataset(dataset_id)
        jobs: list[tuple[str, np.ndarray]] = []
        if split_labels and meta.kind in ("labels", "filaments_labels"):
            for label in np.unique(grid.data):
                if label == 0:
                    continue
                jobs.append((f"{dataset_id}_{int(label)}", grid.data == label))
        else:
            jobs.append((dataset_id, grid.data != 0))
        entries = []
        for stem, binary in jobs:
            if not binary.any():
                log.warning("component %r is empty; no mesh written", stem)
                continue
            mesh = marching_cubes(binary, pixel_to_um=pixel)
            stl_path = project.meshes_dir / f"{stem}.stl"
            write_stl(stl_path, mesh, name=stem)
            entries.append((stem, f"{stem}.stl", meta.color))
        return entries

    with ThreadPoolExecutor(max_workers=threads or None) as pool:
        results = list(pool.map(export_one, candidates))

    scene = []
    for entries in results:
        for stem, rel, color in entries:
            scene.append({"id": stem, "path": rel, "color": list(color)})
    scene.sort(key=lambda e: e["id"])
    (project.meshes_dir / "scene.json").write_text(
        json.dumps(scene, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return [project.meshes_dir / e["path"] for e in scene]

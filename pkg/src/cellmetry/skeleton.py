"""Skeleton annotations: XML things to ordered filaments.

Tracing tools export unordered line segments grouped into "things".  Each
thing is sorted into one or more ordered filaments: nearby loose ends are
merged first, then the graph is decomposed into maximal unbranched paths
(nodes of degree >= 3 split, cycles break at their lowest node id).  The
resulting point lists are stored as YAML inside the rasterized labelmap's
dataset directory.
"""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import DanglingEdge, InvalidMeta, MalformedXml
from .ingest import ScaleSpec
from .store import Project, VoxelGrid

log = logging.getLogger(__name__)

# microtubule outer diameter is 25 nm; default rasterization radius is half that
DEFAULT_RADIUS_UM = 0.0125

ENDPOINT_MERGE_TOL = 1.0  # annotation voxels


@dataclass
class Thing:
    """One annotation group: nodes (id -> position) plus undirected edges."""

    id: int
    nodes: dict[int, tuple[float, float, float]]
    edges: list[tuple[int, int]]


@dataclass
class SkeletonDocument:
    things: list[Thing] = field(default_factory=list)
    boundary_z: int | None = None


@dataclass
class Filament:
    """Ordered polyline in micrometers."""

    id: str
    points: np.ndarray  # (n, 3) float64, columns x, y, z

    def validate(self) -> None:
        if self.points.ndim != 2 or self.points.shape[1] != 3 or len(self.points) < 2:
            raise InvalidMeta(f"filament {self.id!r} needs at least 2 points")
        if (np.diff(self.points, axis=0) == 0).all(axis=1).any():
            raise InvalidMeta(f"filament {self.id!r} has repeated consecutive points")
        if filament_length(self) <= 0:
            raise InvalidMeta(f"filament {self.id!r} has zero length")


@dataclass(frozen=True)
class FilamentImportSpec:
    scale: ScaleSpec = ScaleSpec()
    z_offset: int | None = None  # annotation voxels; None = derive from the document
    radius_um: float = DEFAULT_RADIUS_UM

    def validate(self) -> None:
        self.scale.validate()
        if not (self.radius_um > 0):
            raise InvalidMeta(f"radius_um must be positive, got {self.radius_um}")


# -- parsing -------------------------------------------------------------------


def parse_skeleton_xml(path: str | Path) -> SkeletonDocument:
    """Parse the skeleton XML subset: things with nodes and edges.

    Unknown elements are ignored.  ``<parameters><boundary z=.../>``, when
    present, declares the z extent of the annotated volume.
    """
    try:
        root = ET.parse(str(path)).getroot()
    except ET.ParseError as exc:
        raise MalformedXml(f"{path}: {exc}") from exc

    boundary_z = None
    params = root.find("parameters")
    if params is not None:
        boundary = params.find("boundary")
        if boundary is not None and boundary.get("z") is not None:
            boundary_z = int(float(boundary.get("z")))

    things = []
    for thing_el in root.iter("thing"):
        thing_id = int(thing_el.get("id", len(things) + 1))
        nodes: dict[int, tuple[float, float, float]] = {}
        for node_el in thing_el.iter("node"):
            nid = int(node_el.get("id"))
            nodes[nid] = (
                float(node_el.get("x")),
                float(node_el.get("y")),
                float(node_el.get("z")),
            )
        edges = []
        seen = set()
        for edge_el in thing_el.iter("edge"):
            a = int(edge_el.get("source"))
            b = int(edge_el.get("target"))
            if a not in nodes or b not in nodes:
                raise DanglingEdge(
                    f"{path}: thing {thing_id} edge ({a}, {b}) references a missing node"
                )
            if a == b:
                continue  # self-loops carry no geometry
            key = (min(a, b), max(a, b))
            if key not in seen:
                seen.add(key)
                edges.append((a, b))
        things.append(Thing(id=thing_id, nodes=nodes, edges=edges))
    return SkeletonDocument(things=things, boundary_z=boundary_z)


def compute_z_offset(doc: SkeletonDocument, source_z_extent: int) -> int:
    """Slices skipped by the tracing tool, in annotation voxels.

    ``source_z_extent`` is the project's z extent expressed in annotation
    voxel units.  Without a declared extent in the document the offset is 0.
    """
    if doc.boundary_z is None:
        log.warning("skeleton document declares no z extent; using z offset 0")
        return 0
    return max(0, int(source_z_extent) - doc.boundary_z)


# -- reconstruction ---------------------------------------------------------------


def merge_close_endpoints(thing: Thing, tol: float = ENDPOINT_MERGE_TOL) -> Thing:
    """Union loose ends (degree-1 nodes) that sit within ``tol`` of each other."""
    degree: dict[int, int] = defaultdict(int)
    for a, b in thing.edges:
        degree[a] += 1
        degree[b] += 1
    ends = sorted(n for n, d in degree.items() if d == 1)
    parent = {n: n for n in thing.nodes}

    def find(n):
        while parent[n] != n:
            parent[n] = parent[parent[n]]
            n = parent[n]
        return n

    pos = {n: np.asarray(thing.nodes[n], dtype=float) for n in ends}
    for i, a in enumerate(ends):
        for b in ends[i + 1 :]:
            if np.linalg.norm(pos[a] - pos[b]) <= tol:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)

    if all(find(n) == n for n in thing.nodes):
        return thing
    nodes = {n: thing.nodes[n] for n in thing.nodes if find(n) == n}
    edges = []
    seen = set()
    for a, b in thing.edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            continue
        key = (min(ra, rb), max(ra, rb))
        if key not in seen:
            seen.add(key)
            edges.append((ra, rb))
    return Thing(id=thing.id, nodes=nodes, edges=edges)


def reconstruct_filaments(thing: Thing) -> list[list[int]]:
    """Decompose a thing's graph into maximal unbranched node-id paths.

    Output is independent of the order the edges were listed in: nodes of
    degree >= 3 split paths, isolated nodes are dropped, cycles are broken
    at their lowest node id, and each open path is oriented so its first
    node has the lexicographically smaller (x, y, z) position.
    """
    adj: dict[int, set[int]] = defaultdict(set)
    for a, b in thing.edges:
        if a != b:
            adj[a].add(b)
            adj[b].add(a)
    remaining = {(min(a, b), max(a, b)) for a, b in thing.edges if a != b}

    def walk(start: int, first: int) -> list[int]:
        path = [start]
        prev, cur = start, first
        remaining.discard((min(prev, cur), max(prev, cur)))
        while True:
            path.append(cur)
            if len(adj[cur]) != 2 or cur == start:
                break
            n1, n2 = sorted(adj[cur])
            nxt = n2 if n1 == prev else n1
            remaining.discard((min(cur, nxt), max(cur, nxt)))
            prev, cur = cur, nxt
        return path

    paths: list[list[int]] = []
    for terminal in sorted(n for n in adj if len(adj[n]) != 2):
        for neighbor in sorted(adj[terminal]):
            if (min(terminal, neighbor), max(terminal, neighbor)) in remaining:
                paths.append(walk(terminal, neighbor))
    while remaining:  # leftovers are pure cycles
        start = min(min(e) for e in remaining)
        neighbor = min(
            n for n in adj[start] if (min(start, n), max(start, n)) in remaining
        )
        paths.append(walk(start, neighbor))

    for path in paths:
        if path[0] == path[-1]:
            continue
        head = (*thing.nodes[path[0]], path[0])
        tail = (*thing.nodes[path[-1]], path[-1])
        if tail < head:
            path.reverse()
    paths.sort(key=tuple)
    return paths


# -- metrics --------------------------------------------------------------------


def filament_length(filament: Filament) -> float:
    """Arc length in micrometers."""
    return float(np.linalg.norm(np.diff(filament.points, axis=0), axis=1).sum())


def filament_tortuosity(filament: Filament) -> float | None:
    """Arc length over end-to-end chord; None for (near) closed loops."""
    chord = float(np.linalg.norm(filament.points[-1] - filament.points[0]))
    if chord < 1e-9:
        return None
    return filament_length(filament) / chord


# -- import ------------------------------------------------------------------


def _canonical_um(value: float) -> float:
    """Round to the 6-decimal grid used by the YAML serialization."""
    return float(f"{value:.6f}")


def import_filaments(
    project: Project,
    doc: SkeletonDocument,
    spec: FilamentImportSpec,
    name: str,
    color: tuple[int, int, int, int] = (255, 255, 255, 255),
) -> tuple[list[Filament], str]:
    """Transform, persist and rasterize a skeleton document.

    Node coordinates go through ``(x, y, z + offset) * scale * pixel_to_um``;
    the ordered point lists are written to ``<name>/filaments.yaml`` and a
    labelmap dataset ``name`` is registered where filament k (1-based along
    the import order) paints its polyline.
    """
    spec.validate()
    dims = project.dimensions
    if dims is None:
        raise InvalidMeta("project has no datasets yet; add cell components first")
    nx, ny, nz = dims
    if spec.z_offset is not None:
        z_offset = int(spec.z_offset)
    else:
        z_offset = compute_z_offset(doc, round(nz / spec.scale.sz))

    p_um = project.pixel_to_um
    sx, sy, sz = spec.scale.sx, spec.scale.sy, spec.scale.sz
    filaments: list[Filament] = []
    for thing in sorted(doc.things, key=lambda t: t.id):
        merged = merge_close_endpoints(thing)
        paths = reconstruct_filaments(merged)
        thing_filaments = []
        for path in paths:
            pts = []
            for node_id in path:
                x, y, z = merged.nodes[node_id]
                pts.append(
                    (
                        _canonical_um(x * sx * p_um),
                        _canonical_um(y * sy * p_um),
                        _canonical_um((z + z_offset) * sz * p_um),
                    )
                )
            deduped = [pts[0]]
            for pt in pts[1:]:
                if pt != deduped[-1]:
                    deduped.append(pt)
            if len(deduped) < 2:
                log.warning(
                    "thing %d: a path collapsed to fewer than 2 distinct points; skipped",
                    thing.id,
                )
                continue
            thing_filaments.append(np.asarray(deduped, dtype=np.float64))
        for k, pts in enumerate(thing_filaments, start=1):
            fid = str(thing.id) if len(thing_filaments) == 1 else f"{thing.id}.{k}"
            filament = Filament(id=fid, points=pts)
            filament.validate()
            filaments.append(filament)

    labels = rasterize_filaments(filaments, dims, p_um, spec.radius_um)
    grid = VoxelGrid.from_array(name, "filaments_labels", labels, color=color)
    project.put_dataset(grid)
    write_filaments_yaml(project.dataset_dir(name) / "filaments.yaml", filaments)
    log.info("imported %d filaments into %r (z offset %d)", len(filaments), name, z_offset)
    return filaments, name


def rasterize_filaments(
    filaments: list[Filament],
    dims: tuple[int, int, int],
    pixel_to_um: float,
    radius_um: float,
) -> np.ndarray:
    """Paint polylines into a labelmap, lowest filament ordinal winning.

    A voxel is painted when its center lies within ``radius_um`` of any
    segment; in addition the voxel containing each point of the densely
    sampled center line is always painted, so a filament is never lost to a
    sub-voxel radius.
    """
    nx, ny, nz = dims
    dtype = np.uint32 if len(filaments) > 65535 else np.uint16
    labels = np.zeros((nz, ny, nx), dtype=dtype)
    r_vox = radius_um / pixel_to_um
    for ordinal, filament in enumerate(filaments, start=1):
        pts = filament.points / pixel_to_um  # voxel-center coordinates
        for p, q in zip(pts[:-1], pts[1:]):
            _paint_segment(labels, p, q, r_vox, ordinal)
    return labels


def _paint_segment(labels: np.ndarray, p, q, r_vox: float, ordinal: int) -> None:
    nz, ny, nx = labels.shape
    lims = (nx, ny, nz)
    lo = [max(0, int(np.floor(min(p[a], q[a]) - r_vox))) for a in range(3)]
    hi = [min(lims[a] - 1, int(np.ceil(max(p[a], q[a]) + r_vox))) for a in range(3)]
    if all(lo[a] <= hi[a] for a in range(3)):
        xs = np.arange(lo[0], hi[0] + 1, dtype=np.float64)
        ys = np.arange(lo[1], hi[1] + 1, dtype=np.float64)
        zs = np.arange(lo[2], hi[2] + 1, dtype=np.float64)
        dx = xs[None, None, :] - p[0]
        dy = ys[None, :, None] - p[1]
        dz = zs[:, None, None] - p[2]
        v = q - p
        seg_len2 = float(v @ v)
        t = (dx * v[0] + dy * v[1] + dz * v[2]) / seg_len2
        np.clip(t, 0.0, 1.0, out=t)
        d2 = (dx - t * v[0]) ** 2 + (dy - t * v[1]) ** 2 + (dz - t * v[2]) ** 2
        sub = labels[lo[2] : hi[2] + 1, lo[1] : hi[1] + 1, lo[0] : hi[0] + 1]
        sub[(d2 <= r_vox * r_vox) & (sub == 0)] = ordinal
    # center-line coverage at quarter-voxel steps
    seg_len = float(np.linalg.norm(q - p))
    n = max(2, int(np.ceil(seg_len / 0.25)) + 1)
    ts = np.linspace(0.0, 1.0, n)
    samples = p[None, :] + ts[:, None] * (q - p)[None, :]
    vox = np.rint(samples).astype(np.int64)
    ok = (
        (vox[:, 0] >= 0) & (vox[:, 0] < nx)
        & (vox[:, 1] >= 0) & (vox[:, 1] < ny)
        & (vox[:, 2] >= 0) & (vox[:, 2] < nz)
    )
    vox = vox[ok]
    current = labels[vox[:, 2], vox[:, 1], vox[:, 0]]
    free = vox[current == 0]
    labels[free[:, 2], free[:, 1], free[:, 0]] = ordinal


# -- YAML persistence --------------------------------------------------------------


def write_filaments_yaml(path: str | Path, filaments: list[Filament]) -> None:
    if not filaments:
        Path(path).write_text("[]\n", encoding="utf-8")
        return
    lines = []
    for f in filaments:
        lines.append(f'- id: "{f.id}"')
        lines.append("  points:")
        for x, y, z in f.points:
            lines.append(f"  - [{x:.6f}, {y:.6f}, {z:.6f}]")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_filaments_yaml(path: str | Path) -> list[Filament]:
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    filaments = []
    for entry in raw or []:
        filaments.append(
            Filament(id=str(entry["id"]), points=np.asarray(entry["points"], dtype=np.float64))
        )
    return filaments


def load_filaments(project: Project, name: str) -> list[Filament]:
    """Read a filament set persisted by :func:`import_filaments`."""
    path = project.dataset_dir(name) / "filaments.yaml"
    if not path.is_file():
        raise InvalidMeta(f"dataset {name!r} has no filaments.yaml")
    return read_filaments_yaml(path)

"""Shared fixtures: a small synthetic cell with every component kind."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from cellmetry import create_project, import_filaments
from cellmetry.ingest import ScaleSpec, add_component
from cellmetry.skeleton import FilamentImportSpec, parse_skeleton_xml
from cellmetry.tiff import write_tiff

SIZE = 64
PIXEL_TO_UM = 0.016


def _ball(grid_shape, center, radius):
    nz, ny, nx = grid_shape
    zz, yy, xx = np.ogrid[0:nz, 0:ny, 0:nx]
    cx, cy, cz = center
    return (xx - cx) ** 2 + (yy - cy) ** 2 + (zz - cz) ** 2 <= radius * radius


def synthetic_volumes(size: int = SIZE, n_granules: int = 20, seed: int = 7):
    """Boundary ellipsoid, nucleus ball, granule labelmap (zyx u8/u16)."""
    shape = (size, size, size)
    zz, yy, xx = np.ogrid[0:size, 0:size, 0:size]
    c = size / 2.0 - 0.5
    ax, ay, az = 0.44 * size, 0.40 * size, 0.36 * size
    boundary = (
        ((xx - c) / ax) ** 2 + ((yy - c) / ay) ** 2 + ((zz - c) / az) ** 2
    ) <= 1.0
    nucleus = _ball(shape, (0.36 * size, 0.5 * size, 0.5 * size), 0.14 * size)
    nucleus &= boundary

    rng = np.random.default_rng(seed)
    granules = np.zeros(shape, dtype=np.uint16)
    admissible = boundary & ~nucleus
    label = 0
    attempts = 0
    while label < n_granules and attempts < 10_000:
        attempts += 1
        x, y, z = rng.integers(4, size - 4, size=3)
        r = int(rng.integers(2, 4))
        ball = _ball(shape, (x, y, z), r)
        if (ball & ~admissible).any() or (granules[ball] != 0).any():
            continue
        label += 1
        granules[ball] = label
    assert label == n_granules, "could not place all granules"
    return boundary.astype(np.uint8), nucleus.astype(np.uint8), granules


def synthetic_skeleton_xml(path: Path, size: int = SIZE, n_filaments: int = 10,
                           seed: int = 11) -> Path:
    """Random-walk polylines as a things/nodes/edges XML document."""
    rng = np.random.default_rng(seed)
    lines = ["<things>", f'  <parameters><boundary x="{size}" y="{size}" z="{size}"/></parameters>']
    node_id = 0
    for thing in range(1, n_filaments + 1):
        n_nodes = int(rng.integers(4, 9))
        pos = rng.uniform(0.2 * size, 0.8 * size, size=3)
        nodes = []
        for _ in range(n_nodes):
            nodes.append((node_id, *pos))
            node_id += 1
            step = rng.normal(0, 2.5, size=3)
            pos = np.clip(pos + step, 1, size - 2)
        lines.append(f'  <thing id="{thing}">')
        lines.append("    <nodes>")
        for nid, x, y, z in nodes:
            lines.append(f'      <node id="{nid}" x="{x:.2f}" y="{y:.2f}" z="{z:.2f}"/>')
        lines.append("    </nodes>")
        lines.append("    <edges>")
        ids = [n[0] for n in nodes]
        pairs = list(zip(ids[:-1], ids[1:]))
        rng.shuffle(pairs)
        for a, b in pairs:
            lines.append(f'      <edge source="{a}" target="{b}"/>')
        lines.append("    </edges>")
        lines.append("  </thing>")
    lines.append("</things>")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_synthetic_inputs(directory: Path, size: int = SIZE) -> dict[str, Path]:
    directory.mkdir(parents=True, exist_ok=True)
    boundary, nucleus, granules = synthetic_volumes(size)
    paths = {
        "boundary": directory / "boundary.tif",
        "nucleus": directory / "nucleus.tif",
        "granules": directory / "granules.tif",
        "skeleton": directory / "skeleton.xml",
    }
    write_tiff(paths["boundary"], boundary)
    write_tiff(paths["nucleus"], nucleus)
    write_tiff(paths["granules"], granules)
    synthetic_skeleton_xml(paths["skeleton"], size)
    return paths


def build_synthetic_project(parent: Path, name: str = "cell", size: int = SIZE):
    """Full project via the library API: boundary+membrane, nucleus, granules,
    microtubule filaments."""
    inputs = write_synthetic_inputs(parent / "inputs", size)
    project = create_project(parent, name, PIXEL_TO_UM)
    add_component(project, inputs["boundary"], "boundary", "boundary",
                  color=(64, 64, 64, 255))
    add_component(project, inputs["nucleus"], "mask", "nucleus",
                  color=(80, 80, 200, 255))
    add_component(project, inputs["granules"], "labels", "granules",
                  color=(220, 120, 40, 255))
    doc = parse_skeleton_xml(inputs["skeleton"])
    import_filaments(project, doc, FilamentImportSpec(scale=ScaleSpec()), "microtubules")
    return project, inputs

"""Shared helper for the demo scripts: a small synthetic cell.

Builds TIFF stacks (ellipsoidal boundary, nucleus mask, 20 granule labels)
plus a skeleton XML with 10 traced filaments, and assembles them into a
project like a user would.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from cellmetry import (
    FilamentImportSpec,
    ScaleSpec,
    add_component,
    create_project,
    import_filaments,
    parse_skeleton_xml,
    write_tiff,
)

SIZE = 64
PIXEL_TO_UM = 0.016  # 16 nm isotropic voxels


def _ball(shape, center, radius):
    nz, ny, nx = shape
    zz, yy, xx = np.ogrid[0:nz, 0:ny, 0:nx]
    cx, cy, cz = center
    return (xx - cx) ** 2 + (yy - cy) ** 2 + (zz - cz) ** 2 <= radius * radius


def make_volumes(size=SIZE, n_granules=20, seed=7):
    shape = (size, size, size)
    zz, yy, xx = np.ogrid[0:size, 0:size, 0:size]
    c = size / 2.0 - 0.5
    boundary = (
        ((xx - c) / (0.44 * size)) ** 2
        + ((yy - c) / (0.40 * size)) ** 2
        + ((zz - c) / (0.36 * size)) ** 2
    ) <= 1.0
    nucleus = _ball(shape, (0.36 * size, 0.5 * size, 0.5 * size), 0.14 * size) & boundary

    rng = np.random.default_rng(seed)
    granules = np.zeros(shape, dtype=np.uint16)
    admissible = boundary & ~nucleus
    label = 0
    while label < n_granules:
        x, y, z = rng.integers(4, size - 4, size=3)
        ball = _ball(shape, (x, y, z), int(rng.integers(2, 4)))
        if (ball & ~admissible).any() or (granules[ball] != 0).any():
            continue
        label += 1
        granules[ball] = label
    return boundary.astype(np.uint8), nucleus.astype(np.uint8), granules


def make_skeleton_xml(path: Path, size=SIZE, n_filaments=10, seed=11):
    rng = np.random.default_rng(seed)
    lines = [
        "<things>",
        f'  <parameters><boundary x="{size}" y="{size}" z="{size}"/></parameters>',
    ]
    node_id = 0
    for thing in range(1, n_filaments + 1):
        pos = rng.uniform(0.2 * size, 0.8 * size, size=3)
        nodes = []
        for _ in range(int(rng.integers(4, 9))):
            nodes.append((node_id, *pos))
            node_id += 1
            pos = np.clip(pos + rng.normal(0, 2.5, size=3), 1, size - 2)
        lines.append(f'  <thing id="{thing}">')
        lines.append("    <nodes>")
        for nid, x, y, z in nodes:
            lines.append(f'      <node id="{nid}" x="{x:.2f}" y="{y:.2f}" z="{z:.2f}"/>')
        lines.append("    </nodes>\n    <edges>")
        ids = [n[0] for n in nodes]
        pairs = list(zip(ids[:-1], ids[1:]))
        rng.shuffle(pairs)  # tracing tools do not keep segments ordered
        for a, b in pairs:
            lines.append(f'      <edge source="{a}" target="{b}"/>')
        lines.append("    </edges>\n  </thing>")
    lines.append("</things>")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def build_project(workdir: Path, name="demo_cell"):
    """Write the input files and assemble the full project."""
    workdir = Path(workdir)
    inputs = workdir / "inputs"
    inputs.mkdir(parents=True, exist_ok=True)
    boundary, nucleus, granules = make_volumes()
    write_tiff(inputs / "boundary.tif", boundary)
    write_tiff(inputs / "nucleus.tif", nucleus)
    write_tiff(inputs / "granules.tif", granules)
    make_skeleton_xml(inputs / "skeleton.xml")

    project = create_project(workdir, name, PIXEL_TO_UM)
    add_component(project, inputs / "boundary.tif", "boundary", "boundary",
                  color=(64, 64, 64, 160))
    add_component(project, inputs / "nucleus.tif", "mask", "nucleus",
                  color=(70, 90, 200, 255))
    add_component(project, inputs / "granules.tif", "labels", "granules",
                  color=(220, 130, 40, 255))
    doc = parse_skeleton_xml(inputs / "skeleton.xml")
    import_filaments(project, doc, FilamentImportSpec(scale=ScaleSpec()), "microtubules")
    return project

"""
Building a project from segmentation data
=========================================

A project is a plain directory ``NAME.n5`` holding chunked voxel datasets.
This script creates one, ingests a boundary (which automatically derives
the one-voxel ``membrane`` shell), a nucleus mask, a granule labelmap and
traced microtubule filaments, then walks the resulting layout.
"""

import sys
import tempfile
from pathlib import Path

from _synthetic_cell import build_project

workdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="cellmetry_"))
print(f"working in {workdir}\n")

project = build_project(workdir)

# The boundary ingestion registered a derived "membrane" dataset alongside
# the components we added explicitly.
print("datasets in the project:")
for dataset_id in project.dataset_ids():
    meta = project.dataset_meta(dataset_id)
    print(f"  {dataset_id:14s} kind={meta.kind:16s} "
          f"dims={meta.dimensions} dtype={meta.data_type}")

# Voxel data lives in raw little-endian block files named i_j_k; all-zero
# blocks are simply absent.
granules_dir = project.dataset_dir("granules")
blocks = sorted(p.name for p in granules_dir.iterdir() if p.name != "attributes.json")
print(f"\ngranules block files: {blocks}")

# Filament point lists are kept as YAML next to their rasterized labelmap.
yaml_path = project.dataset_dir("microtubules") / "filaments.yaml"
print(f"\nfirst lines of {yaml_path.name}:")
print("\n".join(yaml_path.read_text().splitlines()[:6]))

# Reading a dataset back gives a dense numpy array in (z, y, x) order.
grid = project.read_dataset("granules")
print(f"\ngranules: {grid.data.max()} labels, "
      f"{(grid.data != 0).sum()} foreground voxels")

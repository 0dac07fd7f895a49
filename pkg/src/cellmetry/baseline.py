"""Random-placement null model for distance distributions.

Observed per-label distances are compared against distances sampled at
uniformly random voxel positions inside the cell boundary (minus any
excluded components).  The two empirical distributions are summarized by
the two-sample Kolmogorov-Smirnov statistic D and written to a CSV in the
analysis directory.  The null model randomizes points, not whole objects.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyRegion, InvalidMeta, NoAnalysis
from .spatial import (
    _merge_metadata,
    distance_map_id,
    fmt,
    label_target_distance,
    round6,
)
from .store import Project

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BaselineConfig:
    samples: int = 1  # random positions per observed label
    seed: int = 0
    exclude: tuple[str, ...] = ()

    def validate(self) -> None:
        if self.samples < 1:
            raise InvalidMeta(f"samples must be >= 1, got {self.samples}")


def random_positions(
    boundary: np.ndarray,
    exclude_masks: list[np.ndarray],
    n: int,
    seed: int,
) -> np.ndarray:
    """Draw n voxel positions uniformly (with replacement) from the region
    inside ``boundary`` and outside every exclusion mask.

    Returns an (n, 3) int64 array of (x, y, z) in the generator's stream
    order.  Indices are resolved by a counted-stream lookup over z slabs in
    x-fastest scan order, so a fixed seed always yields the same list.
    """
    nz, ny, nx = boundary.shape

    def admissible_slab(z: int) -> np.ndarray:
        slab = boundary[z] != 0
        for mask in exclude_masks:
            slab &= mask[z] == 0
        return slab

    counts = np.array([int(admissible_slab(z).sum()) for z in range(nz)], dtype=np.int64)
    cumulative = np.concatenate([[0], np.cumsum(counts)])
    total = int(cumulative[-1])
    if total == 0:
        raise EmptyRegion("no admissible voxels inside the boundary after exclusions")

    rng = np.random.default_rng(seed)
    draws = rng.integers(0, total, size=n)
    order = np.argsort(draws, kind="stable")
    ranked = draws[order]

    out = np.empty((n, 3), dtype=np.int64)
    i = 0
    for z in range(nz):
        hi = cumulative[z + 1]
        j = i
        while j < n and ranked[j] < hi:
            j += 1
        if j > i:
            flat = np.flatnonzero(admissible_slab(z))
            local = flat[ranked[i:j] - cumulative[z]]
            ys, xs = np.divmod(local, nx)
            out[order[i:j], 0] = xs
            out[order[i:j], 1] = ys
            out[order[i:j], 2] = z
        i = j
        if i == n:
            break
    return out


def ks_statistic(sample_a, sample_b) -> float:
    """Two-sample Kolmogorov-Smirnov D: max gap between empirical CDFs."""
    a = np.sort(np.asarray(sample_a, dtype=np.float64))
    b = np.sort(np.asarray(sample_b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise InvalidMeta("KS statistic needs non-empty samples")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.abs(cdf_a - cdf_b).max())


def baseline_distances(
    project: Project,
    labelmap_id: str,
    target_id: str,
    config: BaselineConfig,
) -> Path:
    """Observed vs random distances of a labelmap to a target component.

    Writes ``analysis/<project>_<labelmap>_vs_<target>_baseline.csv`` with
    one ``kind,distance_um`` row per sample followed by ``ks_d`` and
    ``seed`` summary rows, and returns its path.
    """
    config.validate()
    map_id = distance_map_id(target_id)
    if not project.has_dataset(map_id):
        raise NoAnalysis(
            f"no distance map for {target_id!r}; run the spatial analysis first"
        )
    target_map = project.read_dataset(map_id).data
    labels = project.read_dataset(labelmap_id).data
    observed_by_label = label_target_distance(labels, target_map)
    if not observed_by_label:
        raise EmptyRegion(f"labelmap {labelmap_id!r} has no labels to compare")
    observed = [round6(observed_by_label[k]) for k in sorted(observed_by_label)]

    boundary_ids = project.datasets_of_kind("boundary")
    if not boundary_ids:
        raise EmptyRegion("project has no boundary dataset to sample inside")
    boundary = project.read_dataset(boundary_ids[0]).data
    exclude_masks = [project.read_dataset(d).data for d in config.exclude]

    n = config.samples * len(observed)
    positions = random_positions(boundary, exclude_masks, n, config.seed)
    random_values = [
        round6(float(target_map[z, y, x])) for x, y, z in positions
    ]

    d_stat = ks_statistic(observed, random_values)
    lines = ["kind,distance_um"]
    lines.extend(f"observed,{fmt(v)}" for v in observed)
    lines.extend(f"random,{fmt(v)}" for v in random_values)
    lines.append(f"ks_d,{fmt(d_stat)}")
    lines.append(f"seed,{config.seed}")
    path = project.analysis_dir / f"{project.name}_{labelmap_id}_vs_{target_id}_baseline.csv"
    project.analysis_dir.mkdir(exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _merge_metadata(project, {"null_model": "point"})
    log.info("baseline %s vs %s: D=%.6f over %d observed / %d random",
             labelmap_id, target_id, d_stat, len(observed), len(random_values))
    return path

"""Spatial analysis: distance maps, per-label and per-filament statistics.

For every cell component a distance map dataset ``<id>_distance_map`` is
computed (or reused when resuming).  Each labelmap then gets two CSVs in
``analysis/``: ``<project>_<labelmap>.csv`` with summary rows and
``<project>_<labelmap>_individual.csv`` with one row per label, listing the
minimum distance and connectivity to every other component.  Filament sets
get the analogous pair with length, tortuosity and end-distance columns.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .edt import (
    DEFAULT_MEMORY_BUDGET_BYTES,
    check_memory_budget,
    distance_transform,
    set_compute_threads,
)
from .errors import DimensionMismatch, InvalidMeta, NoSuchDataset
from .skeleton import Filament, filament_length, filament_tortuosity, load_filaments
from .store import Project, VoxelGrid

log = logging.getLogger(__name__)

MASK_KINDS = ("mask", "boundary", "membrane")
COMPONENT_KINDS = MASK_KINDS + ("labels", "filaments_labels")

DISTANCE_MAP_SUFFIX = "_distance_map"


@dataclass(frozen=True)
class AnalysisConfig:
    """Parameters of one analysis run.

    ``filament_end_threshold_um`` falls back to ``connected_threshold_um``
    when not given.  ``memory_budget_bytes`` caps the estimated working set
    of a single distance-map computation; exceeding it aborts the run with
    :class:`OutOfMemoryBudget` instead of thrashing.
    """

    connected_threshold_um: float
    filament_end_threshold_um: float | None = None
    skip_existing_distance_maps: bool = False
    memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET_BYTES

    def validate(self) -> None:
        if not (self.connected_threshold_um > 0):
            raise InvalidMeta("connected_threshold_um must be positive")
        if self.filament_end_threshold_um is not None and not (
            self.filament_end_threshold_um > 0
        ):
            raise InvalidMeta("filament_end_threshold_um must be positive")
        if self.memory_budget_bytes <= 0:
            raise InvalidMeta("memory_budget_bytes must be positive")

    @property
    def end_threshold_um(self) -> float:
        if self.filament_end_threshold_um is not None:
            return self.filament_end_threshold_um
        return self.connected_threshold_um


def memory_budget_from_env(default: int = DEFAULT_MEMORY_BUDGET_BYTES) -> int:
    """Budget in bytes, honoring the CELLMETRY_MEM_BUDGET_GB variable."""
    raw = os.environ.get("CELLMETRY_MEM_BUDGET_GB")
    if not raw:
        return default
    return int(float(raw) * 1024**3)


def distance_map_id(component: str) -> str:
    return component + DISTANCE_MAP_SUFFIX


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def round6(value: float) -> float:
    """Round to the 6-decimal grid every CSV number is reported on."""
    return float(f"{value:.6f}")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.6f}"


# -- per-label statistics ----------------------------------------------------------


def label_sizes(labels: np.ndarray) -> dict[int, int]:
    """Voxel count per nonzero label."""
    counts = np.bincount(labels.ravel())
    ids = np.flatnonzero(counts)
    return {int(i): int(counts[i]) for i in ids if i != 0}


def label_statistics(labels: np.ndarray, pixel_to_um: float) -> dict:
    """Mean, sample stdev (n-1, zero for a single label) and median size in um^3."""
    sizes = label_sizes(labels)
    voxel_um3 = pixel_to_um**3
    if not sizes:
        return {"count": 0, "sizes": {}}
    values = np.array(sorted(sizes.values()), dtype=np.float64) * voxel_um3
    stdev = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return {
        "count": len(values),
        "mean_size_um3": float(values.mean()),
        "stdev_size_um3": stdev,
        "median_size_um3": float(np.median(values)),
        "sizes": sizes,
    }


def label_target_distance(labels: np.ndarray, target_map: np.ndarray) -> dict[int, float]:
    """Minimum distance-map value over each label's voxels."""
    if labels.shape != target_map.shape:
        raise DimensionMismatch(
            f"labelmap shape {labels.shape} != distance map shape {target_map.shape}"
        )
    flat_labels = labels.ravel()
    idx = np.flatnonzero(flat_labels)
    if idx.size == 0:
        return {}
    lab = flat_labels[idx]
    val = target_map.ravel()[idx]
    order = np.argsort(lab, kind="stable")
    lab = lab[order]
    val = val[order]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(lab)) + 1])
    mins = np.minimum.reduceat(val, starts)
    return {int(l): float(m) for l, m in zip(lab[starts], mins)}


def _end_voxel(point_um, dims, pixel_to_um) -> tuple[int, int, int]:
    nx, ny, nz = dims
    vox = np.rint(np.asarray(point_um) / pixel_to_um).astype(np.int64)
    return (
        int(np.clip(vox[0], 0, nx - 1)),
        int(np.clip(vox[1], 0, ny - 1)),
        int(np.clip(vox[2], 0, nz - 1)),
    )


def filament_end_distances(
    filaments: list[Filament],
    target_map: np.ndarray,
    pixel_to_um: float,
) -> dict[str, tuple[float, float]]:
    """Distance-map values at the voxels containing each filament's two ends."""
    nz, ny, nx = target_map.shape
    out = {}
    for f in filaments:
        x1, y1, z1 = _end_voxel(f.points[0], (nx, ny, nz), pixel_to_um)
        x2, y2, z2 = _end_voxel(f.points[-1], (nx, ny, nz), pixel_to_um)
        out[f.id] = (float(target_map[z1, y1, x1]), float(target_map[z2, y2, x2]))
    return out


def _summary_stats(values: list[float]) -> dict[str, float | None]:
    if not values:
        return {"mean": None, "stdev": None, "median": None}
    arr = np.asarray(values, dtype=np.float64)
    return {
        "mean": float(arr.mean()),
        "stdev": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
        "median": float(np.median(arr)),
    }


def _filament_sort_key(fid: str):
    parts = fid.split(".")
    try:
        return (int(parts[0]), int(parts[1]) if len(parts) > 1 else 0)
    except ValueError:
        return (1 << 62, 0)


def filament_analysis(
    filaments: list[Filament],
    target_maps: dict[str, np.ndarray],
    pixel_to_um: float,
    end_threshold_um: float,
) -> list[dict]:
    """Per-filament records: length, tortuosity and per-target end distances.

    A filament counts as connected to a target when the nearer of its two
    end distances (rounded to the reporting grid) is within the threshold.
    """
    ordered = sorted(filaments, key=lambda f: _filament_sort_key(f.id))
    per_target = {
        t: filament_end_distances(ordered, m, pixel_to_um)
        for t, m in target_maps.items()
    }
    records = []
    for f in ordered:
        record = {
            "id": f.id,
            "length_um": filament_length(f),
            "tortuosity": filament_tortuosity(f),
            "targets": {},
        }
        for t in target_maps:
            end1, end2 = per_target[t][f.id]
            distance = round6(min(end1, end2))
            record["targets"][t] = {
                "end1_distance_um": end1,
                "end2_distance_um": end2,
                "distance_um": distance,
                "connected": distance <= end_threshold_um,
            }
        records.append(record)
    return records


# -- analysis run -------------------------------------------------------------------


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _merge_metadata(project: Project, entries: dict) -> None:
    path = project.analysis_dir / "metadata.json"
    meta = {}
    if path.is_file():
        meta = json.loads(path.read_text(encoding="utf-8"))
    meta.update(entries)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_analysis(
    project: Project,
    config: AnalysisConfig,
    threads: int | None = None,
    progress=None,
) -> list[Path]:
    """Compute distance maps and all analysis CSVs; returns the CSV paths.

    With ``skip_existing_distance_maps`` set, maps whose source dataset has
    not been deleted or replaced since they were computed (their ``stale``
    attribute is still false) are reused as-is.
    """
    config.validate()
    set_compute_threads(threads)

    def report(step: str, pct: float) -> None:
        if progress is not None:
            progress(step, pct)

    components = [
        d for d in project.dataset_ids()
        if project.dataset_meta(d).kind in COMPONENT_KINDS
    ]
    if not components:
        raise InvalidMeta("project has no cell components to analyze")

    # distance maps
    excluded: set[str] = set()
    for i, comp in enumerate(components):
        map_id = distance_map_id(comp)
        if project.has_dataset(map_id):
            meta = project.dataset_meta(map_id)
            if config.skip_existing_distance_maps and not meta.stale:
                log.info("reusing distance map %s", map_id)
                report(f"distance_map {comp}", 100.0 * (i + 1) / len(components))
                continue
            project.delete_dataset(map_id)
        source = project.read_dataset(comp)
        if not source.data.any():
            log.warning("component %r has no foreground; excluded from distance analysis", comp)
            excluded.add(comp)
            continue
        check_memory_budget(source.meta.dimensions, config.memory_budget_bytes)
        dist = distance_transform(source.data, project.pixel_to_um)
        project.put_dataset(
            VoxelGrid.from_array(
                map_id,
                "distance_map",
                dist,
                source_dataset=comp,
                produced_at=_now(),
            )
        )
        report(f"distance_map {comp}", 100.0 * (i + 1) / len(components))

    def has_map(comp: str) -> bool:
        return comp not in excluded and project.has_dataset(distance_map_id(comp))

    def read_map(comp: str) -> np.ndarray:
        return project.read_dataset(distance_map_id(comp)).data

    written: list[Path] = []
    analysis_dir = project.analysis_dir
    analysis_dir.mkdir(exist_ok=True)

    labelmaps = [c for c in components if project.dataset_meta(c).kind == "labels"]
    filament_sets = [
        c for c in components if project.dataset_meta(c).kind == "filaments_labels"
    ]

    for lm in labelmaps:
        targets = sorted(c for c in components if c != lm and has_map(c))
        grid = project.read_dataset(lm)
        stats = label_statistics(grid.data, project.pixel_to_um)
        per_target: dict[str, dict[int, float]] = {}
        for t in targets:
            per_target[t] = label_target_distance(grid.data, read_map(t))
        written.extend(
            _write_label_tables(project, lm, targets, stats, per_target, config)
        )
        report(f"tables {lm}", 100.0)

    for fs in filament_sets:
        targets = sorted(c for c in components if c != fs and has_map(c))
        filaments = load_filaments(project, fs)
        records = filament_analysis(
            filaments,
            {t: read_map(t) for t in targets},
            project.pixel_to_um,
            config.end_threshold_um,
        )
        written.extend(_write_filament_tables(project, fs, targets, records))
        report(f"tables {fs}", 100.0)

    _merge_metadata(project, {"filament_labelmap_targets": "symmetric"})
    return written


def _write_label_tables(
    project: Project,
    labelmap: str,
    targets: list[str],
    stats: dict,
    per_target: dict[str, dict[int, float]],
    config: AnalysisConfig,
) -> list[Path]:
    threshold = config.connected_threshold_um
    voxel_um3 = project.pixel_to_um**3
    sizes = stats.get("sizes", {})
    label_ids = sorted(sizes)

    header = ["label", "size_voxels", "size_um3"]
    for t in targets:
        header += [f"distance_to_{t}_um", f"connected_to_{t}"]
    rows = []
    connected_counts = {t: 0 for t in targets}
    for label in label_ids:
        row = [str(label), str(sizes[label]), fmt(sizes[label] * voxel_um3)]
        for t in targets:
            distance = round6(per_target[t][label])
            connected = distance <= threshold
            connected_counts[t] += int(connected)
            row += [fmt(distance), "1" if connected else "0"]
        rows.append(row)

    individual = project.analysis_dir / f"{project.name}_{labelmap}_individual.csv"
    _write_csv(individual, header, rows)

    summary_rows = [["count", str(stats["count"])]]
    for key in ("mean_size_um3", "stdev_size_um3", "median_size_um3"):
        summary_rows.append([key, fmt(stats.get(key))])
    for t in targets:
        summary_rows.append([f"connected_to_{t}", str(connected_counts[t])])
        summary_rows.append(
            [f"not_connected_to_{t}", str(len(label_ids) - connected_counts[t])]
        )
    summary = project.analysis_dir / f"{project.name}_{labelmap}.csv"
    _write_csv(summary, ["metric", "value"], summary_rows)
    return [summary, individual]


def _write_filament_tables(
    project: Project,
    filament_set: str,
    targets: list[str],
    records: list[dict],
) -> list[Path]:
    header = ["filament", "length_um", "tortuosity"]
    for t in targets:
        header += [f"distance_to_{t}_um", f"connected_to_{t}"]
    rows = []
    lengths: list[float] = []
    tortuosities: list[float] = []
    undefined = 0
    connected_counts = {t: 0 for t in targets}
    for record in records:
        lengths.append(record["length_um"])
        if record["tortuosity"] is None:
            undefined += 1
        else:
            tortuosities.append(record["tortuosity"])
        row = [record["id"], fmt(record["length_um"]), fmt(record["tortuosity"])]
        for t in targets:
            entry = record["targets"][t]
            connected_counts[t] += int(entry["connected"])
            row += [fmt(entry["distance_um"]), "1" if entry["connected"] else "0"]
        rows.append(row)

    individual = project.analysis_dir / f"{project.name}_{filament_set}_individual.csv"
    _write_csv(individual, header, rows)

    length_stats = _summary_stats(lengths)
    tort_stats = _summary_stats(tortuosities)
    summary_rows = [["count", str(len(records))]]
    for key in ("mean", "stdev", "median"):
        summary_rows.append([f"{key}_length_um", fmt(length_stats[key])])
    for key in ("mean", "stdev", "median"):
        summary_rows.append([f"{key}_tortuosity", fmt(tort_stats[key])])
    summary_rows.append(["undefined_tortuosity", str(undefined)])
    for t in targets:
        summary_rows.append([f"connected_to_{t}", str(connected_counts[t])])
        summary_rows.append(
            [f"not_connected_to_{t}", str(len(records) - connected_counts[t])]
        )
    summary = project.analysis_dir / f"{project.name}_{filament_set}.csv"
    _write_csv(summary, ["metric", "value"], summary_rows)
    return [summary, individual]


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Small strict reader for the analysis CSVs (no quoting, UTF-8)."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [l for l in text.split("\n") if l != ""]
    if not lines:
        raise NoSuchDataset(f"{path} is empty")
    header = lines[0].split(",")
    return header, [l.split(",") for l in lines[1:]]


def csv_column(path: str | Path, column: str) -> list[str]:
    from .errors import MissingColumn

    header, rows = read_csv(path)
    if column not in header:
        raise MissingColumn(
            f"{Path(path).name} has no column {column!r}; available: {', '.join(header)}"
        )
    i = header.index(column)
    return [row[i] for row in rows]

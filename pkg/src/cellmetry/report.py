"""Deterministic SVG plots and a machine-readable project summary.

Plots are emitted as self-contained SVG 1.1 documents with a fixed 800x600
viewBox; for fixed inputs the output bytes never change, so they can be
golden-tested.  ``summarize`` aggregates the analysis CSVs plus component
volumes and volume fractions into one JSON document.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidMeta, MissingColumn, NoAnalysis
from .spatial import COMPONENT_KINDS, csv_column, read_csv
from .store import Project

log = logging.getLogger(__name__)

WIDTH, HEIGHT = 800, 600
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70.0, 20.0, 40.0, 60.0
PLOT_W = WIDTH - MARGIN_L - MARGIN_R
PLOT_H = HEIGHT - MARGIN_T - MARGIN_B

OBSERVED_COLOR = "#4878a8"
RANDOM_COLOR = "#c05040"


@dataclass(frozen=True)
class HistogramSpec:
    bins: int = 32
    range: tuple[float, float] | None = None  # None = [0, max sample]

    def validate(self) -> None:
        if self.bins < 1:
            raise InvalidMeta(f"bins must be >= 1, got {self.bins}")
        if self.range is not None and not (self.range[1] > self.range[0]):
            raise InvalidMeta(f"range high must exceed low, got {self.range}")


def _x(fraction: float) -> float:
    return MARGIN_L + fraction * PLOT_W


def _y(fraction: float) -> float:
    return HEIGHT - MARGIN_B - fraction * PLOT_H


def _svg_open() -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]


def _axes(title: str, x_label: str, y_label: str,
          x_lo: float, x_hi: float, y_hi: float) -> list[str]:
    parts = [
        f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>',
        f'<line x1="{_x(0):.3f}" y1="{_y(0):.3f}" x2="{_x(1):.3f}" y2="{_y(0):.3f}" '
        'stroke="black" stroke-width="1"/>',
        f'<line x1="{_x(0):.3f}" y1="{_y(0):.3f}" x2="{_x(0):.3f}" y2="{_y(1):.3f}" '
        'stroke="black" stroke-width="1"/>',
        f'<text x="{_x(0.5):.3f}" y="{HEIGHT - 16}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{x_label}</text>',
        f'<text x="18" y="{_y(0.5):.3f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {_y(0.5):.3f})">{y_label}</text>',
        f'<text x="{_x(0):.3f}" y="{_y(0) + 18:.3f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">{x_lo:.3f}</text>',
        f'<text x="{_x(1):.3f}" y="{_y(0) + 18:.3f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">{x_hi:.3f}</text>',
        f'<text x="{_x(0) - 8:.3f}" y="{_y(0) + 4:.3f}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">0</text>',
        f'<text x="{_x(0) - 8:.3f}" y="{_y(1) + 4:.3f}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{y_hi:g}</text>',
    ]
    return parts


def plot_distance_histogram(
    individual_csv: str | Path,
    target: str,
    spec: HistogramSpec = HistogramSpec(),
) -> str:
    """Histogram SVG of the ``distance_to_<target>_um`` column.

    Undefined (empty) cells are skipped; the bin counts of the remaining
    rows always sum to the number of defined rows.
    """
    spec.validate()
    column = f"distance_to_{target}_um"
    raw = csv_column(individual_csv, column)
    values = [float(v) for v in raw if v != ""]
    if spec.range is not None:
        lo, hi = spec.range
    else:
        lo, hi = 0.0, (max(values) if values else 1.0)
        if hi <= lo:
            hi = lo + 1.0
    counts, edges = np.histogram(values, bins=spec.bins, range=(lo, hi))
    y_max = int(counts.max()) if counts.size and counts.max() > 0 else 1

    parts = _svg_open()
    parts += _axes(
        f"{Path(individual_csv).stem}: {column}",
        "distance (um)", "count", lo, hi, y_max,
    )
    for i, count in enumerate(counts):
        x0 = _x((edges[i] - lo) / (hi - lo))
        x1 = _x((edges[i + 1] - lo) / (hi - lo))
        top = _y(count / y_max)
        parts.append(
            f'<rect x="{x0:.3f}" y="{top:.3f}" width="{x1 - x0:.3f}" '
            f'height="{_y(0) - top:.3f}" fill="{OBSERVED_COLOR}" stroke="white" '
            f'stroke-width="0.5"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _cdf_path(values: list[float], lo: float, hi: float, color: str) -> str:
    span = hi - lo if hi > lo else 1.0
    ordered = sorted(values)
    n = len(ordered)
    commands = []
    for i, v in enumerate(ordered):
        cmd = "M" if i == 0 else "L"
        commands.append(
            f"{cmd} {_x((v - lo) / span):.3f} {_y((i + 1) / n):.3f}"
        )
    return (
        f'<path d="{" ".join(commands)}" fill="none" stroke="{color}" '
        'stroke-width="1.5"/>'
    )


def plot_observed_vs_random(
    baseline_csv: str | Path,
    spec: HistogramSpec = HistogramSpec(),
) -> str:
    """Overlaid empirical CDFs of the observed and random samples.

    Each sample contributes exactly one path node.  The KS D value from the
    CSV's summary rows is annotated in the corner.
    """
    spec.validate()
    header, rows = read_csv(baseline_csv)
    if header != ["kind", "distance_um"]:
        raise MissingColumn(
            f"{Path(baseline_csv).name}: expected columns kind,distance_um, "
            f"got {','.join(header)}"
        )
    observed, random_values = [], []
    ks_d = None
    for kind, value in rows:
        if kind == "observed":
            observed.append(float(value))
        elif kind == "random":
            random_values.append(float(value))
        elif kind == "ks_d":
            ks_d = float(value)
    if not observed or not random_values:
        raise MissingColumn(f"{Path(baseline_csv).name}: missing observed or random rows")
    if ks_d is None:
        ks_d = 0.0

    if spec.range is not None:
        lo, hi = spec.range
    else:
        lo, hi = 0.0, max(max(observed), max(random_values))
        if hi <= lo:
            hi = lo + 1.0
    parts = _svg_open()
    parts += _axes(
        f"{Path(baseline_csv).stem}", "distance (um)", "cumulative fraction",
        lo, hi, 1,
    )
    parts.append(_cdf_path(observed, lo, hi, OBSERVED_COLOR))
    parts.append(_cdf_path(random_values, lo, hi, RANDOM_COLOR))
    parts.append(
        f'<text x="{_x(1) - 8:.3f}" y="{_y(1) + 16:.3f}" text-anchor="end" '
        f'font-family="sans-serif" font-size="13">D = {ks_d:.6f}</text>'
    )
    parts.append(
        f'<text x="{_x(0) + 8:.3f}" y="{_y(1) + 16:.3f}" '
        f'font-family="sans-serif" font-size="12" fill="{OBSERVED_COLOR}">observed</text>'
    )
    parts.append(
        f'<text x="{_x(0) + 8:.3f}" y="{_y(1) + 32:.3f}" '
        f'font-family="sans-serif" font-size="12" fill="{RANDOM_COLOR}">random</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -- summary -------------------------------------------------------------------------


def _parse_summary_csv(path: Path) -> dict:
    _, rows = read_csv(path)
    out = {}
    for key, value in rows:
        if value == "":
            out[key] = None
        else:
            number = float(value)
            out[key] = int(number) if number == int(number) and "." not in value else number
    return out


def _connectivity(summary: dict) -> dict:
    connected = {}
    for key, value in summary.items():
        if key.startswith("connected_to_"):
            connected.setdefault(key[len("connected_to_"):], {})["connected"] = value
        elif key.startswith("not_connected_to_"):
            connected.setdefault(key[len("not_connected_to_"):], {})["not_connected"] = value
    return connected


def summarize(project: Project) -> dict:
    """Aggregate analysis outputs into one JSON-ready dictionary.

    Includes per-component volumes and volume fractions relative to the
    boundary, per-labelmap size statistics and connectivity counts, and
    per-filament-set length/tortuosity summaries.
    """
    analysis = project.analysis_dir
    if not analysis.is_dir() or not any(analysis.glob("*.csv")):
        raise NoAnalysis(f"{analysis} has no analysis results; run the analysis first")

    pixel = project.pixel_to_um
    voxel_um3 = pixel**3
    boundary_ids = project.datasets_of_kind("boundary")
    boundary_volume = None
    if boundary_ids:
        boundary_volume = float(
            np.count_nonzero(project.read_dataset(boundary_ids[0]).data) * voxel_um3
        )

    components = {}
    for dataset_id in project.dataset_ids():
        meta = project.dataset_meta(dataset_id)
        if meta.kind not in COMPONENT_KINDS:
            continue
        volume = float(
            np.count_nonzero(project.read_dataset(dataset_id).data) * voxel_um3
        )
        fraction = None
        if boundary_volume:
            fraction = volume / boundary_volume
        components[dataset_id] = {
            "kind": meta.kind,
            "volume_um3": volume,
            "volume_fraction": fraction,
        }

    labelmaps = {}
    for lm in project.datasets_of_kind("labels"):
        path = analysis / f"{project.name}_{lm}.csv"
        if not path.is_file():
            continue
        summary = _parse_summary_csv(path)
        labelmaps[lm] = {
            "count": summary.get("count"),
            "mean_size_um3": summary.get("mean_size_um3"),
            "stdev_size_um3": summary.get("stdev_size_um3"),
            "median_size_um3": summary.get("median_size_um3"),
            "connectivity": _connectivity(summary),
        }

    filament_sets = {}
    for fs in project.datasets_of_kind("filaments_labels"):
        path = analysis / f"{project.name}_{fs}.csv"
        if not path.is_file():
            continue
        summary = _parse_summary_csv(path)
        filament_sets[fs] = {
            "count": summary.get("count"),
            "mean_length_um": summary.get("mean_length_um"),
            "stdev_length_um": summary.get("stdev_length_um"),
            "median_length_um": summary.get("median_length_um"),
            "mean_tortuosity": summary.get("mean_tortuosity"),
            "stdev_tortuosity": summary.get("stdev_tortuosity"),
            "median_tortuosity": summary.get("median_tortuosity"),
            "n_undefined": summary.get("undefined_tortuosity"),
            "connectivity": _connectivity(summary),
        }

    baselines = {}
    for path in sorted(analysis.glob("*_baseline.csv")):
        _, rows = read_csv(path)
        for key, value in rows:
            if key == "ks_d":
                baselines[path.stem] = float(value)

    metadata = {}
    meta_path = analysis / "metadata.json"
    if meta_path.is_file():
        metadata = json.loads(meta_path.read_text(encoding="utf-8"))

    return {
        "project": project.name,
        "pixel_to_um": pixel,
        "boundary_volume_um3": boundary_volume,
        "components": components,
        "labelmaps": labelmaps,
        "filaments": filament_sets,
        "baselines": baselines,
        "metadata": metadata,
    }


def generate_report(
    project: Project,
    output_dir: str | Path | None = None,
    spec: HistogramSpec = HistogramSpec(),
) -> list[Path]:
    """Write summary.json plus every derivable plot into ``output_dir``.

    Defaults to ``<project>/plots``.  One distance histogram is produced for
    every target column of every individual CSV, and one CDF overlay for
    every baseline CSV.
    """
    out = Path(output_dir) if output_dir is not None else project.path / "plots"
    out.mkdir(parents=True, exist_ok=True)
    written = []

    summary = summarize(project)
    summary_path = out / "summary.json"
    summary_path.write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    written.append(summary_path)

    prefix = f"{project.name}_"
    for csv_path in sorted(project.analysis_dir.glob("*_individual.csv")):
        header, _ = read_csv(csv_path)
        component = csv_path.stem[len(prefix):-len("_individual")]
        for column in header:
            if not column.startswith("distance_to_") or not column.endswith("_um"):
                continue
            target = column[len("distance_to_"):-len("_um")]
            svg = plot_distance_histogram(csv_path, target, spec)
            path = out / f"{component}_distance_to_{target}.svg"
            path.write_text(svg, encoding="utf-8")
            written.append(path)

    for csv_path in sorted(project.analysis_dir.glob("*_baseline.csv")):
        svg = plot_observed_vs_random(csv_path, spec)
        path = out / f"{csv_path.stem}_cdf.svg"
        path.write_text(svg, encoding="utf-8")
        written.append(path)
    return written

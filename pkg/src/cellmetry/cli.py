"""Command-line surface: one verb per pipeline stage over a project directory.

Exit codes: 0 on success, 1 on a domain error (with a single
``ERROR <code>: <message>`` line on stderr), 2 on usage errors.  Long
operations report ``PROGRESS <step> <pct>`` lines on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .baseline import BaselineConfig, baseline_distances
from .errors import CellmetryError, InvalidMeta, NoAnalysis, UnknownTarget
from .geometry import export_meshes
from .ingest import ScaleSpec, add_component
from .report import HistogramSpec, generate_report
from .skeleton import DEFAULT_RADIUS_UM, FilamentImportSpec, import_filaments, parse_skeleton_xml
from .spatial import AnalysisConfig, memory_budget_from_env, read_csv, run_analysis
from .store import Project, create_project
from .tiff import write_tiff

log = logging.getLogger(__name__)


def export_connectivity(
    project: Project,
    labelmap_id: str,
    target_id: str,
    inverted: bool = False,
) -> Path:
    """Export the voxels of all labels (not) connected to a target as a TIFF mask.

    Reads the connectivity flags from the labelmap's individual analysis CSV;
    the output is a {0, 255} u8 multi-page TIFF under ``export/``.  The normal
    and inverted exports partition the labelmap's foreground exactly.
    """
    csv_path = project.analysis_dir / f"{project.name}_{labelmap_id}_individual.csv"
    if not csv_path.is_file():
        raise NoAnalysis(
            f"no analysis table for {labelmap_id!r}; run the spatial analysis first"
        )
    header, rows = read_csv(csv_path)
    column = f"connected_to_{target_id}"
    if column not in header:
        available = [h[len("connected_to_"):] for h in header if h.startswith("connected_to_")]
        raise UnknownTarget(
            f"{csv_path.name} has no connectivity to {target_id!r}; "
            f"available targets: {', '.join(available) or 'none'}"
        )
    flag_index = header.index(column)
    wanted_flag = "0" if inverted else "1"

    grid = project.read_dataset(labelmap_id)
    if header[0] == "filament":
        # filament rows are listed in import order; the labelmap stores the
        # 1-based ordinal along that same order
        selected_values = {
            i + 1 for i, row in enumerate(rows) if row[flag_index] == wanted_flag
        }
    else:
        selected_values = {
            int(row[0]) for row in rows if row[flag_index] == wanted_flag
        }
    mask = np.isin(grid.data, sorted(selected_values))
    out = np.where(mask, np.uint8(255), np.uint8(0))
    suffix = "_inverted" if inverted else ""
    path = project.export_dir / f"{labelmap_id}_connected_to_{target_id}{suffix}.tif"
    project.export_dir.mkdir(exist_ok=True)
    write_tiff(path, out)
    log.info("wrote %s (%d labels)", path, len(selected_values))
    return path


def _parse_color(text: str) -> tuple[int, int, int, int]:
    text = text.strip().lstrip("#")
    if len(text) == 6:
        text += "ff"
    if len(text) != 8:
        raise InvalidMeta(f"color must be RRGGBBAA hex, got {text!r}")
    try:
        return tuple(int(text[i : i + 2], 16) for i in (0, 2, 4, 6))
    except ValueError as exc:
        raise InvalidMeta(f"color must be RRGGBBAA hex, got {text!r}") from exc


def _progress_printer(step: str, pct: float) -> None:
    print(f"PROGRESS {step.replace(' ', ':')} {pct:.0f}", file=sys.stderr, flush=True)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellmetry",
        description="Batch spatial analysis of volume-EM segmentation data.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("create", help="create an empty project directory")
    p.add_argument("--parent", required=True, help="folder the project is created in")
    p.add_argument("--name", required=True, help="project name (directory NAME.n5)")
    p.add_argument("--pixel-to-um", type=float, required=True,
                   help="conversion factor from voxel units to micrometers")

    p = sub.add_parser("add", help="add a mask/labels/boundary component from TIFF")
    p.add_argument("--project", required=True)
    p.add_argument("--input", required=True, help="multi-page TIFF stack")
    p.add_argument("--kind", required=True, choices=["mask", "labels", "boundary", "raw"])
    p.add_argument("--id", required=True, help="component name")
    p.add_argument("--color", default="ffffffff", help="RRGGBBAA display color")
    p.add_argument("--scale-x", type=float, default=1.0)
    p.add_argument("--scale-y", type=float, default=1.0)
    p.add_argument("--scale-z", type=float, default=1.0,
                   help="z scaling factor if the stack is not isotropic yet")

    p = sub.add_parser("import-filaments", help="import skeleton annotations from XML")
    p.add_argument("--project", required=True)
    p.add_argument("--input", required=True, help="skeleton annotation XML")
    p.add_argument("--name", required=True, help="name of the filament component")
    p.add_argument("--color", default="ffffffff", help="RRGGBBAA display color")
    p.add_argument("--scale-x", type=float, default=1.0)
    p.add_argument("--scale-y", type=float, default=1.0)
    p.add_argument("--scale-z", type=float, default=1.0)
    p.add_argument("--z-offset", type=int, default=None,
                   help="annotation z offset in voxels (default: derived)")
    p.add_argument("--radius-um", type=float, default=DEFAULT_RADIUS_UM,
                   help="rasterization radius in micrometers")

    p = sub.add_parser("analyze", help="compute distance maps and analysis CSVs")
    p.add_argument("--project", required=True)
    p.add_argument("--connected-threshold-um", type=float, required=True,
                   help="micrometer threshold for counting labels as connected")
    p.add_argument("--filament-end-threshold-um", type=float, default=None,
                   help="threshold for filament-end connectivity (default: same)")
    p.add_argument("--skip-existing-distance-maps", action="store_true",
                   help="reuse distance maps that are present and not stale")
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("export-connectivity",
                       help="export labels (not) connected to a target as TIFF")
    p.add_argument("--project", required=True)
    p.add_argument("--labelmap", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--inverted", action="store_true",
                   help="export the labels that are NOT connected")

    p = sub.add_parser("export-meshes", help="export components as binary STL meshes")
    p.add_argument("--project", required=True)
    p.add_argument("--include", default=None,
                   help="comma-separated substrings; export only matching components")
    p.add_argument("--exclude", default=None,
                   help="comma-separated substrings; skip matching components")
    p.add_argument("--split-labels", action="store_true",
                   help="one mesh per label instead of one merged mesh per labelmap")
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("baseline", help="observed vs random distance distributions")
    p.add_argument("--project", required=True)
    p.add_argument("--labelmap", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--samples", type=int, default=1,
                   help="random positions per observed label")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exclude", default=None,
                   help="comma-separated dataset ids whose foreground is off-limits")

    p = sub.add_parser("report", help="emit SVG plots and summary.json")
    p.add_argument("--project", required=True)
    p.add_argument("--output", default=None, help="plot directory (default: PROJECT/plots)")
    p.add_argument("--bins", type=int, default=32)

    return parser


def run(args: argparse.Namespace) -> int:
    if args.verb == "create":
        project = create_project(args.parent, args.name, args.pixel_to_um)
        print(project.path)
        return 0

    project = Project.open(args.project)

    if args.verb == "add":
        scale = ScaleSpec(args.scale_x, args.scale_y, args.scale_z)
        add_component(project, args.input, args.kind, args.id,
                      color=_parse_color(args.color), scale=scale)
        return 0

    if args.verb == "import-filaments":
        doc = parse_skeleton_xml(args.input)
        spec = FilamentImportSpec(
            scale=ScaleSpec(args.scale_x, args.scale_y, args.scale_z),
            z_offset=args.z_offset,
            radius_um=args.radius_um,
        )
        filaments, _ = import_filaments(project, doc, spec, args.name,
                                        color=_parse_color(args.color))
        print(f"{len(filaments)} filaments")
        return 0

    if args.verb == "analyze":
        config = AnalysisConfig(
            connected_threshold_um=args.connected_threshold_um,
            filament_end_threshold_um=args.filament_end_threshold_um,
            skip_existing_distance_maps=args.skip_existing_distance_maps,
            memory_budget_bytes=memory_budget_from_env(),
        )
        written = run_analysis(project, config, threads=args.threads,
                               progress=_progress_printer)
        for path in written:
            print(path)
        return 0

    if args.verb == "export-connectivity":
        print(export_connectivity(project, args.labelmap, args.target, args.inverted))
        return 0

    if args.verb == "export-meshes":
        written = export_meshes(project, include=args.include, exclude=args.exclude,
                                split_labels=args.split_labels, threads=args.threads)
        for path in written:
            print(path)
        return 0

    if args.verb == "baseline":
        exclude = tuple(s for s in (args.exclude or "").split(",") if s)
        config = BaselineConfig(samples=args.samples, seed=args.seed, exclude=exclude)
        print(baseline_distances(project, args.labelmap, args.target, config))
        return 0

    if args.verb == "report":
        written = generate_report(project, args.output, HistogramSpec(bins=args.bins))
        for path in written:
            print(path)
        return 0

    raise AssertionError(f"unhandled verb {args.verb}")


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except CellmetryError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""cellmetry: batch spatial analysis of volume-EM segmentation data.

A project is a chunked on-disk voxel container; the library ingests
organelle masks, instance labelmaps and skeleton annotations into it, then
computes exact Euclidean distance maps, inter-component distance and
connectivity statistics, filament length/tortuosity metrics and
random-placement baselines, and exports connectivity masks, surface meshes,
CSV tables and SVG reports.
"""

from .baseline import BaselineConfig, baseline_distances, ks_statistic, random_positions
from .cli import export_connectivity
from .edt import (
    check_memory_budget,
    distance_transform,
    distance_transform_squared,
    estimate_distance_map_bytes,
)
from .errors import CellmetryError
from .geometry import (
    TriangleMesh,
    export_meshes,
    marching_cubes,
    mesh_from_stl,
    read_stl,
    write_stl,
)
from .ingest import (
    ScaleSpec,
    add_component,
    derive_membrane,
    normalize_labels,
    normalize_mask,
    rescale,
)
from .report import (
    HistogramSpec,
    generate_report,
    plot_distance_histogram,
    plot_observed_vs_random,
    summarize,
)
from .skeleton import (
    Filament,
    FilamentImportSpec,
    SkeletonDocument,
    Thing,
    compute_z_offset,
    filament_length,
    filament_tortuosity,
    import_filaments,
    load_filaments,
    parse_skeleton_xml,
    rasterize_filaments,
    reconstruct_filaments,
)
from .spatial import (
    AnalysisConfig,
    filament_analysis,
    label_statistics,
    label_target_distance,
    run_analysis,
)
from .store import DatasetMeta, Project, ProjectMeta, VoxelGrid, create_project
from .tiff import TiffStack, read_tiff, write_tiff

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "BaselineConfig",
    "CellmetryError",
    "DatasetMeta",
    "Filament",
    "FilamentImportSpec",
    "HistogramSpec",
    "Project",
    "ProjectMeta",
    "ScaleSpec",
    "SkeletonDocument",
    "Thing",
    "TiffStack",
    "TriangleMesh",
    "VoxelGrid",
    "add_component",
    "baseline_distances",
    "check_memory_budget",
    "compute_z_offset",
    "create_project",
    "derive_membrane",
    "distance_transform",
    "distance_transform_squared",
    "estimate_distance_map_bytes",
    "export_connectivity",
    "export_meshes",
    "filament_analysis",
    "filament_length",
    "filament_tortuosity",
    "generate_report",
    "import_filaments",
    "ks_statistic",
    "label_statistics",
    "label_target_distance",
    "load_filaments",
    "marching_cubes",
    "mesh_from_stl",
    "normalize_labels",
    "normalize_mask",
    "parse_skeleton_xml",
    "plot_distance_histogram",
    "plot_observed_vs_random",
    "random_positions",
    "rasterize_filaments",
    "read_stl",
    "read_tiff",
    "reconstruct_filaments",
    "rescale",
    "run_analysis",
    "summarize",
    "write_stl",
    "write_tiff",
]

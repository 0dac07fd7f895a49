from __future__ import annotations

import numpy as np
import pytest

from cellmetry.cli import export_connectivity, main
from cellmetry.errors import NoAnalysis, UnknownTarget
from cellmetry.spatial import AnalysisConfig, run_analysis
from cellmetry.store import Project, VoxelGrid, create_project
from cellmetry.tiff import read_tiff

from conftest import write_synthetic_inputs


def test_create_verb(tmp_path, capsys):
    code = main(["create", "--parent", str(tmp_path), "--name", "high_c1",
                 "--pixel-to-um", "0.016"])
    assert code == 0
    assert (tmp_path / "high_c1.n5").is_dir()
    assert "high_c1.n5" in capsys.readouterr().out


def test_create_invalid_pixel_size_exits_1(tmp_path, capsys):
    code = main(["create", "--parent", str(tmp_path), "--name", "p",
                 "--pixel-to-um", "0"])
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("ERROR INVALID_META:")


def test_unknown_flag_exits_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["create", "--parent", str(tmp_path), "--nope", "x"])
    assert exc.value.code == 2


def test_domain_error_single_line(tmp_path, capsys):
    main(["create", "--parent", str(tmp_path), "--name", "p", "--pixel-to-um", "1"])
    code = main(["create", "--parent", str(tmp_path), "--name", "p", "--pixel-to-um", "1"])
    assert code == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("ERROR ALREADY_EXISTS:")
    assert "\n" not in err


def test_full_pipeline_via_cli(tmp_path, capsys, monkeypatch):
    inputs = write_synthetic_inputs(tmp_path / "in", size=32)
    project_dir = str(tmp_path / "cell.n5")
    assert main(["create", "--parent", str(tmp_path), "--name", "cell",
                 "--pixel-to-um", "0.016"]) == 0
    assert main(["add", "--project", project_dir, "--input", str(inputs["boundary"]),
                 "--kind", "boundary", "--id", "boundary", "--color", "404040ff"]) == 0
    assert main(["add", "--project", project_dir, "--input", str(inputs["nucleus"]),
                 "--kind", "mask", "--id", "nucleus"]) == 0
    assert main(["add", "--project", project_dir, "--input", str(inputs["granules"]),
                 "--kind", "labels", "--id", "granules"]) == 0
    assert main(["import-filaments", "--project", project_dir,
                 "--input", str(inputs["skeleton"]), "--name", "microtubules"]) == 0
    assert main(["analyze", "--project", project_dir,
                 "--connected-threshold-um", "0.05", "--threads", "2"]) == 0
    captured = capsys.readouterr()
    assert "PROGRESS" in captured.err
    assert main(["export-connectivity", "--project", project_dir,
                 "--labelmap", "granules", "--target", "nucleus"]) == 0
    assert main(["export-connectivity", "--project", project_dir,
                 "--labelmap", "granules", "--target", "nucleus", "--inverted"]) == 0
    assert main(["export-meshes", "--project", project_dir,
                 "--include", "granules,nucleus"]) == 0
    assert main(["baseline", "--project", project_dir, "--labelmap", "granules",
                 "--target", "membrane", "--samples", "4", "--seed", "5",
                 "--exclude", "nucleus"]) == 0
    assert main(["report", "--project", project_dir]) == 0

    project = Project.open(project_dir)
    assert (project.export_dir / "granules_connected_to_nucleus.tif").is_file()
    assert (project.export_dir / "granules_connected_to_nucleus_inverted.tif").is_file()
    assert (project.meshes_dir / "granules.stl").is_file()
    assert (project.path / "plots" / "summary.json").is_file()


def test_memory_budget_env_var(tmp_path, capsys, monkeypatch):
    inputs = write_synthetic_inputs(tmp_path / "in", size=32)
    project_dir = str(tmp_path / "cell.n5")
    main(["create", "--parent", str(tmp_path), "--name", "cell", "--pixel-to-um", "1"])
    main(["add", "--project", project_dir, "--input", str(inputs["boundary"]),
          "--kind", "boundary", "--id", "boundary"])
    monkeypatch.setenv("CELLMETRY_MEM_BUDGET_GB", "0.000001")
    code = main(["analyze", "--project", project_dir, "--connected-threshold-um", "1"])
    assert code == 1
    assert "ERROR OUT_OF_MEMORY_BUDGET:" in capsys.readouterr().err


class TestExportConnectivity:
    @pytest.fixture
    def analyzed_project(self, tmp_path):
        project = create_project(tmp_path, "p", 1.0)
        labels = np.zeros((8, 8, 8), np.uint16)
        labels[1, 1, 1:3] = 1  # near target
        labels[6, 6, 5:8] = 2  # far from target
        project.put_dataset(VoxelGrid.from_array("granules", "labels", labels))
        target = np.zeros((8, 8, 8), np.uint8)
        target[0, 0, 0] = 1
        project.put_dataset(VoxelGrid.from_array("anchor", "mask", target))
        run_analysis(project, AnalysisConfig(connected_threshold_um=3.0))
        return project, labels

    def test_partition_of_foreground(self, analyzed_project):
        project, labels = analyzed_project
        normal = export_connectivity(project, "granules", "anchor", inverted=False)
        inverted = export_connectivity(project, "granules", "anchor", inverted=True)
        a = read_tiff(normal).to_array()
        b = read_tiff(inverted).to_array()
        assert set(np.unique(a)) <= {0, 255}
        assert not ((a == 255) & (b == 255)).any()
        np.testing.assert_array_equal((a == 255) | (b == 255), labels != 0)
        np.testing.assert_array_equal(a == 255, labels == 1)
        np.testing.assert_array_equal(b == 255, labels == 2)

    def test_unknown_target(self, analyzed_project):
        project, _ = analyzed_project
        with pytest.raises(UnknownTarget, match="anchor"):
            export_connectivity(project, "granules", "missing")

    def test_no_analysis(self, tmp_path):
        project = create_project(tmp_path, "p", 1.0)
        labels = np.zeros((4, 4, 4), np.uint16)
        labels[0, 0, 0] = 1
        project.put_dataset(VoxelGrid.from_array("granules", "labels", labels))
        with pytest.raises(NoAnalysis):
            export_connectivity(project, "granules", "anything")

    def test_filament_connectivity_export(self, tmp_path):
        # filament rows map to labelmap ordinals through the import order
        from cellmetry.ingest import ScaleSpec
        from cellmetry.skeleton import (
            FilamentImportSpec,
            SkeletonDocument,
            Thing,
            import_filaments,
        )

        project = create_project(tmp_path, "p", 1.0)
        anchor = np.zeros((12, 12, 12), np.uint8)
        anchor[1, 1, 1] = 1
        project.put_dataset(VoxelGrid.from_array("anchor", "mask", anchor))
        doc = SkeletonDocument(
            things=[
                Thing(id=1, nodes={1: (1, 1, 1), 2: (4, 1, 1)}, edges=[(1, 2)]),
                Thing(id=2, nodes={3: (10, 10, 10), 4: (7, 10, 10)}, edges=[(3, 4)]),
            ]
        )
        import_filaments(project, doc,
                         FilamentImportSpec(scale=ScaleSpec(), radius_um=0.5), "mt")
        run_analysis(project, AnalysisConfig(connected_threshold_um=2.0))
        normal = export_connectivity(project, "mt", "anchor")
        mask = read_tiff(normal).to_array()
        mt = project.read_dataset("mt").data
        np.testing.assert_array_equal(mask == 255, mt == 1)

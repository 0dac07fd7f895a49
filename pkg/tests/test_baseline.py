from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as scipy_stats

from cellmetry.baseline import (
    BaselineConfig,
    baseline_distances,
    ks_statistic,
    random_positions,
)
from cellmetry.errors import EmptyRegion, NoAnalysis
from cellmetry.spatial import AnalysisConfig, run_analysis
from cellmetry.store import VoxelGrid, create_project

from oracles import ks_d_oracle


class TestRandomPositions:
    def test_single_voxel_region(self):
        boundary = np.zeros((4, 4, 4), np.uint8)
        boundary[1, 2, 3] = 1
        pos = random_positions(boundary, [], 25, seed=0)
        assert (pos == np.array([3, 2, 1])).all()

    def test_fixed_seed_reproducible(self):
        rng = np.random.default_rng(0)
        boundary = (rng.random((10, 10, 10)) < 0.4).astype(np.uint8)
        a = random_positions(boundary, [], 500, seed=123)
        b = random_positions(boundary, [], 500, seed=123)
        np.testing.assert_array_equal(a, b)
        c = random_positions(boundary, [], 500, seed=124)
        assert not np.array_equal(a, c)

    def test_two_voxel_region_binomial_bound(self):
        boundary = np.zeros((2, 1, 1), np.uint8)
        boundary[0, 0, 0] = 1
        boundary[1, 0, 0] = 1
        n = 100_000
        pos = random_positions(boundary, [], n, seed=7)
        count0 = int((pos[:, 2] == 0).sum())
        sigma = (n * 0.25) ** 0.5
        assert abs(count0 - n / 2) < 4 * sigma

    def test_positions_respect_exclusions(self):
        rng = np.random.default_rng(1)
        boundary = np.ones((8, 8, 8), np.uint8)
        exclude = (rng.random((8, 8, 8)) < 0.5).astype(np.uint8)
        pos = random_positions(boundary, [exclude], 2000, seed=5)
        for x, y, z in pos:
            assert boundary[z, y, x] and not exclude[z, y, x]

    def test_empty_region(self):
        boundary = np.ones((2, 2, 2), np.uint8)
        with pytest.raises(EmptyRegion):
            random_positions(boundary, [boundary], 5, seed=0)


class TestKs:
    def test_identical_samples_zero(self):
        values = [0.1, 0.4, 0.4, 2.0]
        assert ks_statistic(values, list(values)) == 0.0

    def test_disjoint_samples_one(self):
        assert ks_statistic([0.0, 0.0], [1.0, 1.0, 1.0]) == 1.0

    def test_against_direct_oracle_and_scipy(self):
        rng = np.random.default_rng(2)
        a = rng.normal(0, 1, 40)
        b = rng.normal(0.5, 1.3, 55)
        d = ks_statistic(a, b)
        assert d == pytest.approx(ks_d_oracle(a, b), abs=1e-12)
        assert d == pytest.approx(scipy_stats.ks_2samp(a, b).statistic, abs=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(
        a=st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=40),
        b=st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=40),
    )
    def test_d_in_unit_interval(self, a, b):
        d = ks_statistic(a, b)
        assert 0.0 <= d <= 1.0
        assert d == pytest.approx(scipy_stats.ks_2samp(a, b).statistic, abs=1e-9)


def _baseline_project(tmp_path):
    project = create_project(tmp_path, "p", 1.0)
    boundary = np.zeros((16, 16, 16), np.uint8)
    boundary[2:14, 2:14, 2:14] = 1
    project.put_dataset(VoxelGrid.from_array("boundary", "boundary", boundary))
    target = np.zeros((16, 16, 16), np.uint8)
    target[2, 2:14, 2:14] = 1  # plate at low z: labels near it are "clustered"
    project.put_dataset(VoxelGrid.from_array("plate", "mask", target))
    labels = np.zeros((16, 16, 16), np.uint16)
    for i in range(8):  # labels hugging the plate
        labels[3, 3 + i, 4] = i + 1
    project.put_dataset(VoxelGrid.from_array("granules", "labels", labels))
    run_analysis(project, AnalysisConfig(connected_threshold_um=1.5))
    return project


class TestBaselineDistances:
    def test_csv_deterministic_and_admissible(self, tmp_path):
        project = _baseline_project(tmp_path)
        config = BaselineConfig(samples=10, seed=42)
        path = baseline_distances(project, "granules", "plate", config)
        first = path.read_bytes()
        path = baseline_distances(project, "granules", "plate", config)
        assert path.read_bytes() == first
        assert path.name == "p_granules_vs_plate_baseline.csv"

    def test_rows_and_ks_against_oracle(self, tmp_path):
        project = _baseline_project(tmp_path)
        config = BaselineConfig(samples=25, seed=9)
        path = baseline_distances(project, "granules", "plate", config)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "kind,distance_um"
        observed = [float(l.split(",")[1]) for l in lines if l.startswith("observed,")]
        randoms = [float(l.split(",")[1]) for l in lines if l.startswith("random,")]
        assert len(observed) == 8
        assert len(randoms) == 8 * 25
        ks_row = [l for l in lines if l.startswith("ks_d,")]
        seed_row = [l for l in lines if l.startswith("seed,")]
        assert seed_row == ["seed,9"]
        d_reported = float(ks_row[0].split(",")[1])
        d_oracle = ks_d_oracle(observed, randoms)
        assert d_reported == pytest.approx(d_oracle, abs=1e-6)  # CSV has 6 decimals
        # clustered-on-plate labels vs uniform baseline separate cleanly
        assert d_oracle > 0.5

    def test_target_covering_region_gives_zero_d(self, tmp_path):
        project = create_project(tmp_path, "p", 1.0)
        boundary = np.ones((6, 6, 6), np.uint8)
        project.put_dataset(VoxelGrid.from_array("boundary", "boundary", boundary))
        project.put_dataset(VoxelGrid.from_array("all", "mask", boundary.copy()))
        labels = np.zeros((6, 6, 6), np.uint16)
        labels[1, 1, 1] = 1
        labels[4, 4, 4] = 2
        project.put_dataset(VoxelGrid.from_array("g", "labels", labels))
        run_analysis(project, AnalysisConfig(connected_threshold_um=1.0))
        path = baseline_distances(project, "g", "all", BaselineConfig(samples=50, seed=1))
        ks_line = [l for l in path.read_text().split("\n") if l.startswith("ks_d,")]
        assert ks_line == ["ks_d,0.000000"]

    def test_requires_distance_map(self, tmp_path):
        project = create_project(tmp_path, "p", 1.0)
        boundary = np.ones((4, 4, 4), np.uint8)
        project.put_dataset(VoxelGrid.from_array("boundary", "boundary", boundary))
        labels = np.zeros((4, 4, 4), np.uint16)
        labels[1, 1, 1] = 1
        project.put_dataset(VoxelGrid.from_array("g", "labels", labels))
        with pytest.raises(NoAnalysis):
            baseline_distances(project, "g", "boundary", BaselineConfig())

    def test_exclusions_respected_in_samples(self, tmp_path):
        project = _baseline_project(tmp_path)
        config = BaselineConfig(samples=40, seed=3, exclude=("plate",))
        baseline_distances(project, "granules", "plate", config)
        # reproduce the sampling and verify against the exclusion mask
        boundary = project.read_dataset("boundary").data
        plate = project.read_dataset("plate").data
        pos = random_positions(boundary, [plate], 40 * 8, seed=3)
        for x, y, z in pos:
            assert boundary[z, y, x] == 1 and plate[z, y, x] == 0

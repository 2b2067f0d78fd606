import numpy as np
import pytest

from spectrum3d.scene import GridSpec, Scene, TruthSource, combine_rss_dbm
from spectrum3d.synthgen import (TABLE2_GRID, UrbanPlParams,
                                 generate_truth_grid, table1_scene,
                                 urban_path_loss_db)


def small_scene(sources, counts=(10, 10, 5)):
    grid = GridSpec((0, 0, 0), (200, 200, 50), counts)
    return Scene(grid, tuple(sources), 100.0)


class TestUrbanPathLoss:
    def test_distance_term_vanishes_at_one_km(self):
        # a=2, b=0 makes the exponent term 2 regardless of height
        params = UrbanPlParams(2.0, 0.0, 0.0, 100.0)
        loss = urban_path_loss_db(params, (0, 0, 5), (1000, 0, 5))
        assert loss == pytest.approx(32.4 + 40.0)

    def test_one_decade_of_distance(self):
        params = UrbanPlParams(2.0, 0.0, 0.0, 100.0)
        loss = urban_path_loss_db(params, (0, 0, 5), (100, 0, 5))
        assert loss == pytest.approx(72.4 - 20.0)

    def test_shadow_added_verbatim(self):
        params = UrbanPlParams(2.0, 0.0, 0.0, 1.0)
        loss = urban_path_loss_db(params, (0, 0, 5), (1000, 0, 5), shadow_db=5.0)
        assert loss == pytest.approx(32.4 + 5.0)

    def test_height_enters_through_exponent(self):
        params = UrbanPlParams(2.5, -0.1, 0.0, 100.0)
        lo = urban_path_loss_db(params, (0, 0, 5), (100, 0, 5))
        hi = urban_path_loss_db(params, (0, 0, 80), (100, 0, 80))
        slope_lo = 2.5 * 5 ** -0.1
        slope_hi = 2.5 * 80 ** -0.1
        assert lo == pytest.approx(72.4 + 10 * slope_lo * np.log10(0.1))
        assert hi == pytest.approx(72.4 + 10 * slope_hi * np.log10(0.1))

    def test_distance_clamped_at_one_meter(self):
        params = UrbanPlParams(2.0, 0.0, 0.0, 100.0)
        at_zero = urban_path_loss_db(params, (0, 0, 5), (0, 0, 5))
        at_clamp = urban_path_loss_db(params, (0, 0, 5), (1, 0, 5))
        assert at_zero == pytest.approx(at_clamp)

    def test_nonpositive_height_rejected(self):
        params = UrbanPlParams(2.0, 0.0, 0.0, 100.0)
        with pytest.raises(ValueError):
            urban_path_loss_db(params, (0, 0, 5), (100, 0, 0.0))

    def test_param_validation(self):
        with pytest.raises(ValueError):
            UrbanPlParams(2.0, 0.0, -1.0, 100.0)
        with pytest.raises(ValueError):
            UrbanPlParams(2.0, 0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            UrbanPlParams(0.0, 0.0, 0.0, 100.0)


class TestGenerateTruthGrid:
    def test_hand_computed_cell(self):
        # source 1 km from a cell center, 1 W, exponent term fixed at 2:
        # RSS = 30 dBm - (32.4 + 40) = -42.4 dBm
        grid_spec = GridSpec((0, 0, 0), (2000, 10, 10), (2, 1, 1))
        center = grid_spec.cell_center((1, 0, 0))   # (1500, 5, 5)
        src = TruthSource((500.0, 5.0, 5.0), 1.0)   # 1000 m from that center
        scene = Scene(grid_spec, (src,), 100.0)
        params = UrbanPlParams(2.0, 0.0, 0.0, 100.0)
        grid = generate_truth_grid(scene, params, seed=1)
        assert grid.values[1, 0, 0] == pytest.approx(30.0 - 72.4)
        assert grid.is_fully_observed

    def test_colocated_sources_double_power(self):
        src = TruthSource((100, 100, 10), 1.0)
        params = UrbanPlParams(2.0, 0.0, 0.0, 100.0)
        one = generate_truth_grid(small_scene([src]), params, seed=2)
        two = generate_truth_grid(small_scene([src, src]), params, seed=2)
        assert np.allclose(two.values, one.values + 10 * np.log10(2))

    def test_same_seed_identical(self):
        scene = small_scene([TruthSource((50, 60, 10), 1.0)])
        params = UrbanPlParams(2.5, -0.1, 4.0, 100.0)
        a = generate_truth_grid(scene, params, seed=42)
        b = generate_truth_grid(scene, params, seed=42)
        assert np.array_equal(a.values, b.values)

    def test_empty_scene_rejected(self):
        params = UrbanPlParams(2.0, 0.0, 0.0, 100.0)
        with pytest.raises(ValueError):
            generate_truth_grid(small_scene([]), params, seed=0)

    def test_monotone_decay_along_ray(self):
        # sigma=0, b=0: RSS decreases with distance from a single source
        grid = GridSpec((0, 0, 0), (1000, 20, 20), (50, 1, 1))
        scene = Scene(grid, (TruthSource((5.0, 10.0, 10.0), 1.0),), 100.0)
        params = UrbanPlParams(2.0, 0.0, 0.0, 100.0)
        values = generate_truth_grid(scene, params, seed=0).values[:, 0, 0]
        assert np.all(np.diff(values) < 0)

    def test_multi_source_grid_is_db_combination(self):
        sources = [TruthSource((50, 50, 10), 1.0),
                   TruthSource((150, 150, 30), 2.0),
                   TruthSource((100, 30, 20), 0.5)]
        params = UrbanPlParams(2.5, -0.1, 0.0, 100.0)
        full = generate_truth_grid(small_scene(sources), params, seed=3)
        singles = [
            generate_truth_grid(small_scene([s]), params, seed=3).values
            for s in sources
        ]
        assert np.allclose(full.values, combine_rss_dbm(singles), atol=1e-9)

    def test_shadow_std_within_two_percent(self):
        scene = small_scene([TruthSource((100, 100, 10), 1.0)],
                            counts=(50, 50, 40))   # 1e5 cells
        params_noisy = UrbanPlParams(2.0, 0.0, 4.0, 100.0)
        params_clean = UrbanPlParams(2.0, 0.0, 0.0, 100.0)
        noisy = generate_truth_grid(scene, params_noisy, seed=5)
        clean = generate_truth_grid(scene, params_clean, seed=5)
        shadows = noisy.values - clean.values
        assert shadows.size >= 10 ** 5
        assert np.std(shadows) == pytest.approx(4.0, rel=0.02)


class TestTable1Scenes:
    def test_k2_sources(self):
        scene = table1_scene(2)
        assert [s.position for s in scene.sources] == [
            (310.0, -239.0, 2.0), (235.0, -105.0, 2.0)]
        assert all(s.power_watts == 1.0 for s in scene.sources)
        assert scene.frequency_mhz == 100.0

    def test_k3_includes_elevated_source(self):
        scene = table1_scene(3)
        assert (345.0, -365.0, 33.77) in [s.position for s in scene.sources]
        assert len(scene.sources) == 3

    def test_k4_includes_rooftop_source(self):
        scene = table1_scene(4)
        assert (400.0, -140.0, 23.3) in [s.position for s in scene.sources]
        assert len(scene.sources) == 4

    def test_grid_matches_measurement_area(self):
        scene = table1_scene(2)
        assert scene.grid == TABLE2_GRID
        assert scene.grid.counts == (100, 100, 10)
        assert np.allclose(scene.grid.cell_size, (5.0, 5.0, 10.0))

    def test_other_k_rejected(self):
        with pytest.raises(ValueError):
            table1_scene(5)

    def test_bundled_files_match(self):
        from importlib import resources

        from spectrum3d.scene import Scene as SceneType
        import json as json_mod
        for k in (2, 3, 4):
            ref = resources.files("spectrum3d.data") / f"table1_k{k}.json"
            loaded = SceneType.from_dict(json_mod.loads(ref.read_text()))
            assert loaded == table1_scene(k)

import numpy as np
import pytest

from spectrum3d.sampler import SamplingPlan, draw_samples
from spectrum3d.scene import GridSpec, Sample, Scene, TruthSource
from spectrum3d.sfla import (SflaConfig, SourceEstimate, _Objective,
                             calibrate_powers, estimate_parameters, fitness_of,
                             genome_to_array, local_step, partition_memeplexes,
                             predicted_rss_mw, refine_sources, sort_sources)
from spectrum3d.synthgen import UrbanPlParams, generate_truth_grid


def toy_config(**overrides):
    grid = GridSpec((0, 0, 0), (200, 200, 50), (20, 20, 5))
    defaults = dict(population=60, memeplexes=6, local_iters=5,
                    global_iters=60, patience=20, seed=0)
    defaults.update(overrides)
    return grid, SflaConfig.for_grid(grid, **defaults)


class TestPredictedRss:
    def test_inverse_square_value(self):
        genome = [SourceEstimate(1.0, (0, 0, 0), 1.0)]   # 1 W = 1000 mW
        assert predicted_rss_mw(genome, (10, 0, 0), 2.0) == pytest.approx(10.0)

    def test_two_sources_add(self):
        genome = [SourceEstimate(1.0, (0, 0, 0), 1.0),
                  SourceEstimate(1.0, (0, 0, 0), 1.0)]
        assert predicted_rss_mw(genome, (10, 0, 0), 2.0) == pytest.approx(20.0)

    def test_zero_coefficient_contributes_nothing(self):
        genome = np.array([[0.0 + 1e-300, 0, 0, 0, 5.0]])
        assert predicted_rss_mw(genome, (3, 4, 0), 2.0) == pytest.approx(0.0)

    def test_distance_clamped(self):
        genome = [SourceEstimate(1.0, (0, 0, 0), 1.0)]
        at_source = predicted_rss_mw(genome, (0, 0, 0), 2.0)
        at_one_m = predicted_rss_mw(genome, (1, 0, 0), 2.0)
        assert at_source == pytest.approx(at_one_m)


class TestFitness:
    def test_exact_reproduction_is_zero(self):
        genome = [SourceEstimate(1.0, (0, 0, 1), 1.0)]
        samples = [
            Sample((10, 0, 1), 10 * np.log10(10.0)),
            Sample((100, 0, 1), 10 * np.log10(0.1)),
        ]
        assert fitness_of(genome, samples, 2.0) == pytest.approx(0.0, abs=1e-9)

    def test_single_residual(self):
        genome = [SourceEstimate(1.0, (0, 0, 1), 1.0)]
        # truth 10 mW at 10 m; sample says 13 mW -> residual 3 mW
        samples = [Sample((10, 0, 1), 10 * np.log10(13.0))]
        assert fitness_of(genome, samples, 2.0) == pytest.approx(3.0)

    def test_three_four_five(self):
        genome = [SourceEstimate(1.0, (0, 0, 1), 1.0)]
        samples = [Sample((10, 0, 1), 10 * np.log10(13.0)),
                   Sample((100, 0, 1), 10 * np.log10(4.1))]
        assert fitness_of(genome, samples, 2.0) == pytest.approx(5.0)


class TestPartition:
    def test_round_robin_deal(self):
        groups = partition_memeplexes(["r1", "r2", "r3", "r4"], 2)
        assert groups == [["r1", "r3"], ["r2", "r4"]]

    def test_single_group(self):
        groups = partition_memeplexes([1, 2, 3], 1)
        assert groups == [[1, 2, 3]]

    def test_singleton_groups(self):
        groups = partition_memeplexes([1, 2, 3], 3)
        assert groups == [[1], [2], [3]]

    def test_too_many_groups_rejected(self):
        with pytest.raises(ValueError):
            partition_memeplexes([1, 2], 3)

    def test_true_partition(self):
        rng = np.random.default_rng(0)
        items = list(rng.permutation(23))
        groups = partition_memeplexes(items, 5)
        flat = [x for g in groups for x in g]
        assert sorted(flat) == sorted(items)
        assert sum(len(g) for g in groups) == len(items)


class TestLocalStep:
    def _setup(self):
        positions = np.array([[10.0, 0, 1], [50.0, 0, 1], [100.0, 0, 1]])
        rss_mw = np.array([10.0, 0.4, 0.1])
        objective = _Objective(positions, rss_mw, 2.0)
        grid, config = toy_config(local_iters=1)
        return objective, config

    def test_midpoint_move(self):
        objective, config = self._setup()
        worst = np.array([[1.0, 0.0, 0.0, 1.0, 0.5]])
        best = np.array([[1.0, 0.0, 0.0, 1.0, 1.0]])
        frogs = np.stack([best, worst])
        fitness = np.array([objective(best), objective(worst)])

        class HalfRng:
            def random(self):
                return 0.5

            def normal(self, *a, **k):
                raise AssertionError("random replacement should not fire")

        new_frogs, new_fit = local_step(objective, frogs, fitness, best,
                                        HalfRng(), config)
        # worst moved halfway toward best in the power coordinate
        assert new_frogs[1, 0, 4] == pytest.approx(0.75)
        assert new_fit[1] < fitness[1]

    def test_zero_step_falls_through_to_replacement(self):
        objective, config = self._setup()
        frog = np.array([[1.0, 0.0, 0.0, 1.0, 1.0]])
        frogs = np.stack([frog, frog.copy()])
        fitness = np.array([objective(frog)] * 2)
        rng = np.random.default_rng(5)
        new_frogs, new_fit = local_step(objective, frogs, fitness, frog,
                                        rng, config)
        # identical best/worst/global leave a zero step; the stuck frog is
        # replaced and stays inside the search box
        changed = not np.allclose(new_frogs, frogs)
        assert changed
        box = config.search_box
        assert np.all(new_frogs >= box[:, 0] - 1e-12)
        assert np.all(new_frogs <= box[:, 1] + 1e-12)


class TestEstimate:
    def test_recovers_single_source(self):
        grid, config = toy_config(population=100, memeplexes=10,
                                  global_iters=120, seed=1)
        scene = Scene(grid, (TruthSource((102.5, 97.5, 12.5), 1.0),), 100.0)
        truth = generate_truth_grid(scene, UrbanPlParams(2.5, 0.0, 0.0, 100.0),
                                    seed=2)
        samples, _ = draw_samples(truth, SamplingPlan(0.1, seed=3))
        result = estimate_parameters(samples, 1, config, alpha=2.5)
        refined, fit = refine_sources(samples, result.sources, config,
                                      alpha=2.5)
        err = np.linalg.norm(np.asarray(refined[0].position)
                             - (102.5, 97.5, 12.5))
        assert fit <= result.fitness
        assert err < 12.0   # within one cell diagonal

    def test_trace_is_non_increasing(self):
        grid, config = toy_config(seed=3)
        scene = Scene(grid, (TruthSource((50, 50, 10), 1.0),), 100.0)
        truth = generate_truth_grid(scene, UrbanPlParams(2.0, 0.0, 2.0, 100.0),
                                    seed=4)
        samples, _ = draw_samples(truth, SamplingPlan(0.1, seed=5))
        result = estimate_parameters(samples, 2, config)
        best = result.trace[:, 1]
        assert np.all(np.diff(best) <= 1e-12)

    def test_deterministic_in_seed(self):
        grid, config = toy_config(seed=8, global_iters=15, patience=5)
        scene = Scene(grid, (TruthSource((50, 50, 10), 1.0),), 100.0)
        truth = generate_truth_grid(scene, UrbanPlParams(2.0, 0.0, 1.0, 100.0),
                                    seed=4)
        samples, _ = draw_samples(truth, SamplingPlan(0.05, seed=5))
        a = estimate_parameters(samples, 2, config)
        b = estimate_parameters(samples, 2, config)
        assert [s.position for s in a.sources] == [s.position for s in b.sources]
        assert a.fitness == b.fitness

    def test_sources_sorted_by_power(self):
        grid, config = toy_config(global_iters=5, patience=2, seed=2)
        scene = Scene(grid, (TruthSource((50, 50, 10), 1.0),
                             TruthSource((150, 150, 30), 0.2)), 100.0)
        truth = generate_truth_grid(scene, UrbanPlParams(2.0, 0.0, 0.0, 100.0),
                                    seed=4)
        samples, _ = draw_samples(truth, SamplingPlan(0.05, seed=5))
        result = estimate_parameters(samples, 3, config)
        powers = [s.power_watts for s in result.sources]
        assert powers == sorted(powers, reverse=True)

    def test_empty_samples_rejected(self):
        _, config = toy_config()
        with pytest.raises(ValueError):
            estimate_parameters([], 1, config)
        with pytest.raises(ValueError):
            estimate_parameters([Sample((0, 0, 1), -30.0)], 0, config)

    def test_genomes_stay_in_box(self):
        grid, config = toy_config(global_iters=10, patience=10, seed=6)
        scene = Scene(grid, (TruthSource((50, 50, 10), 1.0),), 100.0)
        truth = generate_truth_grid(scene, UrbanPlParams(2.0, 0.0, 3.0, 100.0),
                                    seed=4)
        samples, _ = draw_samples(truth, SamplingPlan(0.05, seed=5))
        result = estimate_parameters(samples, 2, config)
        arr = genome_to_array(result.sources)
        box = config.search_box
        assert np.all(arr >= box[:, 0] - 1e-9)
        assert np.all(arr <= box[:, 1] + 1e-9)


class TestCalibration:
    def test_predictions_invariant(self):
        sources = [SourceEstimate(3.7, (10, 20, 5), 0.4),
                   SourceEstimate(0.02, (100, 50, 8), 2.0)]
        calibrated = calibrate_powers(sources, 2.5, 100.0)
        pos = (40.0, 35.0, 3.0)
        before = predicted_rss_mw(sources, pos, 2.5)
        after = predicted_rss_mw(calibrated, pos, 2.5)
        assert after == pytest.approx(before, rel=1e-12)

    def test_free_space_constant(self):
        # at the pinned coefficient, 1 W at 1 km under alpha=2 reproduces
        # the 72.4 dB free-space loss at 100 MHz
        eta0 = calibrate_powers([SourceEstimate(1.0, (0, 0, 0), 1.0)],
                                2.0, 100.0)[0].eta
        source = SourceEstimate(eta0, (0, 0, 0), 1.0)
        rss = predicted_rss_mw([source], (1000.0, 0, 0), 2.0)
        assert 10 * np.log10(rss) == pytest.approx(30.0 - 72.4, abs=1e-9)

    def test_sorting_stable(self):
        sources = [SourceEstimate(1.0, (9, 9, 9), 1.0),
                   SourceEstimate(1.0, (1, 1, 1), 1.0)]
        assert [s.position for s in sort_sources(sources)] == [
            (1.0, 1.0, 1.0), (9.0, 9.0, 9.0)]

import numpy as np
import pytest

from rostexplore import evaluation
from rostexplore.core import UNLABELED, Labeling, make_rng
from rostexplore.evaluation import (ExperimentConfig, batch_oracle_labeling, entropy, mann_whitney,
                                    mutual_information, read_results_csv, restart_cells,
                                    run_experiment, write_results_csv, write_summary_csv)
from rostexplore.exploration import Policy
from rostexplore.topic_model import ModelConfig, RefinementConfig
from rostexplore.world import TerrainSpec, generate_synthetic_map, terrain_distributions


def _lab(a, k=None):
    a = np.asarray(a).reshape(1, -1)
    return Labeling(a, k or int(a.max()) + 1)


def _separable_map(size=16, seed=0):
    spec = TerrainSpec(terrain_distributions(2, 20, seed=seed), "regions", 15.0, n_regions=4)
    return generate_synthetic_map(spec, (size, size), seed=seed)


# -- mutual information ------------------------------------------------------------------

def test_identical_half_split_is_one_bit():
    a = _lab([0, 1] * 50)
    assert mutual_information(a, a) == 1.0


def test_symmetry_and_permutation():
    rng = make_rng(0)
    a, b = rng.integers(0, 3, 200), rng.integers(0, 4, 200)
    b[:100] = a[:100]
    mi = mutual_information(_lab(a), _lab(b))
    assert mi == pytest.approx(mutual_information(_lab(b), _lab(a)), abs=1e-15)
    perm = np.array([2, 0, 1])
    assert mutual_information(_lab(perm[a]), _lab(b)) == pytest.approx(mi, abs=1e-15)


def test_independent_labelings_near_zero():
    rng = make_rng(1)
    vals = [mutual_information(_lab(rng.integers(0, 4, 4096)), _lab(rng.integers(0, 4, 4096)))
            for _ in range(10)]
    assert max(vals) <= 0.05


def test_mi_bounded_by_entropies():
    rng = make_rng(2)
    for _ in range(20):
        a, b = _lab(rng.integers(0, 5, 300)), _lab(rng.integers(0, 2, 300))
        assert mutual_information(a, b) <= min(entropy(a), entropy(b)) + 1e-12


def test_unlabeled_cells_excluded_pairwise():
    a = _lab([0, 1, 0, 1, UNLABELED, 0], 2)
    b = _lab([5, 7, 5, 7, 5, UNLABELED], 8)
    assert mutual_information(a, b) == 1.0


def test_mi_errors():
    with pytest.raises(ValueError):
        mutual_information(_lab([UNLABELED, 0], 1), _lab([0, UNLABELED], 1))
    with pytest.raises(ValueError):
        mutual_information(_lab([0, 1]), _lab([0, 1, 1]))


def test_mann_whitney_separates_shifted_samples():
    rng = make_rng(3)
    assert mann_whitney(rng.normal(0, 1, 30), rng.normal(2, 1, 30)) < 0.001
    assert mann_whitney([1, 2, 3], [1, 2, 3]) == 1.0


# -- batch oracle ------------------------------------------------------------------------

def test_oracle_recovers_separable_map():
    world = _separable_map()
    z, _ = batch_oracle_labeling(world, ModelConfig(n_topics=8), 50, seed=0)
    gt = world.ground_truth_labeling()
    assert mutual_information(z, gt) >= 0.9 * entropy(gt)
    assert mutual_information(z, z) == pytest.approx(entropy(z))


def test_single_topic_oracle_has_zero_mi():
    world = _separable_map()
    z, _ = batch_oracle_labeling(world, ModelConfig(n_topics=1), 3, seed=0)
    assert mutual_information(z, world.ground_truth_labeling()) == 0.0


def test_oracle_deterministic():
    world = _separable_map(8)
    a, _ = batch_oracle_labeling(world, ModelConfig(n_topics=4), 5, seed=7)
    b, _ = batch_oracle_labeling(world, ModelConfig(n_topics=4), 5, seed=7)
    assert np.array_equal(a.labels, b.labels)


# -- experiment runner ------------------------------------------------------------------

def _small_cfg(**kw):
    base = dict(path_lengths=[5, 10], restarts=3, model=ModelConfig(n_topics=4),
                refine=RefinementConfig(sweeps_per_step=2), batch_iterations=5,
                fold_in_iterations=3, seed=1, record_timing=False)
    base.update(kw)
    return ExperimentConfig(**base)


def test_experiment_table_shape_and_csv(tmp_path):
    world = _separable_map(8)
    res = run_experiment(_small_cfg(), world)
    assert len(res.rows) == 4 * 2 * 3 and not res.failures
    assert res.values(Policy.RANDOM_WALK, 10).shape == (3,)
    write_results_csv(res, tmp_path / "r.csv")
    write_summary_csv(res, tmp_path / "s.csv")
    assert read_results_csv(tmp_path / "r.csv") == res.rows
    header = (tmp_path / "s.csv").read_text().splitlines()
    assert header[0].endswith("mi_units=bits") and len(header) == 2 + 8


def test_experiment_reproducible_and_parallel_safe(tmp_path):
    world = _separable_map(8)
    a = run_experiment(_small_cfg(), world)
    b = run_experiment(_small_cfg(workers=2), world)
    write_results_csv(a, tmp_path / "a.csv")
    write_results_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_zero_policies_give_empty_table():
    assert run_experiment(_small_cfg(policies=[]), _separable_map(8)).rows == []


def test_failed_run_is_recorded(monkeypatch):
    real = evaluation._run_job

    def flaky(world, cfg, policy, restart, *rest):
        if policy is Policy.WORD_PERPLEXITY and restart == 1:
            raise RuntimeError("boom")
        return real(world, cfg, policy, restart, *rest)

    monkeypatch.setattr(evaluation, "_run_job", flaky)
    res = run_experiment(_small_cfg(), _separable_map(8))
    assert len(res.failures) == 1 and "boom" in res.failures[0]
    assert len(res.rows) == (4 * 3 - 1) * 2


def test_restart_cells_are_occupied_and_seeded():
    world = _separable_map(8)
    cells = restart_cells(world, 20, seed=4)
    assert cells == restart_cells(world, 20, seed=4)
    assert all(world.cell_words(c.x, c.y).size for c in cells)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(restarts=0)
    assert ExperimentConfig().path_lengths == [10, 20, 40, 80, 160, 320]
    assert ExperimentConfig().restarts == 20

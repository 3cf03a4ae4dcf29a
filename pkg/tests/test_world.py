import numpy as np
import pytest

from rostexplore.core import UNLABELED, CellKey, make_rng
from rostexplore.world import (Codebook, TerrainSpec, WordMap, WordMapError, extract_patches,
                               generate_synthetic_map, load_word_map, observe, rare_trail_spec,
                               read_pgm, save_word_map, terrain_distributions, tokenize_image,
                               train_codebook, write_pgm)


def _small_map():
    cells = [np.array([0, 1, 1]), np.array([], int), np.array([5]), np.array([2, 3])]
    return WordMap(2, 2, 6, cells, np.array([[0, UNLABELED], [1, 1]]))


def test_word_map_round_trip(tmp_path):
    m = _small_map()
    save_word_map(m, tmp_path / "m.txt", tmp_path / "gt.txt")
    back = load_word_map(tmp_path / "m.txt", tmp_path / "gt.txt")
    assert back.V == 6 and (back.width, back.height) == (2, 2)
    assert all(np.array_equal(a, b) for a, b in zip(m.cells, back.cells))
    assert np.array_equal(back.ground_truth, m.ground_truth)
    assert back.n_words() == 6


def test_explicit_empty_cell_rows_are_allowed(tmp_path):
    (tmp_path / "m.txt").write_text("V 4 WIDTH 2 HEIGHT 1\n0 0 :\n1 0 : 3 3\n")
    m = load_word_map(tmp_path / "m.txt")
    assert m.cell_words(0, 0).size == 0 and m.cell_words(1, 0).tolist() == [3, 3]


def test_split_vocabulary_header(tmp_path):
    (tmp_path / "m.txt").write_text(
        "V 6000 WIDTH 2 HEIGHT 1\nRANGE orb 0 5000\nRANGE texton 5000 6000\n0 0 : 17 5999\n")
    m = load_word_map(tmp_path / "m.txt")
    assert m.vocab.ranges == {"orb": (0, 5000), "texton": (5000, 6000)}
    assert len(m.vocab.range_of("orb")) == 5000


@pytest.mark.parametrize("body, line", [
    ("V 4 WIDTH 2 HEIGHT 1\n0 0 : 4\n", 2),
    ("V 4 WIDTH 2 HEIGHT 1\n\n2 0 : 1\n", 3),
    ("V 4 WIDTH 2 HEIGHT 1\n0 0 1\n", 2),
    ("V 4 WIDTH 2\n", 1),
    ("V 4 WIDTH 2 HEIGHT 1\n0 0 : 1\n0 0 : 2\n", 3),
])
def test_malformed_files_report_line(tmp_path, body, line):
    (tmp_path / "m.txt").write_text(body)
    with pytest.raises(WordMapError, match=f":{line}:"):
        load_word_map(tmp_path / "m.txt")


def test_ground_truth_must_cover_words():
    with pytest.raises(WordMapError):
        WordMap(2, 1, 3, [np.array([1]), np.array([2])], np.array([[0, UNLABELED]]))


def test_observe():
    m = _small_map()
    assert observe(m, CellKey(1, 0)).size == 0
    assert np.array_equal(observe(m, CellKey(0, 0)), observe(m, CellKey(0, 0)))
    with pytest.raises(IndexError):
        observe(m, CellKey(2, 0))


def test_pgm_round_trip(tmp_path):
    img = make_rng(0).integers(0, 256, (7, 9)).astype(np.uint8)
    write_pgm(img, tmp_path / "a.pgm")
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5")
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), img)


# -- codebook ------------------------------------------------------------------------

def _two_tone(h=32, w=32):
    img = np.full((h, w), 40, np.uint8)
    img[:, w // 2:] = 200
    return img


def test_single_centroid_is_mean_patch():
    img = make_rng(1).integers(0, 256, (12, 12)).astype(np.uint8)
    cb = train_codebook([img], 1, patch_size=3, seed=0, iterations=3)
    assert np.allclose(cb.centroids[0], extract_patches(img, 3)[0].mean(axis=0), atol=1e-4)


def test_two_tone_centroids():
    cb = train_codebook([_two_tone()], 2, patch_size=3, seed=0)
    means = np.sort(cb.centroids.mean(axis=1))
    assert abs(means[0] - 40) < 15 and abs(means[1] - 200) < 15


def test_quantization_error_never_increases():
    img = make_rng(2).integers(0, 256, (40, 40)).astype(np.uint8)
    cb = train_codebook([img], 8, patch_size=3, seed=1, iterations=10)
    assert all(b <= a + 1e-9 for a, b in zip(cb.errors, cb.errors[1:]))


def test_codebook_is_seeded():
    img = make_rng(3).integers(0, 256, (30, 30)).astype(np.uint8)
    a = train_codebook([img], 4, patch_size=3, seed=9, iterations=4)
    b = train_codebook([img], 4, patch_size=3, seed=9, iterations=4)
    assert np.array_equal(a.centroids, b.centroids)


def test_too_few_distinct_patches():
    with pytest.raises(ValueError):
        train_codebook([np.zeros((10, 10), np.uint8)], 2, patch_size=3)


# -- tokenization ------------------------------------------------------------------

def test_uniform_image_gives_one_word():
    cb = Codebook(np.array([[0.0] * 9, [255.0] * 9], np.float32), 3)
    m = tokenize_image(np.full((32, 32), 250, np.uint8), cb, 16)
    assert all(set(c.tolist()) == {1} for c in m.cells)
    assert all(c.size == 256 for c in m.cells)


def test_large_image_cell_count():
    cb = Codebook(np.array([[0.0], [255.0]], np.float32), 1)
    m = tokenize_image(np.zeros((1024, 1024), np.uint8), cb, 16, stride=64)
    assert m.width * m.height == 4096


def test_stride_two_halves_words():
    cb = train_codebook([_two_tone()], 2, patch_size=3, seed=0)
    full = tokenize_image(_two_tone(), cb, 16, stride=1)
    half = tokenize_image(_two_tone(), cb, 16, stride=2)
    assert half.n_words() * 2 == full.n_words()
    assert all(abs(2 * b.size - a.size) <= 1 for a, b in zip(full.cells, half.cells))


def test_image_smaller_than_cell():
    cb = Codebook(np.zeros((1, 1), np.float32), 1)
    with pytest.raises(ValueError):
        tokenize_image(np.zeros((8, 8), np.uint8), cb, 16)


# -- synthetic maps ------------------------------------------------------------------

def test_single_terrain_ground_truth():
    spec = TerrainSpec(terrain_distributions(1, 10, seed=0), "single", 5.0)
    m = generate_synthetic_map(spec, (8, 8), seed=0)
    assert set(m.ground_truth[m.ground_truth != UNLABELED].tolist()) == {0}


def test_disjoint_terrains_are_separable():
    spec = TerrainSpec(terrain_distributions(2, 20, seed=1), "regions", 10.0, n_regions=6)
    m = generate_synthetic_map(spec, (16, 16), seed=1)
    support = [set(np.flatnonzero(d).tolist()) for d in spec.distributions]
    assert not support[0] & support[1]
    for y in range(16):
        for x in range(16):
            w = m.cell_words(x, y)
            if w.size:
                guess = int(np.isin(w, list(support[1])).mean() > 0.5)
                assert guess == m.ground_truth[y, x]


def test_rare_trail_word_frequency():
    for seed in range(5):
        spec = rare_trail_spec(4, vocab_size=80, words_per_cell=30, seed=seed, shared_fraction=0.0)
        m = generate_synthetic_map(spec, (64, 64), seed=seed)
        gt = m.ground_truth
        trail = gt == 3
        frac_cells = trail.mean()
        assert 0.01 < frac_cells <= 0.05
        trail_words = set(np.flatnonzero(spec.distributions[3]).tolist())
        words = np.concatenate(m.cells)
        freq = np.isin(words, list(trail_words)).mean()
        sigma = np.sqrt(frac_cells * (1 - frac_cells) / trail.sum())
        assert abs(freq - frac_cells) < 0.2 * frac_cells + 3 * sigma


def test_total_words_match_rate():
    spec = rare_trail_spec(4, vocab_size=50, words_per_cell=12, seed=0)
    m = generate_synthetic_map(spec, (32, 32), seed=0)
    n = 32 * 32
    assert abs(m.n_words() - 12 * n) < 4 * np.sqrt(12 * n)


def test_generation_is_seeded():
    spec = rare_trail_spec(seed=2)
    a = generate_synthetic_map(spec, (20, 20), seed=5)
    b = generate_synthetic_map(spec, (20, 20), seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a.cells, b.cells))


def test_bad_terrain_spec():
    with pytest.raises(ValueError):
        TerrainSpec(np.array([[0.5, 0.4]]))
    with pytest.raises(ValueError):
        TerrainSpec(np.array([[1.0]]), "rare_trail")

"""Word maps: file ingestion, image tokenization and synthetic terrain.

Word-map file (text, one record per line, ``#`` starts a comment)::

    V <int> WIDTH <int> HEIGHT <int>
    RANGE <name> <start> <stop>        optional, any number, before cell lines
    <x> <y> : <w1> <w2> ...            one line per cell; cells not listed are empty

Ground-truth file::

    <x> <y> <label>                    one line per labeled cell

Images are 8-bit grayscale binary PGM (P5).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image
from scipy.cluster.vq import vq

from .core import UNLABELED, CellKey, GridBounds, Labeling, Vocabulary, make_rng


class WordMapError(ValueError):
    """Malformed word-map or ground-truth input."""


@dataclass
class WordMap:
    width: int
    height: int
    vocab: Vocabulary | int
    cells: list[np.ndarray]
    ground_truth: np.ndarray | None = None

    def __post_init__(self):
        if len(self.cells) != self.width * self.height:
            raise WordMapError("cell list does not match grid dimensions")
        if isinstance(self.vocab, int):
            self.vocab = Vocabulary(self.vocab)
        self.cells = [self.vocab.validate(c) for c in self.cells]
        if self.ground_truth is not None:
            gt = np.asarray(self.ground_truth, dtype=np.int64)
            if gt.shape != (self.height, self.width):
                raise WordMapError("ground truth shape does not match grid")
            for (y, x) in zip(*np.nonzero(gt == UNLABELED)):
                if self.cells[y * self.width + x].size:
                    raise WordMapError(f"ground truth missing for non-empty cell ({x}, {y})")
            self.ground_truth = gt

    @classmethod
    def empty(cls, width: int, height: int, vocab_size: int = 1) -> "WordMap":
        return cls(width, height, Vocabulary(vocab_size),
                   [np.empty(0, np.int32) for _ in range(width * height)])

    @property
    def bounds(self) -> GridBounds:
        return GridBounds(self.width, self.height, 1)

    @property
    def V(self) -> int:
        return self.vocab.size

    def cell_words(self, x: int, y: int) -> np.ndarray:
        return self.cells[y * self.width + x]

    def n_words(self) -> int:
        return int(sum(c.size for c in self.cells))

    def ground_truth_labeling(self) -> Labeling | None:
        if self.ground_truth is None:
            return None
        return Labeling(self.ground_truth, int(self.ground_truth.max()) + 1)


def observe(world: WordMap, c: CellKey) -> np.ndarray:
    """Words seen at cell ``c`` of a static map (time is ignored)."""
    if not (0 <= c.x < world.width and 0 <= c.y < world.height):
        raise IndexError(f"{c} outside {world.width}x{world.height} map")
    return world.cell_words(c.x, c.y)


# -- text formats ------------------------------------------------------------------

def _content_lines(path):
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield n, line


def load_word_map(path: str | Path, ground_truth: str | Path | None = None) -> WordMap:
    lines = _content_lines(path)
    try:
        n, header = next(lines)
    except StopIteration:
        raise WordMapError(f"{path}: empty file") from None
    tok = header.split()
    if len(tok) != 6 or tok[0::2] != ["V", "WIDTH", "HEIGHT"]:
        raise WordMapError(f"{path}:{n}: expected 'V <int> WIDTH <int> HEIGHT <int>'")
    try:
        V, width, height = int(tok[1]), int(tok[3]), int(tok[5])
    except ValueError:
        raise WordMapError(f"{path}:{n}: non-integer header field") from None
    if V <= 0 or width <= 0 or height <= 0:
        raise WordMapError(f"{path}:{n}: header values must be positive")
    ranges: dict[str, tuple[int, int]] = {}
    cells: list[np.ndarray | None] = [None] * (width * height)
    for n, line in lines:
        if line.startswith("RANGE"):
            parts = line.split()
            if len(parts) != 4 or any(c is not None for c in cells):
                raise WordMapError(f"{path}:{n}: RANGE must be 'RANGE name start stop' before cells")
            lo, hi = int(parts[2]), int(parts[3])
            if not 0 <= lo < hi <= V:
                raise WordMapError(f"{path}:{n}: range outside vocabulary")
            ranges[parts[1]] = (lo, hi)
            continue
        head, sep, body = line.partition(":")
        try:
            x, y = (int(s) for s in head.split())
            words = np.array([int(s) for s in body.split()], dtype=np.int64)
        except ValueError:
            raise WordMapError(f"{path}:{n}: expected '<x> <y> : <words>'") from None
        if not sep:
            raise WordMapError(f"{path}:{n}: missing ':' separator")
        if not (0 <= x < width and 0 <= y < height):
            raise WordMapError(f"{path}:{n}: cell ({x}, {y}) outside {width}x{height} grid")
        if words.size and (words.min() < 0 or words.max() >= V):
            raise WordMapError(f"{path}:{n}: word id outside vocabulary [0, {V})")
        if cells[y * width + x] is not None:
            raise WordMapError(f"{path}:{n}: duplicate cell ({x}, {y})")
        cells[y * width + x] = words.astype(np.int32)
    filled = [c if c is not None else np.empty(0, np.int32) for c in cells]
    gt = load_ground_truth(ground_truth, width, height) if ground_truth is not None else None
    try:
        return WordMap(width, height, Vocabulary(V, ranges), filled, gt)
    except WordMapError as e:
        raise WordMapError(f"{ground_truth}: {e}") from None


def save_word_map(world: WordMap, path: str | Path, ground_truth: str | Path | None = None) -> None:
    out = [f"V {world.V} WIDTH {world.width} HEIGHT {world.height}"]
    out += [f"RANGE {name} {lo} {hi}" for name, (lo, hi) in world.vocab.ranges.items()]
    for y in range(world.height):
        for x in range(world.width):
            w = world.cell_words(x, y)
            if w.size:
                out.append(f"{x} {y} : " + " ".join(map(str, w.tolist())))
    Path(path).write_text("\n".join(out) + "\n")
    if ground_truth is not None:
        if world.ground_truth is None:
            raise WordMapError("map has no ground truth to save")
        save_ground_truth(world.ground_truth, ground_truth)


def load_ground_truth(path: str | Path, width: int, height: int) -> np.ndarray:
    gt = np.full((height, width), UNLABELED, dtype=np.int64)
    for n, line in _content_lines(path):
        try:
            x, y, label = (int(s) for s in line.split())
        except ValueError:
            raise WordMapError(f"{path}:{n}: expected '<x> <y> <label>'") from None
        if not (0 <= x < width and 0 <= y < height) or label < 0:
            raise WordMapError(f"{path}:{n}: bad cell or label")
        gt[y, x] = label
    return gt


def save_ground_truth(gt: np.ndarray, path: str | Path) -> None:
    h, w = gt.shape
    rows = [f"{x} {y} {int(gt[y, x])}" for y in range(h) for x in range(w) if gt[y, x] != UNLABELED]
    Path(path).write_text("\n".join(rows) + ("\n" if rows else ""))


def read_pgm(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        if im.format != "PPM" or im.mode != "L":
            raise WordMapError(f"{path}: not an 8-bit grayscale PGM")
        return np.asarray(im, dtype=np.uint8).copy()


def write_pgm(image: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="L").save(path, format="PPM")


# -- patch quantizer -------------------------------------------------------------

@dataclass
class Codebook:
    centroids: np.ndarray           # (k, patch_size**2) float32
    patch_size: int
    stride: int = 1
    errors: list[float] = field(default_factory=list)   # mean squared error per k-means iteration

    @property
    def size(self) -> int:
        return self.centroids.shape[0]


def _patch_view(image: np.ndarray, patch_size: int) -> np.ndarray:
    half = patch_size // 2
    padded = np.pad(np.asarray(image, dtype=np.float32), ((half, patch_size - 1 - half),) * 2, mode="edge")
    return np.lib.stride_tricks.sliding_window_view(padded, (patch_size, patch_size))


def extract_patches(image: np.ndarray, patch_size: int, stride: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Patches centred on every ``stride``-th pixel in raster order.

    Returns the (n, patch_size**2) patch matrix and the (n, 2) ``(x, y)`` centres.
    """
    image = np.asarray(image)
    h, w = image.shape
    flat = np.arange(0, h * w, stride)
    ys, xs = np.divmod(flat, w)
    view = _patch_view(image, patch_size)
    patches = view[ys, xs].reshape(flat.size, patch_size * patch_size)
    return patches, np.stack([xs, ys], axis=1)


def train_codebook(images: Sequence[np.ndarray], k: int, patch_size: int = 5, seed: int = 0,
                   iterations: int = 20, max_patches: int = 20000, stride: int = 1) -> Codebook:
    """Lloyd k-means over patches sampled from ``images``.

    Initial centroids are ``k`` distinct patches chosen with the seeded RNG;
    exactly ``iterations`` assignment/update rounds run.
    """
    rng = make_rng(seed)
    pool = np.concatenate([extract_patches(im, patch_size)[0] for im in images])
    if pool.shape[0] > max_patches:
        pool = pool[np.sort(rng.choice(pool.shape[0], max_patches, replace=False))]
    distinct = np.unique(pool, axis=0)
    if distinct.shape[0] < k:
        raise ValueError(f"only {distinct.shape[0]} distinct patches for k={k}")
    centroids = distinct[rng.choice(distinct.shape[0], k, replace=False)].astype(np.float64)
    data = pool.astype(np.float64)
    errors = []
    for _ in range(iterations):
        code, dist = vq(data, centroids)
        errors.append(float(np.mean(dist ** 2)))
        for j in range(k):
            members = data[code == j]
            if members.size:
                centroids[j] = members.mean(axis=0)
    code, dist = vq(data, centroids)
    errors.append(float(np.mean(dist ** 2)))
    return Codebook(centroids.astype(np.float32), patch_size, stride, errors)


def tokenize_image(image: np.ndarray, codebook: Codebook, cell_width: int,
                   stride: int | None = None) -> WordMap:
    """Quantize patches to their nearest centroid and bucket the words by cell."""
    image = np.asarray(image)
    h, w = image.shape
    if h < cell_width or w < cell_width:
        raise ValueError("image smaller than one cell")
    stride = codebook.stride if stride is None else stride
    bounds_w, bounds_h = -(-w // cell_width), -(-h // cell_width)
    buckets: list[list[np.ndarray]] = [[] for _ in range(bounds_w * bounds_h)]
    # row bands keep the patch matrix small on large images
    band = max(1, 65536 // w)
    for y0 in range(0, h, band):
        y1 = min(h, y0 + band)
        flat = np.arange(y0 * w, y1 * w)
        flat = flat[flat % stride == 0]
        ys, xs = np.divmod(flat, w)
        view = _patch_view(image, codebook.patch_size)
        patches = view[ys, xs].reshape(flat.size, -1)
        code, _ = vq(patches, codebook.centroids)
        cell = (ys // cell_width) * bounds_w + xs // cell_width
        order = np.argsort(cell, kind="stable")
        cell, code = cell[order], code[order]
        cuts = np.flatnonzero(np.diff(cell)) + 1
        for seg_cell, seg in zip(cell[np.r_[0, cuts]], np.split(code, cuts)):
            buckets[seg_cell].append(seg)
    cells = [np.concatenate(b).astype(np.int32) if b else np.empty(0, np.int32) for b in buckets]
    return WordMap(bounds_w, bounds_h, Vocabulary(codebook.size), cells)


# -- synthetic terrain -------------------------------------------------------------

@dataclass
class TerrainSpec:
    """Per-terrain word distributions plus a spatial layout recipe.

    ``layout`` is one of ``"single"`` (terrain 0 everywhere), ``"regions"``
    (Voronoi patches over all terrains) or ``"rare_trail"`` (Voronoi patches of
    terrains ``0..n-2`` crossed by a one-cell-wide meandering trail of the last
    terrain).  ``words_per_cell`` is a Poisson rate.
    """

    distributions: np.ndarray
    layout: str = "regions"
    words_per_cell: float = 32.0
    n_regions: int = 12

    def __post_init__(self):
        d = np.asarray(self.distributions, dtype=np.float64)
        if d.ndim != 2 or (d < 0).any() or not np.allclose(d.sum(axis=1), 1.0):
            raise ValueError("terrain distributions must be rows summing to 1")
        if self.layout not in ("single", "regions", "rare_trail"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.layout == "rare_trail" and d.shape[0] < 2:
            raise ValueError("rare_trail needs at least two terrains")
        self.distributions = d

    @property
    def n_terrains(self) -> int:
        return self.distributions.shape[0]

    @property
    def V(self) -> int:
        return self.distributions.shape[1]


def terrain_distributions(n_terrains: int, vocab_size: int, seed: int = 0,
                          shared_fraction: float = 0.0, concentration: float = 1.0) -> np.ndarray:
    """Random word distributions with disjoint private supports.

    The vocabulary is split into a shared block (``shared_fraction`` of V,
    usable by every terrain) and equal private blocks.  Weights within a
    support are Dirichlet(``concentration``); a terrain puts
    ``shared_fraction`` of its mass on the shared block.  With
    ``shared_fraction=1`` every terrain is Dirichlet over the whole vocabulary.
    """
    rng = make_rng(seed)
    if shared_fraction >= 1.0:
        return rng.dirichlet(np.full(vocab_size, concentration), size=n_terrains)
    n_shared = int(round(shared_fraction * vocab_size))
    per = (vocab_size - n_shared) // n_terrains
    if per < 1:
        raise ValueError("vocabulary too small for private supports")
    out = np.zeros((n_terrains, vocab_size))
    for i in range(n_terrains):
        lo = n_shared + i * per
        out[i, lo:lo + per] = rng.dirichlet(np.full(per, concentration)) * (1.0 - shared_fraction)
        if n_shared:
            out[i, :n_shared] = rng.dirichlet(np.full(n_shared, concentration)) * shared_fraction
    return out / out.sum(axis=1, keepdims=True)


def _voronoi(width, height, n_sites, n_labels, rng):
    sites = rng.random((n_sites, 2)) * [width, height]
    ys, xs = np.mgrid[0:height, 0:width]
    pts = np.stack([xs.ravel() + 0.5, ys.ravel() + 0.5], axis=1)
    nearest = np.argmin(((pts[:, None, :] - sites[None]) ** 2).sum(-1), axis=1)
    site_label = np.arange(n_sites) % n_labels
    rng.shuffle(site_label)
    return site_label[nearest].reshape(height, width)


def _trail(width, height, rng):
    # left-to-right walk with vertical drift; one cell wide, 4-connected
    cells = []
    y = int(rng.integers(height // 4, 3 * height // 4 + 1))
    for x in range(width):
        cells.append((x, y))
        if x + 1 < width:
            dy = int(rng.choice([-1, 0, 0, 1]))
            if 0 <= y + dy < height and dy:
                y += dy
                cells.append((x, y))
    return cells


def layout_terrain(spec: TerrainSpec, width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    if spec.layout == "single":
        return np.zeros((height, width), dtype=np.int64)
    if spec.layout == "regions":
        return _voronoi(width, height, max(spec.n_regions, spec.n_terrains), spec.n_terrains, rng)
    base = spec.n_terrains - 1
    grid = _voronoi(width, height, max(spec.n_regions, base), base, rng)
    for x, y in _trail(width, height, rng):
        grid[y, x] = base
    return grid


def generate_synthetic_map(spec: TerrainSpec, dims: tuple[int, int], seed: int) -> WordMap:
    """Draw a map whose cells hold i.i.d. words of their terrain; ground truth is the terrain id."""
    width, height = dims
    rng = make_rng(seed)
    terrain = layout_terrain(spec, width, height, rng)
    counts = rng.poisson(spec.words_per_cell, size=width * height)
    cells = []
    for idx in range(width * height):
        dist = spec.distributions[terrain.flat[idx]]
        cells.append(rng.choice(spec.V, size=counts[idx], p=dist).astype(np.int32))
    gt = terrain.copy()
    gt.flat[counts == 0] = UNLABELED
    return WordMap(width, height, Vocabulary(spec.V), cells, gt)


def rare_trail_spec(n_terrains: int = 4, vocab_size: int = 200, words_per_cell: float = 32.0,
                    seed: int = 0, shared_fraction: float = 1.0, n_regions: int = 12,
                    concentration: float = 1.0) -> TerrainSpec:
    """The default synthetic family: Voronoi terrains crossed by a rare thin trail."""
    return TerrainSpec(terrain_distributions(n_terrains, vocab_size, seed, shared_fraction, concentration),
                       "rare_trail", words_per_cell, n_regions)

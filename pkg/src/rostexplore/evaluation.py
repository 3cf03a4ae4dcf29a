"""Mutual-information evaluation of exploration policies.

All information quantities are in bits.  Cells unlabeled in either labeling
are dropped pairwise before counting.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .core import UNLABELED, CellKey, Labeling, derive_seed, make_rng
from .exploration import Policy, run_exploration
from .topic_model import (ModelConfig, RefinementConfig, TopicModel, batch_refine, fold_in_label,
                          model_labeling)
from .world import WordMap

logger = logging.getLogger(__name__)

RESULTS_SCHEMA = "# rostexplore-results v1 mi_units=bits"
SUMMARY_SCHEMA = "# rostexplore-summary v1 mi_units=bits"
POLICY_ORDER = list(Policy)


def _paired(a: Labeling, b: Labeling) -> tuple[np.ndarray, np.ndarray]:
    if a.shape != b.shape:
        raise ValueError(f"labelings on different grids: {a.shape} vs {b.shape}")
    la, lb = a.labels.ravel(), b.labels.ravel()
    keep = (la != UNLABELED) & (lb != UNLABELED)
    if not keep.any():
        raise ValueError("labelings share no labeled cell")
    return la[keep], lb[keep]


def _entropy_of(labels: np.ndarray) -> float:
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def entropy(a: Labeling) -> float:
    la = a.labels.ravel()
    la = la[la != UNLABELED]
    if la.size == 0:
        raise ValueError("labeling has no labeled cell")
    return _entropy_of(la)


def mutual_information(a: Labeling, b: Labeling) -> float:
    """Mutual information of the joint empirical label distribution, in bits."""
    la, lb = _paired(a, b)
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    joint = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(joint, (ia, ib), 1.0)
    n = joint.sum()
    pa = joint.sum(axis=1) / n
    pb = joint.sum(axis=0) / n
    nz = joint > 0
    pj = joint[nz] / n
    mi = float((pj * np.log2(pj / np.outer(pa, pb)[nz])).sum())
    return max(mi, 0.0)


def mann_whitney(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided Mann-Whitney U p-value."""
    return float(stats.mannwhitneyu(a, b, alternative="two-sided").pvalue)


def batch_oracle_labeling(world: WordMap, model_cfg: ModelConfig, iterations: int,
                          seed: int) -> tuple[Labeling, TopicModel]:
    """Label the map with random access to all of it: add every cell, run batch sweeps."""
    model = TopicModel.from_config(model_cfg, world.V, world.bounds)
    rng = make_rng(seed)
    for y in range(world.height):
        for x in range(world.width):
            model.add_observation(CellKey(x, y), world.cell_words(x, y), rng)
    batch_refine(model, iterations, rng)
    return model_labeling(model, world.width, world.height), model


@dataclass
class ExperimentConfig:
    policies: list[Policy] = field(default_factory=lambda: list(Policy))
    path_lengths: list[int] = field(default_factory=lambda: [10, 20, 40, 80, 160, 320])
    restarts: int = 20
    model: ModelConfig = field(default_factory=ModelConfig)
    refine: RefinementConfig = field(default_factory=RefinementConfig)
    batch_iterations: int = 100
    fold_in_iterations: int = 50
    gamma: float = 1.0
    seed: int = 0
    workers: int = 1
    map_name: str = "map"
    record_timing: bool = True

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if any(n <= 0 for n in self.path_lengths):
            raise ValueError("path lengths must be positive")
        self.policies = [Policy(p) for p in self.policies]


@dataclass
class RunRow:
    map: str
    policy: str
    path_len: int
    restart: int
    mi_vs_batch: float | None
    mi_vs_gt: float | None
    runtime_ms: float | None


@dataclass
class ExperimentResult:
    rows: list[RunRow]
    batch_labeling: Labeling | None
    failures: list[str] = field(default_factory=list)

    def values(self, policy, path_len: int, column: str = "mi_vs_gt") -> np.ndarray:
        p = Policy(policy).value
        return np.array([getattr(r, column) for r in self.rows
                         if r.policy == p and r.path_len == path_len and getattr(r, column) is not None])

    def summary(self) -> list[dict]:
        cases: dict[tuple[str, int], list[RunRow]] = {}
        for r in self.rows:
            cases.setdefault((r.policy, r.path_len), []).append(r)
        out = []
        for (policy, n), rows in cases.items():
            rec = {"map": rows[0].map, "policy": policy, "path_len": n, "runs": len(rows)}
            for col in ("mi_vs_batch", "mi_vs_gt"):
                v = np.array([getattr(r, col) for r in rows if getattr(r, col) is not None])
                rec[col + "_mean"] = float(v.mean()) if v.size else None
                rec[col + "_std"] = float(v.std(ddof=1)) if v.size > 1 else (0.0 if v.size else None)
            out.append(rec)
        return out


def restart_cells(world: WordMap, restarts: int, seed: int) -> list[CellKey]:
    """Start cells shared by every policy and path length (paired design)."""
    rng = make_rng(seed, 1000)
    occupied = [(x, y) for y in range(world.height) for x in range(world.width) if world.cell_words(x, y).size]
    pool = occupied or [(x, y) for y in range(world.height) for x in range(world.width)]
    idx = rng.choice(len(pool), size=restarts, replace=len(pool) < restarts)
    return [CellKey(*pool[i]) for i in idx]


def _run_job(world: WordMap, cfg: ExperimentConfig, policy: Policy, restart: int, start: CellKey,
             z_batch: Labeling | None, gt: Labeling | None) -> list[RunRow]:
    pi = POLICY_ORDER.index(policy)
    rows: list[RunRow] = []

    def score(n, model, path, elapsed_ms):
        t0 = time.perf_counter()
        z = fold_in_label(world, model, cfg.fold_in_iterations, make_rng(cfg.seed, 3, pi, restart, n))
        mi_b = mutual_information(z, z_batch) if z_batch is not None else None
        mi_g = mutual_information(z, gt) if gt is not None else None
        runtime = elapsed_ms + (time.perf_counter() - t0) * 1000.0 if cfg.record_timing else None
        rows.append(RunRow(cfg.map_name, policy.value, n, restart, mi_b, mi_g, runtime))

    lengths = sorted(set(cfg.path_lengths))
    run_exploration(world, policy, lengths[-1], cfg.model, cfg.refine,
                    derive_seed(cfg.seed, 2, pi, restart), start=start, gamma=cfg.gamma,
                    snapshots=lengths, on_snapshot=score)
    return rows


def run_experiment(cfg: ExperimentConfig, world: WordMap) -> ExperimentResult:
    """Explore from every restart under every policy and score the learned models.

    One exploration per (policy, restart) runs to the longest path length;
    the model at each shorter length is scored along the way, which equals a
    separate run of that length.  Each model labels the whole map by fold-in
    and is compared with the batch labeling and the ground truth.
    """
    if not cfg.policies:
        return ExperimentResult([], None)
    z_batch, _ = batch_oracle_labeling(world, cfg.model, cfg.batch_iterations, derive_seed(cfg.seed, 1))
    gt = world.ground_truth_labeling()
    starts = restart_cells(world, cfg.restarts, cfg.seed)
    jobs = [(p, r) for p in cfg.policies for r in range(cfg.restarts)]
    rows: list[RunRow] = []
    failures: list[str] = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            futs = [pool.submit(_run_job, world, cfg, p, r, starts[r], z_batch, gt) for p, r in jobs]
            for (p, r), f in zip(jobs, futs):
                try:
                    rows.extend(f.result())
                except Exception as e:  # noqa: BLE001 - a failed run is recorded, not fatal
                    failures.append(f"{p.value} restart {r}: {e!r}")
    else:
        for p, r in jobs:
            try:
                rows.extend(_run_job(world, cfg, p, r, starts[r], z_batch, gt))
            except Exception as e:  # noqa: BLE001
                failures.append(f"{p.value} restart {r}: {e!r}")
    for f in failures:
        logger.error("run failed: %s", f)
    order = {p: i for i, p in enumerate(cfg.policies)}
    rows.sort(key=lambda r: (order[Policy(r.policy)], r.path_len, r.restart))
    return ExperimentResult(rows, z_batch, failures)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def write_results_csv(result: ExperimentResult, path: str | Path) -> None:
    cols = ["map", "policy", "path_len", "restart", "mi_vs_batch", "mi_vs_gt", "runtime_ms"]
    lines = [RESULTS_SCHEMA, ",".join(cols)]
    for r in result.rows:
        lines.append(",".join(_fmt(getattr(r, c)) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n")


def write_summary_csv(result: ExperimentResult, path: str | Path) -> None:
    cols = ["map", "policy", "path_len", "runs", "mi_vs_batch_mean", "mi_vs_batch_std",
            "mi_vs_gt_mean", "mi_vs_gt_std"]
    lines = [SUMMARY_SCHEMA, ",".join(cols)]
    for rec in result.summary():
        lines.append(",".join(_fmt(rec[c]) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n")


def read_results_csv(path: str | Path) -> list[RunRow]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != RESULTS_SCHEMA:
        raise ValueError(f"{path}: unknown results schema")
    rows = []
    for line in lines[2:]:
        m, p, n, r, b, g, t = line.split(",")
        rows.append(RunRow(m, p, int(n), int(r), float(b) if b else None,
                           float(g) if g else None, float(t) if t else None))
    return rows

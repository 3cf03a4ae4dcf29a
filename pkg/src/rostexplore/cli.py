"""Command-line entry point.

Every command writes ``manifest.txt`` into its output directory before doing
any work.  ``rostexplore replay <manifest>`` re-runs the command from it.
Runs with a fixed refinement draw count (``--sweeps``) are deterministic; for
time-budgeted runs the number of draws made at each step is saved next to
the outputs and replay reuses it, so the replay is byte-identical too.

Exit codes: 0 success, 2 bad configuration or arguments, 3 I/O failure,
4 runtime failure.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import UNLABELED, CellKey, GridBounds, Labeling, NeighborhoodConfig, Vocabulary, make_rng
from .evaluation import (ExperimentConfig, mutual_information, run_experiment, write_results_csv,
                         write_summary_csv)
from .exploration import Policy, run_exploration, write_trace_csv
from .perplexity import curiosity_decay, topic_perplexity, word_perplexity
from .topic_model import (ModelConfig, RefinementConfig, TopicModel, fold_in_label, load_checkpoint,
                          realtime_refine, save_checkpoint)
from .world import (TerrainSpec, WordMapError, generate_synthetic_map, load_word_map, rare_trail_spec,
                    save_ground_truth, save_word_map, terrain_distributions, write_pgm)

logger = logging.getLogger("rostexplore")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_RUNTIME = 0, 2, 3, 4

POLICY_NAMES = [p.value for p in Policy]


class ConfigError(ValueError):
    pass


# -- key = value files -------------------------------------------------------------

def read_kv(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment; later keys win."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def write_kv(items: dict[str, object], path: str | Path, title: str) -> None:
    lines = [f"# {title}"] + [f"{k} = {v}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(args, argv: list[str], out: Path, inputs: dict[str, str], resolved: dict) -> None:
    items: dict[str, object] = {"tool_version": __version__, "command": args.command,
                                "argv": shlex.join(argv)}
    if getattr(args, "config", None):
        inputs = {"config": args.config, **inputs}
    for name, path in inputs.items():
        items[f"input.{name}"] = path
        items[f"input.{name}.sha256"] = _sha256(path)
    items.update({f"config.{k}": v for k, v in resolved.items()})
    write_kv(items, out / "manifest.txt", "rostexplore run manifest")


# -- shared options ------------------------------------------------------------------

def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--topics", type=int, default=64, help="number of topics K")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--eta", type=float, default=0.5, help="refinement bias")
    p.add_argument("--budget-ms", type=float, default=200.0, help="refinement time per step")
    p.add_argument("--sweeps", type=int, default=None,
                   help="fixed refinement draws per step (overrides the time budget)")
    p.add_argument("--gamma", type=float, default=1.0, help="curiosity decay per revisit")
    p.add_argument("--radius", type=int, default=1, help="spatial neighborhood radius")
    p.add_argument("--depth", type=int, default=1, help="temporal neighborhood depth")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="key = value file; explicit flags override it")


def _configs(args) -> tuple[ModelConfig, RefinementConfig]:
    try:
        model = ModelConfig(args.topics, args.alpha, args.beta, NeighborhoodConfig(args.radius, args.depth))
        refine = RefinementConfig(args.eta, args.budget_ms, sweeps_per_step=args.sweeps)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return model, refine


def _labels_to_gray(labels: np.ndarray, n_topics: int) -> np.ndarray:
    """One gray level per topic in 1..255; unlabeled cells are 0."""
    step = 254.0 / max(n_topics - 1, 1)
    gray = np.where(labels == UNLABELED, 0, 1 + np.round(labels * step))
    return gray.astype(np.uint8)


def _write_labels(lab: Labeling, out: Path) -> None:
    write_pgm(_labels_to_gray(lab.labels, lab.n_labels), out / "labels.pgm")
    save_ground_truth(lab.labels, out / "labels.txt")


def _read_schedule(path) -> dict[str, list[int]]:
    out = {}
    for line in Path(path).read_text().splitlines():
        key, _, body = line.partition(":")
        out[key.strip()] = [int(s) for s in body.split()]
    return out


def _write_schedule(schedules: dict[str, list[int]], path) -> None:
    Path(path).write_text("".join(f"{k} : {' '.join(map(str, v))}\n" for k, v in schedules.items()))


# -- commands ------------------------------------------------------------------------

def _terrain_spec(kv: dict[str, str], seed: int) -> tuple[TerrainSpec, tuple[int, int]]:
    known = {"layout", "terrains", "vocab", "words_per_cell", "width", "height", "shared_fraction",
             "concentration", "regions", "distribution_seed"}
    unknown = set(kv) - known
    if unknown:
        raise ConfigError(f"unknown terrain keys: {sorted(unknown)}")
    try:
        n = int(kv.get("terrains", 4))
        dist = terrain_distributions(n, int(kv.get("vocab", 200)), int(kv.get("distribution_seed", seed)),
                                     float(kv.get("shared_fraction", 1.0)),
                                     float(kv.get("concentration", 1.0)))
        spec = TerrainSpec(dist, kv.get("layout", "rare_trail"), float(kv.get("words_per_cell", 32)),
                           int(kv.get("regions", 12)))
        dims = (int(kv.get("width", 64)), int(kv.get("height", 64)))
        if dims[0] <= 0 or dims[1] <= 0:
            raise ValueError("map dimensions must be positive")
    except ValueError as e:
        raise ConfigError(f"invalid terrain spec: {e}") from None
    return spec, dims


def cmd_generate(args, argv) -> int:
    kv = read_kv(args.spec) if args.spec else {}
    spec, dims = _terrain_spec(kv, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(args, argv, out, {"spec": args.spec} if args.spec else {},
                   {"seed": args.seed, **kv})
    world = generate_synthetic_map(spec, dims, args.seed)
    save_word_map(world, out / "map.words", out / "map.gt")
    logger.info("wrote %dx%d map with %d words to %s", world.width, world.height, world.n_words(), out)
    return EXIT_OK


def cmd_explore(args, argv) -> int:
    model_cfg, refine_cfg = _configs(args)
    world = load_word_map(args.map, args.ground_truth)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = {"map": args.map}
    if args.ground_truth:
        inputs["ground_truth"] = args.ground_truth
    write_manifest(args, argv, out, inputs, {
        "policy": args.policy, "steps": args.steps, "topics": args.topics, "alpha": args.alpha,
        "beta": args.beta, "eta": args.eta, "budget_ms": args.budget_ms, "sweeps": args.sweeps,
        "gamma": args.gamma, "seed": args.seed, "fold_in_iterations": args.fold_in_iters})
    schedule = _read_schedule(args.schedule)["explore"] if args.schedule else None
    start = None
    if args.start:
        x, y = (int(s) for s in args.start.split(","))
        start = CellKey(x, y)
    res = run_exploration(world, Policy(args.policy), args.steps, model_cfg, refine_cfg, args.seed,
                          start=start, gamma=args.gamma, schedule=schedule)
    write_trace_csv(res.trace, out / "path.csv")
    save_checkpoint(res.model, out / "model.ckpt")
    lab = fold_in_label(world, res.model, args.fold_in_iters, make_rng(args.seed, 7))
    _write_labels(lab, out)
    if refine_cfg.sweeps_per_step is None:
        _write_schedule({"explore": [s.draws for s in res.refine]}, out / "schedule.txt")
    gt = world.ground_truth_labeling()
    if gt is not None and res.path:
        logger.info("MI(labels, ground truth) = %.4f bits", mutual_information(lab, gt))
    return EXIT_OK


def read_stream(path) -> tuple[Vocabulary, GridBounds, list[tuple[int, list[tuple[CellKey, np.ndarray]]]]]:
    """Parse a word-document stream.

    Format: header ``V <int> WIDTH <int> HEIGHT <int>`` then one line per
    observed cell, ``<t> <x> <y> : <w1> <w2> ...``, with ``t`` non-decreasing.
    Lines sharing ``t`` form one timestep.
    """
    lines = [(n, l.split("#", 1)[0].strip()) for n, l in enumerate(Path(path).read_text().splitlines(), 1)]
    lines = [(n, l) for n, l in lines if l]
    if not lines:
        raise WordMapError(f"{path}: empty stream")
    tok = lines[0][1].split()
    if len(tok) != 6 or tok[0::2] != ["V", "WIDTH", "HEIGHT"]:
        raise WordMapError(f"{path}:{lines[0][0]}: expected 'V <int> WIDTH <int> HEIGHT <int>'")
    vocab = Vocabulary(int(tok[1]))
    bounds = GridBounds(int(tok[3]), int(tok[5]), None)
    steps: list[tuple[int, list[tuple[CellKey, np.ndarray]]]] = []
    for n, line in lines[1:]:
        head, sep, body = line.partition(":")
        try:
            t, x, y = (int(s) for s in head.split())
            words = vocab.validate([int(s) for s in body.split()])
            c = CellKey(x, y, t)
        except ValueError as e:
            raise WordMapError(f"{path}:{n}: {e}") from None
        if not sep or not bounds.contains(c):
            raise WordMapError(f"{path}:{n}: malformed line or cell outside grid")
        if steps and t < steps[-1][0]:
            raise WordMapError(f"{path}:{n}: timestep {t} goes backwards")
        if not steps or steps[-1][0] != t:
            steps.append((t, []))
        steps[-1][1].append((c, words))
    return vocab, bounds, steps


def cmd_stream(args, argv) -> int:
    model_cfg, refine_cfg = _configs(args)
    vocab, bounds, steps = read_stream(args.stream)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(args, argv, out, {"stream": args.stream}, {
        "topics": args.topics, "alpha": args.alpha, "beta": args.beta, "eta": args.eta,
        "budget_ms": args.budget_ms, "sweeps": args.sweeps, "gamma": args.gamma, "seed": args.seed})
    schedule = _read_schedule(args.schedule)["stream"] if args.schedule else None
    model = TopicModel.from_config(model_cfg, vocab.size, bounds)
    rng_init, rng_refine, rng_score = (make_rng(args.seed, s) for s in (1, 2, 3))
    visits: dict[tuple[int, int], int] = {}
    history: list[list[CellKey]] = []
    lags: dict[int, int] = {}
    draws: list[int] = []
    rows = ["t,x,y,n_words,label,word_ppx,topic_ppx,curiosity"]
    for T, (t, obs) in enumerate(steps, 1):
        scored = []
        for c, words in obs:
            wp = word_perplexity(words, model, model.topic_totals)
            tp = topic_perplexity(words, model, c, model.topic_totals, rng_score)
            cur = curiosity_decay(tp, visits.get(c.xy, 0), args.gamma)
            visits[c.xy] = visits.get(c.xy, 0) + 1
            scored.append((c, words, wp, tp, cur))
        for c, words in obs:
            model.add_observation(c, words, rng_init)
        history.append([c for c, _ in obs])
        n = schedule[T - 1] if schedule is not None else None
        st = realtime_refine(model, history, refine_cfg, rng_refine, n)
        draws.append(st.draws)
        for tt in st.times:
            lags[T - tt] = lags.get(T - tt, 0) + 1
        for c, words, wp, tp, cur in scored:
            label = int(np.argmax(model.cell_topic_counts[model.cell_index(c)])) if c in model else UNLABELED
            rows.append(f"{t},{c.x},{c.y},{words.size},{label},{wp!r},{tp!r},{cur!r}")
    (out / "stream.csv").write_text("\n".join(rows) + "\n")
    hist = ["lag,count"] + [f"{k},{lags[k]}" for k in sorted(lags)]
    (out / "refine_hist.csv").write_text("\n".join(hist) + "\n")
    save_checkpoint(model, out / "model.ckpt")
    if refine_cfg.sweeps_per_step is None:
        _write_schedule({"stream": draws}, out / "schedule.txt")
    return EXIT_OK


def _experiment_from_kv(kv: dict[str, str], base: Path):
    known = {"map", "ground_truth", "synthetic", "map_seed", "map_name", "policies", "path_lengths",
             "restarts", "topics", "alpha", "beta", "eta", "budget_ms", "sweeps", "batch_iterations",
             "fold_in_iterations", "gamma", "seed", "workers", "timing", "radius"}
    unknown = set(kv) - known
    if unknown:
        raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")

    def rel(p):
        q = Path(p)
        return q if q.is_absolute() else base / q

    try:
        seed = int(kv.get("seed", 0))
        if "map" in kv:
            world = load_word_map(rel(kv["map"]), rel(kv["ground_truth"]) if "ground_truth" in kv else None)
            inputs = {"map": str(rel(kv["map"]))}
            if "ground_truth" in kv:
                inputs["ground_truth"] = str(rel(kv["ground_truth"]))
        elif "synthetic" in kv:
            spec, dims = _terrain_spec(read_kv(rel(kv["synthetic"])), int(kv.get("map_seed", seed)))
            world = generate_synthetic_map(spec, dims, int(kv.get("map_seed", seed)))
            inputs = {"synthetic": str(rel(kv["synthetic"]))}
        else:
            raise ConfigError("experiment needs 'map' or 'synthetic'")
        policies = [s.strip() for s in kv.get("policies", ",".join(POLICY_NAMES)).split(",") if s.strip()]
        cfg = ExperimentConfig(
            policies=[Policy(p) for p in policies],
            path_lengths=[int(s) for s in kv.get("path_lengths", "10,20,40,80,160,320").split(",")],
            restarts=int(kv.get("restarts", 20)),
            model=ModelConfig(int(kv.get("topics", 64)), float(kv.get("alpha", 0.1)), float(kv.get("beta", 0.1)),
                              NeighborhoodConfig(int(kv.get("radius", 1)), 1)),
            refine=RefinementConfig(float(kv.get("eta", 0.5)), float(kv.get("budget_ms", 200.0)),
                                    sweeps_per_step=int(kv["sweeps"]) if "sweeps" in kv else None),
            batch_iterations=int(kv.get("batch_iterations", 100)),
            fold_in_iterations=int(kv.get("fold_in_iterations", 50)),
            gamma=float(kv.get("gamma", 1.0)), seed=seed, workers=int(kv.get("workers", 1)),
            map_name=kv.get("map_name", "map"),
            record_timing=kv.get("timing", "true").lower() in ("1", "true", "yes"))
    except WordMapError:
        raise
    except ValueError as e:
        raise ConfigError(f"invalid experiment config: {e}") from None
    return cfg, world, inputs


def cmd_evaluate(args, argv) -> int:
    kv = read_kv(args.experiment)
    for key in ("seed", "workers", "sweeps"):
        val = getattr(args, key, None)
        if val is not None:
            kv[key] = str(val)
    cfg, world, inputs = _experiment_from_kv(kv, Path(args.experiment).parent)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(args, argv, out, {"experiment": args.experiment, **inputs}, kv)
    result = run_experiment(cfg, world)
    write_results_csv(result, out / "results.csv")
    write_summary_csv(result, out / "summary.csv")
    if result.failures:
        (out / "failures.txt").write_text("\n".join(result.failures) + "\n")
    return EXIT_OK


def cmd_label(args, argv) -> int:
    model = load_checkpoint(args.checkpoint)
    world = load_word_map(args.map)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(args, argv, out, {"checkpoint": args.checkpoint, "map": args.map},
                   {"seed": args.seed, "fold_in_iterations": args.fold_in_iters})
    _write_labels(fold_in_label(world, model, args.fold_in_iters, make_rng(args.seed, 7)), out)
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    kv = read_kv(args.manifest)
    if "argv" not in kv:
        raise ConfigError(f"{args.manifest}: no argv entry")
    for key, val in kv.items():
        if key.startswith("input.") and key.endswith(".sha256"):
            path = kv[key[: -len(".sha256")]]
            if _sha256(path) != val:
                raise ConfigError(f"input {path} changed since the original run")
    old = shlex.split(kv["argv"])
    src = Path(args.manifest).parent
    new_out = args.out or str(src)
    parser = build_parser()
    ns = parser.parse_args(old)
    replay_argv = list(old)
    if "--out" in replay_argv:
        replay_argv[replay_argv.index("--out") + 1] = new_out
    if ns.command in ("explore", "stream") and getattr(ns, "sweeps", None) is None \
            and (src / "schedule.txt").exists() and "--schedule" not in replay_argv:
        replay_argv += ["--schedule", str(src / "schedule.txt")]
    return main(replay_argv)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rostexplore", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic word map and its ground truth")
    p.add_argument("spec", nargs="?", help="terrain spec (key = value); default: 64x64 rare-trail map")
    _common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("explore", help="explore a word map with one policy")
    p.add_argument("map")
    p.add_argument("--ground-truth")
    p.add_argument("--policy", choices=POLICY_NAMES, default="topicppx")
    p.add_argument("--steps", type=int, default=320)
    p.add_argument("--start", help="start cell as x,y (default: random)")
    p.add_argument("--fold-in-iters", type=int, default=50)
    p.add_argument("--schedule", help=argparse.SUPPRESS)
    _model_flags(p)
    _common(p)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("stream", help="run the realtime sampler over a word-document stream")
    p.add_argument("stream")
    p.add_argument("--schedule", help=argparse.SUPPRESS)
    _model_flags(p)
    _common(p)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("evaluate", help="run the multi-policy mutual-information experiment")
    p.add_argument("experiment", help="experiment config (key = value)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--sweeps", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("label", help="fold a model checkpoint onto a word map")
    p.add_argument("checkpoint")
    p.add_argument("map")
    p.add_argument("--fold-in-iters", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (default: overwrite the original)")
    p.set_defaults(func=cmd_replay)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    kv = read_kv(path)
    sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    dests = {a.dest: a for a in sub._actions}  # noqa: SLF001
    defaults = {}
    for key, value in kv.items():
        dest = key.replace("-", "_")
        if dest not in dests or dest in ("config", "out", "command"):
            raise ConfigError(f"{path}: unknown option {key!r}")
        action = dests[dest]
        defaults[dest] = action.type(value) if action.type else value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
    except SystemExit as e:
        return int(e.code or 0)
    except (ConfigError, OSError, ValueError) as e:
        print(f"rostexplore: {e}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except ConfigError as e:
        print(f"rostexplore: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (WordMapError, OSError) as e:
        print(f"rostexplore: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except Exception as e:  # noqa: BLE001
        print(f"rostexplore: runtime error: {e!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

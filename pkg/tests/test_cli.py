import subprocess
import sys

import numpy as np
import pytest

from rostexplore.cli import build_parser, main, read_kv
from rostexplore.world import load_word_map

SMALL_SPEC = "width = 12\nheight = 10\nvocab = 40\nwords_per_cell = 8\nregions = 4\n"


def _outputs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.txt"}


@pytest.fixture
def small_map(tmp_path):
    (tmp_path / "spec.txt").write_text(SMALL_SPEC)
    assert main(["generate", str(tmp_path / "spec.txt"), "--seed", "3", "--out", str(tmp_path / "gen")]) == 0
    return tmp_path / "gen"


def _stream_file(path, steps=6):
    rng = np.random.default_rng(0)
    lines = ["V 10 WIDTH 3 HEIGHT 2"]
    for t in range(steps):
        for x in range(2):
            lines.append(f"{t} {x} {t % 2} : " + " ".join(map(str, rng.integers(0, 10, 5))))
    path.write_text("\n".join(lines) + "\n")
    return path


# -- generate ------------------------------------------------------------------------

def test_generate_default_map(tmp_path):
    assert main(["generate", "--out", str(tmp_path / "a"), "--seed", "1"]) == 0
    m = load_word_map(tmp_path / "a" / "map.words", tmp_path / "a" / "map.gt")
    assert (m.width, m.height) == (64, 64)
    assert m.ground_truth is not None


def test_generate_is_seeded(tmp_path, small_map):
    main(["generate", str(tmp_path / "spec.txt"), "--seed", "3", "--out", str(tmp_path / "again")])
    assert _outputs(small_map) == _outputs(tmp_path / "again")


def test_generate_rejects_bad_spec(tmp_path, capsys):
    (tmp_path / "bad.txt").write_text("layout = spiral\n")
    assert main(["generate", str(tmp_path / "bad.txt"), "--out", str(tmp_path / "o")]) == 2
    assert "spiral" in capsys.readouterr().err
    (tmp_path / "bad2.txt").write_text("colour = red\n")
    assert main(["generate", str(tmp_path / "bad2.txt"), "--out", str(tmp_path / "o")]) == 2


# -- explore -------------------------------------------------------------------------

def test_explore_defaults():
    args = build_parser().parse_args(["explore", "m", "--out", "o"])
    assert (args.topics, args.alpha, args.beta, args.eta, args.budget_ms) == (64, 0.1, 0.1, 0.5, 200.0)
    assert args.policy == "topicppx" and args.steps == 320


def test_explore_outputs(tmp_path, small_map):
    out = tmp_path / "ex"
    rc = main(["explore", str(small_map / "map.words"), "--ground-truth", str(small_map / "map.gt"),
               "--steps", "15", "--topics", "6", "--sweeps", "2", "--fold-in-iters", "3", "--out", str(out)])
    assert rc == 0
    names = {p.name for p in out.iterdir()}
    assert {"manifest.txt", "path.csv", "model.ckpt", "labels.pgm", "labels.txt"} <= names
    assert "schedule.txt" not in names
    assert len((out / "path.csv").read_text().splitlines()) == 16
    kv = read_kv(out / "manifest.txt")
    assert kv["config.topics"] == "6" and len(kv["input.map.sha256"]) == 64


def test_explore_zero_steps(tmp_path, small_map):
    out = tmp_path / "ex0"
    assert main(["explore", str(small_map / "map.words"), "--steps", "0", "--topics", "3",
                 "--fold-in-iters", "1", "--out", str(out)]) == 0
    assert (out / "path.csv").read_text().splitlines() == ["step,x,y,chosen_weight,candidate_weights"]


def test_config_file_and_flag_override(tmp_path, small_map):
    (tmp_path / "run.cfg").write_text("topics = 5\nsteps = 7\nsweeps = 1\nfold-in-iters = 2\n")
    out = tmp_path / "cf"
    assert main(["explore", str(small_map / "map.words"), "--config", str(tmp_path / "run.cfg"),
                 "--steps", "4", "--out", str(out)]) == 0
    kv = read_kv(out / "manifest.txt")
    assert kv["config.topics"] == "5" and kv["config.steps"] == "4"
    (tmp_path / "bad.cfg").write_text("nonsense = 1\n")
    assert main(["explore", str(small_map / "map.words"), "--config", str(tmp_path / "bad.cfg"),
                 "--out", str(out)]) == 2


# -- stream --------------------------------------------------------------------------

def test_single_document_stream(tmp_path):
    (tmp_path / "s.txt").write_text("V 4 WIDTH 2 HEIGHT 2\n0 1 1 : 0 1 2\n")
    assert main(["stream", str(tmp_path / "s.txt"), "--topics", "3", "--sweeps", "1",
                 "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "stream.csv").read_text().splitlines()
    assert len(rows) == 2 and rows[1].startswith("0,1,1,3,")


def test_stream_refinement_histogram_follows_eta(tmp_path):
    _stream_file(tmp_path / "s.txt", steps=30)
    assert main(["stream", str(tmp_path / "s.txt"), "--topics", "4", "--sweeps", "200", "--eta", "0.8",
                 "--gamma", "0.7", "--out", str(tmp_path / "o")]) == 0
    hist = dict(tuple(map(int, l.split(","))) for l in (tmp_path / "o" / "refine_hist.csv").read_text().splitlines()[1:])
    total = sum(hist.values())
    # the first step has no history, so lag 0 gets that step in full
    expected = (0.8 * 29 * 200 + 200) / (30 * 200)
    assert abs(hist[0] / total - expected) < 0.02
    assert read_kv(tmp_path / "o" / "manifest.txt")["config.gamma"] == "0.7"


def test_stream_rejects_time_travel(tmp_path):
    (tmp_path / "s.txt").write_text("V 4 WIDTH 2 HEIGHT 2\n1 0 0 : 1\n0 0 0 : 2\n")
    assert main(["stream", str(tmp_path / "s.txt"), "--out", str(tmp_path / "o")]) == 3


# -- evaluate / label ------------------------------------------------------------------

def _experiment(tmp_path, small_map, gt=True, extra=""):
    text = (f"map = {small_map / 'map.words'}\n"
            + (f"ground_truth = {small_map / 'map.gt'}\n" if gt else "")
            + "path_lengths = 4,8\nrestarts = 2\ntopics = 4\nsweeps = 1\n"
              "batch_iterations = 3\nfold_in_iterations = 2\ntiming = false\n" + extra)
    (tmp_path / "exp.txt").write_text(text)
    return tmp_path / "exp.txt"


def test_evaluate_writes_tables(tmp_path, small_map):
    assert main(["evaluate", str(_experiment(tmp_path, small_map)), "--out", str(tmp_path / "ev")]) == 0
    lines = (tmp_path / "ev" / "results.csv").read_text().splitlines()
    assert lines[0].startswith("# rostexplore-results v1")
    assert len(lines) == 2 + 4 * 2 * 2
    assert all(l.split(",")[5] for l in lines[2:])


def test_evaluate_without_ground_truth(tmp_path, small_map):
    exp = _experiment(tmp_path, small_map, gt=False, extra="policies = random\n")
    assert main(["evaluate", str(exp), "--out", str(tmp_path / "ev")]) == 0
    rows = (tmp_path / "ev" / "results.csv").read_text().splitlines()[2:]
    assert rows and all(r.split(",")[5] == "" for r in rows)


def test_evaluate_synthetic_config(tmp_path):
    (tmp_path / "spec.txt").write_text(SMALL_SPEC)
    (tmp_path / "exp.txt").write_text("synthetic = spec.txt\nmap_seed = 2\npolicies = coverage\n"
                                      "path_lengths = 3\nrestarts = 2\ntopics = 3\nsweeps = 1\n"
                                      "batch_iterations = 2\nfold_in_iterations = 1\n")
    assert main(["evaluate", str(tmp_path / "exp.txt"), "--out", str(tmp_path / "ev")]) == 0


def test_label_command(tmp_path, small_map):
    main(["explore", str(small_map / "map.words"), "--steps", "5", "--topics", "4", "--sweeps", "1",
          "--fold-in-iters", "2", "--out", str(tmp_path / "ex")])
    assert main(["label", str(tmp_path / "ex" / "model.ckpt"), str(small_map / "map.words"),
                 "--fold-in-iters", "2", "--out", str(tmp_path / "lb")]) == 0
    assert (tmp_path / "lb" / "labels.pgm").exists()


# -- exit codes ------------------------------------------------------------------------

def test_exit_codes(tmp_path, small_map):
    assert main(["explore", str(tmp_path / "missing.words"), "--out", str(tmp_path / "o")]) == 3
    assert main(["explore", str(small_map / "map.words"), "--topics", "0", "--out", str(tmp_path / "o")]) == 2
    assert main(["explore", "--bogus"]) == 2
    (tmp_path / "tiny.words").write_text("V 3 WIDTH 2 HEIGHT 1\n0 0 : 2\n")
    main(["explore", str(tmp_path / "tiny.words"), "--steps", "2", "--topics", "2", "--sweeps", "1",
          "--fold-in-iters", "1", "--out", str(tmp_path / "t")])
    # the map's vocabulary is larger than the checkpoint's
    assert main(["label", str(tmp_path / "t" / "model.ckpt"), str(small_map / "map.words"),
                 "--out", str(tmp_path / "o")]) == 4


# -- replay --------------------------------------------------------------------------

def test_replay_explore_with_time_budget(tmp_path, small_map):
    a = tmp_path / "a"
    assert main(["explore", str(small_map / "map.words"), "--steps", "12", "--topics", "4",
                 "--budget-ms", "3", "--fold-in-iters", "2", "--seed", "5", "--out", str(a)]) == 0
    assert (a / "schedule.txt").exists()
    assert main(["replay", str(a / "manifest.txt"), "--out", str(tmp_path / "b")]) == 0
    assert _outputs(a) == _outputs(tmp_path / "b")


def test_replay_stream(tmp_path):
    _stream_file(tmp_path / "s.txt")
    a = tmp_path / "a"
    assert main(["stream", str(tmp_path / "s.txt"), "--topics", "4", "--budget-ms", "2", "--out", str(a)]) == 0
    assert main(["replay", str(a / "manifest.txt"), "--out", str(tmp_path / "b")]) == 0
    assert _outputs(a) == _outputs(tmp_path / "b")


def test_replay_detects_changed_input(tmp_path, small_map):
    a = tmp_path / "a"
    main(["explore", str(small_map / "map.words"), "--steps", "2", "--topics", "2", "--sweeps", "1",
          "--fold-in-iters", "1", "--out", str(a)])
    with open(small_map / "map.words", "a") as fh:
        fh.write("# edited\n")
    assert main(["replay", str(a / "manifest.txt"), "--out", str(tmp_path / "b")]) == 2


def test_console_script_runs(tmp_path):
    r = subprocess.run([sys.executable, "-m", "rostexplore.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()

import json
import subprocess
import sys

import numpy as np
import pytest

from stochamort import cli
from stochamort.amortize import load_checkpoint
from stochamort.estimators import read_label_file
from stochamort.games import save_game_fixtures
from stochamort.metrics import compare

SHAPLEY_CONFIG = {
    "task": "shapley",
    "games": {"random": {"n": 5, "count": 60, "seed": 1}},
    "oracle": {"method": "permutation", "num_samples": 2},
    "model": {"kind": "linear"},
    "optimizer": {"epochs": 20, "batch_size": 16, "learning_rate": 0.005},
}


def write_config(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def run(*args):
    return cli.main([str(a) for a in args])


def pipeline(tmp_path, cfg, out, workers=1):
    path = write_config(tmp_path, cfg)
    for cmd in ("exact", "gen-labels", "train", "eval"):
        code = run(cmd, "--config", path, "--out", out, "--workers", workers)
        assert code == cli.EXIT_OK, cmd
    return out


def stable_bytes(path):
    """File bytes with the creation timestamp removed from label headers."""
    text = path.read_text()
    if path.suffix == ".jsonl":
        lines = text.splitlines()
        head = json.loads(lines[0])
        head["header"].pop("created", None)
        lines[0] = json.dumps(head, sort_keys=True)
        text = "\n".join(lines)
    return text


def test_pipeline_is_deterministic_across_workers(tmp_path):
    a = pipeline(tmp_path, SHAPLEY_CONFIG, tmp_path / "a", workers=1)
    b = pipeline(tmp_path, SHAPLEY_CONFIG, tmp_path / "b", workers=4)
    c = pipeline(tmp_path, SHAPLEY_CONFIG, tmp_path / "c", workers=1)
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert stable_bytes(a / name) == stable_bytes(b / name) == stable_bytes(c / name), name


def test_pipeline_outputs(tmp_path):
    out = pipeline(tmp_path, SHAPLEY_CONFIG, tmp_path / "o")
    head, truth = read_label_file(out / "ground_truth.jsonl")
    assert head["config"] == SHAPLEY_CONFIG and len(truth) == 60
    assert all(r.label.shape == (5,) for r in truth)
    _, labels = read_label_file(out / "labels.jsonl")
    assert all(r.evals_used == 2 * 6 for r in labels)
    summary = json.loads((out / "train_summary.json").read_text())
    assert summary["mse_amortized"] < summary["mse_labels"]
    rows = cli.read_csv(out / "metrics.csv")
    assert [r["method"] for r in rows] == ["amortized", "permutation"]
    assert (out / "metrics.csv").read_text().startswith("# {")


def test_checkpoint_reproduces_validation_loss(tmp_path):
    out = pipeline(tmp_path, SHAPLEY_CONFIG, tmp_path / "o")
    model = load_checkpoint(out / "checkpoint.json")
    _, val = read_label_file(out / "labels_val.jsonl")
    cfg = cli.load_config(tmp_path / "run.json")
    feats = {c.cid: c.features for c in cli.build_task(cfg).contexts}
    X = np.stack([feats[r.context_id] for r in val])
    Y = np.stack([r.label for r in val])
    loss, _ = model.loss_and_grad(X, Y)
    recorded = json.loads((out / "train_summary.json").read_text())["best_val_loss"]
    assert abs(loss - recorded) <= 1e-9


def test_seed_changes_labels_not_schema(tmp_path):
    path = write_config(tmp_path, SHAPLEY_CONFIG)
    run("gen-labels", "--config", path, "--out", tmp_path / "s0", "--seed", 0)
    run("gen-labels", "--config", path, "--out", tmp_path / "s1", "--seed", 1)
    _, a = read_label_file(tmp_path / "s0" / "labels.jsonl")
    _, b = read_label_file(tmp_path / "s1" / "labels.jsonl")
    assert a[0].to_dict().keys() == b[0].to_dict().keys()
    assert any(not np.array_equal(x.label, y.label) for x, y in zip(a, b))


def test_exact_on_additive_fixture(tmp_path):
    weights = [0.5, -1.0, 2.0, 0.0, 3.0, 1.5, -0.5, 0.25]
    save_game_fixtures(tmp_path / "games.json", [{"type": "additive", "weights": weights}])
    cfg = {"task": "shapley", "games": {"fixtures": "games.json"}}
    assert run("exact", "--config", write_config(tmp_path, cfg), "--out", tmp_path / "o") == 0
    _, recs = read_label_file(tmp_path / "o" / "ground_truth.jsonl")
    np.testing.assert_allclose(recs[0].label, weights, atol=1e-12)


def test_exact_refuses_large_games(tmp_path, capsys):
    save_game_fixtures(tmp_path / "games.json", [{"type": "majority", "n": 21, "features": [0.0]}])
    cfg = {"task": "shapley", "games": {"fixtures": "games.json"}}
    assert run("exact", "--config", write_config(tmp_path, cfg), "--out", tmp_path / "o") == cli.EXIT_CONFIG
    assert "n <= 20" in capsys.readouterr().err


def test_mc_semivalue_eval_accounting(tmp_path):
    cfg = {
        "task": "data_shapley",
        "data": {"blobs": {"n": 12, "d": 2, "holdout": 20, "seed": 0}},
        "learner": {"learner": "ridge", "metric": "negative-loss"},
        "oracle": {"method": "mc_semivalue", "num_samples": 5},
    }
    assert run("gen-labels", "--config", write_config(tmp_path, cfg), "--out", tmp_path / "o") == 0
    _, recs = read_label_file(tmp_path / "o" / "labels.jsonl")
    assert len(recs) == 12 and sum(r.evals_used for r in recs) == 2 * 5 * 12


@pytest.mark.parametrize(
    "cfg,fragment",
    [
        ({"task": "nope"}, "task must be"),
        ({"task": "shapley", "games": {"random": {"n": 3, "count": 2}}, "oracle": {"method": "msr_banzhaf"}}, "not available"),
        ({"task": "shapley", "games": {"fixtures": "missing.json"}}, "not found"),
        ({"task": "shapley", "games": {"random": {"n": 3, "count": 2}}, "model": {"kind": "forest"}}, "model kind"),
    ],
)
def test_config_errors(tmp_path, capsys, cfg, fragment):
    assert run("exact", "--config", write_config(tmp_path, cfg), "--out", tmp_path / "o") == cli.EXIT_CONFIG
    assert fragment in capsys.readouterr().err


def test_train_before_labels_is_config_error(tmp_path):
    path = write_config(tmp_path, SHAPLEY_CONFIG)
    assert run("train", "--config", path, "--out", tmp_path / "o") == cli.EXIT_CONFIG


def test_numerical_failure_exit_code(tmp_path):
    cfg = dict(SHAPLEY_CONFIG, optimizer={"epochs": 2, "learning_rate": 1e200})
    path = write_config(tmp_path, cfg)
    run("gen-labels", "--config", path, "--out", tmp_path / "o")
    with np.errstate(all="ignore"):
        assert run("train", "--config", path, "--out", tmp_path / "o") == cli.EXIT_NUMERICAL


def test_verify_list(capsys):
    assert run("verify", "--list") == 0
    names = [line.split(":")[0] for line in capsys.readouterr().out.splitlines()]
    assert names == list(cli.CHECKS)


def test_verify_default_suite(tmp_path):
    cfg = {"task": "shapley", "games": {"random": {"n": 3, "count": 1}}}
    assert run("verify", "--config", write_config(tmp_path, cfg), "--out", tmp_path / "v") == 0
    rows = cli.read_csv(tmp_path / "v" / "verify.csv")
    assert [r["check"] for r in rows] == list(cli.CHECKS)
    assert all(r["status"] == "pass" for r in rows)
    curve = cli.read_csv(tmp_path / "v" / "convergence_curve.csv")
    assert [int(r["T"]) for r in curve] == [10, 100, 1000]


def test_verify_injected_bias_fails(tmp_path, capsys):
    cfg = {
        "task": "shapley",
        "games": {"random": {"n": 3, "count": 1}},
        "verify": {"checks": ["bias"], "inject_bias": 0.2},
    }
    assert run("verify", "--config", write_config(tmp_path, cfg), "--out", tmp_path / "v") == cli.EXIT_VERIFY
    assert "FAIL bias" in capsys.readouterr().out


def test_eval_identity_and_anti_cases():
    rng = np.random.default_rng(0)
    gt = rng.standard_normal((10, 4))
    assert compare(gt, gt).pearson == pytest.approx(1.0)
    assert compare(-gt, gt).pearson == pytest.approx(-1.0)
    assert compare(np.full_like(gt, gt.mean()), gt, "global").mse_normalized == pytest.approx(1.0)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "stochamort", "verify", "--list"], capture_output=True, text=True)
    assert res.returncode == 0 and "convergence" in res.stdout

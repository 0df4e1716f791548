"""Batch command-line interface.

Every command reads one JSON run configuration (``--config``) and writes its
outputs into ``--out``. The configuration is copied into the header of every
output so each artifact describes how it was made.

Commands: ``exact``, ``gen-labels``, ``train``, ``eval``, ``verify``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .amortize import (
    ContextRecord,
    ModelConfig,
    OptimizerConfig,
    build_label_dataset,
    load_checkpoint,
    preprocess_labels,
    save_checkpoint,
    train_regression,
)
from .errors import InvalidArgumentError, NumericalFailureError, ResourceLimitError, UnsupportedError
from .estimators import (
    NoisyLabelRecord,
    SamplingPlan,
    derive_seed,
    kernelshap,
    lime_ls,
    mc_datamodels,
    mc_distributional,
    mc_semivalue,
    msr_banzhaf,
    permutation_sampling,
    read_label_file,
    sgd_shapley,
    summarize,
    write_label_file,
)
from .exact import (
    EXACT_MAX_PLAYERS,
    LSKernel,
    SemivalueWeights,
    exact_banzhaf,
    exact_datamodels,
    exact_semivalue,
    exact_shapley,
    exact_weighted_ls,
    shapley_axiom_residuals,
    value_table,
)
from .games import (
    CooperativeGame,
    Dataset,
    RetrainConfig,
    game_from_spec,
    load_csv_dataset,
    load_game_fixtures,
    make_blob_dataset,
    make_datamodels_game,
    make_valuation_game,
    random_table_game,
)
from .metrics import compare, write_report_csv

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFY = 4

TASKS = ("shapley", "banzhaf", "lime", "data_shapley", "distributional", "datamodels")
ORACLES = {
    "shapley": ("exact", "permutation", "kernelshap", "sgd_shapley"),
    "banzhaf": ("exact", "msr_banzhaf"),
    "lime": ("exact", "lime_ls"),
    "data_shapley": ("exact", "mc_semivalue"),
    "distributional": ("mc_distributional",),
    "datamodels": ("exact", "mc_datamodels"),
}
GAME_TASKS = ("shapley", "banzhaf", "lime")


class ConfigError(InvalidArgumentError):
    pass


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path
    seed: int = 0

    @property
    def task(self) -> str:
        return self.raw["task"]

    @property
    def oracle(self) -> dict:
        return self.raw.get("oracle", {"method": "exact"})

    def path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q

    def header(self, command: str) -> dict:
        return {"command": command, "config": self.raw, "seed": self.seed}


def load_config(path: str | Path, seed: int | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    cfg = RunConfig(raw, path.resolve().parent, int(raw.get("seed", 0) if seed is None else seed))
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    raw = cfg.raw
    task = raw.get("task")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
    method = cfg.oracle.get("method")
    if method not in ORACLES[task]:
        raise ConfigError(f"oracle {method!r} is not available for task {task!r}; choose from {ORACLES[task]}")
    if task in GAME_TASKS:
        games = raw.get("games")
        if not isinstance(games, dict) or not ("fixtures" in games or "random" in games):
            raise ConfigError("game tasks need games.fixtures or games.random")
        if "fixtures" in games and not cfg.path(games["fixtures"]).is_file():
            raise ConfigError(f"game fixture file not found: {games['fixtures']}")
    else:
        data = raw.get("data")
        if not isinstance(data, dict) or not ("train" in data or "blobs" in data):
            raise ConfigError("data tasks need data.train/data.holdout or data.blobs")
        for key in ("train", "holdout"):
            if key in data and not cfg.path(data[key]).is_file():
                raise ConfigError(f"data file not found: {data[key]}")
        RetrainConfig(**raw.get("learner", {}))
    ModelConfig(**raw.get("model", {}))
    OptimizerConfig(**raw.get("optimizer", {}))


# ---------------------------------------------------------------------------
# Contexts and oracles
# ---------------------------------------------------------------------------


@dataclass
class TaskContext:
    cid: str
    features: np.ndarray
    class_index: int | None = None
    game: CooperativeGame | None = None
    point_index: int | None = None
    x: Any = None
    y: Any = None

    def record(self) -> ContextRecord:
        return ContextRecord(self.cid, self.features, self.class_index)


@dataclass
class Task:
    name: str
    contexts: list[TaskContext]
    n_players: int
    shared: dict = field(default_factory=dict)


def _load_data(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    data = cfg.raw["data"]
    if "blobs" in data:
        b = data["blobs"]
        rng = np.random.default_rng(int(b.get("seed", 0)))
        train, flags = make_blob_dataset(
            int(b["n"]), int(b.get("d", 2)), rng, float(b.get("separation", 2.0)), float(b.get("flip_fraction", 0.0))
        )
        holdout, _ = make_blob_dataset(int(b.get("holdout", b["n"])), int(b.get("d", 2)), rng, float(b.get("separation", 2.0)))
        train.flags = flags
        return train, holdout
    return load_csv_dataset(cfg.path(data["train"])), load_csv_dataset(cfg.path(data["holdout"]))


def build_task(cfg: RunConfig) -> Task:
    task = cfg.task
    if task in GAME_TASKS:
        games_cfg = cfg.raw["games"]
        if "fixtures" in games_cfg:
            specs = load_game_fixtures(cfg.path(games_cfg["fixtures"]))
        else:
            r = games_cfg["random"]
            rng = np.random.default_rng(int(r.get("seed", 0)))
            specs = [
                {"type": "table", "values": random_table_game(int(r["n"]), rng).spec["values"]}
                for _ in range(int(r["count"]))
            ]
        ctxs = []
        for i, spec in enumerate(specs):
            game = game_from_spec(spec)
            if "features" in spec:
                feats = np.asarray(spec["features"], dtype=float)
            elif game.n <= EXACT_MAX_PLAYERS:
                feats = value_table(game)
                game.reset_counter()
            else:
                raise ConfigError(f"game {i} needs explicit features (n = {game.n})")
            ctxs.append(TaskContext(str(spec.get("id", f"g{i:04d}")), feats, game=game))
        sizes = {c.game.n for c in ctxs}
        if len(sizes) != 1:
            raise ConfigError("all games in a run must have the same player count")
        return Task(task, ctxs, sizes.pop())

    train, holdout = _load_data(cfg)
    rcfg = RetrainConfig(**cfg.raw.get("learner", {}))
    shared = {"train": train, "holdout": holdout, "retrain": rcfg}
    if task == "data_shapley":
        game = make_valuation_game(train, holdout, rcfg)
        cls = game.learner.class_index(train.y) if rcfg.task == "classification" else [None] * len(train)
        ctxs = [
            TaskContext(f"p{i:04d}", train.X[i], None if cls[i] is None else int(cls[i]), game=game, point_index=i)
            for i in range(len(train))
        ]
        shared["game"] = game
        return Task(task, ctxs, len(train), shared)
    if task == "datamodels":
        output = cfg.raw.get("datamodels_output", "loss")
        ctxs = [
            TaskContext(
                f"x{j:04d}", holdout.X[j], game=make_datamodels_game(train, holdout, rcfg, holdout.X[j], holdout.y[j], output)
            )
            for j in range(len(holdout))
        ]
        return Task(task, ctxs, len(train), shared)
    # distributional: value holdout points against datasets drawn from the training pool
    game = make_valuation_game(train, holdout, rcfg)
    shared["learner"] = game.learner
    cls = game.learner.class_index(holdout.y) if rcfg.task == "classification" else [None] * len(holdout)
    ctxs = [
        TaskContext(f"z{j:04d}", holdout.X[j], None if cls[j] is None else int(cls[j]), x=holdout.X[j], y=holdout.y[j])
        for j in range(len(holdout))
    ]
    return Task(task, ctxs, len(train), shared)


def _weights(name: str, n: int) -> SemivalueWeights:
    if name == "shapley":
        return SemivalueWeights.shapley(n)
    if name == "banzhaf":
        return SemivalueWeights.banzhaf(n)
    raise ConfigError(f"unknown semivalue weights {name!r}")


def exact_labels(task: Task, cfg: RunConfig) -> list[NoisyLabelRecord]:
    """Exact outputs for every context; refuses games above the enumeration limit."""
    if task.name == "distributional":
        raise UnsupportedError("distributional values have no exact oracle")
    if task.n_players > EXACT_MAX_PLAYERS:
        raise ResourceLimitError(
            f"exact oracles are limited to n <= {EXACT_MAX_PLAYERS} players; this run has n = {task.n_players}"
        )
    o = cfg.oracle
    out = []
    if task.name == "data_shapley":
        game = task.shared["game"]
        vals = exact_semivalue(game, _weights(o.get("weights", "shapley"), game.n))
        evals = 1 << game.n
        return [NoisyLabelRecord(c.cid, "exact", 0, 0, vals[c.point_index], evals) for c in task.contexts]
    for c in task.contexts:
        if task.name == "shapley":
            vals = exact_shapley(c.game)
        elif task.name == "banzhaf":
            vals = exact_banzhaf(c.game)
        elif task.name == "lime":
            vals = exact_weighted_ls(c.game, LSKernel.lime(c.game.n, float(o.get("kernel_width", 0.25))))
        else:
            vals = exact_datamodels(c.game, float(o.get("q", 0.5)))
        out.append(NoisyLabelRecord(c.cid, "exact", 0, 0, vals, 1 << c.game.n))
    return out


def make_oracle(task: Task, cfg: RunConfig) -> Callable[[TaskContext, int], NoisyLabelRecord]:
    o = dict(cfg.oracle)
    method = o["method"]
    k = int(o.get("num_samples", 1))
    if method == "exact":
        table = {r.context_id: r for r in exact_labels(task, cfg)}
        return lambda c, seed: table[c.cid]
    if method == "permutation":
        return lambda c, seed: permutation_sampling(c.game, k, seed, c.cid)
    if method == "kernelshap":
        return lambda c, seed: kernelshap(c.game, k, seed, c.cid)
    if method == "sgd_shapley":
        kw = {key: o[key] for key in ("learning_rate", "minibatch", "paired") if key in o}
        return lambda c, seed: sgd_shapley(c.game, int(o.get("iterations", 100)), seed=seed, context_id=c.cid, **kw)
    if method == "msr_banzhaf":
        return lambda c, seed: msr_banzhaf(c.game, k, seed, c.cid)
    if method == "lime_ls":
        width = float(o.get("kernel_width", 0.25))
        return lambda c, seed: lime_ls(c.game, k, width, seed, c.cid)
    plan = SamplingPlan(
        k, int(o.get("min_cardinality", 0)), o.get("max_cardinality"), bool(o.get("with_replacement", method == "mc_distributional"))
    )
    if method == "mc_semivalue":
        weights = _weights(o.get("weights", "shapley"), task.n_players)
        return lambda c, seed: mc_semivalue(c.game, c.point_index, weights, plan, seed, c.cid)
    if method == "mc_datamodels":
        q = float(o.get("q", 0.5))

        def vec(c, seed):
            recs = [mc_datamodels(c.game, i, q, k, derive_seed(seed, str(i))) for i in range(task.n_players)]
            label = np.array([r.scalar for r in recs])
            return NoisyLabelRecord(c.cid, method, k, seed, label, sum(r.evals_used for r in recs), extra={"q": q})

        return vec
    learner = task.shared["learner"]
    pool = task.shared["train"]
    return lambda c, seed: mc_distributional(c.x, c.y, pool, learner.score, plan, seed, c.cid)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _comment(cfg: RunConfig, command: str) -> str:
    head = dict(cfg.header(command), code_version=__version__)
    return "# " + json.dumps(head, sort_keys=True) + "\n"


def _write_csv(path: Path, comment: str, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    buf.write(comment)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    path.write_text(buf.getvalue())


def read_csv(path: str | Path) -> list[dict]:
    """Read a CSV written by this CLI, skipping the leading comment line."""
    lines = [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def _label_matrix(records: list[NoisyLabelRecord], contexts: list[TaskContext]) -> np.ndarray:
    by_id = {r.context_id: r for r in records}
    missing = [c.cid for c in contexts if c.cid not in by_id]
    if missing:
        raise InvalidArgumentError(f"no record for contexts {missing[:5]}")
    return np.stack([np.atleast_1d(by_id[c.cid].label) for c in contexts])


def _predictions(model, contexts: list[TaskContext]) -> np.ndarray:
    P = model.predict(np.stack([c.features for c in contexts]))
    if any(c.class_index is not None for c in contexts):
        P = P[np.arange(len(contexts)), [c.class_index for c in contexts]][:, None]
    if not np.all(np.isfinite(P)):
        raise NumericalFailureError("amortized predictions are not finite")
    return P


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_exact(cfg: RunConfig, out: Path, workers: int = 1) -> int:
    task = build_task(cfg)
    records = exact_labels(task, cfg)
    write_label_file(out / "ground_truth.jsonl", records, cfg.header("exact"))
    print(f"wrote {len(records)} exact records (n = {task.n_players})")
    return EXIT_OK


def cmd_gen_labels(cfg: RunConfig, out: Path, workers: int = 1) -> int:
    task = build_task(cfg)
    oracle = make_oracle(task, cfg)
    by_id = {c.cid: c for c in task.contexts}
    records = [c.record() for c in task.contexts]
    train = build_label_dataset(records, lambda c, seed: oracle(by_id[c.context_id], seed), cfg.seed, workers)
    val_seed = derive_seed(cfg.seed, "validation")
    val = build_label_dataset(records, lambda c, seed: oracle(by_id[c.context_id], seed), val_seed, workers)
    write_label_file(out / "labels.jsonl", train, dict(cfg.header("gen-labels"), split="train"))
    write_label_file(out / "labels_val.jsonl", val, dict(cfg.header("gen-labels"), split="validation", base_seed=val_seed))
    s = summarize(train)
    print(
        f"records={s['records']} failed={s['failed']} partial={s['partial']} biased={s['biased']} evals_total={s['evals_total']}"
    )
    if s["failed"] == s["records"]:
        print("every record failed", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _load_records(path: Path) -> list[NoisyLabelRecord]:
    if not path.is_file():
        raise ConfigError(f"missing input file {path}; run the earlier pipeline stage first")
    return read_label_file(path)[1]


def cmd_train(cfg: RunConfig, out: Path, workers: int = 1) -> int:
    task = build_task(cfg)
    train = _load_records(out / "labels.jsonl")
    val = _load_records(out / "labels_val.jsonl")
    mode = cfg.raw.get("preprocess", "none")
    train_p, scale = preprocess_labels(train, mode)
    val_p, _ = preprocess_labels(val, mode)
    if mode == "global_std_rescale":
        val_p = [replace(r, label=r.label / scale) for r in val]
    mcfg = ModelConfig(**cfg.raw.get("model", {}))
    ocfg = OptimizerConfig(**cfg.raw.get("optimizer", {}))
    n_classes = None
    if any(c.class_index is not None for c in task.contexts):
        n_classes = 1 + max(c.class_index for c in task.contexts)
    ctx = [c.record() for c in task.contexts]
    model, log = train_regression(train_p, ctx, mcfg, ocfg, val_p, label_scale=scale, output_dim=n_classes)
    model.config["run"] = cfg.header("train")
    save_checkpoint(out / "checkpoint.json", model)
    rows = [[e, log.train_loss[e - 1] if e > 0 else "", log.val_loss[e]] for e in range(len(log.val_loss))]
    _write_csv(out / "train_log.csv", _comment(cfg, "train"), ["epoch", "train_loss", "val_loss"], rows)
    summary = {"best_epoch": log.best_epoch, "best_val_loss": log.best_val_loss, "label_scale": scale}
    truth_path = out / "ground_truth.jsonl"
    if truth_path.is_file():
        truth = _label_matrix(read_label_file(truth_path)[1], task.contexts)
        labels = _label_matrix([r for r in train if not r.failed], task.contexts)
        summary["mse_amortized"] = float(np.mean((_predictions(model, task.contexts) - truth) ** 2))
        summary["mse_labels"] = float(np.mean((labels - truth) ** 2))
    (out / "train_summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_eval(cfg: RunConfig, out: Path, workers: int = 1) -> int:
    task = build_task(cfg)
    truth = _label_matrix(_load_records(out / "ground_truth.jsonl"), task.contexts)
    model = load_checkpoint(out / "checkpoint.json")
    mode = cfg.raw.get("eval", {}).get("mode", "global" if task.name in ("data_shapley", "distributional") else "per-example")
    train = [r for r in _load_records(out / "labels.jsonl") if not r.failed]
    labels = _label_matrix(train, task.contexts)
    k = int(cfg.oracle.get("num_samples", 0))
    evals = sum(r.evals_used for r in train)
    rows = [
        ({"task": task.name, "method": "amortized", "num_samples": k, "seed": cfg.seed}, compare(_predictions(model, task.contexts), truth, mode, evals)),
        ({"task": task.name, "method": cfg.oracle["method"], "num_samples": k, "seed": cfg.seed}, compare(labels, truth, mode, evals)),
    ]
    buf = out / "metrics.csv"
    write_report_csv(buf, rows)
    buf.write_text(_comment(cfg, "eval") + buf.read_text())
    for key, rep in rows:
        print(key["method"], f"mse={rep.mse:.6g}", f"pearson={rep.pearson}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Verification suite
# ---------------------------------------------------------------------------


def _check_axioms(vcfg: dict, seed: int):
    rng = np.random.default_rng(seed)
    worst = {}
    for _ in range(int(vcfg.get("axiom_games", 10))):
        n = int(rng.integers(4, 9))
        res = shapley_axiom_residuals(rng.standard_normal(1 << n), rng.standard_normal(1 << n), rng)
        for key, v in res.items():
            worst[key] = max(worst.get(key, 0.0), v)
    return max(worst.values()) <= 1e-9, json.dumps(worst, sort_keys=True)


def _check_datamodels(vcfg: dict, seed: int):
    rng = np.random.default_rng(seed)
    table = rng.standard_normal(1 << 6)
    for q in (0.1, 0.5, 0.9):
        exact_datamodels(table, q)  # raises on disagreement between the two forms
    gap = float(np.max(np.abs(exact_datamodels(table, 0.5) - exact_banzhaf(table))))
    return gap <= 1e-9, f"banzhaf_gap={gap:.3g}"


def _check_bias(vcfg: dict, seed: int):
    from .theory import estimate_bias_noise

    offset = float(vcfg.get("inject_bias", 0.0))
    rng = np.random.default_rng(seed)
    games = [random_table_game(6, rng) for _ in range(int(vcfg.get("bias_games", 10)))]
    noisy = lambda g, s: permutation_sampling(g, 4, s).label + offset
    stats = estimate_bias_noise(noisy, exact_shapley, games, int(vcfg.get("draws", 200)), seed)
    return not stats.flagged_biased(), f"bias_hat={stats.bias_hat:.4g} z={stats.bias_z:.3f} injected={offset}"


def _check_convergence(vcfg: dict, seed: int, out: Path, comment: str):
    from .theory import loglog_slope, run_thm1_experiment

    sigma = float(vcfg.get("sigma", 1.0))
    pts = run_thm1_experiment(5, 3, sigma, 1.0, [10, 100, 1000], int(vcfg.get("runs", 200)), seed)
    _write_csv(
        out / "convergence_curve.csv",
        comment,
        ["T", "empirical_excess", "bound", "runs", "sigma"],
        [[p.T, p.empirical_excess, p.bound, p.runs, p.sigma] for p in pts],
    )
    slope = loglog_slope(pts)
    ok = all(p.empirical_excess <= p.bound for p in pts) and abs(slope + 1) <= 0.3
    return ok, f"slope={slope:.3f}"


def _check_objective_bound(vcfg: dict, seed: int):
    from .theory import bias_noise_from_draws, check_sandwich_eq4

    rng = np.random.default_rng(seed)
    truth = rng.normal(size=(100, 5))
    bound_ok, misses = True, 0
    for offset in (0.0, 0.3):
        draws = truth[:, None, :] + offset + rng.normal(size=(100, 200, 5))
        stats = bias_noise_from_draws(draws, truth)
        for _ in range(int(vcfg.get("bound_models", 10))):
            rep = check_sandwich_eq4(truth + 0.5 * rng.normal(size=truth.shape), stats)
            bound_ok &= rep.satisfied
            misses += rep.equality_holds is False
    # the unbiased equality is a 3-SE test, so one miss is within its false-positive budget
    return bool(bound_ok and misses <= 1), f"equality_misses={misses}"


def _check_convexity(vcfg: dict, seed: int):
    from .theory import check_convexity_sandwich

    rng = np.random.default_rng(seed)
    truth = rng.normal(size=(50, 2))
    ok = all(
        check_convexity_sandwich(np.diag([1.0, 4.0]), truth + rng.normal(size=truth.shape), truth).satisfied
        for _ in range(100)
    )
    return ok, "H = diag(1, 4), 100 models"


CHECKS = {
    "axioms": ("exact Shapley efficiency, symmetry, null player and linearity on random games", _check_axioms),
    "datamodels": ("semivalue and regression forms of exact datamodels agree; q = 1/2 gives Banzhaf", _check_datamodels),
    "bias": ("permutation-sampling labels are not flagged as biased", _check_bias),
    "convergence": ("projected SGD excess objective under the bound with slope near -1", _check_convergence),
    "objective_bound": ("noisy and clean regression objectives satisfy the two-sided bound", _check_objective_bound),
    "convexity": ("quadratic objective gap sandwiched by the regression loss", _check_convexity),
}


def cmd_verify(cfg: RunConfig | None, out: Path | None, workers: int = 1, list_only: bool = False) -> int:
    if list_only:
        for name, (desc, _) in CHECKS.items():
            print(f"{name}: {desc}")
        return EXIT_OK
    vcfg = cfg.raw.get("verify", {})
    names = vcfg.get("checks", list(CHECKS))
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown checks {unknown}")
    comment = _comment(cfg, "verify")
    rows = []
    for name in names:
        seed = derive_seed(cfg.seed, name)
        fn = CHECKS[name][1]
        ok, detail = fn(vcfg, seed, out, comment) if name == "convergence" else fn(vcfg, seed)
        rows.append([name, "pass" if ok else "fail", detail])
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    _write_csv(out / "verify.csv", comment, ["check", "status", "detail"], rows)
    return EXIT_OK if all(r[1] == "pass" for r in rows) else EXIT_VERIFY


COMMANDS = {
    "exact": cmd_exact,
    "gen-labels": cmd_gen_labels,
    "train": cmd_train,
    "eval": cmd_eval,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochamort", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, required=name != "verify")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--out", type=Path, default=None)
        if name == "verify":
            s.add_argument("--list", action="store_true", help="print the check inventory and exit")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify" and args.list:
            return cmd_verify(None, None, list_only=True)
        if args.config is None:
            raise ConfigError("--config is required")
        if args.out is None:
            raise ConfigError("--out is required")
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg = load_config(args.config, args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out, args.workers)
    except (InvalidArgumentError, ResourceLimitError, UnsupportedError, KeyError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailureError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

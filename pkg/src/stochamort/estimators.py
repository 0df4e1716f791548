"""Randomized estimators used as noisy labels.

Each estimator is a pure function of (game, configuration, seed) and returns a
:class:`NoisyLabelRecord`. Randomness comes from a fresh
``numpy.random.Generator`` seeded per call, so batches of records are identical
whether generated serially or by a worker pool.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .errors import InvalidArgumentError, NumericalFailureError
from .exact import SemivalueWeights, lime_kernel_sizes, solve_weighted_ls
from .games import CooperativeGame, Dataset

METHODS = (
    "permutation",
    "kernelshap",
    "sgd_shapley",
    "msr_banzhaf",
    "lime_ls",
    "mc_semivalue",
    "mc_distributional",
    "mc_datamodels",
    "exact",
)

DEFAULT_LIME_WIDTH = 0.25
DEFAULT_SGD_LR = 5e-4


def derive_seed(base_seed: int, context_id: str) -> int:
    """64-bit seed mixed from a base seed and a context id."""
    h = hashlib.blake2b(f"{int(base_seed)}:{context_id}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


@dataclass
class NoisyLabelRecord:
    """One draw of a noisy oracle for one context."""

    context_id: str
    method: str
    num_samples: int
    seed: int
    label: np.ndarray
    evals_used: int
    partial: bool = False
    biased: bool = False
    failed: bool = False
    error: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.label = np.atleast_1d(np.asarray(self.label, dtype=float))

    @property
    def scalar(self) -> float:
        return float(self.label[0])

    def to_dict(self) -> dict:
        return {
            "context_id": self.context_id,
            "method": self.method,
            "num_samples": int(self.num_samples),
            "seed": int(self.seed),
            "label": [None if not np.isfinite(v) else float(v) for v in self.label],
            "evals_used": int(self.evals_used),
            "partial": self.partial,
            "biased": self.biased,
            "failed": self.failed,
            "error": self.error,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoisyLabelRecord":
        label = np.array([np.nan if v is None else v for v in d["label"]], dtype=float)
        return cls(
            context_id=d["context_id"],
            method=d["method"],
            num_samples=d["num_samples"],
            seed=d["seed"],
            label=label,
            evals_used=d["evals_used"],
            partial=d.get("partial", False),
            biased=d.get("biased", False),
            failed=d.get("failed", False),
            error=d.get("error"),
            extra=d.get("extra", {}),
        )


@dataclass(frozen=True)
class SamplingPlan:
    """Subset-sampling configuration for the Monte Carlo valuation estimators."""

    num_samples: int
    min_cardinality: int = 0
    max_cardinality: int | None = None
    with_replacement: bool = False
    paired: bool = False

    def bounds(self, n: int) -> tuple[int, int]:
        hi = n if self.max_cardinality is None else self.max_cardinality
        if self.num_samples < 1:
            raise InvalidArgumentError("num_samples must be positive")
        if not 0 <= self.min_cardinality <= hi <= n:
            raise InvalidArgumentError(f"need 0 <= min <= max <= {n}, got {self.min_cardinality}, {hi}")
        return self.min_cardinality, hi

    def to_dict(self) -> dict:
        return {
            "num_samples": self.num_samples,
            "min_cardinality": self.min_cardinality,
            "max_cardinality": self.max_cardinality,
            "with_replacement": self.with_replacement,
            "paired": self.paired,
        }


def _check_k(k: int, lo: int, name: str = "k"):
    if int(k) != k or k < lo:
        raise InvalidArgumentError(f"{name} must be an integer >= {lo}, got {k}")


def _uniform_subsets_of_size(rng: np.random.Generator, sizes: np.ndarray, n: int) -> np.ndarray:
    """Indicator rows, row ``j`` a uniform subset of ``range(n)`` with ``sizes[j]`` members."""
    keys = rng.random((len(sizes), n))
    ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
    return ranks < np.asarray(sizes)[:, None]


# ---------------------------------------------------------------------------
# Shapley value estimators
# ---------------------------------------------------------------------------


def permutation_estimate(game: CooperativeGame, perms: np.ndarray) -> np.ndarray:
    """Average marginal contributions along the given orderings (rows of ``perms``)."""
    perms = np.atleast_2d(np.asarray(perms, dtype=int))
    k, n = perms.shape
    steps = np.arange(n + 1)
    # prefix j contains the first j players of each ordering
    pos = np.empty_like(perms)
    np.put_along_axis(pos, perms, np.broadcast_to(np.arange(n), perms.shape), axis=1)
    z = pos[:, None, :] < steps[None, :, None]
    vals = game.values(z.reshape(k * (n + 1), n)).reshape(k, n + 1)
    marg = np.diff(vals, axis=1)
    out = np.zeros(n)
    np.add.at(out, perms.ravel(), marg.ravel())
    return out / k


def data_shapley_reference(
    game: CooperativeGame, num_permutations: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """High-precision Data Shapley for a ridge valuation game too large to enumerate.

    Averages marginal contributions over ``num_permutations`` orderings, scoring
    each ordering's prefixes incrementally. Returns the estimate and its
    per-point standard error.
    """
    learner = getattr(game, "learner", None)
    train = getattr(game, "train_set", None)
    if learner is None or train is None:
        raise InvalidArgumentError("game was not built by make_valuation_game")
    _check_k(num_permutations, 2, "num_permutations")
    rng = np.random.default_rng(seed)
    n = game.n
    total = np.zeros(n)
    total_sq = np.zeros(n)
    for _ in range(num_permutations):
        order = rng.permutation(n)
        marg = np.diff(learner.prefix_scores(train.X, train.y, order))
        total[order] += marg
        total_sq[order] += marg**2
    mean = total / num_permutations
    var = (total_sq - num_permutations * mean**2) / (num_permutations - 1)
    return mean, np.sqrt(np.maximum(var, 0.0) / num_permutations)


def permutation_sampling(game: CooperativeGame, k: int, seed: int, context_id: str = "") -> NoisyLabelRecord:
    _check_k(k, 1)
    rng = np.random.default_rng(seed)
    perms = np.argsort(rng.random((k, game.n)), axis=1)
    est = permutation_estimate(game, perms)
    return NoisyLabelRecord(context_id, "permutation", k, seed, est, k * (game.n + 1))


def shapley_size_law(n: int) -> np.ndarray:
    """Distribution of ``|S|`` over ``1 .. n-1`` when S is drawn proportional to the Shapley kernel."""
    s = np.arange(1, n)
    p = 1.0 / (s * (n - s))
    return p / p.sum()


def _shapley_kernel_subsets(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    sizes = rng.choice(np.arange(1, n), size=count, p=shapley_size_law(n))
    return _uniform_subsets_of_size(rng, sizes, n)


def kernelshap_from_samples(
    z: np.ndarray, values: np.ndarray, v_empty: float, v_full: float, weights: np.ndarray | None = None
) -> np.ndarray:
    w = np.ones(len(values)) if weights is None else weights
    _, a = solve_weighted_ls(z, values, w, constrained=True, v_empty=v_empty, v_full=v_full)
    return a


def kernelshap(game: CooperativeGame, k: int, seed: int, context_id: str = "") -> NoisyLabelRecord:
    """Constrained least squares on ``k`` subsets drawn proportional to the Shapley kernel.

    The empty and grand coalitions are evaluated once each to pin the
    constraint, so ``evals_used = k + 2``.
    """
    n = game.n
    if n < 2:
        raise InvalidArgumentError("kernelshap needs at least two players")
    _check_k(k, n + 2)
    rng = np.random.default_rng(seed)
    z = _shapley_kernel_subsets(rng, k, n)
    ends = np.vstack([np.zeros(n, dtype=bool), np.ones(n, dtype=bool)])
    vals = game.values(np.vstack([ends, z]))
    est = kernelshap_from_samples(z, vals[2:], vals[0], vals[1])
    return NoisyLabelRecord(context_id, "kernelshap", k, seed, est, k + 2)


def sgd_shapley(
    game: CooperativeGame,
    iterations: int,
    learning_rate: float = DEFAULT_SGD_LR,
    minibatch: int = 2,
    paired: bool = True,
    seed: int = 0,
    init: Sequence[float] | None = None,
    context_id: str = "",
) -> NoisyLabelRecord:
    """Projected SGD on the Shapley-kernel regression with a constant step size.

    Each step draws ``minibatch`` subsets proportional to the kernel (half of
    them complements of the other half when ``paired``), takes a gradient step
    on the mean squared residual, and projects onto the efficiency hyperplane
    ``sum(a) = v(N) - v(empty)``. The returned label is the uniform average of
    the iterates. ``learning_rate`` is in units of the game's value scale.
    """
    n = game.n
    if n < 2:
        raise InvalidArgumentError("sgd_shapley needs at least two players")
    _check_k(iterations, 1, "iterations")
    _check_k(minibatch, 2 if paired else 1, "minibatch")
    if paired and minibatch % 2:
        raise InvalidArgumentError("paired sampling needs an even minibatch")
    if not learning_rate > 0:
        raise InvalidArgumentError("learning_rate must be positive")
    rng = np.random.default_rng(seed)
    half = minibatch // 2 if paired else minibatch
    z = _shapley_kernel_subsets(rng, iterations * half, n)
    if paired:
        z = np.stack([z.reshape(iterations, half, n), ~z.reshape(iterations, half, n)], axis=1)
    z = z.reshape(iterations * minibatch, n)
    ends = np.vstack([np.zeros(n, dtype=bool), np.ones(n, dtype=bool)])
    vals = game.values(np.vstack([ends, z]))
    v0, total = vals[0], vals[1] - vals[0]
    y = (vals[2:] - v0).reshape(iterations, minibatch)
    zf = z.reshape(iterations, minibatch, n).astype(float)

    a = np.full(n, total / n) if init is None else np.array(init, dtype=float)
    a += (total - a.sum()) / n
    acc = np.zeros(n)
    for t in range(iterations):
        resid = y[t] - zf[t] @ a
        a = a + learning_rate * 2.0 * (zf[t].T @ resid) / minibatch
        a += (total - a.sum()) / n
        if not np.all(np.isfinite(a)):
            raise NumericalFailureError(f"sgd_shapley diverged at iteration {t}")
        acc += a
    evals = iterations * minibatch + 2
    return NoisyLabelRecord(
        context_id, "sgd_shapley", iterations, seed, acc / iterations, evals,
        extra={"learning_rate": learning_rate, "minibatch": minibatch, "paired": paired},
    )


# ---------------------------------------------------------------------------
# Banzhaf and LIME
# ---------------------------------------------------------------------------


def msr_from_samples(z: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, bool]:
    """Include-mean minus exclude-mean per player; NaN where a stratum is empty."""
    z = np.asarray(z, dtype=bool)
    values = np.asarray(values, dtype=float)
    n_in = z.sum(axis=0)
    n_out = z.shape[0] - n_in
    s_in = values @ z
    s_out = values.sum() - s_in
    with np.errstate(invalid="ignore", divide="ignore"):
        est = np.where((n_in > 0) & (n_out > 0), s_in / n_in - s_out / n_out, np.nan)
    return est, bool(np.any(np.isnan(est)))


def msr_banzhaf(game: CooperativeGame, k: int, seed: int, context_id: str = "") -> NoisyLabelRecord:
    _check_k(k, 2)
    rng = np.random.default_rng(seed)
    z = rng.random((k, game.n)) < 0.5
    est, partial = msr_from_samples(z, game.values(z))
    return NoisyLabelRecord(context_id, "msr_banzhaf", k, seed, est, k, partial=partial)


def lime_from_samples(z: np.ndarray, values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    _, a = solve_weighted_ls(z, values, weights)
    return a


def lime_ls(
    game: CooperativeGame, k: int, kernel_width: float = DEFAULT_LIME_WIDTH, seed: int = 0, context_id: str = ""
) -> NoisyLabelRecord:
    """Uniformly sampled subsets, each weighted by the LIME kernel; intercept dropped."""
    n = game.n
    _check_k(k, n + 2)
    rng = np.random.default_rng(seed)
    z = rng.random((k, n)) < 0.5
    w = lime_kernel_sizes(n, kernel_width)[z.sum(axis=1)]
    est = lime_from_samples(z, game.values(z), w)
    return NoisyLabelRecord(context_id, "lime_ls", k, seed, est, k, extra={"kernel_width": kernel_width})


# ---------------------------------------------------------------------------
# Data valuation and datamodels
# ---------------------------------------------------------------------------


def semivalue_sampling_law(weights: SemivalueWeights, lo: int = 0, hi: int | None = None) -> tuple[np.ndarray, bool]:
    """Cardinality law ``C(n-1,k) w(k)`` clipped to ``[lo, hi]``; flag set when mass was removed."""
    law = weights.cardinality_law()
    hi = weights.n - 1 if hi is None else min(hi, weights.n - 1)
    clipped = law.copy()
    clipped[:lo] = 0.0
    clipped[hi + 1 :] = 0.0
    mass = clipped.sum()
    if mass <= 0:
        raise InvalidArgumentError("cardinality bounds exclude every size with positive weight")
    biased = bool(mass < law.sum() * (1 - 1e-15))
    return clipped / mass, biased


def mc_semivalue(
    game: CooperativeGame,
    point_index: int,
    weights: SemivalueWeights,
    plan: SamplingPlan,
    seed: int,
    context_id: str = "",
) -> NoisyLabelRecord:
    """Average ``v(T + i) - v(T)`` over subsets T of the other points.

    ``|T|`` is drawn from the semivalue's cardinality law, then T uniformly
    among subsets of that size. Cardinality bounds other than the full range
    make the estimate biased and the record says so.
    """
    n = game.n
    if not 0 <= point_index < n:
        raise InvalidArgumentError(f"point index {point_index} outside 0..{n - 1}")
    if weights.n != n:
        raise InvalidArgumentError("semivalue weights do not match the game size")
    lo, hi = plan.bounds(n - 1)
    law, biased = semivalue_sampling_law(weights, lo, hi)
    k = plan.num_samples
    rng = np.random.default_rng(seed)
    sizes = rng.choice(n, size=k, p=law)
    others = np.delete(np.arange(n), point_index)
    z = np.zeros((k, n), dtype=bool)
    z[:, others] = _uniform_subsets_of_size(rng, sizes, n - 1)
    z_with = z.copy()
    z_with[:, point_index] = True
    vals = game.values(np.vstack([z_with, z]))
    est = float(np.mean(vals[:k] - vals[k:]))
    return NoisyLabelRecord(
        context_id, "mc_semivalue", k, seed, est, 2 * k, biased=biased,
        extra={"point_index": int(point_index), "plan": plan.to_dict()},
    )


def mc_distributional(
    x: Sequence[float],
    y: Any,
    pool: Dataset,
    utility: Callable[[list, list], np.ndarray],
    plan: SamplingPlan,
    seed: int,
    context_id: str = "",
) -> NoisyLabelRecord:
    """Distributional value of ``(x, y)``: mean of ``v(D + z) - v(D)`` over sampled datasets.

    Each ``D`` has a size drawn uniformly from the plan's cardinality bounds and
    is filled by sampling the pool with replacement. ``utility`` scores a batch
    of datasets given as parallel lists of feature arrays and label arrays.
    """
    if len(pool) == 0:
        raise InvalidArgumentError("source pool is empty")
    if not plan.with_replacement:
        raise InvalidArgumentError("distributional sampling draws with replacement")
    lo = plan.min_cardinality
    hi = plan.max_cardinality if plan.max_cardinality is not None else len(pool)
    if plan.num_samples < 1 or not 0 <= lo <= hi:
        raise InvalidArgumentError("invalid sampling plan")
    k = plan.num_samples
    rng = np.random.default_rng(seed)
    sizes = rng.integers(lo, hi + 1, size=k)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y_arr = np.asarray([y])
    X_with, y_with, X_without, y_without = [], [], [], []
    for s in sizes:
        idx = rng.integers(0, len(pool), size=int(s))
        X_without.append(pool.X[idx])
        y_without.append(pool.y[idx])
        X_with.append(np.vstack([pool.X[idx], x]))
        y_with.append(np.concatenate([pool.y[idx], y_arr]))
    vals = np.asarray(utility(X_with + X_without, y_with + y_without), dtype=float)
    est = float(np.mean(vals[:k] - vals[k:]))
    return NoisyLabelRecord(
        context_id, "mc_distributional", k, seed, est, 2 * k, extra={"plan": plan.to_dict()}
    )


def mc_datamodels(
    game: CooperativeGame, point_index: int, q: float, k: int, seed: int, context_id: str = ""
) -> NoisyLabelRecord:
    """Mean of ``v_x(T + i) - v_x(T - i)`` with T including each point with probability q."""
    if not 0 < q < 1:
        raise InvalidArgumentError("q must lie strictly between 0 and 1")
    _check_k(k, 1)
    n = game.n
    if not 0 <= point_index < n:
        raise InvalidArgumentError(f"point index {point_index} outside 0..{n - 1}")
    rng = np.random.default_rng(seed)
    z = rng.random((k, n)) < q
    z_with, z_without = z.copy(), z.copy()
    z_with[:, point_index] = True
    z_without[:, point_index] = False
    vals = game.values(np.vstack([z_with, z_without]))
    est = float(np.mean(vals[:k] - vals[k:]))
    return NoisyLabelRecord(
        context_id, "mc_datamodels", k, seed, est, 2 * k, extra={"point_index": int(point_index), "q": q}
    )


# ---------------------------------------------------------------------------
# Batch generation and label files
# ---------------------------------------------------------------------------


def run_contexts(
    fn: Callable[[str, int], NoisyLabelRecord],
    context_ids: Sequence[str],
    base_seed: int,
    workers: int = 1,
) -> list[NoisyLabelRecord]:
    """Call ``fn(context_id, seed)`` for every context with a derived per-context seed.

    Failures become records flagged ``failed`` instead of aborting the batch.
    Output order follows ``context_ids`` regardless of ``workers``.
    """

    def one(cid: str) -> NoisyLabelRecord:
        seed = derive_seed(base_seed, cid)
        try:
            return fn(cid, seed)
        except (InvalidArgumentError, NumericalFailureError, np.linalg.LinAlgError) as exc:
            return NoisyLabelRecord(cid, "failed", 0, seed, np.array([np.nan]), 0, failed=True, error=str(exc))

    if workers <= 1:
        return [one(c) for c in context_ids]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, context_ids))


def write_label_file(
    path: str | Path, records: Iterable[NoisyLabelRecord], header: dict, timestamp: bool = True
) -> None:
    """Line-delimited JSON: one header object, then one object per record."""
    head = dict(header)
    head["code_version"] = __version__
    if timestamp:
        head["created"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    lines = [json.dumps({"header": head}, sort_keys=True)]
    lines += [json.dumps(r.to_dict(), sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + "\n")


def read_label_file(path: str | Path) -> tuple[dict, list[NoisyLabelRecord]]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise InvalidArgumentError(f"{path}: empty label file")
    header = json.loads(lines[0]).get("header", {})
    records = [NoisyLabelRecord.from_dict(json.loads(line)) for line in lines[1:] if line.strip()]
    return header, records


def game_fingerprint(game: CooperativeGame, probes: int = 64, seed: int = 0) -> str:
    """Hash of the game's values on a fixed set of probe coalitions.

    Evaluates the game, so it adds to ``eval_counter``.
    """
    rng = np.random.default_rng(seed)
    z = rng.random((probes, game.n)) < 0.5
    vals = game.values(z)
    h = hashlib.sha256()
    h.update(str(game.n).encode())
    h.update(np.ascontiguousarray(vals, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def summarize(records: Sequence[NoisyLabelRecord]) -> dict:
    return {
        "records": len(records),
        "failed": sum(r.failed for r in records),
        "partial": sum(r.partial for r in records),
        "biased": sum(r.biased for r in records),
        "evals_total": int(math.fsum(r.evals_used for r in records)),
    }

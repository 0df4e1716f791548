"""Cooperative games over feature sets and training-data subsets.

A game maps coalitions of ``n`` players to real values. Every game here
evaluates coalitions in batches given as a boolean indicator matrix of shape
``(k, n)``; single-coalition calls go through the same path so that the
evaluation counter means the same thing everywhere.
"""

from __future__ import annotations

import csv
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .errors import InvalidArgumentError

MAX_MASK_PLAYERS = 62


@dataclass(frozen=True)
class Coalition:
    """A subset of ``range(n)`` stored as an integer bit set."""

    mask: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgumentError("player count must be positive")
        if self.mask < 0 or self.mask >> self.n:
            raise InvalidArgumentError(f"mask {self.mask} has bits outside 0..{self.n - 1}")

    @classmethod
    def from_indices(cls, indices: Iterable[int], n: int) -> "Coalition":
        mask = 0
        for i in indices:
            if not 0 <= i < n:
                raise InvalidArgumentError(f"index {i} outside 0..{n - 1}")
            mask |= 1 << int(i)
        return cls(mask, n)

    @classmethod
    def empty(cls, n: int) -> "Coalition":
        return cls(0, n)

    @classmethod
    def grand(cls, n: int) -> "Coalition":
        return cls((1 << n) - 1, n)

    def __contains__(self, i: int) -> bool:
        return 0 <= i < self.n and bool(self.mask >> i & 1)

    def __len__(self) -> int:
        return self.mask.bit_count()

    def add(self, i: int) -> "Coalition":
        return Coalition(self.mask | 1 << i, self.n)

    def remove(self, i: int) -> "Coalition":
        return Coalition(self.mask & ~(1 << i), self.n)

    def complement(self) -> "Coalition":
        return Coalition(((1 << self.n) - 1) ^ self.mask, self.n)

    def issubset(self, other: "Coalition") -> bool:
        return self.mask & ~other.mask == 0

    def indices(self) -> list[int]:
        return [i for i in range(self.n) if self.mask >> i & 1]

    def indicator(self) -> np.ndarray:
        out = np.zeros(self.n, dtype=bool)
        out[self.indices()] = True
        return out


CoalitionLike = Union[Coalition, int, Sequence[int], np.ndarray]


def masks_to_indicators(masks: np.ndarray, n: int) -> np.ndarray:
    """Expand integer masks (n <= 62) into a boolean ``(k, n)`` matrix."""
    masks = np.asarray(masks, dtype=np.int64)
    return ((masks[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)


def indicators_to_masks(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=bool)
    if z.shape[1] > MAX_MASK_PLAYERS:
        raise InvalidArgumentError("integer masks only support up to 62 players")
    return z.astype(np.int64) @ (np.int64(1) << np.arange(z.shape[1], dtype=np.int64))


def all_masks(n: int) -> np.ndarray:
    return np.arange(1 << n, dtype=np.int64)


def popcounts(masks: np.ndarray, n: int) -> np.ndarray:
    return masks_to_indicators(masks, n).sum(axis=1)


class CooperativeGame:
    """Value function over coalitions of ``n`` players.

    ``batch_value`` receives a boolean indicator matrix of shape ``(k, n)`` and
    returns ``k`` values. Each coalition evaluated adds one to
    ``eval_counter``; the counter is guarded by a lock so concurrent workers can
    share a game.
    """

    def __init__(
        self,
        n: int,
        batch_value: Callable[[np.ndarray], np.ndarray],
        deterministic: bool = True,
        name: str = "game",
        spec: dict | None = None,
    ):
        if n < 1:
            raise InvalidArgumentError("player count must be positive")
        self.n = n
        self._batch_value = batch_value
        self.deterministic = deterministic
        self.name = name
        self.spec = spec
        self._lock = threading.Lock()
        self._evals = 0

    @property
    def eval_counter(self) -> int:
        return self._evals

    def reset_counter(self) -> None:
        with self._lock:
            self._evals = 0

    def _count(self, k: int) -> None:
        with self._lock:
            self._evals += k

    def values(self, z: np.ndarray) -> np.ndarray:
        """Evaluate a batch of coalitions given as indicator rows."""
        z = np.asarray(z, dtype=bool)
        if z.ndim != 2 or z.shape[1] != self.n:
            raise InvalidArgumentError(f"expected indicator matrix with {self.n} columns, got {z.shape}")
        self._count(z.shape[0])
        if z.shape[0] == 0:
            return np.zeros(0)
        return np.asarray(self._batch_value(z), dtype=float).reshape(z.shape[0])

    def values_from_masks(self, masks: np.ndarray) -> np.ndarray:
        return self.values(masks_to_indicators(masks, self.n))

    def value(self, s: CoalitionLike) -> float:
        return float(self.values(self._as_indicator(s)[None, :])[0])

    def __call__(self, s: CoalitionLike) -> float:
        return self.value(s)

    def _as_indicator(self, s: CoalitionLike) -> np.ndarray:
        if isinstance(s, Coalition):
            if s.n != self.n:
                raise InvalidArgumentError(f"coalition over {s.n} players, game has {self.n}")
            return s.indicator()
        if isinstance(s, (int, np.integer)):
            return Coalition(int(s), self.n).indicator()
        arr = np.asarray(s)
        if arr.dtype == bool and arr.shape == (self.n,):
            return arr
        return Coalition.from_indices([int(i) for i in arr.ravel()], self.n).indicator()

    def __add__(self, other: "CooperativeGame") -> "CooperativeGame":
        if other.n != self.n:
            raise InvalidArgumentError("cannot add games with different player counts")
        return CooperativeGame(
            self.n,
            lambda z: self._batch_value(z) + other._batch_value(z),
            deterministic=self.deterministic and other.deterministic,
            name=f"({self.name}+{other.name})",
        )

    def scaled(self, c: float) -> "CooperativeGame":
        return CooperativeGame(self.n, lambda z: c * self._batch_value(z), self.deterministic, f"{c}*{self.name}")

    def permuted(self, sigma: Sequence[int]) -> "CooperativeGame":
        """Relabel players so that new player ``sigma[i]`` plays the role of old player ``i``."""
        sigma = np.asarray(sigma, dtype=int)
        if sorted(sigma.tolist()) != list(range(self.n)):
            raise InvalidArgumentError("sigma must be a permutation")
        return CooperativeGame(
            self.n, lambda z: self._batch_value(z[:, sigma]), self.deterministic, f"perm({self.name})"
        )


# ---------------------------------------------------------------------------
# Synthetic games
# ---------------------------------------------------------------------------


def make_additive_game(weights: Sequence[float]) -> CooperativeGame:
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0:
        raise InvalidArgumentError("weight vector must be nonempty")

    def batch(z):
        # masked sum rather than a matmul so each value is an exact left-to-right sum
        return np.where(z, w, 0.0).sum(axis=1)

    return CooperativeGame(w.size, batch, name="additive", spec={"type": "additive", "weights": w.tolist()})


def make_unanimity_game(required: CoalitionLike, n: int) -> CooperativeGame:
    if isinstance(required, Coalition):
        req = required.indices()
    elif isinstance(required, (int, np.integer)):
        req = Coalition(int(required), n).indices()
    else:
        req = Coalition.from_indices(required, n).indices()
    if not req:
        raise InvalidArgumentError("required coalition must be nonempty")

    def batch(z):
        return z[:, req].all(axis=1).astype(float)

    return CooperativeGame(n, batch, name="unanimity", spec={"type": "unanimity", "n": n, "required": req})


def make_majority_game(n: int, quota: int | None = None) -> CooperativeGame:
    """``v(S) = 1`` when ``|S| >= quota`` (default: strict majority)."""
    q = n // 2 + 1 if quota is None else quota

    def batch(z):
        return (z.sum(axis=1) >= q).astype(float)

    return CooperativeGame(n, batch, name="majority", spec={"type": "majority", "n": n, "quota": q})


def make_table_game(table: Sequence[float]) -> CooperativeGame:
    """Game given by an explicit value for every mask ``0 .. 2**n - 1``."""
    t = np.asarray(table, dtype=float).ravel()
    n = int(t.size).bit_length() - 1
    if n < 1 or t.size != 1 << n:
        raise InvalidArgumentError("table length must be a power of two >= 2")

    def batch(z):
        return t[indicators_to_masks(z)]

    return CooperativeGame(n, batch, name="table", spec={"type": "table", "values": t.tolist()})


def random_table_game(n: int, rng: np.random.Generator) -> CooperativeGame:
    """Random game with standard normal values on every coalition."""
    return make_table_game(rng.standard_normal(1 << n))


def game_from_spec(spec: dict) -> CooperativeGame:
    kind = spec.get("type")
    if kind == "additive":
        return make_additive_game(spec["weights"])
    if kind == "unanimity":
        return make_unanimity_game(spec["required"], int(spec["n"]))
    if kind == "majority":
        return make_majority_game(int(spec["n"]), spec.get("quota"))
    if kind == "table":
        return make_table_game(spec["values"])
    raise InvalidArgumentError(f"unknown game type {kind!r}")


def save_game_fixtures(path: str | Path, games: Sequence[dict]) -> None:
    """Write synthetic game specs (optionally with context ids and features) as JSON."""
    Path(path).write_text(json.dumps({"games": list(games)}, indent=2, sort_keys=True) + "\n")


def load_game_fixtures(path: str | Path) -> list[dict]:
    data = json.loads(Path(path).read_text())
    games = data["games"] if isinstance(data, dict) else data
    for spec in games:
        game_from_spec(spec)
    return games


# ---------------------------------------------------------------------------
# Feature-removal games
# ---------------------------------------------------------------------------


def make_feature_game(
    predictor: Callable[[np.ndarray], np.ndarray],
    instance: Sequence[float],
    baseline: Sequence[float],
    target_output: int | None = None,
) -> CooperativeGame:
    """Prediction on hybrids that keep ``instance`` on S and ``baseline`` off S.

    ``predictor`` maps a ``(k, d)`` array to ``(k,)`` or ``(k, outputs)``;
    ``target_output`` selects a column in the latter case.
    """
    x = np.asarray(instance, dtype=float).ravel()
    base = np.asarray(baseline, dtype=float).ravel()
    if x.shape != base.shape:
        raise InvalidArgumentError(f"instance has dimension {x.size}, baseline {base.size}")

    def batch(z):
        hybrid = np.where(z, x, base)
        out = np.asarray(predictor(hybrid), dtype=float)
        if out.ndim == 2:
            out = out[:, 0 if target_output is None else target_output]
        return out

    return CooperativeGame(x.size, batch, name="feature")


# ---------------------------------------------------------------------------
# Datasets and retraining games
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y).ravel()
        if self.X.shape[0] != self.y.shape[0]:
            raise InvalidArgumentError("X and y have different row counts")

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.feature_names)


def load_csv_dataset(path: str | Path) -> Dataset:
    """Read a CSV with a header row; the last column is the label."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if len(rows) < 2:
        raise InvalidArgumentError(f"{path}: need a header and at least one row")
    header, body = rows[0], rows[1:]
    arr = np.array([[float(v) for v in r] for r in body], dtype=float)
    y = arr[:, -1]
    if np.all(y == np.round(y)):
        y = y.astype(int)
    return Dataset(arr[:, :-1], y, header[:-1])


def save_csv_dataset(path: str | Path, data: Dataset) -> None:
    names = data.feature_names or [f"x{j}" for j in range(data.X.shape[1])]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(names + ["label"])
        for xi, yi in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in xi] + [yi.item() if hasattr(yi, "item") else yi])


@dataclass(frozen=True)
class RetrainConfig:
    """Deterministic learner used to score a training subset on a holdout set.

    ``learner`` is ``"ridge"`` (closed form on one-hot or real targets) or
    ``"logistic-fixed-newton"`` (binary or one-vs-rest logistic regression with
    a fixed number of Newton steps from zero). ``task`` selects classification
    or regression targets; regression only pairs with ridge and negative loss.
    """

    learner: str = "ridge"
    regularization: float = 1.0
    newton_steps: int = 8
    metric: str = "accuracy"
    task: str = "classification"

    def __post_init__(self):
        if self.learner not in ("ridge", "logistic-fixed-newton"):
            raise InvalidArgumentError(f"unknown learner {self.learner!r}")
        if self.metric not in ("accuracy", "negative-loss"):
            raise InvalidArgumentError(f"unknown metric {self.metric!r}")
        if self.task not in ("classification", "regression"):
            raise InvalidArgumentError(f"unknown task {self.task!r}")
        if self.regularization < 0:
            raise InvalidArgumentError("regularization must be nonnegative")
        if self.newton_steps < 1:
            raise InvalidArgumentError("newton_steps must be positive")
        if self.task == "regression" and (self.learner != "ridge" or self.metric != "negative-loss"):
            raise InvalidArgumentError("regression targets require the ridge learner and negative-loss metric")
        if self.learner == "logistic-fixed-newton" and self.regularization == 0:
            raise InvalidArgumentError("logistic learner needs positive regularization")

    def to_dict(self) -> dict:
        return {
            "learner": self.learner,
            "regularization": self.regularization,
            "newton_steps": self.newton_steps,
            "metric": self.metric,
            "task": self.task,
        }


_PROB_CLIP = 1e-6


def ridge_from_stats(count, sx, sy, sxx, sxy, lam):
    """Ridge with an unpenalized intercept from sufficient statistics.

    Leading axes are batch axes: ``count (B,)``, ``sx (B, d)``, ``sy (B, m)``,
    ``sxx (B, d, d)``, ``sxy (B, d, m)``. Rows with ``count == 0`` return zeros
    and must be handled by the caller.
    """
    count = np.asarray(count, dtype=float)
    safe = np.where(count > 0, count, 1.0)
    d = sx.shape[-1]
    gram = sxx - sx[:, :, None] * sx[:, None, :] / safe[:, None, None]
    rhs = sxy - sx[:, :, None] * sy[:, None, :] / safe[:, None, None]
    gram = gram + lam * np.eye(d)
    if lam > 0:
        w = np.linalg.solve(gram, rhs)
    else:
        w = np.linalg.pinv(gram) @ rhs
    intercept = (sy - np.einsum("bd,bdm->bm", sx, w)) / safe[:, None]
    return w, intercept


class SubsetLearner:
    """Fits the configured learner to a (multi)set of points and scores it.

    The holdout set fixes the metric; ``classes`` fixes the one-hot coding so
    that every subset, however small, is scored against the same label space.
    """

    def __init__(self, cfg: RetrainConfig, holdout: Dataset, classes: Sequence | None = None):
        if len(holdout) == 0:
            raise InvalidArgumentError("holdout set must be nonempty")
        self.cfg = cfg
        self.holdout = holdout
        if cfg.task == "classification":
            cls = np.unique(holdout.y) if classes is None else np.asarray(sorted(set(classes)))
            self.classes = cls
            self._hold_idx = self.class_index(holdout.y)
            freq = np.bincount(self._hold_idx, minlength=len(cls)) / len(holdout)
            self.prior_probs = freq
            self.prior_class = int(np.argmax(freq))
        else:
            self.classes = None
            self.prior_mean = float(np.mean(holdout.y))

    def class_index(self, y) -> np.ndarray:
        y = np.asarray(y).ravel()
        idx = np.searchsorted(self.classes, y)
        idx = np.clip(idx, 0, len(self.classes) - 1)
        if not np.all(self.classes[idx] == y):
            raise InvalidArgumentError("label outside the known class set")
        return idx

    def targets(self, y) -> np.ndarray:
        if self.cfg.task == "regression":
            return np.asarray(y, dtype=float).reshape(-1, 1)
        return np.eye(len(self.classes))[self.class_index(y)]

    # -- fitted predictors are returned as (kind, params) so they can be batched --

    def fit_outputs(self, X_train_list, y_train_list, X_eval) -> np.ndarray:
        """Raw outputs on ``X_eval`` for each training set in the lists.

        Returns ``(B, len(X_eval), m)``: ridge scores / regression predictions,
        or class probabilities for the logistic learner.
        """
        B = len(X_train_list)
        m = 1 if self.cfg.task == "regression" else len(self.classes)
        out = np.empty((B, X_eval.shape[0], m))
        if self.cfg.learner == "ridge":
            d = X_eval.shape[1]
            count = np.zeros(B)
            sx = np.zeros((B, d))
            sy = np.zeros((B, m))
            sxx = np.zeros((B, d, d))
            sxy = np.zeros((B, d, m))
            for b, (Xt, yt) in enumerate(zip(X_train_list, y_train_list)):
                Y = self.targets(yt)
                count[b] = Xt.shape[0]
                sx[b] = Xt.sum(axis=0)
                sy[b] = Y.sum(axis=0)
                sxx[b] = Xt.T @ Xt
                sxy[b] = Xt.T @ Y
            w, c = ridge_from_stats(count, sx, sy, sxx, sxy, self.cfg.regularization)
            out[:] = np.einsum("ed,bdm->bem", X_eval, w) + c[:, None, :]
        else:
            for b, (Xt, yt) in enumerate(zip(X_train_list, y_train_list)):
                out[b] = self._logistic_probs(Xt, yt, X_eval)
        for b, yt in enumerate(y_train_list):
            if len(yt) == 0:
                out[b] = self._prior_outputs(X_eval.shape[0])
            elif self.cfg.task == "classification":
                present = np.unique(self.class_index(yt))
                if present.size == 1:
                    out[b] = self._constant_class_outputs(int(present[0]), X_eval.shape[0])
        return out

    def _prior_outputs(self, k: int) -> np.ndarray:
        if self.cfg.task == "regression":
            return np.full((k, 1), self.prior_mean)
        if self.cfg.metric == "accuracy":
            return np.tile(np.eye(len(self.classes))[self.prior_class], (k, 1))
        return np.tile(self.prior_probs, (k, 1))

    def _constant_class_outputs(self, c: int, k: int) -> np.ndarray:
        row = np.eye(len(self.classes))[c]
        if self.cfg.learner == "logistic-fixed-newton":
            row = np.clip(row, _PROB_CLIP, 1 - _PROB_CLIP)
            row = row / row.sum()
        return np.tile(row, (k, 1))

    def _logistic_probs(self, Xt, yt, X_eval) -> np.ndarray:
        K = len(self.classes)
        idx = self.class_index(yt)
        A = np.hstack([Xt, np.ones((Xt.shape[0], 1))])
        E = np.hstack([X_eval, np.ones((X_eval.shape[0], 1))])
        lam = self.cfg.regularization
        heads = [1] if K == 2 else list(range(K))
        logits = np.empty((E.shape[0], len(heads)))
        for h, c in enumerate(heads):
            t = (idx == c).astype(float)
            w = np.zeros(A.shape[1])
            for _ in range(self.cfg.newton_steps):
                p = _sigmoid(A @ w)
                grad = A.T @ (p - t) + lam * w
                hess = (A * (p * (1 - p))[:, None]).T @ A + lam * np.eye(A.shape[1])
                w = w - np.linalg.solve(hess, grad)
            logits[:, h] = E @ w
        if K == 2:
            p1 = _sigmoid(logits[:, 0])
            probs = np.stack([1 - p1, p1], axis=1)
        else:
            probs = _sigmoid(logits)
            probs = probs / probs.sum(axis=1, keepdims=True)
        return np.clip(probs, _PROB_CLIP, 1 - _PROB_CLIP)

    def metric(self, outputs: np.ndarray) -> np.ndarray:
        """Holdout metric for a batch of outputs ``(B, len(holdout), m)``."""
        if self.cfg.task == "regression":
            err = outputs[:, :, 0] - np.asarray(self.holdout.y, dtype=float)[None, :]
            return -np.mean(err**2, axis=1)
        if self.cfg.metric == "accuracy":
            pred = np.argmax(outputs, axis=2)
            return np.mean(pred == self._hold_idx[None, :], axis=1)
        onehot = np.eye(len(self.classes))[self._hold_idx]
        if self.cfg.learner == "ridge":
            return -np.mean(np.sum((outputs - onehot[None]) ** 2, axis=2), axis=1)
        p = np.take_along_axis(outputs, self._hold_idx[None, :, None], axis=2)[:, :, 0]
        return np.mean(np.log(p), axis=1)

    def prefix_scores(self, X: np.ndarray, y, order: np.ndarray) -> np.ndarray:
        """Scores of the ridge learner on every prefix ``order[:j]``, ``j = 0..len(order)``.

        Same outputs as :meth:`score` on each prefix, computed from cumulative
        sufficient statistics.
        """
        if self.cfg.learner != "ridge":
            raise InvalidArgumentError("prefix scoring is only available for the ridge learner")
        order = np.asarray(order, dtype=int)
        Xo = np.asarray(X, dtype=float)[order]
        Y = self.targets(np.asarray(y)[order])
        n, d = Xo.shape
        m = Y.shape[1]
        zero = lambda *s: np.zeros((1,) + s)
        count = np.arange(n + 1, dtype=float)
        sx = np.concatenate([zero(d), np.cumsum(Xo, axis=0)])
        sy = np.concatenate([zero(m), np.cumsum(Y, axis=0)])
        sxx = np.concatenate([zero(d, d), np.cumsum(Xo[:, :, None] * Xo[:, None, :], axis=0)])
        sxy = np.concatenate([zero(d, m), np.cumsum(Xo[:, :, None] * Y[:, None, :], axis=0)])
        w, c = ridge_from_stats(count, sx, sy, sxx, sxy, self.cfg.regularization)
        H = self.holdout.X.shape[0]
        out = np.einsum("ed,bdm->bem", self.holdout.X, w) + c[:, None, :]
        out[0] = self._prior_outputs(H)
        if self.cfg.task == "classification":
            present = np.concatenate([np.zeros((1, m)), np.cumsum(Y, axis=0)]) > 0
            single = np.flatnonzero(present.sum(axis=1) == 1)
            for j in single:
                out[j] = self._constant_class_outputs(int(np.argmax(present[j])), H)
        return self.metric(out)

    def score(self, X_train_list, y_train_list) -> np.ndarray:
        return self.metric(self.fit_outputs(X_train_list, y_train_list, self.holdout.X))

    def point_output(self, X_train_list, y_train_list, x, y, output: str) -> np.ndarray:
        """Per-example output on one inference point for each training set."""
        outs = self.fit_outputs(X_train_list, y_train_list, np.asarray(x, dtype=float).reshape(1, -1))[:, 0, :]
        if self.cfg.task == "regression":
            pred = outs[:, 0]
            return pred if output == "raw" else (pred - float(y)) ** 2
        c = int(self.class_index([y])[0])
        if output == "raw":
            return outs[:, c]
        if self.cfg.learner == "ridge":
            return np.sum((outs - np.eye(len(self.classes))[c]) ** 2, axis=1)
        return -np.log(outs[:, c])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _classes_for(train: Dataset, holdout: Dataset, cfg: RetrainConfig):
    if cfg.task == "regression":
        return None
    return np.union1d(np.unique(train.y), np.unique(holdout.y))


def make_valuation_game(train_set: Dataset, holdout: Dataset, cfg: RetrainConfig) -> CooperativeGame:
    """``v(T)`` = holdout metric of the learner trained on the points in ``T``.

    The empty coalition scores the constant prior predictor built from the
    holdout labels (majority class, class frequencies, or mean).
    """
    if len(train_set) < 1:
        raise InvalidArgumentError("training set must contain at least one point")
    learner = SubsetLearner(cfg, holdout, _classes_for(train_set, holdout, cfg))

    def batch(z):
        Xs = [train_set.X[row] for row in z]
        ys = [train_set.y[row] for row in z]
        return learner.score(Xs, ys)

    game = CooperativeGame(len(train_set), batch, name="valuation")
    game.learner = learner
    game.train_set = train_set
    return game


def make_datamodels_game(
    train_set: Dataset,
    holdout: Dataset,
    cfg: RetrainConfig,
    inference_x: Sequence[float],
    inference_y,
    output: str = "loss",
) -> CooperativeGame:
    """``v_x(T)``: loss or raw prediction at one inference point after training on ``T``."""
    if output not in ("loss", "raw"):
        raise InvalidArgumentError("output must be 'loss' or 'raw'")
    if len(train_set) < 1:
        raise InvalidArgumentError("training set must contain at least one point")
    learner = SubsetLearner(cfg, holdout, _classes_for(train_set, holdout, cfg))
    x = np.asarray(inference_x, dtype=float)

    def batch(z):
        Xs = [train_set.X[row] for row in z]
        ys = [train_set.y[row] for row in z]
        return learner.point_output(Xs, ys, x, inference_y, output)

    game = CooperativeGame(len(train_set), batch, name="datamodels")
    game.learner = learner
    return game


def make_blob_dataset(
    n: int, d: int, rng: np.random.Generator, separation: float = 2.0, flip_fraction: float = 0.0
) -> tuple[Dataset, np.ndarray]:
    """Two Gaussian blobs with labels 0/1; returns the data and the flip flags."""
    y = np.arange(n) % 2
    rng.shuffle(y)
    centers = np.zeros((2, d))
    centers[1, 0] = separation
    X = centers[y] + rng.standard_normal((n, d))
    flags = np.zeros(n, dtype=bool)
    n_flip = int(round(flip_fraction * n))
    if n_flip:
        flip_idx = rng.choice(n, size=n_flip, replace=False)
        flags[flip_idx] = True
        y = y.copy()
        y[flip_idx] = 1 - y[flip_idx]
    return Dataset(X, y, [f"x{j}" for j in range(d)]), flags

"""Amortized models trained on noisy labels.

Two model families are supported: a linear map ``a(b) = W b`` (optionally with
a bias) and a one-hidden-layer tanh network with hand-written backprop.
``train_regression`` fits either with minibatch SGD + momentum on the squared
error to noisy labels; ``train_linear_thm1`` runs the single-sample projected
SGD with weighted iterate averaging used by the convergence analysis.
"""

from __future__ import annotations

import copy
import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError
from .estimators import NoisyLabelRecord, run_contexts


@dataclass
class ContextRecord:
    context_id: str
    features: np.ndarray
    class_index: int | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float).ravel()
        if not np.all(np.isfinite(self.features)):
            raise InvalidArgumentError(f"context {self.context_id}: non-finite features")


@dataclass
class ModelConfig:
    kind: str = "linear"
    hidden: int = 64
    bias: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise InvalidArgumentError(f"unknown model kind {self.kind!r}")
        if self.hidden < 1:
            raise InvalidArgumentError("hidden width must be positive")


@dataclass
class OptimizerConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    schedule: str = "linear"
    seed: int = 0

    def __post_init__(self):
        if self.schedule not in ("constant", "linear", "cosine"):
            raise InvalidArgumentError(f"unknown schedule {self.schedule!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise InvalidArgumentError("invalid optimizer configuration")
        if not 0 <= self.momentum < 1:
            raise InvalidArgumentError("momentum must lie in [0, 1)")

    def lr_at(self, step: int, total: int) -> float:
        if self.schedule == "constant" or total <= 1:
            return self.learning_rate
        frac = step / total
        if self.schedule == "linear":
            return self.learning_rate * (1.0 - frac)
        return self.learning_rate * 0.5 * (1.0 + np.cos(np.pi * frac))


@dataclass
class AmortizedModel:
    """Parameters plus the label scale applied at prediction time."""

    kind: str
    params: dict[str, np.ndarray]
    input_dim: int
    output_dim: int
    label_scale: float = 1.0
    config: dict = field(default_factory=dict)

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Outputs in training (rescaled) units."""
        X = np.atleast_2d(X)
        p = self.params
        if self.kind == "linear":
            out = X @ p["W"].T
            if "b" in p:
                out = out + p["b"]
            return out
        H = np.tanh(X @ p["W1"].T + p["b1"])
        return H @ p["W2"].T + p["b2"]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.input_dim:
            raise InvalidArgumentError(f"expected {self.input_dim} features, got {X.shape[1]}")
        return self.forward(X) * self.label_scale

    def loss_and_grad(self, X: np.ndarray, Y: np.ndarray, mask: np.ndarray | None = None):
        """Mean over rows of the (masked) squared error, and its gradient."""
        p = self.params
        k = X.shape[0]
        if self.kind == "linear":
            out = X @ p["W"].T + (p["b"] if "b" in p else 0.0)
        else:
            pre = X @ p["W1"].T + p["b1"]
            H = np.tanh(pre)
            out = H @ p["W2"].T + p["b2"]
        resid = out - Y
        if mask is not None:
            resid = resid * mask
        loss = float(np.sum(resid**2) / k)
        dout = 2.0 * resid / k
        grads = {}
        if self.kind == "linear":
            grads["W"] = dout.T @ X
            if "b" in p:
                grads["b"] = dout.sum(axis=0)
        else:
            grads["W2"] = dout.T @ H
            grads["b2"] = dout.sum(axis=0)
            dpre = (dout @ p["W2"]) * (1.0 - H**2)
            grads["W1"] = dpre.T @ X
            grads["b1"] = dpre.sum(axis=0)
        return loss, grads

    def fingerprint(self) -> str:
        h = hashlib.sha256(json.dumps(self.config, sort_keys=True).encode())
        return h.hexdigest()[:16]


def init_model(cfg: ModelConfig, input_dim: int, output_dim: int) -> AmortizedModel:
    """Linear models start at zero; MLP weights are uniform with fan-in scaling."""
    if cfg.kind == "linear":
        params = {"W": np.zeros((output_dim, input_dim))}
        if cfg.bias:
            params["b"] = np.zeros(output_dim)
    else:
        rng = np.random.default_rng(cfg.seed)
        r1 = 1.0 / np.sqrt(input_dim)
        r2 = 1.0 / np.sqrt(cfg.hidden)
        params = {
            "W1": rng.uniform(-r1, r1, (cfg.hidden, input_dim)),
            "b1": rng.uniform(-r1, r1, cfg.hidden),
            "W2": rng.uniform(-r2, r2, (output_dim, cfg.hidden)),
            "b2": np.zeros(output_dim),
        }
    return AmortizedModel(cfg.kind, params, input_dim, output_dim, 1.0, {"model": asdict(cfg)})


def predict(model: AmortizedModel, context) -> np.ndarray:
    feats = context.features if isinstance(context, ContextRecord) else np.asarray(context, dtype=float)
    out = model.predict(feats.reshape(1, -1) if feats.ndim == 1 else feats)
    if not np.all(np.isfinite(out)):
        raise NumericalFailureError("prediction is not finite")
    return out[0] if feats.ndim == 1 else out


# ---------------------------------------------------------------------------
# Label datasets and preprocessing
# ---------------------------------------------------------------------------


def build_label_dataset(
    contexts: Sequence[ContextRecord],
    oracle: Callable[[ContextRecord, int], NoisyLabelRecord],
    base_seed: int,
    workers: int = 1,
) -> list[NoisyLabelRecord]:
    """One noisy label per context; seeds derived from ``base_seed`` and the context id."""
    if not contexts:
        raise InvalidArgumentError("no contexts given")
    by_id = {c.context_id: c for c in contexts}
    if len(by_id) != len(contexts):
        raise InvalidArgumentError("context ids must be unique")

    def fn(cid, seed):
        rec = oracle(by_id[cid], seed)
        rec.context_id = cid
        return rec

    return run_contexts(fn, [c.context_id for c in contexts], base_seed, workers)


def preprocess_labels(
    records: Sequence[NoisyLabelRecord], mode: str = "none"
) -> tuple[list[NoisyLabelRecord], float]:
    """Rescale labels for training; returns the new records and the label scale.

    ``global_std_rescale`` divides every label by the pooled standard deviation
    (returned as the scale to multiply predictions by). ``per_label_unit_norm``
    normalizes each label vector separately, which biases the labels; those
    records are flagged and zero-norm labels are dropped with a warning.
    """
    if not records:
        raise InvalidArgumentError("no records to preprocess")
    if mode == "none":
        return list(records), 1.0
    usable = [r for r in records if not r.failed]
    if mode == "global_std_rescale":
        pooled = np.concatenate([r.label[np.isfinite(r.label)] for r in usable])
        scale = float(np.std(pooled))
        if not scale > 0:
            raise InvalidArgumentError("labels have zero spread; cannot rescale")
        out = [_with_label(r, r.label / scale) for r in records]
        return out, scale
    if mode == "per_label_unit_norm":
        out = []
        for r in records:
            norm = float(np.linalg.norm(r.label))
            if not norm > 0:
                warnings.warn(f"context {r.context_id}: zero-norm label skipped")
                continue
            rec = _with_label(r, r.label / norm)
            rec.biased = True
            out.append(rec)
        return out, 1.0
    raise InvalidArgumentError(f"unknown preprocessing mode {mode!r}")


def _with_label(r: NoisyLabelRecord, label: np.ndarray) -> NoisyLabelRecord:
    rec = copy.copy(r)
    rec.label = np.asarray(label, dtype=float)
    rec.extra = dict(r.extra)
    return rec


def _join(records, contexts, output_dim: int | None = None):
    """Stack features, targets and loss masks for records with a matching context."""
    by_id = {c.context_id: c for c in contexts}
    rows = [r for r in records if not r.failed]
    missing = [r.context_id for r in rows if r.context_id not in by_id]
    if missing:
        raise InvalidArgumentError(f"records without a context: {missing[:5]}")
    if not rows:
        raise InvalidArgumentError("no usable records")
    ctx = [by_id[r.context_id] for r in rows]
    X = np.stack([c.features for c in ctx])
    per_class = any(c.class_index is not None for c in ctx)
    if per_class:
        if output_dim is None:
            output_dim = 1 + max(int(c.class_index) for c in ctx)
        Y = np.zeros((len(rows), output_dim))
        M = np.zeros((len(rows), output_dim))
        for j, (r, c) in enumerate(zip(rows, ctx)):
            Y[j, c.class_index] = r.scalar
            M[j, c.class_index] = 1.0
        return X, Y, M
    Y = np.stack([r.label for r in rows])
    M = np.isfinite(Y).astype(float)
    return X, np.nan_to_num(Y), M


# ---------------------------------------------------------------------------
# Regression training
# ---------------------------------------------------------------------------


@dataclass
class TrainLog:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")


def fit_regression(
    model: AmortizedModel,
    X: np.ndarray,
    Y: np.ndarray,
    M: np.ndarray | None,
    X_val: np.ndarray,
    Y_val: np.ndarray,
    M_val: np.ndarray | None,
    opt: OptimizerConfig,
) -> tuple[AmortizedModel, TrainLog]:
    """Minibatch SGD with momentum; returns the parameters with the best validation loss."""
    model = copy.deepcopy(model)
    log = TrainLog()
    rng = np.random.default_rng(opt.seed)
    N = X.shape[0]
    steps_per_epoch = -(-N // opt.batch_size)
    total = opt.epochs * steps_per_epoch
    vel = {k: np.zeros_like(v) for k, v in model.params.items()}

    best = copy.deepcopy(model.params)
    log.best_val_loss, _ = model.loss_and_grad(X_val, Y_val, M_val)
    log.val_loss.append(log.best_val_loss)
    step = 0
    for epoch in range(1, opt.epochs + 1):
        order = rng.permutation(N)
        running = 0.0
        for b in range(steps_per_epoch):
            idx = order[b * opt.batch_size : (b + 1) * opt.batch_size]
            loss, grads = model.loss_and_grad(X[idx], Y[idx], None if M is None else M[idx])
            if not np.isfinite(loss):
                raise NumericalFailureError(f"non-finite loss at epoch {epoch}, batch {b}")
            lr = opt.lr_at(step, total)
            for k, g in grads.items():
                vel[k] = opt.momentum * vel[k] + g
                model.params[k] -= lr * vel[k]
            running += loss * len(idx)
            step += 1
        log.train_loss.append(running / N)
        val, _ = model.loss_and_grad(X_val, Y_val, M_val)
        if not np.isfinite(val):
            raise NumericalFailureError(f"non-finite validation loss at epoch {epoch}")
        log.val_loss.append(val)
        if val < log.best_val_loss:
            log.best_val_loss, log.best_epoch = val, epoch
            best = copy.deepcopy(model.params)
    model.params = best
    return model, log


def train_regression(
    records: Sequence[NoisyLabelRecord],
    contexts: Sequence[ContextRecord],
    model_cfg: ModelConfig,
    opt_cfg: OptimizerConfig,
    validation_records: Sequence[NoisyLabelRecord],
    validation_contexts: Sequence[ContextRecord] | None = None,
    label_scale: float = 1.0,
    output_dim: int | None = None,
) -> tuple[AmortizedModel, TrainLog]:
    """Fit an amortized model to noisy labels joined with contexts by id.

    ``records`` and ``validation_records`` must already be in training units
    (see :func:`preprocess_labels`); ``label_scale`` is stored on the model.
    Records whose context carries a ``class_index`` train a per-class head:
    the model has one output per class and only the labeled one enters the loss.
    """
    X, Y, M = _join(records, contexts, output_dim)
    X_val, Y_val, M_val = _join(validation_records, validation_contexts or contexts, Y.shape[1])
    model = init_model(model_cfg, X.shape[1], Y.shape[1])
    model.config["optimizer"] = asdict(opt_cfg)
    model, log = fit_regression(model, X, Y, M, X_val, Y_val, M_val, opt_cfg)
    model.label_scale = float(label_scale)
    model.config["best_val_loss"] = log.best_val_loss
    return model, log


# ---------------------------------------------------------------------------
# Projected SGD with weighted averaging (linear models)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Thm1Config:
    """Projected SGD: radius ``D``, strong-convexity constant ``alpha``, ``T`` steps.

    Step ``t`` (1-based) uses ``eta_t = 2 / (alpha (t + 1))``; the averaged
    iterate weights ``theta_t`` by ``2 t / (T (T + 1))``.
    """

    D: float
    alpha: float
    T: int
    mode: str = "redraw"

    def __post_init__(self):
        if not (self.D > 0 and self.alpha > 0 and self.T >= 1):
            raise InvalidArgumentError("need D > 0, alpha > 0 and T >= 1")
        if self.mode not in ("redraw", "stored"):
            raise InvalidArgumentError("mode must be 'redraw' or 'stored'")

    def step_size(self, t) -> np.ndarray:
        return 2.0 / (self.alpha * (np.asarray(t, dtype=float) + 1.0))

    def averaging_weights(self, T: int | None = None) -> np.ndarray:
        T = self.T if T is None else T
        t = np.arange(1, T + 1, dtype=float)
        return 2.0 * t / (T * (T + 1.0))


def projected_sgd_runs(
    B: np.ndarray, A: np.ndarray, cfg: Thm1Config, grid: Sequence[int] | None = None
) -> dict:
    """Run independent projected-SGD chains side by side.

    ``B`` holds contexts ``(R, T, d)`` and ``A`` noisy labels ``(R, T, m)``: chain
    ``r`` takes step ``t`` on the pair ``(B[r, t-1], A[r, t-1])``. Returns the
    averaged iterates at each step count in ``grid`` (default ``[T]``), the
    final iterate, per-step Frobenius norms, and the per-step sample losses.
    """
    R, T, d = B.shape
    m = A.shape[2]
    if T < cfg.T:
        raise InvalidArgumentError("not enough samples for the configured step count")
    grid = sorted(set([cfg.T] if grid is None else grid))
    if grid[-1] > cfg.T or grid[0] < 1:
        raise InvalidArgumentError("grid points must lie in 1..T")
    theta = np.zeros((R, m, d))
    weighted = np.zeros((R, m, d))
    norms = np.empty((R, cfg.T))
    losses = np.empty((R, cfg.T))
    averaged = {}
    gi = 0
    for t in range(1, cfg.T + 1):
        b = B[:, t - 1, :]
        resid = np.einsum("rmd,rd->rm", theta, b) - A[:, t - 1, :]
        losses[:, t - 1] = np.sum(resid**2, axis=1)
        theta = theta - cfg.step_size(t) * 2.0 * resid[:, :, None] * b[:, None, :]
        nrm = np.sqrt(np.sum(theta**2, axis=(1, 2)))
        shrink = np.minimum(1.0, cfg.D / np.maximum(nrm, np.finfo(float).tiny))
        theta = theta * shrink[:, None, None]
        if not np.all(np.isfinite(theta)):
            raise NumericalFailureError(f"non-finite iterate at step {t}")
        norms[:, t - 1] = nrm * shrink
        weighted += t * theta
        while gi < len(grid) and grid[gi] == t:
            averaged[t] = weighted * (2.0 / (t * (t + 1.0)))
            gi += 1
    return {"averaged": averaged, "final": theta, "norms": norms, "losses": losses}


def train_linear_thm1(
    contexts: np.ndarray,
    cfg: Thm1Config,
    seed: int,
    labels: np.ndarray | None = None,
    oracle: Callable[[int, np.random.Generator], np.ndarray] | None = None,
) -> tuple[AmortizedModel, dict]:
    """Single-chain projected SGD on a finite context set.

    Each step samples a context uniformly with replacement. In ``redraw`` mode
    ``oracle(index, rng)`` produces a fresh noisy label per visit; in
    ``stored`` mode the fixed ``labels[index]`` is reused.
    """
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, contexts.shape[0], size=cfg.T)
    if cfg.mode == "redraw":
        if oracle is None:
            raise InvalidArgumentError("redraw mode needs an oracle")
        A = np.stack([np.atleast_1d(oracle(int(i), rng)) for i in idx])
    else:
        if labels is None:
            raise InvalidArgumentError("stored mode needs labels")
        A = np.atleast_2d(np.asarray(labels, dtype=float))[idx]
    out = projected_sgd_runs(contexts[idx][None], A[None], cfg)
    W = out["averaged"][cfg.T][0]
    model = AmortizedModel("linear", {"W": W}, W.shape[1], W.shape[0], 1.0, {"projected_sgd": asdict(cfg), "seed": seed})
    trace = {
        "norms": out["norms"][0],
        "running_objective": np.cumsum(out["losses"][0]) / np.arange(1, cfg.T + 1),
    }
    return model, trace


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path: str | Path, model: AmortizedModel) -> None:
    payload = {
        "kind": model.kind,
        "input_dim": model.input_dim,
        "output_dim": model.output_dim,
        "label_scale": model.label_scale,
        "fingerprint": model.fingerprint(),
        "config": model.config,
        "params": {
            k: {"shape": list(v.shape), "data": [float(x) for x in np.ravel(v, order="C")]}
            for k, v in sorted(model.params.items())
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> AmortizedModel:
    payload = json.loads(Path(path).read_text())
    params = {
        k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in payload["params"].items()
    }
    return AmortizedModel(
        payload["kind"], params, payload["input_dim"], payload["output_dim"], payload["label_scale"], payload["config"]
    )

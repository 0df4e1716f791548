"""Accuracy metrics against ground truth and mislabeled-point detection scores."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata
from sklearn.metrics import average_precision_score, roc_auc_score

from .errors import InvalidArgumentError

REPORT_COLUMNS = (
    "task",
    "method",
    "num_samples",
    "seed",
    "mse",
    "mse_normalized",
    "pearson",
    "spearman",
    "sign_agreement",
    "auroc",
    "evals_total",
)


@dataclass
class MetricReport:
    """Correlations are ``None`` when undefined (constant inputs)."""

    mse: float
    mse_normalized: float | None
    pearson: float | None
    spearman: float | None
    sign_agreement: float
    mode: str = "per-example"
    auroc: float | None = None
    evals_total: int = 0


def _corr(x: np.ndarray, y: np.ndarray) -> float | None:
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    xc, yc = x - x.mean(), y - y.mean()
    den = np.sqrt(np.dot(xc, xc) * np.dot(yc, yc))
    if not den > 0:
        return None
    return float(np.clip(np.dot(xc, yc) / den, -1.0, 1.0))


def _spearman(x: np.ndarray, y: np.ndarray) -> float | None:
    return _corr(rankdata(x), rankdata(y))


def _mean_defined(vals: list[float | None]) -> float | None:
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


def compare(
    estimates: np.ndarray, ground_truth: np.ndarray, mode: str = "per-example", evals_total: int = 0
) -> MetricReport:
    """Compare estimates with ground truth, both of shape (contexts, m) or (m,).

    ``per-example`` averages Pearson/Spearman over the per-context vectors;
    ``global`` correlates the flattened arrays. Exact zeros count as positive
    for sign agreement.
    """
    if mode not in ("per-example", "global"):
        raise InvalidArgumentError(f"unknown correlation mode {mode!r}")
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    gt = np.atleast_2d(np.asarray(ground_truth, dtype=float))
    if est.shape != gt.shape:
        raise InvalidArgumentError(f"shape mismatch {est.shape} vs {gt.shape}")
    if not np.all(np.isfinite(gt)):
        raise InvalidArgumentError("ground truth must be finite")
    mse = float(np.mean((est - gt) ** 2))
    var = float(np.var(gt))
    mse_norm = mse / var if var > 0 else None
    if mode == "global":
        pearson = _corr(est.ravel(), gt.ravel())
        spearman = _spearman(est.ravel(), gt.ravel())
    else:
        pearson = _mean_defined([_corr(e, g) for e, g in zip(est, gt)])
        spearman = _mean_defined([_spearman(e, g) for e, g in zip(est, gt)])
    sign = float(np.mean((est >= 0) == (gt >= 0)))
    return MetricReport(mse, mse_norm, pearson, spearman, sign, mode, None, int(evals_total))


def _check_flags(scores, flags):
    s = np.asarray(scores, dtype=float).ravel()
    f = np.asarray(flags, dtype=bool).ravel()
    if s.shape != f.shape:
        raise InvalidArgumentError("scores and flags differ in length")
    return s, f


def auroc_mislabeled(scores: np.ndarray, flags: np.ndarray) -> float:
    """AUROC of ``-score`` as a detector of flagged points; ties count one half."""
    s, f = _check_flags(scores, flags)
    if f.all() or not f.any():
        raise InvalidArgumentError("flags must contain both flagged and clean points")
    return float(roc_auc_score(f, -s))


def aupr_mislabeled(scores: np.ndarray, flags: np.ndarray) -> float:
    """Step-interpolated area under the precision-recall curve of ``-score``."""
    s, f = _check_flags(scores, flags)
    if f.all() or not f.any():
        raise InvalidArgumentError("flags must contain both flagged and clean points")
    return float(average_precision_score(f, -s))


def negative_fraction(scores: np.ndarray, flags: np.ndarray) -> float:
    """Fraction of flagged points with a strictly negative score."""
    s, f = _check_flags(scores, flags)
    if not f.any():
        raise InvalidArgumentError("no flagged points")
    return float(np.mean(s[f] < 0))


def write_report_csv(path: str | Path, rows: Sequence[tuple[dict, MetricReport]]) -> None:
    """One row per ``(key, report)``; key supplies task, method, num_samples and seed."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        for key, rep in rows:
            d = asdict(rep)
            row = {c: key.get(c, d.get(c)) for c in REPORT_COLUMNS}
            w.writerow({k: "" if v is None else (repr(v) if isinstance(v, float) else v) for k, v in row.items()})

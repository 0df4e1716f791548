"""Empirical checks of the noisy-regression theory.

Covers bias/noise estimation for a noisy oracle, the two-sided bound relating
the clean and noisy regression objectives, the projected-SGD convergence bound
for linear models, and the strong-convexity sandwich for quadratic objectives.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .amortize import Thm1Config, projected_sgd_runs
from .errors import InvalidArgumentError, ResourceLimitError, UnsupportedError
from .estimators import NoisyLabelRecord, derive_seed

SLACK_SE = 3.0


@dataclass
class OracleStats:
    """Bias and noise of a noisy oracle, per context and averaged.

    ``bias_raw`` holds the unclipped per-context bias estimates; their mean is
    unbiased for the true bias, so ``bias_z`` (mean over its standard error)
    is the test statistic for flagging a biased oracle.
    """

    bias_hat: float
    noise_hat: float
    bias_per_context: np.ndarray
    noise_per_context: np.ndarray
    bias_raw: np.ndarray
    draws_per_context: int
    bias_se: float
    noise_se: float
    draws: np.ndarray | None = field(default=None, repr=False)
    exact: np.ndarray | None = field(default=None, repr=False)

    @property
    def bias_z(self) -> float:
        mean = float(np.mean(self.bias_raw))
        if self.bias_se == 0:
            return 0.0 if mean == 0 else math.copysign(math.inf, mean)
        return mean / self.bias_se

    def flagged_biased(self, threshold: float = SLACK_SE) -> bool:
        return self.bias_z > threshold


def bias_noise_from_draws(draws: np.ndarray, exact: np.ndarray, keep_draws: bool = True) -> OracleStats:
    """Bias/noise statistics from ``draws`` of shape (contexts, r, m)."""
    draws = np.asarray(draws, dtype=float)
    exact = np.asarray(exact, dtype=float)
    if draws.ndim != 3 or exact.shape != (draws.shape[0], draws.shape[2]):
        raise InvalidArgumentError("draws must be (contexts, r, m) and exact (contexts, m)")
    C, r, _ = draws.shape
    if r < 2:
        raise InvalidArgumentError("need at least 2 draws per context")
    # center on the first draw so that repeated identical draws give exact zeros
    shift = draws[:, :1, :]
    centered = draws - shift
    mean = centered.mean(axis=1)
    noise = centered.var(axis=1, ddof=1).sum(axis=1)
    raw = np.sum((exact - shift[:, 0, :] - mean) ** 2, axis=1) - noise / r
    bias = np.maximum(raw, 0.0)
    se = lambda x: float(np.std(x, ddof=1) / np.sqrt(C)) if C > 1 else 0.0
    return OracleStats(
        bias_hat=float(bias.mean()),
        noise_hat=float(noise.mean()),
        bias_per_context=bias,
        noise_per_context=noise,
        bias_raw=raw,
        draws_per_context=r,
        bias_se=se(raw),
        noise_se=se(noise),
        draws=draws if keep_draws else None,
        exact=exact,
    )


def estimate_bias_noise(
    noisy: Callable[[object, int], object],
    exact: Callable[[object], np.ndarray],
    contexts: Sequence,
    draws: int = 200,
    seed: int = 0,
) -> OracleStats:
    """Draw ``draws`` labels per context and compare them with the exact output.

    ``noisy(context, seed)`` may return a vector or a :class:`NoisyLabelRecord`;
    each draw gets its own seed derived from ``seed``, the context position and
    the draw index. ``exact`` raising a resource-limit error is reported as
    unsupported.
    """
    if draws < 2:
        raise InvalidArgumentError("need at least 2 draws per context")
    if not contexts:
        raise InvalidArgumentError("no contexts given")
    try:
        truth = np.stack([np.atleast_1d(np.asarray(exact(c), dtype=float)) for c in contexts])
    except ResourceLimitError as exc:
        raise UnsupportedError(f"exact oracle unavailable: {exc}") from exc
    out = np.empty((len(contexts), draws, truth.shape[1]))
    for i, c in enumerate(contexts):
        for j in range(draws):
            val = noisy(c, derive_seed(seed, f"{i}:{j}"))
            out[i, j] = val.label if isinstance(val, NoisyLabelRecord) else val
    return bias_noise_from_draws(out, truth)


# ---------------------------------------------------------------------------
# Two-sided bound between clean and noisy objectives
# ---------------------------------------------------------------------------


@dataclass
class SandwichReport:
    l_reg: float
    l_noisy: float
    noise: float
    bias: float
    lower: float
    upper: float
    lower_slack: float
    upper_slack: float
    satisfied: bool
    equality_checked: bool
    equality_holds: bool | None
    anomaly: bool

    def ok(self) -> bool:
        return self.satisfied and self.equality_holds is not False


def check_sandwich_eq4(predictions: np.ndarray, stats: OracleStats, n_se: float = SLACK_SE) -> SandwichReport:
    """Check ``(sqrt(Lt - N) - sqrt(B))^2 <= L <= (sqrt(Lt - N) + sqrt(B))^2``.

    ``predictions`` are model outputs (contexts, m) on the contexts behind
    ``stats``, whose stored draws give the noisy objective ``Lt``. The clean
    objective ``L`` uses the exact outputs. ``Lt - N`` and ``B`` are each
    widened by ``n_se`` standard errors across contexts. When the oracle is
    not flagged as biased, ``L = Lt - N`` is also checked within the slack.
    """
    if stats.draws is None or stats.exact is None:
        raise InvalidArgumentError("stats must carry draws and exact outputs")
    P = np.asarray(predictions, dtype=float)
    if P.shape != stats.exact.shape:
        raise InvalidArgumentError("predictions do not match the context set")
    C = P.shape[0]
    l_ctx = np.sum((P - stats.exact) ** 2, axis=1)
    lt_ctx = np.mean(np.sum((P[:, None, :] - stats.draws) ** 2, axis=2), axis=1)
    gap_ctx = lt_ctx - stats.noise_per_context
    gap = float(gap_ctx.mean())
    gap_se = float(np.std(gap_ctx, ddof=1) / np.sqrt(C)) if C > 1 else 0.0
    bias = stats.bias_hat
    l_reg = float(l_ctx.mean())

    root = lambda x: math.sqrt(max(x, 0.0))
    lower = (root(gap) - root(bias)) ** 2
    upper = (root(gap) + root(bias)) ** 2
    g_lo, g_hi = gap - n_se * gap_se, gap + n_se * gap_se
    b_lo, b_hi = max(bias - n_se * stats.bias_se, 0.0), bias + n_se * stats.bias_se
    # Most permissive bounds over the slack box: the lower one is the squared
    # distance between the intervals of sqrt(gap) and sqrt(bias).
    lower_slack = max(root(g_lo) - root(b_hi), root(b_lo) - root(g_hi), 0.0) ** 2
    upper_slack = (root(g_hi) + root(b_hi)) ** 2
    tol = 1e-12 * max(1.0, l_reg)
    satisfied = lower_slack - tol <= l_reg <= upper_slack + tol

    equality_checked = not stats.flagged_biased(n_se)
    equality_holds = None
    if equality_checked:
        diff = l_ctx - gap_ctx
        diff_se = float(np.std(diff, ddof=1) / np.sqrt(C)) if C > 1 else 0.0
        equality_holds = abs(float(diff.mean())) <= n_se * diff_se + tol
    return SandwichReport(
        l_reg=l_reg,
        l_noisy=float(lt_ctx.mean()),
        noise=stats.noise_hat,
        bias=bias,
        lower=lower,
        upper=upper,
        lower_slack=lower_slack,
        upper_slack=upper_slack,
        satisfied=bool(satisfied),
        equality_checked=equality_checked,
        equality_holds=equality_holds,
        anomaly=bool(g_hi < 0),
    )


# ---------------------------------------------------------------------------
# Convergence bound for projected SGD
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Thm1BoundInputs:
    trace_sigma_p: float
    lambda_min_sigma_p: float
    lambda_max_sigma_q: float
    N_q: float
    D: float
    T: int

    def __post_init__(self):
        if not self.lambda_min_sigma_p > 0:
            raise InvalidArgumentError("lambda_min of Sigma_p must be positive")
        if self.N_q < 0 or self.D < 0 or self.T < 1:
            raise InvalidArgumentError("need N_q >= 0, D >= 0, T >= 1")


def thm1_bound(inp: Thm1BoundInputs) -> float:
    """``4 Tr(Sp) (N_q + 4 lmax(Sq) D^2) / (lmin(Sp) (T + 1))``."""
    return (
        4.0
        * inp.trace_sigma_p
        * (inp.N_q + 4.0 * inp.lambda_max_sigma_q * inp.D**2)
        / (inp.lambda_min_sigma_p * (inp.T + 1))
    )


def gaussian_sigma_q(d: int) -> np.ndarray:
    """Norm-weighted second moment for standard normal contexts: ``(d + 2)/d * I``."""
    return (d + 2.0) / d * np.eye(d)


def sigma_q_monte_carlo(samples: np.ndarray) -> np.ndarray:
    """``E[b b^T |b|^2] / E[|b|^2]`` from context samples (rows)."""
    B = np.asarray(samples, dtype=float)
    w = np.sum(B**2, axis=1)
    return (B * w[:, None]).T @ B / w.sum()


@dataclass
class CurvePoint:
    T: int
    empirical_excess: float
    excess_se: float
    bound: float
    runs: int
    sigma: float


def _ball_point(rng: np.random.Generator, shape, D: float) -> np.ndarray:
    x = rng.normal(size=shape)
    radius = D * rng.uniform() ** (1.0 / x.size)
    return x * (radius / np.linalg.norm(x))


def run_thm1_experiment(
    d: int,
    m: int,
    sigma: float,
    D: float,
    T_grid: Sequence[int],
    runs: int,
    seed: int = 0,
) -> list[CurvePoint]:
    """Gaussian linear fixture: ``b ~ N(0, I_d)``, ``a = W* b + sigma eps``.

    Each run draws its own truth ``W*`` uniformly in the Frobenius ball of
    radius ``D`` and its own sample stream, then runs projected SGD with
    ``alpha = 2``. With identity context covariance the excess noisy
    objective of an iterate ``W`` is exactly ``|W - W*|_F^2``.
    """
    if d < 1 or m < 1 or runs < 1 or sigma < 0 or D <= 0 or not T_grid:
        raise InvalidArgumentError("invalid experiment configuration")
    grid = sorted(set(int(t) for t in T_grid))
    T = grid[-1]
    truths, Bs, As = [], [], []
    for r in range(runs):
        rng = np.random.default_rng(derive_seed(seed, f"run{r}"))
        W = _ball_point(rng, (m, d), D)
        B = rng.normal(size=(T, d))
        truths.append(W)
        Bs.append(B)
        As.append(B @ W.T + sigma * rng.normal(size=(T, m)))
    truths = np.stack(truths)
    cfg = Thm1Config(D=D, alpha=2.0, T=T)
    out = projected_sgd_runs(np.stack(Bs), np.stack(As), cfg, grid)
    lmax_q = (d + 2.0) / d
    points = []
    for t in grid:
        excess = np.sum((out["averaged"][t] - truths) ** 2, axis=(1, 2))
        mean = math.fsum(excess.tolist()) / runs
        se = float(np.std(excess, ddof=1) / np.sqrt(runs)) if runs > 1 else 0.0
        bound = thm1_bound(Thm1BoundInputs(float(d), 1.0, lmax_q, m * sigma**2, D, t))
        points.append(CurvePoint(t, mean, se, bound, runs, sigma))
    return points


def loglog_slope(points: Sequence[CurvePoint]) -> float:
    x = np.log([p.T for p in points])
    y = np.log([p.empirical_excess for p in points])
    return float(np.polyfit(x, y, 1)[0])


def write_curve_csv(path: str | Path, points: Sequence[CurvePoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "empirical_excess", "bound", "runs", "sigma"])
        for p in points:
            w.writerow([p.T, repr(p.empirical_excess), repr(p.bound), p.runs, repr(p.sigma)])


# ---------------------------------------------------------------------------
# Strong convexity / smoothness sandwich
# ---------------------------------------------------------------------------


@dataclass
class ConvexityReport:
    l_reg: float
    excess_objective: float
    lower: float
    upper: float
    alpha: float
    beta: float
    satisfied: bool


def check_convexity_sandwich(H: np.ndarray, predictions: np.ndarray, truth: np.ndarray) -> ConvexityReport:
    """Check ``alpha/2 L_reg <= L_obj - L_obj* <= beta/2 L_reg`` for a quadratic loss.

    The per-context loss is ``h(a) = (a - a*)^T H (a - a*) / 2``, minimized at
    the truth with value zero, so ``L_obj - L_obj*`` is the mean of ``h`` over
    the predictions.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1] or not np.allclose(H, H.T):
        raise InvalidArgumentError("H must be a symmetric matrix")
    eig = np.linalg.eigvalsh(H)
    if eig[0] <= 0:
        raise InvalidArgumentError("H must be positive definite")
    E = np.atleast_2d(np.asarray(predictions, dtype=float) - np.asarray(truth, dtype=float))
    l_reg = float(np.mean(np.sum(E**2, axis=1)))
    excess = float(np.mean(np.einsum("ij,jk,ik->i", E, H, E)) / 2.0)
    alpha, beta = float(eig[0]), float(eig[-1])
    lower, upper = alpha / 2 * l_reg, beta / 2 * l_reg
    tol = 1e-12 * max(1.0, abs(excess))
    return ConvexityReport(l_reg, excess, lower, upper, alpha, beta, lower - tol <= excess <= upper + tol)

"""Brute-force reference values computed from the full table of ``2**n`` game values.

Every function accepts either a :class:`CooperativeGame` or a precomputed value
table indexed by coalition mask, so one enumeration can serve several oracles.
Attribution vectors are returned as float arrays of length ``n``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np
from scipy.special import gammaln

from .errors import InvalidArgumentError, NumericalFailureError, ResourceLimitError
from .games import CooperativeGame, all_masks, masks_to_indicators

EXACT_MAX_PLAYERS = 20
RIDGE_FALLBACK = 1e-9

GameOrTable = Union[CooperativeGame, np.ndarray]


def value_table(game: CooperativeGame, max_players: int = EXACT_MAX_PLAYERS) -> np.ndarray:
    """Evaluate ``game`` on all ``2**n`` coalitions (index = mask)."""
    if game.n > max_players:
        raise ResourceLimitError(f"exact enumeration limited to n <= {max_players}, game has n = {game.n}")
    return game.values_from_masks(all_masks(game.n))


def _as_table(g: GameOrTable) -> tuple[np.ndarray, int]:
    if isinstance(g, CooperativeGame):
        t = value_table(g)
        return t, g.n
    t = np.asarray(g, dtype=float).ravel()
    n = int(t.size).bit_length() - 1
    if n < 1 or t.size != 1 << n:
        raise InvalidArgumentError("value table length must be a power of two >= 2")
    if n > EXACT_MAX_PLAYERS:
        raise ResourceLimitError(f"exact enumeration limited to n <= {EXACT_MAX_PLAYERS}")
    return t, n


def _finite(v: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise NumericalFailureError("attribution contains non-finite entries")
    return v


def binom(n: int, k: int) -> float:
    """Binomial coefficient; exact integers up to n = 20, log-space above."""
    if k < 0 or k > n:
        return 0.0
    if n <= EXACT_MAX_PLAYERS:
        return float(math.comb(n, k))
    return float(np.exp(log_binom(n, k)))


def log_binom(n, k):
    return gammaln(np.asarray(n) + 1.0) - gammaln(np.asarray(k) + 1.0) - gammaln(np.asarray(n) - np.asarray(k) + 1.0)


# ---------------------------------------------------------------------------
# Semivalues
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SemivalueWeights:
    """Cardinality weights ``w(k)`` for ``k = 0 .. n-1``.

    Valid weights are nonnegative and satisfy ``sum_k C(n-1, k) w(k) = 1``.
    """

    w: np.ndarray
    n: int

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).ravel()
        object.__setattr__(self, "w", w)
        if w.size != self.n:
            raise InvalidArgumentError(f"need {self.n} weights, got {w.size}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidArgumentError("semivalue weights must be finite and nonnegative")
        total = float(np.sum(self.cardinality_law()))
        if abs(total - 1.0) > 1e-9:
            raise InvalidArgumentError(f"semivalue weights not normalized: sum C(n-1,k) w(k) = {total!r}")

    @classmethod
    def shapley(cls, n: int) -> "SemivalueWeights":
        k = np.arange(n)
        if n - 1 <= EXACT_MAX_PLAYERS:
            w = np.array([1.0 / (n * math.comb(n - 1, int(j))) for j in k])
        else:
            w = np.exp(-log_binom(n - 1, k)) / n
        return cls(w, n)

    @classmethod
    def banzhaf(cls, n: int) -> "SemivalueWeights":
        return cls(np.full(n, 0.5 ** (n - 1)), n)

    @classmethod
    def datamodels(cls, n: int, q: float) -> "SemivalueWeights":
        if not 0 < q < 1:
            raise InvalidArgumentError("q must lie strictly between 0 and 1")
        k = np.arange(n)
        return cls(q**k * (1 - q) ** (n - 1 - k), n)

    def cardinality_law(self) -> np.ndarray:
        """Probability that a semivalue sample has ``|T| = k``: ``C(n-1, k) w(k)``."""
        k = np.arange(self.n)
        if self.n - 1 <= EXACT_MAX_PLAYERS:
            c = np.array([float(math.comb(self.n - 1, int(j))) for j in k])
            return c * self.w
        with np.errstate(divide="ignore"):
            logw = np.log(self.w)
        return np.exp(log_binom(self.n - 1, k) + logw)

    def to_dict(self) -> dict:
        return {"n": self.n, "w": self.w.tolist()}


def exact_semivalue(game: GameOrTable, weights: SemivalueWeights) -> np.ndarray:
    """``psi_i = sum_{T not containing i} w(|T|) (v(T + i) - v(T))``."""
    table, n = _as_table(game)
    if weights.n != n:
        raise InvalidArgumentError(f"weights are for n = {weights.n}, game has n = {n}")
    masks = all_masks(n)
    sizes = masks_to_indicators(masks, n).sum(axis=1)
    out = np.empty(n)
    for i in range(n):
        without = masks[(masks >> i) & 1 == 0]
        marg = table[without | (1 << i)] - table[without]
        out[i] = np.sum(weights.w[sizes[without]] * marg)
    return _finite(out)


def exact_shapley(game: GameOrTable) -> np.ndarray:
    table, n = _as_table(game)
    return exact_semivalue(table, SemivalueWeights.shapley(n))


def exact_banzhaf(game: GameOrTable) -> np.ndarray:
    table, n = _as_table(game)
    return exact_semivalue(table, SemivalueWeights.banzhaf(n))


def _swap_players(masks: np.ndarray, i: int, j: int) -> np.ndarray:
    bi, bj = (masks >> i) & 1, (masks >> j) & 1
    diff = bi ^ bj
    return masks ^ ((diff << i) | (diff << j))


def shapley_axiom_residuals(table: np.ndarray, other: np.ndarray, rng: np.random.Generator) -> dict[str, float]:
    """Largest violation of each Shapley axiom on games built from two tables.

    Efficiency uses ``table`` directly; symmetry symmetrizes it over a random
    pair of players; null-player removes a random player's influence; and
    linearity combines ``table`` and ``other`` with a random coefficient.
    """
    table = np.asarray(table, dtype=float)
    n = int(round(math.log2(table.size)))
    masks = all_masks(n)
    phi = exact_shapley(table)
    i, j = rng.choice(n, size=2, replace=False)
    sym = 0.5 * (table + table[_swap_players(masks, i, j)])
    phi_sym = exact_shapley(sym)
    k = int(rng.integers(n))
    phi_null = exact_shapley(table[masks & ~(1 << k)])
    c = float(rng.normal())
    phi_lin = exact_shapley(table + c * np.asarray(other, dtype=float))
    return {
        "efficiency": abs(math.fsum(phi) - (table[-1] - table[0])),
        "symmetry": abs(phi_sym[i] - phi_sym[j]),
        "null_player": abs(phi_null[k]),
        "linearity": float(np.max(np.abs(phi_lin - phi - c * exact_shapley(other)))),
    }


# ---------------------------------------------------------------------------
# Weighted least squares
# ---------------------------------------------------------------------------


def shapley_kernel_sizes(n: int) -> np.ndarray:
    """Kernel weight by coalition size; infinite at the empty and grand coalition."""
    out = np.full(n + 1, np.inf)
    for k in range(1, n):
        out[k] = 1.0 / (math.comb(n, k) * k * (n - k))
    return out


def lime_kernel_sizes(n: int, width: float = 0.25) -> np.ndarray:
    """``exp(-(1 - |S|/n)^2 / width^2)`` by coalition size; ``width = inf`` is uniform."""
    if width <= 0:
        raise InvalidArgumentError("kernel width must be positive")
    s = np.arange(n + 1)
    if np.isinf(width):
        return np.ones(n + 1)
    return np.exp(-((1.0 - s / n) ** 2) / width**2)


@dataclass(frozen=True)
class LSKernel:
    """Weighting over coalitions for the attribution least-squares problem.

    Either ``size_weights`` (length ``n + 1``, indexed by ``|S|``) or a general
    ``weight_fn`` over indicator rows. ``constrained`` means the empty and grand
    coalitions carry infinite weight, i.e. the fit must pass through both.
    """

    n: int
    size_weights: np.ndarray | None = None
    weight_fn: Callable[[np.ndarray], np.ndarray] | None = None
    constrained: bool = False
    name: str = "custom"

    @classmethod
    def shapley(cls, n: int) -> "LSKernel":
        return cls(n, shapley_kernel_sizes(n), constrained=True, name="shapley")

    @classmethod
    def lime(cls, n: int, width: float = 0.25) -> "LSKernel":
        return cls(n, lime_kernel_sizes(n, width), name=f"lime(width={width!r})")

    @classmethod
    def uniform(cls, n: int) -> "LSKernel":
        return cls(n, np.ones(n + 1), name="uniform")

    def weights(self, z: np.ndarray) -> np.ndarray:
        if self.size_weights is not None:
            return np.asarray(self.size_weights, dtype=float)[z.sum(axis=1)]
        return np.asarray(self.weight_fn(z), dtype=float)


def _solve_normal(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    p = gram.shape[0]
    if p == 0:
        return np.zeros(0)
    sol = None
    if np.linalg.matrix_rank(gram) == p:
        try:
            sol = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            sol = None
    if sol is None:
        try:
            sol = np.linalg.solve(gram + RIDGE_FALLBACK * np.eye(p), rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailureError("singular normal equations after ridge fallback") from exc
    if not np.all(np.isfinite(sol)):
        raise NumericalFailureError("least-squares solution is not finite")
    return sol


def solve_weighted_ls(
    z: np.ndarray,
    values: np.ndarray,
    weights: np.ndarray,
    constrained: bool = False,
    v_empty: float | None = None,
    v_full: float | None = None,
) -> tuple[float, np.ndarray]:
    """Weighted least squares of ``values`` on ``a0 + sum_{i in S} a_i``.

    Returns ``(a0, a)``. With ``constrained=True`` the intercept is pinned to
    ``v_empty`` and ``sum(a) = v_full - v_empty``; the last coefficient is
    eliminated with the sum constraint and the rest solved unconstrained.
    """
    z = np.asarray(z, dtype=float)
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    keep = np.isfinite(weights) & (weights > 0)
    z, values, weights = z[keep], values[keep], weights[keep]
    n = z.shape[1]
    if constrained:
        if v_empty is None or v_full is None:
            raise InvalidArgumentError("constrained solve needs v_empty and v_full")
        total = v_full - v_empty
        if n == 1:
            return float(v_empty), np.array([total])
        y = values - v_empty - z[:, -1] * total
        A = z[:, :-1] - z[:, -1:]
        gram = A.T @ (weights[:, None] * A)
        rhs = A.T @ (weights * y)
        head = _solve_normal(gram, rhs)
        a = np.append(head, total - head.sum())
        return float(v_empty), a
    A = np.hstack([np.ones((z.shape[0], 1)), z])
    gram = A.T @ (weights[:, None] * A)
    rhs = A.T @ (weights * values)
    sol = _solve_normal(gram, rhs)
    return float(sol[0]), sol[1:]


def exact_weighted_ls(game: GameOrTable, kernel: LSKernel) -> np.ndarray:
    """Solve the kernel-weighted regression over all coalitions; intercept dropped."""
    table, n = _as_table(game)
    if kernel.n != n:
        raise InvalidArgumentError(f"kernel is for n = {kernel.n}, game has n = {n}")
    z = masks_to_indicators(all_masks(n), n)
    w = kernel.weights(z)
    if kernel.constrained:
        w = w.copy()
        w[0] = w[-1] = 0.0
    if np.count_nonzero(np.isfinite(w) & (w > 0)) < (n - 1 if kernel.constrained else n + 1):
        raise InvalidArgumentError("kernel has too few positive weights for a unique solution")
    _, a = solve_weighted_ls(z, table, w, kernel.constrained, table[0], table[-1])
    return _finite(a)


# ---------------------------------------------------------------------------
# Datamodels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubsetDistribution:
    """Symmetric distribution over subsets: ``bernoulli`` (param q) or ``fixed-size`` (param k)."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in ("bernoulli", "fixed-size"):
            raise InvalidArgumentError(f"unknown subset distribution {self.kind!r}")

    def inclusion_probabilities(self, n: int) -> tuple[float, float, float]:
        """``(p1, p2, p3)`` = P(i in T), P(i, j in T), P(i in T, j not in T)."""
        if self.kind == "bernoulli":
            q = float(self.param)
            if not 0 <= q <= 1:
                raise InvalidArgumentError("q must lie in [0, 1]")
            return q, q * q, q * (1 - q)
        k = int(self.param)
        if not 0 <= k <= n or n < 2:
            raise InvalidArgumentError("fixed size must satisfy 0 <= k <= n with n >= 2")
        return k / n, k * (k - 1) / (n * (n - 1)), k * (n - k) / (n * (n - 1))

    def pmf(self, sizes: np.ndarray, n: int) -> np.ndarray:
        """Probability of each individual subset with the given sizes."""
        if self.kind == "bernoulli":
            q = float(self.param)
            return q**sizes * (1 - q) ** (n - sizes)
        k = int(self.param)
        return np.where(sizes == k, 1.0 / math.comb(n, k), 0.0)


def datamodels_semivalue(game: GameOrTable, q: float) -> np.ndarray:
    """Semivalue form with ``u(k) = q^k (1-q)^(n-1-k)``."""
    table, n = _as_table(game)
    return exact_semivalue(table, SemivalueWeights.datamodels(n, q))


def datamodels_regression(game: GameOrTable, dist: SubsetDistribution) -> np.ndarray:
    """Coefficients of the intercept regression of ``v_x(T)`` on ``1[i in T]`` under ``dist``.

    For fixed-size distributions the intercept is collinear with ``sum_i 1[i in T]``,
    so the coefficients are only identified up to a common shift; the
    representative with ``sum(a) = 0`` is returned.
    """
    table, n = _as_table(game)
    z = masks_to_indicators(all_masks(n), n)
    p = dist.pmf(z.sum(axis=1), n)
    if dist.kind == "fixed-size":
        keep = p > 0
        root = np.sqrt(p[keep])
        A = np.hstack([np.ones((int(keep.sum()), 1)), z[keep]]) * root[:, None]
        sol = np.linalg.lstsq(A, table[keep] * root, rcond=None)[0]
        a = sol[1:] - sol[1:].mean()
    else:
        _, a = solve_weighted_ls(z, table, p)
    return _finite(a)


def exact_datamodels(game: GameOrTable, q: float, atol: float = 1e-9) -> np.ndarray:
    """Datamodels scores under Bernoulli(q) subsets.

    Computes both the semivalue form and the weighted-regression form and
    raises :class:`NumericalFailureError` if they disagree by more than ``atol``
    (scaled by the largest absolute game value when it exceeds one).
    """
    if not 0 < q < 1:
        raise InvalidArgumentError("q must lie strictly between 0 and 1")
    table, n = _as_table(game)
    semi = datamodels_semivalue(table, q)
    reg = datamodels_regression(table, SubsetDistribution("bernoulli", q))
    tol = atol * max(1.0, float(np.max(np.abs(table))))
    gap = float(np.max(np.abs(semi - reg)))
    if gap > tol:
        raise NumericalFailureError(f"datamodels semivalue and regression forms differ by {gap:.3e}")
    return semi


def datamodels_weighting(dist: SubsetDistribution, n: int):
    """Return ``c(z)`` giving the weight ``c_i(T)`` for indicator rows ``z``.

    When ``p3 + n (p2 - p1^2)`` vanishes (fixed-size subsets) the general
    weighting is undefined; the sum-zero representative ``(1[i in T] - p1) / p3``
    is used instead.
    """
    p1, p2, p3 = dist.inclusion_probabilities(n)
    if p3 <= 0:
        raise InvalidArgumentError("degenerate subset distribution: P(i in T, j not in T) = 0")
    delta = p2 - p1 * p1
    denom = p3 + n * delta
    if abs(denom) <= 1e-12 * max(1.0, p3):
        size_coef, const = 0.0, p1
    else:
        size_coef, const = delta / denom, p1 * p3 / denom

    def c(z: np.ndarray) -> np.ndarray:
        zf = z.astype(float)
        return (zf - size_coef * zf.sum(axis=1, keepdims=True) - const) / p3

    return c


def exact_datamodels_symmetric(game: GameOrTable, dist: SubsetDistribution) -> np.ndarray:
    """``zeta_i = E[c_i(T) v_x(T)]`` by exhaustive enumeration under ``dist``."""
    table, n = _as_table(game)
    z = masks_to_indicators(all_masks(n), n)
    p = dist.pmf(z.sum(axis=1), n)
    c = datamodels_weighting(dist, n)(z)
    return _finite(c.T @ (p * table))


# ---------------------------------------------------------------------------
# Golden fixtures
# ---------------------------------------------------------------------------


def save_golden(path: str | Path, table: np.ndarray, expected: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write ``{mask: value}`` plus named expected vectors as JSON."""
    table = np.asarray(table, dtype=float)
    payload = {
        "n": int(table.size).bit_length() - 1,
        "values": {str(m): float(v) for m, v in enumerate(table)},
        "expected": {k: np.asarray(v, dtype=float).tolist() for k, v in expected.items()},
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def load_golden(path: str | Path) -> tuple[np.ndarray, dict[str, np.ndarray], dict]:
    payload = json.loads(Path(path).read_text())
    n = int(payload["n"])
    table = np.empty(1 << n)
    for m, v in payload["values"].items():
        table[int(m)] = v
    expected = {k: np.asarray(v, dtype=float) for k, v in payload["expected"].items()}
    return table, expected, payload.get("meta", {})

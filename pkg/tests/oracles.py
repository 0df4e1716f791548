"""Independent reference implementations used to derive expected values.

These deliberately share no code with the package: they walk coalitions and
orderings with itertools, and solve regressions with scikit-learn.
"""

import itertools
import math

import numpy as np
from sklearn.linear_model import LinearRegression


def mask_of(players):
    return sum(1 << i for i in players)


def shapley_by_orderings(table, n):
    """Average marginal contribution over all n! orderings."""
    phi = [0.0] * n
    count = 0
    for order in itertools.permutations(range(n)):
        mask = 0
        for i in order:
            phi[i] += table[mask | 1 << i] - table[mask]
            mask |= 1 << i
        count += 1
    return np.array([p / count for p in phi])


def banzhaf_by_subsets(table, n):
    phi = []
    for i in range(n):
        others = [j for j in range(n) if j != i]
        total = 0.0
        for r in range(n):
            for s in itertools.combinations(others, r):
                m = mask_of(s)
                total += table[m | 1 << i] - table[m]
        phi.append(total / 2 ** (n - 1))
    return np.array(phi)


def semivalue_by_subsets(table, n, weight):
    """``sum_S weight(|S|) (v(S+i) - v(S))`` over subsets S of the other players."""
    phi = []
    for i in range(n):
        others = [j for j in range(n) if j != i]
        total = 0.0
        for r in range(n):
            for s in itertools.combinations(others, r):
                m = mask_of(s)
                total += weight(r) * (table[m | 1 << i] - table[m])
        phi.append(total)
    return np.array(phi)


def all_indicators(n):
    return np.array([[(m >> j) & 1 for j in range(n)] for m in range(1 << n)], dtype=float)


def weighted_regression(table, n, weight_of_size):
    """Weighted least squares of v(S) on the indicator of S; intercept dropped."""
    Z = all_indicators(n)
    w = np.array([weight_of_size(int(z.sum())) for z in Z])
    keep = w > 0
    fit = LinearRegression().fit(Z[keep], np.asarray(table)[keep], sample_weight=w[keep])
    return fit.coef_


def lime_weight(n, width):
    return lambda k: math.exp(-((1 - k / n) ** 2) / width**2)


def datamodels_bernoulli_regression(table, n, q):
    return weighted_regression(table, n, lambda k: q**k * (1 - q) ** (n - k))


def ridge_outputs(X, y, classes, X_eval, lam):
    """One-hot ridge with an unpenalized intercept, fitted on centered data."""
    Y = np.eye(len(classes))[np.searchsorted(classes, y)]
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    W = np.linalg.solve((X - xm).T @ (X - xm) + lam * np.eye(X.shape[1]), (X - xm).T @ (Y - ym))
    return X_eval @ W + (ym - xm @ W)


def ridge_negative_loss(X, y, classes, X_hold, y_hold, lam):
    out = ridge_outputs(X, y, classes, X_hold, lam)
    onehot = np.eye(len(classes))[np.searchsorted(classes, y_hold)]
    return -float(np.mean(np.sum((out - onehot) ** 2, axis=1)))

"""Model-selection criteria and partition-agreement measures."""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import comb

from .model import MixtureParams, regression_mean


def aic_bic(loglik: float, m: int, n: int):
    """``AIC = 2m - 2l``, ``BIC = m ln n - 2l``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 2.0 * m - 2.0 * loglik, m * np.log(n) - 2.0 * loglik


def _encode(a):
    _, codes = np.unique(np.asarray(a), return_inverse=True)
    return codes.ravel()


def contingency(a, b) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    ca, cb = _encode(a), _encode(b)
    table = np.zeros((ca.max() + 1 if ca.size else 0, cb.max() + 1 if cb.size else 0), int)
    np.add.at(table, (ca, cb), 1)
    return table


def best_matching(labels_true, labels_pred):
    """Mapping ``{pred label: true label}`` maximising agreement.

    Exhaustive over permutations when both alphabets have at most 8 labels,
    otherwise by the assignment problem.
    """
    t_vals, t_codes = np.unique(np.asarray(labels_true), return_inverse=True)
    p_vals, p_codes = np.unique(np.asarray(labels_pred), return_inverse=True)
    k = max(len(t_vals), len(p_vals))
    table = np.zeros((k, k), int)
    np.add.at(table, (p_codes.ravel(), t_codes.ravel()), 1)
    if k <= 8:
        best, best_perm = -1, None
        for perm in itertools.permutations(range(k)):
            s = table[np.arange(k), perm].sum()
            if s > best:
                best, best_perm = s, perm
        cols = np.array(best_perm)
    else:
        _, cols = linear_sum_assignment(-table)
    mapping = {}
    for i, c in enumerate(cols):
        if i < len(p_vals) and c < len(t_vals):
            mapping[p_vals[i].item()] = t_vals[c].item()
    return mapping, int(table[np.arange(k), cols].sum())


def mcr(labels_true, labels_pred) -> float:
    """Misclassification rate under the best relabelling of ``labels_pred``."""
    a, b = np.asarray(labels_true), np.asarray(labels_pred)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    _, agree = best_matching(a, b)
    return 1.0 - agree / a.size


def rand_indices(a, b):
    """Rand, adjusted Rand (Hubert-Arabie) and Jaccard indices from pair counts."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    n = a.size
    if n < 2:
        raise ValueError("need at least two items")
    t = contingency(a, b)
    pairs = comb(n, 2, exact=True)
    both = int(sum(comb(int(v), 2, exact=True) for v in t.ravel()))
    in_a = int(sum(comb(int(v), 2, exact=True) for v in t.sum(axis=1)))
    in_b = int(sum(comb(int(v), 2, exact=True) for v in t.sum(axis=0)))
    only_a, only_b = in_a - both, in_b - both
    neither = pairs - both - only_a - only_b
    ri = (both + neither) / pairs
    expected = in_a * in_b / pairs
    top = 0.5 * (in_a + in_b)
    ari = 1.0 if top == expected else (both - expected) / (top - expected)
    union = both + only_a + only_b
    jci = 1.0 if union == 0 else both / union
    return float(ri), float(ari), float(jci)


def pair_count_indices_bruteforce(a, b):
    """O(n^2) pair enumeration; reference implementation of :func:`rand_indices`."""
    a, b = list(a), list(b)
    n = len(a)
    n11 = n10 = n01 = n00 = 0
    for i in range(n):
        for j in range(i + 1, n):
            sa, sb = a[i] == a[j], b[i] == b[j]
            if sa and sb:
                n11 += 1
            elif sa:
                n10 += 1
            elif sb:
                n01 += 1
            else:
                n00 += 1
    N = n11 + n10 + n01 + n00
    ri = (n11 + n00) / N
    ia, ib = n11 + n10, n11 + n01
    exp = ia * ib / N
    top = 0.5 * (ia + ib)
    ari = 1.0 if top == exp else (n11 - exp) / (top - exp)
    jci = 1.0 if n11 + n10 + n01 == 0 else n11 / (n11 + n10 + n01)
    return ri, ari, jci


def regression_mean_mse(theta_hat: MixtureParams, theta_true: MixtureParams,
                        designs: Sequence) -> float:
    """Mean squared gap between fitted and true ``sum_j pi_j(r) x'beta_j``.

    ``designs`` is a sequence of ``(x, r)`` pairs or a tuple of matrices ``(X, R)``.
    """
    if isinstance(designs, tuple) and len(designs) == 2 and np.ndim(designs[0]) == 2:
        X, R = np.asarray(designs[0], float), np.asarray(designs[1], float)
    else:
        designs = list(designs)
        if not designs:
            raise ValueError("designs must be nonempty")
        X = np.array([np.asarray(d[0], float) for d in designs])
        R = np.array([np.asarray(d[1], float) for d in designs])
    diff = regression_mean(theta_hat, X, R) - regression_mean(theta_true, X, R)
    return float(np.mean(diff ** 2))


def align_components(theta_hat: MixtureParams, theta_true: MixtureParams) -> MixtureParams:
    """Reorder fitted components to best match the truth (least squared
    distance of ``(beta_j, sigma2_j)``); used when summarising simulations."""
    G = theta_hat.G
    cost = np.zeros((G, G))
    for a in range(G):
        for b in range(G):
            cost[a, b] = (np.sum((theta_hat.beta[a] - theta_true.beta[b]) ** 2)
                          + (theta_hat.sigma2[a] - theta_true.sigma2[b]) ** 2)
    if G <= 8:
        perms = list(itertools.permutations(range(G)))
        best = min(perms, key=lambda p: sum(cost[p[b], b] for b in range(G)))
        order = list(best)
    else:
        rows, cols = linear_sum_assignment(cost)
        order = list(rows[np.argsort(cols)])
    return theta_hat.permuted(order)

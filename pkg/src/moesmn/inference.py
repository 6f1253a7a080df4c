"""Standard errors from the empirical information ``sum_i s_i s_i'``.

The individual scores are conditional expectations of complete-data scores
given the observed data, evaluated from an E-step cache. The mixing
parameters are held at their estimates and get no standard error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .ecme import EStepCache, e_step
from .model import CensoredData, MixtureParams, gating_probs

COND_LIMIT = 1e12


def score_names(theta: MixtureParams) -> List[str]:
    G, p, q = theta.G, theta.p, theta.q
    names = [f"tau{j + 1}[{k}]" for j in range(G - 1) for k in range(q)]
    names += [f"beta{j + 1}[{k}]" for j in range(G) for k in range(p)]
    names += [f"sigma2_{j + 1}" for j in range(G)]
    return names


def score_vectors(data: CensoredData, theta: MixtureParams,
                  cache: Optional[EStepCache] = None) -> np.ndarray:
    """n x d matrix of individual scores ordered ``(tau, beta, sigma2)``."""
    cache = e_step(data, theta) if cache is None else cache
    G = theta.G
    z = cache.z
    pi = gating_probs(data.R, theta.tau)
    blocks = [(z[:, j] - pi[:, j])[:, None] * data.R for j in range(G - 1)]
    mu = data.X @ theta.beta.T
    s2 = theta.sigma2
    for j in range(G):
        blocks.append((z[:, j] / s2[j] * (cache.uy[:, j] - cache.u[:, j] * mu[:, j]))[:, None] * data.X)
    for j in range(G):
        resid2 = cache.uy2[:, j] - 2 * cache.uy[:, j] * mu[:, j] + cache.u[:, j] * mu[:, j] ** 2
        blocks.append((z[:, j] / (2 * s2[j] ** 2) * (resid2 - s2[j]))[:, None])
    return np.hstack(blocks)


def score_vector(data: CensoredData, theta: MixtureParams, i: int,
                 cache: Optional[EStepCache] = None) -> np.ndarray:
    """Score of observation ``i``."""
    return score_vectors(data, theta, cache)[i]


@dataclass
class SETable:
    names: List[str]
    estimates: np.ndarray
    se: np.ndarray
    singular: bool
    condition: float
    unavailable: List[str]

    def as_dict(self):
        out = {n: (float(e), float(s)) for n, e, s in zip(self.names, self.estimates, self.se)}
        out.update({n: (np.nan, np.nan) for n in self.unavailable})
        return out

    def get(self, name):
        return float(self.se[self.names.index(name)])


def estimate_vector(theta: MixtureParams) -> np.ndarray:
    return np.concatenate([theta.tau.ravel(), theta.beta.ravel(), theta.sigma2])


def information_matrix(data: CensoredData, theta: MixtureParams) -> np.ndarray:
    S = score_vectors(data, theta)
    return S.T @ S


def information_se(data: CensoredData, theta: MixtureParams) -> SETable:
    """Square roots of the diagonal of the inverse empirical information.

    A pseudo-inverse is used, and ``singular`` set, when the condition number
    exceeds ``1e12``.
    """
    info = information_matrix(data, theta)
    cond = np.linalg.cond(info)
    singular = not np.isfinite(cond) or cond > COND_LIMIT
    cov = np.linalg.pinv(info, hermitian=True) if singular else np.linalg.inv(info)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    fam = theta.families
    unavailable = []
    if fam[0].n_params:
        labels = ["nu", "gamma"][: fam[0].n_params]
        if len(set(fam)) == 1:
            unavailable = labels
        else:
            unavailable = [f"{l}{j + 1}" for j in range(theta.G) for l in labels]
    return SETable(score_names(theta), estimate_vector(theta), se, bool(singular), float(cond),
                   unavailable)

"""Mixture-of-linear-experts model for censored responses.

Observation ``i`` is either observed exactly (``rho = 0``, value ``w``) or known
only to lie in ``[c1, c2]`` (``rho = 1``; ``c1 = -inf`` is left censoring,
``c2 = +inf`` right censoring). Expert ``j`` is an SMN regression with location
``x' beta_j`` and scale ``sigma2_j``; the gate is a softmax over ``r' tau_j``
with the last component as the zero-coefficient reference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special
from scipy.special import logsumexp

from .smn import CONTAMINATED, SmnFamily, log_diff_exp, logcdf_std, logpdf_std


class NumericalSupportError(ArithmeticError):
    """An observation has zero likelihood under every component."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"observation {index} has zero probability under every component")


@dataclass(frozen=True)
class CensoredObservation:
    """A single response record. ``x`` and ``r`` include the leading 1."""

    w: float
    rho: int
    c1: float
    c2: float
    x: tuple
    r: tuple

    def __post_init__(self):
        if self.rho not in (0, 1):
            raise ValueError(f"rho must be 0 or 1, got {self.rho}")
        if self.rho == 1 and not self.c1 < self.c2:
            raise ValueError(f"censored record needs c1 < c2, got [{self.c1}, {self.c2}]")
        if self.rho == 0 and not np.isfinite(self.w):
            raise ValueError("uncensored record needs a finite w")


@dataclass
class CensoredData:
    """Column-oriented data set; ``X`` is ``n x p`` and ``R`` is ``n x q``."""

    w: np.ndarray
    rho: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    X: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, float)
        self.rho = np.asarray(self.rho, bool)
        self.c1 = np.asarray(self.c1, float)
        self.c2 = np.asarray(self.c2, float)
        self.X = np.atleast_2d(np.asarray(self.X, float))
        self.R = np.atleast_2d(np.asarray(self.R, float))
        n = self.w.shape[0]
        for name in ("rho", "c1", "c2"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
        if self.X.shape[0] != n or self.R.shape[0] != n:
            raise ValueError("X and R must have one row per observation")
        cens = self.rho
        if np.any(cens & ~(self.c1 < self.c2)):
            bad = int(np.flatnonzero(cens & ~(self.c1 < self.c2))[0])
            raise ValueError(f"observation {bad}: censored record needs c1 < c2")
        if np.any(~cens & ~np.isfinite(self.w)):
            bad = int(np.flatnonzero(~cens & ~np.isfinite(self.w))[0])
            raise ValueError(f"observation {bad}: uncensored record needs a finite value")

    @classmethod
    def from_observations(cls, obs: Sequence[CensoredObservation]) -> "CensoredData":
        return cls(
            w=[o.w if o.rho == 0 else np.nan for o in obs],
            rho=[o.rho for o in obs],
            c1=[o.c1 if o.rho == 1 else np.nan for o in obs],
            c2=[o.c2 if o.rho == 1 else np.nan for o in obs],
            X=[list(o.x) for o in obs],
            R=[list(o.r) for o in obs],
        )

    @classmethod
    def uncensored(cls, y, X, R) -> "CensoredData":
        y = np.asarray(y, float)
        nan = np.full(y.shape, np.nan)
        return cls(y, np.zeros(y.shape, bool), nan, nan.copy(), X, R)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.R.shape[1]

    def observation(self, i: int) -> CensoredObservation:
        return CensoredObservation(float(self.w[i]), int(self.rho[i]), float(self.c1[i]),
                                   float(self.c2[i]), tuple(self.X[i]), tuple(self.R[i]))

    def subset(self, idx) -> "CensoredData":
        return CensoredData(self.w[idx], self.rho[idx], self.c1[idx], self.c2[idx],
                            self.X[idx], self.R[idx])

    def imputed_response(self) -> np.ndarray:
        """Point values for censored rows: interval midpoint, or the finite bound."""
        y = self.w.copy()
        c1, c2 = self.c1, self.c2
        both = np.isfinite(c1) & np.isfinite(c2)
        fill = np.where(both, 0.5 * (c1 + c2), np.where(np.isfinite(c1), c1, c2))
        y[self.rho] = fill[self.rho]
        return y


def as_data(obj) -> CensoredData:
    if isinstance(obj, CensoredData):
        return obj
    if isinstance(obj, CensoredObservation):
        return CensoredData.from_observations([obj])
    return CensoredData.from_observations(list(obj))


@dataclass
class MixtureParams:
    """Full parameter set: ``beta`` (G x p), ``sigma2`` (G,), ``tau`` ((G-1) x q)
    and one SMN family per component."""

    beta: np.ndarray
    sigma2: np.ndarray
    tau: np.ndarray
    families: tuple

    def __post_init__(self):
        self.beta = np.atleast_2d(np.asarray(self.beta, float))
        self.sigma2 = np.atleast_1d(np.asarray(self.sigma2, float))
        G = self.beta.shape[0]
        tau = np.asarray(self.tau, float)
        if G == 1:
            self.tau = tau.reshape(0, tau.shape[-1] if tau.ndim == 2 else 0)
        else:
            self.tau = np.atleast_2d(tau)
        if isinstance(self.families, SmnFamily):
            self.families = (self.families,) * G
        self.families = tuple(self.families)
        if self.sigma2.shape != (G,) or len(self.families) != G:
            raise ValueError("beta, sigma2 and families must agree on G")
        if G > 1 and self.tau.shape[0] != G - 1:
            raise ValueError(f"tau must have G-1 = {G - 1} rows")
        if np.any(~(self.sigma2 > 0)):
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def G(self) -> int:
        return self.beta.shape[0]

    @property
    def p(self) -> int:
        return self.beta.shape[1]

    @property
    def q(self) -> int:
        return self.tau.shape[1]

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.sigma2)

    def copy(self, **changes) -> "MixtureParams":
        base = dict(beta=self.beta.copy(), sigma2=self.sigma2.copy(), tau=self.tau.copy(),
                    families=self.families)
        base.update(changes)
        return MixtureParams(**base)

    def n_free_params(self, tie_nu: bool = True) -> int:
        """Free parameter count used by AIC/BIC."""
        G = self.G
        m = G * self.p + G + (G - 1) * self.q
        k = self.families[0].n_params
        return m + (k if tie_nu else k * G)

    def permuted(self, order) -> "MixtureParams":
        """Reorder components; gating coefficients are re-expressed against the
        new last component."""
        order = np.asarray(order, int)
        G = self.G
        full = np.vstack([self.tau, np.zeros((1, self.tau.shape[1]))]) if G > 1 else self.tau
        if G > 1:
            full = full[order]
            tau = full[:-1] - full[-1]
        else:
            tau = self.tau
        return MixtureParams(self.beta[order], self.sigma2[order], tau,
                             tuple(self.families[k] for k in order))

    def canonical_order(self) -> np.ndarray:
        """Ascending intercept, ties broken by ``sigma2``."""
        return np.lexsort((self.sigma2, self.beta[:, 0]))

    def sorted(self) -> "MixtureParams":
        return self.permuted(self.canonical_order())


def gating_log_probs(R: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """``log pi_j(r_i)`` as an ``n x G`` array."""
    R = np.atleast_2d(np.asarray(R, float))
    tau = np.asarray(tau, float)
    if tau.size == 0:
        return np.zeros((R.shape[0], 1))
    if tau.shape[1] != R.shape[1]:
        raise ValueError(f"gating dimension mismatch: r has {R.shape[1]} entries, tau has {tau.shape[1]}")
    eta = np.hstack([R @ tau.T, np.zeros((R.shape[0], 1))])
    return eta - logsumexp(eta, axis=1, keepdims=True)


def gating_probs(r, tau) -> np.ndarray:
    """Softmax gate; a single ``r`` gives a length-G vector, a matrix gives n x G."""
    r = np.asarray(r, float)
    out = np.exp(gating_log_probs(np.atleast_2d(r), tau))
    return out[0] if r.ndim == 1 else out


def component_log_terms(data: CensoredData, theta: MixtureParams):
    """Per-component log contributions ``log f_ij`` (without the gate).

    Uncensored rows use the scaled density, censored rows the log interval
    probability. Also returns the standardised values/bounds for reuse.
    """
    n, G = data.n, theta.G
    mu = data.X @ theta.beta.T
    sig = theta.sigma
    out = np.empty((n, G))
    obs = ~data.rho
    cens = data.rho
    std = {}
    for j, fam in enumerate(theta.families):
        t = (data.w[obs] - mu[obs, j]) / sig[j]
        out[obs, j] = logpdf_std(t, fam) - np.log(sig[j])
        t1 = (data.c1[cens] - mu[cens, j]) / sig[j]
        t2 = (data.c2[cens] - mu[cens, j]) / sig[j]
        out[cens, j] = _log_interval_prob(t1, t2, fam)
        std[j] = (t, t1, t2)
    return out, mu, std


def _log_interval_prob(t1, t2, fam):
    with np.errstate(invalid="ignore"):
        flip = (t1 + t2) > 0
    a = np.where(flip, -t2, t1)
    b = np.where(flip, -t1, t2)
    return log_diff_exp(logcdf_std(b, fam), logcdf_std(a, fam))


def _joint_log(data, theta):
    log_f, mu, std = component_log_terms(data, theta)
    log_joint = gating_log_probs(data.R, theta.tau) + log_f
    log_mix = logsumexp(log_joint, axis=1)
    if not np.all(np.isfinite(log_mix)):
        bad = int(np.flatnonzero(~np.isfinite(log_mix))[0])
        raise NumericalSupportError(bad)
    return log_joint, log_mix, mu, std


def observed_loglik(data, theta: MixtureParams) -> float:
    """Observed-data log-likelihood, log-sum-exp over components."""
    data = as_data(data)
    return float(_joint_log(data, theta)[1].sum())


def observed_loglik_terms(data, theta: MixtureParams) -> np.ndarray:
    data = as_data(data)
    return _joint_log(data, theta)[1]


def responsibilities(data, theta: MixtureParams) -> np.ndarray:
    """Posterior component probabilities, n x G (1-D for a single observation)."""
    single = isinstance(data, CensoredObservation)
    data = as_data(data)
    log_joint, log_mix, _, _ = _joint_log(data, theta)
    z = np.exp(log_joint - log_mix[:, None])
    return z[0] if single else z


def cn_bad_point_std(t, t1, t2, censored, nu, gamma) -> np.ndarray:
    """Posterior probability of the inflated-variance atom for standardised
    data. ``t`` is used where ``censored`` is False, ``(t1, t2)`` elsewhere."""
    t = np.asarray(t, float)
    t1 = np.asarray(t1, float)
    t2 = np.asarray(t2, float)
    censored = np.asarray(censored, bool)
    sg = np.sqrt(gamma)
    with np.errstate(divide="ignore"):
        lnu, l1nu = np.log(nu), np.log1p(-nu)
        # uncensored: ratio of the two weighted normal densities
        bad = lnu + 0.5 * np.log(gamma) - 0.5 * gamma * t * t
        good = l1nu - 0.5 * t * t
        b_obs = np.exp(bad - np.logaddexp(bad, good))
        with np.errstate(invalid="ignore"):
            flip = (t1 + t2) > 0
        a = np.where(flip, -t2, t1)
        b = np.where(flip, -t1, t2)
        lbad = lnu + log_diff_exp(special.log_ndtr(b * sg), special.log_ndtr(a * sg))
        lgood = l1nu + log_diff_exp(special.log_ndtr(b), special.log_ndtr(a))
        b_cens = np.exp(lbad - np.logaddexp(lbad, lgood))
    return np.where(censored, b_cens, b_obs)


def cn_bad_point_prob(obs, component: int, theta: MixtureParams):
    """``P(bad point | data, Z_j = 1)`` for a contaminated-normal component."""
    fam = theta.families[component]
    if fam.kind != CONTAMINATED:
        raise TypeError(f"component {component} is {fam.kind}, not contaminated normal")
    single = isinstance(obs, CensoredObservation)
    data = as_data(obs)
    mu = data.X @ theta.beta[component]
    s = theta.sigma[component]
    with np.errstate(invalid="ignore"):
        t = (data.w - mu) / s
        t1 = (data.c1 - mu) / s
        t2 = (data.c2 - mu) / s
    b = cn_bad_point_std(np.nan_to_num(t), np.nan_to_num(t1, nan=-1.0, posinf=np.inf, neginf=-np.inf),
                         np.nan_to_num(t2, nan=1.0, posinf=np.inf, neginf=-np.inf), data.rho,
                         fam.nu, fam.gamma)
    return float(b[0]) if single else b


def regression_mean(theta: MixtureParams, X, R) -> np.ndarray:
    """``sum_j pi_j(r) x' beta_j`` at each design point."""
    X = np.atleast_2d(np.asarray(X, float))
    return np.sum(gating_probs(np.atleast_2d(R), theta.tau) * (X @ theta.beta.T), axis=1)

"""ECME fitting of the censored SMN mixture of experts.

One outer iteration is

1. E-step at the current parameters (responsibilities and the conditional
   moments of ``U``, ``UY``, ``UY^2``; bad-point probabilities for CN),
2. CM-step for ``(beta_j, sigma2_j)``: weighted least squares,
3. CM-step for ``tau``: one minorise-maximise step per gating block,
4. CML-step for the mixing parameters on the observed log-likelihood
   (CN: closed-form ``nu`` from the bad-point probabilities, ``gamma`` by
   line search).

Every step is an ascent step, so the log-likelihood trace is non-decreasing.
"""

from __future__ import annotations

import hashlib
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import optimize
from scipy.cluster.vq import ClusterError, kmeans2
from scipy.special import logsumexp

from .model import (
    CensoredData,
    MixtureParams,
    NumericalSupportError,
    cn_bad_point_std,
    component_log_terms,
    gating_log_probs,
    gating_probs,
)
from .moments import censored_moments_std
from .smn import _ALIASES, CONTAMINATED, NORMAL, SLASH, STUDENT_T, SmnFamily, logpdf_std, u_hat_std

log = logging.getLogger(__name__)

DEFAULT_NU_BOUNDS = {
    STUDENT_T: (2.01, 100.0),
    SLASH: (1.01, 50.0),
    CONTAMINATED: (0.01, 0.99),
}

INITIAL_NU = {
    STUDENT_T: (20.0,),
    SLASH: (20.0,),
    CONTAMINATED: (0.05, 0.8),
}


class FitError(RuntimeError):
    """Fitting failed; ``diagnostics`` holds whatever was learnt on the way."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InitializationError(FitError):
    pass


class EmptyComponentError(FitError):
    def __init__(self, component, mass):
        super().__init__(f"component {component} has mass {mass:.3g}", {"component": component})
        self.component = component


class DegenerateComponentError(FitError):
    """A component variance fell below the floor (likelihood singularity)."""

    def __init__(self, component, sigma2):
        super().__init__(f"variance of component {component} collapsed to {sigma2:.3g}",
                         {"component": component})
        self.component = component


class SingularDesignError(FitError):
    def __init__(self, component, what="weighted design"):
        super().__init__(f"{what} of component {component} is singular", {"component": component})
        self.component = component


@dataclass
class FitOptions:
    max_iter: int = 1000
    tol: float = 1e-5
    init_strategy: str = "kmeans"          # "kmeans" | "user"
    tau_init: str = "zero"                 # "zero" | "multinomial"
    tie_nu: bool = True
    fix_nu: bool = False
    nu_bounds: dict = field(default_factory=lambda: dict(DEFAULT_NU_BOUNDS))
    seed: int = 0
    min_component_mass: Optional[float] = None   # default 1e-6 * n
    min_sigma2_ratio: float = 1e-8               # sigma2_j floor relative to var(y)
    max_restarts: int = 3
    n_starts: int = 1
    compute_se: bool = True
    gating_update: str = "newton"          # "newton" | "mm"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.init_strategy not in ("kmeans", "user"):
            raise ValueError(f"unknown init_strategy {self.init_strategy!r}")
        if self.gating_update not in ("newton", "mm"):
            raise ValueError(f"unknown gating_update {self.gating_update!r}")
        if self.tau_init not in ("zero", "multinomial"):
            raise ValueError(f"unknown tau_init {self.tau_init!r}")


@dataclass
class EStepCache:
    z: np.ndarray        # n x G responsibilities
    u: np.ndarray        # n x G
    uy: np.ndarray
    uy2: np.ndarray
    b: Optional[np.ndarray]   # n x G bad-point probabilities (CN only)
    loglik: float
    log_gate: np.ndarray


@dataclass
class FitReport:
    theta: MixtureParams
    loglik: float
    loglik_trace: np.ndarray
    converged: bool
    iters: int
    responsibilities: np.ndarray
    labels: np.ndarray
    aic: float
    bic: float
    m: int
    n: int
    tie_nu: bool
    boundary: dict
    restarts: int = 0
    se: Optional[object] = None

    @property
    def family(self) -> str:
        return self.theta.families[0].kind

    @property
    def G(self) -> int:
        return self.theta.G


# ---------------------------------------------------------------------------
# E-step
# ---------------------------------------------------------------------------

def e_step(data: CensoredData, theta: MixtureParams) -> EStepCache:
    n, G = data.n, theta.G
    obs, cens = ~data.rho, data.rho
    mu = data.X @ theta.beta.T
    sig = theta.sigma
    log_f = np.empty((n, G))
    u = np.empty((n, G))
    uy = np.empty((n, G))
    uy2 = np.empty((n, G))
    is_cn = any(f.kind == CONTAMINATED for f in theta.families)
    b = np.zeros((n, G)) if is_cn else None
    y = data.w[obs]
    for j, fam in enumerate(theta.families):
        s = sig[j]
        t = (y - mu[obs, j]) / s
        log_f[obs, j] = logpdf_std(t, fam) - np.log(s)
        uo = u_hat_std(t, fam)
        u[obs, j] = uo
        uy[obs, j] = y * uo
        uy2[obs, j] = y * y * uo

        m = mu[cens, j]
        t1 = (data.c1[cens] - m) / s
        t2 = (data.c2[cens] - m) / s
        lp, eu, eut, eut2 = censored_moments_std(t1, t2, fam)
        log_f[cens, j] = lp
        u[cens, j] = eu
        uy[cens, j] = m * eu + s * eut
        uy2[cens, j] = m * m * eu + 2 * m * s * eut + s * s * eut2
        if fam.kind == CONTAMINATED:
            tt = np.zeros(n)
            tt[obs] = t
            a1 = np.full(n, -1.0)
            a2 = np.ones(n)
            a1[cens], a2[cens] = t1, t2
            b[:, j] = cn_bad_point_std(tt, a1, a2, data.rho, fam.nu, fam.gamma)

    log_gate = gating_log_probs(data.R, theta.tau)
    log_joint = log_gate + log_f
    log_mix = logsumexp(log_joint, axis=1)
    if not np.all(np.isfinite(log_mix)):
        raise NumericalSupportError(int(np.flatnonzero(~np.isfinite(log_mix))[0]))
    z = np.exp(log_joint - log_mix[:, None])
    dead = z == 0
    if np.any(dead):
        # moments of components with zero posterior weight never enter an update
        u[dead] = 0.0
        uy[dead] = 0.0
        uy2[dead] = 0.0
    return EStepCache(z, u, uy, uy2, b, float(log_mix.sum()), log_gate)


# ---------------------------------------------------------------------------
# CM-steps
# ---------------------------------------------------------------------------

def cm_step_regression(cache: EStepCache, data: CensoredData, min_component_mass: float = 0.0):
    """Weighted least-squares update of ``beta_j`` and the ``sigma2_j`` update."""
    X = data.X
    G = cache.z.shape[1]
    beta = np.empty((G, X.shape[1]))
    sigma2 = np.empty(G)
    for j in range(G):
        z = cache.z[:, j]
        nj = z.sum()
        if not nj > min_component_mass:
            raise EmptyComponentError(j, nj)
        wu = z * cache.u[:, j]
        A = (X * wu[:, None]).T @ X
        rhs = X.T @ (z * cache.uy[:, j])
        try:
            if np.linalg.cond(A) > 1e14:
                raise np.linalg.LinAlgError
            bj = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            raise SingularDesignError(j) from None
        m = X @ bj
        s2 = np.sum(z * (cache.uy2[:, j] - 2 * cache.uy[:, j] * m + cache.u[:, j] * m * m)) / nj
        beta[j] = bj
        sigma2[j] = s2
    return beta, sigma2


def cm_step_gating(z: np.ndarray, tau_old: np.ndarray, R: np.ndarray) -> np.ndarray:
    """One minorise-maximise step ``tau_j += 4 (R'R)^-1 R'(z_j - pi_j)`` per block.

    Blocks are visited in turn with the gate refreshed after each, which keeps
    every block step an ascent step of the gating part of the Q-function.
    """
    tau = np.array(tau_old, float, copy=True)
    G = z.shape[1]
    if G == 1:
        return tau
    RtR = R.T @ R
    try:
        chol = np.linalg.cholesky(RtR)
    except np.linalg.LinAlgError:
        raise SingularDesignError(-1, "gating Gram matrix") from None
    for j in range(G - 1):
        P = gating_probs(R, tau)
        g = R.T @ (z[:, j] - P[:, j])
        tau[j] += 4.0 * np.linalg.solve(chol.T, np.linalg.solve(chol, g))
    return tau


def _gating_q(R, Z, tau):
    return float(np.sum(Z * gating_log_probs(R, tau)))


def cm_step_gating_newton(z: np.ndarray, tau_old: np.ndarray, R: np.ndarray,
                          max_iter: int = 25, tol: float = 1e-10) -> np.ndarray:
    """Maximise ``sum_ij z_ij log pi_j(r_i; tau)`` over ``tau`` by Newton's method
    with step halving, started at ``tau_old``.

    Each accepted step increases the gating part of the Q-function, so this is
    a valid conditional maximisation; it falls back to the minorisation step
    when the Hessian is singular.
    """
    G = z.shape[1]
    tau = np.array(tau_old, float, copy=True)
    if G == 1:
        return tau
    n, q = R.shape
    k = (G - 1) * q
    q_old = _gating_q(R, z, tau)
    for _ in range(max_iter):
        P = gating_probs(R, tau)[:, :-1]
        g = (R.T @ (z[:, :-1] - P)).T.ravel()
        H = np.empty((k, k))
        for a in range(G - 1):
            for c in range(a, G - 1):
                w = P[:, a] * ((a == c) - P[:, c])
                blk = (R * w[:, None]).T @ R
                H[a * q:(a + 1) * q, c * q:(c + 1) * q] = blk
                H[c * q:(c + 1) * q, a * q:(a + 1) * q] = blk.T
        try:
            step = np.linalg.solve(H, g).reshape(G - 1, q)
        except np.linalg.LinAlgError:
            return cm_step_gating(z, tau, R)
        t = 1.0
        while t > 1e-8:
            cand = tau + t * step
            q_new = _gating_q(R, z, cand)
            if q_new >= q_old:
                break
            t *= 0.5
        else:
            break
        tau = cand
        gain = q_new - q_old
        q_old = q_new
        if gain < tol or np.max(np.abs(t * step)) < 1e-10:
            break
    return tau


# ---------------------------------------------------------------------------
# CML-step
# ---------------------------------------------------------------------------

class _LoglikEvaluator:
    """Observed log-likelihood as a function of one component's mixing law,
    with the other components' terms held fixed."""

    def __init__(self, data, theta):
        self.data = data
        self.theta = theta
        self.log_gate = gating_log_probs(data.R, theta.tau)
        self.log_f, _, _ = component_log_terms(data, theta)

    def _single_terms(self, j, fam):
        th = self.theta.copy(beta=self.theta.beta[j:j + 1], sigma2=self.theta.sigma2[j:j + 1],
                             tau=np.zeros((0, self.data.q)), families=(fam,))
        return component_log_terms(self.data, th)[0][:, 0]

    def total(self, log_f=None):
        lf = self.log_f if log_f is None else log_f
        val = logsumexp(self.log_gate + lf, axis=1).sum()
        return val if np.isfinite(val) else -np.inf

    def with_families(self, fams):
        lf = np.column_stack([self._single_terms(j, f) for j, f in enumerate(fams)])
        return self.total(lf), lf

    def with_component(self, j, fam):
        lf = self.log_f.copy()
        lf[:, j] = self._single_terms(j, fam)
        return self.total(lf), lf


def _line_search(fun, current, lo, hi, xatol):
    """Maximise ``fun`` on ``[lo, hi]``; never returns a point worse than ``current``."""
    f_cur = fun(current)
    res = optimize.minimize_scalar(lambda v: -fun(v), bounds=(lo, hi), method="bounded",
                                   options={"xatol": xatol})
    x, fx = float(res.x), -float(res.fun)
    if fx > f_cur:
        return x, fx
    return current, f_cur


def _at_bound(x, lo, hi):
    tol = 1e-3 * (hi - lo)
    if x - lo <= tol:
        return "lower"
    if hi - x <= tol:
        return "upper"
    return None


def cml_step_nu(data: CensoredData, theta: MixtureParams, opts: FitOptions,
                cache: Optional[EStepCache] = None):
    """Update the mixing parameters; returns ``(theta, loglik, boundary_flags)``.

    Student-t and slash: bounded line search(es) on the observed
    log-likelihood. CN: ``nu_j`` from the bad-point probabilities in
    ``cache``, then ``gamma`` by line search.
    """
    kind = theta.families[0].kind
    flags = {}
    ev = _LoglikEvaluator(data, theta)
    if kind == NORMAL or opts.fix_nu:
        return theta, ev.total(), flags
    lo, hi = opts.nu_bounds[kind]
    fams = list(theta.families)
    G = theta.G

    if kind in (STUDENT_T, SLASH):
        xatol = 1e-4
        if opts.tie_nu:
            f = lambda v: ev.with_families([fams[0].with_params(v)] * G)[0]
            v, ll = _line_search(f, fams[0].nu, lo, hi, xatol)
            fams = [fams[0].with_params(v)] * G
            flags["nu"] = _at_bound(v, lo, hi)
        else:
            for j in range(G):
                f = lambda v: ev.with_component(j, fams[j].with_params(v))[0]
                v, _ = _line_search(f, fams[j].nu, lo, hi, xatol)
                fams[j] = fams[j].with_params(v)
                ev.log_f = ev.with_component(j, fams[j])[1]
                flags[f"nu{j + 1}"] = _at_bound(v, lo, hi)
        theta = theta.copy(families=tuple(fams))
        return theta, ev.with_families(fams)[0], flags

    # contaminated normal
    if cache is None or cache.b is None:
        raise ValueError("CN update needs the E-step bad-point probabilities")
    zb = (cache.z * cache.b).sum(axis=0)
    zs = cache.z.sum(axis=0)
    if opts.tie_nu:
        nus = np.full(G, zb.sum() / zs.sum())
    else:
        nus = zb / zs
    nus = np.clip(nus, lo, hi)
    for j in range(G):
        flags[f"nu{j + 1}" if not opts.tie_nu else "nu"] = _at_bound(nus[j], lo, hi)
    fams = [fams[j].with_params(nus[j], fams[j].gamma) for j in range(G)]
    ev.log_f = ev.with_families(fams)[1]
    if opts.tie_nu:
        f = lambda g: ev.with_families([fj.with_params(fj.nu, g) for fj in fams])[0]
        g, _ = _line_search(f, fams[0].gamma, lo, hi, 1e-6)
        fams = [fj.with_params(fj.nu, g) for fj in fams]
        flags["gamma"] = _at_bound(g, lo, hi)
    else:
        for j in range(G):
            f = lambda g: ev.with_component(j, fams[j].with_params(fams[j].nu, g))[0]
            g, _ = _line_search(f, fams[j].gamma, lo, hi, 1e-6)
            fams[j] = fams[j].with_params(fams[j].nu, g)
            ev.log_f = ev.with_component(j, fams[j])[1]
            flags[f"gamma{j + 1}"] = _at_bound(g, lo, hi)
    theta = theta.copy(families=tuple(fams))
    return theta, ev.with_families(fams)[0], flags


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------

def _content_key(data: CensoredData) -> int:
    h = hashlib.sha256()
    for arr in (data.w, data.rho.astype(float), data.c1, data.c2, data.X, data.R):
        h.update(np.ascontiguousarray(arr, float).tobytes())
    return int.from_bytes(h.digest()[:8], "little")


def canonical_row_order(data: CensoredData) -> np.ndarray:
    keys = [data.R[:, k] for k in range(data.q)][::-1] + [data.X[:, k] for k in range(data.p)][::-1]
    keys += [np.nan_to_num(data.c2), np.nan_to_num(data.c1), data.rho.astype(float),
             np.nan_to_num(data.w)]
    return np.lexsort(keys)


def resolve_family(family: Union[SmnFamily, str], fix_nu: bool = False) -> SmnFamily:
    if isinstance(family, SmnFamily):
        if fix_nu or family.kind == NORMAL:
            return family
        return family.with_params(*INITIAL_NU[family.kind])
    kind = _ALIASES.get(str(family).lower())
    if kind is None:
        raise ValueError(f"unknown SMN family {family!r}")
    return SmnFamily(kind, *INITIAL_NU.get(kind, ()))


def fit_gating(R: np.ndarray, Z: np.ndarray, tau0: Optional[np.ndarray] = None,
               ridge: float = 1e-3, max_iter: int = 100, tol: float = 1e-10) -> np.ndarray:
    """Multinomial-logistic fit of (soft) labels ``Z`` with a small ridge,
    by Newton's method; the last column is the reference."""
    n, q = R.shape
    G = Z.shape[1]
    k = (G - 1) * q
    tau = np.zeros((G - 1, q)) if tau0 is None else np.array(tau0, float)
    for _ in range(max_iter):
        P = gating_probs(R, tau)[:, :-1]
        g = (R.T @ (Z[:, :-1] - P)).T.ravel() - ridge * tau.ravel()
        H = np.zeros((k, k))
        for a in range(G - 1):
            for c in range(G - 1):
                w = P[:, a] * ((a == c) - P[:, c])
                H[a * q:(a + 1) * q, c * q:(c + 1) * q] = (R * w[:, None]).T @ R
        H += ridge * np.eye(k)
        step = np.linalg.solve(H, g)
        tau = tau + step.reshape(G - 1, q)
        if np.max(np.abs(step)) < tol:
            break
    return tau


def _random_lines_partition(X, y, G, rng, tries=20):
    n, p = X.shape
    for _ in range(tries):
        lines = []
        for _ in range(G):
            idx = rng.choice(n, size=p + 1, replace=False)
            lines.append(np.linalg.lstsq(X[idx], y[idx], rcond=None)[0])
        resid = np.abs(y[:, None] - X @ np.array(lines).T)
        labels = np.argmin(resid, axis=1)
        if np.min(np.bincount(labels, minlength=G)) >= p + 1:
            return labels
    raise InitializationError(f"no random-line partition with groups of at least p+1 points "
                              f"after {tries} draws")


def initialize(data: CensoredData, G: int, family: Union[SmnFamily, str],
               opts: Optional[FitOptions] = None, attempt: int = 0) -> MixtureParams:
    """Starting values from a partition of the (imputed) responses.

    Attempt 0 uses k-means on the responses. Later attempts (restarts) draw
    ``G`` random subsets of ``p + 1`` rows, fit a line through each, and assign
    every row to its nearest line, so that a restart does not revisit the
    basin of the k-means start.

    Per-group least squares gives ``beta_j``, the residual spread ``sigma2_j``;
    the gate starts at zero (or at a multinomial fit of the partition); the
    mixing parameters start near normality.
    """
    opts = opts or FitOptions()
    n, p, q = data.n, data.p, data.q
    if n < G * (p + 2):
        raise InitializationError(f"need at least G*(p+2) = {G * (p + 2)} observations, got {n}")
    fam = resolve_family(family, opts.fix_nu)
    y = data.imputed_response()
    rng = np.random.default_rng([opts.seed, attempt, _content_key(data) % (2 ** 32)])

    labels = np.zeros(n, int)
    if G > 1 and attempt > 0:
        labels = _random_lines_partition(data.X, y, G, rng)
    elif G > 1:
        feats = y[:, None]
        for _ in range(10):
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    _, labels = kmeans2(feats, G, minit="++", missing="raise", seed=rng)
            except ClusterError:
                continue
            if np.min(np.bincount(labels, minlength=G)) >= p + 1:
                break
        else:
            raise InitializationError("k-means did not produce groups of at least p+1 points "
                                      "after 10 restarts")

    beta = np.empty((G, p))
    sigma2 = np.empty(G)
    floor = max(np.var(y), 1e-12) * 1e-4
    for j in range(G):
        idx = labels == j
        bj, *_ = np.linalg.lstsq(data.X[idx], y[idx], rcond=None)
        beta[j] = bj
        sigma2[j] = max(np.mean((y[idx] - data.X[idx] @ bj) ** 2), floor)
    if G > 1 and opts.tau_init == "multinomial":
        tau = fit_gating(data.R, np.eye(G)[labels])
    else:
        tau = np.zeros((G - 1, q))
    return MixtureParams(beta, sigma2, tau, (fam,) * G)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def ecme_iteration(data: CensoredData, theta: MixtureParams, cache: EStepCache,
                   opts: FitOptions, min_mass: float = 0.0):
    """One CM1 / CM2 / CML sweep from an E-step cache; returns ``(theta, flags)``."""
    beta, sigma2 = cm_step_regression(cache, data, min_mass)
    if opts.gating_update == "mm":
        tau = cm_step_gating(cache.z, theta.tau, data.R)
    else:
        tau = cm_step_gating_newton(cache.z, theta.tau, data.R)
    new = theta.copy(beta=beta, sigma2=sigma2, tau=tau)
    new, _, flags = cml_step_nu(data, new, opts, cache)
    return new, flags


def _run(data, theta, opts, min_mass, min_sigma2):
    cache = e_step(data, theta)
    trace = [cache.loglik]
    converged = False
    flags = {}
    it = 0
    for it in range(1, opts.max_iter + 1):
        theta, flags = ecme_iteration(data, theta, cache, opts, min_mass)
        if np.any(theta.sigma2 < min_sigma2):
            j = int(np.argmin(theta.sigma2))
            raise DegenerateComponentError(j, float(theta.sigma2[j]))
        cache = e_step(data, theta)
        trace.append(cache.loglik)
        if abs(trace[-1] - trace[-2]) < opts.tol:
            converged = True
            break
    return theta, cache, np.array(trace), converged, it, flags


def fit(data: CensoredData, G: int, family: Union[SmnFamily, str],
        opts: Optional[FitOptions] = None, theta0: Optional[MixtureParams] = None) -> FitReport:
    """Maximum-likelihood fit by ECME.

    Rows are processed in a canonical (content-sorted) order, so permuting the
    input rows changes nothing but the row order of the responsibilities.
    """
    opts = opts or FitOptions()
    order = canonical_row_order(data)
    sdata = data.subset(order)
    n = data.n
    min_mass = opts.min_component_mass if opts.min_component_mass is not None else 1e-6 * n
    min_sigma2 = opts.min_sigma2_ratio * max(np.var(sdata.imputed_response()), 1e-300)

    best = None
    failures = []
    restarts = 0
    for start in range(opts.n_starts):
        for attempt in range(opts.max_restarts + 1):
            try:
                if opts.init_strategy == "user":
                    if theta0 is None:
                        raise InitializationError("init_strategy='user' needs theta0")
                    th = theta0.copy()
                else:
                    th = initialize(sdata, G, family, opts, attempt=start * 1000 + attempt)
                result = _run(sdata, th, opts, min_mass, min_sigma2)
            except (FitError, NumericalSupportError) as exc:
                failures.append(f"start {start} attempt {attempt}: {exc}")
                log.debug("fit attempt failed: %s", exc)
                restarts += 1
                if opts.init_strategy == "user":
                    break
                continue
            if best is None or result[2][-1] > best[2][-1]:
                best = result
            break
    if best is None:
        raise FitError(f"all fitting attempts failed for G={G}", {"failures": failures})

    theta, cache, trace, converged, iters, flags = best
    perm = theta.canonical_order()
    theta = theta.permuted(perm)
    z_sorted = cache.z[:, perm]
    z = np.empty_like(z_sorted)
    z[order] = z_sorted
    m = theta.n_free_params(opts.tie_nu)
    ll = float(trace[-1])
    from .metrics import aic_bic
    aic, bic = aic_bic(ll, m, n)
    report = FitReport(theta=theta, loglik=ll, loglik_trace=trace, converged=converged,
                       iters=iters, responsibilities=z, labels=np.argmax(z, axis=1), aic=aic,
                       bic=bic, m=m, n=n, tie_nu=opts.tie_nu,
                       boundary={k: v for k, v in flags.items() if v}, restarts=restarts)
    if opts.compute_se:
        from .inference import information_se
        report.se = information_se(data, theta)
    return report

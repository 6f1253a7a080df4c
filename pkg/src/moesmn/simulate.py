"""Synthetic data for the simulation studies.

Responses follow ``y = x' beta_z + U^{-1/2} V`` with ``V ~ N(0, sigma2_z)``,
the label ``z`` drawn from the softmax gate, and ``U`` from any positive
mixing law: the four fitted SMN laws plus laws used only for generation
(Laplace through an exponential ``1/U``, Birnbaum-Saunders, GIG).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .model import CensoredData, MixtureParams, gating_probs
from .smn import ParameterDomainError, SmnFamily, sample_mixing

OUTLIER_LABEL = -1


# ---------------------------------------------------------------------------
# mixing laws used only for generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LaplaceViaExp:
    """``1/U ~ Exp(rate=lam)``; with ``lam = 0.5`` the error is Laplace with scale ``sigma``."""
    lam: float = 0.5

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterDomainError("lam must be > 0")

    def sample(self, n, rng):
        return 1.0 / rng.exponential(1.0 / self.lam, size=n)


@dataclass(frozen=True)
class BirnbaumSaunders:
    alpha: float
    beta: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ParameterDomainError("Birnbaum-Saunders parameters must be > 0")

    def sample(self, n, rng):
        h = 0.5 * self.alpha * rng.standard_normal(n)
        return self.beta * (h + np.sqrt(h * h + 1.0)) ** 2


@dataclass(frozen=True)
class GIG:
    """Density proportional to ``x^(kappa-1) exp(-(chi/x + psi x)/2)``."""
    kappa: float
    chi: float
    psi: float

    def __post_init__(self):
        if not (self.chi > 0 and self.psi > 0):
            raise ParameterDomainError("GIG needs chi > 0 and psi > 0")

    def sample(self, n, rng):
        return sample_gig(self.kappa, self.chi, self.psi, rng, size=n)

    def mean(self):
        from scipy.special import kve
        w = np.sqrt(self.chi * self.psi)
        return np.sqrt(self.chi / self.psi) * kve(self.kappa + 1, w) / kve(self.kappa, w)


def sample_gig(kappa, chi, psi, rng, size=None):
    """GIG draws through scipy's ratio-of-uniforms ``geninvgauss`` sampler."""
    if not (chi > 0 and psi > 0) or not np.isfinite(kappa):
        raise ParameterDomainError(f"GIG domain violated: kappa={kappa}, chi={chi}, psi={psi}")
    law = stats.geninvgauss(kappa, np.sqrt(chi * psi), scale=np.sqrt(chi / psi))
    return law.rvs(size=size, random_state=rng)


def gig_cdf(x, kappa, chi, psi):
    """GIG cdf by numerical integration of the density (test oracle)."""
    from scipy import integrate
    from scipy.special import kve
    w = np.sqrt(chi * psi)
    logc = 0.5 * kappa * np.log(psi / chi) - np.log(2.0 * kve(kappa, w)) + w
    f = lambda t: np.exp(logc + (kappa - 1) * np.log(t) - 0.5 * (chi / t + psi * t))
    mode = ((kappa - 1) + np.sqrt((kappa - 1) ** 2 + chi * psi)) / psi
    out = []
    for v in np.atleast_1d(np.asarray(x, float)):
        if v <= 0:
            out.append(0.0)
            continue
        pts = [mode] if v > mode else None
        out.append(integrate.quad(f, 0, v, points=pts, limit=200, epsabs=1e-12)[0])
    return np.array(out)


def _mixing_sample(law, n, rng):
    if isinstance(law, SmnFamily):
        return sample_mixing(n, law, rng)
    return law.sample(n, rng)


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------

MixingLaw = Union[SmnFamily, LaplaceViaExp, BirnbaumSaunders, GIG]


@dataclass
class GeneratorSpec:
    beta: np.ndarray
    sigma2: np.ndarray
    tau: np.ndarray
    mixing: Union[MixingLaw, Tuple[MixingLaw, ...]]
    x_ranges: Sequence[Tuple[float, float]]
    r_ranges: Sequence[Tuple[float, float]] = ()
    r_equals_x: bool = False

    def __post_init__(self):
        self.beta = np.atleast_2d(np.asarray(self.beta, float))
        self.sigma2 = np.atleast_1d(np.asarray(self.sigma2, float))
        G, p = self.beta.shape
        self.tau = np.asarray(self.tau, float).reshape(G - 1, -1) if G > 1 else np.zeros((0, self.q))
        if self.sigma2.shape != (G,) or np.any(self.sigma2 < 0):
            raise ParameterDomainError("sigma2 must have one nonnegative entry per component")
        if len(self.x_ranges) != p - 1:
            raise ValueError(f"need {p - 1} x ranges, got {len(self.x_ranges)}")
        for lo, hi in list(self.x_ranges) + list(self.r_ranges):
            if not lo < hi:
                raise ValueError(f"empty covariate range ({lo}, {hi})")
        if G > 1 and self.tau.shape[1] != self.q:
            raise ValueError("tau width does not match the gating design")
        laws = self.mixing if isinstance(self.mixing, tuple) else (self.mixing,) * G
        if len(laws) != G:
            raise ValueError("need one mixing law per component")
        self.mixing = tuple(laws)

    @property
    def G(self):
        return self.beta.shape[0]

    @property
    def q(self):
        return self.beta.shape[1] if self.r_equals_x else len(self.r_ranges) + 1

    def params(self) -> MixtureParams:
        """The generating regression and gating parameters as ``MixtureParams``
        (normal families; the mixing law is not part of the comparison)."""
        return MixtureParams(self.beta, np.maximum(self.sigma2, 1e-300), self.tau,
                             (SmnFamily.normal(),) * self.G)


@dataclass
class SimulatedData:
    y: np.ndarray
    X: np.ndarray
    R: np.ndarray
    labels: np.ndarray
    u: Optional[np.ndarray] = None

    @property
    def n(self):
        return self.y.size


def _design(ranges, n, rng):
    cols = [np.ones(n)] + [rng.uniform(lo, hi, n) for lo, hi in ranges]
    return np.column_stack(cols)


def generate_moe_data(spec: GeneratorSpec, n: int, rng) -> SimulatedData:
    """Draw ``n`` observations from the mixture of experts in ``spec``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng)
    X = _design(spec.x_ranges, n, rng)
    R = X.copy() if spec.r_equals_x else _design(spec.r_ranges, n, rng)
    if spec.G > 1:
        P = gating_probs(R, spec.tau)
        cum = np.cumsum(P, axis=1)
        draw = rng.random(n)
        labels = np.minimum((draw[:, None] > cum).sum(axis=1), spec.G - 1)
    else:
        labels = np.zeros(n, int)
    u = np.empty(n)
    for j, law in enumerate(spec.mixing):
        idx = np.flatnonzero(labels == j)
        u[idx] = _mixing_sample(law, idx.size, rng)
    noise = np.sqrt(spec.sigma2[labels] / u) * rng.standard_normal(n)
    y = np.sum(X * spec.beta[labels], axis=1) + noise
    return SimulatedData(y, X, R, labels, u)


# ---------------------------------------------------------------------------
# censoring
# ---------------------------------------------------------------------------

@dataclass
class CensoredResponses:
    w: np.ndarray
    rho: np.ndarray
    c1: np.ndarray
    c2: np.ndarray

    def with_design(self, X, R) -> CensoredData:
        return CensoredData(self.w, self.rho, self.c1, self.c2, X, R)

    @property
    def n_censored(self):
        return int(self.rho.sum())


def _check_fraction(p):
    if not 0.0 <= p < 1.0:
        raise ValueError(f"censoring fraction must lie in [0, 1), got {p}")


def apply_interval_censoring(y, p: float, c: float = 1.0, rng=None) -> CensoredResponses:
    """Censor ``floor(n p) + 1`` randomly chosen responses to windows of width at most ``c``.

    The bounds ``max(y - U1, y + U2 - c)`` and ``min(y + U2, y - U1 + c)`` with
    ``U1, U2 ~ U(0, c)`` always contain ``y``.
    """
    _check_fraction(p)
    if not c > 0:
        raise ValueError("c must be > 0")
    rng = np.random.default_rng(rng)
    y = np.asarray(y, float)
    n = y.size
    rho = np.zeros(n, bool)
    c1 = np.full(n, np.nan)
    c2 = np.full(n, np.nan)
    if p > 0:
        k = min(int(np.floor(n * p)) + 1, n)
        idx = np.sort(rng.choice(n, size=k, replace=False))
        u1 = rng.uniform(0, c, k)
        u2 = rng.uniform(0, c, k)
        yi = y[idx]
        c1[idx] = np.maximum(yi - u1, yi + u2 - c)
        c2[idx] = np.minimum(yi + u2, yi - u1 + c)
        rho[idx] = True
    w = np.where(rho, np.nan, y)
    return CensoredResponses(w, rho, c1, c2)


def apply_tail_censoring(y, p: float, side: str = "right") -> CensoredResponses:
    """Censor the values beyond the empirical ``1-p`` (right) or ``p`` (left) quantile."""
    _check_fraction(p)
    side = side.lower()
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    y = np.asarray(y, float)
    n = y.size
    rho = np.zeros(n, bool)
    c1 = np.full(n, np.nan)
    c2 = np.full(n, np.nan)
    if p > 0:
        if side == "right":
            thr = np.quantile(y, 1.0 - p)
            rho = y > thr
            c1[rho], c2[rho] = thr, np.inf
        else:
            thr = np.quantile(y, p)
            rho = y < thr
            c1[rho], c2[rho] = -np.inf, thr
    w = np.where(rho, np.nan, y)
    return CensoredResponses(w, rho, c1, c2)


def inject_outliers(data: CensoredData, labels, c_prob: float, rng=None,
                    value: float = -2.0, x_range=(-1.0, 1.0)):
    """Append ``floor(n c_prob)`` uncensored rows with ``y = value``, a fresh
    uniform ``x`` and ``r = x``; their labels are ``OUTLIER_LABEL``."""
    rng = np.random.default_rng(rng)
    n = data.n
    k = int(np.floor(n * c_prob + 1e-9))
    labels = np.asarray(labels)
    if k == 0:
        return data, labels
    X_new = np.column_stack([np.ones(k)] + [rng.uniform(*x_range, k) for _ in range(data.p - 1)])
    R_new = X_new[:, :data.q].copy()
    nan = np.full(k, np.nan)
    out = CensoredData(np.concatenate([data.w, np.full(k, value)]),
                       np.concatenate([data.rho, np.zeros(k, bool)]),
                       np.concatenate([data.c1, nan]), np.concatenate([data.c2, nan]),
                       np.vstack([data.X, X_new]), np.vstack([data.R, R_new]))
    return out, np.concatenate([labels, np.full(k, OUTLIER_LABEL)])


# ---------------------------------------------------------------------------
# study designs
# ---------------------------------------------------------------------------

ASYMPTOTIC_FAMILIES = {
    "n": SmnFamily.normal(),
    "t": SmnFamily.student_t(3.0),
    "sl": SmnFamily.slash(3.0),
    "cn": SmnFamily.contaminated_normal(0.3, 0.3),
}


def scenario_asymptotic(family: str = "n") -> GeneratorSpec:
    """Two experts with three covariates and a two-covariate gate (right censoring)."""
    return GeneratorSpec(
        beta=[[0, -1, -2, -3], [-1, 1, 2, 3]], sigma2=[1.0, 2.0], tau=[[0.7, 1, 2]],
        mixing=ASYMPTOTIC_FAMILIES[family.lower()],
        x_ranges=[(1, 5), (-2, 2), (1, 4)], r_ranges=[(-2, 1), (-1, 1)])


GSELECT_SIGMA2 = 0.2


def scenario_gselect(sigma2: float = GSELECT_SIGMA2) -> GeneratorSpec:
    """Three experts on one covariate with GIG mixing (left censoring)."""
    return GeneratorSpec(
        beta=[[-4, 4], [0, -2], [0, 4]], sigma2=[sigma2] * 3, tau=[[0, 13], [2, 9]],
        mixing=(GIG(-0.5, 1, 2), GIG(0.5, 1, 2), GIG(-0.5, 2, 1)),
        x_ranges=[(-2, 2)], r_equals_x=True)


def scenario_heavytail(generator: str = "laplace") -> GeneratorSpec:
    """Three experts with Laplace (``1/U ~ Exp(0.5)``) or Birnbaum-Saunders mixing
    (interval censoring)."""
    if generator == "laplace":
        mixing = LaplaceViaExp(0.5)
    elif generator == "bs":
        mixing = (BirnbaumSaunders(3.0), BirnbaumSaunders(1.0), BirnbaumSaunders(2.0))
    else:
        raise ValueError(f"unknown heavy-tail generator {generator!r}")
    return GeneratorSpec(
        beta=[[-2, -1, -2, -3], [0.5, 1, 2, 3], [2, 1, 3, 5]], sigma2=[1.0, 3.0, 5.0],
        tau=[[2, 10], [0.7, 10]], mixing=mixing,
        x_ranges=[(1, 5), (0, 1), (-2, -1)], r_ranges=[(-1, 1)])


def scenario_outliers(generator: str = "gig") -> GeneratorSpec:
    """Two crossing experts with small noise, to which outliers are added."""
    if generator == "gig":
        mixing = (GIG(-0.5, 1, 0.2), GIG(0.5, 1, 0.2))
    elif generator == "bs":
        mixing = (BirnbaumSaunders(0.5), BirnbaumSaunders(1.0))
    elif generator == "laplace":
        mixing = LaplaceViaExp(0.5)
    else:
        raise ValueError(f"unknown outlier generator {generator!r}")
    return GeneratorSpec(beta=[[0, 1], [0, -1]], sigma2=[0.01, 0.01], tau=[[0, 10]],
                         mixing=mixing, x_ranges=[(-1, 1)], r_equals_x=True)

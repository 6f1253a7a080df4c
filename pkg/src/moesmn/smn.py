"""Scale mixtures of normals: Normal, Student-t, slash and contaminated normal.

A variable in this class is generated as ``Y = mu + U**(-1/2) * V`` with
``V ~ N(0, sigma2)`` and a positive mixing variable ``U``:

* Normal: ``U = 1``
* Student-t: ``U ~ Gamma(nu/2, rate=nu/2)``
* slash: ``U ~ Beta(nu, 1)``
* contaminated normal: ``U = gamma`` with probability ``nu``, else ``U = 1``

Everything that can underflow is evaluated on the log scale. The vectorised
``log*`` kernels operate on standardised arguments (``mu = 0``, ``sigma2 = 1``)
and accept numpy arrays; the scalar wrappers at the bottom mirror the
textbook signatures.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike
from scipy import special

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

NORMAL = "normal"
STUDENT_T = "t"
SLASH = "slash"
CONTAMINATED = "cn"

KINDS = (NORMAL, STUDENT_T, SLASH, CONTAMINATED)

_ALIASES = {
    "n": NORMAL,
    "normal": NORMAL,
    "t": STUDENT_T,
    "student_t": STUDENT_T,
    "sl": SLASH,
    "slash": SLASH,
    "cn": CONTAMINATED,
    "contaminated_normal": CONTAMINATED,
}


class ParameterDomainError(ValueError):
    """A distribution parameter lies outside its admissible range."""


@dataclass(frozen=True)
class SmnFamily:
    """Member of the scale-mixture-of-normals class.

    ``nu`` is the degrees of freedom (Student-t), the tail parameter (slash)
    or the contamination proportion (CN). ``gamma`` is the CN variance
    deflation factor and is unused elsewhere.
    """

    kind: str
    nu: Optional[float] = None
    gamma: Optional[float] = None

    def __post_init__(self):
        kind = _ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise ParameterDomainError(f"unknown SMN family {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == NORMAL:
            object.__setattr__(self, "nu", None)
            object.__setattr__(self, "gamma", None)
        elif kind in (STUDENT_T, SLASH):
            if self.nu is None or not np.isfinite(self.nu) or self.nu <= 0:
                raise ParameterDomainError(f"{kind}: nu must be > 0, got {self.nu}")
            object.__setattr__(self, "nu", float(self.nu))
            object.__setattr__(self, "gamma", None)
        else:
            for name in ("nu", "gamma"):
                v = getattr(self, name)
                if v is None or not (0.0 < v < 1.0):
                    raise ParameterDomainError(f"cn: {name} must lie in (0, 1), got {v}")
                object.__setattr__(self, name, float(v))

    @classmethod
    def normal(cls) -> "SmnFamily":
        return cls(NORMAL)

    @classmethod
    def student_t(cls, nu: float) -> "SmnFamily":
        return cls(STUDENT_T, nu)

    @classmethod
    def slash(cls, nu: float) -> "SmnFamily":
        return cls(SLASH, nu)

    @classmethod
    def contaminated_normal(cls, nu: float, gamma: float) -> "SmnFamily":
        return cls(CONTAMINATED, nu, gamma)

    @property
    def n_params(self) -> int:
        """Number of free mixing parameters."""
        return {NORMAL: 0, STUDENT_T: 1, SLASH: 1, CONTAMINATED: 2}[self.kind]

    @property
    def params(self) -> tuple:
        if self.kind == NORMAL:
            return ()
        if self.kind == CONTAMINATED:
            return (self.nu, self.gamma)
        return (self.nu,)

    def with_params(self, *params: float) -> "SmnFamily":
        return SmnFamily(self.kind, *params)

    def __str__(self) -> str:
        if self.kind == NORMAL:
            return "normal"
        if self.kind == CONTAMINATED:
            return f"cn(nu={self.nu:.6g}, gamma={self.gamma:.6g})"
        return f"{self.kind}(nu={self.nu:.6g})"


@dataclass(frozen=True)
class LocationScale:
    mu: float
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ParameterDomainError(f"sigma2 must be > 0, got {self.sigma2}")

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------

def upper_incomplete_gamma(a: float, x: float) -> float:
    """Unnormalised upper incomplete gamma ``int_x^inf t**(a-1) exp(-t) dt``."""
    if not a > 0 or not x >= 0:
        raise ParameterDomainError(f"upper_incomplete_gamma needs a > 0, x >= 0; got a={a}, x={x}")
    return float(special.gammaincc(a, x) * special.gamma(a))


def lower_incomplete_gamma(a: float, x: float) -> float:
    """Unnormalised lower incomplete gamma ``int_0^x t**(a-1) exp(-t) dt``."""
    if not a > 0 or not x >= 0:
        raise ParameterDomainError(f"lower_incomplete_gamma needs a > 0, x >= 0; got a={a}, x={x}")
    return float(special.gammainc(a, x) * special.gamma(a))


def log_scaled_lower_gamma(a: ArrayLike, z: ArrayLike) -> np.ndarray:
    """``log(z**(-a) * gamma_lower(a, z))`` for ``z >= 0``.

    Equal to ``log(1F1(a; a+1; -z) / a)``; the hypergeometric route is used
    for ``z <= 1`` where ``gammainc`` would underflow for large ``a``.
    Returns ``-inf`` at ``z = inf`` and ``-log(a)`` at ``z = 0``.
    """
    a, z = np.broadcast_arrays(np.asarray(a, float), np.asarray(z, float))
    out = np.empty(a.shape)
    small = z <= 1.0
    if np.any(small):
        out[small] = np.log(special.hyp1f1(a[small], a[small] + 1.0, -z[small])) - np.log(a[small])
    big = ~small
    if np.any(big):
        zb = z[big]
        ab = a[big]
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.log(special.gammainc(ab, zb)) + special.gammaln(ab) - ab * np.log(zb)
        out[big] = np.where(np.isinf(zb), -np.inf, val)
    return out


def log_diff_exp(a: ArrayLike, b: ArrayLike) -> np.ndarray:
    """``log(exp(a) - exp(b))`` for ``a >= b``; ``-inf`` when equal."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = b - a
        out = a + np.log1p(-np.exp(d))
    out = np.where(np.isneginf(b), a, out)
    out = np.where(a <= b, -np.inf, out)
    return out


def _log_t_cdf(x: np.ndarray, df) -> np.ndarray:
    # lower tail taken directly, upper tail through the reflected lower tail
    with np.errstate(divide="ignore"):
        lo = np.log(special.stdtr(df, np.minimum(x, 0.0)))
        hi = np.log1p(-special.stdtr(df, -np.maximum(x, 0.0)))
    return np.where(x <= 0, lo, hi)


def log_normal_pdf(x: ArrayLike) -> np.ndarray:
    x = np.asarray(x, float)
    return -0.5 * x * x - LOG_SQRT_2PI


def log_normal_hazard(x: ArrayLike) -> np.ndarray:
    """``log(phi(x) / Phi(x))``, finite for every finite ``x``."""
    return log_normal_pdf(x) - special.log_ndtr(np.asarray(x, float))


def stable_normal_hazard(x: ArrayLike):
    """Normal hazard ``phi(x) / Phi(x)`` computed as ``exp(log phi - log Phi)``.

    The exponential is taken in ``np.longdouble`` so the right tail, where the
    ratio drops below the smallest double (``x`` above roughly 38.5), stays
    representable on platforms with x87 extended precision.
    """
    x = np.asarray(x, float)
    out = np.exp(log_normal_hazard(x).astype(np.longdouble))
    return out[()] if out.ndim == 0 else out


def pvii_cdf(x: ArrayLike, a: float, delta: float):
    """Cdf of the Pearson type VII law with density proportional to
    ``(1 + t**2/delta)**(-a/2)``.

    It is a Student-t with ``a - 1`` degrees of freedom scaled by
    ``sqrt(delta / (a - 1))``.
    """
    if not a > 1 or not delta > 0:
        raise ParameterDomainError(f"pvii_cdf needs a > 1, delta > 0; got a={a}, delta={delta}")
    df = a - 1.0
    out = special.stdtr(df, np.asarray(x, float) * np.sqrt(df / delta))
    return out[()] if np.ndim(out) == 0 else out


def log_pvii_cdf(x: ArrayLike, a: float, delta: float) -> np.ndarray:
    df = a - 1.0
    return _log_t_cdf(np.asarray(x, float) * np.sqrt(df / delta), df)


# ---------------------------------------------------------------------------
# standardised log-density, log-cdf and mixing moments
# ---------------------------------------------------------------------------

def _slash_logpdf(x, nu):
    return np.log(nu) - LOG_SQRT_2PI + log_scaled_lower_gamma(nu + 0.5, 0.5 * x * x)


def _slash_logcdf(x, nu):
    # integration by parts: F(x) = Phi(x) - x f(x) / (2 nu); for x <= 0 both
    # terms are non-negative so no cancellation occurs
    neg = -np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.log(-neg) + _slash_logpdf(neg, nu) - np.log(2.0 * nu)
        lo = np.logaddexp(special.log_ndtr(neg), tail)
    lo = np.where(np.isinf(neg), -np.inf, lo)
    lo = np.where(neg == 0, np.log(0.5), lo)
    with np.errstate(divide="ignore"):
        hi = np.log1p(-np.exp(lo))
    return np.where(x <= 0, lo, hi)


def logpdf_std(x: ArrayLike, fam: SmnFamily) -> np.ndarray:
    x = np.asarray(x, float)
    if fam.kind == NORMAL:
        return log_normal_pdf(x)
    if fam.kind == STUDENT_T:
        nu = fam.nu
        return (special.gammaln(0.5 * (nu + 1)) - special.gammaln(0.5 * nu)
                - 0.5 * np.log(nu * np.pi) - 0.5 * (nu + 1) * np.log1p(x * x / nu))
    if fam.kind == SLASH:
        return _slash_logpdf(x, fam.nu)
    nu, g = fam.nu, fam.gamma
    return np.logaddexp(np.log(nu) + 0.5 * np.log(g) + log_normal_pdf(x * np.sqrt(g)),
                        np.log1p(-nu) + log_normal_pdf(x))


def logcdf_std(x: ArrayLike, fam: SmnFamily) -> np.ndarray:
    x = np.asarray(x, float)
    if fam.kind == NORMAL:
        return special.log_ndtr(x)
    if fam.kind == STUDENT_T:
        return _log_t_cdf(x, fam.nu)
    if fam.kind == SLASH:
        return _slash_logcdf(x, fam.nu)
    nu, g = fam.nu, fam.gamma
    return np.logaddexp(np.log(nu) + special.log_ndtr(x * np.sqrt(g)),
                        np.log1p(-nu) + special.log_ndtr(x))


def log_mixing_moment(r: float, fam: SmnFamily) -> float:
    """``log E(U**r)``."""
    if fam.kind == NORMAL:
        return 0.0
    if fam.kind == STUDENT_T:
        nu = fam.nu
        if nu + 2 * r <= 0:
            raise ParameterDomainError(f"E(U^{r}) undefined for t with nu={nu}")
        return float(special.gammaln(0.5 * nu + r) - special.gammaln(0.5 * nu) + r * np.log(2.0 / nu))
    if fam.kind == SLASH:
        if fam.nu + r <= 0:
            raise ParameterDomainError(f"E(U^{r}) undefined for slash with nu={fam.nu}")
        return float(np.log(fam.nu / (fam.nu + r)))
    return float(np.log(fam.nu * fam.gamma ** r + 1.0 - fam.nu))


def log_e_phi(r: float, h: ArrayLike, fam: SmnFamily) -> np.ndarray:
    """``log E(U**r * phi(h * sqrt(U)))``."""
    h = np.asarray(h, float)
    if fam.kind == NORMAL:
        return log_normal_pdf(h)
    if fam.kind == STUDENT_T:
        nu = fam.nu
        if nu + 2 * r <= 0:
            raise ParameterDomainError(f"E_phi({r}, .) undefined for t with nu={nu}")
        a = 0.5 * nu + r
        with np.errstate(divide="ignore"):
            return (special.gammaln(a) - LOG_SQRT_2PI - special.gammaln(0.5 * nu)
                    + 0.5 * nu * np.log(0.5 * nu) + a * np.log(2.0 / (h * h + nu)))
    if fam.kind == SLASH:
        if fam.nu + r <= 0:
            raise ParameterDomainError(f"E_phi({r}, .) undefined for slash with nu={fam.nu}")
        return np.log(fam.nu) - LOG_SQRT_2PI + log_scaled_lower_gamma(fam.nu + r, 0.5 * h * h)
    nu, g = fam.nu, fam.gamma
    return np.logaddexp(r * np.log(g) + np.log(nu) + log_normal_pdf(h * np.sqrt(g)),
                        np.log1p(-nu) + log_normal_pdf(h))


def log_e_Phi(r: float, h: ArrayLike, fam: SmnFamily) -> np.ndarray:
    """``log E(U**r * Phi(h * sqrt(U)))``."""
    h = np.asarray(h, float)
    if fam.kind == NORMAL:
        return special.log_ndtr(h)
    if fam.kind == STUDENT_T:
        nu = fam.nu
        # Pearson VII with shape nu + 2r + 1 is a t with nu + 2r degrees of freedom
        return log_mixing_moment(r, fam) + log_pvii_cdf(h, nu + 2 * r + 1.0, nu)
    if fam.kind == SLASH:
        nu = fam.nu
        return log_mixing_moment(r, fam) + _slash_logcdf(h, nu + r)
    nu, g = fam.nu, fam.gamma
    return np.logaddexp(r * np.log(g) + np.log(nu) + special.log_ndtr(h * np.sqrt(g)),
                        np.log1p(-nu) + special.log_ndtr(h))


def u_hat_std(x: ArrayLike, fam: SmnFamily) -> np.ndarray:
    """``E(U | T = x)`` for a standardised observation ``x``."""
    x = np.asarray(x, float)
    delta = x * x
    if fam.kind == NORMAL:
        return np.ones_like(delta)
    if fam.kind == STUDENT_T:
        return (fam.nu + 1.0) / (fam.nu + delta)
    if fam.kind == SLASH:
        z = 0.5 * delta
        return np.exp(log_scaled_lower_gamma(fam.nu + 1.5, z) - log_scaled_lower_gamma(fam.nu + 0.5, z))
    nu, g = fam.nu, fam.gamma
    e = 0.5 * (1.0 - g) * delta
    num = np.logaddexp(np.log1p(-nu), np.log(nu) + 1.5 * np.log(g) + e)
    den = np.logaddexp(np.log1p(-nu), np.log(nu) + 0.5 * np.log(g) + e)
    return np.exp(num - den)


# ---------------------------------------------------------------------------
# scalar API
# ---------------------------------------------------------------------------

def smn_pdf(y: float, loc: LocationScale, fam: SmnFamily) -> float:
    t = (y - loc.mu) / loc.sigma
    return float(np.exp(logpdf_std(t, fam) - np.log(loc.sigma)))


def smn_logpdf(y: ArrayLike, loc: LocationScale, fam: SmnFamily) -> np.ndarray:
    t = (np.asarray(y, float) - loc.mu) / loc.sigma
    return logpdf_std(t, fam) - np.log(loc.sigma)


def smn_cdf(x: ArrayLike, fam: SmnFamily):
    """Standard (``mu = 0``, ``sigma2 = 1``) cdf."""
    out = np.exp(logcdf_std(x, fam))
    return out[()] if np.ndim(out) == 0 else out


def e_phi(r: float, h: float, fam: SmnFamily) -> float:
    return float(np.exp(log_e_phi(r, h, fam)))


def e_Phi(r: float, h: float, fam: SmnFamily) -> float:
    return float(np.exp(log_e_Phi(r, h, fam)))


def u_hat_uncensored(y: float, loc: LocationScale, fam: SmnFamily) -> float:
    return float(u_hat_std((y - loc.mu) / loc.sigma, fam))


def sample_mixing(n: int, fam: SmnFamily, rng: np.random.Generator) -> np.ndarray:
    """Draws of the mixing variable ``U``."""
    if fam.kind == NORMAL:
        return np.ones(n)
    if fam.kind == STUDENT_T:
        return rng.gamma(0.5 * fam.nu, 2.0 / fam.nu, size=n)
    if fam.kind == SLASH:
        return rng.beta(fam.nu, 1.0, size=n)
    bad = rng.random(n) < fam.nu
    return np.where(bad, fam.gamma, 1.0)


def smn_sample(n: int, loc: LocationScale, fam: SmnFamily, rng: np.random.Generator,
               return_mixing: bool = False):
    u = sample_mixing(n, fam, rng)
    y = loc.mu + loc.sigma * rng.standard_normal(n) / np.sqrt(u)
    return (y, u) if return_mixing else y

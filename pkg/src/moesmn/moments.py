"""Conditional moments ``E(U), E(UY), E(UY^2)`` of an SMN variable given
``c1 <= Y <= c2``.

The closed forms reduce everything to the two mixing expectations
``E_phi(r, h) = E(U^r phi(h sqrt U))`` and ``E_Phi(r, h) = E(U^r Phi(h sqrt U))``
evaluated at the standardised bounds. Each ratio is formed on the log scale,
and intervals lying mostly in the right half are reflected to the left half
so that cdf differences are taken between small numbers.

``quadrature_oracle_moments`` recomputes the same quantities by nested
numerical integration over ``(u, y)`` and shares no code with the closed
forms; it exists for verification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from .smn import (
    CONTAMINATED,
    NORMAL,
    SLASH,
    STUDENT_T,
    LocationScale,
    SmnFamily,
    log_diff_exp,
    log_e_phi,
    log_e_Phi,
)

PROB_FLOOR = 1e-300


class DegenerateIntervalError(ArithmeticError):
    """The censoring interval carries (numerically) zero probability."""


@dataclass(frozen=True)
class MomentTriple:
    u_hat: float
    uy_hat: float
    uy2_hat: float

    def as_tuple(self):
        return (self.u_hat, self.uy_hat, self.uy2_hat)


def censored_moments_std(t1, t2, fam: SmnFamily):
    """Standardised conditional moments for arrays of bounds ``t1 < t2``.

    Returns ``(log_prob, eu, eut, eut2)`` with ``log_prob = log P(t1<=T<=t2)``
    and ``eu = E(U|.)``, ``eut = E(UT|.)``, ``eut2 = E(UT^2|.)``. Entries with
    zero probability come back as ``nan`` moments and ``-inf`` log-probability.
    """
    t1 = np.asarray(t1, float)
    t2 = np.asarray(t2, float)
    t1, t2 = np.broadcast_arrays(t1, t2)
    with np.errstate(invalid="ignore"):
        flip = (t1 + t2) > 0
    a = np.where(flip, -t2, t1)
    b = np.where(flip, -t1, t2)

    log_prob = log_diff_exp(log_e_Phi(0.0, b, fam), log_e_Phi(0.0, a, fam))
    log_u = log_diff_exp(log_e_Phi(1.0, b, fam), log_e_Phi(1.0, a, fam))
    with np.errstate(invalid="ignore", over="ignore"):
        ea = np.exp(log_e_phi(0.5, a, fam) - log_prob)
        eb = np.exp(log_e_phi(0.5, b, fam) - log_prob)
        eu = np.exp(log_u - log_prob)
        eut = ea - eb
        # t * E_phi(0.5, t) vanishes at infinite bounds
        ta = np.where(np.isinf(a), 0.0, a * ea)
        tb = np.where(np.isinf(b), 0.0, b * eb)
        eut2 = 1.0 + ta - tb
    eut = np.where(flip, -eut, eut)
    bad = np.isneginf(log_prob)
    if np.any(bad):
        eu = np.where(bad, np.nan, eu)
        eut = np.where(bad, np.nan, eut)
        eut2 = np.where(bad, np.nan, eut2)
    return log_prob, eu, eut, eut2


def censored_moments(c1: float, c2: float, loc: LocationScale, fam: SmnFamily,
                     min_prob: float = PROB_FLOOR) -> MomentTriple:
    """Moments of ``(U, UY, UY^2)`` given ``c1 <= Y <= c2``.

    Raises
    ------
    DegenerateIntervalError
        If ``P(c1 <= Y <= c2) < min_prob``.
    """
    if not c1 < c2:
        raise DegenerateIntervalError(f"empty interval [{c1}, {c2}]")
    s = loc.sigma
    lp, eu, eut, eut2 = censored_moments_std((c1 - loc.mu) / s, (c2 - loc.mu) / s, fam)
    if lp == -np.inf or (min_prob > 0 and lp < np.log(min_prob)):
        raise DegenerateIntervalError(
            f"P({c1} <= Y <= {c2}) = exp({float(lp):.6g}) is below {min_prob:g}")
    mu = loc.mu
    return MomentTriple(float(eu), float(mu * eu + s * eut),
                        float(mu * mu * eu + 2 * mu * s * eut + loc.sigma2 * eut2))


# ---------------------------------------------------------------------------
# quadrature oracle
# ---------------------------------------------------------------------------

def _mixing_law(fam: SmnFamily):
    """(atoms, weights) for discrete laws, or (density, support, breakpoints)."""
    if fam.kind == NORMAL:
        return ("atoms", np.array([1.0]), np.array([1.0]))
    if fam.kind == CONTAMINATED:
        return ("atoms", np.array([fam.gamma, 1.0]), np.array([fam.nu, 1.0 - fam.nu]))
    if fam.kind == STUDENT_T:
        law = stats.gamma(0.5 * fam.nu, scale=2.0 / fam.nu)
        return ("density", law.pdf, (0.0, np.inf))
    law = stats.beta(fam.nu, 1.0)
    return ("density", law.pdf, (0.0, 1.0))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def _y_window(c1, c2, mu, sigma, u):
    # the y-integral is cut at mu +- 60 sd of the conditional normal
    half = 60.0 * sigma / np.sqrt(u)
    return max(c1, mu - half), min(c2, mu + half)


def _inner(c1, c2, mu, sigma, u):
    """``int y^k phi(y; mu, sigma^2/u) dy`` over ``[c1, c2]`` for k = 0, 1, 2.

    Composite 12-point Gauss-Legendre on panels of half a conditional sd.
    """
    lo, hi = _y_window(c1, c2, mu, sigma, u)
    if not lo < hi:
        return np.zeros(3)
    sd = sigma / np.sqrt(u)
    m = max(1, int(np.ceil((hi - lo) / (0.5 * sd))))
    edges = np.linspace(lo, hi, m + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    y = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    dens = w * np.exp(-0.5 * ((y - mu) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))
    return np.array([dens.sum(), (dens * y).sum(), (dens * y * y).sum()])


def quadrature_oracle_moments(c1: float, c2: float, loc: LocationScale, fam: SmnFamily,
                              min_prob: float = PROB_FLOOR) -> MomentTriple:
    """Conditional moments by nested integration over the mixing variable and ``y``.

    For the Student-t law ``U`` is integrated over ``(0, inf)`` and for the slash
    law over ``(0, 1]`` with adaptive quadrature; the two-atom laws reduce to
    finite sums. The inner ``y``-integral is restricted to
    ``mu +- 60 sigma / sqrt(u)``.
    """
    if not c1 < c2:
        raise DegenerateIntervalError(f"empty interval [{c1}, {c2}]")
    mu, sigma = loc.mu, loc.sigma
    kind, a, b = _mixing_law(fam)

    def integrand(u):
        inner = _inner(c1, c2, mu, sigma, u)
        return np.concatenate([inner[:1], u * inner])

    if kind == "atoms":
        tot = sum(w * integrand(u) for u, w in zip(a, b))
    else:
        dens, (lo, hi) = a, b
        g = lambda u: dens(u) * integrand(u) if u > 0 else np.zeros(4)
        opts = dict(epsabs=1e-13, epsrel=1e-11, limit=400)
        if np.isinf(hi):
            tot = integrate.quad_vec(g, lo, 1.0, **opts)[0] + integrate.quad_vec(g, 1.0, np.inf, **opts)[0]
        else:
            tot = integrate.quad_vec(g, lo, hi, **opts)[0]
    prob = tot[0]
    if not prob >= min_prob:
        raise DegenerateIntervalError(f"P({c1} <= Y <= {c2}) = {prob:.6g} below {min_prob:g}")
    return MomentTriple(*(tot[1:] / prob))


def truncated_normal_moments(c1: float, c2: float, mu: float, sigma2: float):
    """Textbook ``(P, E(Y|.), E(Y^2|.))`` for a normal truncated to ``[c1, c2]``."""
    s = np.sqrt(sigma2)
    a, b = (c1 - mu) / s, (c2 - mu) / s
    p = special.ndtr(b) - special.ndtr(a)
    pa = 0.0 if np.isinf(a) else np.exp(-0.5 * a * a) / np.sqrt(2 * np.pi)
    pb = 0.0 if np.isinf(b) else np.exp(-0.5 * b * b) / np.sqrt(2 * np.pi)
    m1 = (pa - pb) / p
    ta = 0.0 if np.isinf(a) else a * pa
    tb = 0.0 if np.isinf(b) else b * pb
    m2 = 1.0 + (ta - tb) / p
    return p, mu + s * m1, mu * mu + 2 * mu * s * m1 + sigma2 * m2

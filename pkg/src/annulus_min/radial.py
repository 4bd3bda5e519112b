"""Radial rho-harmonic maps between annuli and the Euclidean closed forms.

For a radial profile ``varrho`` on ``[R, 1]`` (target metric rho = 1/varrho)
and a parameter ``gamma`` the map ``w(s e^{it}) = p(s) e^{it}`` with
``p = q^{-1}`` and

    q(s) = exp( int_1^s dy / sqrt(y^2 + gamma varrho(y)^2) )

is rho-harmonic from ``A(q(R), 1)`` onto ``A(R, 1)``.  The inverse satisfies
``s p'(s) = sqrt(p^2 + gamma varrho(p)^2)``.
"""
from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq, minimize_scalar

from .geometry import Annulus
from .metrics import RadialProfile

CRITICAL_BAND = 1e-8
TABLE_SIZE = 2048
CRITICAL_WARNING = "critical map; inverse derivative unbounded"


class NitscheConditionError(ValueError):
    """Requested inner radius is below the Nitsche radius."""


class RadicandError(ValueError):
    """``y^2 + gamma varrho(y)^2`` is negative or has a non-integrable zero."""


class QuadratureError(ArithmeticError):
    def __init__(self, msg, error_estimate):
        super().__init__(f"{msg} (achieved error estimate {error_estimate:.3e})")
        self.error_estimate = error_estimate


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

_X8, _W8 = np.polynomial.legendre.leggauss(8)
_X16, _W16 = np.polynomial.legendre.leggauss(16)


def _adaptive_gl(f, edges, tol=1e-12, max_level=48, max_pieces=200_000):
    """Integrate ``f`` over every ``[edges[k], edges[k+1]]``.

    Each piece is accepted when its 8- and 16-point Gauss-Legendre values
    agree to a share of ``tol`` proportional to its length; otherwise it is
    bisected.  Returns per-interval integrals and the summed error estimate.
    """
    edges = np.asarray(edges, dtype=float)
    n = edges.size - 1
    total_len = edges[-1] - edges[0]
    out = np.zeros(n)
    err = 0.0
    a, b, owner = edges[:-1].copy(), edges[1:].copy(), np.arange(n)
    for _ in range(max_level):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        v8 = half * (f(mid[:, None] + half[:, None] * _X8[None, :]) @ _W8)
        v16 = half * (f(mid[:, None] + half[:, None] * _X16[None, :]) @ _W16)
        e = np.abs(v16 - v8)
        # a piece's share of the tolerance never drops below its own roundoff
        ok = e <= np.maximum(tol * 2 * half / total_len, 64 * np.finfo(float).eps * np.abs(v16))
        ok |= half < 1e-7 * total_len
        np.add.at(out, owner[ok], v16[ok])
        err += float(np.sum(e[ok]))
        bad = ~ok
        if not np.any(bad):
            return out, err
        if np.count_nonzero(bad) > max_pieces:
            break
        a, b, owner, m = a[bad], b[bad], owner[bad], mid[bad]
        a, b, owner = np.concatenate([a, m]), np.concatenate([m, b]), np.concatenate([owner, owner])
    raise QuadratureError("adaptive Gauss-Legendre did not converge", err + float(np.sum(e[bad])))


def _radicand(profile: RadialProfile, gamma: float, y):
    v = profile(y)
    return y * y + gamma * v * v


def _validate_radicand(profile: RadialProfile, gamma: float, a: float, b: float = 1.0, n: int = 2049):
    """Check ``y^2 + gamma varrho^2(y) >= 0`` on ``[a, b]`` and that its zeros are integrable."""
    y = np.linspace(a, b, n)
    v = profile(y)
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        bad = y[np.argmax(~(v > 0))]
        raise ValueError(f"profile must be positive and finite on [{a:g}, {b:g}] (fails at y = {bad:.6g})")
    rad = y * y + gamma * v * v
    scale = y * y
    k = int(np.argmin(rad / scale))
    if rad[k] < -1e-12 * scale[k]:
        raise RadicandError(
            f"y^2 + gamma*varrho(y)^2 < 0 at y = {y[k]:.10g} (value {rad[k]:.3e}); "
            f"gamma = {gamma:.10g} is below the admissible range")
    tiny = 1e-13 * scale
    if np.any(rad[1:-1] <= tiny[1:-1]):
        yk = y[1:-1][np.argmax(rad[1:-1] <= tiny[1:-1])]
        raise RadicandError(f"radicand has a non-integrable zero inside the interval at y = {yk:.10g}")
    # an endpoint zero must be simple for the integral to exist
    d = 1e-4 * (b - a)
    for end, inner in ((a, a + d), (b, b - d)):
        if _radicand(profile, gamma, np.array([end]))[0] <= 1e-13 * end * end:
            if _radicand(profile, gamma, np.array([inner]))[0] < 1e-7 * d * end * end:
                raise RadicandError(f"radicand has a non-integrable (double) zero at y = {end:.10g}")


def _divided_difference(profile: RadialProfile, y, y0, delta):
    """``(varrho(y) - varrho(y0)) / (y - y0)`` without cancellation for small ``delta``."""
    small = np.abs(delta) < 1e-5 * max(abs(y0), 1e-3)
    safe = np.where(small, 1.0, delta)
    direct = (profile(y) - profile(y0)) / safe
    if not np.any(small):
        return direct
    return np.where(small, profile.d1(0.5 * (y + y0)), direct)


def _theta_integrand(profile: RadialProfile, gamma: float, s: float):
    """Integrand of ``int_s^1 dy / sqrt(y^2 + gamma varrho^2)`` in ``y = s + (1-s) sin^2 th``.

    ``dy = (1-s) sin(2 th) d th`` cancels a simple zero of the radicand at
    either endpoint.  Near each endpoint ``y0`` the radicand is evaluated as
    ``rad(y0) + (y - y0) E(y)`` so it keeps full relative accuracy as
    ``y -> y0``.
    """
    length = 1.0 - s
    rad_s = max(float(_radicand(profile, gamma, np.array([s]))[0]), 0.0)
    rad_1 = max(float(_radicand(profile, gamma, np.array([1.0]))[0]), 0.0)

    def expand(y, y0, r0, delta):
        E = (y + y0) + gamma * (profile(y) + profile(y0)) * _divided_difference(profile, y, y0, delta)
        return r0 + delta * E

    def g(th):
        sn, cs = np.sin(th), np.cos(th)
        d_lo = length * sn * sn           # y - s
        d_hi = -length * cs * cs          # y - 1
        y = np.where(th < 0.25 * math.pi, s + d_lo, 1.0 + d_hi)
        rad = np.where(th < 0.25 * math.pi,
                       expand(y, s, rad_s, d_lo), expand(y, 1.0, rad_1, d_hi))
        rad = np.maximum(rad, 1e-300)
        return 2.0 * length * sn * cs / np.sqrt(rad)

    return g


def _log_q_integral(profile: RadialProfile, gamma: float, s: float) -> float:
    vals, _ = _adaptive_gl(_theta_integrand(profile, gamma, s), [0.0, 0.25 * math.pi, 0.5 * math.pi])
    return float(np.sum(vals))


def q_gamma(profile: RadialProfile, gamma: float, s: float) -> float:
    """``q(s) = exp(int_1^s dy / sqrt(y^2 + gamma varrho^2(y)))`` for ``s`` in ``(0, 1]``."""
    s = float(s)
    if not (0 < s <= 1):
        raise ValueError(f"s must lie in (0, 1], got {s}")
    if s == 1.0:
        return 1.0
    _validate_radicand(profile, gamma, s)
    return math.exp(-_log_q_integral(profile, gamma, s))


def r_of_gamma(profile: RadialProfile, gamma: float, R: float) -> float:
    """Inner radius ``q(R)`` of the source annulus for parameter ``gamma``."""
    _check_R(R)
    return q_gamma(profile, gamma, R)


def _check_R(R):
    if not (0 < R < 1):
        raise ValueError(f"R must lie in (0,1), got {R}")


def gamma_diamond(profile: RadialProfile, R: float) -> float:
    """Critical parameter ``-min_{R <= y <= 1} y^2 rho(y)^2``.

    When ``t rho(t)`` is monotone the minimum sits at an endpoint; otherwise a
    warning is issued and the minimum is located from dense samples.
    """
    _check_R(R)

    def yr2(y):
        return (y / profile(y)) ** 2

    ends = float(min(yr2(np.array([R]))[0], yr2(np.array([1.0]))[0]))
    if profile.t_rho_monotone(R, 1.0):
        return -ends
    warnings.warn("t*rho(t) is not monotone on [R, 1]; gamma_diamond taken from dense samples",
                  RuntimeWarning, stacklevel=2)
    y = np.linspace(R, 1.0, 4097)
    v = yr2(y)
    k = int(np.argmin(v))
    lo, hi = y[max(k - 1, 0)], y[min(k + 1, y.size - 1)]
    best = float(v[k])
    if hi > lo:
        res = minimize_scalar(lambda t: float(yr2(np.array([t]))[0]), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-13})
        best = min(best, float(res.fun))
    return -min(best, ends)


def nitsche_radius(profile: RadialProfile, R: float) -> float:
    """Smallest inner radius ``r_diamond`` admitting a radial diffeomorphic rho-harmonic map onto ``A(R,1)``."""
    return r_of_gamma(profile, gamma_diamond(profile, R), R)


def gamma_for_target(profile: RadialProfile, R: float, r_target: float) -> float:
    """Parameter ``gamma`` whose radial map has source ``A(r_target, 1)``."""
    _check_R(R)
    if not (0 < r_target < 1):
        raise ValueError(f"r_target must lie in (0,1), got {r_target}")
    gd = gamma_diamond(profile, R)
    rd = r_of_gamma(profile, gd, R)
    if r_target < rd - 1e-12:
        raise NitscheConditionError(
            f"Nitsche condition violated: r_target = {r_target:.10g} < r_diamond = {rd:.10g}")
    if abs(r_target - rd) <= 1e-12:
        return gd

    def F(g):
        return r_of_gamma(profile, g, R) - r_target

    up = max(1.0, abs(gd))
    for _ in range(60):
        if F(up) > 0:
            break
        up *= 2.0
    else:
        raise ArithmeticError("could not bracket gamma for the requested inner radius")
    g = brentq(F, gd, up, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(F(g)) >= 1e-10:
        raise ArithmeticError(f"gamma root not resolved: residual {F(g):.3e}")
    return float(g)


# --------------------------------------------------------------------------
# maps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NitscheFamily:
    profile: RadialProfile
    gamma: float
    q_samples: np.ndarray = field(repr=False)   # rows (s, q(s)), s increasing from R to 1
    r_gamma: float
    target_R: float
    gamma_diamond: float
    quadrature_error: float = 0.0

    @property
    def critical(self) -> bool:
        return abs(self.gamma - self.gamma_diamond) < CRITICAL_BAND

    @property
    def warning(self) -> str | None:
        return CRITICAL_WARNING if self.critical else None

    def q(self, s):
        return PchipInterpolator(self.q_samples[:, 0], self.q_samples[:, 1])(s)

    def checksum(self) -> str:
        text = "\n".join(f"{s:.12e},{q:.12e}" for s, q in self.q_samples)
        return hashlib.sha256(text.encode()).hexdigest()


class AnalyticMap:
    """Closed-form map between annuli with exact Wirtinger derivatives."""

    kind = "analytic"
    source: Annulus
    target: Annulus

    def __call__(self, z):
        raise NotImplementedError

    def wirtinger(self, z):
        """Return ``(f_z, f_zbar)`` at ``z``."""
        raise NotImplementedError

    def jacobian(self, z):
        fz, fzb = self.wirtinger(z)
        return np.abs(fz) ** 2 - np.abs(fzb) ** 2

    def descriptor(self) -> dict:
        return {"kind": self.kind, "source": [self.source.inner_radius, self.source.outer_radius],
                "target": [self.target.inner_radius, self.target.outer_radius]}


@dataclass(frozen=True)
class IdentityMap(AnalyticMap):
    source: Annulus
    kind = "identity"

    @property
    def target(self):
        return self.source

    def __call__(self, z):
        return np.asarray(z, dtype=complex).copy()

    def wirtinger(self, z):
        z = np.asarray(z, dtype=complex)
        return np.ones(z.shape, complex), np.zeros(z.shape, complex)


@dataclass(frozen=True)
class AffineEuclideanMap(AnalyticMap):
    """``f(z) = a / conj(z) + b z``, harmonic for the Euclidean metric."""

    a: float
    b: float
    source: Annulus
    target: Annulus
    kind: str = "euclidean-affine"

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return self.a / np.conj(z) + self.b * z

    def wirtinger(self, z):
        z = np.asarray(z, dtype=complex)
        return np.full(z.shape, self.b, dtype=complex), -self.a / np.conj(z) ** 2

    @property
    def hopf_constant(self) -> float:
        return -self.a * self.b

    def energy(self) -> float:
        """Euclidean energy ``2 pi [b^2 (1 - r^2) + a^2 (r^-2 - 1)]`` over ``A(r, 1)``."""
        r = self.source.inner_radius
        return 2 * math.pi * (self.b ** 2 * (1 - r * r) + self.a ** 2 * (r ** -2 - 1))

    def descriptor(self) -> dict:
        d = super().descriptor()
        d.update(a=self.a, b=self.b)
        return d


@dataclass(frozen=True)
class NitscheMap(AnalyticMap):
    """``w(s e^{it}) = p(s) e^{it}`` with ``p = q^{-1}`` from a :class:`NitscheFamily`."""

    family: NitscheFamily
    kind = "nitsche-radial"

    @property
    def source(self):
        return Annulus(self.family.r_gamma, 1.0)

    @property
    def target(self):
        return Annulus(self.family.target_R, 1.0)

    @cached_property
    def _inverse(self):
        tab = self.family.q_samples
        return PchipInterpolator(tab[:, 1], tab[:, 0])

    def _p(self, sigma):
        return self._inverse(np.clip(sigma, self.family.r_gamma, 1.0))

    def radial_part(self, sigma):
        """Return ``p(sigma)`` and ``p'(sigma)`` on ``[r_gamma, 1]``."""
        sigma = np.asarray(sigma, dtype=float)
        p = self._p(sigma)
        rad = np.maximum(_radicand(self.family.profile, self.family.gamma, p), 0.0)
        return p, np.sqrt(rad) / sigma

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        s = np.abs(z)
        return self._p(s) * z / s

    def wirtinger(self, z):
        z = np.asarray(z, dtype=complex)
        s = np.abs(z)
        p, dp = self.radial_part(s)
        phase2 = (z / s) ** 2
        return 0.5 * (dp + p / s) + 0j, 0.5 * (dp - p / s) * phase2

    @property
    def hopf_constant(self) -> float:
        return self.family.gamma / 4.0

    def descriptor(self) -> dict:
        d = super().descriptor()
        d.update(gamma=self.family.gamma, critical=self.family.critical)
        return d


def nitsche_map(profile: RadialProfile, gamma: float, R: float, n_table: int = TABLE_SIZE) -> NitscheMap:
    """Radial map ``A(r(gamma), 1) -> A(R, 1)`` fixing the outer circle pointwise.

    The integral ``int_s^1`` is tabulated on ``n_table`` subintervals of a
    cosine-clustered grid, so square-root zeros of the radicand at either
    end are resolved; ``q^{-1}`` is the monotone cubic interpolant of the table.
    """
    _check_R(R)
    _validate_radicand(profile, gamma, R)
    gd = gamma_diamond(profile, R)
    v = np.linspace(0.0, 1.0, n_table + 1)
    # cosine clustering: y = R + (1-R) sin^2(pi v / 2)
    s_nodes = R + (1.0 - R) * np.sin(0.5 * np.pi * v) ** 2
    s_nodes[0], s_nodes[-1] = R, 1.0
    pieces, err = _adaptive_gl(_theta_integrand(profile, gamma, R), 0.5 * np.pi * v)
    tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])   # int_{s_k}^1
    q = np.exp(-tail)
    tab = np.column_stack([s_nodes, q])
    if np.any(np.diff(q) <= 0):
        raise ArithmeticError("tabulated q is not strictly increasing")
    tab.setflags(write=False)
    fam = NitscheFamily(profile, float(gamma), tab, float(q[0]), float(R), gd, err)
    if fam.critical:
        warnings.warn(CRITICAL_WARNING, RuntimeWarning, stacklevel=2)
    return NitscheMap(fam)


def euclidean_closed_form(r: float, R: float) -> AffineEuclideanMap:
    """Radial Euclidean harmonic map ``A(r,1) -> A(R,1)`` fixing the outer circle."""
    if not (0 < r < 1 and 0 < R < 1):
        raise ValueError(f"expected 0 < r < 1 and 0 < R < 1, got r={r}, R={R}")
    a = r * (R - r) / (1 - r * r)
    b = (1 - r * R) / (1 - r * r)
    return AffineEuclideanMap(a, b, Annulus(r, 1.0), Annulus(R, 1.0))


def diffeo_threshold(r: float) -> float:
    """Largest target inner radius ``2r/(1+r^2)`` for a Euclidean radial diffeomorphism."""
    if not (0 < r < 1):
        raise ValueError(f"r must lie in (0,1), got {r}")
    return 2 * r / (1 + r * r)


def critical_euclidean_map(r: float) -> AffineEuclideanMap:
    """``w(z) = (r^2 + |z|^2) / (conj(z)(1 + r^2))``; its Jacobian vanishes on ``|z| = r``."""
    if not (0 < r < 1):
        raise ValueError(f"r must lie in (0,1), got {r}")
    k = 1.0 / (1 + r * r)
    return AffineEuclideanMap(r * r * k, k, Annulus(r, 1.0), Annulus(diffeo_threshold(r), 1.0),
                              kind="euclidean-critical")

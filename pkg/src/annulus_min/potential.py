"""Poisson integral and Green potential on the unit disk.

Conventions, with ``dλ`` the area measure::

    P[xi](z) = (1/2pi) int (1 - |z|^2) / |e^{it} - z|^2 xi(e^{it}) dt
    G[h](z)  = (1/2pi) int log(|w - z| / |1 - conj(w) z|) h(w) dλ(w)

With this normalization ``Δ G[h] = h`` and ``G[h] = 0`` on the circle, so
every smooth ``F`` on the closed disk splits as ``F = P[F|circle] + G[ΔF]``.

The Green potential is computed mode by mode.  Writing ``z = ρ e^{iφ}`` and
``w = σ e^{iθ}``, the kernel is

    log max(ρ,σ) + sum_{k>=1} (1/k) [(ρσ)^k - (min/max)^k] cos k(θ-φ),

so each angular Fourier mode of ``h`` reduces to a radial integral with a
kink at ``σ = ρ`` only.  That integral is done by Gauss-Legendre panels split
at ``ρ`` and graded geometrically towards the origin, which leaves no
singular cell to treat separately.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.interpolate import BarycentricInterpolator

RECONSTRUCTION_TOL = 1e-5
PANEL_NODES = 20
PANEL_RATIO = 4.0


@dataclass(frozen=True)
class DiskGrid:
    """Values at polar nodes of the closed unit disk.

    Radii are Chebyshev-Lobatto points of ``[0, 1]`` (so the centre and the
    boundary ring are included); angles are uniform.  Row 0 is the centre,
    where all columns must agree.
    """

    n_radial: int
    n_angular: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if self.n_radial < 2 or self.n_angular < 4:
            raise ValueError("DiskGrid needs n_radial >= 2 and n_angular >= 4")
        if v.shape != (self.n_radial, self.n_angular):
            raise ValueError(f"values must have shape {(self.n_radial, self.n_angular)}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("DiskGrid values must be finite")
        v = v.astype(complex if np.iscomplexobj(v) else float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def radii(self) -> np.ndarray:
        return disk_radii(self.n_radial)

    @property
    def theta(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_angular) / self.n_angular

    @property
    def nodes(self) -> np.ndarray:
        return self.radii[:, None] * np.exp(1j * self.theta)[None, :]

    @property
    def boundary(self) -> np.ndarray:
        return self.values[-1]

    @classmethod
    def from_function(cls, func, n_radial: int = 24, n_angular: int = 64) -> "DiskGrid":
        r = disk_radii(n_radial)
        t = 2 * np.pi * np.arange(n_angular) / n_angular
        z = r[:, None] * np.exp(1j * t)[None, :]
        return cls(n_radial, n_angular, np.asarray(func(z)) + 0 * r[:, None])

    def modes(self) -> np.ndarray:
        """Angular Fourier coefficients ``h_k(σ_i)``; column ``k`` in FFT order."""
        return np.fft.fft(self.values, axis=1) / self.n_angular

    @cached_property
    def _interpolator(self):
        return BarycentricInterpolator(self.radii, self.modes(), axis=0)

    def mode_values(self, sigma) -> np.ndarray:
        """Fourier coefficients at arbitrary radii by barycentric interpolation."""
        return self._interpolator(np.atleast_1d(np.asarray(sigma, dtype=float)))

    def evaluate(self, z) -> np.ndarray:
        """Spectral interpolant of the grid values at points of the closed disk."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if np.any(np.abs(z) > 1 + 1e-12):
            raise ValueError("evaluation points must lie in the closed unit disk")
        c = _nyquist_halved(self.mode_values(np.abs(z)), self.n_angular)
        e = np.exp(1j * np.outer(np.angle(z), _mode_numbers(self.n_angular)))
        out = np.sum(c * e, axis=1)
        return out if np.iscomplexobj(self.values) else out.real


@lru_cache(maxsize=64)
def disk_radii(n: int) -> np.ndarray:
    r = 0.5 * (1.0 - np.cos(np.pi * np.arange(n) / (n - 1)))
    r[0], r[-1] = 0.0, 1.0
    r.setflags(write=False)
    return r


def _nyquist_halved(c: np.ndarray, n: int) -> np.ndarray:
    # the Nyquist coefficient of an even-length FFT carries both +-n/2; split it
    if n % 2 == 0:
        c = c.copy()
        c[..., n // 2] *= 0.5
        c = np.concatenate([c, c[..., n // 2:n // 2 + 1]], axis=-1)
    return c


def _mode_numbers(n: int) -> np.ndarray:
    k = np.fft.fftfreq(n, 1.0 / n)
    return np.concatenate([k, [n // 2]]) if n % 2 == 0 else k


# --------------------------------------------------------------------------
# Poisson integral
# --------------------------------------------------------------------------

def default_margin(n_samples: int) -> float:
    """Distance from the circle below which the trapezoid rule loses accuracy.

    The aliasing error of the rule is about ``|z|^N``; ``|z| < e^{-30/N}``
    keeps it below ``e^{-30}``.
    """
    return min(0.5, -math.expm1(-30.0 / n_samples))


def poisson(boundary, z, margin: float | None = None):
    """Trapezoid quadrature of the Poisson integral of samples at ``e^{2 pi i j/N}``."""
    xi = np.asarray(boundary)
    if xi.ndim != 1 or xi.size < 4:
        raise ValueError("boundary must be a 1-d array of at least 4 samples")
    n = xi.size
    margin = default_margin(n) if margin is None else margin
    zz = np.asarray(z, dtype=complex)
    rad = np.abs(zz)
    if np.any(rad >= 1 - margin):
        bad = float(np.max(rad))
        raise ValueError(f"|z| = {bad:.6g} is too close to the unit circle for {n} boundary samples; "
                         f"need |z| < 1 - margin with margin = {margin:.6g} (use more samples)")
    e = np.exp(2j * np.pi * np.arange(n) / n)
    flat = zz.reshape(-1)
    ker = (1 - np.abs(flat[:, None]) ** 2) / np.abs(e[None, :] - flat[:, None]) ** 2
    out = (ker @ xi) / n
    out = out.reshape(zz.shape)
    return out.item() if out.ndim == 0 else out


def harmonic_extension(boundary, z):
    """Harmonic extension by the Fourier series of the samples; valid on the whole open disk."""
    xi = np.asarray(boundary)
    n = xi.size
    c = _nyquist_halved(np.fft.fft(xi) / n, n)
    k = _mode_numbers(n)
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    if np.any(np.abs(zz) > 1 + 1e-12):
        raise ValueError("evaluation points must lie in the closed unit disk")
    rk = np.abs(zz)[:, None] ** np.abs(k)[None, :]
    out = np.sum(c[None, :] * rk * np.exp(1j * np.outer(np.angle(zz), k)), axis=1)
    return out if np.iscomplexobj(xi) else out.real


# --------------------------------------------------------------------------
# Green potential
# --------------------------------------------------------------------------

@lru_cache(maxsize=4)
def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


def _panels(a: float, b: float) -> list[tuple[float, float]]:
    """Panels covering ``[a, b]``, graded geometrically towards ``a``.

    Only the outer interval ``[ρ, 1]`` carries ``log σ``, which is singular
    at the origin, so grading is needed towards ``a`` alone; ``a = 0`` is
    graded down to a tiny floor.
    """
    if b <= a:
        return []
    out = []
    hi = b
    floor = a if a > 0 else b * PANEL_RATIO ** -30
    while hi / floor > PANEL_RATIO * (1 + 1e-12):
        lo = hi / PANEL_RATIO
        out.append((lo, hi))
        hi = lo
    out.append((floor, hi))
    if a == 0:
        out.append((0.0, floor))
    return out


def _radial_rule(a: float, b: float, graded: bool = True):
    x, w = _gl(PANEL_NODES)
    nodes, weights = [], []
    panels = _panels(a, b) if graded else ([(a, 0.5 * (a + b)), (0.5 * (a + b), b)] if b > a else [])
    for lo, hi in panels:
        nodes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    if not nodes:
        return np.empty(0), np.empty(0)
    return np.concatenate(nodes), np.concatenate(weights)


def _density_modes(density, sigma: np.ndarray, n_angular: int) -> np.ndarray:
    if isinstance(density, DiskGrid):
        return density.mode_values(sigma)
    t = 2 * np.pi * np.arange(n_angular) / n_angular
    w = sigma[:, None] * np.exp(1j * t)[None, :]
    vals = np.asarray(density(w)) + 0 * w.real
    return np.fft.fft(vals, axis=1) / n_angular


def _green_one(density, z: complex, n_angular: int) -> complex:
    rho, phi = abs(z), math.atan2(z.imag, z.real)
    s_in, w_in = _radial_rule(0.0, rho, graded=False)
    s_out, w_out = _radial_rule(rho, 1.0)
    sigma = np.concatenate([s_in, s_out])
    wq = np.concatenate([w_in, w_out]) * sigma
    c = _density_modes(density, sigma, n_angular)
    n = c.shape[1]
    kmax = (n - 1) // 2
    total = np.sum(wq * np.log(np.maximum(rho, sigma)) * c[:, 0])
    if kmax >= 1 and rho > 0:
        k = np.arange(1, kmax + 1)
        ratio = np.where(sigma < rho, sigma / rho, rho / np.maximum(sigma, rho))
        Kk = (rho * sigma[:, None]) ** k - ratio[:, None] ** k
        ang = c[:, k] * np.exp(1j * k * phi) + c[:, n - k] * np.exp(-1j * k * phi)
        total += np.sum(wq[:, None] * Kk * ang / (2 * k))
    return complex(total)


def green_potential(density, z, n_angular: int | None = None):
    """``G[h](z)`` for a :class:`DiskGrid` or a callable density ``h(w)``."""
    zz = np.asarray(z, dtype=complex)
    if np.any(np.abs(zz) >= 1):
        raise ValueError("green_potential needs |z| < 1")
    if isinstance(density, DiskGrid):
        n = density.n_angular
        is_complex = np.iscomplexobj(density.values)
    else:
        n = n_angular or 64
        probe = np.asarray(density(np.array([0.3 + 0.2j])))
        is_complex = np.iscomplexobj(probe)
    out = np.array([_green_one(density, complex(p), n) for p in zz.reshape(-1)]).reshape(zz.shape)
    if not is_complex:
        out = out.real
    return out.item() if out.ndim == 0 else out


# --------------------------------------------------------------------------
# decomposition
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Decomposition:
    points: np.ndarray
    harmonic: np.ndarray
    potential: np.ndarray
    target: np.ndarray
    max_error: float
    worst_point: complex
    tolerance: float
    flagged: bool

    def __iter__(self):
        yield self.harmonic
        yield self.potential


def decompose(F: DiskGrid, laplacian, points=None, tol: float = RECONSTRUCTION_TOL) -> Decomposition:
    """Split ``F`` into ``P[F|circle]`` and ``G[ΔF]`` at interior points.

    ``laplacian`` is a :class:`DiskGrid` or a callable.  By default the
    points are the interior grid nodes.  The reconstruction error
    ``|F - P - G|`` is reported and flagged when it exceeds ``tol``.
    """
    if points is None:
        z = F.nodes[:-1].reshape(-1)
        z = z[~((np.abs(z) == 0) & (np.arange(z.size) > 0))]     # centre once
        target = F.evaluate(z)
    else:
        z = np.atleast_1d(np.asarray(points, dtype=complex))
        target = F.evaluate(z)
    if np.any(np.abs(z) >= 1):
        raise ValueError("decomposition points must lie in the open disk")
    harm = harmonic_extension(F.boundary, z)
    pot = np.atleast_1d(green_potential(laplacian, z, n_angular=F.n_angular))
    err = np.abs(target - harm - pot)
    k = int(np.argmax(err))
    max_err = float(err[k])
    return Decomposition(z, harm, pot, target, max_err, complex(z[k]), tol, bool(max_err > tol))

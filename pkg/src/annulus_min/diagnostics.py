"""Structural checks on discrete maps.

* Hopf differential ``rho^2(f) f_z conj(f_zbar)`` and its least-squares fit by
  ``c / z^2``.
* The ``(K, K')``-quasiconformal slack ``2 K J + K' - |Df|^2``.
* Empirical Hoelder exponents near a boundary circle.
* The signed square root and the Hoelder-halving check for its compositions.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .energy import DiscreteMap, wirtinger
from .geometry import chord_arc_constant_circle
from .metrics import Metric

# fraction by which the sampled inf of rho is shrunk in the conservative K'
RHO_SHRINK = 0.05


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


# --------------------------------------------------------------------------
# Hopf differential
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class HopfFit:
    c: complex
    residual: float
    im_violation: float
    relative_residual: float = 0.0
    n_nodes: int = 0

    def to_dict(self) -> dict:
        return {"c_re": self.c.real, "c_im": self.c.imag, "residual": self.residual,
                "relative_residual": self.relative_residual,
                "im_violation": self.im_violation, "n_nodes": self.n_nodes}


def hopf_field(dmap: DiscreteMap, m: Metric) -> np.ndarray:
    """Nodewise ``rho^2(f) f_z conj(f_zbar)``; note ``(conj f)_z = conj(f_zbar)``."""
    fz, fzb = wirtinger(dmap)
    return m.rho2(dmap.values) * fz * np.conj(fzb)


def hopf_fit(field_values: np.ndarray, mesh) -> HopfFit:
    """Weighted least-squares fit of ``c / z^2`` over the interior nodes.

    The weights are the cell areas ``s^2 h_u h_t``.  ``residual`` is the
    area-weighted root mean square of ``|field - c/z^2|``.
    """
    F = np.asarray(field_values, dtype=complex)
    if F.shape != mesh.shape:
        raise ValueError(f"field shape {F.shape} does not match mesh {mesh.shape}")
    if mesh.n_radial < 3:
        raise ValueError("mesh has no interior nodes")
    z = mesh.nodes[1:-1]
    F = F[1:-1]
    w = np.broadcast_to((mesh.radii[1:-1] ** 2 * mesh.h_u * mesh.h_t)[:, None], z.shape)
    phi = 1.0 / z ** 2
    c = complex(np.sum(w * np.conj(phi) * F) / np.sum(w * np.abs(phi) ** 2))
    r = F - c * phi
    wsum = float(np.sum(w))
    residual = math.sqrt(float(np.sum(w * np.abs(r) ** 2)) / wsum)
    scale = math.sqrt(float(np.sum(w * np.abs(F) ** 2)) / wsum)
    rel = residual / scale if scale > 0 else 0.0
    return HopfFit(c, residual, abs(c.imag), rel, int(z.size))


# --------------------------------------------------------------------------
# (K, K') quasiconformality
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QCReport:
    """Slack of ``|Df|^2 <= 2 K J + K'`` for three choices of ``K'``.

    ``K_prime`` is ``2|c| / (r^2 inf rho)``.  ``K_prime_rho2`` squares the
    inf of rho, and ``K_prime_sharp = 4|c| / (r^2 inf rho^2)`` is the bound
    implied by ``|f_zbar| <= |f_z|`` and the Hopf law.  ``K_prime_conservative``
    is ``K_prime`` with inf rho shrunk by 5%.
    """
    K: float
    K_prime: float
    worst_slack: float
    inf_rho: float
    K_prime_conservative: float
    K_prime_rho2: float
    K_prime_sharp: float
    worst_slack_conservative: float
    worst_slack_rho2: float
    worst_slack_sharp: float
    worst_node: tuple[int, int]
    max_distortion: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_node"] = list(self.worst_node)
        return {k: (_finite(v) if isinstance(v, float) else v) for k, v in d.items()}


def sampled_inf_rho(m: Metric, dmap: DiscreteMap, n: int = 256) -> float:
    """Inf of rho over the map values and a dense polar grid on the image annulus."""
    vals = [float(np.min(m.rho(dmap.values)))]
    Y = dmap.image_annulus()
    s = np.linspace(Y.inner_radius, Y.outer_radius, n)
    t = np.linspace(0.0, 2 * np.pi, 2 * n, endpoint=False)
    vals.append(float(np.min(m.rho(s[:, None] * np.exp(1j * t)[None, :]))))
    return min(vals)


def qc_report(dmap: DiscreteMap, m: Metric, c: complex | float, X_inner: float, K: float = 1.0) -> QCReport:
    if not X_inner > 0:
        raise ValueError("X_inner must be positive")
    fz, fzb = wirtinger(dmap)
    J = np.abs(fz) ** 2 - np.abs(fzb) ** 2
    hs = 2.0 * (np.abs(fz) ** 2 + np.abs(fzb) ** 2)     # |Df|^2, Hilbert-Schmidt
    base = 2.0 * K * J - hs
    inf_rho = sampled_inf_rho(m, dmap)
    cabs = abs(complex(c))
    r2 = X_inner ** 2
    kp = 2.0 * cabs / (r2 * inf_rho)
    kp_cons = 2.0 * cabs / (r2 * inf_rho * (1.0 - RHO_SHRINK))
    kp_rho2 = 2.0 * cabs / (r2 * inf_rho ** 2)
    kp_sharp = 4.0 * cabs / (r2 * inf_rho ** 2)
    worst = np.unravel_index(int(np.argmin(base)), base.shape)
    bmin = float(base[worst])
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.abs(fzb) / np.abs(fz)
    return QCReport(K=K, K_prime=kp, worst_slack=bmin + kp, inf_rho=inf_rho,
                    K_prime_conservative=kp_cons, K_prime_rho2=kp_rho2, K_prime_sharp=kp_sharp,
                    worst_slack_conservative=bmin + kp_cons, worst_slack_rho2=bmin + kp_rho2,
                    worst_slack_sharp=bmin + kp_sharp, worst_node=(int(worst[0]), int(worst[1])),
                    max_distortion=float(np.nanmax(mu)))


# --------------------------------------------------------------------------
# Hoelder exponents
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class HolderReport:
    exponent: float
    constant: float
    window: tuple[float, float]
    beta_lower_bound: float
    boundary: str = "inner"
    inverse: bool = False
    n_pairs: int = 0
    n_bins: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def beta_lower_bound(K: float = 1.0, B: float | None = None) -> float:
    """``1 / (K (1 + 2B)^2)``; ``B`` defaults to the chord-arc constant of a circle."""
    B = chord_arc_constant_circle() if B is None else B
    return 1.0 / (K * (1.0 + 2.0 * B) ** 2)


def _pair_sample(dmap: DiscreteMap, boundary: str, band: float, n_pairs: int, rng):
    """Node pairs ``(i0, j0), (i1, j1)`` anchored on the boundary row.

    Directions are a mix of radial, tangential and random; target distances
    are log-uniform in ``[h, band]``.  The far end is snapped to the nearest
    node inside the band.
    """
    mesh = dmap.mesh
    radii = mesh.radii
    n_r, n_t = mesh.shape
    row = 0 if boundary == "inner" else n_r - 1
    s0 = radii[row]
    inward = 1.0 if row == 0 else -1.0
    h = s0 * max(mesh.h_t, math.expm1(mesh.h_u))
    if not band > h:
        raise ValueError(f"band {band:g} must exceed the mesh scale {h:g}")
    if band >= radii[-1] - radii[0]:
        raise ValueError("band reaches the opposite boundary")
    j0 = rng.integers(0, n_t, n_pairs)
    d = np.exp(rng.uniform(math.log(h), math.log(band), n_pairs))
    kind = rng.integers(0, 3, n_pairs)
    phi = rng.uniform(0.0, np.pi, n_pairs)           # half plane pointing into the annulus
    dr = np.where(kind == 0, d, np.where(kind == 1, 0.0, d * np.sin(phi))) * inward
    sign = np.where(rng.random(n_pairs) < 0.5, 1.0, -1.0)
    dt_len = np.where(kind == 0, 0.0, np.where(kind == 1, sign * d, d * np.cos(phi)))
    s1 = np.clip(s0 + dr, radii[0], radii[-1])
    i1 = np.clip(np.searchsorted(radii, s1), 1, n_r - 1)
    i1 = np.where(np.abs(radii[i1 - 1] - s1) < np.abs(radii[i1] - s1), i1 - 1, i1)
    j1 = (j0 + np.rint(dt_len / (s0 * mesh.h_t)).astype(int)) % n_t
    keep = (i1 != row) | (j1 != j0)
    keep &= np.abs(radii[i1] - s0) <= band
    return (np.full(int(keep.sum()), row), j0[keep]), (i1[keep], j1[keep])


def holder_exponent(dmap: DiscreteMap, boundary: str, band: float, n_pairs: int = 10_000, seed: int = 0,
                    inverse: bool = False, K: float = 1.0, n_bins: int = 16, quantile: float = 0.9) -> HolderReport:
    """Fit ``|f(z1) - f(z2)| ~ C |z1 - z2|^alpha`` for pairs near one boundary.

    Pairs are grouped into logarithmic distance bins; the ``quantile`` of
    ``log(|df| / |dz|)`` in each bin, added to the bin's median ``log |dz|``,
    estimates the modulus of continuity at that scale, and the exponent is the Theil-Sen slope through the bins.
    With ``inverse=True`` the same pairs are used with the roles swapped,
    which estimates the exponent of the inverse map near the image boundary.
    """
    if boundary not in ("inner", "outer"):
        raise ValueError("boundary must be 'inner' or 'outer'")
    rng = np.random.default_rng(seed)
    (i0, j0), (i1, j1) = _pair_sample(dmap, boundary, band, n_pairs, rng)
    z = dmap.mesh.nodes
    f = dmap.values
    dz = np.abs(z[i0, j0] - z[i1, j1])
    df = np.abs(f[i0, j0] - f[i1, j1])
    if inverse:
        dz, df = df, dz
    ok = (dz > 0) & (df > 0)
    dz, df = dz[ok], df[ok]
    if dz.size < 2 or np.ptp(np.log(dz)) < 1e-12:
        raise ValueError("degenerate pair sample: all sampled distances coincide")
    lx, ly = np.log(dz), np.log(df)
    edges = np.linspace(lx.min(), lx.max(), n_bins + 1)
    idx = np.clip(np.searchsorted(edges, lx, side="right") - 1, 0, n_bins - 1)
    bx, by = [], []
    for k in range(n_bins):
        sel = idx == k
        if np.count_nonzero(sel) >= 5:
            x = float(np.median(lx[sel]))
            bx.append(x)
            by.append(x + float(np.quantile(ly[sel] - lx[sel], quantile)))
    if len(bx) < 3:
        raise ValueError("degenerate pair sample: fewer than three populated distance bins")
    slope, intercept, _, _ = stats.theilslopes(by, bx)
    return HolderReport(exponent=float(slope), constant=float(math.exp(intercept)),
                        window=(float(dz.min()), float(dz.max())), beta_lower_bound=beta_lower_bound(K),
                        boundary=boundary, inverse=inverse, n_pairs=int(dz.size), n_bins=len(bx))


# --------------------------------------------------------------------------
# signed square root and Hoelder halving
# --------------------------------------------------------------------------

def sqrt_signed(x):
    """``sqrt|x|`` for ``x >= 0`` and ``i sqrt|x|`` for ``x < 0``."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("sqrt_signed needs finite input")
    r = np.sqrt(np.abs(x))
    out = np.where(x >= 0, r + 0j, 1j * r)
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class HalvingReport:
    alpha: float
    C: float
    constant: float
    bound: float
    passed: bool
    n_pairs: int
    violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def holder_halving_check(points, values, alpha: float, C: float | None = None,
                         max_violations: int = 20) -> HalvingReport:
    """Check ``|sqrt R(z) - sqrt R(z')| <= 2 sqrt(C) |z - z'|^(alpha/2)`` on all sample pairs.

    ``points`` are arc positions (real or complex), ``values`` the real samples
    of ``R``.  When ``C`` is omitted it is the sampled Hoelder constant of ``R``.
    ``constant`` is the largest observed ratio
    ``|sqrt R(z) - sqrt R(z')| / (sqrt(C) |z - z'|^(alpha/2))``; the check passes
    when it does not exceed 2.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    z = np.asarray(points)
    R = np.asarray(values, dtype=float)
    if z.shape != R.shape or z.ndim != 1:
        raise ValueError("points and values must be 1-d arrays of equal length")
    iu, ju = np.triu_indices(z.size, 1)
    dz = np.abs(z[iu] - z[ju])
    ok = dz > 0
    iu, ju, dz = iu[ok], ju[ok], dz[ok]
    if C is None:
        C = float(np.max(np.abs(R[iu] - R[ju]) / dz ** alpha)) if dz.size else 0.0
    sq = sqrt_signed(R)
    lhs = np.abs(sq[iu] - sq[ju])
    scale = math.sqrt(C) * dz ** (alpha / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lhs > 0, lhs / scale, 0.0)
    constant = float(np.max(ratio)) if ratio.size else 0.0
    bad = np.nonzero(lhs > 2.0 * scale * (1 + 1e-12) + 1e-300)[0]
    violations = [(int(iu[k]), int(ju[k]), float(ratio[k])) for k in bad[:max_violations]]
    return HalvingReport(alpha=float(alpha), C=float(C), constant=constant, bound=2.0,
                         passed=bad.size == 0, n_pairs=int(dz.size), violations=violations)

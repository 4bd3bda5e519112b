"""Conformal target metrics: evaluation, curvature, area and admissibility."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .geometry import Annulus, Disk


class MetricDomainError(ValueError):
    """A metric was evaluated outside the set where it is defined."""


class AreaOverflowError(ArithmeticError):
    """The metric area integral is not finite or does not settle under refinement."""


# --------------------------------------------------------------------------
# radial profiles  rho(w) = 1 / varrho(|w|)
# --------------------------------------------------------------------------

def _fd1(f, s, h):
    return (f(s + h) - f(s - h)) / (2 * h)


def _fd2(f, s, h):
    return (f(s + h) - 2 * f(s) + f(s - h)) / (h * h)


@dataclass(frozen=True)
class RadialProfile:
    """A positive radial profile ``varrho(s)`` with first and second derivatives."""

    value: Callable = field(repr=False)
    d1: Callable = field(repr=False)
    d2: Callable = field(repr=False)
    label: str = "profile"
    table: np.ndarray | None = field(default=None, repr=False, compare=False)
    is_constant: bool = False

    def __call__(self, s):
        return self.value(np.asarray(s, dtype=float))

    def rho(self, s):
        return 1.0 / self(s)

    @classmethod
    def constant(cls, c: float = 1.0) -> "RadialProfile":
        if not c > 0:
            raise ValueError("constant profile must be positive")
        return cls(lambda s: np.full(np.shape(s), float(c)),
                   lambda s: np.zeros(np.shape(s)),
                   lambda s: np.zeros(np.shape(s)),
                   label=f"constant({c:g})", is_constant=True)

    @classmethod
    def from_function(cls, f, df=None, d2f=None, label: str = "function") -> "RadialProfile":
        """Wrap callables; missing derivatives are taken by central differences."""
        if df is None:
            df = lambda s: _fd1(f, s, 1e-5 * np.maximum(np.abs(s), 1e-3))  # noqa: E731
        if d2f is None:
            d2f = lambda s: _fd2(f, s, 1e-4 * np.maximum(np.abs(s), 1e-2))  # noqa: E731
        return cls(f, df, d2f, label=label)

    @classmethod
    def from_table(cls, table) -> "RadialProfile":
        """Monotone cubic interpolation of ``log varrho`` against ``log s``.

        Outside the sampled range the profile continues linearly in log-log
        coordinates, which keeps it positive.
        """
        tab = np.asarray(table, dtype=float)
        if tab.ndim != 2 or tab.shape[1] != 2 or tab.shape[0] < 2:
            raise ValueError("profile table must be an (n, 2) array with n >= 2")
        s, v = tab[:, 0], tab[:, 1]
        if not np.all(np.isfinite(tab)):
            raise ValueError("profile table contains non-finite entries")
        if np.any(s <= 0) or np.any(np.diff(s) <= 0):
            raise ValueError("profile table radii must be positive and strictly increasing")
        if np.any(v <= 0):
            raise ValueError("profile table values must be strictly positive")
        lu, lv = np.log(s), np.log(v)
        P = PchipInterpolator(lu, lv, extrapolate=False)
        dP, d2P = P.derivative(), P.derivative(2)
        lo, hi = lu[0], lu[-1]
        slope_lo, slope_hi = float(dP(lo)), float(dP(hi))

        def logs(sv):
            u = np.log(np.asarray(sv, dtype=float))
            uc = np.clip(u, lo, hi)
            L, L1, L2 = P(uc), dP(uc), d2P(uc)
            below, above = u < lo, u > hi
            L = np.where(below, lv[0] + slope_lo * (u - lo), L)
            L = np.where(above, lv[-1] + slope_hi * (u - hi), L)
            L1 = np.where(below, slope_lo, np.where(above, slope_hi, L1))
            L2 = np.where(below | above, 0.0, L2)
            return L, L1, L2

        def value(sv):
            return np.exp(logs(sv)[0])

        def d1(sv):
            sv = np.asarray(sv, dtype=float)
            L, L1, _ = logs(sv)
            return np.exp(L) * L1 / sv

        def d2(sv):
            sv = np.asarray(sv, dtype=float)
            L, L1, L2 = logs(sv)
            return np.exp(L) * (L1 * L1 + L2 - L1) / (sv * sv)

        tab = tab.copy()
        tab.setflags(write=False)
        return cls(value, d1, d2, label="table", table=tab)

    def t_rho_monotone(self, a: float, b: float, n: int = 4097) -> bool:
        """Whether ``t / varrho(t)`` is monotone on ``[a, b]`` (dense sampling)."""
        t = np.linspace(a, b, n)
        g = np.diff(t / self(t))
        scale = np.max(np.abs(g)) if g.size else 0.0
        tol = 1e-12 * max(scale, 1e-300)
        return bool(np.all(g >= -tol) or np.all(g <= tol))


def _spherical_profile() -> RadialProfile:
    return RadialProfile(lambda s: (1 + s * s) ** 2,
                         lambda s: 4 * s * (1 + s * s),
                         lambda s: 4 + 12 * s * s,
                         label="(1+s^2)^2")


def _hyperbolic_profile() -> RadialProfile:
    return RadialProfile(lambda s: (1 - s * s) ** 2,
                         lambda s: -4 * s * (1 - s * s),
                         lambda s: -4 + 12 * s * s,
                         label="(1-s^2)^2")


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

KINDS = ("euclidean", "paper-spherical", "hyperbolic-restricted", "radial-table", "analytic")


@dataclass(frozen=True)
class Metric:
    """Evaluator bundle for a conformal density ``rho`` on the target.

    The gradient of ``log rho`` is returned as the complex number
    ``d/dx log rho + i d/dy log rho``.
    """

    kind: str
    params: dict = field(default_factory=dict)
    _rho: Callable = field(default=None, repr=False, compare=False)
    _grad: Callable = field(default=None, repr=False, compare=False)
    _lap: Callable = field(default=None, repr=False, compare=False)
    profile: RadialProfile | None = field(default=None, repr=False, compare=False)
    domain_radius: float = math.inf          # evaluations need |w| < domain_radius
    excludes_origin: bool = False
    config: dict = field(default_factory=dict, repr=False, compare=False)

    # -- evaluators -------------------------------------------------------
    def _check(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=complex)
        if not np.all(np.isfinite(w)):
            raise MetricDomainError(f"{self.kind} metric evaluated at a non-finite point")
        s = np.abs(w)
        if np.any(s >= self.domain_radius):
            bad = w.ravel()[np.argmax(s.ravel())]
            raise MetricDomainError(
                f"{self.kind} metric requires |w| < {self.domain_radius:g}; got |w| = {abs(bad):.6g}")
        if self.excludes_origin and np.any(s == 0):
            raise MetricDomainError(f"{self.kind} metric is undefined at w = 0")
        return w

    def rho(self, w):
        w = self._check(w)
        return self._rho(w)

    def rho2(self, w):
        r = self.rho(w)
        return r * r

    def grad_log_rho(self, w):
        w = self._check(w)
        return self._grad(w)

    def laplacian_log_rho(self, w):
        w = self._check(w)
        return self._lap(w)

    def radial_profile(self) -> RadialProfile:
        if self.profile is None:
            raise ValueError(f"metric of kind {self.kind!r} is not radial")
        return self.profile

    @property
    def is_euclidean(self) -> bool:
        return self.kind == "euclidean"

    def to_config(self) -> dict:
        return dict(self.config) if self.config else {"kind": self.kind, "params": dict(self.params)}

    # -- constructors -----------------------------------------------------
    @classmethod
    def euclidean(cls) -> "Metric":
        return cls("euclidean", {},
                   lambda w: np.ones(np.shape(w)),
                   lambda w: np.zeros(np.shape(w), dtype=complex),
                   lambda w: np.zeros(np.shape(w)),
                   profile=RadialProfile.constant(1.0),
                   config={"kind": "euclidean", "params": {}})

    @classmethod
    def paper_spherical(cls) -> "Metric":
        """``rho(w) = 1 / (1 + |w|^2)^2``."""
        def rho(w):
            return 1.0 / (1.0 + np.abs(w) ** 2) ** 2

        def grad(w):
            return -4.0 * w / (1.0 + np.abs(w) ** 2)

        def lap(w):
            return -8.0 / (1.0 + np.abs(w) ** 2) ** 2

        return cls("paper-spherical", {}, rho, grad, lap, profile=_spherical_profile(),
                   config={"kind": "paper-spherical", "params": {}})

    @classmethod
    def hyperbolic_restricted(cls) -> "Metric":
        """``h(w) = 1 / (1 - |w|^2)^2`` on the open unit disk."""
        def rho(w):
            return 1.0 / (1.0 - np.abs(w) ** 2) ** 2

        def grad(w):
            return 4.0 * w / (1.0 - np.abs(w) ** 2)

        def lap(w):
            return 8.0 / (1.0 - np.abs(w) ** 2) ** 2

        return cls("hyperbolic-restricted", {}, rho, grad, lap, profile=_hyperbolic_profile(),
                   domain_radius=1.0, config={"kind": "hyperbolic-restricted", "params": {}})

    @classmethod
    def radial(cls, profile: RadialProfile, kind: str | None = None, config: dict | None = None) -> "Metric":
        """Metric ``rho(w) = 1 / varrho(|w|)`` built from a radial profile."""
        def rho(w):
            return 1.0 / profile(np.abs(w))

        def grad(w):
            s = np.abs(w)
            safe = np.where(s > 0, s, 1.0)
            g = -(profile.d1(safe) / profile(safe)) / safe
            return np.where(s > 0, g * w, 0.0)

        def lap(w):
            # Laplacian of -log varrho(s) = -(L'' + L'/s) with L = log varrho
            s = np.abs(w)
            safe = np.where(s > 0, s, 1e-300)
            v, v1, v2 = profile(safe), profile.d1(safe), profile.d2(safe)
            L1 = v1 / v
            L2 = v2 / v - L1 * L1
            out = -(L2 + L1 / safe)
            if np.all(s > 0):
                return out
            # at the origin L'/s -> L''(0) and L''(0) = varrho''(0)/varrho(0)
            at0 = -2.0 * profile.d2(np.zeros(1))[0] / profile(np.zeros(1))[0]
            return np.where(s > 0, out, at0)

        if kind is None:
            kind = "radial-table" if profile.table is not None else "analytic"
        if config is None:
            config = ({"kind": kind, "params": {}, "table": profile.table.tolist()}
                      if profile.table is not None else {"kind": kind, "params": {"profile": profile.label}})
        return cls(kind, dict(config.get("params", {})), rho, grad, lap, profile=profile,
                   excludes_origin=profile.table is not None, config=config)

    @classmethod
    def radial_table(cls, table, values: str = "profile") -> "Metric":
        """Radial metric from a table of ``(s, varrho(s))`` rows.

        With ``values="rho"`` the second column holds ``rho`` itself and is
        inverted before interpolation.
        """
        tab = np.array(table, dtype=float)
        if values == "rho":
            tab[:, 1] = 1.0 / tab[:, 1]
        elif values != "profile":
            raise ValueError(f"values must be 'profile' or 'rho', got {values!r}")
        prof = RadialProfile.from_table(tab)
        config = {"kind": "radial-table", "params": {"values": values}, "table": np.asarray(table, float).tolist()}
        return cls.radial(prof, kind="radial-table", config=config)

    @classmethod
    def analytic(cls, rho_expr: str | None = None, profile_expr: str | None = None) -> "Metric":
        """Metric from a sympy expression.

        ``rho_expr`` is ``rho`` in the variables ``x, y``; ``profile_expr`` is a
        radial profile ``varrho`` in the variable ``s``.  Exactly one is given.
        """
        import sympy as sp

        if (rho_expr is None) == (profile_expr is None):
            raise ValueError("give exactly one of rho_expr and profile_expr")
        if profile_expr is not None:
            s = sp.Symbol("s", positive=True)
            e = sp.sympify(profile_expr, locals={"s": s})
            if e.free_symbols - {s}:
                raise ValueError(f"profile expression may only use s, got {e.free_symbols}")
            fs = [sp.lambdify(s, d, "numpy") for d in (e, sp.diff(e, s), sp.diff(e, s, 2))]
            vec = [(lambda f: (lambda t: np.broadcast_to(f(t), np.shape(t)).astype(float)))(f) for f in fs]
            prof = RadialProfile(vec[0], vec[1], vec[2], label=str(e))
            return cls.radial(prof, kind="analytic",
                              config={"kind": "analytic", "params": {"profile": str(profile_expr)}})

        x, y = sp.symbols("x y", real=True)
        e = sp.sympify(rho_expr, locals={"x": x, "y": y})
        if e.free_symbols - {x, y}:
            raise ValueError(f"rho expression may only use x and y, got {e.free_symbols}")
        le = sp.log(e)
        gx, gy = sp.diff(le, x), sp.diff(le, y)
        lap = sp.simplify(sp.diff(gx, x) + sp.diff(gy, y))
        f_rho, f_gx, f_gy, f_lap = (sp.lambdify((x, y), q, "numpy") for q in (e, gx, gy, lap))

        def wrap(f):
            return lambda w: np.broadcast_to(f(w.real, w.imag), np.shape(w)).astype(float)

        r_, gx_, gy_, l_ = wrap(f_rho), wrap(f_gx), wrap(f_gy), wrap(f_lap)

        def rho(w):
            v = r_(w)
            if np.any(~(v > 0)):
                raise MetricDomainError("analytic metric is not positive at an evaluation point")
            return v

        return cls("analytic", {"rho": str(rho_expr)}, rho,
                   lambda w: gx_(w) + 1j * gy_(w), l_,
                   config={"kind": "analytic", "params": {"rho": str(rho_expr)}})

    @classmethod
    def from_config(cls, cfg: dict | str) -> "Metric":
        if isinstance(cfg, str):
            cfg = {"kind": cfg}
        kind = cfg.get("kind")
        params = dict(cfg.get("params") or {})
        if kind == "euclidean":
            return cls.euclidean()
        if kind == "paper-spherical":
            return cls.paper_spherical()
        if kind == "hyperbolic-restricted":
            return cls.hyperbolic_restricted()
        if kind == "radial-table":
            if "table" not in cfg:
                raise ValueError("radial-table metric requires a 'table'")
            return cls.radial_table(cfg["table"], values=params.get("values", "profile"))
        if kind == "analytic":
            return cls.analytic(rho_expr=params.get("rho"), profile_expr=params.get("profile"))
        raise ValueError(f"unknown metric kind {kind!r}; expected one of {', '.join(KINDS)}")


def rho(m: Metric, w):
    return m.rho(w)


def gauss_curvature(m: Metric, w):
    """Curvature as ``-Delta log rho / rho`` (division by rho, first power)."""
    return -m.laplacian_log_rho(w) / m.rho(w)


def gauss_curvature_standard(m: Metric, w):
    """Standard Gauss curvature ``-Delta log rho / rho^2`` of ``rho^2 |dw|^2``."""
    return -m.laplacian_log_rho(w) / m.rho(w) ** 2


# --------------------------------------------------------------------------
# area and admissibility
# --------------------------------------------------------------------------

def _radial_nodes(a: float, b: float, n: int):
    """Composite 8-point Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(8)
    panels = max(4, n // 4)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _area_once(m: Metric, a: float, b: float, n: int) -> float:
    s, ws = _radial_nodes(a, b, n)
    t = 2 * np.pi * np.arange(n) / n
    w = s[:, None] * np.exp(1j * t)[None, :]
    r2 = m.rho(w) ** 2
    val = float(np.sum((r2 * s[:, None]).sum(axis=1) * ws) * (2 * np.pi / n))
    return val


def area(m: Metric, domain: Annulus | Disk, n: int = 64) -> float:
    """Metric area ``int rho^2`` over an annulus or a centred disk.

    Raises :class:`AreaOverflowError` when the integral is not finite or keeps
    growing under refinement (a non-integrable metric).
    """
    if n < 16:
        raise ValueError("area quadrature resolution must be >= 16")
    a, b = float(domain.inner_radius), float(domain.outer_radius)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        v1 = _area_once(m, a, b, n)
        v2 = _area_once(m, a, b, 2 * n)
    if not (math.isfinite(v1) and math.isfinite(v2)):
        raise AreaOverflowError(f"{m.kind} metric area is not finite over the domain")
    if abs(v2 - v1) > 1e-2 * abs(v2):
        raise AreaOverflowError(
            f"{m.kind} metric area does not converge under refinement ({v1:.6g} -> {v2:.6g})")
    return v2


@dataclass(frozen=True)
class AdmissibilityReport:
    curvature_bound: float
    area: float
    grad_log_sup: float
    rho_min: float
    rho_max: float
    admissible: bool
    grad_log_bound: float = math.nan
    curvature_bound_standard: float = math.nan
    area_overflow: bool = False
    reasons: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "curvature_bound", "curvature_bound_standard", "area", "area_overflow",
            "grad_log_sup", "grad_log_bound", "rho_min", "rho_max", "admissible")}
        out["reasons"] = list(self.reasons)
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in out.items()}


GRAD_LOG_MARGIN = 1.10


def _sample_domain(domain, n: int) -> np.ndarray:
    s = np.linspace(domain.inner_radius, domain.outer_radius, n)
    t = 2 * np.pi * np.arange(n) / n
    return s[:, None] * np.exp(1j * t)[None, :]


def admissibility_report(m: Metric, domain: Annulus | Disk, n: int = 64) -> AdmissibilityReport:
    """Check positivity/boundedness, bounded curvature, finite area and bounded ``grad log rho``.

    All sup/inf values are dense-sampling estimates on a polar grid that
    includes both boundary circles.  ``grad_log_sup`` is the sampled maximum;
    ``grad_log_bound`` adds a 10% margin.
    """
    reasons: list[str] = []
    inf = math.inf
    vals = {}
    try:
        for res in (n, 2 * n):
            w = _sample_domain(domain, res)
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                r = m.rho(w)
                g = np.abs(m.grad_log_rho(w))
                lap = m.laplacian_log_rho(w)
            vals[res] = (r, g, np.abs(lap / r), np.abs(lap / r ** 2))
    except MetricDomainError as exc:
        reasons.append(f"domain: {exc}")

    if vals:
        r, g, k, k_std = vals[2 * n]
        finite = all(np.all(np.isfinite(v)) for v in (r, g, k, k_std))
        rho_min = float(np.min(r)) if finite else math.nan
        rho_max = float(np.max(r)) if finite else inf
        grad_sup = float(np.max(g)) if finite else inf
        curv = float(np.max(k)) if finite else inf
        curv_std = float(np.max(k_std)) if finite else inf
        if not finite:
            reasons.append("non-finite metric quantities at sampled points")
        else:
            g_coarse = float(np.max(vals[n][1]))
            if grad_sup > GRAD_LOG_MARGIN * g_coarse + 1e-12:
                reasons.append("grad log rho grows under refinement (unbounded)")
            if not rho_min > 0:
                reasons.append("rho not bounded below by a positive constant")
    else:
        rho_min, rho_max, grad_sup, curv, curv_std = math.nan, inf, inf, inf, inf

    overflow = False
    try:
        ar = area(m, domain, max(16, n))
    except AreaOverflowError as exc:
        overflow, ar = True, inf
        reasons.append(f"area: {exc}")
    except MetricDomainError as exc:
        overflow, ar = True, inf
        if not any(x.startswith("domain") for x in reasons):
            reasons.append(f"domain: {exc}")

    return AdmissibilityReport(
        curvature_bound=curv, area=ar, grad_log_sup=grad_sup, rho_min=rho_min, rho_max=rho_max,
        admissible=not reasons, grad_log_bound=GRAD_LOG_MARGIN * grad_sup,
        curvature_bound_standard=curv_std, area_overflow=overflow, reasons=tuple(reasons))


def metric_from_spec(spec: str | dict | Metric) -> Metric:
    """Accept a metric object, a kind name, or a config dict."""
    if isinstance(spec, Metric):
        return spec
    return Metric.from_config(spec)


__all__: Sequence[str] = [
    "Metric", "RadialProfile", "MetricDomainError", "AreaOverflowError", "AdmissibilityReport",
    "rho", "gauss_curvature", "gauss_curvature_standard", "area", "admissibility_report",
    "metric_from_spec", "KINDS",
]

"""Energy minimization over discrete annulus maps with sliding boundary values.

Unknowns are the interior node values (two reals each) and, when the
boundary slides, one tangential unknown per boundary node; boundary moduli
stay pinned to the target circles.  Descent directions are gradients taken
in a fixed discrete Dirichlet (H^1) inner product assembled at the initial
map ("Sobolev gradient"), followed by Armijo backtracking.  The plain
Euclidean gradient with Barzilai-Borwein trial steps is available as
``preconditioner="none"``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .energy import DiscreteMap, _edge_weights, discrete_energy, energy_gradient, jacobian, tension_field
from .geometry import Annulus, PolarMesh, make_polar_mesh
from .metrics import Metric

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 3000
    gradient_tolerance: float = 1e-7
    initial_step: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    min_step: float = 1e-12
    boundary_sliding: bool = True
    seed: int = 0
    preconditioner: str = "sobolev"
    workers: int | None = None

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be positive")
        if not self.initial_step > 0 or not self.min_step > 0:
            raise ValueError("step sizes must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must lie in (0, 1)")
        if not 0 < self.armijo < 1:
            raise ValueError("sufficient-decrease constant must lie in (0, 1)")
        if self.preconditioner not in ("sobolev", "none"):
            raise ValueError("preconditioner must be 'sobolev' or 'none'")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "max_iterations", "gradient_tolerance", "initial_step", "shrink", "armijo",
            "min_step", "boundary_sliding", "seed", "preconditioner")}


@dataclass
class SolveResult:
    map: DiscreteMap
    energy_history: list[float]
    converged: bool
    tension_residual: float
    iterations: int
    gradient_norm: float = math.nan
    status: str = ""
    jacobian_flips: list[int] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {"converged": self.converged, "status": self.status, "iterations": self.iterations,
                "gradient_norm": self.gradient_norm, "tension_residual": self.tension_residual,
                "final_energy": self.energy_history[-1], "jacobian_flips": list(self.jacobian_flips),
                "flags": list(self.flags)}


# --------------------------------------------------------------------------
# initial maps
# --------------------------------------------------------------------------

def init_map(X: Annulus, Y: Annulus, kind: str = "log-linear-radial",
             mesh: PolarMesh | None = None) -> DiscreteMap:
    """Starting map on a mesh of ``X``.

    ``log-linear-radial`` sends ``s e^{it}`` to ``R_out s^beta e^{it}`` with
    ``beta`` matching the inner circles; ``identity`` requires ``X == Y``.
    """
    if X.outer_radius != 1.0:
        raise ValueError("source annulus must be normalized to outer radius 1")
    if mesh is None:
        mesh = make_polar_mesh(X, 64, 128)
    if mesh.annulus != X:
        raise ValueError("mesh does not discretize the source annulus")
    z = mesh.nodes
    if kind == "identity":
        if X != Y:
            raise ValueError("identity initial map requires X == Y")
        return DiscreteMap(mesh, z.copy(), Y)
    if kind != "log-linear-radial":
        raise ValueError(f"unknown initial map kind {kind!r}")
    beta = math.log(Y.inner_radius / Y.outer_radius) / math.log(X.inner_radius)
    mod = Y.outer_radius * mesh.radii ** beta
    mod[0], mod[-1] = Y.inner_radius, Y.outer_radius
    return DiscreteMap(mesh, mod[:, None] * np.exp(1j * mesh.theta)[None, :], Y)


def perturb_map(dmap: DiscreteMap, amplitude: float = 0.02, seed: int = 0, modes: int = 3) -> DiscreteMap:
    """Smooth seeded perturbation keeping boundary nodes on their circles.

    ``amplitude`` bounds the slope of the perturbation in log-polar
    coordinates, so small values keep the map orientation preserving.
    """
    rng = np.random.default_rng(seed)
    mesh = dmap.mesh
    u = mesh.u
    lam = (u - u[0]) / (u[-1] - u[0])
    t = mesh.theta
    ls = np.arange(1, modes + 1)

    def ring_shift():
        a, b = rng.normal(size=(2, modes)) / ls
        psi = a @ np.cos(np.outer(ls, t)) + b @ np.sin(np.outer(ls, t))
        dpsi = (-a * ls) @ np.sin(np.outer(ls, t)) + (b * ls) @ np.cos(np.outer(ls, t))
        return amplitude * psi / np.max(np.abs(dpsi))

    psi_in, psi_out = ring_shift(), ring_shift()
    phi = np.zeros(mesh.shape, dtype=complex)
    for k in range(1, modes + 1):
        for l in range(-modes, modes + 1):
            c = (rng.normal() + 1j * rng.normal()) / (k + abs(l))
            phi += c * np.sin(k * np.pi * lam)[:, None] * np.exp(1j * l * t)[None, :]
    slope = max(np.max(np.abs(np.gradient(phi, u, axis=0))), np.max(np.abs(np.gradient(phi, t, axis=1))))
    phi *= amplitude / slope
    f = dmap.values
    shift = (1 - lam)[:, None] * psi_in[None, :] + lam[:, None] * psi_out[None, :]
    new = np.abs(f) * np.exp(phi.real) * np.exp(1j * (np.angle(f) + shift + phi.imag))
    return dmap.with_values(new)


# --------------------------------------------------------------------------
# parametrization of the feasible set
# --------------------------------------------------------------------------

class _Variables:
    """Interior values plus tangential boundary coordinates."""

    def __init__(self, f0: np.ndarray, radii: tuple[float, float], sliding: bool):
        self.shape = f0.shape
        n_r, n_t = f0.shape
        self.n_t = n_t
        self.n_int = (n_r - 2) * n_t
        self.sliding = sliding
        self.radii = radii
        self.size = 2 * self.n_int + (2 * n_t if sliding else 0)

    def gradient(self, G: np.ndarray, f: np.ndarray) -> np.ndarray:
        gi = G[1:-1].ravel()
        parts = [gi.real, gi.imag]
        if self.sliding:
            for row in (0, -1):
                T = 1j * f[row] / np.abs(f[row])
                parts.append((np.conj(G[row]) * T).real)
        return np.concatenate(parts)

    def step(self, f: np.ndarray, d: np.ndarray, alpha: float) -> np.ndarray:
        out = f.copy()
        n = self.n_int
        out[1:-1] += (alpha * (d[:n] + 1j * d[n:2 * n])).reshape(self.shape[0] - 2, self.shape[1])
        if self.sliding:
            for k, row in enumerate((0, -1)):
                tau = d[2 * n + k * self.n_t: 2 * n + (k + 1) * self.n_t]
                R = self.radii[k]
                ang = np.angle(f[row]) + alpha * tau / R
                out[row] = R * np.exp(1j * ang)
        return out


def _stiffness(dmap: DiscreteMap, m: Metric, var: _Variables) -> sp.csc_matrix:
    """Hessian of the quadratic energy with frozen weights, in the solver variables."""
    mesh = dmap.mesh
    n_r, n_t = mesh.shape
    f = dmap.values
    r2 = m.rho2(f)
    cu, ct_row = _edge_weights(mesh)
    idx = np.arange(n_r * n_t).reshape(n_r, n_t)

    a_u, b_u = idx[:-1].ravel(), idx[1:].ravel()
    w_u = cu * 0.5 * (r2[:-1] + r2[1:]).ravel()
    a_t, b_t = idx.ravel(), np.roll(idx, -1, axis=1).ravel()
    w_t = (ct_row[:, None] * 0.5 * (r2 + np.roll(r2, -1, axis=1))).ravel()
    a = np.concatenate([a_u, a_t])
    b = np.concatenate([b_u, b_t])
    w = np.concatenate([w_u, w_t])
    n_e = a.size
    D = sp.csr_matrix((np.r_[np.ones(n_e), -np.ones(n_e)], (np.r_[np.arange(n_e), np.arange(n_e)], np.r_[b, a])),
                      shape=(n_e, n_r * n_t))

    # complex displacement of every node as a linear function of the variables
    rows, cols, vals = [], [], []
    n = var.n_int
    interior = idx[1:-1].ravel()
    k = np.arange(n)
    rows += [interior, interior]
    cols += [k, n + k]
    vals += [np.ones(n, complex), 1j * np.ones(n, complex)]
    if var.sliding:
        for j, row in enumerate((0, -1)):
            T = 1j * f[row] / np.abs(f[row])
            rows.append(idx[row])
            cols.append(2 * n + j * n_t + np.arange(n_t))
            vals.append(T)
    B = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_r * n_t, var.size))
    A = D @ B
    W = sp.diags(w)
    Ar, Ai = A.real, A.imag
    P = 2.0 * (Ar.T @ W @ Ar + Ai.T @ W @ Ai)
    return sp.csc_matrix(P)


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    # numpy pairwise summation: independent of BLAS threading
    return float(np.sum(a * b))


def minimize(X: Annulus, Y: Annulus, m: Metric, cfg: SolverConfig, init: DiscreteMap) -> SolveResult:
    """Minimize the discrete energy over maps ``X -> Y`` starting from ``init``.

    Returns the first iterate whose scaled gradient norm is below
    ``cfg.gradient_tolerance``, or the last iterate when the iteration budget
    is spent, the line search fails, or the energy decrease falls below
    floating-point resolution.  The scaled norm is the root mean square of the
    variable gradient divided by the cell size ``h_u h_t``.
    """
    mesh = init.mesh
    if mesh.annulus != X:
        raise ValueError("initial map is not defined on the source annulus")
    if X.outer_radius != 1.0:
        raise ValueError("source annulus must be normalized to outer radius 1")
    J0 = jacobian(init)
    if not np.min(J0) > 0:
        raise ValueError("initial map must be orientation preserving with positive Jacobian")

    f = init.values.copy()
    radii = (Y.inner_radius, Y.outer_radius)
    f[0] = radii[0] * f[0] / np.abs(f[0])
    f[-1] = radii[1] * f[-1] / np.abs(f[-1])
    var = _Variables(f, radii, cfg.boundary_sliding)
    cell = mesh.h_u * mesh.h_t
    workers = cfg.workers

    def energy(vals):
        return discrete_energy(DiscreteMap(mesh, vals), m, workers)

    P = _stiffness(DiscreteMap(mesh, f), m, var)
    if cfg.preconditioner == "sobolev":
        lu = splu(P, permc_spec="COLAMD")
        precond = lu.solve
    else:
        lam_max = float(abs(P).sum(axis=1).max())
        alpha_bb = cfg.initial_step / lam_max
        precond = None

    E = energy(f)
    history = [E]
    flips: list[int] = []
    flags: list[str] = []
    step_scale = 1.0
    minJ = float(np.min(J0))
    status = "max-iterations"
    converged = False
    g_prev = x_step = None
    gnorm = math.nan
    it = 0
    for it in range(cfg.max_iterations + 1):
        G = energy_gradient(DiscreteMap(mesh, f), m)
        g = var.gradient(G, f)
        gnorm = math.sqrt(_dot(g, g) / g.size) / cell
        if gnorm <= cfg.gradient_tolerance:
            converged, status = True, "converged"
            break
        if it == cfg.max_iterations:
            break
        if precond is not None:
            d = -precond(g)
            alpha = cfg.initial_step * step_scale
        else:
            d = -g
            if g_prev is not None:
                y = g - g_prev
                sy = _dot(x_step, y)
                if sy > 0:
                    alpha_bb = _dot(x_step, x_step) / sy
            alpha = alpha_bb * step_scale
        slope = _dot(g, d)
        alpha0 = alpha
        if not slope < 0:
            status = "not-a-descent-direction"
            break
        while True:
            f_try = var.step(f, d, alpha)
            E_try = energy(f_try)
            if E_try <= E + cfg.armijo * alpha * slope:
                break
            alpha *= cfg.shrink
            if alpha < cfg.min_step:
                break
        if not E_try <= E + cfg.armijo * alpha * slope:
            # no measurable decrease left at floating-point resolution
            if -slope * alpha0 < 1e-13 * max(abs(E), 1.0):
                status = "roundoff-floor"
            else:
                status = "line-search-failure"
                flags.append(f"line search failed at iteration {it}")
            break
        x_step = alpha * d
        g_prev = g
        f = f_try
        E = E_try
        history.append(E)
        newJ = float(np.min(jacobian(DiscreteMap(mesh, f))))
        if minJ > 0 >= newJ:
            flips.append(it)
            step_scale *= 0.5
            flags.append(f"jacobian sign flip at iteration {it}")
            log.info("Jacobian sign flip at iteration %d; halving the step", it)
        minJ = newJ
        if it % 200 == 0:
            log.debug("iter %d energy %.12g grad %.3e step %.3g", it, E, gnorm, alpha)

    result_map = DiscreteMap(mesh, f, Y)
    if not converged:
        log.info("minimize stopped without convergence: %s (grad %.3e)", status, gnorm)
    return SolveResult(result_map, history, converged, tension_residual(result_map, m),
                       it, gnorm, status, flips, flags)


def tension_residual(dmap: DiscreteMap, m: Metric) -> float:
    """Sup norm of the discrete tension field over interior nodes."""
    return float(np.max(np.abs(tension_field(dmap, m))))


# --------------------------------------------------------------------------
# Nitsche radius explorer
# --------------------------------------------------------------------------

JACOBIAN_THRESHOLD = 1e-3


class ExplorerError(RuntimeError):
    def __init__(self, msg, bracket):
        super().__init__(f"{msg}; partial bracket {bracket}")
        self.bracket = bracket


@dataclass(frozen=True)
class ExplorerProbe:
    r: float
    diffeomorphic: bool
    min_jacobian: float
    median_jacobian: float
    energy: float
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ExplorerResult:
    R: float
    estimate: float
    bracket: tuple[float, float]
    probes: tuple[ExplorerProbe, ...]
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"R": self.R, "estimate": self.estimate, "bracket": list(self.bracket),
                "probes": [p.to_dict() for p in self.probes], "flags": list(self.flags)}


def _probe(m: Metric, R: float, r: float, cfg: SolverConfig, n_radial: int, n_angular: int,
           threshold: float) -> ExplorerProbe:
    X, Y = Annulus(r, 1.0), Annulus(R, 1.0)
    mesh = make_polar_mesh(X, n_radial, n_angular)
    res = minimize(X, Y, m, cfg, init_map(X, Y, "log-linear-radial", mesh))
    if not res.converged and res.status != "roundoff-floor":
        raise ExplorerError(f"inner solve at r = {r:.6g} did not converge ({res.status})", None)
    J = jacobian(res.map)
    minJ, medJ = float(np.min(J)), float(np.median(J))
    return ExplorerProbe(r, bool(minJ > threshold * medJ), minJ, medJ, res.energy_history[-1],
                         res.iterations, res.converged)


def explore_nitsche_radius(m: Metric, R: float, cfg: SolverConfig | None = None, tol: float = 5e-3,
                           n_radial: int = 48, n_angular: int = 96, r_min: float = 0.02,
                           threshold: float = JACOBIAN_THRESHOLD) -> ExplorerResult:
    """Bisection on the source inner radius for the onset of a degenerate minimizer.

    A probe at ``r`` solves ``A(r,1) -> A(R,1)`` and counts as diffeomorphic
    when ``min J > threshold * median J``.
    """
    if not 0 < R < 1:
        raise ValueError(f"R must lie in (0,1), got {R}")
    if not 0 < r_min < R:
        raise ValueError("r_min must lie in (0, R)")
    cfg = cfg or SolverConfig()
    probes = []
    lo, hi = r_min, R
    flags = []

    def run(r):
        try:
            p = _probe(m, R, r, cfg, n_radial, n_angular, threshold)
        except ExplorerError as exc:
            raise ExplorerError(str(exc).split(";")[0], (lo, hi)) from None
        probes.append(p)
        return p

    if not run(hi).diffeomorphic:
        raise ExplorerError("upper probe r = R is not diffeomorphic", (lo, hi))
    if run(lo).diffeomorphic:
        flags.append("lower probe diffeomorphic; estimate is an upper bound")
        return ExplorerResult(R, lo, (0.0, lo), tuple(probes), tuple(flags))
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if run(mid).diffeomorphic:
            hi = mid
        else:
            lo = mid
    return ExplorerResult(R, 0.5 * (lo + hi), (lo, hi), tuple(probes), tuple(flags))


def estimate_nitsche_radius_variational(m: Metric, R: float, cfg: SolverConfig | None = None,
                                        tol: float = 5e-3, **kwargs) -> float:
    return explore_nitsche_radius(m, R, cfg, tol, **kwargs).estimate

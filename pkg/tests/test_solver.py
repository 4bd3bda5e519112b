import math

import numpy as np
import pytest

from annulus_min.diagnostics import hopf_field, hopf_fit
from annulus_min.energy import DiscreteMap, jacobian
from annulus_min.geometry import Annulus, make_polar_mesh
from annulus_min.metrics import Metric, RadialProfile
from annulus_min.radial import euclidean_closed_form, nitsche_map
from annulus_min.solver import (ExplorerError, SolverConfig, estimate_nitsche_radius_variational,
                                explore_nitsche_radius, init_map, minimize, perturb_map, tension_residual)

E = Metric.euclidean()
X, Y = Annulus(0.5, 1.0), Annulus(0.6, 1.0)


def solve(X, Y, m=E, nr=32, nt=64, perturb=0.0, seed=1, **cfg):
    mesh = make_polar_mesh(X, nr, nt)
    init = init_map(X, Y, mesh=mesh)
    if perturb:
        init = perturb_map(init, perturb, seed=seed)
    return minimize(X, Y, m, SolverConfig(**cfg), init)


def assert_monotone(res):
    assert np.all(np.diff(res.energy_history) <= 0)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(gradient_tolerance=0)
    with pytest.raises(ValueError):
        SolverConfig(shrink=1.0)
    with pytest.raises(ValueError):
        SolverConfig(preconditioner="newton")


def test_init_map_examples():
    d = init_map(X, Y, mesh=make_polar_mesh(X, 8, 16))
    np.testing.assert_allclose(np.abs(d.values[0]), 0.6, rtol=1e-15)
    np.testing.assert_allclose(np.abs(d.values[-1]), 1.0, rtol=1e-15)
    np.testing.assert_allclose(np.angle(d.values[3]), np.angle(d.mesh.nodes[3]), atol=1e-15)
    mesh = make_polar_mesh(X, 5, 8)
    d = init_map(X, X, "identity", mesh)
    np.testing.assert_array_equal(d.values, mesh.nodes)
    with pytest.raises(ValueError):
        init_map(X, Y, "identity", mesh)
    A = Annulus(0.25, 1.0)
    d = init_map(A, Annulus(0.5, 1.0), mesh=make_polar_mesh(A, 3, 4))
    np.testing.assert_allclose(np.abs(d.values[1]), 1 / math.sqrt(2), rtol=1e-14)
    assert np.min(jacobian(init_map(X, Y, mesh=make_polar_mesh(X, 16, 32)))) > 0


def test_minimize_radial_start():
    res = solve(X, Y, nr=64, nt=128)
    assert res.converged and res.status == "converged"
    assert res.gradient_norm <= 1e-7
    np.testing.assert_allclose(res.energy_history[-1], 4 * math.pi / 3, rtol=5e-3)
    exact = euclidean_closed_form(0.5, 0.6)(res.map.mesh.nodes)
    assert np.max(np.abs(res.map.values - exact)) < 5e-3
    assert_monotone(res)


def test_minimize_sliding_from_perturbation():
    res = solve(X, Y, perturb=0.05)
    assert res.converged
    assert_monotone(res)
    exact = euclidean_closed_form(0.5, 0.6)(res.map.mesh.nodes)
    rot = np.sum(res.map.values * np.conj(exact))
    rot /= abs(rot)
    assert np.max(np.abs(res.map.values - rot * exact)) < 1e-5
    np.testing.assert_allclose(np.abs(res.map.values[0]), 0.6, rtol=1e-14)
    np.testing.assert_allclose(np.abs(res.map.values[-1]), 1.0, rtol=1e-14)


def test_frozen_boundary_energy_is_higher():
    slide = solve(X, Y, perturb=0.05)
    frozen = solve(X, Y, perturb=0.05, boundary_sliding=False)
    assert slide.converged and frozen.converged
    assert frozen.energy_history[-1] > slide.energy_history[-1] + 1e-4


def test_equal_annuli_conformal():
    res = solve(X, X, perturb=0.05)
    assert res.converged
    fit = hopf_fit(hopf_field(res.map, E), res.map.mesh)
    assert abs(fit.c) < 1e-6
    vals = res.map.values
    rot = vals[-1, 0] / abs(vals[-1, 0])
    np.testing.assert_allclose(vals, rot * res.map.mesh.nodes, atol=1e-6)


def test_unpreconditioned_descent():
    # plain gradient steps reach the discrete minimum but resolve the gradient only to ~1e-7
    res = solve(X, Y, nr=16, nt=32, perturb=0.05, preconditioner="none", max_iterations=20000,
                gradient_tolerance=1e-6)
    assert res.converged
    assert_monotone(res)
    ref = solve(X, Y, nr=16, nt=32)
    np.testing.assert_allclose(res.energy_history[-1], ref.energy_history[-1], rtol=1e-10)


def test_iteration_budget_reported():
    res = solve(X, Y, perturb=0.05, max_iterations=3)
    assert not res.converged and res.status == "max-iterations" and res.iterations == 3
    assert_monotone(res)


def test_rejects_bad_init():
    mesh = make_polar_mesh(X, 8, 16)
    bad = DiscreteMap(mesh, np.conj(mesh.nodes))
    with pytest.raises(ValueError, match="positive Jacobian"):
        minimize(X, Y, E, SolverConfig(), bad)


def test_spherical_minimizer_hopf_structure():
    sph = Metric.paper_spherical()
    residuals = []
    for n in (16, 32, 64):
        res = solve(X, Y, sph, nr=n, nt=2 * n, perturb=0.03)
        assert res.converged
        assert_monotone(res)
        fit = hopf_fit(hopf_field(res.map, sph), res.map.mesh)
        assert fit.im_violation < 1e-5
        residuals.append(fit.residual)
    assert residuals[0] > residuals[1] > residuals[2]
    assert math.log2(residuals[0] / residuals[1]) >= 1


def test_mod_ordering_sign_law():
    # Mod X <= Mod Y gives c >= 0; Mod X > Mod Y gives c < 0 = -ab
    res = solve(Annulus(0.6, 1.0), Annulus(0.5, 1.0))
    c = hopf_fit(hopf_field(res.map, E), res.map.mesh).c
    assert c.real >= -1e-8
    res = solve(X, Y)
    c = hopf_fit(hopf_field(res.map, E), res.map.mesh).c
    assert c.real < 0
    np.testing.assert_allclose(c.real, euclidean_closed_form(0.5, 0.6).hopf_constant, atol=1e-8)


def test_tension_residual_examples():
    f = euclidean_closed_form(0.5, 0.6)
    vals = [tension_residual(DiscreteMap.from_analytic(make_polar_mesh(X, n, 2 * n), f), E) for n in (16, 32)]
    assert max(vals) < 1e-8
    prof = RadialProfile.from_function(lambda s: 1 + 0.3 * s * s, lambda s: 0.6 * s, lambda s: 0.6 + 0 * s)
    m = Metric.radial(prof)
    w = nitsche_map(prof, -0.2, 0.6)
    vals = [tension_residual(DiscreteMap.from_analytic(make_polar_mesh(w.source, n, 2 * n), w), m)
            for n in (16, 32, 64)]
    assert vals[0] / vals[1] > 3 and vals[1] / vals[2] > 3
    rng = np.random.default_rng(0)
    mesh = make_polar_mesh(X, 16, 32)
    noise = mesh.nodes + 0.05 * (rng.standard_normal(mesh.shape) + 1j * rng.standard_normal(mesh.shape))
    assert tension_residual(DiscreteMap(mesh, noise), E) > 0.1


def test_history_bit_identical_across_workers():
    hist = []
    for k in (1, 2, 8):
        mesh = make_polar_mesh(X, 40, 80)
        init = perturb_map(init_map(X, Y, mesh=mesh), 0.05, seed=4)
        res = minimize(X, Y, Metric.paper_spherical(), SolverConfig(workers=k), init)
        hist.append(np.array(res.energy_history))
    for h in hist[1:]:
        assert h.shape == hist[0].shape and np.array_equal(h, hist[0])


@pytest.mark.parametrize("R, expect", [(0.6, 1 / 3), (0.8, 0.5)])
def test_explorer_euclidean(R, expect):
    est = estimate_nitsche_radius_variational(E, R)
    assert abs(est - expect) < 0.02
    assert est < R


def test_explorer_bracket_and_errors():
    res = explore_nitsche_radius(E, 0.6, n_radial=24, n_angular=48, tol=0.02)
    lo, hi = res.bracket
    assert lo < res.estimate < hi and hi - lo <= 0.02
    assert any(not p.diffeomorphic for p in res.probes)
    with pytest.raises(ValueError, match=r"R must lie in \(0,1\)"):
        explore_nitsche_radius(E, 1.2)
    with pytest.raises(ExplorerError) as info:
        explore_nitsche_radius(E, 0.6, SolverConfig(max_iterations=0, gradient_tolerance=1e-30),
                               n_radial=16, n_angular=32)
    assert info.value.bracket is not None

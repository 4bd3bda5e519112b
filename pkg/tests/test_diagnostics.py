import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from annulus_min.diagnostics import (beta_lower_bound, holder_exponent, holder_halving_check, hopf_field,
                                     hopf_fit, qc_report, sqrt_signed)
from annulus_min.energy import DiscreteMap
from annulus_min.geometry import Annulus, make_polar_mesh
from annulus_min.metrics import Metric, RadialProfile
from annulus_min.radial import critical_euclidean_map, euclidean_closed_form, nitsche_map

E = Metric.euclidean()
X = Annulus(0.5, 1.0)
CF = euclidean_closed_form(0.5, 0.6)


def sampled(amap, A=X, nr=64, nt=128):
    return DiscreteMap.from_analytic(make_polar_mesh(A, nr, nt), amap)


def test_hopf_field_examples():
    d = DiscreteMap(make_polar_mesh(X, 32, 64), make_polar_mesh(X, 32, 64).nodes * 0.8)
    np.testing.assert_allclose(hopf_field(d, E), 0, atol=1e-14)
    d = sampled(CF)
    z = d.mesh.nodes
    np.testing.assert_allclose(hopf_field(d, E) * z ** 2, -0.0622222222, atol=1e-12)
    np.testing.assert_allclose(CF.hopf_constant, -0.0622222222, rtol=1e-9)
    w = nitsche_map(RadialProfile.constant(), -0.2, 0.6)
    d = sampled(w, w.source, 128, 256)
    z = d.mesh.nodes
    np.testing.assert_allclose((hopf_field(d, E) * z ** 2)[1:-1], -0.05, atol=1e-6)


def test_hopf_fit_examples():
    mesh = make_polar_mesh(X, 16, 32)
    fit = hopf_fit(np.zeros(mesh.shape), mesh)
    assert fit.c == 0 and fit.residual == 0
    z = mesh.nodes
    fit = hopf_fit(CF.hopf_constant / z ** 2, mesh)
    assert abs(fit.c - CF.hopf_constant) < 1e-12
    assert fit.residual < 1e-14 and fit.im_violation < 1e-14
    fit = hopf_fit(1 / z ** 3, mesh)
    assert abs(fit.c) < 1e-12           # 1/z^3 is orthogonal to 1/z^2 on circles
    assert fit.residual > 0.5 and fit.relative_residual > 0.99
    with pytest.raises(ValueError):
        hopf_fit(np.zeros((3, 3)), mesh)
    with pytest.raises(ValueError, match="interior"):
        hopf_fit(np.zeros((2, 8)), make_polar_mesh(X, 2, 8))


def test_qc_report_closed_form():
    d = sampled(CF)
    rep = qc_report(d, E, CF.hopf_constant, 0.5)
    np.testing.assert_allclose(rep.K_prime, 0.497778, atol=1e-6)
    assert rep.worst_slack >= -1e-6
    a = CF.a
    assert 4 * a ** 2 / 0.5 ** 4 <= rep.K_prime
    assert rep.K == 1 and rep.K_prime >= 0
    assert rep.K_prime_conservative > rep.K_prime
    np.testing.assert_allclose(rep.K_prime_sharp, 2 * rep.K_prime_rho2, rtol=1e-15)


def test_qc_report_conformal():
    mesh = make_polar_mesh(X, 16, 32)
    rep = qc_report(DiscreteMap(mesh, 0.7 * mesh.nodes), E, 0.0, 0.5)
    assert rep.K_prime == 0
    assert abs(rep.worst_slack) < 1e-12


def test_qc_report_critical_map():
    w = critical_euclidean_map(0.5)
    d = sampled(w)
    rep = qc_report(d, E, w.hopf_constant, 0.5)
    assert rep.worst_node[0] == 0
    np.testing.assert_allclose(rep.K_prime, 1.28, rtol=1e-12)
    # verbatim K' leaves slack K' - |Df|^2 on the inner circle where J = 0
    np.testing.assert_allclose(rep.worst_slack, rep.K_prime - 2.56, atol=1e-9)
    np.testing.assert_allclose(rep.K_prime_sharp, 2.56, rtol=1e-12)
    assert abs(rep.worst_slack_sharp) < 1e-9


def test_beta_lower_bound():
    np.testing.assert_allclose(beta_lower_bound(1.0, math.pi / 2), 1 / (1 + math.pi) ** 2, rtol=1e-15)
    np.testing.assert_allclose(beta_lower_bound(), 0.0582996, atol=1e-7)
    assert beta_lower_bound(2.0) < beta_lower_bound(1.0)


def test_holder_identity():
    mesh = make_polar_mesh(X, 64, 128)
    d = DiscreteMap(mesh, mesh.nodes)
    for b in ("inner", "outer"):
        rep = holder_exponent(d, b, 0.2)
        assert abs(rep.exponent - 1.0) < 0.02
        lo, hi = rep.window
        assert 0 < lo < hi <= 0.2 * (1 + 1e-9) * math.sqrt(2) + 0.05
        assert rep.n_bins >= 3 and rep.n_pairs > 5000


@pytest.mark.parametrize("boundary", ["inner", "outer"])
def test_holder_smooth_maps(boundary):
    rep = holder_exponent(sampled(CF), boundary, 0.2)
    assert abs(rep.exponent - 1.0) < 0.1
    prof = RadialProfile.from_function(lambda s: 1 + s * s, lambda s: 2 * s, lambda s: 2 + 0 * s)
    w = nitsche_map(prof, -0.1, 0.6)
    rep = holder_exponent(sampled(w, w.source), boundary, 0.1)
    assert 0.9 <= rep.exponent <= 1.2


def test_holder_reproducible_and_errors():
    d = sampled(CF, nr=32, nt=64)
    assert holder_exponent(d, "inner", 0.2, seed=3) == holder_exponent(d, "inner", 0.2, seed=3)
    with pytest.raises(ValueError, match="mesh scale"):
        holder_exponent(d, "inner", 1e-4)
    with pytest.raises(ValueError, match="opposite boundary"):
        holder_exponent(d, "inner", 0.6)
    with pytest.raises(ValueError):
        holder_exponent(d, "middle", 0.2)
    mesh = make_polar_mesh(X, 32, 64)
    with pytest.raises(ValueError, match="degenerate"):
        holder_exponent(DiscreteMap(mesh, np.ones(mesh.shape, complex)), "inner", 0.2)


def test_sqrt_signed_examples():
    assert sqrt_signed(4.0) == 2
    assert sqrt_signed(-4.0) == 2j
    assert sqrt_signed(0.0) == 0
    np.testing.assert_array_equal(sqrt_signed([9.0, -1.0]), [3, 1j])
    with pytest.raises(ValueError):
        sqrt_signed(float("nan"))


@given(st.floats(min_value=-1e150, max_value=1e150, allow_nan=False))
def test_sqrt_signed_squares_back(x):
    y = sqrt_signed(x) ** 2
    assert abs(y.imag) <= 1e-15 * abs(x)
    assert y.real == pytest.approx(x, rel=4e-16, abs=0)


def test_halving_examples():
    t = np.linspace(0, 1, 201)
    rep = holder_halving_check(t, t, 1.0, C=1.0)
    assert rep.passed and rep.constant <= 1 + 1e-12
    t = np.linspace(-1, 1, 401)
    for R in (np.abs(t), t):             # the profile as written, and one that changes sign
        rep = holder_halving_check(t, R, 1.0)
        assert rep.passed and rep.C == pytest.approx(1.0) and rep.constant <= 2
    # across the sign change |i sqrt(a) - sqrt(b)| = sqrt(a + b), the one-signed bound still holds
    assert rep.constant == pytest.approx(1.0)
    rep = holder_halving_check(t, np.ones_like(t), 0.5)
    assert rep.passed and rep.constant == 0
    with pytest.raises(ValueError):
        holder_halving_check(t, t, 1.5)


def test_halving_flags_violation():
    t = np.linspace(0, 1, 101)
    rep = holder_halving_check(t, t, 1.0, C=0.1)
    assert not rep.passed and rep.violations

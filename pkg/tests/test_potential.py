import numpy as np
import pytest

from annulus_min.potential import (DiskGrid, decompose, default_margin, disk_radii, green_potential,
                                   harmonic_extension, poisson)

T = 2 * np.pi * np.arange(64) / 64
PTS = np.array([0.0, 0.3, -0.5j, 0.2 + 0.6j, -0.7 + 0.1j, 0.85 * np.exp(2j)])


def test_poisson_examples():
    z = np.array([0, 0.3, -0.2 + 0.5j, 0.4j])
    np.testing.assert_allclose(poisson(np.ones(64), z), 1, atol=1e-14)
    np.testing.assert_allclose(poisson(np.cos(T), 0.3), 0.3, atol=1e-14)
    np.testing.assert_allclose(poisson(np.cos(2 * T), 0.5j), -0.25, atol=1e-14)


def test_poisson_complex_and_shape():
    xi = np.exp(3j * T)
    z = np.array([[0.1, 0.2j], [0.3 - 0.1j, 0.0]])
    np.testing.assert_allclose(poisson(xi, z), z ** 3, atol=1e-13)


def test_poisson_margin_error():
    assert default_margin(64) == pytest.approx(1 - np.exp(-30 / 64))
    assert 0.5 ** 64 < 1e-13
    assert default_margin(16) == 0.5
    with pytest.raises(ValueError, match="margin"):
        poisson(np.ones(64), 0.65)
    assert poisson(np.ones(64), 0.6, margin=0.1) == pytest.approx(1.0)


def test_poisson_positivity():
    rng = np.random.default_rng(1)
    for _ in range(20):
        xi = rng.random(128) * (rng.random(128) < 0.3)
        z = 0.7 * np.sqrt(rng.random(50)) * np.exp(2j * np.pi * rng.random(50))
        assert np.all(poisson(xi, z) >= 0)


def test_harmonic_extension_matches_poisson():
    xi = np.cos(T) + 0.5 * np.sin(3 * T) + 0.1
    z = np.array([0.0, 0.3 + 0.2j, -0.4j])
    np.testing.assert_allclose(harmonic_extension(xi, z), poisson(xi, z), atol=1e-14)
    # unlike the trapezoid rule it stays exact near the circle
    np.testing.assert_allclose(harmonic_extension(np.cos(T), [0.99]), [0.99], atol=1e-13)


def test_green_examples():
    assert green_potential(lambda w: 0 * w.real, 0.3) == 0
    np.testing.assert_allclose(green_potential(lambda w: 4 + 0 * w.real, 0.0), -1.0, atol=1e-13)
    np.testing.assert_allclose(green_potential(lambda w: 4 + 0 * w.real, 0.6), -0.64, atol=1e-13)
    z = np.array([0.2j, -0.5 + 0.5j, 0.9])
    np.testing.assert_allclose(green_potential(lambda w: 4 + 0 * w.real, z), np.abs(z) ** 2 - 1, atol=1e-12)
    g = DiskGrid.from_function(lambda w: 4 + 0 * w.real)
    np.testing.assert_allclose(green_potential(g, z), np.abs(z) ** 2 - 1, atol=1e-12)
    with pytest.raises(ValueError):
        green_potential(g, 1.0)


def test_green_sign():
    rng = np.random.default_rng(2)
    z = 0.95 * np.sqrt(rng.random(15)) * np.exp(2j * np.pi * rng.random(15))
    for h in (lambda w: np.abs(w) ** 2, lambda w: 1 + np.cos(3 * np.angle(w)), lambda w: (w.real > 0) * 1.0):
        assert np.all(green_potential(h, z) <= 1e-14)


def test_disk_grid():
    r = disk_radii(8)
    assert r[0] == 0 and r[-1] == 1 and np.all(np.diff(r) > 0)
    g = DiskGrid.from_function(lambda w: w.real ** 2 - w.imag ** 3 + 0j * w, 16, 32)
    z = np.array([0.1 + 0.2j, -0.7j, 0.55])
    np.testing.assert_allclose(g.evaluate(z), z.real ** 2 - z.imag ** 3, atol=1e-12)
    np.testing.assert_allclose(g.boundary, np.cos(g.theta) ** 2 - np.sin(g.theta) ** 3, atol=1e-15)
    with pytest.raises(ValueError):
        DiskGrid(4, 8, np.full((4, 8), np.nan))
    with pytest.raises(ValueError):
        DiskGrid(4, 8, np.zeros((3, 8)))


def decomp(F, lap, z=PTS):
    return decompose(DiskGrid.from_function(F), lap, points=z)


def test_decompose_examples():
    d = decomp(lambda w: np.abs(w) ** 2, lambda w: 4 + 0 * w.real)
    h, p = d
    np.testing.assert_allclose(h, 1, atol=1e-13)
    np.testing.assert_allclose(p, np.abs(PTS) ** 2 - 1, atol=1e-13)
    assert not d.flagged and d.max_error < 1e-12
    d = decomp(lambda w: (w ** 3).real, lambda w: 0 * w.real)
    np.testing.assert_allclose(d.potential, 0, atol=1e-15)
    np.testing.assert_allclose(d.harmonic, (PTS ** 3).real, atol=1e-13)
    d = decomp(lambda w: w.real + np.abs(w) ** 2, lambda w: 4 + 0 * w.real)
    np.testing.assert_allclose(d.harmonic, PTS.real + 1, atol=1e-13)
    np.testing.assert_allclose(d.potential, np.abs(PTS) ** 2 - 1, atol=1e-13)


@pytest.mark.parametrize("F, lap", [
    (lambda w: w.real ** 4, lambda w: 12 * w.real ** 2),
    (lambda w: w.real ** 2 * w.imag ** 2, lambda w: 2 * np.abs(w) ** 2),
    (lambda w: w.imag ** 3 - w.real, lambda w: 6 * w.imag),
    (lambda w: np.abs(w) ** 4 + 1j * w.real * w.imag, lambda w: 16 * np.abs(w) ** 2 + 0j),
])
def test_decompose_polynomials(F, lap):
    d = decomp(F, lap)
    assert d.max_error < 1e-5 and not d.flagged


def test_decompose_flags_inconsistent_laplacian():
    d = decomp(lambda w: np.abs(w) ** 2, lambda w: 0 * w.real)
    assert d.flagged and d.max_error > 0.5
    assert d.worst_point == 0

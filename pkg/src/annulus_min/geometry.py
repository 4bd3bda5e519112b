"""Annuli, log-polar meshes, conformal modulus and circle chord-arc constants."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np


@dataclass(frozen=True)
class Annulus:
    """Round annulus ``A(r, R) = {r < |z| < R}``."""

    inner_radius: float
    outer_radius: float

    def __post_init__(self):
        r, R = self.inner_radius, self.outer_radius
        if not (math.isfinite(r) and math.isfinite(R)):
            raise ValueError(f"annulus radii must be finite, got ({r}, {R})")
        if r <= 0:
            raise ValueError(f"inner radius must be positive, got {r}")
        if r >= R:
            raise ValueError(f"inner >= outer: ({r}, {R})")

    @property
    def is_normalized(self) -> bool:
        return self.outer_radius == 1.0

    def contains(self, z, closed: bool = True) -> np.ndarray:
        s = np.abs(z)
        if closed:
            return (s >= self.inner_radius) & (s <= self.outer_radius)
        return (s > self.inner_radius) & (s < self.outer_radius)


@dataclass(frozen=True)
class Disk:
    """Closed disk ``|z| <= radius`` centred at the origin."""

    radius: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"disk radius must be positive and finite, got {self.radius}")

    @property
    def inner_radius(self) -> float:
        return 0.0

    @property
    def outer_radius(self) -> float:
        return self.radius


def make_annulus(r: float, R: float) -> Annulus:
    return Annulus(float(r), float(R))


def modulus(a: Annulus) -> float:
    """Conformal modulus ``log(R/r) / (2 pi)``."""
    return math.log(a.outer_radius / a.inner_radius) / (2.0 * math.pi)


@dataclass(frozen=True)
class PolarMesh:
    """Tensor grid on an annulus, uniform in ``u = log s`` and in the angle.

    Node ``(i, j)`` sits at ``s_i exp(i t_j)``; ``i`` runs from the inner
    circle (0) to the outer circle (``n_radial - 1``), ``t_j = 2 pi j / n_angular``.
    The angular direction is periodic and nodes are not duplicated.
    """

    annulus: Annulus
    n_radial: int
    n_angular: int
    radii: np.ndarray = field(repr=False, compare=False)
    theta: np.ndarray = field(repr=False, compare=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_radial, self.n_angular)

    @property
    def size(self) -> int:
        return self.n_radial * self.n_angular

    @property
    def u(self) -> np.ndarray:
        return np.log(self.radii)

    @property
    def h_u(self) -> float:
        return math.log(self.annulus.outer_radius / self.annulus.inner_radius) / (self.n_radial - 1)

    @property
    def h_t(self) -> float:
        return 2.0 * math.pi / self.n_angular

    @property
    def nodes(self) -> np.ndarray:
        """Complex node coordinates, shape ``(n_radial, n_angular)``."""
        return self.radii[:, None] * np.exp(1j * self.theta)[None, :]

    def matches(self, other: "PolarMesh") -> bool:
        return (self.shape == other.shape
                and self.annulus == other.annulus)

    def to_csv(self, fh: TextIO) -> None:
        """Write the node table with header ``i,j,s,theta``."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "s", "theta"])
        for i, s in enumerate(self.radii):
            for j, t in enumerate(self.theta):
                w.writerow([i, j, repr(float(s)), repr(float(t))])


def make_polar_mesh(a: Annulus, n_radial: int, n_angular: int) -> PolarMesh:
    if int(n_radial) != n_radial or n_radial < 2:
        raise ValueError(f"n_radial must be an integer >= 2, got {n_radial}")
    if int(n_angular) != n_angular or n_angular < 4:
        raise ValueError(f"n_angular must be an integer >= 4, got {n_angular}")
    n_radial, n_angular = int(n_radial), int(n_angular)
    u = np.linspace(math.log(a.inner_radius), math.log(a.outer_radius), n_radial)
    radii = np.exp(u)
    # pin the end layers exactly to the boundary circles
    radii[0], radii[-1] = a.inner_radius, a.outer_radius
    theta = 2.0 * math.pi * np.arange(n_angular) / n_angular
    radii.setflags(write=False)
    theta.setflags(write=False)
    return PolarMesh(a, n_radial, n_angular, radii, theta)


def chord_arc_ratio(theta):
    """Arc over chord for two points on the unit circle separated by angle ``theta``."""
    theta = np.asarray(theta, dtype=float)
    return theta / (2.0 * np.sin(theta / 2.0))


def chord_arc_constant_circle() -> float:
    """Supremum of arc/chord on a circle, attained at antipodal points."""
    # theta / (2 sin(theta/2)) is increasing on (0, pi]
    return float(chord_arc_ratio(math.pi))

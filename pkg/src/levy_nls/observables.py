"""Mass, Hamiltonian (kinetic + defocusing potential), virial and their series."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import ComplexField, gradient_field, sobolev_norm

CSV_COLUMNS = [
    "t",
    "mass",
    "kinetic",
    "potential",
    "hamiltonian",
    "virial",
    "h1_norm",
    "hgamma_norm",
]


def mass(u: ComplexField) -> float:
    """Squared L^2 norm, int |u|^2 dx."""
    u.check_valid()
    return float(np.sum(np.abs(u.values) ** 2) * u.grid.cell_volume)


def kinetic_energy(u: ComplexField) -> float:
    """(1/2) int |grad u|^2 dx with the spectral gradient."""
    total = 0.0
    for du in gradient_field(u):
        total += np.sum(np.abs(du.values) ** 2)
    return float(0.5 * total * u.grid.cell_volume)


def potential_energy(u: ComplexField, lam: float, alpha: float) -> float:
    """(lambda / (alpha + 1)) int |u|^{alpha + 1} dx."""
    u.check_valid()
    mod = np.abs(u.values)
    return float(lam / (alpha + 1.0) * np.sum(mod ** (alpha + 1.0)) * u.grid.cell_volume)


def hamiltonian(u: ComplexField, lam: float, alpha: float) -> float:
    return kinetic_energy(u) + potential_energy(u, lam, alpha)


def virial(u: ComplexField) -> float:
    """Second spatial moment int |x|^2 |u|^2 dx on the box coordinates."""
    u.check_valid()
    mod2 = np.abs(u.values) ** 2
    return float(np.sum(u.grid.radius_sq() * mod2) * u.grid.cell_volume)


@dataclass
class ObservableSeries:
    """Time series of the tracked functionals for one trajectory."""

    times: np.ndarray
    mass: np.ndarray
    kinetic: np.ndarray
    potential: np.ndarray
    hamiltonian: np.ndarray
    virial: np.ndarray
    h1_norm: np.ndarray
    hgamma_norm: np.ndarray
    gamma: float = 0.9

    @classmethod
    def empty(cls, gamma: float = 0.9) -> "ObservableSeries":
        z = np.zeros(0)
        return cls(z, z, z, z, z, z, z, z, gamma=gamma)

    @classmethod
    def collect(cls, times, fields, lam, alpha, gamma: float = 0.9) -> "ObservableSeries":
        rows = [observable_row(u, lam, alpha, gamma) for u in fields]
        arr = np.array(rows) if rows else np.zeros((0, 7))
        return cls(np.asarray(times, dtype=float), *(arr[:, j] for j in range(7)), gamma=gamma)

    @property
    def sup_mass(self) -> float:
        return float(np.max(self.mass))

    @property
    def sup_hamiltonian(self) -> float:
        return float(np.max(self.hamiltonian))

    @property
    def sup_virial(self) -> float:
        return float(np.max(self.virial))

    def csv_rows(self):
        for i, t in enumerate(self.times):
            yield [
                t,
                self.mass[i],
                self.kinetic[i],
                self.potential[i],
                self.hamiltonian[i],
                self.virial[i],
                self.h1_norm[i],
                self.hgamma_norm[i],
            ]


def observable_row(u: ComplexField, lam: float, alpha: float, gamma: float = 0.9):
    kin = kinetic_energy(u)
    pot = potential_energy(u, lam, alpha)
    return [
        mass(u),
        kin,
        pot,
        kin + pot,
        virial(u),
        sobolev_norm(u, 1.0),
        sobolev_norm(u, gamma),
    ]

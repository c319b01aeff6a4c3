"""Deterministic estimate verification: Strichartz admissible-pair arithmetic
and the dispersive decay of the free group."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .grid import ComplexField, boundary_mass_fraction, free_propagate, lp_norm


def is_admissible(p: float, q: float, d: int) -> bool:
    """True iff (p, q) satisfies 2/q = d/2 - d/p with the dimension-dependent
    p-range (2 <= p < 2d/(d-2) for d >= 3, p < inf for d = 2, p <= inf for d = 1)."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if p < 1 or q < 1:
        return False
    if d == 1:
        p_ok = 2.0 <= p
    elif d == 2:
        p_ok = 2.0 <= p < math.inf
    else:
        p_ok = 2.0 <= p < 2.0 * d / (d - 2.0)
    if not p_ok:
        return False
    inv_q = 0.0 if q == math.inf else 1.0 / q
    inv_p = 0.0 if p == math.inf else 1.0 / p
    return abs(2.0 * inv_q - (d / 2.0 - d * inv_p)) <= 1e-12


def conjugate_exponent(p: float) -> float:
    if p == math.inf:
        return 1.0
    if p == 1.0:
        return math.inf
    return p / (p - 1.0)


@dataclass
class DecayReport:
    p: float
    d: int
    fitted_exponent: float
    theoretical_exponent: float
    times: np.ndarray
    norms: np.ndarray
    ratios: np.ndarray
    window_shrunk: bool

    def to_json(self) -> str:
        payload = {
            "p": None if self.p == math.inf else self.p,
            "d": self.d,
            "fitted_exponent": self.fitted_exponent,
            "theoretical_exponent": self.theoretical_exponent,
            "times": list(map(float, self.times)),
            "norms": list(map(float, self.norms)),
            "ratios": list(map(float, self.ratios)),
            "window_shrunk": self.window_shrunk,
        }
        return json.dumps(payload, sort_keys=True)


def dispersive_decay_check(
    phi: ComplexField,
    p: float,
    times,
    boundary_threshold: float = 1e-8,
    interior_mass_tol: float = 1e-6,
) -> DecayReport:
    """Evolve phi freely, measure |T(t) phi|_{L^p} and fit the log-log slope.

    Times where more than interior_mass_tol of the mass has left the central
    half of the box are dropped (the periodic wrap-around would fake the decay);
    a boundary-mass violation is a hard error."""
    times = np.asarray(sorted(times), dtype=float)
    if np.any(times <= 0):
        raise ValueError("times must be positive")
    phi.check_valid()
    d = phi.grid.dimension
    theo = -d * (0.5 - (0.0 if p == math.inf else 1.0 / p))
    phi_dual = lp_norm(phi, conjugate_exponent(p))

    norms, valid = [], []
    half = phi.grid.half_width / 2.0
    interior = np.ones(phi.grid.shape, dtype=bool)
    for c in phi.grid.coords():
        interior &= np.broadcast_to(np.abs(c) <= half, phi.grid.shape)
    for t in times:
        ut = free_propagate(phi, t)
        if boundary_mass_fraction(ut) > boundary_threshold:
            raise BoundaryMassViolation(
                f"boundary mass exceeded {boundary_threshold:.1e} at t={t}"
            )
        mod2 = np.abs(ut.values) ** 2
        outside = 1.0 - np.sum(mod2[interior]) / np.sum(mod2)
        valid.append(outside <= interior_mass_tol)
        norms.append(lp_norm(ut, p))
    norms = np.asarray(norms)
    valid = np.asarray(valid)

    if np.count_nonzero(valid) < 3:
        raise ValueError("fewer than 3 valid times; enlarge the box or shorten times")
    tv, nv = times[valid], norms[valid]
    design = np.vstack([np.log(tv), np.ones_like(tv)]).T
    slope = float(np.linalg.lstsq(design, np.log(nv), rcond=None)[0][0])
    ratios = norms * times ** (-theo) / phi_dual
    return DecayReport(
        p=p,
        d=d,
        fitted_exponent=slope,
        theoretical_exponent=theo,
        times=times,
        norms=norms,
        ratios=ratios,
        window_shrunk=bool(~valid.all()),
    )


class BoundaryMassViolation(RuntimeError):
    """The dispersed field reached the box boundary."""

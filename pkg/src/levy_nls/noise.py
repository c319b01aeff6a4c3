"""Levy noise specification: mark functions, intensity measures, compound-Poisson
sampling, compensator quadrature, integrability constants and the conservation
hypotheses on the coefficient functions g and h."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import ComplexField, GridSpec, gradient_field

QUAD_MAX_NODES = 2**14
QUAD_RTOL = 1e-10


class QuadratureError(RuntimeError):
    """Node-doubling quadrature failed to converge."""


class InfiniteActivityError(ValueError):
    """Operation requires a finite-activity (truncated) measure."""


# ---------------------------------------------------------------------------
# Marks


@dataclass(frozen=True)
class MarkFunction:
    """Real-valued mark z sampled on a grid, with its cached sup-norms."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)
    sup_norm: float = 0.0
    grad_sup_norm: float = 0.0
    weighted_sup: float = 0.0  # sup_x |x| |z(x)|

    @classmethod
    def from_values(cls, grid: GridSpec, values) -> "MarkFunction":
        v = np.broadcast_to(np.asarray(values, dtype=float), grid.shape).copy()
        if not np.all(np.isfinite(v)):
            raise ValueError("mark contains non-finite samples")
        v.setflags(write=False)
        helper = ComplexField(grid, v.astype(np.complex128))
        grad_sup = max(
            (float(np.max(np.abs(d.values))) for d in gradient_field(helper)),
            default=0.0,
        )
        radius = np.sqrt(grid.radius_sq())
        return cls(
            grid,
            v,
            sup_norm=float(np.max(np.abs(v))),
            grad_sup_norm=grad_sup,
            weighted_sup=float(np.max(radius * np.abs(v))),
        )

    @property
    def w1_inf_norm(self) -> float:
        """max(sup |z|, sup |grad z|), the W^1_inf proxy."""
        return max(self.sup_norm, self.grad_sup_norm)

    def scaled(self, a: float) -> "MarkFunction":
        return MarkFunction(
            self.grid,
            self.values * a,
            sup_norm=abs(a) * self.sup_norm,
            grad_sup_norm=abs(a) * self.grad_sup_norm,
            weighted_sup=abs(a) * self.weighted_sup,
        )


def gaussian_bump(grid: GridSpec, amplitude=1.0, center=0.0, width=1.0) -> MarkFunction:
    centers = np.atleast_1d(np.asarray(center, dtype=float))
    if centers.size == 1 and grid.dimension > 1:
        centers = np.repeat(centers, grid.dimension)
    r2 = 0.0
    for x, c in zip(grid.coords(), centers):
        r2 = r2 + (x - c) ** 2
    return MarkFunction.from_values(grid, amplitude * np.exp(-r2 / (2.0 * width**2)))


# ---------------------------------------------------------------------------
# Intensity measures


@dataclass(frozen=True)
class TruncationSpec:
    """Small-jump cutoff, measured in the mark sup-norm."""

    eps: float = 0.0

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite list of (rate per unit time, mark) atoms."""

    atoms: tuple  # of (rate, MarkFunction)

    def __post_init__(self):
        for rate, _ in self.atoms:
            if not rate > 0:
                raise ValueError(f"atom weights must be positive, got {rate}")
        object.__setattr__(self, "atoms", tuple(self.atoms))


@dataclass(frozen=True)
class AmplitudeMeasure:
    """Marks a * z_base with amplitude intensity density rho(a) da on (a_min, a_max]."""

    base: MarkFunction
    density: object  # callable a -> rho(a), vectorized
    a_min: float
    a_max: float

    def __post_init__(self):
        if not (0 <= self.a_min < self.a_max):
            raise ValueError("need 0 <= a_min < a_max")


def stable_like_density(a, exponent=1.5):
    """a^{-exponent} on (0, 1]-style intervals; non-integrable at 0 for exponent >= 1."""
    return np.asarray(a, dtype=float) ** (-exponent)


def uniform_density(a, value=1.0):
    return np.full_like(np.asarray(a, dtype=float), value)


_GL_ORDER = 16
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)


def _gauss_legendre_doubling(fn, lo, hi, rtol=QUAD_RTOL):
    """Composite Gauss-Legendre with panel doubling until the estimate is
    stable to rtol (total node count capped at QUAD_MAX_NODES); fn maps a node
    array to values with the node axis last."""
    if hi <= lo:
        return 0.0
    prev = None
    panels = 1
    while panels * _GL_ORDER <= QUAD_MAX_NODES:
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * (edges[1] - edges[0])
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes = (mid[:, None] + half * _GL_NODES[None, :]).ravel()
        weights = half * np.tile(_GL_WEIGHTS, panels)
        est = np.sum(fn(nodes) * weights, axis=-1)
        if prev is not None:
            scale = max(np.max(np.abs(est)), np.max(np.abs(prev)), 1e-300)
            if np.max(np.abs(est - prev)) <= rtol * scale:
                return est
        prev = est
        panels *= 2
    raise QuadratureError(
        f"quadrature did not converge below {rtol} within {QUAD_MAX_NODES} nodes"
    )


def restrict(model, trunc: TruncationSpec):
    """Remove marks with sup-norm <= eps; identity at eps = 0 for finite models."""
    eps = trunc.eps
    if isinstance(model, AtomicMeasure):
        if eps == 0.0:
            return model
        return AtomicMeasure(
            tuple((r, z) for r, z in model.atoms if z.sup_norm > eps)
        )
    if isinstance(model, AmplitudeMeasure):
        if eps == 0.0:
            return model
        if model.base.sup_norm == 0.0:
            return AtomicMeasure(())  # zero base profile: no mark exceeds eps > 0
        a_cut = eps / model.base.sup_norm
        if a_cut >= model.a_max:
            return AtomicMeasure(())
        return replace(model, a_min=max(model.a_min, a_cut))
    raise TypeError(f"unknown measure model {type(model)!r}")


def total_rate(model) -> float:
    """nu(Z): total jump rate per unit time."""
    if isinstance(model, AtomicMeasure):
        return float(sum(r for r, _ in model.atoms))
    if isinstance(model, AmplitudeMeasure):
        try:
            return float(
                _gauss_legendre_doubling(model.density, model.a_min, model.a_max)
            )
        except QuadratureError as exc:
            raise InfiniteActivityError(
                "amplitude density is not integrable on the configured interval; "
                "restrict() with a positive truncation first"
            ) from exc
    raise TypeError(f"unknown measure model {type(model)!r}")


@dataclass(frozen=True)
class CompoundPoissonPath:
    """One sampled realization: strictly increasing jump times and their marks."""

    horizon: float
    times: np.ndarray
    marks: tuple  # of MarkFunction
    seed: int
    eps: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size != len(self.marks):
            raise ValueError("jump time count does not match mark count")
        if t.size and (np.any(np.diff(t) <= 0) or t[0] <= 0 or t[-1] > self.horizon):
            raise ValueError("jump times must be strictly increasing in (0, T]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "marks", tuple(self.marks))

    @property
    def count(self) -> int:
        return len(self.marks)


def _amplitude_inverse_cdf(model: AmplitudeMeasure, n_grid: int = 4097):
    """Tabulated inverse CDF of the normalized amplitude density."""
    a = np.linspace(model.a_min, model.a_max, n_grid)
    rho = np.asarray(model.density(a), dtype=float)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * np.diff(a))])
    cdf /= cdf[-1]
    return a, cdf


def sample_path(model, horizon: float, seed: int) -> CompoundPoissonPath:
    """Exponential interarrivals at rate nu(Z), marks i.i.d. nu / nu(Z).

    Deterministic function of (model, horizon, seed)."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rho = total_rate(model)
    rng = np.random.default_rng(seed)
    if rho == 0.0:
        return CompoundPoissonPath(horizon, np.zeros(0), (), seed)
    times = []
    t = 0.0
    while True:
        t += rng.exponential(1.0 / rho)
        if t > horizon:
            break
        times.append(t)
    n = len(times)
    if isinstance(model, AtomicMeasure):
        rates = np.array([r for r, _ in model.atoms])
        idx = rng.choice(len(rates), size=n, p=rates / rho)
        marks = tuple(model.atoms[i][1] for i in idx)
    else:
        a_grid, cdf = _amplitude_inverse_cdf(model)
        amps = np.interp(rng.random(n), cdf, a_grid)
        marks = tuple(model.base.scaled(float(a)) for a in amps)
    return CompoundPoissonPath(horizon, np.array(times), marks, seed)


def filter_path(path: CompoundPoissonPath, eps: float) -> CompoundPoissonPath:
    """Keep only jumps with mark sup-norm > eps (the coupled restriction of one
    driving measure to larger truncation levels)."""
    keep = [i for i, m in enumerate(path.marks) if m.sup_norm > eps]
    return CompoundPoissonPath(
        path.horizon,
        path.times[keep],
        tuple(path.marks[i] for i in keep),
        path.seed,
        eps=eps,
    )


# ---------------------------------------------------------------------------
# Coefficients g, h


@dataclass(frozen=True)
class NoiseCoefficients:
    """Pointwise coefficient functions g, h : R -> C with declared growth constants."""

    g: object
    h: object
    g_prime: object = None
    h_prime: object = None
    c_g: float = 1.0
    c_h: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if abs(complex(np.asarray(self.g(0.0)).item())) != 0.0:
            raise ValueError("g(0) must be 0")
        if abs(complex(np.asarray(self.h(0.0)).item())) != 0.0:
            raise ValueError("h(0) must be 0")

    def dg(self, xi):
        if self.g_prime is not None:
            return self.g_prime(xi)
        return _central_diff(self.g, xi)

    def dh(self, xi):
        if self.h_prime is not None:
            return self.h_prime(xi)
        return _central_diff(self.h, xi)


def _central_diff(fn, xi, step=1e-6):
    xi = np.asarray(xi, dtype=float)
    return (fn(xi + step) - fn(xi - step)) / (2.0 * step)


def _g_phase_rotation(xi, theta):
    return 1j * (np.exp(1j * theta * np.asarray(xi)) - 1.0)


def _h_phase_rotation(xi, theta):
    return 1j * (np.cos(theta * np.asarray(xi)) - 1.0) + 0j


def _dg_phase_rotation(xi, theta):
    return -theta * np.exp(1j * theta * np.asarray(xi))


def _dh_phase_rotation(xi, theta):
    return -1j * theta * np.sin(theta * np.asarray(xi))


def _g_sine_mean(xi):
    return np.sin(np.asarray(xi)) + 0j


def _h_sine_mean(xi):
    xi = np.asarray(xi)
    return xi - 0.5j * np.sin(xi) ** 2


def _dg_sine_mean(xi):
    return np.cos(np.asarray(xi)) + 0j


def _dh_sine_mean(xi):
    return 1.0 - 0.5j * np.sin(2.0 * np.asarray(xi))


def _linear_map(xi, c):
    return c * np.asarray(xi) + 0j


def _const_map(xi, c):
    return np.full_like(np.asarray(xi, dtype=float), c) + 0j


def _zero_map(xi):
    return np.zeros_like(np.asarray(xi, dtype=float)) + 0j


def make_coefficients(family: str, **params) -> NoiseCoefficients:
    """Coefficient registry used by configs and tests.

    phase-rotation: g = i (e^{i theta xi} - 1), h = i (cos(theta xi) - 1)
    sine-mean:      g = sin xi, h = xi - (i/2) sin^2 xi
    linear:         g = c1 xi, h = c2 xi
    zero:           g = h = 0
    """
    if family == "phase-rotation":
        theta = float(params.pop("theta", 1.0))
        _reject_extras(family, params)
        return NoiseCoefficients(
            g=functools.partial(_g_phase_rotation, theta=theta),
            h=functools.partial(_h_phase_rotation, theta=theta),
            g_prime=functools.partial(_dg_phase_rotation, theta=theta),
            h_prime=functools.partial(_dh_phase_rotation, theta=theta),
            c_g=max(abs(theta), 1.0),
            c_h=max(abs(theta) ** 2, 1.0),
            name=f"phase-rotation(theta={theta})",
        )
    if family == "sine-mean":
        _reject_extras(family, params)
        return NoiseCoefficients(
            g=_g_sine_mean,
            h=_h_sine_mean,
            g_prime=_dg_sine_mean,
            h_prime=_dh_sine_mean,
            c_g=1.0,
            c_h=1.5,
            name="sine-mean",
        )
    if family == "linear":
        c1 = float(params.pop("c1", 1.0))
        c2 = float(params.pop("c2", 1.0))
        _reject_extras(family, params)
        return NoiseCoefficients(
            g=functools.partial(_linear_map, c=c1),
            h=functools.partial(_linear_map, c=c2),
            g_prime=functools.partial(_const_map, c=c1),
            h_prime=functools.partial(_const_map, c=c2),
            c_g=max(abs(c1), 1e-12),
            c_h=max(abs(c2), 1e-12),
            name=f"linear(c1={c1}, c2={c2})",
        )
    if family == "zero":
        _reject_extras(family, params)
        return NoiseCoefficients(
            g=_zero_map, h=_zero_map, g_prime=_zero_map, h_prime=_zero_map,
            c_g=1e-12, c_h=1e-12, name="zero",
        )
    raise KeyError(f"unknown coefficient family {family!r}")


def _reject_extras(family, params):
    if params:
        raise TypeError(f"unexpected parameters for {family!r}: {sorted(params)}")


# ---------------------------------------------------------------------------
# Compensator fields and integrability constants


def compensator_fields(model, coeffs: NoiseCoefficients, grid: GridSpec):
    """(z_nu, h_drift) with z_nu(x) = int g(z(x)) nu(dz), h_drift(x) = int h(z(x)) nu(dz)."""
    if isinstance(model, AtomicMeasure):
        z_nu = np.zeros(grid.shape, dtype=np.complex128)
        h_drift = np.zeros(grid.shape, dtype=np.complex128)
        for rate, mark in model.atoms:
            if mark.grid != grid:
                raise ValueError("mark grid does not match target grid")
            z_nu += rate * np.asarray(coeffs.g(mark.values), dtype=np.complex128)
            h_drift += rate * np.asarray(coeffs.h(mark.values), dtype=np.complex128)
        return ComplexField(grid, z_nu), ComplexField(grid, h_drift)
    if isinstance(model, AmplitudeMeasure):
        if model.base.grid != grid:
            raise ValueError("mark grid does not match target grid")
        base = model.base.values[..., None]

        def integrand(fn, nodes):
            rho = np.asarray(model.density(nodes), dtype=float)
            return np.asarray(fn(base * nodes), dtype=np.complex128) * rho

        z_nu = _gauss_legendre_doubling(
            functools.partial(integrand, coeffs.g), model.a_min, model.a_max,
            rtol=1e-8,
        )
        h_drift = _gauss_legendre_doubling(
            functools.partial(integrand, coeffs.h), model.a_min, model.a_max,
            rtol=1e-8,
        )
        return ComplexField(grid, z_nu), ComplexField(grid, h_drift)
    raise TypeError(f"unknown measure model {type(model)!r}")


def levy_constants(model):
    """(C_0, C_1, C_2, C_3): integrals of |z|_inf^2, |z|_{W^1_inf}^2,
    sup |x|^2 |z|^2 and |z|_inf^4 against the intensity measure."""
    if isinstance(model, AtomicMeasure):
        c0 = sum(r * z.sup_norm**2 for r, z in model.atoms)
        c1 = sum(r * z.w1_inf_norm**2 for r, z in model.atoms)
        c2 = sum(r * z.weighted_sup**2 for r, z in model.atoms)
        c3 = sum(r * z.sup_norm**4 for r, z in model.atoms)
        return float(c0), float(c1), float(c2), float(c3)
    if isinstance(model, AmplitudeMeasure):
        b = model.base

        def moment(power, nodes):
            rho = np.asarray(model.density(nodes), dtype=float)
            return rho * nodes**power

        m2 = float(
            _gauss_legendre_doubling(
                functools.partial(moment, 2), model.a_min, model.a_max
            )
        )
        m4 = float(
            _gauss_legendre_doubling(
                functools.partial(moment, 4), model.a_min, model.a_max
            )
        )
        return (
            m2 * b.sup_norm**2,
            m2 * b.w1_inf_norm**2,
            m2 * b.weighted_sup**2,
            m4 * b.sup_norm**4,
        )
    raise TypeError(f"unknown measure model {type(model)!r}")


# ---------------------------------------------------------------------------
# Hypothesis checks


@dataclass(frozen=True)
class HypothesisReport:
    growth_ok: bool
    pathwise_mass_ok: bool
    mean_mass_ok: bool
    worst: dict
    sample_range: tuple
    sample_count: int

    def all_ok(self) -> bool:
        return self.growth_ok and self.pathwise_mass_ok and self.mean_mass_ok


def check_hypotheses(
    coeffs: NoiseCoefficients,
    lo: float = -2.0,
    hi: float = 2.0,
    count: int = 2001,
    atol: float = 1e-10,
) -> HypothesisReport:
    """Evaluate the growth condition and both conservation identities on a
    sampled range of mark values.

    Growth: |g(xi)| <= C_g |xi| (and likewise for h); derivatives are allowed
    the linear-growth envelope C (1 + |xi|).
    Pathwise mass conservation: Im g = Im h and |1 - i g| = 1.
    Mean mass conservation: 2 Im h + |g|^2 = 0.
    """
    xi = np.linspace(lo, hi, count)
    g = np.asarray(coeffs.g(xi), dtype=np.complex128)
    h = np.asarray(coeffs.h(xi), dtype=np.complex128)
    dg = np.asarray(coeffs.dg(xi), dtype=np.complex128)
    dh = np.asarray(coeffs.dh(xi), dtype=np.complex128)

    def worst_of(viol):
        i = int(np.argmax(viol))
        return {"xi": float(xi[i]), "violation": float(viol[i])}

    growth_viol = np.maximum.reduce(
        [
            np.abs(g) - coeffs.c_g * np.abs(xi),
            np.abs(h) - coeffs.c_h * np.abs(xi),
            np.abs(dg) - coeffs.c_g * (1.0 + np.abs(xi)),
            np.abs(dh) - coeffs.c_h * (1.0 + np.abs(xi)),
        ]
    )
    pathwise_viol = np.maximum(np.abs(g.imag - h.imag), np.abs(np.abs(1.0 - 1j * g) - 1.0))
    mean_viol = np.abs(2.0 * h.imag + np.abs(g) ** 2)

    return HypothesisReport(
        growth_ok=bool(np.max(growth_viol) <= atol),
        pathwise_mass_ok=bool(np.max(pathwise_viol) <= atol),
        mean_mass_ok=bool(np.max(mean_viol) <= atol),
        worst={
            "growth": worst_of(growth_viol),
            "pathwise_mass": worst_of(pathwise_viol),
            "mean_mass": worst_of(mean_viol),
        },
        sample_range=(lo, hi),
        sample_count=count,
    )

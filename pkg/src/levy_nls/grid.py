"""Periodic spatial grid, discrete Fourier calculus and the free Schroedinger group.

Fourier convention (fixed once, used by every oracle in the test suite):
the continuum transform is  u_hat(xi) = int e^{-2 pi i x.xi} u(x) dx,  so the
Laplacian has symbol -4 pi^2 |xi|^2 and the free group i d_t u - Lap u = 0
acts in Fourier variables as multiplication by  exp(+4 pi^2 i |xi|^2 t).
On the grid, u_hat is approximated by h^d * FFT(u) at the lattice
frequencies xi_k = k/(2L), and the lattice spacing in frequency is 1/(2L).
"""

from __future__ import annotations

import functools
import struct
from dataclasses import dataclass, field

import numpy as np

FIELD_MAGIC = b"NLSFLD1\x00"
_HEADER = struct.Struct("<8sIId8x")  # magic, d, N, L, pad to 32 bytes


class InvalidFieldError(ValueError):
    """Raised when a field contains NaN/Inf or grids do not match."""


@dataclass(frozen=True)
class GridSpec:
    """Periodic box [-L, L)^d sampled with N points per axis (N a power of two)."""

    dimension: int
    points: int
    half_width: float

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        n = self.points
        if n < 8 or n & (n - 1) != 0:
            raise ValueError(f"points must be a power of two >= 8, got {n}")
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def mesh(self) -> float:
        return 2.0 * self.half_width / self.points

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dimension

    @property
    def cell_volume(self) -> float:
        return self.mesh**self.dimension

    def axis_coords(self) -> np.ndarray:
        return -self.half_width + self.mesh * np.arange(self.points)

    def coords(self) -> list:
        """Broadcastable coordinate arrays, one per axis."""
        x = self.axis_coords()
        if self.dimension == 1:
            return [x]
        return list(np.meshgrid(x, x, indexing="ij", sparse=True))

    def radius_sq(self) -> np.ndarray:
        """|x|^2 on the grid."""
        return _radius_sq(self)

    def axis_freqs(self) -> np.ndarray:
        """Lattice frequencies xi_k = k/(2L) in FFT order (cycles per length)."""
        return np.fft.fftfreq(self.points, d=self.mesh)

    def freqs(self) -> list:
        xi = self.axis_freqs()
        if self.dimension == 1:
            return [xi]
        return list(np.meshgrid(xi, xi, indexing="ij", sparse=True))

    def freq_sq(self) -> np.ndarray:
        return _freq_sq(self)


@functools.lru_cache(maxsize=64)
def _radius_sq(grid: GridSpec) -> np.ndarray:
    out = 0.0
    for c in grid.coords():
        out = out + c**2
    out = np.ascontiguousarray(np.broadcast_to(out, grid.shape))
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=64)
def _freq_sq(grid: GridSpec) -> np.ndarray:
    out = 0.0
    for f in grid.freqs():
        out = out + f**2
    out = np.ascontiguousarray(np.broadcast_to(out, grid.shape))
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=64)
def _boundary_mask(grid: GridSpec) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    for axis in range(grid.dimension):
        idx = [slice(None)] * grid.dimension
        idx[axis] = np.array([0, -1])
        mask[tuple(idx)] = True
    mask.setflags(write=False)
    return mask


@dataclass(frozen=True)
class ComplexField:
    """Complex-valued field on a periodic grid; immutable after construction."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != self.grid.shape:
            raise InvalidFieldError(
                f"values shape {v.shape} does not match grid shape {self.grid.shape}"
            )
        v = v.copy() if v is self.values or not v.flags.owndata else v
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def check_valid(self):
        if not np.all(np.isfinite(self.values)):
            raise InvalidFieldError("field contains non-finite values")

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "ComplexField":
        vals = np.broadcast_to(fn(*grid.coords()), grid.shape).astype(np.complex128)
        return cls(grid, vals)

    @classmethod
    def zero(cls, grid: GridSpec) -> "ComplexField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))


def gaussian_field(grid: GridSpec, amplitude=1.0, width=1.0, center=0.0) -> ComplexField:
    """Gaussian profile A * exp(-|x - c|^2 / (2 w^2))."""
    centers = np.atleast_1d(np.asarray(center, dtype=float))
    if centers.size == 1 and grid.dimension > 1:
        centers = np.repeat(centers, grid.dimension)

    def fn(*xs):
        r2 = 0.0
        for x, c in zip(xs, centers):
            r2 = r2 + (x - c) ** 2
        return amplitude * np.exp(-r2 / (2.0 * width**2))

    return ComplexField.from_function(grid, fn)


@dataclass(frozen=True)
class FourierMultiplier:
    """A pointwise multiplier on the frequency lattice."""

    grid: GridSpec
    symbol: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.broadcast_to(np.asarray(self.symbol), self.grid.shape)
        object.__setattr__(self, "symbol", s)

    @classmethod
    def free_group(cls, grid: GridSpec, t: float) -> "FourierMultiplier":
        return cls(grid, np.exp(4j * np.pi**2 * grid.freq_sq() * t))

    @classmethod
    def sobolev_weight(cls, grid: GridSpec, s: float) -> "FourierMultiplier":
        return cls(grid, (1.0 + 4.0 * np.pi**2 * grid.freq_sq()) ** (s / 2.0))

    @classmethod
    def derivative(cls, grid: GridSpec, axis: int) -> "FourierMultiplier":
        return cls(grid, 2j * np.pi * grid.freqs()[axis])

    def apply(self, u: ComplexField) -> ComplexField:
        u.check_valid()
        return ComplexField(
            self.grid, np.fft.ifftn(np.fft.fftn(u.values) * self.symbol)
        )


def free_propagate(u: ComplexField, t: float) -> ComplexField:
    """Apply the free Schroedinger group over time t (any sign)."""
    return FourierMultiplier.free_group(u.grid, t).apply(u)


def lp_norm(u: ComplexField, p: float) -> float:
    """Riemann-sum L^p norm with mesh weight; p = inf returns the max modulus."""
    u.check_valid()
    if p == np.inf:
        return float(np.max(np.abs(u.values)))
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    mod = np.abs(u.values)
    return float((np.sum(mod**p) * u.grid.cell_volume) ** (1.0 / p))


def sobolev_norm(u: ComplexField, s: float) -> float:
    """H^s norm via the weight (1 + |2 pi xi|^2)^{s/2}; s = 0 recovers the L^2 norm."""
    u.check_valid()
    g = u.grid
    hat = np.fft.fftn(u.values) * g.cell_volume
    weight_sq = (1.0 + 4.0 * np.pi**2 * g.freq_sq()) ** s
    dxi = (1.0 / (2.0 * g.half_width)) ** g.dimension
    return float(np.sqrt(np.sum(weight_sq * np.abs(hat) ** 2) * dxi))


def gradient_field(u: ComplexField) -> list:
    """Spectral gradient, one field per axis (multiplier 2 pi i xi_j)."""
    u.check_valid()
    hat = np.fft.fftn(u.values)
    out = []
    for f in u.grid.freqs():
        out.append(ComplexField(u.grid, np.fft.ifftn(2j * np.pi * f * hat)))
    return out


def boundary_mass_fraction(u: ComplexField) -> float:
    """Fraction of total mass within one mesh cell of the box boundary."""
    mod2 = np.abs(u.values) ** 2
    total = np.sum(mod2)
    if total == 0.0:
        return 0.0
    return float(np.sum(mod2[_boundary_mask(u.grid)]) / total)


def save_field(u: ComplexField, path) -> None:
    """Binary dump: 32-byte header (magic, d, N, L) + row-major (re, im) float64 LE."""
    g = u.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FIELD_MAGIC, g.dimension, g.points, g.half_width))
        flat = np.ascontiguousarray(u.values.ravel())
        pairs = np.empty((flat.size, 2), dtype="<f8")
        pairs[:, 0] = flat.real
        pairs[:, 1] = flat.imag
        fh.write(pairs.tobytes())


def load_field(path) -> ComplexField:
    with open(path, "rb") as fh:
        magic, d, n, half_width = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != FIELD_MAGIC:
            raise ValueError(f"not a field dump (bad magic {magic!r})")
        grid = GridSpec(int(d), int(n), float(half_width))
        pairs = np.frombuffer(fh.read(), dtype="<f8").reshape(-1, 2)
    vals = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(grid.shape)
    return ComplexField(grid, vals)

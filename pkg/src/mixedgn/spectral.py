"""Periodic-box discretization and Fourier-multiplier calculus.

The box is ``[-L, L)^dim`` sampled at ``n`` points per axis.  All transforms
use the real FFT over every axis; sums over the half spectrum are weighted
so that Parseval holds exactly.  The continuum transform convention is
``u_hat(xi) = int u(x) exp(-i xi.x) dx`` so that
``seminorm_sq(u, s) = (2 pi)^-N int |xi|^(2s) |u_hat|^2 dxi``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

_FFT_WORKERS = 1


def _rfftn(a):
    return sfft.rfftn(a, workers=_FFT_WORKERS)


def _irfftn(a, shape):
    return sfft.irfftn(a, s=shape, workers=_FFT_WORKERS)


@dataclass(frozen=True)
class SpectralGrid:
    dim: int
    n: int
    half_length: float

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        n = int(self.n)
        if n != self.n or n < 8 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n!r}")
        L = float(self.half_length)
        if not (np.isfinite(L) and L > 0):
            raise ValueError(f"half_length must be positive, got {self.half_length!r}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "half_length", L)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n ** self.dim

    @property
    def volume(self) -> float:
        return (2.0 * self.half_length) ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def axis(self) -> np.ndarray:
        return -self.half_length + self.spacing * np.arange(self.n)

    def coords(self) -> list[np.ndarray]:
        """Open (broadcastable) coordinate arrays, one per axis."""
        x = self.axis()
        out = []
        for d in range(self.dim):
            shp = [1] * self.dim
            shp[d] = self.n
            out.append(x.reshape(shp))
        return out

    def radius_sq(self) -> np.ndarray:
        r2 = np.zeros(self.shape)
        for x in self.coords():
            r2 = r2 + x * x
        return r2

    def freq_axis(self) -> np.ndarray:
        """Angular frequencies ``pi*m/L`` in FFT order."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n) * (np.pi / self.half_length)

    @cached_property
    def _k_parts(self) -> list[np.ndarray]:
        full = self.freq_axis()
        half = np.abs(full[: self.n // 2 + 1])
        parts = []
        for d in range(self.dim):
            shp = [1] * self.dim
            k = half if d == self.dim - 1 else full
            shp[d] = k.size
            parts.append(k.reshape(shp))
        return parts

    @cached_property
    def k_sq(self) -> np.ndarray:
        """``|k|^2`` on the half spectrum."""
        out = np.zeros(self.spectral_shape)
        for k in self._k_parts:
            out = out + k * k
        out.setflags(write=False)
        return out

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @cached_property
    def half_weights(self) -> np.ndarray:
        """Multiplicity of each half-spectrum coefficient in the full spectrum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        shp = [1] * self.dim
        shp[-1] = w.size
        w = np.broadcast_to(w.reshape(shp), self.spectral_shape).copy()
        w.setflags(write=False)
        return w

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule: keep modes with ``|m| <= n/3`` on every axis."""
        m_full = np.abs(np.fft.fftfreq(self.n, d=1.0 / self.n))
        keep_full = m_full <= self.n / 3.0
        keep_half = keep_full[: self.n // 2 + 1]
        mask = np.ones(self.spectral_shape, dtype=bool)
        for d in range(self.dim):
            shp = [1] * self.dim
            k = keep_half if d == self.dim - 1 else keep_full
            shp[d] = k.size
            mask = mask & k.reshape(shp)
        mask.setflags(write=False)
        return mask

    def symbol(self, s: float) -> np.ndarray:
        """Multiplier ``|k|^(2s)`` with ``0^(2s) = 0``."""
        s = _check_order(s)
        cache = self.__dict__.setdefault("_symbol_cache", {})
        sym = cache.get(s)
        if sym is None:
            sym = self.k_sq.copy() if s == 1.0 else self.k_sq ** s
            sym.setflags(write=False)
            cache[s] = sym
        return sym

    @property
    def nyquist(self) -> float:
        return np.pi * self.n / (2.0 * self.half_length)

    def rescaled(self, factor: float) -> "SpectralGrid":
        """Same sampling with the box length divided by ``factor``."""
        return SpectralGrid(self.dim, self.n, self.half_length / factor)

    def spectral_sum(self, sym, uh, vh=None) -> float:
        """Quadrature of ``<u, Op v>`` from half-spectrum coefficients."""
        if vh is None:
            prod = uh.real ** 2 + uh.imag ** 2
        else:
            prod = (np.conj(uh) * vh).real
        if sym is not None:
            prod = prod * sym
        return float(np.sum(self.half_weights * prod)) * self.cell_volume / self.size

    def to_dict(self) -> dict:
        return {"dim": self.dim, "n_per_axis": self.n, "half_length": self.half_length}

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralGrid":
        return cls(d["dim"], d["n_per_axis"], d["half_length"])


def _check_order(s) -> float:
    s = float(s)
    if not 0.0 < s <= 1.0:
        raise ValueError(f"operator order must lie in (0, 1], got {s}")
    return s


class Field:
    """Real samples of a function on a :class:`SpectralGrid` (read-only)."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: SpectralGrid, values):
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.size != grid.size:
            raise ValueError(f"expected {grid.size} values for the grid, got {arr.size}")
        arr = arr.reshape(grid.shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError("field contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    @classmethod
    def _wrap(cls, grid, arr) -> "Field":
        # trusted constructor: arr already has the right shape and dtype
        obj = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("field contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(obj, "grid", grid)
        object.__setattr__(obj, "values", arr)
        return obj

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __mul__(self, c):
        return Field._wrap(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return Field._wrap(self.grid, -self.values)

    def __add__(self, other):
        _same_grid(self, other)
        return Field._wrap(self.grid, self.values + other.values)

    def __sub__(self, other):
        _same_grid(self, other)
        return Field._wrap(self.grid, self.values - other.values)

    def __repr__(self):
        g = self.grid
        return f"Field(dim={g.dim}, n={g.n}, L={g.half_length:g}, max={np.max(np.abs(self.values)):.3g})"


def _same_grid(u: Field, v: Field):
    if u.grid != v.grid:
        raise ValueError("fields live on different grids")


def spectrum(u: Field) -> np.ndarray:
    return _rfftn(u.values)


def from_spectrum(grid: SpectralGrid, uh: np.ndarray) -> Field:
    return Field._wrap(grid, _irfftn(uh, grid.shape))


def apply_multiplier(u: Field, sym: np.ndarray) -> Field:
    return from_spectrum(u.grid, sym * spectrum(u))


def apply_fractional_laplacian(u: Field, order: float) -> Field:
    """``(-Delta)^order u`` as the multiplier ``|k|^(2*order)``."""
    return apply_multiplier(u, u.grid.symbol(order))


def seminorm_sq(u: Field, order: float) -> float:
    """Squared homogeneous seminorm ``<u, (-Delta)^order u>``."""
    g = u.grid
    return g.spectral_sum(g.symbol(order), spectrum(u))


def lp_norm_p(u: Field, p: float) -> float:
    """``int |u|^p dx`` by the periodic trapezoid rule."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(u.values)
    if p == 2.0:
        s = np.sum(a * a)
    else:
        s = np.sum(a ** p)
    return float(s) * u.grid.cell_volume


def mass(u: Field) -> float:
    return lp_norm_p(u, 2.0)


def inner(u: Field, v: Field) -> float:
    _same_grid(u, v)
    return float(np.sum(u.values * v.values)) * u.grid.cell_volume


def power_nonlinearity(u: Field, p: float) -> Field:
    """``|u|^(p-2) u`` evaluated as ``sign(u) |u|^(p-1)`` (zero at zero)."""
    v = u.values
    return Field._wrap(u.grid, np.sign(v) * np.abs(v) ** (p - 1))


def resample(u: Field, zoom: int) -> Field:
    """Samples of ``x -> u(zoom * x)`` on the same box.

    Each Fourier mode ``m`` is relabelled to ``zoom * m``; modes pushed past
    the Nyquist index are dropped, so the result is exact for fields
    band-limited to ``1/zoom`` of the resolved range.
    """
    g = u.grid
    if isinstance(zoom, bool) or int(zoom) != zoom or zoom < 1:
        raise ValueError(f"zoom must be a positive integer, got {zoom!r}")
    zoom = int(zoom)
    if g.n % zoom:
        raise ValueError(f"zoom {zoom} does not divide n = {g.n}")
    if zoom == 1:
        return u
    uh = sfft.fftn(u.values, workers=_FFT_WORKERS)
    out = np.zeros_like(uh)
    m = np.fft.fftfreq(g.n, d=1.0 / g.n).astype(int)
    ok = np.abs(m * zoom) < g.n // 2
    src = np.nonzero(ok)[0]
    dst = (m[src] * zoom) % g.n
    # samples start at -L, so relabelling m -> zoom*m also shifts by (zoom-1)L
    phase = np.where((m[src] * (zoom - 1)) % 2 == 0, 1.0, -1.0)
    coef = uh[np.ix_(*([src] * g.dim))]
    for d in range(g.dim):
        shp = [1] * g.dim
        shp[d] = src.size
        coef = coef * phase.reshape(shp)
    out[np.ix_(*([dst] * g.dim))] = coef
    vals = sfft.ifftn(out, workers=_FFT_WORKERS).real
    return Field._wrap(g, vals)


def dealias(u: Field) -> Field:
    return from_spectrum(u.grid, spectrum(u) * u.grid.dealias_mask)


def boundary_decay(u: Field) -> float:
    """Max of ``|u|`` on the outermost layer of the box over the global max."""
    a = np.abs(u.values)
    top = float(a.max())
    if top == 0.0:
        return 0.0
    edge = 0.0
    for d in range(u.grid.dim):
        edge = max(edge, float(np.take(a, 0, axis=d).max()),
                   float(np.take(a, -1, axis=d).max()))
    return edge / top


def gaussian(grid: SpectralGrid, amplitude: float = 1.0, width: float = 1.0) -> Field:
    """``amplitude * exp(-|x|^2 / (2 width^2))``."""
    return Field._wrap(grid, amplitude * np.exp(-grid.radius_sq() / (2.0 * width ** 2)))


def random_field(grid: SpectralGrid, rng: np.random.Generator, k0: float | None = None) -> Field:
    """Smooth band-limited random field.

    Fourier coefficients are complex Gaussians with variance envelope
    ``exp(-|k|^2/k0^2)``; ``k0`` defaults to a quarter of the Nyquist
    frequency.  The result is scaled to unit mass.
    """
    if k0 is None:
        k0 = grid.nyquist / 4.0
    shape = (grid.n,) * grid.dim
    coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    k2 = np.zeros(shape)
    for d in range(grid.dim):
        shp = [1] * grid.dim
        shp[d] = grid.n
        k2 = k2 + grid.freq_axis().reshape(shp) ** 2
    coef *= np.exp(-k2 / (2.0 * k0 ** 2))
    vals = sfft.ifftn(coef, workers=_FFT_WORKERS).real
    f = Field._wrap(grid, vals)
    m = mass(f)
    if m == 0.0:
        return f
    return f * (1.0 / np.sqrt(m))

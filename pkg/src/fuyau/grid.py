"""Flat-torus grids and spectral calculus.

The torus has complex dimension ``n`` (real dimension ``2n``) with
coordinates ``x^1, ..., x^{2n}`` in ``[0, 2pi)`` and complex coordinates
``z^c = x^{2c+1} + i x^{2c+2}`` (0-based: array axes ``2c`` and ``2c+1``).
Scalar fields are real arrays of shape ``(N,)*2n``; Hermitian fields carry
two trailing matrix axes with the layout ``H[..., a, b] = H_{a-bar b}``.

All derivatives are Fourier multipliers (exact on band-limited data), with
the Nyquist mode zeroed so that first-derivative symbols stay odd and the
discrete integration-by-parts identities hold to roundoff.  Integration is
the plain grid mean, which realizes the unit-volume normalization of the
background measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft

_FFT_WORKERS = 2


def set_fft_workers(count: int) -> None:
    """Cap the worker threads used by the transform layer."""
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(count))


def _fftn(a):
    return scipy.fft.fftn(a, workers=_FFT_WORKERS)


def _ifftn(a):
    return scipy.fft.ifftn(a, workers=_FFT_WORKERS)


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on the 2n-torus with N points per real axis."""

    n: int
    N: int

    def __post_init__(self):
        if not 2 <= self.n <= 4:
            raise ValueError("complex dimension n must be in {2, 3, 4} (dense form storage)")
        if self.N < 4 or self.N % 2 != 0:
            raise ValueError("N must be even and at least 4")

    @property
    def shape(self) -> tuple:
        return (self.N,) * (2 * self.n)

    @property
    def num_points(self) -> int:
        return self.N ** (2 * self.n)

    def axis_coordinate(self, m: int) -> np.ndarray:
        """Coordinate x^{m+1} broadcast over the grid (0-based axis m)."""
        x = 2.0 * np.pi * np.arange(self.N) / self.N
        shape = [1] * (2 * self.n)
        shape[m] = self.N
        return x.reshape(shape)

    @cached_property
    def _wavenumbers(self) -> list:
        k = scipy.fft.fftfreq(self.N) * self.N
        k = k.astype(float)
        k[self.N // 2] = 0.0  # Nyquist zeroed: keeps first-derivative symbols odd
        out = []
        for m in range(2 * self.n):
            shape = [1] * (2 * self.n)
            shape[m] = self.N
            out.append(k.reshape(shape))
        return out

    def zeta(self, c: int) -> np.ndarray:
        """Fourier symbol of d/dz^c (broadcastable over the grid)."""
        k = self._wavenumbers
        return 0.5 * (1j * k[2 * c] + k[2 * c + 1])

    def xi(self, c: int) -> np.ndarray:
        """Fourier symbol of d/dzbar^c."""
        k = self._wavenumbers
        return 0.5 * (1j * k[2 * c] - k[2 * c + 1])

    # -- derivatives ------------------------------------------------------

    def d_dx(self, f, m: int):
        """Real-coordinate spectral derivative along axis m."""
        out = _ifftn(1j * self._wavenumbers[m] * _fftn(f))
        return out.real if np.isrealobj(f) else out

    def d_holo(self, f, c: int) -> np.ndarray:
        """Holomorphic derivative d/dz^c of a scalar (possibly complex) field."""
        return _ifftn(self.zeta(c) * _fftn(f))

    def d_antiholo(self, f, c: int) -> np.ndarray:
        """Antiholomorphic derivative d/dzbar^c."""
        return _ifftn(self.xi(c) * _fftn(f))

    def grad_holo(self, u) -> np.ndarray:
        """All holomorphic derivatives; shape ``grid.shape + (n,)``."""
        hat = _fftn(u)
        out = np.empty(self.shape + (self.n,), dtype=complex)
        for c in range(self.n):
            out[..., c] = _ifftn(self.zeta(c) * hat)
        return out

    def complex_hessian(self, u) -> np.ndarray:
        """Mixed Hessian field ``H[..., a, b] = u_{a-bar b} = d_b d_{a-bar} u``.

        Exactly Hermitian by construction (averaged with its conjugate
        transpose).
        """
        hat = _fftn(u)
        out = np.empty(self.shape + (self.n, self.n), dtype=complex)
        for a in range(self.n):
            for b in range(self.n):
                out[..., a, b] = _ifftn(self.zeta(b) * self.xi(a) * hat)
        return 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))

    def laplacian_real(self, u):
        """Flat 2n-dimensional Laplacian (sum of d^2/dx_m^2)."""
        hat = _fftn(u)
        sym = sum(-k * k for k in self._wavenumbers)
        out = _ifftn(sym * hat)
        return out.real if np.isrealobj(u) else out

    # -- integration and resampling ---------------------------------------

    def integrate(self, f) -> float:
        """Normalized integral: the grid mean (volume form has unit mass)."""
        return float(np.mean(np.real(f)))

    def refine(self, f, N_new: int):
        """Fourier resampling of a scalar field to a finer/coarser grid."""
        if N_new == self.N:
            return np.array(f)
        target = TorusGrid(self.n, N_new)
        hat = _fftn(f) / self.num_points
        out_hat = np.zeros(target.shape, dtype=complex)
        keep = min(self.N, N_new)
        half = keep // 2
        # index sets of retained modes per axis (drop the shared Nyquist slot)
        idx_src = np.r_[0:half, self.N - half + 1 : self.N]
        idx_dst = np.r_[0:half, N_new - half + 1 : N_new]
        src = hat
        for ax in range(2 * self.n):
            src = np.take(src, idx_src, axis=ax)
        slicer = np.ix_(*([idx_dst] * (2 * self.n)))
        out_hat[slicer] = src
        out = scipy.fft.ifftn(out_hat * target.num_points, workers=_FFT_WORKERS)
        return out.real if np.isrealobj(f) else out


@dataclass(frozen=True)
class FieldDump:
    """Header info for the binary field dump format (magic ``FYF1``)."""

    n: int
    N: int
    kind: int  # 0 = real scalar field, 1 = complex Hermitian matrix field
    data: np.ndarray = field(repr=False, default=None)


MAGIC = b"FYF1"
KIND_SCALAR = 0
KIND_HERMITIAN = 1


def write_field(path, grid: TorusGrid, data: np.ndarray) -> None:
    """Write a scalar or Hermitian field dump (little-endian, row-major)."""
    data = np.asarray(data)
    if data.shape == grid.shape:
        kind = KIND_SCALAR
        payload = np.ascontiguousarray(data, dtype="<f8")
    elif data.shape == grid.shape + (grid.n, grid.n):
        kind = KIND_HERMITIAN
        payload = np.ascontiguousarray(data, dtype="<c16")
    else:
        raise ValueError(f"field shape {data.shape} does not match grid {grid}")
    header = MAGIC + np.array([grid.n, grid.N, kind], dtype="<i4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def read_field(path):
    """Read a field dump; returns ``(TorusGrid, array)``."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r} in field dump")
        n, N, kind = np.frombuffer(fh.read(12), dtype="<i4")
        grid = TorusGrid(int(n), int(N))
        raw = fh.read()
    if kind == KIND_SCALAR:
        data = np.frombuffer(raw, dtype="<f8").reshape(grid.shape).copy()
    elif kind == KIND_HERMITIAN:
        data = np.frombuffer(raw, dtype="<c16").reshape(grid.shape + (grid.n, grid.n)).copy()
    else:
        raise ValueError(f"unknown dump kind {kind}")
    return grid, data


def export_scalar_csv(path, grid: TorusGrid, data: np.ndarray, value_name: str = "value") -> None:
    """Flat CSV export of a scalar field: one row per grid point."""
    data = np.asarray(data)
    cols = [c.ravel() for c in np.meshgrid(*[2.0 * np.pi * np.arange(grid.N) / grid.N] * (2 * grid.n), indexing="ij")]
    header = ",".join([f"x{m + 1}" for m in range(2 * grid.n)] + [value_name])
    table = np.column_stack(cols + [data.ravel()])
    np.savetxt(path, table, delimiter=",", header=header, comments="")

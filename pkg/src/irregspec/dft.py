"""The irregular-sample DFT ``J(w) = lam^{d/2} / n sum_j Z(s_j) exp(i s_j.w)``."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import GridMismatchError
from .grid import FrequencyGrid, as_index, frequency
from .models import WeightFunction
from .sampling import SpatialSample
from .serialization import write_csv

WORKERS_ENV = "IRREGSPEC_WORKERS"
_CHUNK_ELEMENTS = 1 << 21


def default_workers() -> int:
    """Worker count from ``IRREGSPEC_WORKERS``, else 1."""
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _dft_rows(locations: np.ndarray, values: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    """Unscaled sums ``sum_j Z_j exp(i s_j.w)`` for each row of ``omegas``.

    Each row is an independent pairwise reduction over ``j``, so the result
    for a frequency does not depend on which other frequencies share the call.
    """
    phase = omegas[:, 0:1] * locations[None, :, 0]
    for i in range(1, locations.shape[1]):
        phase = phase + omegas[:, i:i + 1] * locations[None, :, i]
    re = np.sum(np.cos(phase) * values, axis=1)
    im = np.sum(np.sin(phase) * values, axis=1)
    return re + 1j * im


def dft_many(sample: SpatialSample, omegas, workers: Optional[int] = None) -> np.ndarray:
    """DFT at each row of ``omegas`` (shape ``(m, d)``)."""
    om = np.asarray(omegas, dtype=float).reshape(-1, sample.dim)
    rows = max(1, _CHUNK_ELEMENTS // sample.n)
    chunks = [om[i:i + rows] for i in range(0, om.shape[0], rows)]
    workers = default_workers() if workers is None else max(1, int(workers))
    fn = lambda c: _dft_rows(sample.locations, sample.values, c)  # noqa: E731
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, chunks))
    else:
        parts = [fn(c) for c in chunks]
    scale = sample.lam ** (sample.dim / 2.0) / sample.n
    out = np.concatenate(parts) if parts else np.zeros(0, dtype=complex)
    return out * scale


def dft_at(sample: SpatialSample, omega) -> complex:
    """DFT at a single frequency vector."""
    return complex(dft_many(sample, np.asarray(omega, dtype=float).reshape(1, -1))[0])


@dataclass(frozen=True)
class DftField:
    """DFT ordinates over a :class:`FrequencyGrid`, stored in grid iteration order."""

    grid: FrequencyGrid
    values: np.ndarray = field(repr=False)
    source_n: int

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex).ravel()
        if vals.size != self.grid.size:
            raise ValueError(f"{vals.size} values for a grid of {self.grid.size}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def at(self, k) -> complex:
        return complex(self.values[self.grid.position(k)])

    def periodogram(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def restrict(self, a: int) -> "DftField":
        """Sub-field on the smaller grid ``[-a, a]^d`` (same lam)."""
        if a > self.grid.a:
            raise GridMismatchError(f"cannot restrict a={self.grid.a} grid to a={a}")
        sub = FrequencyGrid(self.grid.dim, a, self.grid.lam)
        off = self.grid.a - a
        full = self.values.reshape((2 * self.grid.a + 1,) * self.grid.dim)
        sl = tuple(slice(off, off + 2 * a + 1) for _ in range(self.grid.dim))
        return DftField(sub, full[sl].ravel(), self.source_n)

    def to_csv(self, path, comment: Optional[str] = None) -> None:
        idx = self.grid.indices()
        header = [f"k{i + 1}" for i in range(self.grid.dim)] + ["re", "im"]
        rows = ([*map(int, k), v.real, v.imag] for k, v in zip(idx, self.values))
        write_csv(path, header, rows, comment)


def _check_grid(sample: SpatialSample, grid: FrequencyGrid) -> None:
    if grid.lam != sample.lam:
        raise GridMismatchError(f"grid lam={grid.lam} differs from sample lam={sample.lam}")
    if grid.dim != sample.dim:
        raise GridMismatchError(f"grid dim={grid.dim} differs from sample dim={sample.dim}")


def dft_grid(sample: SpatialSample, grid: FrequencyGrid, workers: Optional[int] = None) -> DftField:
    """DFT at every grid frequency; results are independent of ``workers``."""
    _check_grid(sample, grid)
    return DftField(grid, dft_many(sample, grid.frequencies(), workers), sample.n)


def ridge_term(sample: SpatialSample, grid: FrequencyGrid, g: WeightFunction, r) -> complex:
    """Diagonal ``j1 = j2`` part of ``Q(g; r)``.

    ``(1/n) sum_k g(w_k) * (1/n) sum_j Z_j^2 exp(-i s_j.w_r)``.
    """
    _check_grid(sample, grid)
    w_r = frequency(grid, as_index(r, grid.dim))
    gsum = np.sum(g(grid.frequencies()))
    z2 = sample.values ** 2
    phase = sample.locations @ w_r
    zsum = np.sum(z2 * np.cos(phase)) - 1j * np.sum(z2 * np.sin(phase))
    return complex(gsum / sample.n * zsum / sample.n)

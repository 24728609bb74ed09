"""Frequency lattices, multi-indices and sinc utilities."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import ConfigError, QuadratureError

MAX_DIM = 3

MultiIndex = tuple
IndexLike = Union[int, Sequence[int], np.ndarray]


def as_index(k: IndexLike, dim: int) -> tuple:
    """Normalise an integer or sequence into a length-``dim`` tuple of ints."""
    if np.isscalar(k):
        k = (k,)
    out = tuple(int(v) for v in np.asarray(k).ravel())
    if len(out) != dim:
        raise ConfigError(f"multi-index {out} does not have {dim} components")
    return out


def shift_index(k: IndexLike, r: IndexLike) -> tuple:
    """Componentwise ``k + r``; the result may lie outside any grid."""
    k = tuple(np.atleast_1d(k).tolist())
    return as_index(np.add(k, np.atleast_1d(r)), len(k))


def negate_index(k: IndexLike) -> tuple:
    k = np.atleast_1d(k)
    return as_index(-k, k.size)


@dataclass(frozen=True)
class FrequencyGrid:
    """Index set ``k in [-a, a]^d`` with frequencies ``2 pi k / lam``.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1 to 3.
    a : int
        Truncation, the grid has ``(2a + 1)^dim`` points.
    lam : float
        Side length of the sampling box.
    """

    dim: int
    a: int
    lam: float

    def __post_init__(self):
        if int(self.dim) != self.dim or not 1 <= self.dim <= MAX_DIM:
            raise ConfigError(f"dim must be 1, 2 or 3, got {self.dim}")
        if int(self.a) != self.a or self.a < 1:
            raise ConfigError(f"a must be a positive integer, got {self.a}")
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise ConfigError(f"lam must be positive, got {self.lam}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "a", int(self.a))
        object.__setattr__(self, "lam", float(self.lam))

    @classmethod
    def fixed_domain(cls, dim: int, C: float, lam: float) -> "FrequencyGrid":
        """Grid with ``a = ceil(C lam)`` so the frequency box stays near ``2 pi [-C, C]^d``."""
        if C <= 0:
            raise ConfigError("C must be positive")
        return cls(dim, int(np.ceil(C * lam - 1e-9)), lam)

    @property
    def size(self) -> int:
        return (2 * self.a + 1) ** self.dim

    @property
    def spacing(self) -> float:
        return 2.0 * np.pi / self.lam

    def __len__(self) -> int:
        return self.size

    def __iter__(self) -> Iterator[tuple]:
        return itertools.product(range(-self.a, self.a + 1), repeat=self.dim)

    def indices(self) -> np.ndarray:
        """All multi-indices as an ``(size, dim)`` integer array in iteration order."""
        axes = [np.arange(-self.a, self.a + 1)] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def frequencies(self) -> np.ndarray:
        """All frequencies as an ``(size, dim)`` array in iteration order."""
        return 2.0 * np.pi * self.indices() / self.lam

    def contains(self, k: IndexLike) -> bool:
        k = as_index(k, self.dim)
        return all(-self.a <= v <= self.a for v in k)

    def position(self, k: IndexLike) -> int:
        """Flat position of ``k`` in iteration order."""
        k = as_index(k, self.dim)
        if not self.contains(k):
            raise IndexError(f"{k} outside grid with a={self.a}")
        pos = 0
        for v in k:
            pos = pos * (2 * self.a + 1) + (v + self.a)
        return pos

    def box_half_width(self) -> float:
        """Half-width ``2 pi a / lam`` of the frequency box covered by the grid."""
        return 2.0 * np.pi * self.a / self.lam


def frequency(grid: FrequencyGrid, k: IndexLike) -> np.ndarray:
    """Return ``2 pi k / lam`` componentwise; ``k`` may lie outside the grid."""
    k = np.asarray(as_index(k, grid.dim), dtype=float)
    return 2.0 * np.pi * k / grid.lam


def sinc(x):
    """``sin(x)/x`` with a Taylor branch near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    x2 = x * x
    out = np.where(small, 1.0 - x2 / 6.0 + x2 * x2 / 120.0, np.sin(safe) / safe)
    return out[()] if out.ndim == 0 else out


def sinc_prod(x, axis: int = -1):
    """Product of ``sinc`` over the components along ``axis``."""
    return np.prod(sinc(np.asarray(x, dtype=float)), axis=axis)


def _simpson(values: np.ndarray, h: float) -> float:
    return h / 3.0 * (values[0] + values[-1] + 4.0 * values[1:-1:2].sum() + 2.0 * values[2:-1:2].sum())


def sinc_cross_integral(shift: float, half_width: float, abs_tol: float = 1e-8,
                        max_level: int = 24) -> float:
    """Integrate ``sinc(u) sinc(u + shift)`` over ``[-half_width, half_width]``.

    Composite Simpson on a dyadically refined mesh; refinement stops when the
    Richardson estimate ``|S_2N - S_N| / 15`` drops below ``abs_tol``.

    Raises
    ------
    QuadratureError
        If ``2^max_level`` panels do not reach the tolerance.
    """
    if half_width <= 0 or abs_tol <= 0:
        raise ConfigError("half_width and abs_tol must be positive")
    lo, hi = -float(half_width), float(half_width)
    level = min(max(4, int(np.ceil(np.log2(half_width))) + 4), max(int(max_level) - 1, 1))
    prev = None
    err = np.inf
    while level <= max_level:
        m = 2 ** level
        u = np.linspace(lo, hi, m + 1)
        val = _simpson(sinc(u) * sinc(u + shift), (hi - lo) / m)
        if prev is not None:
            err = abs(val - prev) / 15.0
            if err < abs_tol:
                return float(val)
        prev = val
        level += 1
    raise QuadratureError("sinc cross integral did not converge", partial=float("nan") if prev is None else float(prev),
                          error_estimate=float(err))

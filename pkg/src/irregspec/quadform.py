"""Quadratic forms of DFT ordinates and the estimators built from them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.integrate
import scipy.stats

from .dft import DftField, _check_grid, dft_many, ridge_term
from .errors import InvalidShiftError, NumericalError, UndersmoothingError
from .grid import FrequencyGrid, as_index, sinc
from .models import WeightFunction, rectangular_window
from .sampling import SpatialSample
from .serialization import write_csv


@dataclass(frozen=True)
class QResult:
    value: complex
    r: tuple
    a: int
    lam: float
    ridge_removed: bool
    weight_name: str


def _positions(grid: FrequencyGrid, idx: np.ndarray) -> np.ndarray:
    pos = np.zeros(idx.shape[0], dtype=np.int64)
    for i in range(grid.dim):
        pos = pos * (2 * grid.a + 1) + (idx[:, i] + grid.a)
    return pos


def shifted_values(dft: DftField, sample: SpatialSample, r) -> np.ndarray:
    """``J(w_{k+r})`` for every grid ``k``; indices leaving the grid are evaluated directly."""
    grid = dft.grid
    r = np.asarray(as_index(r, grid.dim))
    idx = grid.indices() + r
    inside = np.all(np.abs(idx) <= grid.a, axis=1)
    out = np.empty(grid.size, dtype=complex)
    out[inside] = dft.values[_positions(grid, idx[inside])]
    if not inside.all():
        out[~inside] = dft_many(sample, 2.0 * np.pi * idx[~inside] / grid.lam)
    return out


def q_statistic(dft: DftField, sample: SpatialSample, g: WeightFunction, r) -> QResult:
    """``Q(g; r) = lam^{-d} sum_k g(w_k) J(w_k) conj(J(w_{k+r}))``."""
    grid = dft.grid
    _check_grid(sample, grid)
    r = as_index(r, grid.dim)
    terms = g(grid.frequencies()) * dft.values * np.conj(shifted_values(dft, sample, r))
    value = complex(np.sum(terms)) / grid.lam ** grid.dim
    return QResult(value, r, grid.a, grid.lam, False, g.name)


def q_tilde(dft: DftField, sample: SpatialSample, g: WeightFunction, r) -> QResult:
    """``Q(g; r)`` minus its ridge (``j1 = j2``) term."""
    q = q_statistic(dft, sample, g, r)
    value = q.value - ridge_term(sample, dft.grid, g, q.r)
    return QResult(value, q.r, q.a, q.lam, True, g.name)


def covariance_estimator(dft: DftField, v) -> np.ndarray:
    """Tapered covariance estimate ``lam^{-d} sum_k |J_k|^2 exp(i v.w_k) prod_j (1 - |v_j|/lam)_+``.

    ``v`` is one lag vector or an ``(m, d)`` array of lags.
    """
    grid = dft.grid
    v = np.asarray(v, dtype=float)
    single = v.ndim < 2
    v = v.reshape(-1, grid.dim)
    per = dft.periodogram()
    phase = v @ grid.frequencies().T
    re = np.sum(per * np.cos(phase), axis=1)
    im = np.sum(per * np.sin(phase), axis=1)
    scale = np.sum(per)
    if np.any(np.abs(im) > 1e-10 * scale + 1e-300):
        raise NumericalError("covariance estimate has a non-negligible imaginary part; "
                             "is the grid symmetric?")
    taper = np.prod(np.clip(1.0 - np.abs(v) / grid.lam, 0.0, None), axis=1)
    out = re / grid.lam ** grid.dim * taper
    return float(out[0]) if single else out


def covariance_estimator_spectrum(dft: DftField, omega) -> np.ndarray:
    """Fourier transform of :func:`covariance_estimator`, a non-negative sum.

    ``sum_k |J_k|^2 prod_j sinc^2(lam (w_{k,j} - w_j) / 2)``.
    """
    grid = dft.grid
    omega = np.asarray(omega, dtype=float)
    single = omega.ndim < 2
    omega = omega.reshape(-1, grid.dim)
    per = dft.periodogram()
    freqs = grid.frequencies()
    out = np.empty(omega.shape[0])
    for i, w in enumerate(omega):
        kern = np.prod(sinc(grid.lam * (freqs - w) / 2.0) ** 2, axis=1)
        out[i] = np.sum(per * kern)
    return float(out[0]) if single else out


def window_weight(window: WeightFunction, omega, bandwidth: float) -> WeightFunction:
    """``g(x) = W_b(omega - x) = b^{-d} W((omega - x) / b)``."""
    omega = np.asarray(omega, dtype=float).ravel()
    d = omega.size
    return WeightFunction(f"{window.name}:b={bandwidth!r}",
                          lambda x: window((omega - x) / bandwidth) / bandwidth ** d,
                          window.sup_norm / bandwidth ** d, (), False)


def windowed_spectral_estimator(dft: DftField, sample: SpatialSample, omega, window: Optional[WeightFunction] = None,
                                bandwidth: float = 1.0) -> float:
    """Kernel-smoothed periodogram with the ridge bias removed.

    ``(2 pi / lam)^d sum_k W_b(w - w_k) (|J_k|^2 - lam^d n^{-2} sum_j Z_j^2)``,
    i.e. ``(2 pi)^d Q~(W_b(w - .); 0)``.

    Raises
    ------
    UndersmoothingError
        If ``bandwidth`` does not exceed the grid spacing ``2 pi / lam``.
    """
    grid = dft.grid
    if not bandwidth > grid.spacing:
        raise UndersmoothingError(f"bandwidth {bandwidth} must exceed grid spacing 2*pi/lam = {grid.spacing:.6g}")
    window = window or rectangular_window()
    g = window_weight(window, omega, bandwidth)
    q = q_tilde(dft, sample, g, (0,) * grid.dim)
    return float((2.0 * np.pi) ** grid.dim * q.value.real)


@dataclass
class StationarityResult:
    """Per-shift standardized ``Q~(g; r)`` and a combined chi-square statistic.

    ``standardized`` is ``lam^{d/2} Q~ / sqrt(C1)`` (each of Re, Im has variance
    1/2 under stationarity), ``per_component`` is ``lam^{d/2} Q~ / sqrt(C1/2)``
    (each unit variance) and ``c1_scaled`` is ``lam^{d/2} Q~ / C1``.
    ``combined`` sums squared per-component values, approximately chi-square
    with ``dof = 2 m`` degrees of freedom.
    """

    shifts: list
    q_tilde: np.ndarray
    standardized: np.ndarray
    per_component: np.ndarray
    c1_scaled: np.ndarray
    c1: float
    combined: float
    dof: int
    p_value: float
    normalization: str = "per_component"
    meta: dict = field(default_factory=dict)

    def to_csv(self, path, comment: Optional[str] = None) -> None:
        d = len(self.shifts[0]) if self.shifts else 1
        header = [f"r{i + 1}" for i in range(d)] + ["re", "im", "standardized_re", "standardized_im"]
        rows = ([*r, q.real, q.imag, s.real, s.imag]
                for r, q, s in zip(self.shifts, self.q_tilde, self.standardized))
        write_csv(path, header, rows, comment)


def stationarity_statistic(dft: DftField, sample: SpatialSample, g: WeightFunction,
                           r_list: Sequence, c1: float) -> StationarityResult:
    """Standardized ``Q~(g; r)`` over nonzero shifts for testing stationarity.

    Parameters
    ----------
    c1 : float
        Estimate of the variance constant ``C1`` (see :func:`c1_plugin` and
        :func:`c1_model_free`).
    """
    grid = dft.grid
    shifts = [as_index(r, grid.dim) for r in r_list]
    if not shifts:
        raise InvalidShiftError("need at least one shift")
    seen = set()
    for r in shifts:
        if not any(r):
            raise InvalidShiftError("shift r = 0 is not allowed in the stationarity test")
        if r in seen or tuple(-v for v in r) in seen:
            raise InvalidShiftError(f"shift {r} repeats (or negates) an earlier shift")
        seen.add(r)
    if not c1 > 0:
        raise NumericalError(f"C1 must be positive, got {c1}")
    q = np.array([q_tilde(dft, sample, g, r).value for r in shifts])
    root = grid.lam ** (grid.dim / 2.0) * q
    per = root / np.sqrt(c1 / 2.0)
    combined = float(np.sum(per.real ** 2 + per.imag ** 2))
    dof = 2 * len(shifts)
    return StationarityResult(shifts, q, root / np.sqrt(c1), per, root / c1, float(c1), combined,
                              dof, float(scipy.stats.chi2.sf(combined, dof)))


def c1_plugin(model, g: WeightFunction, grid: FrequencyGrid) -> float:
    """``C1`` evaluated by quadrature at a model (for example a Whittle fit)."""
    from .oracle import predict_q_variance
    return float(predict_q_variance(model, g, grid).c1.value.real)


def c1_model_free(dft: DftField, sample: SpatialSample, g: WeightFunction, bandwidth: float,
                  window: Optional[WeightFunction] = None) -> float:
    """``C1`` with ``f`` replaced by the windowed estimate, by the trapezoid rule on the grid."""
    grid = dft.grid
    freqs = grid.frequencies()
    fhat = np.array([windowed_spectral_estimator(dft, sample, w, window, bandwidth) for w in freqs])
    gv = g(freqs)
    integrand = np.real(fhat ** 2 * (np.abs(gv) ** 2 + gv * np.conj(g(-freqs))))
    arr = integrand.reshape((2 * grid.a + 1,) * grid.dim)
    for _ in range(grid.dim):
        arr = scipy.integrate.trapezoid(arr, dx=grid.spacing, axis=0)
    return float(arr) / (2.0 * np.pi) ** grid.dim

"""Discretized Whittle and l2-contrast estimation over log-parameters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.optimize

from .dft import DftField
from .errors import ConfigError, DensityFloorError
from .models import DENSITY_FLOOR, SpectralModel
from .serialization import dumps


def _density_on_grid(dft: DftField, model: SpectralModel, theta, floor: float = DENSITY_FLOOR):
    freqs = dft.grid.frequencies()
    f = model.spectral_density(freqs, theta)
    bad = ~(f >= floor)
    if np.any(bad):
        w = freqs[np.argmax(bad)]
        raise DensityFloorError(f"f(w; theta) below {floor} at w = {w.tolist()}", omega=w)
    return freqs, f


def whittle_objective(dft: DftField, model: SpectralModel, theta,
                      exclude_zero_frequency: bool = False) -> float:
    """``lam^{-d} sum_k (log f(w_k) + |J_k|^2 / f(w_k))``."""
    freqs, f = _density_on_grid(dft, model, theta)
    terms = np.log(f) + dft.periodogram() / f
    if exclude_zero_frequency:
        terms = terms[np.any(freqs != 0, axis=1)]
    return float(np.sum(terms)) / dft.grid.lam ** dft.grid.dim


def l2_objective(dft: DftField, model: SpectralModel, theta) -> float:
    """``lam^{-d} sum_k (|J_k|^2 - f(w_k))^2``."""
    f = model.spectral_density(dft.grid.frequencies(), theta)
    resid = dft.periodogram() - f
    return float(np.sum(resid * resid)) / dft.grid.lam ** dft.grid.dim


def l2_gradient(dft: DftField, model: SpectralModel, theta) -> np.ndarray:
    """``-2 lam^{-d} sum_k grad f(w_k) (|J_k|^2 - f(w_k))``."""
    freqs = dft.grid.frequencies()
    resid = dft.periodogram() - model.spectral_density(freqs, theta)
    grad = model.spectral_gradient(freqs, theta)
    return -2.0 * np.sum(grad * resid[:, None], axis=0) / dft.grid.lam ** dft.grid.dim


@dataclass
class FitResult:
    theta_hat: np.ndarray
    objective_value: float
    iterations: int
    converged: bool
    objective_name: str
    param_names: tuple = ()
    trace: Optional[list] = None
    message: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "theta_hat": [float(t) for t in self.theta_hat],
            "objective": self.objective_name,
            "objective_value": float(self.objective_value),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "message": self.message,
        }
        for name, val in zip(self.param_names, self.theta_hat):
            out[f"{name}_hat"] = float(val)
        out.update(self.extra)
        return out

    def to_json(self) -> str:
        return dumps(self.to_dict())


def minimize(objective: Callable, theta0, max_iters: int = 500, fatol: float = 1e-8,
             xatol: float = 1e-6, trace: bool = False, name: str = "objective",
             param_names: tuple = ()) -> FitResult:
    """Nelder-Mead over ``log theta`` for an objective of positive ``theta``.

    Never raises on non-convergence: ``converged`` is False and the best
    point is returned when ``max_iters`` is exhausted.
    """
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    if np.any(~np.isfinite(theta0)) or np.any(theta0 <= 0):
        raise ConfigError(f"theta0 must be positive, got {theta0.tolist()}")
    log = []

    def fun(x):
        try:
            val = float(objective(np.exp(x)))
        except DensityFloorError:
            return np.inf
        return val if np.isfinite(val) else np.inf

    def callback(xk):
        log.append((np.exp(xk).tolist(), fun(xk)))

    res = scipy.optimize.minimize(fun, np.log(theta0), method="Nelder-Mead",
                                  callback=callback if trace else None,
                                  options={"maxiter": int(max_iters), "fatol": fatol,
                                           "xatol": xatol})
    theta_hat = np.exp(res.x)
    return FitResult(theta_hat, float(objective(theta_hat)), int(res.nit), bool(res.status == 0),
                     name, tuple(param_names), log if trace else None, str(res.message))


def fit_whittle(dft: DftField, model: SpectralModel, theta0=None, exclude_zero_frequency: bool = False,
                **options) -> FitResult:
    """Minimize :func:`whittle_objective` starting from ``theta0`` (default: model.theta)."""
    theta0 = model.theta if theta0 is None else theta0
    res = minimize(lambda th: whittle_objective(dft, model, th, exclude_zero_frequency), theta0,
                   name="whittle", param_names=model.param_names, **options)
    res.extra["exclude_zero_frequency"] = bool(exclude_zero_frequency)
    return res


def fit_l2(dft: DftField, model: SpectralModel, theta0=None, **options) -> FitResult:
    """Minimize :func:`l2_objective` starting from ``theta0`` (default: model.theta)."""
    theta0 = model.theta if theta0 is None else theta0
    return minimize(lambda th: l2_objective(dft, model, th), theta0, name="l2",
                    param_names=model.param_names, **options)


OBJECTIVES = {"whittle": fit_whittle, "l2": fit_l2}

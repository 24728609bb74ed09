"""Parametric covariance / spectral density pairs and weight functions."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DensityFloorError, UnsupportedModelError

DENSITY_FLOOR = 1e-12


def _as_points(x, dim: int) -> np.ndarray:
    """Coerce lags or frequencies into an ``(m, dim)`` float array."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, 1) if dim == 1 else x.reshape(1, -1)
    if x.shape[-1] != dim:
        raise ConfigError(f"expected points with {dim} components, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class SpectralModel:
    """A covariance function and its spectral density, both indexed by ``theta``.

    The pair follows ``c(s) = (2 pi)^{-d} int f(w) exp(i s.w) dw``.

    Attributes
    ----------
    name : str
        Registry name.
    dim : int
        Spatial dimension.
    theta : tuple of float
        Current parameter vector, all entries strictly positive.
    param_names : tuple of str
    envelope : callable, optional
        Decreasing function ``beta(t)`` with ``|d f / d w_j| <= beta(|w|)``.
    markov : callable, optional
        ``theta -> (variance, rate)`` when the d=1 field is an exact
        Ornstein-Uhlenbeck process, enabling O(n) simulation.
    """

    name: str
    dim: int
    theta: tuple
    param_names: tuple
    cov_fn: Callable = field(repr=False)
    spec_fn: Callable = field(repr=False)
    grad_fn: Callable = field(repr=False)
    envelope: Optional[Callable] = field(default=None, repr=False)
    markov: Optional[Callable] = field(default=None, repr=False)

    @property
    def param_count(self) -> int:
        return len(self.theta)

    def _theta(self, theta) -> np.ndarray:
        th = np.asarray(self.theta if theta is None else theta, dtype=float).ravel()
        if th.size != self.param_count:
            raise ConfigError(f"{self.name} expects {self.param_count} parameters, got {th.size}")
        if np.any(~np.isfinite(th)) or np.any(th <= 0):
            raise ConfigError(f"{self.name} parameters must be positive, got {th.tolist()}")
        return th

    def with_theta(self, theta) -> "SpectralModel":
        return replace(self, theta=tuple(float(t) for t in self._theta(theta)))

    def covariance(self, s, theta=None) -> np.ndarray:
        """``c(s; theta)`` for lags of shape ``(m, d)`` (or scalars when d=1)."""
        pts = _as_points(s, self.dim)
        out = self.cov_fn(pts, self._theta(theta))
        return out[0] if np.ndim(s) == 0 or (np.ndim(s) == 1 and self.dim > 1) else out

    def spectral_density(self, omega, theta=None) -> np.ndarray:
        """``f(omega; theta)`` for frequencies of shape ``(m, d)``."""
        pts = _as_points(omega, self.dim)
        out = self.spec_fn(pts, self._theta(theta))
        return out[0] if np.ndim(omega) == 0 or (np.ndim(omega) == 1 and self.dim > 1) else out

    def spectral_gradient(self, omega, theta=None) -> np.ndarray:
        """``grad_theta f`` with shape ``(m, param_count)``."""
        pts = _as_points(omega, self.dim)
        out = self.grad_fn(pts, self._theta(theta))
        return out[0] if np.ndim(omega) == 0 or (np.ndim(omega) == 1 and self.dim > 1) else out

    def variance(self, theta=None) -> float:
        return float(self.covariance(np.zeros(self.dim) if self.dim > 1 else 0.0, theta))


def _check_positive(**kwargs):
    for key, val in kwargs.items():
        arr = np.atleast_1d(np.asarray(val, dtype=float))
        if arr.size == 0 or np.any(~np.isfinite(arr)) or np.any(arr <= 0):
            raise ConfigError(f"{key} must be positive, got {val}")


def exponential_model(phi: float = 1.0, dim: int = 1) -> SpectralModel:
    """``c(s) = phi exp(-|s|)`` with its exact spectral density.

    ``f(w) = 2 phi / (1 + w^2)`` for d=1 and ``2 pi phi / (1 + |w|^2)^{3/2}``
    for d=2.
    """
    if dim not in (1, 2):
        raise UnsupportedModelError(f"exponential model supports dim 1 or 2, got {dim}")
    _check_positive(phi=phi)
    const = 2.0 if dim == 1 else 2.0 * np.pi
    power = 1.0 if dim == 1 else 1.5

    def cov(s, th):
        return th[0] * np.exp(-np.sqrt(np.sum(s * s, axis=1)))

    def spec(w, th):
        return th[0] * const / (1.0 + np.sum(w * w, axis=1)) ** power

    def grad(w, th):
        return (const / (1.0 + np.sum(w * w, axis=1)) ** power)[:, None]

    if dim == 1:
        def envelope(t, th=None):
            return 4.0 * _phi(th, phi) / (1.0 + np.asarray(t) ** 2) ** 1.5
        markov = lambda th: (float(th[0]), 1.0)  # noqa: E731
    else:
        def envelope(t, th=None):
            return 6.0 * np.pi * _phi(th, phi) / (1.0 + np.asarray(t) ** 2) ** 2
        markov = None
    return SpectralModel("exponential", dim, (float(phi),), ("phi",), cov, spec, grad,
                         envelope=envelope, markov=markov)


def _phi(th, default):
    return default if th is None else float(np.atleast_1d(th)[-1])


def exponential_half_model(phi: float = 1.0, dim: int = 1) -> SpectralModel:
    """Exponential covariance paired with ``f(w) = phi / (1 + w^2)`` in d=1.

    Kept for comparison only: this pair violates ``c(0) = (2 pi)^{-1} int f``
    by a factor of two. For d=2 it coincides with :func:`exponential_model`.
    """
    base = exponential_model(phi, dim)
    if dim == 2:
        return replace(base, name="exponential-half")

    def spec(w, th):
        return th[0] / (1.0 + w[:, 0] ** 2)

    def grad(w, th):
        return (1.0 / (1.0 + w[:, 0] ** 2))[:, None]

    return replace(base, name="exponential-half", spec_fn=spec, grad_fn=grad,
                   envelope=None)


def scale_separable_model(alpha_params, phi: float = 1.0, dim: Optional[int] = None) -> SpectralModel:
    """Separable exponential ``c(s) = phi prod_j exp(-alpha_j |s_j|)``.

    The parameter vector is ``(alpha_1, ..., alpha_d, phi)`` and
    ``f(w) = phi prod_j 2 alpha_j / (alpha_j^2 + w_j^2)``.
    """
    alpha = np.atleast_1d(np.asarray(alpha_params, dtype=float))
    if dim is None:
        dim = alpha.size
    if alpha.size == 1 and dim > 1:
        alpha = np.repeat(alpha, dim)
    if alpha.size != dim or not 1 <= dim <= 3:
        raise UnsupportedModelError(f"need {dim} decay rates with dim in 1..3")
    _check_positive(alpha_params=alpha, phi=phi)

    def cov(s, th):
        return th[-1] * np.exp(-np.sum(th[:-1] * np.abs(s), axis=1))

    def factors(w, th):
        al = th[:-1]
        return 2.0 * al / (al * al + w * w)

    def spec(w, th):
        return th[-1] * np.prod(factors(w, th), axis=1)

    def grad(w, th):
        al = th[:-1]
        fac = factors(w, th)
        f = th[-1] * np.prod(fac, axis=1)
        # d/d alpha of log(2a/(a^2+w^2)) = 1/a - 2a/(a^2+w^2)
        dlog = 1.0 / al - 2.0 * al / (al * al + w * w)
        return np.column_stack([f[:, None] * dlog, f / th[-1]])

    markov = (lambda th: (float(th[-1]), float(th[0]))) if dim == 1 else None
    names = tuple(f"alpha{j + 1}" for j in range(dim)) + ("phi",)
    theta = tuple(float(a) for a in alpha) + (float(phi),)
    return SpectralModel("separable-exponential", dim, theta, names, cov, spec, grad,
                         markov=markov)


MODEL_REGISTRY = {
    "exponential": lambda dim, params: exponential_model(params.get("phi", 1.0), dim),
    "exponential-half":
        lambda dim, params: exponential_half_model(params.get("phi", 1.0), dim),
    "separable-exponential":
        lambda dim, params: scale_separable_model(params.get("alpha", [1.0] * dim),
                                                  params.get("phi", 1.0), dim),
}


def make_model(name: str, dim: int, params: Optional[dict] = None) -> SpectralModel:
    """Build a registered model from its name and a parameter mapping."""
    if name not in MODEL_REGISTRY:
        raise UnsupportedModelError(f"unknown model {name!r}; known: {sorted(MODEL_REGISTRY)}")
    return MODEL_REGISTRY[name](int(dim), dict(params or {}))


@dataclass(frozen=True)
class WeightFunction:
    """Complex-valued weight ``g(omega)`` with a declared sup-norm bound.

    Attributes
    ----------
    name : str
    func : callable
        Maps an ``(m, d)`` array of frequencies to ``m`` complex values.
    sup_norm : float
        Declared bound on ``|g|``; ``inf`` when ``g`` is only bounded on compacts.
    breakpoints : tuple of float
        Per-axis locations where ``g`` is not smooth; quadrature splits there.
    real_even : bool
        True when ``g`` is real and ``g(w) = g(-w)``.
    """

    name: str
    func: Callable = field(repr=False)
    sup_norm: float = np.inf
    breakpoints: tuple = ()
    real_even: bool = False

    def __call__(self, omega) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        pts = omega if omega.ndim == 2 else omega.reshape(1, -1) if omega.ndim == 1 else omega.reshape(1, 1)
        out = np.asarray(self.func(pts), dtype=complex)
        if out.shape == ():
            out = np.full(pts.shape[0], out)
        return out[0] if omega.ndim < 2 else out

    def scaled(self, alpha: complex) -> "WeightFunction":
        g = self.func
        return WeightFunction(f"{alpha}*{self.name}", lambda w: alpha * np.asarray(g(w)),
                              abs(alpha) * self.sup_norm, self.breakpoints,
                              self.real_even and np.isreal(alpha))

    def check_bound(self, omega, rtol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self(omega)) <= self.sup_norm * (1 + rtol)))


def constant_weight(value: float = 1.0) -> WeightFunction:
    value = float(value)
    return WeightFunction("one" if value == 1.0 else f"constant:{value!r}",
                          lambda w: np.full(w.shape[0], value, dtype=complex),
                          abs(value), (), True)


def indicator_weight(cutoff: float) -> WeightFunction:
    """``g(w) = 1`` when every ``|w_j| <= cutoff``, else 0."""
    if not cutoff > 0:
        raise ConfigError("indicator cutoff must be positive")
    cutoff = float(cutoff)
    return WeightFunction(f"indicator:{cutoff!r}",
                          lambda w: np.all(np.abs(w) <= cutoff, axis=1).astype(complex),
                          1.0, (-cutoff, cutoff), True)


def inverse_spectral_weight(model: SpectralModel, floor: float = DENSITY_FLOOR) -> WeightFunction:
    """``g(w) = 1 / f(w; theta)``; raises when ``f`` drops below ``floor``."""

    def func(w):
        f = model.spectral_density(w)
        bad = f < floor
        if np.any(bad):
            raise DensityFloorError(f"spectral density below {floor} at {w[bad][0].tolist()}",
                                    omega=w[bad][0])
        return (1.0 / f).astype(complex)

    return WeightFunction("inverse-spectral", func, np.inf, (), True)


def rectangular_window() -> WeightFunction:
    """Product box window, 1 on ``[-1/2, 1/2]^d``."""
    return WeightFunction("rectangular",
                          lambda x: np.all(np.abs(x) <= 0.5, axis=1).astype(complex),
                          1.0, (-0.5, 0.5), True)


def triangular_window() -> WeightFunction:
    """Product Bartlett window ``prod_j 2 (1 - 2|x_j|)_+`` with unit integral per axis."""
    return WeightFunction("triangular",
                          lambda x: np.prod(2.0 * np.clip(1.0 - 2.0 * np.abs(x), 0.0, None),
                                            axis=1).astype(complex),
                          2.0, (-0.5, 0.0, 0.5), True)


WINDOWS = {"rectangular": rectangular_window, "triangular": triangular_window}


def weight_from_spec(spec: str, model: Optional[SpectralModel] = None) -> WeightFunction:
    """Parse ``"one"``, ``"constant:v"``, ``"indicator:c"`` or ``"inverse-spectral"``."""
    name, _, arg = str(spec).partition(":")
    if name == "one":
        return constant_weight()
    if name == "constant":
        return constant_weight(float(arg))
    if name == "indicator":
        return indicator_weight(float(arg))
    if name == "inverse-spectral":
        if model is None:
            raise ConfigError("inverse-spectral weight needs a model")
        return inverse_spectral_weight(model)
    raise ConfigError(f"unknown weight {spec!r}")

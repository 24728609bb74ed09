"""Leading-order predictions for DFT moments and the Q~ statistics.

All integrals are tensor Gauss-Legendre rules on panels split at 0 and at
weight-function breakpoints, cross-checked against a composite Simpson rule.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.signal
from numpy.polynomial.legendre import leggauss

from .errors import ConfigError, QuadratureError
from .grid import FrequencyGrid, as_index, frequency
from .models import SpectralModel, WeightFunction
from .sampling import SamplingDensity

GL_NODES = {1: 256, 2: 256, 3: 48}
SIMPSON_POINTS = {1: 16385, 2: 513, 3: 65}
AGREEMENT_RTOL = 1e-6


@dataclass(frozen=True)
class AsymptoticPrediction:
    """A point prediction with its quadrature error and the order of neglected terms."""

    target: str
    value: complex
    quadrature_error_estimate: float = 0.0
    regime: str = "increasing_domain"
    order_tag: str = ""
    valid: bool = True
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------- quadrature


def _panels(lo: float, hi: float, splits: Sequence[float]) -> np.ndarray:
    pts = {float(lo), float(hi)}
    pts.update(float(s) for s in splits if lo < s < hi)
    return np.array(sorted(pts))


def _gauss_axis(lo, hi, splits, nodes):
    x, w = leggauss(nodes)
    edges = _panels(lo, hi, splits)
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (b - a) * x + 0.5 * (b + a))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


def _simpson_axis(lo, hi, splits, points):
    points = points + (points + 1) % 2
    edges = _panels(lo, hi, splits)
    base = np.ones(points)
    base[1:-1:2] = 4.0
    base[2:-1:2] = 2.0
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        xs.append(np.linspace(a, b, points))
        ws.append(base * (b - a) / (points - 1) / 3.0)
    return np.concatenate(xs), np.concatenate(ws)


def tensor_integral(func: Callable, lo, hi, splits=None, rule: str = "gauss",
                    size: Optional[int] = None, chunk: int = 1 << 20) -> complex:
    """Integrate ``func`` (``(m, d)`` points to ``m`` values) over a box.

    Parameters
    ----------
    lo, hi : sequence of float
        Box corners.
    splits : sequence of sequences, optional
        Interior split points per axis.
    rule : {"gauss", "simpson"}
    size : int, optional
        Nodes per panel per axis.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    d = lo.size
    if np.any(hi < lo):
        raise ConfigError("box with hi < lo")
    if np.any(hi == lo):
        return 0j
    splits = splits if splits is not None else [()] * d
    if rule == "gauss":
        axes = [_gauss_axis(lo[i], hi[i], splits[i], size or GL_NODES[d]) for i in range(d)]
    elif rule == "simpson":
        axes = [_simpson_axis(lo[i], hi[i], splits[i], size or SIMPSON_POINTS[d]) for i in range(d)]
    else:
        raise ConfigError(f"unknown rule {rule!r}")
    if d == 1:
        x, w = axes[0]
        return complex(np.sum(np.asarray(func(x[:, None]), dtype=complex) * w))
    # iterate over the first axis to bound memory, tensor the rest
    rest_x = np.stack([m.ravel() for m in np.meshgrid(*[ax[0] for ax in axes[1:]], indexing="ij")], axis=1)
    rest_w = np.prod(np.stack([m.ravel() for m in np.meshgrid(*[ax[1] for ax in axes[1:]], indexing="ij")],
                              axis=1), axis=1)
    total = 0j
    rows = max(1, chunk // rest_x.shape[0])
    x0, w0 = axes[0]
    for i in range(0, x0.size, rows):
        xa = x0[i:i + rows]
        pts = np.column_stack([np.repeat(xa, rest_x.shape[0]), np.tile(rest_x, (xa.size, 1))])
        vals = np.asarray(func(pts), dtype=complex).reshape(xa.size, -1)
        total += np.sum((vals @ rest_w) * w0[i:i + rows])
    return complex(total)


def checked_integral(func: Callable, lo, hi, splits=None, rtol: float = AGREEMENT_RTOL,
                     strict: bool = False) -> tuple:
    """Gauss-Legendre value, its distance to a Simpson value, and a validity flag.

    Raises
    ------
    QuadratureError
        When ``strict`` and the two rules disagree beyond ``rtol``.
    """
    gauss = tensor_integral(func, lo, hi, splits, "gauss")
    simpson = tensor_integral(func, lo, hi, splits, "simpson")
    err = abs(gauss - simpson)
    valid = err <= rtol * max(abs(gauss), 1e-300) or err <= 1e-14
    if strict and not valid:
        raise QuadratureError(f"Gauss and Simpson rules disagree by {err:.3g}", partial=gauss,
                              error_estimate=err)
    return gauss, float(err), bool(valid)


# --------------------------------------------------------------- helpers


REGIMES = ("increasing_domain", "fixed_domain")


def _regime(regime: str) -> str:
    aliases = {"increasing": "increasing_domain", "fixed": "fixed_domain"}
    regime = aliases.get(regime, regime)
    if regime not in REGIMES:
        raise ConfigError(f"unknown regime {regime!r}")
    return regime


def box_half_width(grid: FrequencyGrid, regime: str = "increasing_domain", C: Optional[float] = None) -> float:
    """``2 pi a / lam``, or ``2 pi C`` in the fixed-domain regime when ``C`` is given."""
    if _regime(regime) == "fixed_domain" and C is not None:
        return 2.0 * np.pi * float(C)
    return grid.box_half_width()


def _splits(dim: int, *offsets_lists) -> list:
    out = []
    for i in range(dim):
        pts = {0.0}
        for offs in offsets_lists:
            pts.update(float(o[i]) if np.ndim(o) else float(o) for o in offs)
        out.append(sorted(pts))
    return out


def _weight_splits(g: WeightFunction, dim: int, shift=None) -> list:
    """Per-axis kinks of ``g(w)``, ``g(-w)``, ``g(w + shift)`` and ``g(-w - shift)``."""
    shift = np.zeros(dim) if shift is None else np.asarray(shift, dtype=float)
    out = []
    for i in range(dim):
        pts = {0.0, -float(shift[i])}
        for b in g.breakpoints:
            pts.update({b, -b, b - shift[i], -b - shift[i]})
        out.append(sorted(pts))
    return out


def _integrate(target, func, lo, hi, splits, regime, order_tag, scale=1.0, meta=None):
    val, err, valid = checked_integral(func, lo, hi, splits)
    return AsymptoticPrediction(target, complex(scale * val), float(abs(scale) * err), regime,
                                order_tag, valid, dict(meta or {}))


# -------------------------------------------------------------- uniform


def predict_dft_covariance(model: SpectralModel, grid: FrequencyGrid, k1, k2, n: int) -> AsymptoticPrediction:
    """Leading-order ``cov(J(w_k1), J(w_k2))`` under uniform sampling.

    Diagonal: ``f(w_k) + c(0) lam^d / n``; off-diagonal: 0 with the order tag
    ``1/lam^(d-b)`` where ``b`` counts coinciding components.
    """
    k1, k2 = as_index(k1, grid.dim), as_index(k2, grid.dim)
    if k1 == k2:
        f = float(model.spectral_density(frequency(grid, k1).reshape(1, -1))[0])
        val = f + model.variance() * grid.lam ** grid.dim / n
        return AsymptoticPrediction("dft_cov", complex(val), 0.0, "increasing_domain", "O(1/lam + lam^d/n)")
    b = sum(int(x == y) for x, y in zip(k1, k2))
    return AsymptoticPrediction("dft_cov", 0j, 0.0, "increasing_domain", f"1/lam^{grid.dim - b}",
                                meta={"b": b})


def predict_q_mean(model: SpectralModel, g: WeightFunction, grid: FrequencyGrid, r=0,
                   regime: str = "increasing_domain", C: Optional[float] = None) -> AsymptoticPrediction:
    """``(2 pi)^{-d} int g f`` over the regime's box for ``r = 0``, and 0 otherwise."""
    regime = _regime(regime)
    r = as_index(r, grid.dim)
    if any(r):
        return AsymptoticPrediction("q_mean", 0j, 0.0, regime, "O(1/lam)")
    H = box_half_width(grid, regime, C)
    d = grid.dim
    return _integrate("q_mean", lambda w: g(w) * model.spectral_density(w), [-H] * d, [H] * d,
                      _weight_splits(g, d), regime,
                      "O(1/lam)" if regime == "fixed_domain" else "O(log(lam) log(a)/lam)",
                      (2.0 * np.pi) ** -d, {"half_width": H})


@dataclass(frozen=True)
class VariancePrediction:
    c1: AsymptoticPrediction
    c2: AsymptoticPrediction
    c1_r: Optional[AsymptoticPrediction] = None
    c2_r: Optional[AsymptoticPrediction] = None

    def _pair(self, r) -> tuple:
        c1 = self.c1_r if self.c1_r is not None else self.c1
        c2 = self.c2_r if self.c2_r is not None else self.c2
        c2v = c2.value.real if not any(np.atleast_1d(r)) else 0.0
        return c1.value.real, c2v

    def re_var(self, r) -> float:
        """Prediction for ``lam^d var(Re Q~(g; r))``.

        Uses ``C1(w_r)`` when available; ``C2`` enters only at ``r = 0``.
        """
        c1, c2 = self._pair(r)
        return 0.5 * (c1 + c2)

    def im_var(self, r) -> float:
        c1, c2 = self._pair(r)
        return 0.5 * (c1 - c2)


def predict_q_variance(model: SpectralModel, g: WeightFunction, grid: FrequencyGrid, r=None) -> VariancePrediction:
    """Variance constants ``C1``, ``C2`` and, when ``r`` is given, ``C1(w_r)``, ``C2(w_r)``.

    ``lam^d cov(Q~(r), Q~(r)) -> C1`` and ``lam^d cov(Q~(r), conj Q~(-r)) -> C2``.
    """
    d = grid.dim
    H = grid.box_half_width()
    lo, hi = [-H] * d, [H] * d
    scale = (2.0 * np.pi) ** -d

    def f2(w):
        return model.spectral_density(w) ** 2

    def h_c1(w):
        gw = g(w)
        return f2(w) * (np.abs(gw) ** 2 + gw * np.conj(g(-w)))

    def h_c2(w):
        gw = g(w)
        return f2(w) * (gw * g(-w) + gw * gw)

    sp = _weight_splits(g, d)
    tag = "O(1/lam + lam^d/n)"
    c1 = _integrate("q_var_c1", h_c1, lo, hi, sp, "increasing_domain", tag, scale)
    c2 = _integrate("q_var_c2", h_c2, lo, hi, sp, "increasing_domain", tag, scale)
    if r is None:
        return VariancePrediction(c1, c2)
    r = np.asarray(as_index(r, d))
    wr = 2.0 * np.pi * r / grid.lam
    a = grid.a
    dlo = 2.0 * np.pi * np.maximum(-a, -a - r) / grid.lam
    dhi = 2.0 * np.pi * np.minimum(a, a - r) / grid.lam
    spr = _weight_splits(g, d, wr)

    def ff(w):
        return model.spectral_density(w) * model.spectral_density(w + wr)

    parts = {
        "h1": (lambda w: ff(w) * np.abs(g(w)) ** 2, lo, hi),
        "h2": (lambda w: ff(w) * g(w) * np.conj(g(-w - wr)), dlo, dhi),
        "h3": (lambda w: ff(w) * g(w) * g(-w), lo, hi),
        "h4": (lambda w: ff(w) * g(w) * g(w + wr), dlo, dhi),
    }
    vals = {k: checked_integral(fn, l, h, spr) for k, (fn, l, h) in parts.items()}
    tag_r = f"C_j + O({int(np.abs(r).sum())}/lam)"
    c1r = AsymptoticPrediction("q_var_c1", scale * (vals["h1"][0] + vals["h2"][0]),
                               scale * (vals["h1"][1] + vals["h2"][1]), "increasing_domain", tag_r,
                               vals["h1"][2] and vals["h2"][2], {"r": r.tolist()})
    c2r = AsymptoticPrediction("q_var_c2", scale * (vals["h3"][0] + vals["h4"][0]),
                               scale * (vals["h3"][1] + vals["h4"][1]), "increasing_domain", tag_r,
                               vals["h3"][2] and vals["h4"][2], {"r": r.tolist()})
    return VariancePrediction(c1, c2, c1r, c2r)


# ---------------------------------------------------------- non-uniform


def _conv_power(density: SamplingDensity, power: int) -> np.ndarray:
    c = density.coefficients
    out = c
    for _ in range(power - 1):
        out = scipy.signal.convolve(out, c, method="direct")
    return out


def _lookup(arr: np.ndarray, offset: int, s) -> complex:
    idx = tuple(int(v) + offset for v in s)
    if any(i < 0 or i >= arr.shape[k] for k, i in enumerate(idx)):
        return 0j
    return complex(arr[idx])


def gamma_convolution(density: SamplingDensity, s) -> complex:
    """``sum_j gamma_j gamma_{s - j}``."""
    s = as_index(s, density.dim)
    return _lookup(_conv_power(density, 2), 2 * density.j_max, s)


def fourfold_convolution(density: SamplingDensity, s) -> complex:
    """``sum_{j1+j2+j3+j4 = s} gamma_j1 gamma_j2 gamma_j3 gamma_j4`` via two self-convolutions."""
    s = as_index(s, density.dim)
    c2 = _conv_power(density, 2)
    c4 = scipy.signal.convolve(c2, c2, method="direct")
    return _lookup(c4, 4 * density.j_max, s)


def predict_dft_covariance_nonuniform(model: SpectralModel, density: SamplingDensity, grid: FrequencyGrid,
                                      k1, k2, n: int) -> AsymptoticPrediction:
    """``f(w_k2) sum_j gamma_j gamma_{k2-k1-j} + c(0) gamma_{k2-k1} lam^d / n``."""
    k1, k2 = as_index(k1, grid.dim), as_index(k2, grid.dim)
    s = tuple(b - a for a, b in zip(k1, k2))
    f = float(model.spectral_density(frequency(grid, k2).reshape(1, -1))[0])
    val = f * gamma_convolution(density, s) + model.variance() * density.gamma(s) * grid.lam ** grid.dim / n
    return AsymptoticPrediction("dft_cov", complex(val), 0.0, "increasing_domain", "O(1/lam)",
                                meta={"shift": list(s)})


def predict_q_mean_nonuniform(model: SpectralModel, g: WeightFunction, density: SamplingDensity,
                              grid: FrequencyGrid, r=0, regime: str = "increasing_domain",
                              C: Optional[float] = None) -> AsymptoticPrediction:
    """``<gamma, gamma_{-r}> (2 pi)^{-d} int g f`` over the regime's box."""
    base = predict_q_mean(model, g, grid, (0,) * grid.dim, regime, C)
    conv = gamma_convolution(density, as_index(r, grid.dim))
    return AsymptoticPrediction("nonuniform_mean", conv * base.value, abs(conv) * base.quadrature_error_estimate,
                                base.regime, "O(1/lam)", base.valid, {"gamma_conv": conv})


def predict_q_variance_nonuniform(model: SpectralModel, g: WeightFunction, density: SamplingDensity,
                                  grid: FrequencyGrid, r1, r2) -> dict:
    """The four constants ``U1..U4`` keyed ``"u1"``..``"u4"``.

    ``lam^d cov(Q~(r1), Q~(r2)) ~ U1 + U2`` and
    ``lam^d cov(Q~(r1), conj Q~(r2)) ~ U3 + U4``.
    """
    d = grid.dim
    r1, r2 = np.asarray(as_index(r1, d)), np.asarray(as_index(r2, d))
    H = grid.box_half_width()
    lo, hi = [-H] * d, [H] * d
    sp = _weight_splits(g, d)
    scale = (2.0 * np.pi) ** -d
    w12 = fourfold_convolution(density, r2 - r1)
    w34 = fourfold_convolution(density, r2 + r1)

    def f2(w):
        return model.spectral_density(w) ** 2

    integrands = {
        "u1": (w12, lambda w: np.abs(g(w)) ** 2 * f2(w)),
        "u2": (w12, lambda w: g(w) * np.conj(g(-w)) * f2(w)),
        "u3": (w34, lambda w: g(w) ** 2 * f2(w)),
        "u4": (w34, lambda w: g(w) * g(-w) * f2(w)),
    }
    out = {}
    for key, (weight, fn) in integrands.items():
        val, err, valid = checked_integral(fn, lo, hi, sp)
        out[key] = AsymptoticPrediction(f"nonuniform_var_{key}", complex(scale * weight * val),
                                        float(abs(scale * weight) * err), "increasing_domain",
                                        "O((1+|r1|+|r2|)/lam + lam^d/n)", valid,
                                        {"gamma_conv4": weight})
    return out


# ------------------------------------------------ exact finite-lam moments


def _axis_factors(model: SpectralModel) -> tuple:
    """Write ``c(v) = scale * prod_j c_j(v_j)`` when the covariance factorises."""
    th = np.asarray(model.theta)
    if model.dim == 1:
        return 1.0, [lambda v: model.covariance(v[:, None] if np.ndim(v) == 1 else v)]
    if model.name == "separable-exponential":
        return float(th[-1]), [(lambda v, al=al: np.exp(-al * np.abs(v))) for al in th[:-1]]
    raise ConfigError("exact finite-lam moments need d = 1 or a separable covariance")


def _kernel_nodes(lam: float, width: float = 1.0, nodes: int = 48):
    x, w = leggauss(nodes)
    panels = max(1, int(np.ceil(lam / width)))
    edges = np.linspace(0.0, lam, panels + 1)
    pos = np.concatenate([0.5 * (b - a) * x + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
    wts = np.concatenate([0.5 * (b - a) * w for a, b in zip(edges[:-1], edges[1:])])
    return np.concatenate([-pos[::-1], pos]), np.concatenate([wts[::-1], wts])


def _overlap_phase(v: np.ndarray, lam: float, wr: float) -> np.ndarray:
    """``int exp(-i wr s) ds`` over ``{s : s, s + v in [-lam/2, lam/2]}``."""
    lo = np.maximum(-lam / 2, -lam / 2 - v)
    hi = np.minimum(lam / 2, lam / 2 - v)
    if wr == 0:
        return (hi - lo).astype(complex)
    return (np.exp(-1j * wr * hi) - np.exp(-1j * wr * lo)) / (-1j * wr)


def exact_kernel(model: SpectralModel, lam: float, omegas, wr) -> np.ndarray:
    """``K(w, w_r) = lam^{-d} int c(v) exp(i w.v) prod_j B_j(v_j) dv`` for rows of ``omegas``.

    With uniform sampling and ``w2 = w + w_r``,
    ``E[J(w) conj J(w2)] = c(0) lam^d / n [w_r = 0] + (1 - 1/n) K(w, w_r)``.
    """
    scale, factors = _axis_factors(model)
    omegas = np.asarray(omegas, dtype=float).reshape(-1, model.dim)
    wr = np.atleast_1d(np.asarray(wr, dtype=float))
    v, wv = _kernel_nodes(lam)
    out = np.full(omegas.shape[0], scale, dtype=complex)
    for j, cj in enumerate(factors):
        weights = cj(v) * _overlap_phase(v, lam, float(wr[j])) * wv / lam
        out *= np.exp(1j * np.outer(omegas[:, j], v)) @ weights
    return out


def exact_dft_moment(model: SpectralModel, grid: FrequencyGrid, k1, k2, n: int) -> complex:
    """Exact ``E[J(w_k1) conj J(w_k2)]`` (the covariance, as the field has mean zero)."""
    k1, k2 = as_index(k1, grid.dim), as_index(k2, grid.dim)
    s = tuple(b - a for a, b in zip(k1, k2))
    diag = model.variance() * grid.lam ** grid.dim / n if not any(s) else 0.0
    K = exact_kernel(model, grid.lam, frequency(grid, k1), frequency(grid, s))[0]
    return complex(diag + (1.0 - 1.0 / n) * K)


def exact_q_mean(model: SpectralModel, g: WeightFunction, grid: FrequencyGrid, r, n: int) -> complex:
    """Exact ``E[Q~(g; r)]`` under uniform sampling at finite ``lam``, ``a`` and ``n``."""
    r = as_index(r, grid.dim)
    freqs = grid.frequencies()
    K = exact_kernel(model, grid.lam, freqs, frequency(grid, r))
    return complex((1.0 - 1.0 / n) * np.sum(g(freqs) * K) / grid.lam ** grid.dim)

"""Location samplers and Gaussian random field simulation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import (ConfigError, CsvParseError, DataError, EnvelopeFailureError,
                     InvalidDensityError, NotPositiveDefiniteError)
from .models import SpectralModel
from .serialization import dumps, read_csv, write_csv

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)
CHOLESKY_MAX_N = 10_000


# --------------------------------------------------------------------- RNG


def make_rng(seed) -> np.random.Generator:
    """Philox generator from an int, a ``SeedSequence`` or an existing generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def stream_pair(seed) -> tuple:
    """Independent (locations, field) generators derived from one seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    loc, fld = ss.spawn(2)
    return make_rng(loc), make_rng(fld)


def replicate_seed(root_seed: int, index: int) -> np.random.SeedSequence:
    """Seed for replicate ``index``; identical to ``SeedSequence(root).spawn(...)[index]``."""
    return np.random.SeedSequence(int(root_seed), spawn_key=(int(index),))


# ----------------------------------------------------------------- density


def _parse_key(key, dim: int) -> tuple:
    if isinstance(key, str):
        key = [int(v) for v in key.replace("(", "").replace(")", "").split(",") if v.strip()]
    key = tuple(int(v) for v in np.atleast_1d(key))
    if len(key) != dim:
        raise InvalidDensityError(f"coefficient index {key} does not have {dim} components")
    return key


class SamplingDensity:
    """Location density ``h`` on the unit torus given by Fourier coefficients.

    ``h(u) = sum_j gamma_j exp(i 2 pi j.u)`` for ``u`` in ``[-1/2, 1/2]^d``;
    locations then have density ``lam^{-d} h(s / lam)``.

    Parameters
    ----------
    dim : int
    gamma : dict
        Multi-index (int, tuple or ``"j1,j2"`` string) to complex coefficient.
    j_max : int
        Coefficients with ``max |j_i| > j_max`` are dropped.
    decay_constant : float, optional
        If given, require ``|gamma_j| <= C |j|^{-2}`` whenever all ``j_i != 0``.
    """

    def __init__(self, dim: int, gamma: dict, j_max: int = 16,
                 decay_constant: Optional[float] = None, tol: float = 1e-12):
        if dim not in (1, 2, 3):
            raise InvalidDensityError(f"dim must be 1, 2 or 3, got {dim}")
        if j_max < 0:
            raise InvalidDensityError("j_max must be non-negative")
        self.dim = int(dim)
        self.j_max = int(j_max)
        coeffs = np.zeros((2 * j_max + 1,) * dim, dtype=complex)
        self.dropped = 0
        for key, val in gamma.items():
            j = _parse_key(key, dim)
            if max(abs(v) for v in j) > j_max:
                self.dropped += 1
                continue
            if isinstance(val, dict):
                val = complex(val.get("re", 0.0), val.get("im", 0.0))
            coeffs[tuple(v + j_max for v in j)] += complex(val)
        self.coefficients = coeffs
        self.coefficients.flags.writeable = False
        self._validate(decay_constant, tol)

    @classmethod
    def uniform(cls, dim: int) -> "SamplingDensity":
        return cls(dim, {(0,) * dim: 1.0}, j_max=0)

    def gamma(self, j) -> complex:
        j = _parse_key(j, self.dim) if not isinstance(j, tuple) else j
        if max(abs(v) for v in j) > self.j_max:
            return 0j
        return complex(self.coefficients[tuple(v + self.j_max for v in j)])

    def nonzero(self) -> tuple:
        """Indices ``(m, d)`` and values of the nonzero coefficients."""
        idx = np.argwhere(self.coefficients != 0)
        return idx - self.j_max, self.coefficients[tuple(idx.T)]

    @property
    def is_uniform(self) -> bool:
        idx, _ = self.nonzero()
        return idx.shape[0] == 1 and not idx.any()

    @property
    def l2_norm_sq(self) -> float:
        """``sum_j |gamma_j|^2``, equal to ``int h^2``."""
        return float(np.sum(np.abs(self.coefficients) ** 2))

    def evaluate(self, u) -> np.ndarray:
        """``h(u)`` for points of shape ``(m, d)`` in torus coordinates."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if self.dim == 1 and u.shape[0] == 1 and u.shape[1] != 1:
            u = u.T
        idx, vals = self.nonzero()
        phase = 2.0 * np.pi * (u @ idx.T)
        return np.real(np.exp(1j * phase) @ vals)

    def lattice_values(self, size: int) -> np.ndarray:
        """``h`` on the ``size^d`` lattice ``u = m / size``, via an inverse FFT."""
        size = max(int(size), 2 * self.j_max + 2)
        arr = np.zeros((size,) * self.dim, dtype=complex)
        idx, vals = self.nonzero()
        arr[tuple((idx % size).T)] = vals
        return np.real(np.fft.ifftn(arr) * size ** self.dim)

    def sup_bound(self) -> float:
        """Rejection envelope: 5% above the maximum of ``h`` on a fine lattice."""
        size = 256 if self.dim <= 2 else 64
        return 1.05 * float(self.lattice_values(size).max())

    def _validate(self, decay_constant, tol):
        if abs(self.gamma((0,) * self.dim) - 1.0) > tol:
            raise InvalidDensityError(f"gamma_0 must equal 1, got {self.gamma((0,) * self.dim)}")
        flipped = np.conj(self.coefficients[(slice(None, None, -1),) * self.dim])
        if np.max(np.abs(flipped - self.coefficients)) > tol:
            raise InvalidDensityError("coefficients are not Hermitian (gamma_-j != conj gamma_j)")
        if decay_constant is not None:
            idx, vals = self.nonzero()
            full = np.all(idx != 0, axis=1)
            norm2 = np.sum(idx[full] ** 2, axis=1)
            if np.any(np.abs(vals[full]) > decay_constant / norm2 * (1 + tol)):
                raise InvalidDensityError("coefficients violate the decay bound C |j|^-2")
        low = float(self.lattice_values(64).min())
        if low < -1e-12:
            raise InvalidDensityError(f"density is negative on the check lattice (min {low:.3g})")

    def to_dict(self) -> dict:
        idx, vals = self.nonzero()
        gamma = {",".join(str(int(v)) for v in j): (float(c.real) if c.imag == 0
                                                      else {"re": float(c.real), "im": float(c.imag)})
                 for j, c in zip(idx, vals)}
        return {"dim": self.dim, "j_max": self.j_max, "gamma": gamma,
                "l2_norm_sq": self.l2_norm_sq}


# ----------------------------------------------------------------- samples


@dataclass(frozen=True)
class SpatialSample:
    """Field values observed at irregular locations in ``[-lam/2, lam/2]^d``."""

    lam: float
    locations: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        loc = np.array(self.locations, dtype=float)
        if loc.ndim == 1:
            loc = loc.reshape(-1, 1)
        val = np.array(self.values, dtype=float).ravel()
        if not self.lam > 0:
            raise DataError(f"lam must be positive, got {self.lam}")
        if loc.shape[0] < 1 or loc.shape[0] != val.size:
            raise DataError(f"need n >= 1 matching rows, got {loc.shape[0]} locations "
                            f"and {val.size} values")
        if not 1 <= loc.shape[1] <= 3:
            raise DataError(f"dimension must be 1..3, got {loc.shape[1]}")
        if not (np.all(np.isfinite(loc)) and np.all(np.isfinite(val))):
            raise DataError("non-finite location or value")
        if np.any(np.abs(loc) > self.lam / 2):
            raise DataError(f"locations outside [-{self.lam / 2}, {self.lam / 2}]")
        loc.flags.writeable = False
        val.flags.writeable = False
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "values", val)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    def with_values(self, values) -> "SpatialSample":
        return SpatialSample(self.lam, self.locations, values, dict(self.metadata))

    def header(self) -> list:
        return [f"s{i + 1}" for i in range(self.dim)] + ["z"]

    def to_csv(self, path, comment: Optional[str] = None) -> None:
        rows = np.column_stack([self.locations, self.values])
        write_csv(path, self.header(), rows, comment)

    def write_metadata(self, path, extra: Optional[dict] = None) -> None:
        meta = {"lambda": self.lam, "dim": self.dim, "n": self.n}
        meta.update(self.metadata)
        meta.update(extra or {})
        Path(path).write_text(dumps(meta), encoding="utf-8")

    @classmethod
    def from_csv(cls, path, lam: Optional[float] = None, metadata_path=None) -> "SpatialSample":
        """Read a sample CSV; ``lam`` defaults to the metadata sidecar value."""
        header, data = read_csv(path)
        if len(header) < 2 or header[-1] != "z" or header[:-1] != [f"s{i + 1}" for i in range(len(header) - 1)]:
            raise CsvParseError(f"header must be s1,...,sd,z, got {','.join(header)}", line=1)
        meta = {}
        side = Path(metadata_path) if metadata_path else Path(str(path) + ".json")
        if side.exists():
            meta = json.loads(side.read_text(encoding="utf-8"))
        if lam is None:
            lam = meta.get("lambda")
            if lam is None:
                raise DataError("lambda not given and no metadata sidecar found")
        if data.shape[0] == 0:
            raise DataError(f"{path} contains no observations")
        return cls(float(lam), data[:, :-1], data[:, -1], meta)


def sample_uniform_locations(n: int, lam: float, dim: int, seed) -> np.ndarray:
    """``n`` i.i.d. uniform points on ``[-lam/2, lam/2]^dim``."""
    if n < 1 or not lam > 0 or dim not in (1, 2, 3):
        raise ConfigError(f"invalid design n={n}, lam={lam}, dim={dim}")
    rng = make_rng(seed)
    return rng.uniform(-lam / 2, lam / 2, size=(int(n), int(dim)))


def sample_density_locations(n: int, lam: float, density: SamplingDensity, seed,
                             min_acceptance: float = 0.01) -> np.ndarray:
    """``n`` i.i.d. points with density ``lam^{-d} h(s / lam)`` by rejection.

    Proposals are uniform on the box and accepted with probability
    ``h(u) / M`` where ``M`` is :meth:`SamplingDensity.sup_bound`.
    """
    if n < 1 or not lam > 0:
        raise ConfigError(f"invalid design n={n}, lam={lam}")
    rng = make_rng(seed)
    bound = density.sup_bound()
    dim = density.dim
    batch = max(1024, 2 * int(n))
    accepted = []
    total = 0
    proposed = 0
    while total < n:
        u = rng.uniform(-0.5, 0.5, size=(batch, dim))
        keep = rng.uniform(0.0, bound, size=batch) < density.evaluate(u)
        proposed += batch
        accepted.append(u[keep])
        total += int(keep.sum())
        if total < min_acceptance * proposed:
            raise EnvelopeFailureError(f"acceptance rate {total / proposed:.2%} below "
                                       f"{min_acceptance:.0%}; density too spiky")
    return np.concatenate(accepted)[:n] * lam


# ------------------------------------------------------------------ fields


def covariance_matrix(locations: np.ndarray, model: SpectralModel, block: int = 4_000_000) -> np.ndarray:
    """Dense ``C_ij = c(s_i - s_j)`` assembled in row blocks."""
    loc = np.asarray(locations, dtype=float)
    n, d = loc.shape
    out = np.empty((n, n))
    rows = max(1, block // max(1, n * d))
    for i in range(0, n, rows):
        lag = (loc[i:i + rows, None, :] - loc[None, :, :]).reshape(-1, d)
        out[i:i + rows] = model.covariance(lag).reshape(-1, n)
    return out


def cholesky_factor(cov: np.ndarray, c0: float, jitter: Optional[float] = None) -> tuple:
    """Lower Cholesky factor of ``cov + jitter I``.

    With ``jitter=None`` the ladder ``0, 1e-10, 1e-8, 1e-6`` (times ``c0``) is
    tried in order; an explicit value is used as given.

    Returns
    -------
    L : ndarray
    used : float
        The absolute jitter that succeeded.
    """
    ladder = [j * c0 for j in JITTER_LADDER] if jitter is None else [float(jitter)]
    n = cov.shape[0]
    for jit in ladder:
        try:
            L = scipy.linalg.cholesky(cov + jit * np.eye(n), lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, jit
    raise NotPositiveDefiniteError(f"covariance not positive definite with jitter up to {ladder[-1]:.3g}")


def _markov_values(locations: np.ndarray, variance: float, rate: float, xi: np.ndarray) -> np.ndarray:
    """Exact Ornstein-Uhlenbeck values at sorted-then-unsorted 1-d locations.

    ``z_i = rho_i z_{i-1} + sqrt(v (1 - rho_i^2)) xi_i`` with
    ``rho_i = exp(-rate (s_i - s_{i-1}))``, evaluated as a scaled cumulative sum
    in segments short enough that ``exp(rate * span)`` cannot overflow.
    """
    s = locations[:, 0]
    order = np.argsort(s, kind="stable")
    ss = s[order]
    rho = np.exp(-rate * np.diff(ss))
    scale = np.sqrt(variance) * np.concatenate([[1.0], np.sqrt(-np.expm1(-2.0 * rate * np.diff(ss)))])
    e = scale * xi[..., order]
    z = np.empty_like(e)
    start = 0
    carry = None
    n = ss.size
    while start < n:
        stop = int(np.searchsorted(ss, ss[start] + 300.0 / rate, side="right"))
        stop = max(stop, start + 1)
        t = rate * (ss[start:stop] - ss[start])
        acc = np.cumsum(e[..., start:stop] * np.exp(t), axis=-1)
        if carry is not None:
            acc = acc + (carry * rho[start - 1])[..., None]
        z[..., start:stop] = acc * np.exp(-t)
        carry = z[..., stop - 1]
        start = stop
    out = np.empty_like(z)
    out[..., order] = z
    return out


def field_values(locations, model: SpectralModel, rng, jitter: Optional[float] = None,
                 method: str = "cholesky", size: Optional[int] = None) -> tuple:
    """Draw zero-mean Gaussian values at ``locations``.

    Parameters
    ----------
    method : {"cholesky", "markov", "auto"}
        ``markov`` is exact for d=1 models that declare an Ornstein-Uhlenbeck
        form; ``auto`` uses it when available and Cholesky otherwise.
    size : int, optional
        Number of independent draws; output shape is ``(size, n)``.

    Returns
    -------
    values : ndarray
    info : dict
        ``method`` actually used and ``jitter`` applied.
    """
    loc = np.asarray(locations, dtype=float)
    if loc.ndim == 1:
        loc = loc.reshape(-1, 1)
    n = loc.shape[0]
    if loc.shape[1] != model.dim:
        raise ConfigError(f"locations have dim {loc.shape[1]}, model has {model.dim}")
    rng = make_rng(rng)
    markov_ok = model.dim == 1 and model.markov is not None
    if method == "auto":
        method = "markov" if markov_ok else "cholesky"
    shape = (n,) if size is None else (int(size), n)
    if method == "markov":
        if not markov_ok:
            raise ConfigError(f"model {model.name} in d={model.dim} has no Markov form")
        variance, rate = model.markov(np.asarray(model.theta))
        xi = rng.standard_normal(shape)
        return _markov_values(loc, variance, rate, xi), {"method": "markov", "jitter": 0.0}
    if method != "cholesky":
        raise ConfigError(f"unknown simulation method {method!r}")
    if n > CHOLESKY_MAX_N:
        raise ConfigError(f"dense Cholesky limited to n <= {CHOLESKY_MAX_N}, got {n}")
    c0 = model.variance()
    L, used = cholesky_factor(covariance_matrix(loc, model), c0, jitter)
    xi = rng.standard_normal(shape)
    vals = xi @ L.T if size is not None else L @ xi
    return vals, {"method": "cholesky", "jitter": used}


def simulate_gaussian_field(locations, model: SpectralModel, lam: float, jitter: Optional[float] = None,
                            seed=None, method: str = "cholesky") -> SpatialSample:
    """Simulate a stationary Gaussian field with covariance ``model`` at ``locations``."""
    vals, info = field_values(locations, model, seed, jitter=jitter, method=method)
    meta = {"model": model.name, "theta": list(model.theta), "jitter_used": info["jitter"],
            "method": info["method"]}
    if isinstance(seed, (int, np.integer)):
        meta["seed"] = int(seed)
    return SpatialSample(lam, locations, vals, meta)


def simulate_sample(n: int, lam: float, model: SpectralModel, seed, density: Optional[SamplingDensity] = None,
                    jitter: Optional[float] = None, method: str = "cholesky") -> SpatialSample:
    """Draw locations then field values from independent streams of ``seed``."""
    loc_rng, field_rng = stream_pair(seed)
    if density is None or density.is_uniform:
        loc = sample_uniform_locations(n, lam, model.dim, loc_rng)
    else:
        if density.dim != model.dim:
            raise ConfigError("density and model dimensions differ")
        loc = sample_density_locations(n, lam, density, loc_rng)
    vals, info = field_values(loc, model, field_rng, jitter=jitter, method=method)
    meta = {"model": model.name, "theta": list(model.theta), "jitter_used": info["jitter"],
            "method": info["method"],
            "density": None if density is None else density.to_dict()}
    if isinstance(seed, (int, np.integer)):
        meta["seed"] = int(seed)
    return SpatialSample(lam, loc, vals, meta)


def lag_bin_covariance(samples, edges) -> tuple:
    """Empirical covariance of value pairs grouped by distance bins.

    Returns per-bin (mean lag, mean product, standard error of the mean
    across replicates, pair count).
    """
    edges = np.asarray(edges, dtype=float)
    nb = edges.size - 1
    per_rep = []
    lags = np.zeros(nb)
    counts = np.zeros(nb)
    for smp in samples:
        loc, z = smp.locations, smp.values
        iu = np.triu_indices(smp.n, k=1)
        dist = np.sqrt(np.sum((loc[iu[0]] - loc[iu[1]]) ** 2, axis=1))
        prod = z[iu[0]] * z[iu[1]]
        b = np.digitize(dist, edges) - 1
        ok = (b >= 0) & (b < nb)
        sums = np.bincount(b[ok], weights=prod[ok], minlength=nb)
        cnt = np.bincount(b[ok], minlength=nb)
        lags += np.bincount(b[ok], weights=dist[ok], minlength=nb)
        counts += cnt
        per_rep.append(sums / np.maximum(cnt, 1))
    per_rep = np.asarray(per_rep)
    m = per_rep.shape[0]
    return (lags / np.maximum(counts, 1), per_rep.mean(axis=0),
            per_rep.std(axis=0, ddof=1) / np.sqrt(m), counts)



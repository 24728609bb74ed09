"""Monte Carlo comparison of empirical moments with oracle predictions."""

from __future__ import annotations

import copy
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.stats

from . import oracle
from .dft import default_workers, dft_grid, dft_many
from .errors import ConfigError, InsufficientDataError, IrregSpecError, NumericalError
from .fit import OBJECTIVES
from .grid import FrequencyGrid, as_index
from .models import make_model, weight_from_spec
from .quadform import q_tilde
from .sampling import SamplingDensity, replicate_seed, simulate_sample
from .serialization import dumps, write_csv

Z_LIMIT = 3.0
FLAKE_RATE = 0.05
SKEW_LIMIT = 4.0
KURT_LIMIT = 4.0
KS_COEF = 1.63
MIN_NORMALITY_SAMPLES = 200


# ------------------------------------------------------------- normality


@dataclass(frozen=True)
class NormalityResult:
    skew_z: float
    kurt_z: float
    ks_stat: float
    ks_threshold: float
    samples: int
    passed: bool


def normality_check(samples) -> NormalityResult:
    """Skewness, excess-kurtosis z-scores and KS distance to a fitted normal.

    Passes iff ``|skew_z| < 4``, ``|kurt_z| < 4`` and ``KS < 1.63 / sqrt(m)``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    m = x.size
    if m < MIN_NORMALITY_SAMPLES:
        raise InsufficientDataError(f"normality check needs >= {MIN_NORMALITY_SAMPLES} samples, got {m}")
    c = x - x.mean()
    m2 = np.mean(c ** 2)
    if m2 == 0:
        raise NumericalError("normality check on a constant sample")
    skew = np.mean(c ** 3) / m2 ** 1.5
    kurt = np.mean(c ** 4) / m2 ** 2 - 3.0
    se_skew = math.sqrt(6.0 * m * (m - 1) / ((m - 2) * (m + 1) * (m + 3)))
    se_kurt = 2.0 * se_skew * math.sqrt((m * m - 1.0) / ((m - 3) * (m + 5)))
    ks = float(scipy.stats.kstest(c / math.sqrt(m2 * m / (m - 1)), "norm").statistic)
    thr = KS_COEF / math.sqrt(m)
    skew_z, kurt_z = float(skew / se_skew), float(kurt / se_kurt)
    return NormalityResult(skew_z, kurt_z, ks, thr, m,
                           bool(abs(skew_z) < SKEW_LIMIT and abs(kurt_z) < KURT_LIMIT and ks < thr))


# ---------------------------------------------------------------- config


@dataclass
class McConfig:
    """Monte Carlo design.

    ``statistics`` holds ``{"weight": spec, "r": [...]}`` requests for Q~;
    ``dft_indices`` and ``dft_pairs`` select DFT ordinates whose variance and
    cross-covariance are compared with the oracle; ``fits`` holds
    ``{"objective": "whittle" | "l2", "a": int | None, "C": float | None}``.
    """

    replicates: int = 1000
    root_seed: int = 20240611
    model: str = "exponential"
    params: dict = field(default_factory=lambda: {"phi": 1.0})
    dim: int = 1
    lam: float = 20.0
    n: int = 2000
    a: Optional[int] = 100
    C: Optional[float] = None
    regime: str = "increasing"
    density: Optional[dict] = None
    j_max: int = 16
    statistics: list = field(default_factory=lambda: [{"weight": "one", "r": [0]}])
    dft_indices: list = field(default_factory=list)
    dft_pairs: list = field(default_factory=list)
    fits: list = field(default_factory=list)
    method: str = "auto"
    jitter: Optional[float] = None
    exact_oracle: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if int(self.replicates) != self.replicates or self.replicates < 2:
            raise ConfigError("replicates must be an integer >= 2")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError("n must be a positive integer")
        if not self.lam > 0:
            raise ConfigError("lam must be positive")
        if self.regime not in ("fixed", "increasing"):
            raise ConfigError("regime must be 'fixed' or 'increasing'")
        if self.regime == "fixed":
            if self.C is None:
                raise ConfigError("fixed regime needs C")
            need = int(math.ceil(self.C * self.lam - 1e-9))
            if self.a is None:
                self.a = need
            elif self.a != need:
                raise ConfigError(f"fixed regime requires a = ceil(C lam) = {need}, got {self.a}")
        if self.a is None or int(self.a) != self.a or self.a < 1:
            raise ConfigError("a must be a positive integer")
        for st in self.statistics:
            if "weight" not in st or "r" not in st:
                raise ConfigError(f"statistic request needs weight and r: {st}")
        for ft in self.fits:
            if ft.get("objective") not in OBJECTIVES:
                raise ConfigError(f"unknown objective {ft.get('objective')!r}")

    @classmethod
    def default_design(cls, dim: int = 1, **overrides) -> "McConfig":
        base = dict(dim=1, lam=20.0, n=2000, a=100, replicates=1000) if dim == 1 else \
            dict(dim=2, lam=10.0, n=3000, a=20, replicates=300)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, d: dict) -> "McConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown mc config keys: {sorted(extra)}")
        return cls(**copy.deepcopy(d))

    def to_dict(self) -> dict:
        return asdict(self)

    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(self.dim, self.a, self.lam)

    def build_model(self):
        return make_model(self.model, self.dim, self.params)

    def build_density(self) -> Optional[SamplingDensity]:
        if not self.density:
            return None
        return SamplingDensity(self.dim, self.density, j_max=self.j_max)


# -------------------------------------------------------------- replicates


class _Plan:
    """Objects shared read-only by every replicate."""

    def __init__(self, cfg: McConfig):
        self.cfg = cfg
        self.model = cfg.build_model()
        self.density = cfg.build_density()
        self.grid = cfg.grid()
        self.weights = [weight_from_spec(st["weight"], self.model) for st in cfg.statistics]
        self.shifts = [as_index(st["r"], cfg.dim) for st in cfg.statistics]
        self.dft_indices = [as_index(k, cfg.dim) for k in cfg.dft_indices]
        self.dft_pairs = [(as_index(p[0], cfg.dim), as_index(p[1], cfg.dim)) for p in cfg.dft_pairs]
        needed = sorted({k for k in self.dft_indices} | {k for p in self.dft_pairs for k in p})
        self.needed = needed
        self.needed_pos = {k: i for i, k in enumerate(needed)}
        self.full_grid = bool(self.weights or cfg.fits)
        self.fit_grids = []
        for ft in cfg.fits:
            a = ft.get("a")
            if a is None and ft.get("C") is not None:
                a = int(math.ceil(ft["C"] * cfg.lam - 1e-9))
            a = cfg.a if a is None else int(a)
            if a > cfg.a:
                raise ConfigError(f"fit grid a={a} exceeds design a={cfg.a}")
            self.fit_grids.append(a)

    def replicate(self, index: int) -> dict:
        cfg = self.cfg
        try:
            smp = simulate_sample(cfg.n, cfg.lam, self.model, replicate_seed(cfg.root_seed, index),
                                  self.density, cfg.jitter, cfg.method)
            out = {}
            if self.needed:
                om = 2.0 * np.pi * np.asarray(self.needed, dtype=float) / cfg.lam
                out["dft"] = dft_many(smp, om, workers=1)
            if self.full_grid:
                F = dft_grid(smp, self.grid, workers=1)
                out["q"] = np.array([q_tilde(F, smp, g, r).value for g, r in zip(self.weights, self.shifts)],
                                    dtype=complex)
                fits = []
                for ft, a in zip(cfg.fits, self.fit_grids):
                    sub = F if a == F.grid.a else F.restrict(a)
                    res = OBJECTIVES[ft["objective"]](sub, self.model, ft.get("theta0"))
                    fits.append(np.concatenate([res.theta_hat, [float(res.converged)]]))
                out["fits"] = fits
            return out
        except IrregSpecError as exc:
            raise type(exc)(f"replicate {index}: {exc}") from exc


def _run_replicates(plan: _Plan, workers: Optional[int]) -> list:
    workers = default_workers() if workers is None else max(1, int(workers))
    idx = range(plan.cfg.replicates)
    if workers == 1:
        return [plan.replicate(i) for i in idx]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(plan.replicate, idx))


# ---------------------------------------------------------------- summary


def _z(emp: float, pred: float, se: float):
    if not np.isfinite(se) or se <= 0:
        return None
    return float((emp - pred) / se)


def _var_se(x: np.ndarray) -> tuple:
    """Sample variance and its standard error ``sqrt((mu4 - s^4) / m)``."""
    c = x - x.mean()
    var = float(np.mean(c ** 2) * x.size / (x.size - 1))
    mu4 = float(np.mean(c ** 4))
    return var, math.sqrt(max(mu4 - var ** 2, 0.0) / x.size)


@dataclass
class McReport:
    config: dict
    statistics: list
    dft: list
    pairs: list
    fits: list
    checks: list
    thresholds: dict

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c["passed"]]

    @property
    def flake_budget(self) -> int:
        return int(math.floor(FLAKE_RATE * len(self.checks)))

    @property
    def passed(self) -> bool:
        return len(self.failures) <= self.flake_budget

    def to_dict(self) -> dict:
        return {"config": self.config, "thresholds": self.thresholds, "statistics": self.statistics,
                "dft": self.dft, "pairs": self.pairs, "fits": self.fits, "checks": self.checks,
                "summary": {"checks": len(self.checks), "failures": len(self.failures),
                            "flake_budget": self.flake_budget, "passed": self.passed}}

    def to_json(self, extra: Optional[dict] = None) -> str:
        d = self.to_dict()
        d.update(extra or {})
        return dumps(d)

    def write(self, directory, prefix: str = "mc", extra: Optional[dict] = None, comment: str = None) -> list:
        """Write ``<prefix>_report.json`` and per-table CSV files; returns the paths."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / f"{prefix}_report.json"]
        paths[0].write_text(self.to_json(extra), encoding="utf-8")
        if self.statistics:
            p = out / f"{prefix}_statistics.csv"
            header = ["index", "mean_re", "mean_im", "se_re", "se_im", "oracle_mean_re", "oracle_mean_im",
                      "z_mean_re", "z_mean_im", "lamd_var_re", "oracle_lamd_var_re", "z_var_re"]
            rows = ([i, s["mean"]["re"], s["mean"]["im"], s["se"]["re"], s["se"]["im"],
                     s["oracle_mean"]["re"], s["oracle_mean"]["im"], _nan(s["z_mean_re"]),
                     _nan(s["z_mean_im"]), s["lamd_var_re"], s["oracle_lamd_var_re"], _nan(s["z_var_re"])]
                    for i, s in enumerate(self.statistics))
            write_csv(p, header, rows, comment)
            paths.append(p)
        if self.dft:
            p = out / f"{prefix}_dft.csv"
            d = len(self.dft[0]["k"])
            header = [f"k{i + 1}" for i in range(d)] + ["emp_var", "se", "oracle", "z"]
            rows = ([*r["k"], r["emp_var"], r["se"], r["oracle"], _nan(r["z"])] for r in self.dft)
            write_csv(p, header, rows, comment)
            paths.append(p)
        if self.pairs:
            p = out / f"{prefix}_pairs.csv"
            d = len(self.pairs[0]["k1"])
            header = ([f"k1_{i + 1}" for i in range(d)] + [f"k2_{i + 1}" for i in range(d)]
                      + ["cov_re", "cov_im", "abs_cov", "oracle_re", "oracle_im"])
            rows = ([*r["k1"], *r["k2"], r["cov"]["re"], r["cov"]["im"], r["abs_cov"], r["oracle"]["re"],
                     r["oracle"]["im"]] for r in self.pairs)
            write_csv(p, header, rows, comment)
            paths.append(p)
        return paths


def _nan(v):
    return float("nan") if v is None else v


def _cplx(z) -> dict:
    z = complex(z)
    return {"re": z.real, "im": z.imag}


def _summarise_statistic(plan: _Plan, i: int, vals: np.ndarray, checks: list) -> dict:
    cfg = plan.cfg
    g, r = plan.weights[i], plan.shifts[i]
    R = vals.size
    lamd = cfg.lam ** cfg.dim
    mean = vals.mean()
    se_re = float(vals.real.std(ddof=1) / math.sqrt(R))
    se_im = float(vals.imag.std(ddof=1) / math.sqrt(R))
    im_meaningful = se_im > 1e-8 * max(se_re, 1e-300)
    stacked = np.vstack([vals.real, vals.imag])
    cov = np.cov(stacked)
    if plan.density is None:
        mean_pred = oracle.predict_q_mean(plan.model, g, plan.grid, r, cfg.regime, cfg.C)
        var_pred = oracle.predict_q_variance(plan.model, g, plan.grid, r)
        pred_re = var_pred.re_var(r)
        pred_im = var_pred.im_var(r)
        var_meta = {"c1": _cplx(var_pred.c1.value), "c2": _cplx(var_pred.c2.value),
                    "c1_r": _cplx(var_pred.c1_r.value), "c2_r": _cplx(var_pred.c2_r.value)}
    else:
        mean_pred = oracle.predict_q_mean_nonuniform(plan.model, g, plan.density, plan.grid, r,
                                                     cfg.regime, cfg.C)
        u = oracle.predict_q_variance_nonuniform(plan.model, g, plan.density, plan.grid, r, r)
        covqq = u["u1"].value + u["u2"].value
        covqc = u["u3"].value + u["u4"].value
        pred_re = 0.5 * (covqq.real + covqc.real)
        pred_im = 0.5 * (covqq.real - covqc.real)
        var_meta = {k: _cplx(v.value) for k, v in u.items()}
    var_re, se_var_re = _var_se(vals.real)
    var_im, se_var_im = _var_se(vals.imag)
    row = {
        "weight": g.name, "r": list(r), "replicates": R,
        "mean": _cplx(mean), "se": {"re": se_re, "im": se_im},
        "oracle_mean": _cplx(mean_pred.value), "oracle_order": mean_pred.order_tag,
        "oracle_valid": mean_pred.valid,
        "z_mean_re": _z(mean.real, mean_pred.value.real, se_re),
        "z_mean_im": _z(mean.imag, mean_pred.value.imag, se_im) if im_meaningful else None,
        "cov_re_im": cov.tolist(),
        "lamd_var_re": lamd * var_re, "lamd_var_re_se": lamd * se_var_re,
        "oracle_lamd_var_re": pred_re,
        "z_var_re": _z(lamd * var_re, pred_re, lamd * se_var_re),
        "lamd_var_im": lamd * var_im, "lamd_var_im_se": lamd * se_var_im,
        "oracle_lamd_var_im": pred_im,
        "z_var_im": _z(lamd * var_im, pred_im, lamd * se_var_im) if im_meaningful else None,
        "variance_constants": var_meta,
    }
    if plan.density is None and cfg.exact_oracle:
        try:
            ex = oracle.exact_q_mean(plan.model, g, plan.grid, r, cfg.n)
            row["exact_mean"] = _cplx(ex)
            row["z_exact_mean_re"] = _z(mean.real, ex.real, se_re)
        except ConfigError:
            pass
    tag = f"Q~({g.name};{list(r)})"
    for key in ("z_mean_re", "z_mean_im", "z_var_re", "z_var_im"):
        if row[key] is not None:
            checks.append({"name": f"{tag} {key}", "value": row[key], "passed": abs(row[key]) <= Z_LIMIT})
    if R >= MIN_NORMALITY_SAMPLES:
        norm = {}
        for part, x, pvar in (("re", vals.real, pred_re), ("im", vals.imag, pred_im)):
            if part == "im" and not im_meaningful:
                continue
            res = normality_check(x)
            norm[part] = asdict(res)
            checks.append({"name": f"{tag} normality {part}", "value": res.kurt_z, "passed": res.passed})
        row["normality"] = norm
    return row


def run_mc(config: McConfig, workers: Optional[int] = None) -> McReport:
    """Simulate ``config.replicates`` datasets and compare moments with the oracle.

    Replicate ``i`` uses seed ``SeedSequence(root_seed, spawn_key=(i,))`` so
    results do not depend on ``workers`` or execution order.
    """
    config.validate()
    plan = _Plan(config)
    reps = _run_replicates(plan, workers)
    R = len(reps)
    checks = []
    stats = []
    if plan.weights:
        Q = np.array([rep["q"] for rep in reps])
        for i in range(len(plan.weights)):
            stats.append(_summarise_statistic(plan, i, Q[:, i], checks))
    dft_rows, pair_rows = [], []
    if plan.needed:
        J = np.array([rep["dft"] for rep in reps])
        Jc = J - J.mean(axis=0)
        for k in plan.dft_indices:
            x = np.abs(Jc[:, plan.needed_pos[k]]) ** 2
            emp = float(x.sum() / (R - 1))
            se = float(x.std(ddof=1) / math.sqrt(R))
            if plan.density is None:
                pred = oracle.predict_dft_covariance(plan.model, plan.grid, k, k, config.n)
            else:
                pred = oracle.predict_dft_covariance_nonuniform(plan.model, plan.density, plan.grid, k, k,
                                                                config.n)
            row = {"k": list(k), "emp_var": emp, "se": se, "oracle": pred.value.real,
                   "z": _z(emp, pred.value.real, se)}
            if plan.density is None and config.exact_oracle:
                try:
                    row["exact"] = oracle.exact_dft_moment(plan.model, plan.grid, k, k, config.n).real
                except ConfigError:
                    pass
            dft_rows.append(row)
            if row["z"] is not None:
                checks.append({"name": f"var J{list(k)}", "value": row["z"], "passed": abs(row["z"]) <= Z_LIMIT})
        for k1, k2 in plan.dft_pairs:
            prod = Jc[:, plan.needed_pos[k1]] * np.conj(Jc[:, plan.needed_pos[k2]])
            emp = complex(prod.sum() / (R - 1))
            se_re = float(prod.real.std(ddof=1) / math.sqrt(R))
            se_im = float(prod.imag.std(ddof=1) / math.sqrt(R))
            if plan.density is None:
                pred = oracle.predict_dft_covariance(plan.model, plan.grid, k1, k2, config.n)
            else:
                pred = oracle.predict_dft_covariance_nonuniform(plan.model, plan.density, plan.grid, k1, k2,
                                                                config.n)
            row = {"k1": list(k1), "k2": list(k2), "cov": _cplx(emp), "abs_cov": abs(emp),
                   "se": {"re": se_re, "im": se_im}, "oracle": _cplx(pred.value), "order": pred.order_tag,
                   "z_re": _z(emp.real, pred.value.real, se_re), "z_im": _z(emp.imag, pred.value.imag, se_im)}
            if plan.density is None and config.exact_oracle:
                try:
                    row["exact"] = _cplx(oracle.exact_dft_moment(plan.model, plan.grid, k1, k2, config.n))
                except ConfigError:
                    pass
            pair_rows.append(row)
            if plan.density is not None and row["z_re"] is not None:
                checks.append({"name": f"cov J{list(k1)} J{list(k2)} re", "value": row["z_re"],
                               "passed": abs(row["z_re"]) <= Z_LIMIT})
    fit_rows = []
    for j, ft in enumerate(config.fits):
        arr = np.array([rep["fits"][j] for rep in reps])
        theta, conv = arr[:, :-1], arr[:, -1]
        fit_rows.append({"objective": ft["objective"], "a": plan.fit_grids[j],
                         "param_names": list(plan.model.param_names),
                         "median": np.median(theta, axis=0).tolist(), "mean": theta.mean(axis=0).tolist(),
                         "converged_fraction": float(conv.mean()), "truth": list(plan.model.theta)})
    thresholds = {"z_limit": Z_LIMIT, "flake_rate": FLAKE_RATE, "skew_limit": SKEW_LIMIT,
                  "kurt_limit": KURT_LIMIT, "ks": f"{KS_COEF}/sqrt(m)",
                  "note": "normality thresholds are engineering choices; the limit law fixes only the target"}
    return McReport(config.to_dict(), stats, dft_rows, pair_rows, fit_rows, checks, thresholds)


# ------------------------------------------------------------------ ladder


@dataclass
class LadderReport:
    rungs: list
    decay: float
    trend: Optional[dict]

    def to_dict(self) -> dict:
        return {"rungs": self.rungs, "decay": self.decay, "trend": self.trend}


def ladder(config: McConfig, doubling: Sequence, decay: float = 0.9, pairs: Optional[Sequence] = None,
           bias: bool = True, workers: Optional[int] = None) -> LadderReport:
    """Run ``config`` at each ``(lam, n, a)`` rung and check that errors shrink.

    ``pairs`` are index pairs at the first rung; at rung ``lam`` they are
    scaled by ``lam / lam_0`` so the physical frequencies stay fixed. For each
    rung the report gives the median ``|emp cov(J_k1, J_k2)|`` over the pairs
    and, when ``bias`` is set, ``|mean Q~(1; 0) - oracle|``. Each trend check
    asks for ``value <= decay * previous``.
    """
    rungs = [tuple(r) for r in doubling]
    if not rungs:
        raise ConfigError("ladder needs at least one rung")
    lams = [float(r[0]) for r in rungs]
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise ConfigError(f"ladder lam values must increase strictly, got {lams}")
    dens = [r[1] / r[0] ** config.dim for r in rungs]
    if any(b <= a for a, b in zip(dens, dens[1:])):
        raise ConfigError("ladder n must grow faster than lam^d")
    pairs = [((0,) * config.dim, (1,) + (0,) * (config.dim - 1))] if pairs is None else pairs
    lam0 = lams[0]
    out = []
    for lam, n, a in rungs:
        scale = lam / lam0
        if abs(scale - round(scale)) > 1e-9:
            raise ConfigError("ladder lam values must be integer multiples of the first rung")
        sc = int(round(scale))
        scaled = [[[int(v) * sc for v in np.atleast_1d(k1)], [int(v) * sc for v in np.atleast_1d(k2)]]
                  for k1, k2 in pairs]
        cfg = copy.deepcopy(config)
        cfg.lam, cfg.n, cfg.a = float(lam), int(n), int(a)
        cfg.C = None if cfg.regime == "increasing" else cfg.C
        if cfg.regime == "fixed":
            cfg.a = int(math.ceil(cfg.C * cfg.lam - 1e-9))
        cfg.dft_pairs = scaled
        cfg.dft_indices = []
        cfg.fits = []
        cfg.statistics = [{"weight": "one", "r": [0] * cfg.dim}] if bias else []
        cfg.validate()
        rep = run_mc(cfg, workers)
        row = {"lam": lam, "n": n, "a": cfg.a, "pairs": scaled,
               "abs_cov": [p["abs_cov"] for p in rep.pairs],
               "median_abs_cov": float(np.median([p["abs_cov"] for p in rep.pairs]))}
        if "exact" in (rep.pairs[0] if rep.pairs else {}):
            row["exact_abs_cov"] = [abs(complex(p["exact"]["re"], p["exact"]["im"])) for p in rep.pairs]
        if bias:
            s = rep.statistics[0]
            row["abs_bias"] = abs(s["mean"]["re"] - s["oracle_mean"]["re"])
            row["bias_se"] = s["se"]["re"]
        out.append(row)
    if len(out) < 2:
        return LadderReport(out, decay, None)
    trend = {"median_abs_cov": [], "abs_bias": []}
    for prev, cur in zip(out, out[1:]):
        trend["median_abs_cov"].append({"ratio": cur["median_abs_cov"] / prev["median_abs_cov"],
                                        "passed": cur["median_abs_cov"] <= decay * prev["median_abs_cov"]})
        if bias:
            trend["abs_bias"].append({"ratio": cur["abs_bias"] / max(prev["abs_bias"], 1e-300),
                                      "passed": cur["abs_bias"] <= decay * prev["abs_bias"],
                                      "se": cur["bias_se"]})
    if not bias:
        del trend["abs_bias"]
    return LadderReport(out, decay, trend)

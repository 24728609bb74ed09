"""Command-line entry point: ``irregspec <command> --config run.json``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
error, 5 check failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
import time
from pathlib import Path

import numpy as np

from .dft import WORKERS_ENV, dft_grid
from .errors import CheckFailure, ConfigError, DataError, IrregSpecError
from .fit import OBJECTIVES
from .grid import FrequencyGrid
from .harness import McConfig, ladder, run_mc
from .models import WINDOWS, make_model, weight_from_spec
from .quadform import (c1_model_free, c1_plugin, covariance_estimator, covariance_estimator_spectrum,
                       stationarity_statistic, windowed_spectral_estimator)
from .sampling import SamplingDensity, SpatialSample, simulate_sample
from .serialization import __version__, config_hash, dumps, provenance_line, write_csv

COMMANDS = ("simulate", "estimate", "test-stationarity", "mc", "ladder", "spectrum", "covariance")

DEFAULTS = {
    "design": {"dim": 1, "lam": 20.0, "n": 2000, "model": "exponential", "params": {"phi": 1.0},
               "seed": 42, "density": None, "j_max": 16, "jitter": None, "method": "cholesky"},
    "grid": {"a": None, "C": 1.0},
    "input": {"sample": None},
    "statistic": {"weight": "one", "r": None, "c1": "plugin", "bandwidth": None},
    "fit": {"objective": "whittle", "theta0": None, "exclude_zero_frequency": False, "max_iters": 500,
            "trace": False},
    "spectrum": {"omega": None, "window": "rectangular", "bandwidth": 1.0},
    "covariance": {"v": None, "v_max": None, "v_step": 0.5},
    "mc": {},
    "ladder": {"rungs": [[10.0, 1000, 20], [20.0, 4000, 40], [40.0, 16000, 80]], "decay": 0.9,
               "pairs": None, "bias": True},
    "output": {"dir": ".", "prefix": None},
}


# ------------------------------------------------------------------ config


def _merge(base: dict, user: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in user.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path}{key}")
        if isinstance(base[key], dict) and base[key] and isinstance(val, dict) and key != "params":
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(val)
    return out


def _apply_override(cfg: dict, item: str) -> None:
    key, sep, raw = item.partition("=")
    if not sep:
        raise ConfigError(f"override {item!r} must look like block.key=value")
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {key} crosses a non-block value")
    node[parts[-1]] = val


def resolve_config(command: str, user: dict) -> dict:
    """Fill defaults and normalise blocks so the result is a complete, re-runnable echo."""
    cfg = _merge(DEFAULTS, user)
    d = cfg["design"]
    if int(d["dim"]) != d["dim"] or d["dim"] not in (1, 2, 3):
        raise ConfigError(f"design.dim must be 1, 2 or 3, got {d['dim']}")
    if int(d["n"]) != d["n"] or d["n"] < 1:
        raise ConfigError(f"design.n must be a positive integer, got {d['n']}")
    if not (isinstance(d["lam"], (int, float)) and d["lam"] > 0):
        raise ConfigError(f"design.lam must be positive, got {d['lam']}")
    d["lam"] = float(d["lam"])
    if cfg["statistic"]["r"] is None:
        cfg["statistic"]["r"] = [[1] + [0] * (d["dim"] - 1)]
    if cfg["output"]["prefix"] is None:
        cfg["output"]["prefix"] = command.replace("-", "_")
    if command in ("mc", "ladder"):
        cfg["mc"] = McConfig.from_dict(cfg["mc"]).to_dict()
    if cfg["fit"]["objective"] not in OBJECTIVES:
        raise ConfigError(f"fit.objective must be one of {sorted(OBJECTIVES)}, got {cfg['fit']['objective']!r}")
    if cfg["spectrum"]["window"] not in WINDOWS:
        raise ConfigError(f"spectrum.window must be one of {sorted(WINDOWS)}")
    cfg["command"] = command
    return cfg


class Run:
    """Resolved configuration plus provenance for one command invocation."""

    def __init__(self, cfg: dict, workers=None):
        self.workers = workers
        # the output directory is where results go, not part of the experiment
        self.outdir = Path(cfg["output"].pop("dir"))
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.seed = cfg["mc"].get("root_seed") if cfg["command"] in ("mc", "ladder") else cfg["design"]["seed"]
        self.prefix = cfg["output"]["prefix"]
        self.written = []

    @property
    def comment(self) -> str:
        return provenance_line(self.hash, self.seed)

    def provenance(self) -> dict:
        return {"version": __version__, "config_sha256": self.hash, "seed": self.seed, "config": self.cfg}

    def path(self, suffix: str) -> Path:
        try:
            self.outdir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {self.outdir}: {exc}") from exc
        p = self.outdir / f"{self.prefix}_{suffix}"
        self.written.append(p)
        return p

    def write_json(self, suffix: str, payload: dict) -> Path:
        p = self.path(suffix)
        doc = dict(payload)
        doc.update(self.provenance())
        _write_text(p, dumps(doc))
        return p


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


# ----------------------------------------------------------------- helpers


def _model(cfg):
    d = cfg["design"]
    return make_model(d["model"], d["dim"], d["params"])


def _density(cfg):
    d = cfg["design"]
    if not d["density"]:
        return None
    return SamplingDensity(d["dim"], d["density"], j_max=d["j_max"])


def _sample(cfg) -> SpatialSample:
    """Load ``input.sample`` or, when absent, simulate from the design block."""
    src = cfg["input"]["sample"]
    d = cfg["design"]
    if src:
        smp = SpatialSample.from_csv(src, lam=None if Path(str(src) + ".json").exists() else d["lam"])
        if smp.dim != d["dim"]:
            raise DataError(f"sample has dim {smp.dim}, design.dim is {d['dim']}")
        return smp
    return simulate_sample(d["n"], d["lam"], _model(cfg), d["seed"], _density(cfg), d["jitter"], d["method"])


def _grid(cfg, lam: float) -> FrequencyGrid:
    g = cfg["grid"]
    dim = cfg["design"]["dim"]
    if g["a"] is not None:
        return FrequencyGrid(dim, int(g["a"]), lam)
    if g["C"] is None:
        raise ConfigError("grid needs a or C")
    return FrequencyGrid.fixed_domain(dim, float(g["C"]), lam)


def _points(val, dim: int, name: str) -> np.ndarray:
    arr = np.asarray(val, dtype=float)
    if arr.ndim == 1 and dim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ConfigError(f"{name} must be a list of {dim}-vectors")
    return arr


# ---------------------------------------------------------------- commands


def cmd_simulate(run: Run) -> None:
    cfg = run.cfg
    if cfg["input"]["sample"]:
        raise ConfigError("simulate does not take input.sample")
    smp = _sample(cfg)
    csv = run.path("sample.csv")
    try:
        smp.to_csv(csv, run.comment)
    except OSError as exc:
        raise ConfigError(f"cannot write {csv}: {exc}") from exc
    meta = {"lambda": smp.lam, "dim": smp.dim, "n": smp.n, "model": cfg["design"]["model"],
            "params": cfg["design"]["params"], "jitter_used": smp.metadata.get("jitter_used"),
            "method": smp.metadata.get("method"), "j_max": cfg["design"]["j_max"]}
    side = Path(str(csv) + ".json")
    doc = dict(meta)
    doc.update(run.provenance())
    _write_text(side, dumps(doc))
    run.written.append(side)


def _fit(cfg, smp, dft):
    f = cfg["fit"]
    model = _model(cfg)
    opts = {"max_iters": int(f["max_iters"]), "trace": bool(f["trace"])}
    if f["objective"] == "whittle":
        return OBJECTIVES["whittle"](dft, model, f["theta0"], bool(f["exclude_zero_frequency"]), **opts)
    return OBJECTIVES[f["objective"]](dft, model, f["theta0"], **opts)


def cmd_estimate(run: Run) -> None:
    cfg = run.cfg
    smp = _sample(cfg)
    dft = dft_grid(smp, _grid(cfg, smp.lam), run.workers)
    res = _fit(cfg, smp, dft)
    payload = res.to_dict()
    payload["grid"] = {"a": dft.grid.a, "lambda": dft.grid.lam}
    run.write_json("fit.json", payload)
    if res.trace is not None:
        rows = ([i, *theta, val] for i, (theta, val) in enumerate(res.trace))
        write_csv(run.path("trace.csv"), ["iteration", *[f"{p}" for p in res.param_names], "objective"], rows,
                  run.comment)


def cmd_test_stationarity(run: Run) -> None:
    cfg = run.cfg
    st = cfg["statistic"]
    smp = _sample(cfg)
    dft = dft_grid(smp, _grid(cfg, smp.lam), run.workers)
    model = _model(cfg)
    g = weight_from_spec(st["weight"], model)
    c1_info = {"method": st["c1"]}
    if isinstance(st["c1"], (int, float)) and not isinstance(st["c1"], bool):
        c1 = float(st["c1"])
    elif st["c1"] == "plugin":
        fitted = _fit(dict(cfg, fit=dict(cfg["fit"], objective="whittle", trace=False)), smp, dft)
        model = model.with_theta(fitted.theta_hat)
        if st["weight"] == "inverse-spectral":
            g = weight_from_spec(st["weight"], model)
        c1 = c1_plugin(model, g, dft.grid)
        c1_info["theta_hat"] = [float(t) for t in fitted.theta_hat]
    elif st["c1"] == "model-free":
        bw = st["bandwidth"]
        if bw is None:
            raise ConfigError("statistic.bandwidth is required for model-free C1")
        c1 = c1_model_free(dft, smp, g, float(bw))
    else:
        raise ConfigError(f"statistic.c1 must be 'plugin', 'model-free' or a number, got {st['c1']!r}")
    res = stationarity_statistic(dft, smp, g, st["r"], c1)
    res.to_csv(run.path("stationarity.csv"), run.comment)
    payload = {"c1": res.c1, "c1_source": c1_info, "combined": res.combined, "dof": res.dof,
               "p_value": res.p_value, "normalization": res.normalization,
               "standardization": "standardized = lam^(d/2) Q~/sqrt(C1); per_component = lam^(d/2) Q~/sqrt(C1/2); "
                                   "c1_scaled = lam^(d/2) Q~/C1; combined uses per_component",
               "rows": [{"r": list(r), "q_tilde": q, "standardized": s, "per_component": p, "c1_scaled": pf}
                        for r, q, s, p, pf in zip(res.shifts, res.q_tilde, res.standardized, res.per_component,
                                                  res.c1_scaled)]}
    run.write_json("stationarity.json", payload)


def cmd_mc(run: Run) -> None:
    cfg = McConfig.from_dict(run.cfg["mc"])
    rep = run_mc(cfg, run.workers)
    extra = {"version": __version__, "config_sha256": run.hash, "seed": run.seed, "config": run.cfg,
             "mc_config": rep.config}
    try:
        run.written.extend(rep.write(run.outdir, run.prefix, extra, run.comment))
    except OSError as exc:
        raise ConfigError(f"cannot write to {run.outdir}: {exc}") from exc
    if not rep.passed:
        raise CheckFailure(f"{len(rep.failures)} checks failed (budget {rep.flake_budget}): "
                           + "; ".join(f"{c['name']}={c['value']:.3g}" for c in rep.failures))


def cmd_ladder(run: Run) -> None:
    cfg = McConfig.from_dict(run.cfg["mc"])
    lad = run.cfg["ladder"]
    pairs = lad["pairs"]
    if pairs is not None:
        pairs = [tuple(p) for p in pairs]
    rep = ladder(cfg, lad["rungs"], float(lad["decay"]), pairs, bool(lad["bias"]), run.workers)
    run.write_json("ladder.json", rep.to_dict())
    if rep.trend is not None:
        failed = [k for k, rows in rep.trend.items() for r in rows if not r["passed"]]
        if failed:
            raise CheckFailure(f"ladder trend checks failed: {sorted(set(failed))}")


def cmd_spectrum(run: Run) -> None:
    cfg = run.cfg
    sp = cfg["spectrum"]
    smp = _sample(cfg)
    dft = dft_grid(smp, _grid(cfg, smp.lam), run.workers)
    omega = dft.grid.frequencies() if sp["omega"] is None else _points(sp["omega"], smp.dim, "spectrum.omega")
    window = WINDOWS[sp["window"]]()
    bw = float(sp["bandwidth"])
    fhat = [windowed_spectral_estimator(dft, smp, w, window, bw) for w in omega]
    nonneg = covariance_estimator_spectrum(dft, omega)
    header = [f"w{i + 1}" for i in range(smp.dim)] + ["f_windowed", "f_covariance"]
    write_csv(run.path("spectrum.csv"), header, ([*w, a, b] for w, a, b in zip(omega, fhat, nonneg)), run.comment)


def cmd_covariance(run: Run) -> None:
    cfg = run.cfg
    cv = cfg["covariance"]
    smp = _sample(cfg)
    dft = dft_grid(smp, _grid(cfg, smp.lam), run.workers)
    if cv["v"] is not None:
        v = _points(cv["v"], smp.dim, "covariance.v")
    else:
        vmax = float(cv["v_max"]) if cv["v_max"] is not None else 1.25 * smp.lam
        step = float(cv["v_step"])
        if not step > 0:
            raise ConfigError("covariance.v_step must be positive")
        t = np.arange(0.0, vmax + 0.5 * step, step)
        v = np.zeros((t.size, smp.dim))
        v[:, 0] = t
    c = covariance_estimator(dft, v)
    header = [f"v{i + 1}" for i in range(smp.dim)] + ["c_hat"]
    write_csv(run.path("covariance.csv"), header, ([*vi, ci] for vi, ci in zip(v, c)), run.comment)


HANDLERS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "test-stationarity": cmd_test_stationarity,
            "mc": cmd_mc, "ladder": cmd_ladder, "spectrum": cmd_spectrum, "covariance": cmd_covariance}


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irregspec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"irregspec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", "-c", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="BLOCK.KEY=VALUE",
                       help="override a config entry (value parsed as JSON when possible)")
        p.add_argument("--out", help="output directory (output.dir)")
        p.add_argument("--seed", type=int, help="design.seed (mc.root_seed for mc and ladder)")
        p.add_argument("--workers", type=int, help=f"worker threads (default ${WORKERS_ENV} or 1)")
        if name in ("estimate", "test-stationarity"):
            p.add_argument("--objective", choices=sorted(OBJECTIVES), help="fit.objective")
            p.add_argument("--exclude-zero-frequency", action="store_true", default=None,
                           help="drop k = 0 from the Whittle sum")
        if name == "mc":
            p.add_argument("--replicates", type=int, help="mc.replicates")
    return parser


def load_config(args) -> dict:
    user = {}
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        user.pop("command", None)
    for item in args.set:
        _apply_override(user, item)
    if args.out is not None:
        user.setdefault("output", {})["dir"] = args.out
    if args.seed is not None:
        if args.command in ("mc", "ladder"):
            user.setdefault("mc", {})["root_seed"] = args.seed
        else:
            user.setdefault("design", {})["seed"] = args.seed
    if getattr(args, "objective", None):
        user.setdefault("fit", {})["objective"] = args.objective
    if getattr(args, "exclude_zero_frequency", None):
        user.setdefault("fit", {})["exclude_zero_frequency"] = True
    if getattr(args, "replicates", None):
        user.setdefault("mc", {})["replicates"] = args.replicates
    return resolve_config(args.command, user)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    run = None
    try:
        run = Run(load_config(args), args.workers)
        try:
            HANDLERS[args.command](run)
        finally:
            if run.written:
                # failed checks still leave their outputs and a re-runnable echo
                run.write_json("run.json", {"files": [p.name for p in run.written]})
        if not run.written:
            run.write_json("run.json", {"files": []})
    except IrregSpecError as exc:
        print(f"irregspec {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    for p in run.written:
        print(p)
    print(f"irregspec {args.command}: done in {time.perf_counter() - start:.2f}s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())

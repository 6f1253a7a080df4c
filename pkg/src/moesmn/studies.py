"""Monte-Carlo study runner.

A study is described by a flat ``key = value`` config file; list values are
comma separated. Each replication draws its own seeded stream from a master
``SeedSequence`` so results do not depend on the number of workers.

Example::

    scenario = asymptotic
    replications = 20
    seed = 1
    n = 100, 1000
    censoring = 0.15
    families = n
"""

from __future__ import annotations

import csv
import logging
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List

import numpy as np

from .ecme import FitOptions, fit
from .metrics import align_components, mcr, rand_indices, regression_mean_mse
from .simulate import (
    OUTLIER_LABEL,
    apply_interval_censoring,
    apply_tail_censoring,
    generate_moe_data,
    inject_outliers,
    scenario_asymptotic,
    scenario_gselect,
    scenario_heavytail,
    scenario_outliers,
)

log = logging.getLogger(__name__)

SCENARIOS = ("asymptotic", "gselect", "heavytail", "outliers")

# per-scenario defaults: (n, censoring, families, generator)
_DEFAULTS = {
    "asymptotic": ([50, 100, 500, 2000], [0.075, 0.15, 0.30], ["n"], "n"),
    "gselect": ([500], [0.075, 0.15, 0.30], ["n", "t", "sl", "cn"], "gig"),
    "heavytail": ([100, 500, 2000], [0.075, 0.15, 0.30], ["n", "t", "sl", "cn"], "laplace"),
    "outliers": ([500], [0.075, 0.30], ["n", "t", "sl", "cn"], "gig"),
}


class ConfigError(ValueError):
    pass


@dataclass
class StudyConfig:
    scenario: str
    replications: int = 10
    seed: int = 0
    n: List[int] = field(default_factory=list)
    censoring: List[float] = field(default_factory=list)
    families: List[str] = field(default_factory=list)
    generator: str = ""
    gmin: int = 1
    gmax: int = 5
    outlier_probs: List[float] = field(default_factory=lambda: [0.0, 0.02, 0.04, 0.06])
    interval_width: float = 1.0
    tie_nu: bool = True
    max_iter: int = 1000
    tol: float = 1e-5
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        n, cens, fams, gen = _DEFAULTS[self.scenario]
        self.n = self.n or list(n)
        self.censoring = self.censoring or list(cens)
        self.families = self.families or list(fams)
        self.generator = self.generator or gen
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not 1 <= self.gmin <= self.gmax:
            raise ConfigError("need 1 <= gmin <= gmax")
        for p in self.censoring:
            if not 0 <= p < 1:
                raise ConfigError(f"censoring level {p} outside [0, 1)")

    @classmethod
    def from_text(cls, text: str) -> "StudyConfig":
        kinds = {f.name: f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in kinds:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = _coerce(key, val, lineno)
        if "scenario" not in values:
            raise ConfigError("config must name a scenario")
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "StudyConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


_LIST_INT = {"n"}
_LIST_FLOAT = {"censoring", "outlier_probs"}
_LIST_STR = {"families"}
_INT = {"replications", "seed", "gmin", "gmax", "max_iter", "workers"}
_FLOAT = {"interval_width", "tol"}


def _coerce(key, val, lineno):
    try:
        if key in _LIST_INT:
            return [int(v) for v in val.split(",") if v.strip()]
        if key in _LIST_FLOAT:
            return [float(v) for v in val.split(",") if v.strip()]
        if key in _LIST_STR:
            return [v.strip().lower() for v in val.split(",") if v.strip()]
        if key in _INT:
            return int(val)
        if key in _FLOAT:
            return float(val)
        if key == "tie_nu":
            if val.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(val)
            return val.lower() in ("true", "1", "yes")
        return val.strip().lower()
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {val!r} for {key}") from None


# ---------------------------------------------------------------------------
# replications
# ---------------------------------------------------------------------------

def _fit_opts(cfg: StudyConfig, seed: int) -> FitOptions:
    return FitOptions(max_iter=cfg.max_iter, tol=cfg.tol, tie_nu=cfg.tie_nu, seed=seed,
                      compute_se=False)


def _param_errors(theta_hat, theta_true, prefix="err_"):
    out = OrderedDict()
    th = align_components(theta_hat, theta_true)
    for j in range(th.G):
        for k in range(th.p):
            out[f"{prefix}beta{j + 1}_{k}"] = th.beta[j, k] - theta_true.beta[j, k]
        out[f"{prefix}sigma2_{j + 1}"] = th.sigma2[j] - theta_true.sigma2[j]
    for j in range(th.G - 1):
        for k in range(th.q):
            out[f"{prefix}tau{j + 1}_{k}"] = th.tau[j, k] - theta_true.tau[j, k]
    return out, th


def _clustering(labels_true, labels_pred):
    keep = labels_true != OUTLIER_LABEL
    a, b = labels_true[keep], labels_pred[keep]
    ri, ari, jci = rand_indices(a, b)
    return {"mcr": mcr(a, b), "ri": ri, "ari": ari, "jci": jci}


def _fit_row(data, G, family, cfg, seed):
    row = OrderedDict(family=family, G=G)
    try:
        rep = fit(data, G, family, _fit_opts(cfg, seed))
    except Exception as exc:  # noqa: BLE001 - a failed replication is data
        log.warning("fit failed (family=%s, G=%d): %s", family, G, exc)
        row.update(status="failed", error=str(exc)[:200])
        return row, None
    row.update(status="ok", converged=int(rep.converged), iters=rep.iters, loglik=rep.loglik,
               m=rep.m, aic=rep.aic, bic=rep.bic)
    fam = rep.theta.families[0]
    if fam.nu is not None:
        row["nu"] = fam.nu
    if fam.gamma is not None:
        row["gamma"] = fam.gamma
    return row, rep


def _censor(sim, level, cfg, rng, side):
    if side == "interval":
        return apply_interval_censoring(sim.y, level, cfg.interval_width, rng).with_design(sim.X, sim.R)
    return apply_tail_censoring(sim.y, level, side).with_design(sim.X, sim.R)


def run_replication(cfg: StudyConfig, rep: int) -> List[Dict]:
    """All rows produced by replication ``rep``."""
    ss = np.random.SeedSequence([cfg.seed, rep])
    rng = np.random.default_rng(ss)
    fit_seed = int(ss.generate_state(1)[0])
    rows = []
    base = OrderedDict(scenario=cfg.scenario, rep=rep)

    if cfg.scenario == "asymptotic":
        spec = scenario_asymptotic(cfg.generator)
        truth = spec.params()
        for n in cfg.n:
            sim = generate_moe_data(spec, n, rng)
            for level in cfg.censoring:
                data = _censor(sim, level, cfg, rng, "right")
                for fam in cfg.families:
                    row, res = _fit_row(data, 2, fam, cfg, fit_seed)
                    row = OrderedDict(base, n=n, censoring=level, **row)
                    if res is not None:
                        errs, _ = _param_errors(res.theta, truth)
                        row.update(errs)
                        row.update(_clustering(sim.labels, res.labels))
                    rows.append(row)

    elif cfg.scenario == "gselect":
        spec = scenario_gselect()
        for n in cfg.n:
            sim = generate_moe_data(spec, n, rng)
            for level in cfg.censoring:
                data = _censor(sim, level, cfg, rng, "left")
                for fam in cfg.families:
                    block = []
                    for G in range(cfg.gmin, cfg.gmax + 1):
                        row, _ = _fit_row(data, G, fam, cfg, fit_seed)
                        block.append(OrderedDict(base, n=n, censoring=level, **row))
                    ok = [r for r in block if r["status"] == "ok"]
                    for crit in ("aic", "bic"):
                        best = min(ok, key=lambda r: r[crit])["G"] if ok else None
                        for r in block:
                            r[f"selected_{crit}"] = int(r["G"] == best)
                    rows.extend(block)

    elif cfg.scenario == "heavytail":
        spec = scenario_heavytail(cfg.generator)
        for n in cfg.n:
            sim = generate_moe_data(spec, n, rng)
            for level in cfg.censoring:
                data = _censor(sim, level, cfg, rng, "interval")
                for fam in cfg.families:
                    row, res = _fit_row(data, 3, fam, cfg, fit_seed)
                    row = OrderedDict(base, n=n, censoring=level, **row)
                    if res is not None:
                        row.update(_clustering(sim.labels, res.labels))
                    rows.append(row)

    else:  # outliers
        spec = scenario_outliers(cfg.generator)
        truth = spec.params()
        for n in cfg.n:
            sim = generate_moe_data(spec, n, rng)
            for level in cfg.censoring:
                clean = _censor(sim, level, cfg, rng, "left")
                for c in cfg.outlier_probs:
                    data, labels = inject_outliers(clean, sim.labels, c, rng)
                    for fam in cfg.families:
                        row, res = _fit_row(data, 2, fam, cfg, fit_seed)
                        row = OrderedDict(base, n=n, censoring=level, outliers=c, **row)
                        if res is not None:
                            row["mse"] = regression_mean_mse(res.theta, truth, (sim.X, sim.R))
                            row.update(_clustering(labels, res.labels))
                        rows.append(row)
    return rows


_KEYS = ("scenario", "n", "censoring", "outliers", "family", "G")


def aggregate(rows: List[Dict]) -> List[Dict]:
    """Average every numeric column within groups of identical design keys."""
    groups: "OrderedDict[tuple, list]" = OrderedDict()
    for r in rows:
        key = tuple((k, r[k]) for k in _KEYS if k in r)
        groups.setdefault(key, []).append(r)
    out = []
    for key, members in groups.items():
        ok = [m for m in members if m.get("status") == "ok"]
        agg = OrderedDict(key)
        agg["replications"] = len(members)
        agg["effective"] = len(ok)
        cols = []
        for m in ok:
            for k, v in m.items():
                if k not in agg and k not in cols and k not in ("rep", "status", "error"):
                    cols.append(k)
        for k in cols:
            vals = [m[k] for m in ok if k in m and isinstance(m[k], (int, float, np.floating))]
            if vals:
                agg[k] = float(np.mean(vals))
                if k.startswith("err_"):
                    agg["abs" + k[3:]] = float(np.mean(np.abs(vals)))
        out.append(agg)
    return out


def run_study(cfg: StudyConfig):
    """Run every replication; returns ``(per_replication_rows, aggregate_rows)``."""
    reps = range(cfg.replications)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            chunks = list(ex.map(run_replication, [cfg] * cfg.replications, reps))
    else:
        chunks = [run_replication(cfg, r) for r in reps]
    rows = [r for chunk in chunks for r in chunk]
    return rows, aggregate(rows)


def write_rows(path, rows: List[Dict]):
    cols: List[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                         for k, v in r.items()})

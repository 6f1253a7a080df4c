"""Command-line interface.

Exit status: 0 success (fit converged), 1 input error, 2 fit did not converge
(a partial report is still written), 3 fitting failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ecme import FitError, FitOptions, fit
from .io import DatasetFormatError, read_dataset, write_dataset
from .model import NumericalSupportError
from .simulate import (
    apply_interval_censoring,
    apply_tail_censoring,
    generate_moe_data,
    inject_outliers,
    scenario_asymptotic,
    scenario_gselect,
    scenario_heavytail,
    scenario_outliers,
)
from .studies import ConfigError, StudyConfig, run_study, write_rows

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_FIT_FAILED = 0, 1, 2, 3
FAMILIES = ("n", "t", "sl", "cn")

log = logging.getLogger("moesmn")


def _f(v) -> str:
    return repr(float(v))


def _vec(v) -> str:
    return " ".join(_f(x) for x in np.ravel(v))


def format_report(rep, args) -> str:
    th = rep.theta
    lines = [
        f"family = {args.family}",
        f"components = {th.G}",
        f"tie_nu = {str(rep.tie_nu).lower()}",
        f"n = {rep.n}",
        f"converged = {str(rep.converged).lower()}",
        f"iters = {rep.iters}",
        f"loglik = {_f(rep.loglik)}",
        f"m = {rep.m}",
        f"aic = {_f(rep.aic)}",
        f"bic = {_f(rep.bic)}",
    ]
    for j in range(th.G):
        lines.append(f"beta{j + 1} = {_vec(th.beta[j])}")
    lines.append(f"sigma2 = {_vec(th.sigma2)}")
    for j in range(th.G - 1):
        lines.append(f"tau{j + 1} = {_vec(th.tau[j])}")
    fams = th.families
    if fams[0].nu is not None:
        lines.append(f"nu = {_vec([f.nu for f in fams])}")
    if fams[0].gamma is not None:
        lines.append(f"gamma = {_vec([f.gamma for f in fams])}")
    lines.append("boundary = " + (",".join(f"{k}:{v}" for k, v in sorted(rep.boundary.items()))
                                  or "none"))
    if rep.se is not None:
        lines.append(f"se_singular = {str(rep.se.singular).lower()}")
        for name, est, se in zip(rep.se.names, rep.se.estimates, rep.se.se):
            lines.append(f"se.{name} = {_f(est)} {_f(se)}")
        for name in rep.se.unavailable:
            lines.append(f"se.{name} = unavailable")
    return "\n".join(lines) + "\n"


def _options(args) -> FitOptions:
    return FitOptions(max_iter=args.max_iter, tol=args.tol, tie_nu=args.tie_nu, seed=args.seed,
                      compute_se=getattr(args, "se", True))


def cmd_fit(args) -> int:
    data = read_dataset(args.dataset)
    try:
        rep = fit(data, args.components, args.family, _options(args))
    except (FitError, NumericalSupportError) as exc:
        print(f"error: fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT_FAILED
    text = format_report(rep, args)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.responsibilities:
        z = rep.responsibilities
        with open(args.responsibilities, "w", encoding="utf-8") as fh:
            fh.write(",".join(f"z{j + 1}" for j in range(z.shape[1])) + ",label\n")
            for row, lab in zip(z, rep.labels):
                fh.write(",".join(_f(v) for v in row) + f",{lab + 1}\n")
    if not rep.converged:
        print(f"warning: not converged after {rep.iters} iterations", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_select(args) -> int:
    if args.gmin > args.gmax or args.gmin < 1:
        print("error: need 1 <= gmin <= gmax", file=sys.stderr)
        return EXIT_INPUT
    data = read_dataset(args.dataset)
    opts = _options(args)
    opts.compute_se = False
    rows = []
    for G in range(args.gmin, args.gmax + 1):
        try:
            rep = fit(data, G, args.family, opts)
            rows.append((G, rep.loglik, rep.m, rep.aic, rep.bic, rep.converged, ""))
        except (FitError, NumericalSupportError) as exc:
            rows.append((G, np.nan, -1, np.nan, np.nan, False, str(exc)))
    ok = [r for r in rows if np.isfinite(r[3])]
    if not ok:
        print("error: every fit failed", file=sys.stderr)
        for r in rows:
            print(f"  G={r[0]}: {r[6]}", file=sys.stderr)
        return EXIT_FIT_FAILED
    out = ["G,loglik,m,aic,bic,converged,error"]
    for G, ll, m, aic, bic, conv, err in rows:
        out.append(f"{G},{_f(ll)},{m},{_f(aic)},{_f(bic)},{int(conv)},{err.replace(',', ';')}")
    out.append(f"# best_aic G={min(ok, key=lambda r: r[3])[0]}")
    out.append(f"# best_bic G={min(ok, key=lambda r: r[4])[0]}")
    text = "\n".join(out) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_mc(args) -> int:
    cfg = StudyConfig.from_file(args.config)
    if args.workers:
        cfg.workers = args.workers
    rows, agg = run_study(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / "replications.csv", rows)
    write_rows(out / "summary.csv", agg)
    failed = sum(r.get("status") == "failed" for r in rows)
    print(f"{len(rows)} fits, {failed} failed; wrote {out / 'replications.csv'} and "
          f"{out / 'summary.csv'}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.scenario == "asymptotic":
        spec, side = scenario_asymptotic(args.generator or "n"), "right"
    elif args.scenario == "gselect":
        spec, side = scenario_gselect(), "left"
    elif args.scenario == "heavytail":
        spec, side = scenario_heavytail(args.generator or "laplace"), "interval"
    else:
        spec, side = scenario_outliers(args.generator or "gig"), "left"
    sim = generate_moe_data(spec, args.n, rng)
    if side == "interval":
        cens = apply_interval_censoring(sim.y, args.censoring, 1.0, rng)
    else:
        cens = apply_tail_censoring(sim.y, args.censoring, side)
    data, labels = cens.with_design(sim.X, sim.R), sim.labels
    if args.outliers:
        data, labels = inject_outliers(data, labels, args.outliers, rng)
    write_dataset(args.out, data, labels + (labels >= 0))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="moesmn", description="Censored SMN mixtures of experts.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def fit_args(p):
        p.add_argument("dataset", help="dataset CSV")
        p.add_argument("--family", choices=FAMILIES, default="n")
        p.add_argument("--tie-nu", action=argparse.BooleanOptionalAction, default=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--max-iter", type=int, default=1000)
        p.add_argument("--tol", type=float, default=1e-5)
        p.add_argument("--out", help="report path (default stdout)")

    p = sub.add_parser("fit", help="fit one model")
    fit_args(p)
    p.add_argument("--components", "-G", type=int, default=1)
    p.add_argument("--responsibilities", help="write responsibilities CSV here")
    p.add_argument("--no-se", dest="se", action="store_false", help="skip standard errors")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="choose G by AIC and BIC")
    fit_args(p)
    p.add_argument("--gmin", type=int, default=1)
    p.add_argument("--gmax", type=int, default=5)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("mc", help="run a Monte-Carlo study")
    p.add_argument("config", help="key = value study config")
    p.add_argument("--out-dir", default="mc_out")
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("simulate", help="write a simulated dataset")
    p.add_argument("--scenario", choices=("asymptotic", "gselect", "heavytail", "outliers"),
                   required=True)
    p.add_argument("--generator", default="")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--censoring", type=float, default=0.15)
    p.add_argument("--outliers", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if getattr(args, "max_iter", 1) < 1 or getattr(args, "tol", 1) <= 0:
            raise ValueError("--max-iter must be >= 1 and --tol > 0")
        if getattr(args, "components", 1) < 1:
            raise ValueError("--components must be >= 1")
        return args.func(args)
    except (DatasetFormatError, ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``copulafactor <command> ...``.

Exit status is 0 on success, 3 for invalid input, 4 for numerical failure
and 2 for usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import InputError, NumericalError
from .gibbs import Identification, McmcConfig, run_chain
from .io import (
    ingest_csv,
    load_perisk,
    perisk_path,
    read_archive,
    write_archive,
    write_table,
)
from .posterior import conditional_predictive, sample_predictive, summarize
from .data import empirical_cdfs
from .stochastic import make_rng, parse_prior, simulate_induced_prior

EXIT_INPUT = 3
EXIT_NUMERIC = 4

log = logging.getLogger("copulafactor")


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _load_data(args):
    if args.data is None:
        return load_perisk()
    path = Path(args.data)
    if not path.exists():
        raise InputError(f"data file {path} does not exist")
    if args.margins is not None and not Path(args.margins).exists():
        raise InputError(f"margin-spec file {args.margins} does not exist")
    return ingest_csv(path, args.margins, index_col=args.index_col, infer=not args.no_infer)


def _mcmc_config(args) -> McmcConfig:
    return McmcConfig(
        iterations=args.iters,
        burnin=args.burnin,
        thin=args.thin,
        k=args.factors,
        seed=args.seed,
        prior=parse_prior(args.prior),
        identification=Identification(args.identification),
        px_enabled=not args.no_px,
    )


def _column(data, name: str) -> int:
    if name in data.labels:
        return data.labels.index(name)
    raise InputError(f"unknown variable {name!r}; columns are {', '.join(data.labels)}")


# -- commands ----------------------------------------------------------------


def cmd_fit(args):
    data = _load_data(args)
    config = _mcmc_config(args)
    out = _out_dir(args)
    draws = run_chain(data, config, keep_scores=args.keep_scores)
    write_archive(out / "draws.cfd", draws)
    if draws.count >= 100:
        write_table(out / "summary.tsv", summarize(draws))
    ess = draws.min_ess() if draws.count >= 100 else float("nan")
    print(f"retained draws: {draws.count}")
    print(f"min ESS over loadings: {ess:.1f}")
    print(f"wall time: {draws.wall_time:.1f}s")
    print(f"archive: {out / 'draws.cfd'}")


def _parse_given(pairs, data) -> dict:
    given = {}
    for item in pairs or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"--given expects VAR=VALUE, got {item!r}")
        j = _column(data, name.strip())
        try:
            given[j] = float(value)
        except ValueError:
            raise InputError(f"--given value for {name!r} is not a number: {value!r}") from None
    return given


def cmd_predict(args):
    data = _load_data(args)
    draws = read_archive(args.archive)
    if draws.p != data.p:
        raise InputError(f"archive has {draws.p} variables, data has {data.p}")
    rng = make_rng(args.seed)
    cdfs = empirical_cdfs(data)
    out = _out_dir(args)
    given = _parse_given(args.given, data)
    if args.target is None:
        if given:
            raise InputError("--given needs --target")
        per = max(1, int(np.ceil(args.draws / draws.count)))
        pred = sample_predictive(rng, draws, cdfs, per_draw=per)
        y = pred.y[: args.draws]
        write_table(out / "predictive.tsv", [dict(zip(data.labels, row)) for row in y.tolist()])
        print(f"wrote {y.shape[0]} joint predictive draws to {out / 'predictive.tsv'}")
        return
    target = _column(data, args.target)
    for j, value in given.items():
        if not cdfs[j].contains(value):
            raise InputError(f"value {value!r} for {data.labels[j]!r} is not in its observed support")
    est = conditional_predictive(rng, draws, cdfs, target, given)
    rows = [{"value": float(v), "cdf": float(c), "pmf": float(m)} for v, c, m in zip(est.support, est.cdf, est.pmf)]
    write_table(out / "conditional.tsv", rows)
    print(f"conditional cdf of {args.target} at {len(rows)} support points; effective draws {est.effective_draws:.0f}")


def cmd_replicate_quinn(args):
    from .replication import replicate_quinn

    data = load_perisk()
    config = McmcConfig(iterations=args.iters, burnin=args.burnin, thin=args.thin, k=1, prior=parse_prior(args.prior))
    out = _out_dir(args)
    report = replicate_quinn(data, config, seed=args.seed, n_boot=args.boot, predictive_draws=args.predictive_draws)
    write_table(out / "correlation.tsv", report.correlation)
    write_table(out / "kendall.tsv", report.kendall)
    write_table(out / "scores.tsv", report.scores)
    for row in report.correlation:
        print(f"{row['model']}: GDPW-BMP correlation mean {row['mean']:.3f}, "
              f"95% HPD ({row['hpd95_lo']:.3f}, {row['hpd95_hi']:.3f})")


def cmd_study(args):
    from . import simulation as sim

    out = _out_dir(args)
    if args.study == "priors":
        rng = make_rng(args.seed)
        prior = parse_prior(args.prior)
        rows = []
        for k in (int(v) for v in args.k.split(",")):
            scaled, u = simulate_induced_prior(rng, prior, k, args.draws)
            rows.extend({"k": k, "loading": float(a), "uniqueness": float(b)} for a, b in zip(scaled[:, 0], u))
        write_table(out / "induced_prior.tsv", rows)
        print(f"wrote {len(rows)} induced-prior draws")
        return
    base = sim.FULL_SETTINGS if args.scale == "full" else sim.StudySettings()
    settings = sim.StudySettings(
        replicates=args.replicates or base.replicates,
        iterations=args.iters or base.iterations,
        burnin=args.burnin if args.burnin is not None else base.burnin,
        thin=args.thin or base.thin,
        workers=args.threads,
    )
    if args.study == "efficiency":
        records = sim.efficiency_study(seed=args.seed, truth=args.truth, settings=settings)
        write_table(out / "efficiency.tsv", records)
        for key, ratio in sorted(sim.median_ratios(records).items()):
            print("p=%d k=%d n=%d %s: median ratio %.3f" % (*key, ratio))
    else:
        records = sim.misspecification_study(load_perisk(), seed=args.seed, n=args.n, settings=settings)
        write_table(out / "misspecification.tsv", records)
        for lam in sorted({r["lambda"] for r in records}):
            for model in ("copula", "gaussian-probit"):
                vals = [r["loading"] for r in records if r["lambda"] == lam and r["model"] == model
                        and r["variable"] == "Black.Mkt.Premium"]
                print(f"lambda={lam} {model}: mean Black.Mkt.Premium loading {np.mean(vals):.3f}")


def cmd_demo(args):
    from .simulation import conditional_dependence_demo

    probs = [float(v) for v in args.probs.split(",")]
    gap = conditional_dependence_demo(make_rng(args.seed), args.c13, args.c23, probs, args.level, draws=args.draws)
    print(f"gap {gap.estimate:.6g} (MC s.e. {gap.std_error:.3g}, z = {gap.z_score:.2f}, {gap.draws} draws)")


def cmd_simulate(args):
    from .simulation import GaussianMargin, OrdinalMargin, SyntheticSpec, generate_synthetic

    margins = []
    for j in range(args.p):
        label = f"V{j + 1}"
        ordinal = args.margins == "ordinal" or (args.margins == "mixed" and j >= args.p // 2)
        margins.append(OrdinalMargin(5, label=label) if ordinal else GaussianMargin(label))
    spec = SyntheticSpec(n=args.n, p=args.p, k=args.k, margins=tuple(margins))
    data, C, _ = generate_synthetic(make_rng(args.seed), spec)
    out = _out_dir(args)
    write_table(out / "data.csv", [dict(zip(data.labels, row)) for row in data.values.tolist()], delimiter=",")
    write_table(out / "truth.tsv", [{"var": lab, **dict(zip(data.labels, row))} for lab, row in zip(data.labels, C)])
    (out / "margins.txt").write_text("".join(f"{l}: {m}\n" for l, m in zip(data.labels, data.margins)))
    print(f"wrote {data.n}x{data.p} synthetic data to {out}")


# -- parser ------------------------------------------------------------------


def _add_data_args(p):
    p.add_argument("--data", help=f"CSV file (default: bundled {perisk_path().name})")
    p.add_argument("--margins", help="margin-spec file, one 'column: type' per line")
    p.add_argument("--index-col", help="column holding row labels")
    p.add_argument("--no-infer", action="store_true", help="treat unlisted columns as continuous")


def _add_chain_args(p, iters=20_000, burnin=2_000, thin=10):
    p.add_argument("--iters", type=int, default=iters)
    p.add_argument("--burnin", type=int, default=burnin)
    p.add_argument("--thin", type=int, default=thin)
    p.add_argument("--prior", default="gdp:3,1", help="gdp:A,B or normal:VAR")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="copulafactor", description="Bayesian Gaussian copula factor models")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for replicate studies")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="run the copula factor sampler")
    _add_data_args(fit)
    _add_chain_args(fit)
    fit.add_argument("--factors", type=int, default=1)
    fit.add_argument("--identification", choices=[i.value for i in Identification],
                     default=Identification.LOWER_TRIANGULAR.value)
    fit.add_argument("--no-px", action="store_true", help="disable parameter expansion")
    fit.add_argument("--keep-scores", action="store_true")
    fit.set_defaults(func=cmd_fit)

    pred = sub.add_parser("predict", help="joint or conditional posterior predictive")
    _add_data_args(pred)
    pred.add_argument("--archive", required=True)
    pred.add_argument("--target", help="variable whose conditional cdf is estimated")
    pred.add_argument("--given", action="append", metavar="VAR=VALUE")
    pred.add_argument("--draws", type=int, default=10_000, help="joint predictive draws")
    pred.set_defaults(func=cmd_predict)

    quinn = sub.add_parser("replicate-quinn", help="political-economic risk analysis")
    _add_chain_args(quinn, iters=100_000, burnin=10_000, thin=10)
    quinn.add_argument("--boot", type=int, default=1000)
    quinn.add_argument("--predictive-draws", type=int, default=1000)
    quinn.set_defaults(func=cmd_replicate_quinn)

    study = sub.add_parser("study", help="simulation studies")
    study.add_argument("study", choices=["efficiency", "misspec", "priors"])
    study.add_argument("--scale", choices=["desk", "full"], default="desk")
    study.add_argument("--truth", choices=["probit", "gaussian"], default="probit")
    study.add_argument("--replicates", type=int)
    study.add_argument("--iters", type=int)
    study.add_argument("--burnin", type=int)
    study.add_argument("--thin", type=int)
    study.add_argument("--n", type=int, default=500, help="sample size for the misspecification study")
    study.add_argument("--k", default="1,5,10", help="factor counts for the priors study")
    study.add_argument("--draws", type=int, default=100_000)
    study.add_argument("--prior", default="normal:1")
    study.set_defaults(func=cmd_study)

    demo = sub.add_parser("demo", help="demonstrations")
    demo.add_argument("demo", choices=["cond-dep"])
    demo.add_argument("--c13", type=float, default=0.7)
    demo.add_argument("--c23", type=float, default=0.7)
    demo.add_argument("--probs", default="0.5,0.5", help="level probabilities of Y3")
    demo.add_argument("--level", type=int, default=1)
    demo.add_argument("--draws", type=int, default=1_000_000)
    demo.set_defaults(func=cmd_demo)

    simulate = sub.add_parser("simulate", help="write a synthetic dataset")
    simulate.add_argument("--n", type=int, default=500)
    simulate.add_argument("--p", type=int, default=8)
    simulate.add_argument("--k", type=int, default=2)
    simulate.add_argument("--margins", choices=["gaussian", "ordinal", "mixed"], default="mixed")
    simulate.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0

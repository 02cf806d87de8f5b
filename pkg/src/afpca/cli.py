"""Command-line interface: ``afpca {fit-smooth,fit-fpca,simulate,bench}``.

Every subcommand writes its artifacts plus ``manifest.json`` (parameters,
seed, library versions, timing) into ``--out``. Failures print one line

    afpca: error category=<usage|data|numerical> type=<Exception> message=<text>

to stderr and exit with 1 (usage), 2 (data) or 3 (numerical).
"""

import argparse
import datetime as _dt
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .exceptions import AfpcaError, DataError, NumericalError
from .fpca import FpcaConfig, fit_afpca
from .io import ingest_csv, read_xy_csv, write_csv, write_json, write_table
from .simulate import StudyConfig, generate_dataset, replicate_seed, run_study, true_functions
from .smooth import SmoothConfig, fit_adaptive_smooth

logger = logging.getLogger("afpca")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 1, 2, 3
GRID_POINTS = 200
DESK_REPLICATES, FULL_REPLICATES = 20, 100


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad arguments, which is our data code
    def error(self, message):
        raise UsageError(message)


def _grid(domain, n=GRID_POINTS):
    return np.linspace(domain[0], domain[1], n)


def _versions():
    return {
        "afpca": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _write_manifest(out: Path, args, params: dict, artifacts, started: float, wall_start: str):
    write_json(
        out / "manifest.json",
        {
            "subcommand": args.command,
            "parameters": params,
            "seed": args.seed,
            "versions": _versions(),
            "started_at": wall_start,
            "elapsed_seconds": time.perf_counter() - started,
            "artifacts": sorted(artifacts),
        },
    )


def _cmd_fit_smooth(args, out: Path):
    t, y = read_xy_csv(args.input)
    order = np.argsort(t, kind="stable")
    t, y = t[order], y[order]
    config = SmoothConfig(P=args.p_basis, max_iter=args.max_iter, tol=args.tol, mode=args.mode)
    fit = fit_adaptive_smooth(t, y, config)
    grid = _grid(fit.basis.domain)
    write_json(
        out / "smooth_model.json",
        {
            "domain": list(fit.basis.domain),
            "P": fit.basis.P,
            "mode": fit.mode,
            "beta": fit.beta,
            "lambda_diag": fit.lambda_diag,
            "lambda": fit.lambda_coef,
            "sigma2": fit.sigma2,
            "objective_trace": fit.objective_trace,
            "converged": fit.converged,
            "n_iter": fit.n_iter,
        },
    )
    write_table(out / "smooth_grid.csv", ("t", "fitted", "lambda_of_t"),
                zip(grid, fit.predict(grid), fit.lambda_fn(grid)))
    params = {"input": str(args.input), "P": config.P, "max_iter": config.max_iter, "tol": config.tol,
              "beta_floor": config.beta_floor, "mode": config.mode}
    return params, ["smooth_model.json", "smooth_grid.csv"]


def _model_payload(model, grid):
    return {
        "domain": list(model.domain),
        "P": model.basis.P,
        "knots": model.basis.knots.full,
        "U": model.basis.U,
        "mode": model.mode,
        "K": model.K,
        "K_fitted": model.k_fitted,
        "beta_mu": model.beta_mu,
        "beta_phi": model.beta_phi.T,
        "lambda_mu": model.lambda_mu,
        "lambda_phi": model.lambda_phi.T,
        "sigma2": model.sigma2,
        "eigenvalues": model.eigenvalues,
        "pve_cum": model.pve_cum,
        "total_variance": model.total_variance,
        "objective_trace": model.objective_trace,
        "converged": model.converged,
        "n_iter": model.n_iter,
        "lambda_grid": grid,
        "lambda_of_t": model.lambda_functions(grid).T,
    }


def _cmd_fit_fpca(args, out: Path):
    data = ingest_csv(args.input)
    config = FpcaConfig(P=args.p_basis, K_init=args.k_init, pve=args.pve, max_iter=args.max_iter,
                        tol=args.tol, mode=args.mode, seed=args.seed)
    model = fit_afpca(data, config)
    grid = _grid(model.domain)
    K = model.K
    phi_names = [f"phi_{k + 1}" for k in range(K)]
    write_json(out / "model.json", _model_payload(model, grid))
    write_table(out / "fpcs.csv", ["t", "mean"] + phi_names,
                np.column_stack([grid, model.mean(grid), model.fpcs(grid)]))
    write_table(out / "scores.csv", ["subject_id"] + [f"xi_{k + 1}" for k in range(K)],
                ([sid] + list(row) for sid, row in zip(data.ids, model.scores)))
    curves = model.curves(grid)
    write_table(out / "reconstructions.csv", ("subject_id", "t", "fitted"),
                ((sid, t, v) for sid, row in zip(data.ids, curves) for t, v in zip(grid, row)))
    write_table(out / "lambda.csv", ["t", "lambda_mean"] + [f"lambda_{n}" for n in phi_names],
                np.column_stack([grid, model.lambda_functions(grid)]))
    params = {"input": str(args.input), "P": config.P, "K_init": config.K_init, "pve": config.pve,
              "max_iter": config.max_iter, "tol": config.tol, "beta_floor": config.beta_floor,
              "mode": config.mode, "seed": config.seed}
    return params, ["model.json", "fpcs.csv", "scores.csv", "reconstructions.csv", "lambda.csv"]


def _study_config(args, **extra) -> StudyConfig:
    replicates = args.replicates
    if replicates is None:
        replicates = FULL_REPLICATES if args.full_study else DESK_REPLICATES
    return StudyConfig(
        I_values=args.I,
        sigma2_values=args.sigma2,
        replicates=replicates,
        grid_size=args.grid_size,
        P=args.p_basis,
        K_init=args.k_init,
        pve=args.pve,
        max_iter=args.max_iter,
        tol=args.tol,
        base_seed=args.seed,
        methods=args.methods,
        paper_constants=args.compat_paper_constants,
        n_jobs=args.n_jobs,
        **extra,
    )


def _study_params(config: StudyConfig):
    return {
        "I_values": list(config.I_values),
        "sigma2_values": list(config.sigma2_values),
        "replicates": config.replicates,
        "grid_size": config.grid_size,
        "P": config.P,
        "K_init": config.K_init,
        "pve": config.pve,
        "max_iter": config.max_iter,
        "tol": config.tol,
        "base_seed": config.base_seed,
        "methods": list(config.methods),
        "paper_constants": config.paper_constants,
        "n_jobs": config.n_jobs,
    }


def _dump_fits(out: Path, report):
    folder = out / "fits"
    folder.mkdir(exist_ok=True)
    names = []
    for kept in report.fits:
        grid = kept["sim"].grid
        for method, model in kept["fits"].items():
            name = f"{method}_I{kept['I']}_s{kept['sigma2']:g}_r{kept['replicate']}.csv"
            K = model.K
            write_table(folder / name, ["t", "mean"] + [f"phi_{k + 1}" for k in range(K)],
                        np.column_stack([grid, model.mean(grid), model.fpcs(grid)]))
            names.append(f"fits/{name}")
    return names


def _cmd_simulate(args, out: Path):
    config = _study_config(args, keep_fits=args.dump_fpcs)
    report = run_study(config)
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "summary.json").write_text(report.summary_json() + "\n", encoding="utf-8")
    artifacts = ["report.csv", "summary.json"]
    if args.dump_fpcs:
        artifacts += _dump_fits(out, report)
    if args.dump_data:
        folder = out / "data"
        folder.mkdir(exist_ok=True)
        truth = true_functions(config.paper_constants)
        for I in config.I_values:
            for s2 in config.sigma2_values:
                for rep in range(config.replicates):
                    sim = generate_dataset(I, s2, replicate_seed(config.base_seed, I, s2, rep),
                                           config.grid_size, truth)
                    name = f"I{I}_s{s2:g}_r{rep}.csv"
                    write_csv(sim.dataset, folder / name)
                    artifacts.append(f"data/{name}")
    n_failed = sum(r["status"] != "ok" for r in report.rows)
    logger.info("simulate: %d rows, %d failed", len(report.rows), n_failed)
    return _study_params(config), artifacts


def _cmd_bench(args, out: Path):
    """Wall-clock per fit on freshly generated data, one row per method and repeat."""
    truth = true_functions(args.compat_paper_constants)
    replicates = args.replicates or 3
    rows = []
    for I in args.I:
        for s2 in args.sigma2:
            for rep in range(replicates):
                sim = generate_dataset(I, s2, replicate_seed(args.seed, I, s2, rep), args.grid_size, truth)
                for method in args.methods:
                    config = FpcaConfig(P=args.p_basis, K_init=args.k_init, pve=args.pve,
                                        max_iter=args.max_iter, tol=args.tol, mode=method, seed=rep)
                    start = time.perf_counter()
                    model = fit_afpca(sim.dataset, config)
                    elapsed = time.perf_counter() - start
                    rows.append((method, I, s2, rep, elapsed, model.n_iter, elapsed / model.n_iter, model.K))
    write_table(out / "bench.csv",
                ("method", "I", "sigma2", "replicate", "seconds", "n_iter", "seconds_per_iter", "K_selected"),
                rows)
    params = {"I_values": list(args.I), "sigma2_values": list(args.sigma2), "replicates": replicates,
              "grid_size": args.grid_size, "P": args.p_basis, "K_init": args.k_init, "pve": args.pve,
              "max_iter": args.max_iter, "tol": args.tol, "methods": list(args.methods),
              "paper_constants": args.compat_paper_constants, "base_seed": args.seed}
    return params, ["bench.csv"]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="afpca", description="Adaptive penalized smoothing and functional PCA.")
    parser.add_argument("--version", action="version", version=f"afpca {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def common(p, max_iter, needs_input=True):
        if needs_input:
            p.add_argument("--input", type=Path, required=True, help="input CSV file")
        p.add_argument("--out", type=Path, required=True, help="output directory (created if missing)")
        p.add_argument("--p-basis", type=int, default=40, help="number of B-spline basis functions")
        p.add_argument("--max-iter", type=int, default=max_iter)
        p.add_argument("--tol", type=float, default=1e-6, help="relative tolerance on the objective change")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("fit-smooth", help="adaptive scatterplot smoothing of a t,y table")
    common(p, 100)
    p.add_argument("--mode", choices=("adaptive", "baseline"), default="adaptive")

    p = sub.add_parser("fit-fpca", help="adaptive FPCA of a subject_id,t,y table")
    common(p, 200)
    p.add_argument("--k-init", type=int, default=15, help="starting number of components")
    p.add_argument("--pve", type=float, default=0.99, help="share of variance to retain")
    p.add_argument("--mode", choices=("adaptive", "baseline"), default="adaptive")

    for name, help_text in (("simulate", "seeded simulation study comparing adaptive and baseline fits"),
                            ("bench", "time FPCA fits on simulated data")):
        p = sub.add_parser(name, help=help_text)
        common(p, 200, needs_input=False)
        p.add_argument("--k-init", type=int, default=15)
        p.add_argument("--pve", type=float, default=0.99)
        p.add_argument("--I", type=int, nargs="+", default=[25] if name == "bench" else [25, 50, 100],
                       help="numbers of subjects")
        p.add_argument("--sigma2", type=float, nargs="+", default=[0.1, 0.2], help="noise variances")
        p.add_argument("--grid-size", type=int, default=100)
        p.add_argument("--replicates", type=int, default=None,
                       help=f"replicates per cell (default {DESK_REPLICATES}; bench default 3)")
        p.add_argument("--full-study", action="store_true", help=f"use {FULL_REPLICATES} replicates per cell")
        p.add_argument("--mode", dest="methods", choices=("adaptive", "baseline"), action="append",
                       help="restrict to one method (repeatable; default both)")
        p.add_argument("--compat-paper-constants", action="store_true",
                       help="scale truth functions by their raw integrals instead of unit norm")
        if name == "simulate":
            p.add_argument("--n-jobs", type=int, default=1, help="worker processes")
            p.add_argument("--dump-fpcs", action="store_true", help="write fitted mean and FPCs per replicate")
            p.add_argument("--dump-data", action="store_true", help="write each simulated dataset as CSV")
    return parser


COMMANDS = {
    "fit-smooth": _cmd_fit_smooth,
    "fit-fpca": _cmd_fit_fpca,
    "simulate": _cmd_simulate,
    "bench": _cmd_bench,
}


def _fail(category: str, exc: BaseException, code: int) -> int:
    message = " ".join(str(exc).split()) or type(exc).__name__
    print(f"afpca: error category={category} type={type(exc).__name__} message={message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "methods", "unset") is None:
        args.methods = ["adaptive", "baseline"]
    started = time.perf_counter()
    wall_start = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    try:
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        params, artifacts = COMMANDS[args.command](args, out)
        _write_manifest(out, args, params, artifacts, started, wall_start)
    except DataError as exc:
        return _fail("data", exc, EXIT_DATA)
    except (FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as exc:
        return _fail("data", exc, EXIT_DATA)
    except NumericalError as exc:
        return _fail("numerical", exc, EXIT_NUMERICAL)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail("numerical", exc, EXIT_NUMERICAL)
    except (ValueError, PermissionError, NotADirectoryError, FileExistsError) as exc:
        # invalid settings (e.g. K_init >= P) or an unusable output directory
        return _fail("usage", exc, EXIT_USAGE)
    except AfpcaError as exc:
        return _fail("numerical", exc, EXIT_NUMERICAL)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Every subcommand prints its JSON result to stdout.  With ``--out DIR`` it
also writes ``result.json``, CSV matrices and ``manifest.json`` there.
Exit codes: 0 success, 1 invalid input, 2 numerical contract violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.stats import ks_2samp

from . import __version__
from .asymptotics import (
    AsymptoticFrame,
    centered_stat_map,
    centered_stat_mle,
    predicted_limit,
    simulate_lmax,
)
from .estimators import PiwMap, piw_map, sample_covariance
from .exceptions import InvalidInput, NumericalError, PiwError
from .matcore import SymPD, read_matrix_csv, write_matrix_csv
from .prior import PiwPrior, log_density_ratio_curve
from .shapelab import (
    Ar1BlockPrior,
    ShapeDataset,
    build_ar1_block_psi,
    cv_grid_search,
    eblup_predict,
    fit_map,
    missing_coordinates,
    summarize_fit,
)
from .simlab import (
    TABLE_IDS,
    EstimatorSpec,
    Scenario,
    _cell_stream,
    mc_risk,
    reproduce_tables,
)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _to_jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, SymPD):
        return _to_jsonable(obj.entries)
    return obj


def _dumps(obj: Any) -> str:
    # json writes floats with repr, the shortest string that round-trips
    return json.dumps(_to_jsonable(obj), indent=2, sort_keys=True, allow_nan=True)


def _parse_m(text: str) -> float | None:
    if text == "auto":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--m must be a number or 'auto', got {text!r}") from None


def _parse_grid(text: str) -> list[float]:
    """``a:b:step`` (inclusive of ``b``) or a comma-separated list."""
    try:
        if ":" in text:
            a, b, step = (float(t) for t in text.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            count = int(np.floor((b - a) / step + 1e-9)) + 1
            return [round(a + i * step, 12) for i in range(count)]
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; use a:b:step or a,b,c") from None


def _parse_range(text: str) -> range:
    try:
        a, b = (int(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad index range {text!r}; use start:stop") from None
    if b <= a:
        raise argparse.ArgumentTypeError(f"empty index range {text!r}")
    return range(a, b)


def _parse_cells(text: str) -> list[tuple[int, int]]:
    try:
        return [tuple(int(v) for v in c.split(",")) for c in text.split(";") if c.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad cell list {text!r}; use p,n;p,n") from None


def _labels(values: Sequence[str] | None) -> list[str]:
    out: list[str] = []
    for v in values or []:
        out.extend(s.strip() for s in v.split(",") if s.strip())
    return out


def _config_digest(args: argparse.Namespace) -> str:
    # threads and output location do not affect results
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "threads")}
    text = json.dumps(_to_jsonable(cfg), sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()


class _Run:
    """Collects artifacts of one invocation and writes them on success."""

    def __init__(self, argv: Sequence[str], args: argparse.Namespace):
        self.argv = list(argv)
        self.args = args
        self.csvs: dict[str, tuple[np.ndarray, list[str] | None]] = {}
        self.manifest_extra: dict[str, Any] = {}

    def csv(self, name: str, matrix: Any, header: list[str] | None = None) -> None:
        self.csvs[name] = (np.asarray(matrix, dtype=np.float64), header)

    def finish(self, result: dict) -> None:
        text = _dumps(result)
        print(text)
        out = getattr(self.args, "out", None)
        if out is None:
            return
        folder = Path(out)
        folder.mkdir(parents=True, exist_ok=True)
        (folder / "result.json").write_text(text + "\n")
        for name, (mat, header) in self.csvs.items():
            write_matrix_csv(folder / name, mat, header)
        manifest = {
            "command": self.argv,
            "config_sha256": _config_digest(self.args),
            "seed": getattr(self.args, "seed", None),
            "reps": getattr(self.args, "reps", None),
            "version": __version__,
            "artifacts": ["result.json", *self.csvs],
            **self.manifest_extra,
        }
        (folder / "manifest.json").write_text(_dumps(manifest) + "\n")


def _resolve_psi(args: argparse.Namespace, p: int) -> tuple[SymPD, float | None]:
    """Prior scale from ``--psi``/``--alpha``; returns ``(Psi, alpha or None)``."""
    spec = args.psi
    alpha = args.alpha
    if spec is None or spec == "identity":
        a = 1.0 if alpha is None else alpha
        if not a > 0:
            raise InvalidInput(f"alpha must be positive, got {a}")
        return SymPD(a * np.eye(p)), a
    scale = 1.0 if alpha is None else alpha
    if spec.startswith("ar1:"):
        if p % 2:
            raise InvalidInput(f"ar1 scale needs an even dimension, got p={p}")
        try:
            rho = float(spec[4:])
        except ValueError:
            raise InvalidInput(f"bad ar1 specification {spec!r}") from None
        psi = build_ar1_block_psi(rho, p // 2, scale)
        return psi, (scale if rho == 0.0 else None)
    mat = read_matrix_csv(spec)
    if mat.shape != (p, p):
        raise InvalidInput(f"Psi from {spec} has shape {mat.shape}, expected {(p, p)}")
    return SymPD(scale * mat), None


def cmd_estimate(args: argparse.Namespace, run: _Run) -> dict:
    x = read_matrix_csv(args.input)
    n, p = x.shape
    psi, alpha = _resolve_psi(args, p)
    m = float(p) if args.m is None else args.m
    prior = PiwPrior(psi, m, args.q, alpha=alpha)
    mean, s = sample_covariance(x)
    sol = piw_map(s, n, prior, tol=args.tol)
    big_n = prior.denominator(n)
    coef = (args.q / big_n) ** (1.0 / args.q)
    run.csv("sigma_hat.csv", sol.sigma_hat.entries)
    run.csv("mean.csv", mean[None, :])
    return {
        "n": n,
        "p": p,
        "q": args.q,
        "m": m,
        "alpha": alpha,
        "mean": mean,
        "sigma_hat": sol.sigma_hat,
        "eigen_s": sol.eigen_s,
        "eigen_map": sol.eigen_map,
        "residuals": sol.residuals,
        "floor": coef * alpha if alpha is not None else coef,
        "floor_is_relative_to_psi": alpha is None,
        "shrink": n / big_n,
    }


def _simulate_spec(args: argparse.Namespace) -> EstimatorSpec:
    if args.estimator == "mle":
        return EstimatorSpec.mle()
    if args.estimator == "linear":
        if args.slope is None or args.intercept is None:
            raise InvalidInput("--estimator linear needs --slope and --intercept")
        return EstimatorSpec.linear(args.slope, args.intercept)
    return EstimatorSpec.piw(args.q, args.floor, args.shrink_factor)


def cmd_simulate(args: argparse.Namespace, run: _Run) -> dict:
    scen = Scenario.make(args.scenario, args.p, args.n)
    spec = _simulate_spec(args)
    rep = mc_risk(scen, spec, args.reps, args.seed, args.threads)
    out = rep.to_dict()
    out["risk"] = rep.risk_mc
    stream = _cell_stream(TABLE_IDS[args.scenario], args.p, args.n)
    run.manifest_extra["cells"] = {f"({args.p},{args.n})": {"seed_stream": [args.seed, *stream]}}
    return out


def cmd_tables(args: argparse.Namespace, run: _Run) -> dict:
    res = reproduce_tables(args.which, args.cells, args.reps, args.seed, args.threads, args.quantile_reps)
    layout = res.layout()
    header, body = layout[0], layout[1:]
    # first column(s) are labels; keep only numeric cells in the CSV body
    label_cols = 1 if args.which == 1 else 2
    numeric = [[float(c) if c else np.nan for c in row[label_cols:]] for row in body]
    run.csv(f"table{args.which}.csv", numeric, header[label_cols:])
    run.manifest_extra["row_labels"] = [row[:label_cols] for row in body]
    cells = {}
    for key, info in res.matching.items():
        p, n = (int(v) for v in key.strip("()").split(","))
        stream = _cell_stream(TABLE_IDS["identity" if args.which == 2 else "spiked"], p, n)
        cells[key] = {
            "seed_stream": [args.seed, *stream],
            "L": info["L"],
            "a_prime": {k: v["a_prime"] for k, v in info["matched"].items()},
        }
    run.manifest_extra["cells"] = cells
    return {
        "which": args.which,
        "layout": layout,
        "reports": [r.to_dict() for r in res.reports],
        "matching": res.matching,
    }


def cmd_asymptotics(args: argparse.Namespace, run: _Run) -> dict:
    m = float(args.p) if args.m is None else args.m
    frame = AsymptoticFrame.build(args.n, args.p, args.q, m)
    lmax = simulate_lmax(args.p, args.n, args.reps, args.seed, args.threads)
    lmax_map = PiwMap(args.q, m, args.alpha)(lmax, args.n, args.p)
    stat_mle = np.asarray(centered_stat_mle(lmax, args.n, args.p))
    stat_map = np.asarray(centered_stat_map(lmax_map, frame, "shrunk"))
    ks = float(ks_2samp(stat_mle, stat_map).statistic)
    run.csv("statistics.csv", np.column_stack([lmax, lmax_map, stat_mle, stat_map]),
            ["lmax_mle", "lmax_map", "stat_mle", "stat_map"])
    return {
        "mu_np": frame.mu_np,
        "sigma_np": frame.sigma_np,
        "predicted_limit": predicted_limit(frame.gamma_ratio, frame.kappa, args.q),
        "ks_distance": ks,
        "mean_lmax_map": float(np.mean(lmax_map)),
        "mean_lmax_map_stderr": float(np.std(lmax_map, ddof=1) / np.sqrt(args.reps)),
        "map_statistic_scale": "n/(n+p+qm)",
    }


def cmd_ratio_curves(args: argparse.Namespace, run: _Run) -> dict:
    lo, hi, num = args.grid
    grid = np.geomspace(lo, hi, int(num)) if args.log else np.linspace(lo, hi, int(num))
    rows = []
    curves = []
    for q, m_q, m_1 in args.config:
        vals = log_density_ratio_curve(int(q), m_q, m_1, np.repeat(grid[:, None], args.p, axis=1))
        curves.append({"q": int(q), "m_q": m_q, "m_1": m_1, "lambda": grid, "log_ratio": vals})
        rows.extend([q, m_q, m_1, g, v] for g, v in zip(grid, vals))
    run.csv("ratio_curves.csv", rows, ["q", "m_q", "m_1", "lambda", "log_ratio"])
    return {"p": args.p, "curves": curves}


def _shape_prior(args: argparse.Namespace, half_dim: int) -> PiwPrior:
    return Ar1BlockPrior(args.rho, args.alpha, half_dim).to_piw(args.q, args.m)


def cmd_fit_shapes(args: argparse.Namespace, run: _Run) -> dict:
    data = ShapeDataset.from_csv(args.input, exclude=_labels(args.exclude))
    prior = _shape_prior(args, data.half_dim)
    summary = summarize_fit(data, prior, k=args.k)
    _, sol = fit_map(data, prior)
    run.csv("sigma_hat.csv", sol.sigma_hat.entries)
    run.csv("correlation.csv", summary.correlation)
    run.csv("eigenvectors.csv", summary.eigenvectors)
    run.csv(
        "variances.csv",
        np.column_stack([summary.variances, summary.variance_lower, summary.variance_upper, summary.mle_variances]),
        ["map", "lower", "upper", "mle"],
    )
    out = summary.to_dict()
    out.update({"n": data.n, "p": data.p, "rho": args.rho, "alpha": args.alpha, "q": args.q, "m": prior.m,
                "excluded": list(data.excluded_ids)})
    return out


def cmd_predict(args: argparse.Namespace, run: _Run) -> dict:
    data = ShapeDataset.from_csv(args.input)
    target = data.index_of(args.target)
    drop = {target} | {data.labels.index(lab) for lab in _labels(args.exclude) if lab in data.labels}
    train = data.without(sorted(drop))
    missing = missing_coordinates(args.missing, data.half_dim)
    observed = np.setdiff1d(np.arange(data.p), missing)
    row = data.data[target]
    if args.estimator == "mle":
        mean, s = sample_covariance(train.data)
        cov = s
    else:
        mean, sol = fit_map(train, _shape_prior(args, data.half_dim))
        cov = sol.sigma_hat
    pred = eblup_predict(mean, cov, observed, row[observed])
    k = len(args.missing)
    run.csv("prediction.csv", np.column_stack([list(args.missing), pred[:k], pred[k:], row[missing][:k], row[missing][k:]]),
            ["point", "x_pred", "y_pred", "x_obs", "y_obs"])
    return {
        "target": args.target,
        "estimator": args.estimator,
        "n_train": train.n,
        "missing_points": list(args.missing),
        "observed_columns": observed,
        "predicted": pred,
        "actual": row[missing],
        "rmse": float(np.sqrt(np.mean((pred - row[missing]) ** 2))),
    }


def cmd_cv(args: argparse.Namespace, run: _Run) -> dict:
    data = ShapeDataset.from_csv(args.input, exclude=_labels(args.exclude))
    res = cv_grid_search(data, args.rho_grid, args.alpha_grid, args.q, args.m, args.threads)
    run.csv("cv_scores.csv", np.column_stack([res.rho_grid, res.scores]),
            ["rho"] + [f"alpha={a!r}" for a in res.alpha_grid])
    out = res.to_dict()
    out.update({"n": data.n, "p": data.p, "q": args.q, "m": float(data.p) if args.m is None else args.m})
    return out


def _float_triple(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(t) for t in text.split(","))
    except ValueError:
        vals = ()
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return vals  # type: ignore[return-value]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="piwcov", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp: argparse.ArgumentParser, seeded: bool = False, reps: int | None = None) -> None:
        sp.add_argument("--out", help="directory for JSON, CSV and manifest artifacts")
        sp.add_argument("--threads", type=int, default=1)
        if seeded:
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--reps", type=int, default=reps)

    sp = sub.add_parser("estimate", help="MAP covariance of a data matrix")
    sp.add_argument("--input", required=True, help="CSV with one observation per row")
    sp.add_argument("--q", type=int, default=2)
    sp.add_argument("--m", type=_parse_m, default=None, help="degrees of freedom or 'auto' (= p)")
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--psi", default=None, help="CSV path, 'identity' or 'ar1:RHO'")
    sp.add_argument("--tol", type=float, default=1e-13)
    common(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("simulate", help="Monte-Carlo risk of one estimator in one cell")
    sp.add_argument("--scenario", choices=("identity", "spiked"), default="identity")
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--estimator", choices=("piw", "mle", "linear"), default="piw")
    sp.add_argument("--q", type=int, default=2)
    sp.add_argument("--floor", type=float, default=1.0)
    sp.add_argument("--shrink-factor", type=float, default=1.0)
    sp.add_argument("--slope", type=float)
    sp.add_argument("--intercept", type=float)
    common(sp, seeded=True, reps=2000)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("tables", help="reproduce a risk table")
    sp.add_argument("--which", type=int, choices=(1, 2, 3), required=True)
    sp.add_argument("--cells", type=_parse_cells, default=None, help="subset as 'p,n;p,n'")
    sp.add_argument("--quantile-reps", type=int, default=10_000)
    common(sp, seeded=True, reps=2000)
    sp.set_defaults(func=cmd_tables)

    sp = sub.add_parser("asymptotics", help="largest-eigenvalue centering and matching")
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--q", type=int, default=2)
    sp.add_argument("--m", type=_parse_m, default=None)
    sp.add_argument("--alpha", type=float, default=1.0)
    common(sp, seeded=True, reps=500)
    sp.set_defaults(func=cmd_asymptotics)

    sp = sub.add_parser("ratio-curves", help="log density ratio against the inverse Wishart")
    sp.add_argument("--config", type=_float_triple, action="append", required=True, help="q,m_q,m_1 (repeatable)")
    sp.add_argument("--grid", type=_float_triple, default=(0.05, 5.0, 200.0), help="start,stop,count")
    sp.add_argument("--log", action="store_true", help="geometric grid")
    sp.add_argument("--p", type=int, default=1, help="dimension; grid points are lambda * ones(p)")
    common(sp)
    sp.set_defaults(func=cmd_ratio_curves)

    def shape_flags(sp: argparse.ArgumentParser, prior: bool = True) -> None:
        sp.add_argument("--input", required=True, help="shape CSV, one shape per row")
        sp.add_argument("--exclude", action="append", help="shape labels to drop (comma-separated)")
        sp.add_argument("--q", type=int, default=2)
        sp.add_argument("--m", type=_parse_m, default=None)
        if prior:
            sp.add_argument("--rho", type=float, required=True)
            sp.add_argument("--alpha", type=float, required=True)

    sp = sub.add_parser("fit-shapes", help="MAP fit of shape data with a block AR(1) scale")
    shape_flags(sp)
    sp.add_argument("--k", type=int, default=4, help="eigenvectors to export")
    common(sp)
    sp.set_defaults(func=cmd_fit_shapes)

    sp = sub.add_parser("predict", help="EBLUP of missing points of one shape")
    shape_flags(sp)
    sp.add_argument("--target", required=True, help="label of the shape to complete")
    sp.add_argument("--missing", type=_parse_range, required=True, help="interior point range start:stop")
    sp.add_argument("--estimator", choices=("map", "mle"), default="map")
    common(sp)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("cv", help="leave-one-out search over (rho, alpha)")
    shape_flags(sp, prior=False)
    sp.add_argument("--rho-grid", type=_parse_grid, required=True)
    sp.add_argument("--alpha-grid", type=_parse_grid, required=True)
    common(sp)
    sp.set_defaults(func=cmd_cv)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    ctx = _Run(["piwcov", *argv], args)
    try:
        ctx.finish(args.func(args, ctx))
    except NumericalError as exc:
        print(f"piwcov: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (PiwError, ValueError, OSError) as exc:
        print(f"piwcov: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Command-line front end: ``blockcov <subcommand> [options]``.

Every command writes one table, as CSV (6 significant digits, ``#``-prefixed
metadata header) or JSON (full precision, metadata under ``"meta"``).
Exit status is 0 on success, 2 for invalid options and 3 for numerical
failures.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .convergence import DEFAULT_BETA_GRID, convergence_sweep, multiblock_limit_check
from .discriminant import EstimatorConfig, cross_validate, load_csv, load_iris, parse_scheme
from .errors import BlockCovError, NegativeCoefficientError, SingularScatterError, SingularSystemError
from .estimators import STANDARD_KINDS, EstimatorKind
from .linalg import BlockPartition, EigenSpec, random_orthogonal
from .moments import moment_table
from .risk import BOTH_LOSSES, LossKind, risk_table_block
from .sampling import RandomStream, split_stream

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
MAX_P = 12


class ConfigError(ValueError):
    pass


@dataclass
class Table:
    columns: list
    rows: list
    meta: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


# -- formatting -------------------------------------------------------------------

def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".6g")
    s = str(v)
    return f'"{s}"' if ("," in s or '"' in s) else s


def _json_value(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.ndarray):
        return [_json_value(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {str(k): _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


def render(table: Table, fmt: str) -> str:
    if fmt == "json":
        doc = {"meta": table.meta, "columns": table.columns, "rows": table.rows}
        doc.update(table.extra)
        return json.dumps(_json_value(doc), indent=2) + "\n"
    out = io.StringIO()
    for k, v in table.meta.items():
        out.write(f"# {k}: {v if not isinstance(v, (list, tuple)) else ','.join(map(str, v))}\n")
    for k, v in table.extra.items():
        out.write(f"# {k}: {json.dumps(_json_value(v))}\n")
    out.write(",".join(table.columns) + "\n")
    for row in table.rows:
        out.write(",".join(_csv_cell(v) for v in row) + "\n")
    return out.getvalue()


# -- option parsing helpers ------------------------------------------------------------

def _float_list(text: str) -> list:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _int_list(text: str) -> list:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _check_pmn(p, m, n_values):
    if not 1 <= m < p <= MAX_P:
        raise ConfigError(f"need 1 <= m < p <= {MAX_P}, got p={p}, m={m}")
    for n in n_values:
        if n < p:
            raise ConfigError(f"need n >= p, got n={n}, p={p}")


def _check_reps(reps):
    if reps is not None and reps < 1:
        raise ConfigError("--reps must be at least 1")


def _meta(args, **more) -> dict:
    meta = {"program": "blockcov", "version": __version__, "command": args.command, "seed": args.seed}
    meta.update(more)
    return meta


# -- commands ---------------------------------------------------------------------

def _block_rows(block, n_col=False):
    rows = []
    lead = [block.n] if n_col else []
    for i in range(block.p):
        rows.append(lead + [f"c_{i + 1}"] + [block.coefficients[k].c[i] for k in STANDARD_KINDS])
    for lk in BOTH_LOSSES:
        rows.append(lead + [f"Asy.Risk{lk.index}"] + [block.risk(lk, k).value for k in STANDARD_KINDS])
        rows.append(lead + [f"R.R.R.{lk.index}"] + [block.risk(lk, k).rrr_vs_u for k in STANDARD_KINDS])
    return rows


def _estimator_columns():
    return [k.label for k in STANDARD_KINDS]


def cmd_coeffs(args) -> Table:
    _check_pmn(args.p, args.m, [args.n])
    _check_reps(args.reps)
    reps = args.reps or 1_000_000
    moments = moment_table(args.p, args.m, args.n, RandomStream(args.seed), reps=reps, threads=args.threads)
    block = risk_table_block(args.p, args.m, args.n, moments)
    meta = _meta(args, p=args.p, m=args.m, n=args.n, reps=reps, moments=",".join(moments.methods))
    return Table(["row"] + _estimator_columns(), _block_rows(block), meta)


def cmd_moments(args) -> Table:
    _check_pmn(args.p, args.m, [args.n])
    _check_reps(args.reps)
    mode = "exact" if args.exact_only else "mc" if args.mc_only else "auto"
    reps = args.reps or 1_000_000
    table = moment_table(args.p, args.m, args.n, RandomStream(args.seed), mode=mode, reps=reps,
                         threads=args.threads)
    rows = [[i + 1, table.e1[i], table.e2[i], table.methods[i], table.stderr1[i], table.stderr2[i]]
            for i in range(table.p)]
    meta = _meta(args, p=args.p, m=args.m, n=args.n, mode=mode, reps=reps)
    return Table(["i", "e1", "e2", "method", "stderr_e1", "stderr_e2"], rows, meta)


def cmd_risk_table(args) -> Table:
    _check_pmn(args.p, args.m, args.n_list)
    _check_reps(args.reps)
    reps = args.reps or 1_000_000
    losses = BOTH_LOSSES if args.loss == "both" else (LossKind(args.loss),)
    rows = []
    for j, n in enumerate(args.n_list):
        moments = moment_table(args.p, args.m, n, split_stream(RandomStream(args.seed), j), reps=reps,
                               threads=args.threads)
        block = risk_table_block(args.p, args.m, n, moments)
        keep = {f"Asy.Risk{lk.index}" for lk in losses} | {f"R.R.R.{lk.index}" for lk in losses}
        rows.extend(r for r in _block_rows(block, n_col=True) if r[1].startswith("c_") or r[1] in keep)
    meta = _meta(args, p=args.p, m=args.m, n_list=args.n_list, loss=args.loss, reps=reps)
    return Table(["n", "row"] + _estimator_columns(), rows, meta)


def _beta_columns(grid):
    return [format(b, "g") for b in grid]


def _sweep(args, with_probs: bool):
    _check_pmn(args.p, args.m, [args.n])
    _check_reps(args.reps)
    if any(b <= 0 or b > 1 for b in args.beta_list):
        raise ConfigError("beta values must lie in (0, 1]")
    stream = RandomStream(args.seed)
    gamma = None
    if getattr(args, "random_gamma", False):
        gamma = random_orthogonal(args.p, split_stream(stream, 1_000).generator())
    return convergence_sweep(args.p, args.m, args.n, args.beta_list, reps=args.reps, stream=stream,
                             gamma=gamma, threads=args.threads)


def cmd_risk_sweep(args) -> Table:
    args.reps = args.reps or 100_000
    rep = _sweep(args, False)
    rows = [[label] + vals + [asym] for label, vals, asym in rep.risk_rows()]
    meta = _meta(args, p=args.p, m=args.m, n=args.n, reps=args.reps)
    return Table(["row"] + _beta_columns(rep.beta_grid) + ["Asymp."], rows, meta)


def cmd_converge(args) -> Table:
    args.reps = args.reps or 1_000_000
    rep = _sweep(args, True)
    rows = [[label] + vals + [asym] for label, vals, asym in rep.prob_rows()]
    rows += [[label] + vals + [asym] for label, vals, asym in rep.risk_rows()]
    meta = _meta(args, p=args.p, m=args.m, n=args.n, reps=args.reps, random_gamma=bool(args.random_gamma))
    return Table(["row"] + _beta_columns(rep.beta_grid) + ["Asymp."], rows, meta)


def cmd_multiblock(args) -> Table:
    _check_reps(args.reps)
    cuts = args.cuts
    if cuts[0] != 0:
        cuts = [0] + cuts
    try:
        part = BlockPartition(tuple(cuts))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if part.p > MAX_P:
        raise ConfigError(f"p must be at most {MAX_P}")
    if args.n < part.p:
        raise ConfigError(f"need n >= p, got n={args.n}, p={part.p}")
    scales = args.ratios or [10.0 ** (-6 * s) for s in range(part.k)]
    if len(scales) != part.k:
        raise ConfigError(f"need {part.k} ratios, got {len(scales)}")
    try:
        spec = EigenSpec(part, (1.0,) * part.p, tuple(scales))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    reps = args.reps or 100_000
    rep = multiblock_limit_check(spec, args.n, reps=reps, stream=RandomStream(args.seed), threads=args.threads)
    rows = [[c.name, c.estimate, c.target, c.stderr, c.z, c.passed(5.0)] for c in rep.checks]
    meta = _meta(args, cuts=list(part.cut_points), ratios=list(scales), n=args.n, reps=reps)
    return Table(["check", "estimate", "target", "stderr", "z", "pass"], rows, meta,
                 {"all_pass": rep.passed(5.0)})


def cmd_classify(args) -> Table:
    try:
        scheme = parse_scheme(args.scheme)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    ds = load_iris() if args.data is None else load_csv(args.data, args.label_column)
    config = EstimatorConfig(EstimatorKind(args.estimator), args.m, args.dof)
    if config.kind in (EstimatorKind.MA1, EstimatorKind.MA2) and not 1 <= args.m < ds.p:
        raise ConfigError(f"need 1 <= m < p={ds.p}")
    rep = cross_validate(ds, scheme, config, skip_singular=args.skip_singular, threads=args.threads)
    if scheme.name == "loo":
        rows = [["all", rep.trials, rep.correct, rep.ccp]]
    else:
        kept = [f for f in range(1, len(rep.fold_ccp) + len(rep.skipped_folds) + 1) if f not in rep.skipped_folds]
        rows = [[f, t, round(c * t / 100.0), c] for f, t, c in zip(kept, rep.fold_trials, rep.fold_ccp)]
    summary = {
        "scheme": rep.scheme, "estimator": config.kind.label, "m": args.m, "dof": args.dof,
        "trials": rep.trials, "correct": rep.correct, "ccp": rep.ccp, "average": rep.average,
        "skipped_folds": rep.skipped_folds,
        "misclassified": [list(x) for x in rep.misclassified],
    }
    meta = _meta(args, data=ds.source)
    return Table(["fold", "trials", "correct", "ccp"], rows, meta, {"summary": summary})


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    common.add_argument("--reps", type=int, default=None, help="Monte Carlo replicates")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--output", "-o", default=None, help="write to this file instead of stdout")

    parser = argparse.ArgumentParser(prog="blockcov", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"blockcov {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def pmn(sp, n_list=False):
        sp.add_argument("--p", type=int, required=True)
        sp.add_argument("--m", type=int, required=True)
        if n_list:
            sp.add_argument("--n-list", type=_int_list, default=[4, 6, 8, 10, 20, 50])
        else:
            sp.add_argument("--n", type=int, required=True)

    sp = sub.add_parser("coeffs", parents=[common], help="coefficients and asymptotic risks of all estimators")
    pmn(sp)
    sp.add_argument("--all", action="store_true", help="all five estimators (always on; kept for symmetry)")
    sp.set_defaults(func=cmd_coeffs)

    sp = sub.add_parser("moments", parents=[common], help="ordered-eigenvalue moments d_1..d_p")
    pmn(sp)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--exact-only", action="store_true")
    g.add_argument("--mc-only", action="store_true")
    sp.set_defaults(func=cmd_moments)

    sp = sub.add_parser("risk-table", parents=[common], help="coefficient/risk blocks for several n")
    pmn(sp, n_list=True)
    sp.add_argument("--loss", choices=("stein", "quadratic", "both"), default="both")
    sp.set_defaults(func=cmd_risk_table)

    sp = sub.add_parser("risk-sweep", parents=[common], help="Monte Carlo risks over a beta grid")
    pmn(sp)
    sp.add_argument("--beta-list", type=_float_list, default=list(DEFAULT_BETA_GRID))
    sp.set_defaults(func=cmd_risk_sweep)

    sp = sub.add_parser("converge", parents=[common], help="convergence probabilities and risks over a beta grid")
    pmn(sp)
    sp.add_argument("--beta-list", type=_float_list, default=list(DEFAULT_BETA_GRID))
    sp.add_argument("--random-gamma", action="store_true", help="draw a random orthogonal Gamma")
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("multiblock", parents=[common], help="limit-law moment checks for k >= 2 blocks")
    sp.add_argument("--cuts", type=_int_list, required=True, help="block cut points, e.g. 1,3,4")
    sp.add_argument("--ratios", type=_float_list, default=None, help="block scales, decreasing")
    sp.add_argument("--n", type=int, required=True)
    sp.set_defaults(func=cmd_multiblock)

    sp = sub.add_parser("classify", parents=[common], help="cross-validated Mahalanobis classification")
    sp.add_argument("--data", default=None, help="CSV file with a header row (default: bundled iris)")
    sp.add_argument("--label-column", default="species")
    sp.add_argument("--scheme", default="loo", help="loo or kset:K")
    sp.add_argument("--estimator", choices=[k.value for k in STANDARD_KINDS], default="u")
    sp.add_argument("--m", type=int, default=1)
    sp.add_argument("--dof", choices=("n-1", "n"), default="n-1")
    sp.add_argument("--skip-singular", action="store_true",
                    help="leave out folds whose learning set has a singular scatter matrix")
    sp.set_defaults(func=cmd_classify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("blockcov: error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        table = args.func(args)
    except (SingularSystemError, NegativeCoefficientError, SingularScatterError) as exc:
        print(f"blockcov: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError) as exc:
        print(f"blockcov: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlockCovError as exc:
        print(f"blockcov: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text = render(table, args.format)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command line interface: ``hazardrisk <subcommand> [options]``.

Exit codes: 0 success, 2 invalid input, 3 runtime failure. Every output
file goes into ``--out`` and is written atomically.
"""

import argparse
import json
import logging
import os
import re
import sys

import numpy as np

from . import __version__
from .dependence import fit_gaussian_copula, joint_to_dict, JointModel
from .errors import HazardRiskError, ValidationError
from .risk import export_sa_views, sobol_first_order
from .scenario import (build_report, canonical_json, design_csv, digest, load_dataset, load_scenario,
                       number, parse_screening_config, report_bytes, run_screening, screening_design,
                       simulate, write_atomic)
from .stats import fit_marginal, pit_transform

logger = logging.getLogger("hazardrisk")


def _common(parser):
    g = parser.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (overrides the config)")
    g.add_argument("--samples", type=int, default=argparse.SUPPRESS, help="Monte Carlo sample count")
    g.add_argument("--alpha", type=float, default=argparse.SUPPRESS, help="significance level (default 0.05)")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: current directory)")
    g.add_argument("--config", action="append", default=argparse.SUPPRESS,
                   help="scenario or design JSON; repeat for several scenarios in 'report'")


def build_parser():
    parser = argparse.ArgumentParser(prog="hazardrisk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    _common(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-marginal", help="fit a univariate distribution to one CSV column")
    p.add_argument("data")
    p.add_argument("--column", required=True)
    p.add_argument("--family", required=True)
    _common(p)

    p = sub.add_parser("fit-copula", help="fit marginals plus a Gaussian copula to CSV columns")
    p.add_argument("data")
    p.add_argument("--columns", required=True, help="comma-separated column names")
    p.add_argument("--families", required=True, help="comma-separated families, one per column")
    _common(p)

    p = sub.add_parser("screen", help="emit a screening design; with responses, fit and select terms")
    p.add_argument("--responses", help="CSV of responses, rows aligned with design.csv")
    p.add_argument("--response-column", default="y")
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo risk estimate for one scenario")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--write-samples", action="store_true", help="also write samples.csv")
    _common(p)

    p = sub.add_parser("sa", help="Sobol indices and scatter/parallel-coordinates data")
    p.add_argument("--output", help="output node (default: the scenario's risk output)")
    p.add_argument("--inputs", help="comma-separated input columns (default: all stochastic columns)")
    p.add_argument("--workers", type=int, default=1)
    _common(p)

    p = sub.add_parser("report", help="consolidated risk report over one or more scenarios")
    p.add_argument("scenarios", nargs="*", help="scenario JSON files (in addition to --config)")
    p.add_argument("--workers", type=int, default=1)
    _common(p)
    return parser


def _opt(args, name, default=None):
    return getattr(args, name, default)


def _out(args, name):
    out = _opt(args, "out", ".")
    os.makedirs(out, exist_ok=True)
    if os.path.basename(name) != name:
        raise ValidationError(f"refusing to write outside the output directory: {name!r}")
    return os.path.join(out, name)


def _emit(args, name, data):
    path = _out(args, name)
    write_atomic(path, data)
    logger.info("wrote %s", path)
    return path


def _json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _one_config(args):
    configs = _opt(args, "config") or []
    if len(configs) != 1:
        raise ValidationError(f"this subcommand needs exactly one --config, got {len(configs)}")
    return configs[0]


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def _file_digest(path):
    with open(path, "rb") as fh:
        return digest(fh.read())


def cmd_fit_marginal(args):
    ds = load_dataset(args.data, [args.column], allow_extra=True)
    dist = fit_marginal(ds[args.column], args.family)
    x = ds[args.column]
    result = {
        "column": args.column,
        "n": ds.n_rows,
        "distribution": dist.to_dict(),
        "log_likelihood": number(float(np.sum(dist.logpdf(x)))),
        "input_sha256": _file_digest(args.data),
    }
    _emit(args, "marginal.json", _json_text(result))
    print(canonical_json(dist.to_dict()))


def cmd_fit_copula(args):
    columns = [c.strip() for c in args.columns.split(",") if c.strip()]
    families = [f.strip() for f in args.families.split(",") if f.strip()]
    if len(columns) != len(families):
        raise ValidationError(f"{len(columns)} columns but {len(families)} families")
    ds = load_dataset(args.data, columns, allow_extra=True)
    marginals = [fit_marginal(ds[c], f) for c, f in zip(columns, families)]
    u = np.column_stack([pit_transform(ds[c], m) for c, m in zip(columns, marginals)])
    joint = JointModel(tuple(marginals), fit_gaussian_copula(u))
    result = {"columns": columns, "n": ds.n_rows, "joint": joint_to_dict(joint),
              "input_sha256": _file_digest(args.data)}
    _emit(args, "joint.json", _json_text(result))
    lines = [",".join(["", *columns])]
    for name, row in zip(columns, joint.copula.corr):
        lines.append(",".join([name, *(repr(float(v)) for v in row)]))
    _emit(args, "correlation.csv", "\n".join(lines) + "\n")


def cmd_screen(args):
    config = parse_screening_config(_read_json(_one_config(args)), _opt(args, "alpha"), _opt(args, "seed"))
    design = screening_design(config)
    _emit(args, "design.csv", design_csv(design, config.factors))
    if not args.responses:
        return
    ds = load_dataset(args.responses, [args.response_column], allow_extra=True)
    res = run_screening(config, ds[args.response_column], design)
    report = res.to_dict()
    report["input_sha256"] = _file_digest(args.responses)
    _emit(args, "screening.json", _json_text(report))
    lines = ["term,beta,ci_low,ci_high"]
    lines += [f"{t},{b!r},{lo!r},{hi!r}" for t, b, lo, hi in res.pareto]
    _emit(args, "pareto.csv", "\n".join(lines) + "\n")
    d = res.diagnostics
    order = np.argsort(d.residuals, kind="stable")
    lines = ["run,fitted,residual,qq_theoretical,qq_residual"]
    for i in range(d.residuals.size):
        lines.append(f"{int(d.run_index[i]) + 1},{float(d.fitted[i])!r},{float(d.residuals[i])!r},"
                     f"{float(d.qq_theoretical[i])!r},{float(d.residuals[order[i]])!r}")
    _emit(args, "residuals.csv", "\n".join(lines) + "\n")
    print("selected:", " ".join(res.selected) or "(none)")
    if res.not_estimable:
        print("not estimable:", " ".join(res.not_estimable))


def _scenario(path, args):
    return load_scenario(path, _opt(args, "seed"), _opt(args, "samples"))


def cmd_simulate(args):
    spec = _scenario(_one_config(args), args)
    result = simulate(spec, workers=args.workers)
    _emit(args, "report.json", report_bytes(build_report([result])))
    if args.write_samples:
        _emit(args, "samples.csv", result.table.to_csv())
    print(f"{spec.id}: p = {result.primary.format()}, rate = {result.primary.format_rate()}")


def _safe_name(name):
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def cmd_sa(args):
    spec = _scenario(_one_config(args), args)
    graph = spec.graph()
    table = simulate(spec, workers=args.workers).table
    output = args.output or spec.risk_output
    if output not in table.columns:
        raise ValidationError(f"unknown output column {output!r}")
    if args.inputs:
        inputs = [c.strip() for c in args.inputs.split(",") if c.strip()]
        unknown = [c for c in inputs if c not in table.columns]
        if unknown:
            raise ValidationError(f"unknown input column(s) {unknown}")
    else:
        inputs = [c for c in graph.stochastic_columns if c != output]
    lines = ["input,first_order"]
    for c in inputs:
        lines.append(f"{c},{sobol_first_order(table, c, output)!r}")
    _emit(args, "sobol.csv", "\n".join(lines) + "\n")
    views = export_sa_views(table, output, inputs)
    for c in inputs:
        _emit(args, f"scatter_{_safe_name(c)}.csv", views.scatter_csv(c))
    _emit(args, "parallel.csv", views.parallel_csv())
    _emit(args, "normalization.csv", views.normalization_csv())


def cmd_report(args):
    paths = list(_opt(args, "config") or []) + list(args.scenarios)
    if not paths:
        raise ValidationError("report needs at least one scenario (--config or positional)")
    results = [simulate(_scenario(p, args), workers=args.workers) for p in paths]
    ids = [r.spec.id for r in results]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate scenario ids {ids}")
    report = build_report(results)
    _emit(args, "report.json", report_bytes(report))
    for level, agg in report.get("aggregate", {}).items():
        verdict = "pass" if agg["pass"] else "FAIL"
        print(f"{level}: total {agg['total']['decimal']} /h vs budget {agg['budget']['decimal']} /h -> {verdict}")


COMMANDS = {
    "fit-marginal": cmd_fit_marginal,
    "fit-copula": cmd_fit_copula,
    "screen": cmd_screen,
    "simulate": cmd_simulate,
    "sa": cmd_sa,
    "report": cmd_report,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (HazardRiskError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - last-resort runtime failure
        logger.debug("unexpected failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

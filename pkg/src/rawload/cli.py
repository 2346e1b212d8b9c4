"""Command-line entry point: ``rawload <subcommand> ...``.

Exit codes: 0 ok, 1 calibration failure, 2 usage, 3 instance too large,
4 mode unsupported, 5 I/O error, 6 invalid input document.
Input paths of the form ``fixture:NAME`` refer to bundled workload documents.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .baselines import TooManyGroups, agrawal, chu_search, navathe
from .costs import PIPELINED, SERIAL, evaluate
from .exact import InstanceTooLarge, LPFormatError, brute_force, export_mip_lp
from .fixtures import fixture_path
from .heuristic import HeuristicConfig, attribute_frequency, combined_sweep, query_coverage
from .model import (
    BudgetError,
    CostParams,
    LoadPlan,
    ModeError,
    Workload,
    WorkloadError,
    dump_workload,
    gen_synthetic_workload,
    params_from_dict,
    params_to_dict,
    uniform_params,
    workload_from_dict,
)

EXIT_OK, EXIT_CALIBRATION, EXIT_USAGE, EXIT_TOO_LARGE, EXIT_MODE, EXIT_IO, EXIT_DOCUMENT = 0, 1, 2, 3, 4, 5, 6
ALGORITHMS = ("heuristic", "coverage", "frequency", "exact", "navathe", "chu", "agrawal")


class UsageError(Exception):
    pass


# -- inputs --------------------------------------------------------------------


def _resolve(path: str) -> Path:
    if path.startswith("fixture:"):
        return fixture_path(path[len("fixture:") :])
    return Path(path)


def _read_json(path: str):
    p = _resolve(path)
    with open(p, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise WorkloadError(f"{p}: not a JSON document: {exc}") from None


def _params_doc(doc) -> dict:
    return doc["params"] if isinstance(doc, dict) and "params" in doc else doc


def load_inputs(workload_path: str, params_path: str | None) -> tuple[CostParams, Workload]:
    """Params come from ``params_path`` when given, else from the workload document."""
    doc = _read_json(workload_path)
    if not isinstance(doc, dict) or not isinstance(doc.get("queries", []), list):
        raise WorkloadError("workload document must be an object with a 'queries' list")
    if params_path:
        params = params_from_dict(_params_doc(_read_json(params_path)))
    elif "params" in doc:
        params = params_from_dict(doc["params"])
    else:
        raise UsageError("the workload document has no params; pass --params")
    return params, workload_from_dict(doc.get("queries", []), params)


def budget_bytes(args, params: CostParams) -> float:
    if args.budget is not None and args.budget_attrs is not None:
        raise UsageError("give --budget or --budget-attrs, not both")
    if args.budget is not None:
        budget = args.budget
    elif args.budget_attrs is not None:
        # a "uniform attribute" is the mean column size
        mean_spf = sum(a.spf for a in params.attributes) / params.n
        budget = args.budget_attrs * mean_spf * params.row_count
    else:
        raise UsageError("a budget is required (--budget BYTES or --budget-attrs K)")
    if budget < 0:
        raise UsageError("the budget must be nonnegative")
    return float(budget)


def plan_attrs(args, params: CostParams) -> frozenset[int]:
    names: list[str] = []
    if args.plan:
        doc = _read_json(args.plan)
        if not isinstance(doc, dict) or not isinstance(doc.get("loaded"), list):
            raise WorkloadError("plan document needs a 'loaded' list of attribute names")
        names = doc["loaded"]
    if args.load is not None:
        names += [s for s in args.load.split(",") if s]
    return frozenset(params.index_of(str(a)) for a in names)


def _write(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


# -- subcommands ---------------------------------------------------------------


def cmd_calibrate(args) -> int:
    from .rawproc import calibrate

    params = calibrate(
        args.format,
        args.sample,
        args.rows,
        bandwidth=args.bandwidth,
        raw_size=args.raw_size,
        row_count=args.row_count,
        min_seconds=args.min_seconds,
    )
    _write(args.out, _dump({"params": params_to_dict(params)}))
    print(f"{'attribute':<16} {'spf':>5} {'t_tok (ns)':>11} {'t_parse (ns)':>13}", file=sys.stderr)
    for a in params.attributes:
        print(f"{a.name:<16} {a.spf:>5g} {a.t_tok * 1e9:>11.2f} {a.t_parse * 1e9:>13.2f}", file=sys.stderr)
    print(
        f"rows {params.row_count}  raw {params.raw_size:.0f} B  bandwidth {params.bandwidth:.4g} B/s  "
        f"mode {params.tokenization_mode.value}",
        file=sys.stderr,
    )
    return EXIT_OK


def optimize(params: CostParams, workload: Workload, budget: float, args) -> dict:
    mode, algo = args.mode, args.algo
    extra: dict = {}
    if algo == "heuristic":
        res = combined_sweep(params, workload, budget, HeuristicConfig(args.delta, mode))
        loaded = res.loaded
        extra["sweep"] = [
            {
                "coverage_budget": p.coverage_budget,
                "coverage": [params.attributes[j].name for j in sorted(p.coverage)],
                "loaded": [params.attributes[j].name for j in sorted(p.loaded)],
                "objective_sec": p.objective,
            }
            for p in res.sweep
        ]
    elif algo == "coverage":
        loaded = query_coverage(params, workload, budget, mode)
    elif algo == "frequency":
        loaded = attribute_frequency(params, workload, budget, mode=mode)
    elif algo == "exact":
        loaded, _ = brute_force(params, workload, budget, mode, workers=args.threads)
    elif algo == "navathe":
        loaded = navathe(params, workload, budget, mode)
    elif algo == "chu":
        res = chu_search(params, workload, budget, args.time_cap, mode, args.threads)
        loaded = res.loaded
        extra.update(evaluated=res.evaluated, time_capped=res.capped)
    else:
        loaded = agrawal(params, workload, budget, args.threshold, mode)
    plan = LoadPlan.of(params, loaded, budget)
    report = evaluate(params, workload, plan.loaded, mode)
    return {
        "algorithm": algo,
        "mode": mode,
        "budget_bytes": budget,
        "used_bytes": plan.used_bytes,
        "loaded": [params.attributes[j].name for j in sorted(plan.loaded)],
        "objective_sec": report.objective,
        "report": report.to_dict(params),
        **extra,
    }


def cmd_optimize(args) -> int:
    params, workload = load_inputs(args.workload, args.params)
    doc = optimize(params, workload, budget_bytes(args, params), args)
    _write(args.out, _dump(doc))
    print(f"{args.algo}: objective {doc['objective_sec']!r} s, loaded {doc['loaded']}", file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    params, workload = load_inputs(args.workload, args.params)
    loaded = plan_attrs(args, params)
    report = evaluate(params, workload, loaded, args.mode)
    if args.csv:
        _write(args.out, report.to_csv())
    else:
        _write(args.out, _dump(report.to_dict(params)))
    print(f"objective {report.objective!r} s", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .rawproc import measurements_to_csv, read_manifest, validate_model

    manifest = read_manifest(args.raw)
    doc = _read_json(args.workload)
    if not isinstance(doc, dict) or not isinstance(doc.get("queries"), list):
        raise WorkloadError("workload document must be an object with a 'queries' list")
    names = [c.name for c in manifest.schema]
    # queries are resolved against the file schema; sizes here only serve --budget-attrs
    schema_params = uniform_params(len(names), row_count=max(1, manifest.row_count), names=names,
                                   spf=[float(c.size) for c in manifest.schema])
    workload = workload_from_dict(doc["queries"], schema_params)
    loaded = None
    budget = None
    if args.plan or args.load is not None:
        loaded = plan_attrs(args, schema_params)
    else:
        budget = budget_bytes(args, schema_params)
    v = validate_model(
        args.raw,
        workload,
        budget,
        args.mode,
        loaded=loaded,
        sample_rows=args.rows,
        bandwidth=args.bandwidth,
        repeats=args.repeats,
        threads=args.threads,
        warmup_seconds=args.min_seconds,
        dataset_dir=args.dataset_dir,
    )
    _write(args.out, v.to_csv())
    if args.measurements:
        _write(args.measurements, measurements_to_csv(v.measurements))
    if args.params_out:
        _write(args.params_out, _dump({"params": params_to_dict(v.params)}))
    print(
        f"loaded {[names[j] for j in sorted(v.loaded)]}; max relative error {max(v.rel_errors(), default=0):.3f}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_export_lp(args) -> int:
    params, workload = load_inputs(args.workload, args.params)
    _write(args.out, export_mip_lp(params, workload, budget_bytes(args, params), args.mode))
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.kind == "workload":
        if args.attrs is None or args.queries is None:
            raise UsageError("gen workload needs --attrs and --queries")
        workload = gen_synthetic_workload(
            args.attrs, args.queries, args.mean_width, args.std_width, args.active or args.attrs, args.seed
        )
        params = uniform_params(args.attrs, mode=args.tokenization)
        _write(args.out, dump_workload(params, workload))
        return EXIT_OK

    from .rawproc import RawFormat, RawKind, default_csv_schema, default_json_schema, gen_raw, rows_for_size

    if args.out in (None, "-"):
        raise UsageError("gen raw needs --out PATH")
    fmt = RawFormat.parse(args.format)
    if args.startup_per_attr:
        if fmt.kind is not RawKind.BINARY:
            raise UsageError("--startup-per-attr applies to binary files only")
        fmt = dataclasses.replace(fmt, startup_sec_per_attr=args.startup_per_attr)
    if fmt.kind is RawKind.JSON:
        schema = default_json_schema(args.levels, args.fanout, args.leaves)
    else:
        schema = default_csv_schema(args.attrs or 24)
    if (args.rows is None) == (args.size is None):
        raise UsageError("gen raw needs exactly one of --rows or --size")
    rows = args.rows if args.rows is not None else rows_for_size(fmt, schema, args.size, args.seed)
    m = gen_raw(fmt, schema, rows, args.seed, args.out)
    print(f"wrote {m.row_count} records, {m.size_bytes} bytes, {len(schema)} attributes", file=sys.stderr)
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _budget_flags(p):
    p.add_argument("--budget", type=float, help="storage budget in bytes")
    p.add_argument("--budget-attrs", type=float, help="budget as a count of mean-sized columns")


def _plan_flags(p):
    p.add_argument("--plan", help="LoadPlan JSON (its 'loaded' names are used)")
    p.add_argument("--load", help="comma-separated attribute names to load")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rawload", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="estimate cost parameters from a sample of a raw file")
    p.add_argument("--format", required=True, choices=["csv", "json", "binary"])
    p.add_argument("--sample", required=True, help="raw file with a manifest sidecar")
    p.add_argument("--rows", required=True, type=int, help="records to sample (>= 1000)")
    p.add_argument("--out", required=True)
    p.add_argument("--bandwidth", type=float, help="emulate a device of this many bytes/s")
    p.add_argument("--raw-size", type=float)
    p.add_argument("--row-count", type=int)
    p.add_argument("--min-seconds", type=float, default=3.0, help="minimum calibration time")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("optimize", help="choose the attributes to load")
    p.add_argument("--workload", required=True)
    p.add_argument("--params", help="CostParams document overriding the workload's")
    _budget_flags(p)
    p.add_argument("--algo", choices=ALGORITHMS, default="heuristic")
    p.add_argument("--mode", choices=[SERIAL, PIPELINED], default=SERIAL)
    p.add_argument("--delta", type=float, help="heuristic sweep step in bytes (default budget/10)")
    p.add_argument("--time-cap", type=float, default=60.0, help="chu search limit in seconds")
    p.add_argument("--threshold", type=float, default=0.2, help="agrawal column-group threshold")
    p.add_argument("--threads", type=int, default=1, help="worker processes for exact")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="cost report of a load plan")
    p.add_argument("--workload", required=True)
    p.add_argument("--params")
    _plan_flags(p)
    p.add_argument("--mode", choices=[SERIAL, PIPELINED], default=SERIAL)
    p.add_argument("--csv", action="store_true", help="cumulative seconds as CSV")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="run a workload on a raw file and compare with the model")
    p.add_argument("--raw", required=True, help="raw file with a manifest sidecar")
    p.add_argument("--workload", required=True, help="document whose queries name schema attributes")
    _plan_flags(p)
    _budget_flags(p)
    p.add_argument("--mode", choices=[SERIAL, PIPELINED], default=SERIAL)
    p.add_argument("--bandwidth", type=float, help="emulated device bytes/s (default: measured)")
    p.add_argument("--rows", type=int, default=5000, help="calibration sample records")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--threads", type=int, default=1, help="extraction consumers when pipelined")
    p.add_argument("--min-seconds", type=float, default=3.0, help="calibration time before the run")
    p.add_argument("--dataset-dir", help="directory for loaded column files")
    p.add_argument("--measurements", help="write per-phase measurements CSV here")
    p.add_argument("--params-out", help="write the calibrated params here")
    p.add_argument("--out", default="-", help="predicted vs measured cumulative CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export-lp", help="write the MIP in CPLEX LP format")
    p.add_argument("--workload", required=True)
    p.add_argument("--params")
    _budget_flags(p)
    p.add_argument("--mode", choices=[SERIAL, PIPELINED], default=SERIAL)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_export_lp)

    p = sub.add_parser("gen", help="synthetic workload or raw file")
    p.add_argument("kind", choices=["workload", "raw"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.add_argument("--attrs", type=int, help="attribute count (workload; csv/binary raw)")
    p.add_argument("--queries", type=int)
    p.add_argument("--mean-width", type=float, default=3.0)
    p.add_argument("--std-width", type=float, default=1.5)
    p.add_argument("--active", type=int, help="attributes queries draw from (default all)")
    p.add_argument("--tokenization", choices=["prefix", "atomic", "none"], default="prefix")
    p.add_argument("--format", choices=["csv", "json", "binary"], default="csv")
    p.add_argument("--rows", type=int)
    p.add_argument("--size", type=int, help="approximate file size in bytes")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--fanout", type=int, default=2)
    p.add_argument("--leaves", type=int, default=4)
    p.add_argument("--startup-per-attr", type=float, default=0.0, help="binary reader set-up seconds per attribute")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    from .rawproc import CalibrationError

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with 2
    except (InstanceTooLarge, TooManyGroups) as exc:
        print(f"rawload: instance too large: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE
    except ModeError as exc:
        print(f"rawload: mode unsupported: {exc}", file=sys.stderr)
        return EXIT_MODE
    except CalibrationError as exc:
        print(f"rawload: calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (WorkloadError, BudgetError, LPFormatError, KeyError) as exc:
        print(f"rawload: invalid input: {exc}", file=sys.stderr)
        return EXIT_DOCUMENT
    except OSError as exc:
        print(f"rawload: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        parser.error(str(exc))


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .augment import AugmentError, AugmentPlan, apply_plan, default_plan_config, plan_config, provenance
from .fleet import (AugmentModels, FleetDataError, DEFAULT_MODELS, fit_models, read_fleet_csv,
                    read_line_points_csv, read_prices_csv)
from .matpower import CaseFileError, parse, lower, read_network, write
from .network import validate
from .opf.gap import RELAXATIONS, gap_table, to_json, to_markdown
from .opf.formulations import Model
from .opf.ipm import IpmOptions
from .powerflow import PowerFlowError, check_operational, solve_pf
from .scenarios import ScenarioError, gen_api, gen_sad

log = logging.getLogger("gridcurate")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3
SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _models_list(text: str) -> list[Model]:
    try:
        return [Model(m.strip().lower().replace("+", "")) for m in text.split(",") if m.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"models must be drawn from cp, nfll, soc; got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gridcurate", description="Curate, augment and evaluate AC transmission test cases.")
    p.add_argument("--version", action="version", version=f"gridcurate {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more diagnostics on standard error")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit augmentation models from fleet and price CSVs")
    f.add_argument("--fleet", required=True, help="generator CSV: status, energy_source, nameplate_mw, summer_mw")
    f.add_argument("--prices", required=True, help="price CSV: state, seds_label, price_per_mmbtu")
    f.add_argument("--lines", help="thermal-limit CSV: x_over_r, normalized_capacity, dataset")
    f.add_argument("--min-mw", type=float, default=5.0, help="nameplate floor in MW (default 5)")
    f.add_argument("--seed", type=_seed, help="seed for equal-proportion resampling; required with --lines")
    f.add_argument("-o", "--output", required=True, help="models JSON to write")
    f.add_argument("--force", action="store_true", help="allow overwriting an input file")

    a = sub.add_parser("augment", help="complete a case with the statistical models")
    a.add_argument("case", help="MATPOWER case file")
    a.add_argument("--plan", help="TOML or JSON plan (default: built-in recipe for power-flow cases)")
    a.add_argument("--seed", type=_seed, help="random seed; required unless the plan sets one")
    a.add_argument("--models", help="fitted models JSON (default: built-in parameters)")
    a.add_argument("--angle-bound", type=float, help="angle-difference bound in degrees, overrides the plan")
    a.add_argument("-o", "--output", help="output case (default: <case>__aug.m in the current directory)")
    a.add_argument("--log", help="augmentation log JSON (default: output path with .log.json)")
    a.add_argument("--force", action="store_true", help="allow overwriting an input file")

    v = sub.add_parser("validate", help="structural checks, power flow and operating-limit report")
    v.add_argument("cases", nargs="+", help="MATPOWER case files")
    v.add_argument("--format", choices=("table", "json"), default="table")
    v.add_argument("--no-pf", action="store_true", help="skip the power flow")
    v.add_argument("--pf-tol", type=float, default=1e-8, help="power-flow mismatch tolerance (p.u.)")

    g = sub.add_parser("gap-table", help="AC heuristic and relaxation bounds with optimality gaps")
    g.add_argument("cases", nargs="*", help="MATPOWER case files")
    g.add_argument("--models", type=_models_list, default=list(RELAXATIONS), help="comma list from cp,nfll,soc")
    g.add_argument("--format", choices=("md", "json"), default="md")
    g.add_argument("--jobs", type=int, default=None, help="worker processes (default: logical cores)")
    g.add_argument("--tol", type=float, default=None, help="interior-point KKT tolerance")
    g.add_argument("-o", "--output", help="write the table here instead of standard output")

    for name, helptext in (("gen-api", "congested variant by uniform demand increase"),
                           ("gen-sad", "variant with the smallest feasible angle-difference bound")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("case", help="MATPOWER case file")
        s.add_argument("--output-dir", default=".", help="directory for the case and its JSON log")
        s.add_argument("--tol", type=float, default=None, help="interior-point KKT tolerance")
        s.add_argument("--force", action="store_true", help="allow overwriting an input file")
        if name == "gen-api":
            s.add_argument("--seed", type=_seed, required=True, help="seed for the generator re-augmentation")
            s.add_argument("--models", help="fitted models JSON (default: built-in parameters)")
            s.add_argument("--active-only", action="store_true", help="scale active demand only")

    c = sub.add_parser("convert", help="parse and rewrite a case in normalized form")
    c.add_argument("case", help="MATPOWER case file")
    c.add_argument("-o", "--output", help="output file (default: standard output)")
    c.add_argument("--force", action="store_true", help="allow overwriting an input file")
    return p


# -- helpers -----------------------------------------------------------------------

def _guard(output: Path, inputs: Sequence[Optional[str]], force: bool) -> None:
    out = output.resolve()
    for i in inputs:
        if i is not None and Path(i).resolve() == out and not force:
            raise UsageError(f"refusing to overwrite input {i} (use --force)")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _options(tol: Optional[float]) -> Optional[IpmOptions]:
    return IpmOptions(tol=tol) if tol is not None else None


def _load_models(path: Optional[str]) -> AugmentModels:
    return AugmentModels.load(path) if path else DEFAULT_MODELS


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


# -- subcommands -------------------------------------------------------------------

def cmd_fit(args) -> int:
    if args.lines and args.seed is None:
        raise UsageError("fit: --seed is required with --lines")
    out = Path(args.output)
    _guard(out, [args.fleet, args.prices, args.lines], args.force)
    fleet = read_fleet_csv(args.fleet)
    prices = read_prices_csv(args.prices)
    points = read_line_points_csv(args.lines) if args.lines else None
    rng = np.random.default_rng(args.seed) if args.seed is not None else None
    models = fit_models(fleet, prices, args.min_mw, points, rng)
    _write(out, models.to_json())
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_augment(args) -> int:
    if args.plan:
        fmt = "json" if args.plan.endswith(".json") else "toml"
        cfg = plan_config(Path(args.plan).read_text(encoding="utf-8"), fmt)
    else:
        cfg = default_plan_config()
    if args.seed is None and "seed" not in cfg:
        raise UsageError("augment: a seed is required (--seed or a seed key in the plan)")
    plan = AugmentPlan.from_mapping(cfg, seed=args.seed, angle_bound_deg=args.angle_bound)
    if args.models:
        plan = replace(plan, models=_load_models(args.models))
    case = Path(args.case)
    out = Path(args.output) if args.output else Path(f"{case.stem}__aug.m")
    log_path = Path(args.log) if args.log else out.with_suffix(".log.json")
    _guard(out, [args.case, args.plan, args.models], args.force)
    _guard(log_path, [args.case, args.plan, args.models], args.force)
    net = read_network(case)
    new, alog = apply_plan(net, plan)
    _write(out, write(new, provenance(plan, case.name)))
    _write(log_path, alog.to_json(plan))
    log.info("wrote %s and %s (%d changes)", out, log_path, len(alog))
    return EXIT_OK


def cmd_validate(args) -> int:
    rows, worst = [], EXIT_OK
    for path in args.cases:
        net = read_network(path)
        structural = validate(net)
        entry = {"case": path, "structural": [vars(v) for v in structural], "operational": [], "power_flow": None}
        if structural:
            worst = max(worst, EXIT_DATA)
        elif not args.no_pf:
            try:
                sol = solve_pf(net, tolerance=args.pf_tol)
                entry["power_flow"] = {"converged": sol.converged, "iterations": sol.iterations,
                                       "mismatch_inf": sol.mismatch_inf}
                entry["operational"] = [vars(v) for v in check_operational(net, sol)]
            except PowerFlowError as exc:
                entry["power_flow"] = {"converged": False, "error": str(exc)}
                worst = max(worst, EXIT_SOLVER)
        rows.append(entry)
    if args.format == "json":
        sys.stdout.write(_dumps({"schema_version": SCHEMA_VERSION, "kind": "validate", "cases": rows}))
    else:
        for e in rows:
            pf = e["power_flow"]
            pf_txt = "skipped" if pf is None else (
                f"converged in {pf['iterations']} it" if pf.get("converged") else f"FAILED: {pf.get('error', '')}")
            sys.stdout.write(f"{e['case']}: power flow {pf_txt}\n")
            for kind in ("structural", "operational"):
                for v in e[kind]:
                    mag = f" ({v['magnitude']:.6g})" if v["magnitude"] else ""
                    sys.stdout.write(f"  {kind:<11} {v['kind']:<10} {v['element']}[{v['index']}] "
                                     f"{v['reason']}{mag}\n")
    return worst


def cmd_gap_table(args) -> int:
    reports = gap_table(args.cases, args.models, args.jobs, _options(args.tol))
    text = to_json(reports) if args.format == "json" else to_markdown(reports, args.models)
    if args.output:
        _guard(Path(args.output), args.cases, False)
        _write(Path(args.output), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _scenario_paths(args, suffix: str, name: str) -> tuple[Path, Path]:
    base = name if name.endswith(suffix) else f"{name}{suffix}"
    out = Path(args.output_dir) / f"{base}.m"
    _guard(out, [args.case], args.force)
    return out, out.with_suffix(".json")


def cmd_gen_api(args) -> int:
    net = read_network(args.case)
    res = gen_api(net, _load_models(args.models), args.seed, args.active_only, _options(args.tol))
    out, log_path = _scenario_paths(args, "__api", Path(args.case).stem)
    prov = [f"API variant generated by gridcurate {__version__}", f"source: {Path(args.case).name}",
            f"demand scale alpha: {res.alpha!r}", f"seed: {args.seed}",
            "generator models: GF-Stat (unlabelled units), AG-Stat, RG-AL50, AC-Stat"]
    _write(out, write(res.network, prov))
    doc = {"schema_version": SCHEMA_VERSION, "kind": "gen-api", "source": Path(args.case).name,
           "alpha": res.alpha, "active_only": args.active_only, "seed": args.seed,
           "augment_log": res.log.to_dict()}
    _write(log_path, _dumps(doc))
    log.info("alpha* = %.6g; wrote %s", res.alpha, out)
    return EXIT_OK


def cmd_gen_sad(args) -> int:
    net = read_network(args.case)
    res = gen_sad(net, _options(args.tol))
    out, log_path = _scenario_paths(args, "__sad", Path(args.case).stem)
    prov = [f"SAD variant generated by gridcurate {__version__}", f"source: {Path(args.case).name}",
            f"angle-difference bound: {res.theta_delta_deg!r} deg"]
    _write(out, write(res.network, prov))
    doc = {"schema_version": SCHEMA_VERSION, "kind": "gen-sad", "source": Path(args.case).name,
           "theta_delta_deg": res.theta_delta_deg}
    _write(log_path, _dumps(doc))
    log.info("theta_delta = %.4f deg; wrote %s", res.theta_delta_deg, out)
    return EXIT_OK


def cmd_convert(args) -> int:
    text = Path(args.case).read_text(encoding="utf-8")
    case = parse(text)
    net = lower(case)
    out_text = write(net, case.comments)
    if args.output:
        _guard(Path(args.output), [args.case], args.force)
        _write(Path(args.output), out_text)
    else:
        sys.stdout.write(out_text)
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "augment": cmd_augment, "validate": cmd_validate, "gap-table": cmd_gap_table,
            "gen-api": cmd_gen_api, "gen-sad": cmd_gen_sad, "convert": cmd_convert}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except PowerFlowError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (CaseFileError, FleetDataError, AugmentError, ScenarioError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

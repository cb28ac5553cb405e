"""
Command-line entry point.

    python main.py scenarios --config data/run.yaml
    python main.py plan --config data/run.yaml --mode aware --budget 400000
    python main.py nrcc --config data/run.yaml --budgets 0,200000,400000
    python main.py validate --config data/run.yaml --plan results/plan.json

Exit codes: 0 success, 2 violations found by ``validate``, 1 any error.
"""
import argparse
import logging
import sys

import pandas as pd

from adoption.agents import EconomicParams, agents_from_model
from adoption.baseyear import read_base_year, synthetic_base_year
from adoption.bass import DiffusionParams
from adoption.ensemble import ensemble_summary, run_ensemble, select_scenarios
from adoption.scenarios import GrowthScenarioSpec, build_heldout_set, build_scenario_set, sample_heldout
from config import check_paths, config_hash, load_config
from grid.errors import ConfigError, PlanExtractionError, PlanningError
from grid.io import load_feeder, read_scenario_set, write_scenario_set
from nrcc.evaluate import derive_expected_peaks
from nrcc.sweep import SweepConfig, add_dispersion, budget_grid, min_secure_cost, run_sweep
from planning.backends import make_backend, solve
from planning.lpfile import lp_text
from planning.models import AWARE, DETERMINISTIC, MODES, build_deterministic, build_scenario_based, \
    build_transmission_aware
from planning.plan import extract_plan, plan_json, read_plan
from powerflow.validate import validate_plan
from results import RUN_LOG, SWEEP_LOG, ResultBundle

logger = logging.getLogger("nrcc")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATIONS = 2
FORMATS = ("csv", "json", "table")


def setup_logging(out_dir, verbose=False):
    """Console at INFO (DEBUG with --verbose) plus a run.log in the output directory."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    root.setLevel(logging.DEBUG)
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.DEBUG if verbose else logging.INFO)
    console.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    root.addHandler(console)
    out_dir.mkdir(parents=True, exist_ok=True)
    logfile = logging.FileHandler(out_dir / RUN_LOG, mode="w", encoding="utf-8")
    logfile.setLevel(logging.DEBUG)
    logfile.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root.addHandler(logfile)


def emit(df, fmt, stream=None):
    """Print a read-out table as csv, json records or a markdown table."""
    stream = stream or sys.stdout
    if fmt == "json":
        stream.write(df.to_json(orient="records", indent=2) + "\n")
    elif fmt == "table":
        stream.write(df.to_markdown(index=False, floatfmt=".4g") + "\n")
    else:
        df.to_csv(stream, index=False, lineterminator="\n")


# ------------------------------------------------------------------ inputs


def load_inputs(config):
    model = load_feeder(config.path(config.feeder))
    if config.base_timeseries is not None:
        base = read_base_year(config.path(config.base_timeseries), config.path(config.pv_profile))
    else:
        base = synthetic_base_year(model, seed=config.seed, days=config.scenarios.base_days)
    return model, base


def growth_spec(config):
    return GrowthScenarioSpec(load_growth_rates=config.scenarios.load_growth_rates,
                              ensemble_size=config.scenarios.ensemble_size)


def simulate(config, model, base):
    """Adoption ensemble and the min / avg / max selection."""
    sc = config.scenarios
    try:
        params = DiffusionParams(p_innov=sc.p_innov, q_imit=sc.q_imit, dt=sc.dt, horizon=sc.horizon,
                                 seed=config.seed)
        econ = EconomicParams(capacity_factor_profile=base.pv_profile.reshape(-1),
                              hours_per_day=base.hours_per_day, **sc.economics)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario parameters: {exc}") from exc
    agents = agents_from_model(model, econ)
    runs = run_ensemble(model, params, agents, sc.ensemble_size, sc.mms_probability, config.jobs)
    return runs, select_scenarios(runs)


def planning_scenarios(config, model, base=None):
    """The planning ScenarioSet: from file when configured, else generated in memory."""
    if config.scenarios.scenario_file is not None:
        scenarios = read_scenario_set(config.path(config.scenarios.scenario_file), model.time.hours_per_day)
        logger.info("Loaded %d planning scenarios on %d days", len(scenarios), scenarios.time.n_days)
        return scenarios, None
    if base is None:
        model, base = load_inputs(config)
    runs, selected = simulate(config, model, base)
    scenarios = build_scenario_set(model, selected, growth_spec(config), base, config.scenarios.horizon)
    return scenarios, (runs, base)


def heldout_scenarios(config, model, scenarios, generated):
    count = config.nrcc.heldout
    if config.scenarios.heldout_file is not None:
        heldout = read_scenario_set(config.path(config.scenarios.heldout_file), model.time.hours_per_day)
    else:
        if generated is None:
            model, base = load_inputs(config)
            runs, _ = simulate(config, model, base)
        else:
            runs, base = generated
        heldout = build_heldout_set(model, runs, growth_spec(config), base, scenarios.time.day_ids,
                                    config.scenarios.horizon)
    if heldout.time.day_ids != scenarios.time.day_ids:
        raise ConfigError("held-out scenarios must cover the planning day set")
    return sample_heldout(heldout, count)


# ------------------------------------------------------------------ commands


def cmd_scenarios(config, bundle, args):
    model, base = load_inputs(config)
    runs, selected = simulate(config, model, base)
    growth = growth_spec(config)
    scenarios = build_scenario_set(model, selected, growth, base, config.scenarios.horizon)
    heldout = build_heldout_set(model, runs, growth, base, scenarios.time.day_ids, config.scenarios.horizon)

    for run in runs:
        trajectory = pd.DataFrame({
            "time_years": run.times,
            "adopted_fraction": run.adopted_fraction,
            "capacity_kw": run.capacity_trajectory_kw,
        })
        bundle.write_frame(f"trajectories/run{run.run_id:03d}.csv", trajectory)
    summary = ensemble_summary(runs, selected)
    bundle.write_frame("ensemble_summary.csv", summary)
    for name, data in (("scenarios.csv", scenarios), ("heldout.csv", heldout)):
        path = write_scenario_set(data, bundle.path(name))
        bundle.attach(path.name)
        bundle.attach(path.with_name(f"{path.stem}_labels.csv").name)
    logger.info("%d planning scenarios on days %s, %d held-out scenarios",
                len(scenarios), list(scenarios.time.day_ids), len(heldout))
    emit(summary, args.format)
    return EXIT_OK


def cmd_plan(config, bundle, args):
    pc = config.plan
    if pc.mode == AWARE and pc.budget is None:
        raise ConfigError("planning mode 'aware' needs a budget (--budget or plan.budget)")
    model = load_feeder(config.path(config.feeder))
    scenarios, _ = planning_scenarios(config, model)
    backend = make_backend(config.solver.backend, config.solver.settings())

    if pc.mode == DETERMINISTIC:
        problem = build_deterministic(model, scenarios)
    elif pc.mode == AWARE:
        expected = pc.expected_peaks
        if expected is None:
            peaks = derive_expected_peaks(model, scenarios, pc.weight_w, backend)
            expected = (peaks.direct_mw, peaks.reverse_mw)
        problem = build_transmission_aware(model, scenarios, pc.budget, pc.weight_w, expected)
    else:
        problem = build_scenario_based(model, scenarios)
    if args.write_lp:
        bundle.write_text("model.lp", lp_text(problem.spec))

    solution = solve(problem, backend)
    if not solution.has_values:
        raise PlanExtractionError(f"{pc.mode} model ended with status {solution.status}: {solution.message}")
    plan = extract_plan(problem, solution)
    plan.seed = config.seed
    bundle.write_text("plan.json", plan_json(plan))
    summary = plan_summary(plan)
    bundle.write_frame("plan_summary.csv", summary)
    logger.info("Plan %s: cost %.2f (lines %.2f, BESS %.2f, regulators %.2f), peaks +%.3f / -%.3f MW",
                plan.plan_id, plan.total_cost, plan.cost_lines, plan.cost_bess, plan.cost_regulators,
                plan.peak_direct_mw, plan.peak_reverse_mw)
    emit(summary, args.format)
    return EXIT_OK


def plan_summary(plan):
    return pd.DataFrame([{
        "plan_id": plan.plan_id,
        "mode": plan.mode,
        "status": plan.status,
        "budget": plan.budget,
        "cost_lines": plan.cost_lines,
        "cost_bess": plan.cost_bess,
        "cost_regulators": plan.cost_regulators,
        "total_cost": plan.total_cost,
        "bess_mw": sum(plan.bess_mw.values()),
        "upgrades": ";".join(plan.upgrades),
        "regulators": ";".join(plan.regulators),
        "lambda_d_mw": plan.peak_direct_mw,
        "lambda_r_mw": plan.peak_reverse_mw,
    }])


def cmd_nrcc(config, bundle, args):
    nc = config.nrcc
    model = load_feeder(config.path(config.feeder))
    scenarios, generated = planning_scenarios(config, model)
    backend = make_backend(config.solver.backend, config.solver.settings())

    expected = nc.expected_peaks
    if expected is None:
        peaks = derive_expected_peaks(model, scenarios, nc.weight_w, backend)
        expected = (peaks.direct_mw, peaks.reverse_mw)
    min_cost, reference = min_secure_cost(model, scenarios, backend)
    if reference is None:
        raise PlanExtractionError("the scenario-based model has no solution; no budget can be secure")
    reference.seed = config.seed
    bundle.write_text("plans/scenario_based.json", plan_json(reference))
    budgets = nc.budgets or budget_grid(min_cost, nc.budget_count, nc.budget_multiple)

    sweep = SweepConfig(budgets=budgets, weight_w=nc.weight_w, expected_peaks=expected,
                        backend=config.solver.backend, solver=config.solver.settings(), jobs=config.jobs)
    curve = run_sweep(model, scenarios, sweep, reference_plan=reference, log_path=bundle.path(SWEEP_LOG))
    bundle.attach(SWEEP_LOG)
    for i, point in enumerate(curve.feasible_points()):
        point.plan.seed = config.seed
        bundle.write_text(f"plans/budget{i:02d}.json", plan_json(point.plan, with_dispatch=False))

    if nc.heldout:
        heldout = heldout_scenarios(config, model, scenarios, generated)
        add_dispersion(model, curve, heldout, sweep, scenarios)
        bundle.write_frame("dispersion.csv", curve.dispersion)

    frame = curve.frame()
    bundle.write_frame("nrcc_curve.csv", frame)
    bundle.write_frame("nrcc_plot_data.csv", curve.plot_data())
    bundle.write_json("expected_peaks.json", {"direct_mw": expected[0], "reverse_mw": expected[1],
                                              "min_secure_cost": min_cost, "weight_w": nc.weight_w})
    emit(frame[["gamma", "status", "lambda_d_mw", "lambda_r_mw", "total_cost", "upgrades"]], args.format)
    return EXIT_OK


def cmd_validate(config, bundle, args):
    vc = config.validate
    model = load_feeder(config.path(config.feeder))
    plan = read_plan(config.path(vc.plan_file))
    scenarios, _ = planning_scenarios(config, model)
    backend = make_backend(config.solver.backend, config.solver.settings())
    report = validate_plan(model, plan, scenarios, loading_threshold=vc.loading_threshold,
                           weight_w=config.plan.weight_w, backend=backend)

    bundle.write_frame("line_loading.csv", report.line_loading)
    bundle.write_frame("bus_voltage.csv", report.bus_voltage)
    bundle.write_frame("peak_hour_loading.csv", report.peak_hour)
    violations = report.violations_frame()
    bundle.write_frame("violations.csv", violations)
    bundle.write_json("validation_summary.json", {
        "plan_id": report.plan_id,
        "points": report.n_points,
        "max_iterations": report.max_iterations,
        "max_residual": report.max_residual,
        "overloaded_lines": len(report.overloads),
        "voltage_violations": len(report.voltage_violations),
        "poi_mismatch": report.poi_mismatch,
        "voltage_gap": report.voltage_gap,
    })
    emit(violations if len(violations) else report.line_loading, args.format)
    if not report.ok:
        logger.warning("[WARN] Plan %s violates %d line ratings and %d voltage limits", plan.plan_id,
                       len(report.overloads), len(report.voltage_violations))
        return EXIT_VIOLATIONS
    return EXIT_OK


COMMANDS = {
    "scenarios": cmd_scenarios,
    "plan": cmd_plan,
    "nrcc": cmd_nrcc,
    "validate": cmd_validate,
}


# ------------------------------------------------------------------ parsing


def _budgets(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"budgets must be comma-separated numbers, got {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--mip-gap", type=float)
    common.add_argument("--time-limit", type=float, help="seconds per solve")
    common.add_argument("--jobs", type=int, help="worker threads")
    common.add_argument("--backend", help="solver backend (highs, cbc)")
    common.add_argument("--format", choices=FORMATS, default="csv", help="read-out format on stdout")
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="nrcc", description="Netload range cost curve planning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    scenarios = sub.add_parser("scenarios", parents=[common], help="adoption ensemble and growth scenarios")
    scenarios.add_argument("--ensemble-size", type=int, help="adoption runs in the ensemble")

    plan = sub.add_parser("plan", parents=[common], help="solve one planning model")
    plan.add_argument("--mode", choices=MODES)
    plan.add_argument("--budget", type=float)
    plan.add_argument("--weight-w", type=float)
    plan.add_argument("--write-lp", action="store_true", help="also export the model in LP format")

    nrcc = sub.add_parser("nrcc", parents=[common], help="budget sweep of the transmission-aware model")
    nrcc.add_argument("--budgets", type=_budgets, help="comma-separated budgets")
    nrcc.add_argument("--budget-count", type=int)
    nrcc.add_argument("--weight-w", type=float)
    nrcc.add_argument("--heldout", type=int, help="held-out scenarios for the dispersion bars")

    validate = sub.add_parser("validate", parents=[common], help="AC power-flow check of a plan")
    validate.add_argument("--plan", dest="plan_file")
    validate.add_argument("--loading-threshold", type=float)
    return parser


def overrides_from_args(args):
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "jobs": args.jobs,
        "verbose": args.verbose or None,
        "solver.mip_gap": args.mip_gap,
        "solver.time_limit": args.time_limit,
        "solver.backend": args.backend,
    }
    if args.command == "scenarios":
        overrides["scenarios.ensemble_size"] = args.ensemble_size
    elif args.command == "plan":
        overrides.update({"plan.mode": args.mode, "plan.budget": args.budget, "plan.weight_w": args.weight_w})
    elif args.command == "nrcc":
        overrides.update({"nrcc.budgets": args.budgets, "nrcc.budget_count": args.budget_count,
                          "nrcc.weight_w": args.weight_w, "nrcc.heldout": args.heldout})
    elif args.command == "validate":
        overrides.update({"validate.plan_file": args.plan_file,
                          "validate.loading_threshold": args.loading_threshold})
    return overrides


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, overrides=overrides_from_args(args))
        setup_logging(config.out_dir, config.verbose)
        check_paths(config, args.command)
        bundle = ResultBundle(config.out_dir, args.command, seed=config.seed,
                              config_hash=config_hash(config, args.command))
        code = COMMANDS[args.command](config, bundle, args)
        bundle.finalize()
        return code
    except PlanningError as exc:
        logger.error("%s", exc)
        logger.debug("Traceback", exc_info=True)
        return EXIT_ERROR
    except Exception as exc:
        logger.error("Unexpected failure: %s", exc)
        logger.debug("Traceback", exc_info=True)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``dualmatch <command> [options]``."""
import argparse
import inspect
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from dualmatch.algorithms import AlgorithmConfig
from dualmatch.experiments import (
    ExperimentConfig,
    estimate_regret,
    recipe_dp_gap,
    recipes,
    run_experiment,
    run_recipe,
    sweep,
    write_table,
)
from dualmatch.instances import (
    load_instance,
    load_trace,
    make_lower_bound_instance,
    make_synthetic_multi,
    make_uniform_single,
    save_instance,
    save_trace,
    trace_instance,
    validate_instance,
)
from dualmatch.misc import (
    ConfigurationError,
    InfeasibleDecisionError,
    InstanceTooLargeError,
    SolverError,
    seeded_stream,
)
from dualmatch.model import ServiceMode, draw_services
from dualmatch.offline import brute_force_opt, solve_opt, solve_surrogate_primal, write_certificate
from dualmatch.simulate import available_algorithms, sample_path

instance_kinds = ["uniform_single", "I1", "I2", "I3", "I4", "synthetic_multi"]


def parse_grid(text: str) -> list[float]:
    """'1..5' is an inclusive integer range, '0.1,0.5,1' an explicit list."""
    text = text.strip()
    try:
        if ".." in text:
            start, stop = text.split("..")
            start, stop = int(start), int(stop)
            if stop < start:
                raise ConfigurationError(f"Empty range '{text}'.")
            return [float(v) for v in range(start, stop + 1)]
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise ConfigurationError(f"Cannot parse '{text}' as a range or list.")


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="experiment seed")
    common.add_argument("--paths", type=int, default=100, help="number of sample paths")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--format", choices=["csv", "json"], default="csv", dest="fmt")
    common.add_argument("--diagnostics", action="store_true",
                        help="write per-period decisions, backlog and duals")
    common.add_argument("--verbose", action="store_true")
    return common


def _add_instance_options(parser: argparse.ArgumentParser, grid: bool = False):
    parser.add_argument("--instance", type=Path, help="instance JSON file")
    parser.add_argument("--trace", type=Path, help="arrival trace CSV file")
    parser.add_argument("--rho", type=str, help="capacity ratios for a trace, comma separated")
    kind = str if grid else float
    parser.add_argument("--epsilon", type=kind, default=None)
    parser.add_argument("--alpha", type=kind, default=None)
    parser.add_argument("--gamma", type=kind, default=None)
    parser.add_argument("--service-mode", choices=[m.value for m in ServiceMode],
                        default="bernoulli")


def _add_algorithm_options(parser: argparse.ArgumentParser, grid: bool = False):
    parser.add_argument("--algo", action="append", required=True,
                        choices=[a.name for a in available_algorithms])
    kind = str if grid else float
    parser.add_argument("--eta", type=kind)
    parser.add_argument("--zeta", type=kind, default=None)
    parser.add_argument("--k", type=kind)
    if not grid:
        parser.add_argument("--batch-size", type=int, default=30)
        parser.add_argument("--iterations", type=int, default=10)
        parser.add_argument("--replications", type=int, default=5)
        parser.add_argument("--service-estimate", type=float)


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="dualmatch", description="Dual-learning dynamic matching with post-allocation backlog."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", parents=[common], help="write an instance and a sampled trace")
    gen.add_argument("--kind", choices=instance_kinds, default="uniform_single")
    gen.add_argument("--T", type=int, required=True)
    gen.add_argument("--rho", type=str, default="0.5")
    gen.add_argument("--epsilon", type=float, default=0.1)
    gen.add_argument("--alpha", type=float, default=3.0)
    gen.add_argument("--gamma", type=float, default=1.0)
    gen.add_argument("--service-mode", choices=[m.value for m in ServiceMode],
                     default="bernoulli")
    gen.add_argument("--tied-probs", type=str, help="synthetic_multi: per-affiliate tied shares")
    gen.add_argument("--reward-low", type=str, default="0")
    gen.add_argument("--reward-high", type=str, default="1")
    gen.add_argument("--l", type=int, default=1, help="resource types per affiliate")
    gen.add_argument("--case-size", type=int)
    gen.add_argument("--no-trace", action="store_true", help="write the instance only")

    run = commands.add_parser("run", parents=[common], help="simulate algorithms on an instance")
    _add_instance_options(run)
    _add_algorithm_options(run)
    run.add_argument("--regret", action="store_true", help="also solve OPT on every path")

    sw = commands.add_parser("sweep", parents=[common], help="grid over instance parameters")
    _add_instance_options(sw, grid=True)
    _add_algorithm_options(sw, grid=True)
    sw.add_argument("--T", type=str, dest="T_grid", help="horizons, not available on traces")

    offline = commands.add_parser("offline", parents=[common], help="solve the offline benchmark")
    _add_instance_options(offline)
    offline.add_argument("--surrogate", action="store_true",
                         help="solve the primal of the static surrogate instead")
    offline.add_argument("--brute-force", action="store_true")

    recipe = commands.add_parser("recipe", parents=[common], help="run a canonical experiment")
    recipe.add_argument("name", choices=sorted(recipes))
    recipe.add_argument("--T", type=int)
    recipe.add_argument("--T-list", type=str, dest="T_list")
    recipe.add_argument("--gamma", type=float)
    recipe.add_argument("--epsilon", type=float)

    dp = commands.add_parser("dp", parents=[common], help="single-affiliate DP oracle")
    dp.add_argument("--T", type=str, required=True, dest="T_list")
    dp.add_argument("--gamma", type=str, default="1", dest="gamma_list")

    validate = commands.add_parser("validate", parents=[common], help="check an instance")
    _add_instance_options(validate)
    return parser


def _rho(text: str, m: int):
    values = parse_grid(text)
    if len(values) == 1:
        return np.full(m, values[0])
    if len(values) != m:
        raise ConfigurationError(f"Need {m} capacity ratios, got {len(values)}.")
    return np.array(values)


def _scalars(args) -> dict:
    # grid-valued flags of `sweep` arrive as strings and are applied by the sweep itself
    return {
        key: getattr(args, key) for key in ("epsilon", "alpha", "gamma")
        if getattr(args, key) is not None and not isinstance(getattr(args, key), str)
    }


def instance_from_args(args):
    """Instance from --instance, or from --trace plus the model parameters.

    A trace without --rho gets rho = 1 / (m + 1) for every affiliate.
    """
    scalars = _scalars(args)
    if args.instance is not None:
        instance = load_instance(args.instance)
        return instance.with_params(**scalars) if scalars else instance
    if args.trace is not None:
        trace = load_trace(args.trace)
        rho = _rho(args.rho, trace.m) if args.rho else np.full(trace.m, 1.0 / (trace.m + 1))
        return trace_instance(trace, rho, scalars.get("epsilon", 0.1), scalars.get("alpha", 3.0),
                              scalars.get("gamma", 1.0), ServiceMode(args.service_mode),
                              trace_path=str(args.trace))
    raise ConfigurationError("Pass either --instance or --trace.")


def algorithms_from_args(args) -> list[AlgorithmConfig]:
    zeta = 0.0 if args.zeta is None else args.zeta
    return [
        AlgorithmConfig(name, eta=args.eta, k=args.k, zeta=zeta,
                        service_estimate=args.service_estimate,
                        replications=args.replications, batch_size=args.batch_size,
                        iterations=args.iterations)
        for name in args.algo
    ]


def cmd_gen(args) -> int:
    if args.kind == "uniform_single":
        instance = make_uniform_single(args.T, float(args.rho), args.epsilon, args.alpha,
                                       args.gamma, ServiceMode(args.service_mode))
    elif args.kind == "synthetic_multi":
        if args.tied_probs is None:
            raise ConfigurationError("synthetic_multi needs --tied-probs.")
        tied = parse_grid(args.tied_probs)
        m = len(tied)
        reward_spec = {"kind": "uniform", "low": _rho(args.reward_low, m).tolist(),
                       "high": _rho(args.reward_high, m).tolist()}
        instance = make_synthetic_multi(m, args.T, tied, reward_spec, _rho(args.rho, m),
                                        args.epsilon, args.alpha, args.gamma,
                                        ServiceMode(args.service_mode), l=args.l,
                                        case_size=args.case_size)
    else:
        instance = make_lower_bound_instance(args.kind, args.T, args.epsilon, args.alpha,
                                             args.gamma)
    args.out.mkdir(parents=True, exist_ok=True)
    save_instance(instance, args.out / "instance.json")
    print(f"Wrote {args.out / 'instance.json'}")
    if not args.no_trace:
        save_trace(sample_path(instance, args.seed, 0), args.out / "trace.csv")
        print(f"Wrote {args.out / 'trace.csv'}")
    return 0


def cmd_run(args) -> int:
    config = ExperimentConfig(
        instance_from_args(args), algorithms_from_args(args), num_paths=args.paths,
        seed=args.seed, out_dir=args.out, fmt=args.fmt, diagnostics=args.diagnostics,
        verbose=args.verbose,
    )
    results = run_experiment(config)
    summary = results.groupby("algo", sort=False)[
        ["reward", "overalloc", "avg_backlog", "objective"]].mean()
    print(summary.to_string())
    if args.regret:
        estimates = estimate_regret(config)
        for label, estimate in estimates.items():
            print(f"{label}: regret {estimate.mean_regret:.4f} +- {estimate.std_error:.4f} "
                  f"(OPT {estimate.mean_opt:.4f})")
    return 0


def cmd_sweep(args) -> int:
    instance = instance_from_args(args)
    grid = {}
    for key in ("alpha", "gamma", "epsilon", "eta", "zeta", "k"):
        value = getattr(args, key)
        if value is not None:
            grid[key] = parse_grid(value)
    if args.T_grid is not None:
        grid["T"] = parse_grid(args.T_grid)
    if not grid:
        raise ConfigurationError("Nothing to sweep over.")
    algorithms = [AlgorithmConfig(name) for name in args.algo]
    frame = sweep(instance, algorithms, grid, num_paths=args.paths, seed=args.seed,
                  verbose=args.verbose)
    target = write_table(frame, args.out, "sweep", args.fmt)
    print(f"Wrote {target}")
    return 0


def cmd_offline(args) -> int:
    instance = instance_from_args(args)
    if args.trace is not None:
        path = instance.arrival.trace
        if path.services is None:
            rng = seeded_stream(args.seed, 0, "service")
            path = path.with_services(draw_services(instance, instance.T, rng))
    else:
        path = sample_path(instance, args.seed, 0)
    if args.surrogate:
        solution = solve_surrogate_primal(path, instance)
    elif args.brute_force:
        solution = brute_force_opt(path, instance)
    else:
        solution = solve_opt(path, instance)
    args.out.mkdir(parents=True, exist_ok=True)
    decisions = pd.DataFrame(solution.decisions,
                             columns=[f"z_{i + 1}" for i in range(instance.m)])
    decisions.insert(0, "t", np.arange(1, instance.T + 1))
    write_table(decisions, args.out, "offline_decisions", args.fmt)
    write_certificate(solution, args.out / "certificate.json")
    print(f"{solution.solver}: objective {solution.objective_value:.6f}, "
          f"integral {solution.is_integral}, good event {solution.in_good_event}")
    return 0


def cmd_recipe(args) -> int:
    func = recipes[args.name]
    accepted = inspect.signature(func).parameters
    kwargs = {"out_dir": args.out, "fmt": args.fmt, "verbose": args.verbose}
    optional = {"seed": args.seed, "num_paths": args.paths, "T": args.T, "gamma": args.gamma,
                "epsilon": args.epsilon}
    if args.T_list is not None:
        optional["T_list"] = [int(v) for v in parse_grid(args.T_list)]
    kwargs.update({k: v for k, v in optional.items() if v is not None and k in accepted})
    frames = run_recipe(args.name, **kwargs)
    for name in frames:
        print(f"Wrote {args.out / f'{name}.{args.fmt}'}")
    return 0


def cmd_dp(args) -> int:
    frames = recipe_dp_gap(
        T_list=[int(v) for v in parse_grid(args.T_list)],
        gamma_list=parse_grid(args.gamma_list),
        out_dir=args.out, fmt=args.fmt, verbose=args.verbose,
    )
    print(frames["dp_gap"].to_string(index=False))
    return 0


def cmd_validate(args) -> int:
    report = validate_instance(instance_from_args(args))
    for message in report.errors:
        print(f"Error: {message}")
    for message in report.warnings:
        print(f"Warning: {message}")
    if report.ok:
        print("Instance is valid.")
    return 0 if report.ok else 2


commands = {
    "gen": cmd_gen,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "offline": cmd_offline,
    "recipe": cmd_recipe,
    "dp": cmd_dp,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return commands[args.command](args)
    except (ConfigurationError, InstanceTooLargeError) as err:
        print(f"Configuration error: {err}", file=sys.stderr)
        return 2
    except (SolverError, InfeasibleDecisionError, NotImplementedError) as err:
        print(f"Error: {err} (reproduce with --seed {args.seed})", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

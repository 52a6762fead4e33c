"""Command-line front end: exact solve, relaxed solve, comparison, benchmark.

Exit codes are a stable contract: 0 success (including a relaxed solve that
did not converge, which is soft-reported in the output), 1 input error,
2 capacity exceeded.
"""

import argparse
import json
import sys
import time
from dataclasses import dataclass

import numpy as np

from .bench import RandomSystemConfig, run_experiment
from .core import CapacityError, load_problem
from .exact import build_value_sets, exact_online_control, save_value_sets
from .relaxed import RelaxSettings, check_stationarity, solve_relaxed

__all__ = ["CommandSpec", "main"]


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class CommandSpec:
    """Parsed invocation: subcommand plus file paths and inline options."""

    subcommand: str
    input_path: str = None
    settings_path: str = None
    out_path: str = None
    cache_path: str = None
    thresholds: tuple = ()
    seed: int = None
    count: int = None
    jobs: int = 1


def _build_parser() -> _Parser:
    parser = _Parser(prog="swlq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_exact = sub.add_parser("exact", help="exact dynamic-programming solve")
    p_exact.add_argument("--input", required=True, help="problem JSON")
    p_exact.add_argument("--out", help="solution JSON output path")
    p_exact.add_argument("--cache", help="value-set cache output path (npz)")

    p_relaxed = sub.add_parser("relaxed", help="block-sparse relaxation pipeline")
    p_relaxed.add_argument("--input", required=True, help="problem JSON")
    p_relaxed.add_argument("--settings", help="settings JSON")
    p_relaxed.add_argument("--out", help="report JSON output path")

    p_compare = sub.add_parser("compare", help="run both solvers and compare")
    p_compare.add_argument("--input", required=True, help="problem JSON")
    p_compare.add_argument("--settings", help="settings JSON")
    p_compare.add_argument("--out", help="comparison JSON output path")

    p_bench = sub.add_parser("bench", help="random-instance study")
    p_bench.add_argument("--input", required=True, help="experiment config JSON")
    p_bench.add_argument("--settings", help="settings JSON")
    p_bench.add_argument("--thresholds", default="1e-5,1e-7,1e-8,1e-10,0",
                         help="comma-separated error thresholds")
    p_bench.add_argument("--seed", type=int, help="override config seed")
    p_bench.add_argument("--count", type=int, help="override instance count")
    p_bench.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p_bench.add_argument("--out", required=True,
                         help="output prefix; writes <out>.csv and <out>.json")
    return parser


def _spec_from_args(args) -> CommandSpec:
    thresholds = ()
    if getattr(args, "thresholds", None):
        try:
            thresholds = tuple(float(tok) for tok in args.thresholds.split(",") if tok.strip())
        except ValueError as exc:
            raise UsageError(f"bad threshold list {args.thresholds!r}") from exc
    return CommandSpec(
        subcommand=args.subcommand,
        input_path=getattr(args, "input", None),
        settings_path=getattr(args, "settings", None),
        out_path=getattr(args, "out", None),
        cache_path=getattr(args, "cache", None),
        thresholds=thresholds,
        seed=getattr(args, "seed", None),
        count=getattr(args, "count", None),
        jobs=getattr(args, "jobs", 1),
    )


def _load_settings(path) -> RelaxSettings:
    if path is None:
        return RelaxSettings()
    with open(path, "r", encoding="utf-8") as fh:
        return RelaxSettings.from_dict(json.load(fh))


def _write_json(path, payload) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _solution_payload(solution) -> dict:
    traj = solution.trajectory
    return {
        "solver": solution.solver_tag,
        "cost": solution.cost,
        "sigma": traj.mode_seq.tolist(),
        "u": traj.inputs.tolist(),
        "x": traj.states.tolist(),
    }


def _run_exact(cmd: CommandSpec):
    system, spec, x0 = load_problem(cmd.input_path)
    sets = build_value_sets(system, spec)
    solution = exact_online_control(system, spec, sets, x0)
    if cmd.cache_path:
        save_value_sets(sets, cmd.cache_path)
    payload = _solution_payload(solution)
    payload["value_set_sizes"] = [sets.size(k) for k in range(sets.horizon + 1)]
    return payload, solution


def _run_relaxed(cmd: CommandSpec):
    system, spec, x0 = load_problem(cmd.input_path)
    settings = _load_settings(cmd.settings_path)
    solution = solve_relaxed(system, spec, x0, settings)
    cert = check_stationarity(solution.report.program, solution.report.z, solution.auxiliary)
    payload = _solution_payload(solution.control)
    payload.update(
        {
            "sigma_offline": solution.mode_seq.tolist(),
            "online_divergence": solution.online_divergence,
            "converged": solution.report.converged,
            "objective": solution.report.objective,
            "block_norms": solution.auxiliary.norms().tolist(),
            "residuals": {
                "primal": solution.report.solver_reports[-1].primal_residual,
                "dual": solution.report.solver_reports[-1].dual_residual,
                "stationarity": cert.stationarity_residual,
                "adjoint": cert.adjoint_residual,
            },
            "solver_iterations": [r.iterations for r in solution.report.solver_reports],
        }
    )
    return payload, solution


def _run_compare(cmd: CommandSpec):
    t0 = time.perf_counter()
    exact_payload, exact_solution = _run_exact(
        CommandSpec(subcommand="exact", input_path=cmd.input_path)
    )
    t1 = time.perf_counter()
    relaxed_payload, relaxed_solution = _run_relaxed(
        CommandSpec(
            subcommand="relaxed", input_path=cmd.input_path, settings_path=cmd.settings_path
        )
    )
    t2 = time.perf_counter()
    j_opt = exact_solution.cost
    j_rel = relaxed_solution.control.cost
    if j_opt <= 1e-12 and j_rel <= 1e-12:
        eps = 0.0
    else:
        eps = (j_rel - j_opt) / j_opt
    hamming = int(
        np.sum(
            exact_solution.trajectory.mode_seq
            != relaxed_solution.control.trajectory.mode_seq
        )
    )
    return {
        "epsilon": eps,
        "hamming": hamming,
        "timings_ms": {"exact": (t1 - t0) * 1e3, "relaxed": (t2 - t1) * 1e3},
        "exact": exact_payload,
        "relaxed": relaxed_payload,
    }


def _run_bench(cmd: CommandSpec) -> None:
    with open(cmd.input_path, "r", encoding="utf-8") as fh:
        config_data = json.load(fh)
    if cmd.seed is not None:
        config_data["seed"] = cmd.seed
    if cmd.count is not None:
        config_data["count"] = cmd.count
    config = RandomSystemConfig.from_dict(config_data)
    settings = _load_settings(cmd.settings_path)
    run_experiment(
        config,
        cmd.thresholds,
        settings=settings,
        csv_path=f"{cmd.out_path}.csv",
        json_path=f"{cmd.out_path}.json",
        jobs=cmd.jobs,
    )


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cmd = _spec_from_args(args)
        if cmd.subcommand == "exact":
            payload, _ = _run_exact(cmd)
            _write_json(cmd.out_path, payload)
        elif cmd.subcommand == "relaxed":
            payload, _ = _run_relaxed(cmd)
            _write_json(cmd.out_path, payload)
        elif cmd.subcommand == "compare":
            payload = _run_compare(cmd)
            _write_json(cmd.out_path, payload)
        elif cmd.subcommand == "bench":
            _run_bench(cmd)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

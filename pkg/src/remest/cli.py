"""Command-line interface.

Subcommands: ``validate`` (scenario lint), ``check`` (stability verdict),
``sweep`` (stability-region grid), ``simulate`` (Monte Carlo runs), and
``compare-csi`` (current vs delayed channel-state information).  Exit code 0
means the computation ran (whatever the verdict), 2 a scenario problem, 3 an
exceeded search budget.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import __version__
from .errors import BudgetExceededError, ScenarioError
from .scenario import bundled_scenario_path, load_scenario
from .sim import POLICIES, full_physics_run, make_policy, run
from .stability import evaluate_current_csi, evaluate_delayed_csi
from .sweep import (
    compare_csi,
    sweep_simulated,
    sweep_stability,
    write_csi_csv,
    write_simulated_csv,
    write_sweep_csv,
)

EXIT_OK = 0
EXIT_SCENARIO = 2
EXIT_BUDGET = 3


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        rows, cols = text.lower().split("x")
        return int(rows), int(cols)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected ROWSxCOLS, got {text!r}") from exc


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="remest",
        description="Stability analysis and simulation of remote estimation "
        "over shared semi-Markov fading channels.",
    )
    parser.add_argument("--version", action="version", version=f"remest {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_scenario(p):
        p.add_argument(
            "--scenario",
            default=None,
            help="scenario YAML path (defaults to the bundled example)",
        )

    p_validate = sub.add_parser("validate", help="parse and validate a scenario file")
    add_scenario(p_validate)

    p_check = sub.add_parser("check", help="stability verdict for one scenario")
    add_scenario(p_check)
    p_check.add_argument("--mode", choices=["current", "delayed"], default="current")
    p_check.add_argument("--L", type=int, default=1, help="tuple length for delayed mode")
    p_check.add_argument("--budget", type=int, default=10**8)

    p_sweep = sub.add_parser("sweep", help="stability region over the sweep grid")
    add_scenario(p_sweep)
    p_sweep.add_argument("--out", required=True, help="output CSV path")
    p_sweep.add_argument("--grid", type=_parse_grid, default=None, help="ROWSxCOLS override")
    p_sweep.add_argument("--workers", type=int, default=None)

    p_sim = sub.add_parser("simulate", help="Monte Carlo simulation runs")
    add_scenario(p_sim)
    p_sim.add_argument("--out", default=None, help="summary CSV path (default: stdout table)")
    p_sim.add_argument("--horizon", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=None, help="single seed (overrides --seeds)")
    p_sim.add_argument("--seeds", type=_parse_seeds, default=None, help="comma-separated seeds")
    p_sim.add_argument("--policy", choices=sorted(POLICIES), default=None)
    p_sim.add_argument(
        "--full-physics",
        action="store_true",
        help="simulate plant states and report per-AoI empirical MSE",
    )
    p_sim.add_argument(
        "--sweep-grid",
        type=_parse_grid,
        default=None,
        help="instead of one run, simulate every cell of this grid",
    )
    p_sim.add_argument("--trace", default=None, help="per-slot trace CSV path")
    p_sim.add_argument("--trace-slots", type=int, default=1000, help="max slots to trace")

    p_cmp = sub.add_parser("compare-csi", help="current vs delayed CSI factors")
    add_scenario(p_cmp)
    p_cmp.add_argument("--L", type=int, default=2, help="largest tuple length to evaluate")
    p_cmp.add_argument("--budget", type=int, default=10**8)
    p_cmp.add_argument("--out", default=None, help="output CSV path (default: stdout table)")

    return parser


def _load(args):
    path = args.scenario
    if path is None:
        with_as = bundled_scenario_path()
        path = str(with_as)
    return load_scenario(path)


def _print_report(report) -> None:
    print(f"csi_mode={report.csi_mode}" + (f" L={report.horizon}" if report.horizon else ""))
    print(f"rho_max={report.rho_max!r} (process {report.dominant_process})")
    print(f"factor={report.factor!r}")
    print(f"product={report.product!r}")
    print(f"verdict={report.verdict}")


def _cmd_validate(args) -> int:
    loaded = _load(args)
    s = loaded.scenario
    print(
        f"OK name={loaded.name} processes={s.num_sensors} "
        f"frequencies={s.num_frequencies} quality_states={s.channel.num_quality_states} "
        f"max_holding={s.channel.max_holding} cascaded_states={s.chain.num_states}"
    )
    return EXIT_OK


def _cmd_check(args) -> int:
    loaded = _load(args)
    s = loaded.scenario
    if args.mode == "current":
        report = evaluate_current_csi(s.processes, s.chain)
    else:
        report = evaluate_delayed_csi(s.processes, s.chain, horizon=args.L, budget=args.budget)
    _print_report(report)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    loaded = _load(args)
    result = sweep_stability(loaded, grid=args.grid, workers=args.workers)
    write_sweep_csv(result, args.out)
    stable = int(np.sum(result.region_mask))
    total = result.factor.size
    print(f"wrote {args.out}: {stable}/{total} cells stable (rho_max={result.rho_max!r})")
    return EXIT_OK


def _trace_writer(path):
    fh = open(path, "w", newline="\n")
    fh.write("slot,channel_state,actions,outcomes,aoi,cost\n")

    def hook(record):
        fh.write(
            f"{record.slot},{record.channel_state},"
            f"{'|'.join(map(str, record.actions))},"
            f"{'|'.join(str(int(o)) for o in record.outcomes)},"
            f"{'|'.join(map(str, record.aoi))},"
            f"{float(record.costs.sum())!r}\n"
        )

    return fh, hook


def _cmd_simulate(args) -> int:
    loaded = _load(args)
    scenario = loaded.scenario
    sim_spec = loaded.sim
    horizon = args.horizon or (sim_spec.horizon if sim_spec else 10_000)
    if args.seed is not None:
        seeds = (args.seed,)
    elif args.seeds is not None:
        seeds = args.seeds
    else:
        seeds = sim_spec.seeds if sim_spec else (0,)
    policy_name = args.policy or (sim_spec.policy if sim_spec else "persistent-serial")

    if args.sweep_grid is not None:
        analytic, cells = sweep_simulated(
            loaded, grid=args.sweep_grid, horizon=horizon, seeds=seeds, policy_name=policy_name
        )
        if not args.out:
            print("--out is required with --sweep-grid", file=sys.stderr)
            return EXIT_SCENARIO
        write_simulated_csv(analytic, cells, args.out)
        print(f"wrote {args.out}: {len(cells)} cells, {len(seeds)} seeds each")
        return EXIT_OK

    rows = []
    trace_fh = None
    for k, seed in enumerate(seeds):
        policy = make_policy(policy_name, scenario)
        hook = None
        if args.trace and k == 0:
            trace_fh, hook = _trace_writer(args.trace)
        if args.full_physics:
            summary = full_physics_run(scenario, policy, horizon, seed)
        else:
            summary = run(
                scenario, policy, horizon, seed, record_hook=hook, record_limit=args.trace_slots
            )
        if trace_fh is not None and k == 0:
            trace_fh.close()
            trace_fh = None
        row = [seed, horizon, policy_name, summary.total_cost, summary.log_total_cost / math.log(10.0)]
        row.extend(float(j) for j in summary.avg_cost)
        rows.append(row)
        if args.full_physics and summary.mse_buckets is not None:
            b = summary.mse_buckets
            for n in range(scenario.num_sensors):
                for age in range(1, b.counts.shape[1]):
                    if b.counts[n, age] > 0:
                        print(
                            f"seed={seed} sensor={n} aoi={age} samples={b.counts[n, age]} "
                            f"mse={b.mean_sq[n, age]!r} predicted={b.predicted[n, age]!r}"
                        )

    header = ["seed", "horizon", "policy", "J_total", "log10_J_total"] + [
        f"J_{n}" for n in range(scenario.num_sensors)
    ]
    if args.out:
        from .sweep import _write_csv

        _write_csv(args.out, header, rows, loaded.sha256)
        print(f"wrote {args.out}: {len(rows)} runs")
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    return EXIT_OK


def _cmd_compare_csi(args) -> int:
    loaded = _load(args)
    rows = compare_csi(loaded, l_max=args.L, budget=args.budget)
    if args.out:
        write_csi_csv(rows, args.out, loaded.sha256)
        print(f"wrote {args.out}: {len(rows)} rows")
    else:
        print("csi_mode,L,factor,rho_max_threshold,product,verdict")
        for r in rows:
            el = "" if r.horizon is None else r.horizon
            print(
                f"{r.csi_mode},{el},{r.factor!r},{r.rho_max_threshold!r},"
                f"{r.product!r},{r.verdict}"
            )
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "check": _cmd_check,
    "sweep": _cmd_sweep,
    "simulate": _cmd_simulate,
    "compare-csi": _cmd_compare_csi,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())

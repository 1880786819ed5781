"""Stability-region sweeps, simulation campaigns, and CSI comparison tables.

A sweep scans two drop-table entries over a grid, re-evaluating the
current-CSI stability test in every cell; the stable cells form the
stability region.  Output files are plain CSV with two leading comment
lines (tool version and scenario hash) and are byte-identical across reruns
of the same inputs, so they diff cleanly.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .channel import CascadedChain, lift_quality_drops
from .errors import ScenarioValidationError
from .scenario import AxisSpec, LoadedScenario, SweepSpec
from .sim import Scenario, make_policy, run
from .stability import STABLE, current_csi_factor, delayed_csi_factor, max_plant_spectral_radius

WORKERS_ENV = "REMEST_WORKERS"


def _axis_values(axis: AxisSpec, count: int) -> np.ndarray:
    return np.linspace(axis.lo, axis.hi, count)


def apply_axes(
    scenario: Scenario, axes: tuple[AxisSpec, AxisSpec], values: tuple[float, float]
) -> CascadedChain:
    """The scenario's cascaded chain with the axis drop entries overridden."""
    channel = scenario.channel
    chain = scenario.chain
    if all(ax.kind == "level" for ax in axes):
        table = [list(row) for row in channel.level_drops]
        for ax, v in zip(axes, values):
            table[ax.frequency - 1][ax.target - 1] = float(v)
        model = replace(channel, level_drops=tuple(tuple(r) for r in table))
        drops = lift_quality_drops(model.quality_drop_table(), channel.max_holding)
        return chain.with_drops(drops)
    if all(ax.kind == "cascade" for ax in axes):
        drops = chain.drops.copy()
        for ax, v in zip(axes, values):
            drops[ax.target, ax.frequency - 1] = float(v)
        return chain.with_drops(drops)
    raise ValueError("sweep axes must share one drop-table granularity")


@dataclass(frozen=True)
class SweepResult:
    """Grid of stability evaluations.

    ``factor``, ``product`` and ``verdict`` are (rows, cols) arrays indexed
    by (axis 1 value, axis 2 value); ``scenario_sha256`` ties the result to
    its inputs.
    """

    axis_labels: tuple[str, str]
    values1: np.ndarray
    values2: np.ndarray
    rho_max: float
    factor: np.ndarray
    product: np.ndarray
    verdict: np.ndarray
    scenario_sha256: str

    @property
    def region_mask(self) -> np.ndarray:
        """Boolean mask of cells whose verdict is stable."""
        return self.verdict == STABLE


def _verdict_grid(product: np.ndarray, tol_boundary: float) -> np.ndarray:
    verdict = np.where(product < 1.0, "stable", "unstable").astype(object)
    verdict[np.abs(product - 1.0) <= tol_boundary] = "boundary"
    return verdict


def _sweep_rows(args) -> list[list[float]]:
    scenario, axes, v1_slice, values2 = args
    out = []
    for v1 in v1_slice:
        row = []
        for v2 in values2:
            chain = apply_axes(scenario, axes, (float(v1), float(v2)))
            lam, _ = current_csi_factor(chain)
            row.append(lam)
        out.append(row)
    return out


def sweep_stability(
    loaded: LoadedScenario,
    grid: tuple[int, int] | None = None,
    tol_boundary: float = 1e-9,
    workers: int | None = None,
) -> SweepResult:
    """Evaluate the current-CSI test over the scenario's sweep grid.

    ``workers`` > 1 distributes grid rows over a process pool; results are
    merged in grid order, so the output does not depend on worker count.
    """
    if loaded.sweep is None:
        raise ScenarioValidationError("scenario has no sweep section", "sweep")
    spec: SweepSpec = loaded.sweep
    rows, cols = grid if grid is not None else spec.grid
    if rows < 2 or cols < 2:
        raise ValueError("grid resolution must be at least 2x2")
    values1 = _axis_values(spec.axes[0], rows)
    values2 = _axis_values(spec.axes[1], cols)
    scenario = loaded.scenario
    rho_max, _ = max_plant_spectral_radius(scenario.processes)

    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    factor = np.empty((rows, cols))
    if workers > 1:
        chunks = np.array_split(values1, workers)
        args = [(scenario, spec.axes, chunk, values2) for chunk in chunks if chunk.size]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_rows, args))
        flat = [row for chunk_rows in results for row in chunk_rows]
        factor[:] = np.asarray(flat)
    else:
        factor[:] = np.asarray(_sweep_rows((scenario, spec.axes, values1, values2)))

    product = rho_max**2 * factor
    return SweepResult(
        axis_labels=(spec.axes[0].label, spec.axes[1].label),
        values1=values1,
        values2=values2,
        rho_max=rho_max,
        factor=factor,
        product=product,
        verdict=_verdict_grid(product, tol_boundary),
        scenario_sha256=loaded.sha256,
    )


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, header: list[str], rows, scenario_sha256: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# remest {__version__}\n")
        fh.write(f"# scenario sha256={scenario_sha256}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_sweep_csv(result: SweepResult, path) -> None:
    """One CSV row per grid cell, row-major, shortest round-trip floats."""
    header = [result.axis_labels[0], result.axis_labels[1], "lambda", "product", "verdict"]
    rows = (
        [
            float(result.values1[i]),
            float(result.values2[j]),
            float(result.factor[i, j]),
            float(result.product[i, j]),
            result.verdict[i, j],
        ]
        for i in range(result.values1.size)
        for j in range(result.values2.size)
    )
    _write_csv(path, header, rows, result.scenario_sha256)


@dataclass(frozen=True)
class SimulatedCell:
    value1: float
    value2: float
    growth_ratios: tuple[float, ...]  # per seed, total cost ratio J(2T)/J(T)
    log10_final: float  # log10 of total running average at 2T, first seed


def sweep_simulated(
    loaded: LoadedScenario,
    grid: tuple[int, int] | None = None,
    horizon: int | None = None,
    seeds: tuple[int, ...] | None = None,
    policy_name: str | None = None,
) -> tuple[SweepResult, list[SimulatedCell]]:
    """Simulate every grid cell and record cost growth across horizons.

    Each seed runs for 2 * horizon slots; the recorded growth ratio is the
    total running-average cost at 2T over the one at T.  Ratios near 1 mean
    the average has settled (stable); ratios well above 1 flag divergence.
    Also returns the analytic sweep for the same grid, for side-by-side use.
    """
    sim_spec = loaded.sim
    if horizon is None:
        horizon = sim_spec.horizon if sim_spec else 10_000
    if seeds is None:
        seeds = sim_spec.seeds if sim_spec else (0,)
    if policy_name is None:
        policy_name = sim_spec.policy if sim_spec else "persistent-serial"
    analytic = sweep_stability(loaded, grid=grid)
    scenario = loaded.scenario
    axes = loaded.sweep.axes
    cells = []
    for i, v1 in enumerate(analytic.values1):
        for j, v2 in enumerate(analytic.values2):
            chain = apply_axes(scenario, axes, (float(v1), float(v2)))
            cell_scenario = replace(scenario, chain=chain)
            ratios = []
            log10_final = math.nan
            for k, seed in enumerate(seeds):
                policy = make_policy(policy_name, cell_scenario)
                summary = run(
                    cell_scenario,
                    policy,
                    horizon=2 * horizon,
                    seed=seed,
                    checkpoints=(horizon, 2 * horizon),
                )
                log_t = summary.checkpoint_log_total[horizon]
                log_2t = summary.checkpoint_log_total[2 * horizon]
                ratios.append(math.exp(log_2t - log_t))
                if k == 0:
                    log10_final = log_2t / math.log(10.0)
            cells.append(
                SimulatedCell(
                    value1=float(v1),
                    value2=float(v2),
                    growth_ratios=tuple(ratios),
                    log10_final=log10_final,
                )
            )
    return analytic, cells


def write_simulated_csv(
    analytic: SweepResult, cells: list[SimulatedCell], path
) -> None:
    header = [
        analytic.axis_labels[0],
        analytic.axis_labels[1],
        "product",
        "verdict",
        "growth_ratio_mean",
        "growth_ratio_min",
        "growth_ratio_max",
        "log10_running_cost",
    ]
    rows = []
    idx = 0
    for i in range(analytic.values1.size):
        for j in range(analytic.values2.size):
            cell = cells[idx]
            idx += 1
            ratios = np.array(cell.growth_ratios)
            rows.append(
                [
                    cell.value1,
                    cell.value2,
                    float(analytic.product[i, j]),
                    analytic.verdict[i, j],
                    float(ratios.mean()),
                    float(ratios.min()),
                    float(ratios.max()),
                    cell.log10_final,
                ]
            )
    _write_csv(path, header, rows, analytic.scenario_sha256)


@dataclass(frozen=True)
class CsiComparisonRow:
    csi_mode: str
    horizon: int | None
    factor: float
    rho_max_threshold: float  # largest rho_max the factor can stabilize
    product: float
    verdict: str


def compare_csi(
    loaded: LoadedScenario, l_max: int, budget: int = 10**8, tol_boundary: float = 1e-9
) -> list[CsiComparisonRow]:
    """Tabulate the current-CSI factor against delayed-CSI factors for L = 1..l_max."""
    scenario = loaded.scenario
    rho_max, _ = max_plant_spectral_radius(scenario.processes)

    def make_row(mode: str, horizon: int | None, factor: float) -> CsiComparisonRow:
        threshold = math.inf if factor == 0 else 1.0 / math.sqrt(factor)
        product = rho_max**2 * factor
        if abs(product - 1.0) <= tol_boundary:
            verdict = "boundary"
        else:
            verdict = "stable" if product < 1.0 else "unstable"
        return CsiComparisonRow(
            csi_mode=mode,
            horizon=horizon,
            factor=factor,
            rho_max_threshold=threshold,
            product=product,
            verdict=verdict,
        )

    lam, _ = current_csi_factor(scenario.chain)
    out = [make_row("current", None, lam)]
    for el in range(1, l_max + 1):
        lam_l, _ = delayed_csi_factor(scenario.chain, el, budget=budget)
        out.append(make_row("delayed", el, lam_l))
    return out


def write_csi_csv(rows: list[CsiComparisonRow], path, scenario_sha256: str) -> None:
    header = ["csi_mode", "L", "factor", "rho_max_threshold", "product", "verdict"]
    data = (
        [
            r.csi_mode,
            "" if r.horizon is None else r.horizon,
            r.factor,
            r.rho_max_threshold,
            r.product,
            r.verdict,
        ]
        for r in rows
    )
    _write_csv(path, header, data, scenario_sha256)

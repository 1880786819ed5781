"""Stability tests for scheduled remote estimation over a cascaded channel chain.

With current channel-state information the system can be stabilized by some
scheduling policy if and only if

    rho_max^2 * rho(V(v*) T) < 1

where rho_max is the largest plant spectral radius, T the cascaded channel
transition matrix, v* the per-state greedy frequency selection and V(v*) the
diagonal matrix of the selected drop probabilities.  With one-step-delayed
information the same test uses

    lambda_L = min over (v_1 .. v_L) of rho(E(v_1) ... E(v_L))^(1/L),

where E(v)[i, j] = T[i, j] * drop(j, v_i) weights each transition by the
probability that a transmission at the destination fails under the frequency
chosen while still at the origin.  The delayed test is never easier to pass:
lambda <= lambda_L for every L.

The cycle analytics decompose time into estimation cycles (between
consecutive successful deliveries of one sensor) under the greedy selection.
Writing F = V(v*) T for a failed slot and S = (I - V(v*)) T for a successful
one, the probability that a cycle starting in channel state i lasts j slots
and leaves the next cycle in state k is [F^(j-1) S]_{i,k}; summing the series
over j gives the transition matrix of the pre-cycle channel states.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import CascadedChain, drop_matrix, greedy_selection, stationary_distribution
from .errors import (
    BudgetExceededError,
    DimensionMismatchError,
    DivergentSeriesError,
    FrequencyOutOfRangeError,
    NonConvergentError,
)
from .process import ProcessModel, spectral_radius

STABLE = "stable"
UNSTABLE = "unstable"
BOUNDARY = "boundary"

DEFAULT_BUDGET = 10**8


def _verdict(product: float, tol_boundary: float) -> str:
    if abs(product - 1.0) <= tol_boundary:
        return BOUNDARY
    return STABLE if product < 1.0 else UNSTABLE


def max_plant_spectral_radius(processes) -> tuple[float, int]:
    """Largest plant spectral radius and the index of the process attaining it.

    Ties break toward the lowest process index (reporting only).
    """
    if not processes:
        raise ValueError("at least one process is required")
    best, best_idx = -1.0, -1
    for proc in processes:
        r = spectral_radius(proc.A)
        if r > best:
            best, best_idx = r, proc.index
    return best, best_idx


@dataclass(frozen=True)
class StabilityReport:
    """Outcome of a stability test.

    ``factor`` is the channel spectral factor (lambda for current CSI,
    lambda_L for delayed), ``product`` is ``rho_max**2 * factor`` and the
    verdict compares it against 1 with a symmetric boundary band.
    """

    rho_max: float
    factor: float
    product: float
    verdict: str
    selection: np.ndarray | tuple[np.ndarray, ...]
    csi_mode: str
    dominant_process: int
    horizon: int | None = None
    tol_boundary: float = 1e-9


def current_csi_factor(chain: CascadedChain) -> tuple[float, np.ndarray]:
    """Spectral factor and greedy selection for the current-CSI test."""
    v_star = greedy_selection(chain)
    lam = spectral_radius(drop_matrix(chain, v_star) @ chain.transition)
    return lam, v_star


def evaluate_current_csi(
    processes, chain: CascadedChain, tol_boundary: float = 1e-9
) -> StabilityReport:
    """Necessary-and-sufficient stability test under current CSI."""
    rho_max, dominant = max_plant_spectral_radius(processes)
    lam, v_star = current_csi_factor(chain)
    product = rho_max**2 * lam
    return StabilityReport(
        rho_max=rho_max,
        factor=lam,
        product=product,
        verdict=_verdict(product, tol_boundary),
        selection=v_star,
        csi_mode="current",
        dominant_process=dominant,
        tol_boundary=tol_boundary,
    )


def delayed_failure_matrix(chain: CascadedChain, selection) -> np.ndarray:
    """Transition mass weighted by the destination drop under the origin's choice.

    Entry (i, j) is ``T[i, j] * drop(j, selection[i])``: the scheduler commits
    to a frequency while the channel is still in state i, and the packet is
    then dropped (or not) in the successor state j.
    """
    sel = np.asarray(selection, dtype=int)
    if sel.shape != (chain.num_states,):
        raise DimensionMismatchError(
            f"selection must have length {chain.num_states}, got shape {sel.shape}"
        )
    if np.any(sel < 1) or np.any(sel > chain.num_frequencies):
        raise FrequencyOutOfRangeError(
            f"selection entries must be in 1..{chain.num_frequencies}"
        )
    dest_drop = chain.drops[:, sel - 1]  # (dest j, origin i)
    return chain.transition * dest_drop.T


def tuple_spectral_factor(matrices) -> float:
    """``rho(M_1 ... M_k)**(1/k)`` for a sequence of square matrices."""
    mats = list(matrices)
    if not mats:
        raise ValueError("need at least one matrix")
    prod = mats[0]
    for m in mats[1:]:
        prod = prod @ m
    return spectral_radius(prod) ** (1.0 / len(mats))


def delayed_csi_factor(
    chain: CascadedChain, horizon: int, budget: int = DEFAULT_BUDGET
) -> tuple[float, tuple[np.ndarray, ...]]:
    """Exact minimum of the delayed-CSI spectral factor over selection tuples.

    Exhaustively searches all ``M**(num_states * horizon)`` tuples of
    selection vectors; raises :class:`BudgetExceededError` when that count
    exceeds ``budget``.  Ties break toward the lexicographically smallest
    tuple (vectors compared entrywise, earlier vectors first).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    m = chain.num_frequencies
    n_vectors = m**chain.num_states
    total = n_vectors**horizon
    if total > budget:
        raise BudgetExceededError(
            f"{total} candidate products exceed the budget of {budget}"
        )
    vectors = [
        np.array(v, dtype=int)
        for v in itertools.product(range(1, m + 1), repeat=chain.num_states)
    ]
    mats = [delayed_failure_matrix(chain, v) for v in vectors]

    best = math.inf
    best_combo: tuple[int, ...] | None = None
    # depth-first over lexicographic tuples, reusing prefix products
    stack_prod: list[np.ndarray] = []
    combo: list[int] = []

    def descend():
        nonlocal best, best_combo
        depth = len(combo)
        if depth == horizon:
            value = spectral_radius(stack_prod[-1]) ** (1.0 / horizon)
            if value < best:
                best = value
                best_combo = tuple(combo)
            return
        for idx in range(n_vectors):
            prod = mats[idx] if depth == 0 else stack_prod[-1] @ mats[idx]
            stack_prod.append(prod)
            combo.append(idx)
            descend()
            combo.pop()
            stack_prod.pop()

    descend()
    assert best_combo is not None
    return best, tuple(vectors[i].copy() for i in best_combo)


def evaluate_delayed_csi(
    processes,
    chain: CascadedChain,
    horizon: int,
    budget: int = DEFAULT_BUDGET,
    tol_boundary: float = 1e-9,
) -> StabilityReport:
    """Stability test under one-step-delayed CSI at a fixed tuple length."""
    rho_max, dominant = max_plant_spectral_radius(processes)
    lam_l, selections = delayed_csi_factor(chain, horizon, budget)
    product = rho_max**2 * lam_l
    return StabilityReport(
        rho_max=rho_max,
        factor=lam_l,
        product=product,
        verdict=_verdict(product, tol_boundary),
        selection=selections,
        csi_mode="delayed",
        dominant_process=dominant,
        horizon=horizon,
        tol_boundary=tol_boundary,
    )


@dataclass(frozen=True)
class CycleAnalysis:
    """Estimation-cycle chain under the greedy selection.

    ``pre_cycle_states`` are the cascaded states that can open a cycle:
    states with some chance of success that receive positive probability as
    the destination of a successful slot.  ``g_full`` is the truncated series
    over all states, ``g_prime`` its pre-cycle block and ``beta`` the
    stationary distribution of the (row-normalized) pre-cycle chain.
    """

    pre_cycle_states: tuple[int, ...]
    g_full: np.ndarray
    g_prime: np.ndarray
    beta: np.ndarray
    truncation_terms: int
    tail_mass: float
    fail_step: np.ndarray
    success_step: np.ndarray
    fail_radius: float
    selection: np.ndarray


def cycle_chain(
    chain: CascadedChain, tol_tail: float = 1e-12, max_terms: int = 10**6
) -> CycleAnalysis:
    """Build the pre-cycle-state chain by summing the cycle series.

    Truncates at the first power of the failure step whose infinity norm is
    at most ``tol_tail``; only valid in the stable regime, otherwise raises
    :class:`DivergentSeriesError`.
    """
    v_star = greedy_selection(chain)
    v_mat = drop_matrix(chain, v_star)
    fail = v_mat @ chain.transition
    success = (np.eye(chain.num_states) - v_mat) @ chain.transition
    rho_fail = spectral_radius(fail)
    if rho_fail >= 1.0:
        raise DivergentSeriesError(
            f"failure-step spectral radius {rho_fail} >= 1; cycle statistics undefined"
        )

    g = np.zeros_like(fail)
    xi = np.eye(chain.num_states)
    terms = 0
    while True:
        g += xi @ success
        terms += 1
        xi = xi @ fail
        if float(np.max(np.abs(xi).sum(axis=1))) <= tol_tail:
            break
        if terms >= max_terms:
            raise NonConvergentError(
                f"cycle series did not reach tail {tol_tail} within {max_terms} terms"
            )

    min_drop = chain.drops.min(axis=1)
    inbound_success = success.sum(axis=0)
    pre = tuple(
        i
        for i in range(chain.num_states)
        if min_drop[i] < 1.0 and inbound_success[i] > 0.0
    )
    if not pre:
        raise DivergentSeriesError("no cascaded state can open a cycle")

    g_prime = g[np.ix_(pre, pre)]
    row_sums = g_prime.sum(axis=1)
    beta = stationary_distribution(g_prime / row_sums[:, None])
    tail_mass = float(max(0.0, np.max(1.0 - g.sum(axis=1)[list(pre)])))

    return CycleAnalysis(
        pre_cycle_states=pre,
        g_full=g,
        g_prime=g_prime,
        beta=beta,
        truncation_terms=terms,
        tail_mass=tail_mass,
        fail_step=fail,
        success_step=success,
        fail_radius=rho_fail,
        selection=v_star,
    )


@dataclass(frozen=True)
class CyclePmf:
    """Distribution of the cycle length conditioned on its opening state."""

    state: int
    probs: np.ndarray  # probs[j - 1] = P(cycle length == j)
    tail: float
    fail_radius: float

    def __post_init__(self):
        if np.any(self.probs < 0):
            raise ValueError("cycle pmf entries must be nonnegative")


def cycle_length_pmf(analysis: CycleAnalysis, state: int, j_max: int) -> CyclePmf:
    """Cycle-length pmf for cycles opening in the given cascaded state.

    ``P(T = j) = sum_k [F^(j-1) S]_{state, k}`` evaluated for j up to
    ``j_max``; the remaining mass is reported as the tail.
    """
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    n = analysis.fail_step.shape[0]
    if not 0 <= state < n:
        raise ValueError(f"state {state} out of range")
    success_mass = analysis.success_step.sum(axis=1)
    row = np.zeros(n)
    row[state] = 1.0
    probs = np.empty(j_max)
    for j in range(j_max):
        probs[j] = float(row @ success_mass)
        row = row @ analysis.fail_step
    tail = max(0.0, 1.0 - float(probs.sum()))
    return CyclePmf(state=state, probs=probs, tail=tail, fail_radius=analysis.fail_radius)


@dataclass(frozen=True)
class ExpectedCycleCost:
    """Lower bound on the expected per-cycle cost, or a divergence flag."""

    value: float
    divergent: bool
    tail_term: float = 0.0


def expected_cycle_cost_lower_bound(
    process: ProcessModel, pmf: CyclePmf, eta: float
) -> ExpectedCycleCost:
    """Expected value of ``eta * rho(A)^(2 T)`` under a cycle-length pmf.

    The per-cycle cost of an unstable plant is at least ``eta * rho^(2 T)``,
    so this expectation bounds the average cost from below.  The series
    diverges (unbounded average cost) whenever ``rho^2`` times the failure
    spectral radius reaches 1; that is reported as a value, not an error.
    The truncated tail contributes at least ``eta * rho^(2 (j_max + 1))``
    times the tail mass when ``rho >= 1``.
    """
    rho = spectral_radius(process.A)
    if rho**2 * pmf.fail_radius >= 1.0:
        return ExpectedCycleCost(value=math.inf, divergent=True)
    log_rho2 = 2.0 * math.log(rho) if rho > 0 else -math.inf
    log_sum = -math.inf
    for j, p in enumerate(pmf.probs, start=1):
        if p > 0.0:
            log_sum = np.logaddexp(log_sum, j * log_rho2 + math.log(p))
    partial = eta * math.exp(log_sum) if log_sum > -math.inf else 0.0
    tail_term = 0.0
    if rho >= 1.0 and pmf.tail > 0.0:
        tail_term = eta * math.exp((len(pmf.probs) + 1) * log_rho2) * pmf.tail
    return ExpectedCycleCost(value=partial + tail_term, divergent=False, tail_term=tail_term)

"""Semi-Markov multi-frequency fading channels and their cascaded Markov chain.

The joint quality of the M frequencies holds for a random number of slots
(the holding period, bounded by ``max_holding``) and then jumps according to
a transition matrix over the composite quality states.  Pairing the quality
state with its elapsed holding time yields an ordinary Markov chain, the
"cascaded" chain, whose transition matrix everything downstream works with:

    from (quality i, held delta):
        -> (quality j, 1)          with prob  T[i, j] * hazard(i, delta)
        -> (quality i, delta + 1)  with prob  1 - hazard(i, delta)

where the hazard is the probability that the holding period ends now given
it has lasted delta slots.  With ``max_holding == 1`` the cascaded chain is
the quality chain itself, entry for entry.

Composite quality states enumerate the per-frequency levels in product order
with the last frequency varying fastest; cascaded states are ordered by
quality state with the holding time varying fastest.  Frequencies are
numbered 1..M throughout because 0 is reserved for "not scheduled" in
scheduling actions.
"""

from __future__ import annotations

import itertools
from bisect import bisect_right
from dataclasses import dataclass, field, replace

import networkx as nx
import numpy as np

from .errors import (
    DimensionMismatchError,
    FrequencyOutOfRangeError,
    NonConvergentError,
    NotIrreducibleError,
    PeriodicChainError,
    UnreachableHoldingTimeError,
)

_ROW_SUM_TOL = 1e-6  # inputs beyond this are rejected, never renormalized


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatchError(f"{name} must be a 2-d matrix, got shape {a.shape}")
    return a


def _check_stochastic_rows(mat: np.ndarray, name: str) -> None:
    if np.any(mat < 0):
        bad = int(np.argwhere(mat < 0)[0][0])
        raise ValueError(f"{name} row {bad} has a negative entry")
    sums = mat.sum(axis=1)
    off = np.abs(sums - 1.0)
    if np.any(off > _ROW_SUM_TOL):
        bad = int(np.argmax(off))
        raise ValueError(
            f"{name} row {bad} sums to {sums[bad]!r}, expected 1 within {_ROW_SUM_TOL}"
        )


def _check_probabilities(arr: np.ndarray, name: str) -> None:
    if np.any(arr < 0) or np.any(arr > 1):
        raise ValueError(f"{name} entries must lie in [0, 1]")


@dataclass(frozen=True)
class SemiMarkovChannelModel:
    """Semi-Markov model of M shared frequency channels.

    ``transition`` is the quality-state jump matrix over the product of the
    per-frequency levels; ``holding_pmf`` has one row per composite quality
    state giving the distribution of the holding period over 1..max_holding.
    Drop probabilities come in exactly one of three granularities:

    * ``level_drops``: per frequency, per level of that frequency (the usual
      case: quality level determines the drop rate of its own frequency),
    * ``state_drops``: per composite quality state and frequency,
    * ``cascade_drops``: per cascaded state and frequency, for drop rates
      that genuinely depend on the elapsed holding time.
    """

    levels_per_frequency: tuple[int, ...]
    transition: np.ndarray
    holding_pmf: np.ndarray
    level_drops: tuple[tuple[float, ...], ...] | None = None
    state_drops: np.ndarray | None = None
    cascade_drops: np.ndarray | None = None

    def __post_init__(self):
        levels = tuple(int(k) for k in self.levels_per_frequency)
        if not levels or any(k < 1 for k in levels):
            raise ValueError("levels_per_frequency must be positive integers")
        object.__setattr__(self, "levels_per_frequency", levels)
        m_bar = int(np.prod(levels))
        tr = _as_matrix(self.transition, "transition")
        if tr.shape != (m_bar, m_bar):
            raise DimensionMismatchError(
                f"transition must be {m_bar}x{m_bar} for levels {levels}, got {tr.shape}"
            )
        _check_stochastic_rows(tr, "transition")
        object.__setattr__(self, "transition", tr)

        pmf = np.asarray(self.holding_pmf, dtype=float)
        if pmf.ndim == 1:
            pmf = np.tile(pmf, (m_bar, 1))  # same holding law in every state
        if pmf.ndim != 2 or pmf.shape[0] != m_bar:
            raise DimensionMismatchError(
                f"holding_pmf must have {m_bar} rows, got shape {pmf.shape}"
            )
        if pmf.shape[1] < 1:
            raise ValueError("holding_pmf needs at least one column")
        _check_stochastic_rows(pmf, "holding_pmf")
        object.__setattr__(self, "holding_pmf", pmf)

        given = [
            name
            for name, value in (
                ("level_drops", self.level_drops),
                ("state_drops", self.state_drops),
                ("cascade_drops", self.cascade_drops),
            )
            if value is not None
        ]
        if len(given) != 1:
            raise ValueError(
                f"exactly one drop table must be given, got {given or 'none'}"
            )
        m = len(levels)
        if self.level_drops is not None:
            ld = tuple(tuple(float(d) for d in row) for row in self.level_drops)
            if len(ld) != m:
                raise DimensionMismatchError(
                    f"level_drops needs one row per frequency ({m}), got {len(ld)}"
                )
            for freq, row in enumerate(ld):
                if len(row) != levels[freq]:
                    raise DimensionMismatchError(
                        f"level_drops[{freq}] needs {levels[freq]} entries, got {len(row)}"
                    )
                _check_probabilities(np.asarray(row), f"level_drops[{freq}]")
            object.__setattr__(self, "level_drops", ld)
        if self.state_drops is not None:
            sd = _as_matrix(self.state_drops, "state_drops")
            if sd.shape != (m_bar, m):
                raise DimensionMismatchError(
                    f"state_drops must be {m_bar}x{m}, got {sd.shape}"
                )
            _check_probabilities(sd, "state_drops")
            object.__setattr__(self, "state_drops", sd)
        if self.cascade_drops is not None:
            m_til = m_bar * pmf.shape[1]
            cd = _as_matrix(self.cascade_drops, "cascade_drops")
            if cd.shape != (m_til, m):
                raise DimensionMismatchError(
                    f"cascade_drops must be {m_til}x{m}, got {cd.shape}"
                )
            _check_probabilities(cd, "cascade_drops")
            object.__setattr__(self, "cascade_drops", cd)

    @property
    def num_frequencies(self) -> int:
        return len(self.levels_per_frequency)

    @property
    def num_quality_states(self) -> int:
        return self.transition.shape[0]

    @property
    def max_holding(self) -> int:
        return self.holding_pmf.shape[1]

    @property
    def quality_states(self) -> tuple[tuple[int, ...], ...]:
        """Composite states as tuples of 0-based per-frequency level indices."""
        return tuple(itertools.product(*(range(k) for k in self.levels_per_frequency)))

    def quality_drop_table(self) -> np.ndarray:
        """Per composite quality state, per frequency drop probabilities."""
        if self.state_drops is not None:
            return self.state_drops.copy()
        if self.level_drops is None:
            raise ValueError("drop table is per cascaded state; no quality-level view")
        table = np.empty((self.num_quality_states, self.num_frequencies))
        for j, state in enumerate(self.quality_states):
            for m, level in enumerate(state):
                table[j, m] = self.level_drops[m][level]
        return table


def hazard(model: SemiMarkovChannelModel, state: int, delta: int) -> float:
    """Probability the holding period ends in the next slot.

    Given the quality state has already been held ``delta`` slots, this is
    ``pmf(delta) / sum(pmf(delta'), delta' >= delta)``.  Returns exactly 1.0
    whenever the remaining tail mass sits entirely at ``delta``.
    """
    if not 1 <= delta <= model.max_holding:
        raise ValueError(f"delta must be in 1..{model.max_holding}, got {delta}")
    row = model.holding_pmf[state]
    tail = float(row[delta - 1 :].sum())
    head = float(row[delta - 1])
    if tail <= 0.0:
        raise UnreachableHoldingTimeError(
            f"holding time {delta} in quality state {state} has zero probability"
        )
    if head == tail:
        return 1.0
    return min(1.0, head / tail)


@dataclass(frozen=True)
class CascadedChain:
    """Markov chain over (quality state, elapsed holding time) pairs.

    ``states[k]`` is the 0-based (quality, delta) pair of cascaded state k,
    with ``delta`` starting at 1.  ``drops[k, m-1]`` is the drop probability
    of frequency ``m`` in cascaded state k.  ``unreachable`` flags cascaded
    states that can never occur (their holding time has zero tail mass);
    they are kept so indexing matches num_quality_states * max_holding, and
    they receive no inbound probability.
    """

    states: tuple[tuple[int, int], ...]
    transition: np.ndarray
    drops: np.ndarray
    num_quality_states: int
    max_holding: int
    unreachable: frozenset[int] = frozenset()
    cumulative_rows: np.ndarray = field(default=None, repr=False, compare=False)
    _cum_tuples: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.cumulative_rows is None:
            object.__setattr__(
                self, "cumulative_rows", np.cumsum(self.transition, axis=1)
            )
        if self._cum_tuples is None:
            object.__setattr__(
                self,
                "_cum_tuples",
                tuple(tuple(row) for row in self.cumulative_rows.tolist()),
            )

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def num_frequencies(self) -> int:
        return self.drops.shape[1]

    def index_of(self, quality: int, delta: int) -> int:
        if not 0 <= quality < self.num_quality_states:
            raise ValueError(f"quality state {quality} out of range")
        if not 1 <= delta <= self.max_holding:
            raise ValueError(f"delta {delta} out of range")
        return quality * self.max_holding + (delta - 1)

    def with_drops(self, drops: np.ndarray) -> "CascadedChain":
        """Same chain with a replacement per-cascaded-state drop table."""
        drops = _as_matrix(drops, "drops")
        if drops.shape != self.drops.shape:
            raise DimensionMismatchError(
                f"drops must be {self.drops.shape}, got {drops.shape}"
            )
        _check_probabilities(drops, "drops")
        return replace(
            self,
            drops=drops,
            cumulative_rows=self.cumulative_rows,
            _cum_tuples=self._cum_tuples,
        )


def lift_quality_drops(
    quality_table: np.ndarray, max_holding: int
) -> np.ndarray:
    """Expand a per-quality-state drop table to cascaded states.

    The drop probability of a cascaded state is that of its quality state at
    every holding time.
    """
    quality_table = _as_matrix(quality_table, "quality drop table")
    return np.repeat(quality_table, max_holding, axis=0)


def _validate_chain(transition: np.ndarray, feasible: list[int]) -> None:
    graph = nx.DiGraph()
    graph.add_nodes_from(feasible)
    for i in feasible:
        for j in feasible:
            if transition[i, j] > 0.0:
                graph.add_edge(i, j)
    if not nx.is_strongly_connected(graph):
        raise NotIrreducibleError(
            "cascaded chain is not irreducible on its reachable states"
        )
    if not nx.is_aperiodic(graph):
        raise PeriodicChainError("cascaded chain is periodic on its reachable states")


def build_cascaded_chain(
    model: SemiMarkovChannelModel, validate: bool = True
) -> CascadedChain:
    """Convert the semi-Markov model to its cascaded Markov chain.

    Rows follow the two-case construction in the module docstring; a state
    whose holding time can never occur is flagged unreachable and given a
    forced-jump row (hazard 1) so the matrix stays row stochastic.  With
    ``validate`` the chain is required to be irreducible and aperiodic on its
    reachable states.
    """
    m_bar = model.num_quality_states
    d_max = model.max_holding
    m_til = m_bar * d_max
    states = tuple((q, d) for q in range(m_bar) for d in range(1, d_max + 1))
    mtil = np.zeros((m_til, m_til))
    unreachable = set()

    for k, (q, delta) in enumerate(states):
        tail = float(model.holding_pmf[q, delta - 1 :].sum())
        if tail <= 0.0:
            unreachable.add(k)
            h = 1.0
        else:
            h = hazard(model, q, delta)
        jump_cols = [j * d_max for j in range(m_bar)]  # all (j, 1) states
        if h == 1.0:
            mtil[k, jump_cols] = model.transition[q]  # exact copy, no arithmetic
        else:
            mtil[k, jump_cols] = model.transition[q] * h
            mtil[k, k + 1] = 1.0 - h  # stay, holding time grows

    if model.cascade_drops is not None:
        drops = model.cascade_drops.copy()
    else:
        drops = lift_quality_drops(model.quality_drop_table(), d_max)

    if validate:
        feasible = [k for k in range(m_til) if k not in unreachable]
        _validate_chain(mtil, feasible)

    return CascadedChain(
        states=states,
        transition=mtil,
        drops=drops,
        num_quality_states=m_bar,
        max_holding=d_max,
        unreachable=frozenset(unreachable),
    )


def greedy_selection(chain: CascadedChain) -> np.ndarray:
    """Per cascaded state, the frequency with the smallest drop probability.

    Ties break toward the lowest frequency index.  Frequencies are 1-based.
    """
    return np.argmin(chain.drops, axis=1).astype(int) + 1


def drop_matrix(chain: CascadedChain, selection: np.ndarray) -> np.ndarray:
    """Diagonal matrix of drop probabilities under a selection vector."""
    sel = np.asarray(selection, dtype=int)
    if sel.shape != (chain.num_states,):
        raise DimensionMismatchError(
            f"selection must have length {chain.num_states}, got shape {sel.shape}"
        )
    if np.any(sel < 1) or np.any(sel > chain.num_frequencies):
        raise FrequencyOutOfRangeError(
            f"selection entries must be in 1..{chain.num_frequencies}"
        )
    return np.diag(chain.drops[np.arange(chain.num_states), sel - 1])


def sample_next(chain: CascadedChain, current: int, rng: np.random.Generator) -> int:
    """Draw the next cascaded state from the row of the current one."""
    u = rng.random()
    idx = bisect_right(chain._cum_tuples[current], u)
    return min(idx, chain.num_states - 1)


def sample_path(
    chain: CascadedChain, start: int, num_steps: int, rng: np.random.Generator
) -> np.ndarray:
    """State trajectory of ``num_steps`` transitions, including the start."""
    path = np.empty(num_steps + 1, dtype=int)
    path[0] = start
    state = start
    for t in range(1, num_steps + 1):
        state = sample_next(chain, state, rng)
        path[t] = state
    return path


def sample_paths(
    chain: CascadedChain,
    starts: np.ndarray,
    num_steps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized trajectories for many independent replicas.

    Returns an array of shape (len(starts), num_steps + 1).  Statistically
    identical to :func:`sample_path` per replica; used when a large slot
    budget must be sampled quickly.
    """
    states = np.asarray(starts, dtype=int).copy()
    out = np.empty((states.size, num_steps + 1), dtype=int)
    out[:, 0] = states
    cum = chain.cumulative_rows
    last = chain.num_states - 1
    for t in range(1, num_steps + 1):
        u = rng.random(states.size)
        states = np.minimum(
            np.sum(cum[states] <= u[:, None], axis=1), last
        )
        out[:, t] = states
    return out


def chain_stationary(chain: CascadedChain, tol: float = 1e-10) -> np.ndarray:
    """Stationary distribution over cascaded states (zeros on unreachable ones)."""
    if not chain.unreachable:
        return stationary_distribution(chain.transition, tol)
    feasible = [k for k in range(chain.num_states) if k not in chain.unreachable]
    sub = chain.transition[np.ix_(feasible, feasible)]
    pi = np.zeros(chain.num_states)
    pi[feasible] = stationary_distribution(sub, tol)
    return pi


def stationary_distribution(p: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Stationary probability vector of an irreducible aperiodic chain.

    Solves the balance equations together with the normalization constraint
    by least squares, then verifies the fixed point to ``tol``.
    """
    p = _as_matrix(p, "transition matrix")
    n = p.shape[0]
    if p.shape != (n, n):
        raise DimensionMismatchError("transition matrix must be square")
    _check_stochastic_rows(p, "transition matrix")
    _validate_chain(p, list(range(n)))

    system = np.vstack([p.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    total = pi.sum()
    if total <= 0.0:
        raise NonConvergentError("stationary solve produced a zero vector")
    pi = pi / total
    if float(np.max(np.abs(pi @ p - pi))) > tol:
        raise NonConvergentError(f"stationary vector does not meet tol={tol}")
    if np.any(pi <= 0.0):
        raise NonConvergentError("stationary vector has nonpositive entries")
    return pi

"""Slot-level Monte Carlo simulator of the scheduled remote-estimation system.

Each slot, a scheduling policy observes the AoI vector and the current
cascaded channel state, assigns at most one sensor to each of the M
frequencies, and each scheduled transmission independently fails with the
drop probability of (channel state, frequency).  A success resets that
sensor's AoI to 1 on the next slot, otherwise it grows by one, and the
channel advances along the cascaded chain.

The default mode scores a run by the analytic per-age cost of each process;
the full-physics mode additionally simulates plant states, measurements and
both estimators, to check the per-age cost against the empirical squared
error.  Cost totals are accumulated both with compensated summation and in
log space, so diverging runs report growth rather than infinities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    CascadedChain,
    SemiMarkovChannelModel,
    build_cascaded_chain,
    chain_stationary,
    sample_next,
)
from .errors import InvalidActionError
from .process import CostFunction, ProcessModel

_LOG_MAX_FLOAT = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class Scenario:
    """A set of monitored processes sharing one multi-frequency channel.

    Bandwidth limitation requires fewer frequencies than sensors; the single
    special case N == 1 is allowed with M >= 1 (the virtual one-sensor setup
    used when analyzing the most unstable process on its own).
    """

    processes: tuple[ProcessModel, ...]
    cost_functions: tuple[CostFunction, ...]
    channel: SemiMarkovChannelModel
    chain: CascadedChain

    def __post_init__(self):
        n = len(self.processes)
        m = self.channel.num_frequencies
        if n < 1:
            raise ValueError("need at least one process")
        if n > 1 and m >= n:
            raise ValueError(
                f"need fewer frequencies than sensors, got M={m} >= N={n}"
            )

    @classmethod
    def build(
        cls, processes, channel: SemiMarkovChannelModel, validate_chain: bool = True
    ) -> "Scenario":
        processes = tuple(processes)
        chain = build_cascaded_chain(channel, validate=validate_chain)
        costs = tuple(CostFunction(p) for p in processes)
        return cls(
            processes=processes, cost_functions=costs, channel=channel, chain=chain
        )

    @property
    def num_sensors(self) -> int:
        return len(self.processes)

    @property
    def num_frequencies(self) -> int:
        return self.channel.num_frequencies


def frequency_ranking(chain: CascadedChain) -> np.ndarray:
    """Frequencies of each cascaded state ordered by ascending drop probability.

    Row s lists 1-based frequency indices; ties keep the lower index first.
    """
    return np.argsort(chain.drops, axis=1, kind="stable") + 1


def greedy_frequency_for(chain: CascadedChain, channel_state: int, rank: int = 1) -> int:
    """The rank-th most reliable frequency in the given channel state."""
    if not 1 <= rank <= chain.num_frequencies:
        raise ValueError(f"rank must be in 1..{chain.num_frequencies}")
    order = np.argsort(chain.drops[channel_state], kind="stable")
    return int(order[rank - 1]) + 1


class PersistentSerialPolicy:
    """Transmit one sensor repeatedly until it succeeds, then move on.

    Sensors are served in ascending index order, each on the most reliable
    frequency for the current channel state.  This is the scheduling
    structure whose stability matches the current-CSI test exactly.
    """

    name = "persistent-serial"

    def __init__(self, num_sensors: int, chain: CascadedChain):
        self.num_sensors = num_sensors
        self._ranking = frequency_ranking(chain)
        self._pointer = 0

    def reset(self) -> None:
        self._pointer = 0

    def select(self, aoi: np.ndarray, channel_state: int) -> np.ndarray:
        actions = np.zeros(self.num_sensors, dtype=int)
        actions[self._pointer] = self._ranking[channel_state, 0]
        return actions

    def observe(self, outcomes: np.ndarray) -> None:
        if outcomes[self._pointer]:
            self._pointer = (self._pointer + 1) % self.num_sensors


class GreedyTopKPolicy:
    """Schedule the sensors whose current cost is largest, best channel first.

    A baseline that exercises parallel frequency use: the k = min(M, N)
    sensors with the largest per-age cost are scheduled, the costliest on the
    most reliable frequency and so on down the ranking.  Not derived from the
    stability analysis; provided for comparison experiments.
    """

    name = "greedy-topk"

    def __init__(self, cost_functions, chain: CascadedChain):
        self.cost_functions = tuple(cost_functions)
        self.num_sensors = len(self.cost_functions)
        self._ranking = frequency_ranking(chain)
        self._k = min(chain.num_frequencies, self.num_sensors)

    def reset(self) -> None:
        pass

    def select(self, aoi: np.ndarray, channel_state: int) -> np.ndarray:
        logs = np.array(
            [cf.log_cost(int(age)) for cf, age in zip(self.cost_functions, aoi)]
        )
        order = np.lexsort((np.arange(self.num_sensors), -logs))
        actions = np.zeros(self.num_sensors, dtype=int)
        for rank, sensor in enumerate(order[: self._k]):
            actions[sensor] = self._ranking[channel_state, rank]
        return actions

    def observe(self, outcomes: np.ndarray) -> None:
        pass


class RoundRobinPolicy:
    """Cycle through sensors in fixed order, k = min(M, N) per slot."""

    name = "round-robin"

    def __init__(self, num_sensors: int, chain: CascadedChain):
        self.num_sensors = num_sensors
        self._ranking = frequency_ranking(chain)
        self._k = min(chain.num_frequencies, num_sensors)
        self._pointer = 0

    def reset(self) -> None:
        self._pointer = 0

    def select(self, aoi: np.ndarray, channel_state: int) -> np.ndarray:
        actions = np.zeros(self.num_sensors, dtype=int)
        for rank in range(self._k):
            sensor = (self._pointer + rank) % self.num_sensors
            actions[sensor] = self._ranking[channel_state, rank]
        self._pointer = (self._pointer + self._k) % self.num_sensors
        return actions

    def observe(self, outcomes: np.ndarray) -> None:
        pass


POLICIES = {
    PersistentSerialPolicy.name: PersistentSerialPolicy,
    GreedyTopKPolicy.name: GreedyTopKPolicy,
    RoundRobinPolicy.name: RoundRobinPolicy,
}


def make_policy(name: str, scenario: Scenario):
    if name == PersistentSerialPolicy.name:
        return PersistentSerialPolicy(scenario.num_sensors, scenario.chain)
    if name == GreedyTopKPolicy.name:
        return GreedyTopKPolicy(scenario.cost_functions, scenario.chain)
    if name == RoundRobinPolicy.name:
        return RoundRobinPolicy(scenario.num_sensors, scenario.chain)
    raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}")


@dataclass
class SimState:
    """Mutable per-run state: slot counter, AoI vector, channel state, RNG."""

    slot: int
    aoi: np.ndarray
    channel_state: int
    rng: np.random.Generator


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    channel_state: int
    actions: np.ndarray
    outcomes: np.ndarray
    aoi: np.ndarray
    costs: np.ndarray


def initial_state(
    scenario: Scenario, seed, initial_channel_state: int | None = None
) -> SimState:
    """Fresh state at slot 1 with unit AoI everywhere.

    Unless given, the initial channel state is drawn from the stationary
    distribution of the cascaded chain (one extra RNG draw).
    """
    rng = np.random.default_rng(seed)
    if initial_channel_state is None:
        pi = chain_stationary(scenario.chain)
        initial_channel_state = int(rng.choice(len(pi), p=pi))
    return SimState(
        slot=1,
        aoi=np.ones(scenario.num_sensors, dtype=int),
        channel_state=initial_channel_state,
        rng=rng,
    )


def _apply_actions(
    state: SimState, scenario: Scenario, actions
) -> np.ndarray:
    """Validate actions, draw outcomes, and return the success vector.

    One uniform is consumed per frequency (whether or not it is used), so
    outcome randomness does not depend on the policy.
    """
    n = scenario.num_sensors
    m = scenario.num_frequencies
    if len(actions) != n:
        raise InvalidActionError(f"action vector must have length {n}")
    draws = state.rng.random(m)
    drop_row = scenario.chain.drops[state.channel_state]
    outcomes = np.zeros(n, dtype=bool)
    used = 0
    for i in range(n):
        a = int(actions[i])
        if a == 0:
            continue
        if a < 0 or a > m:
            raise InvalidActionError(f"action {a} outside 0..{m}")
        bit = 1 << a
        if used & bit:
            raise InvalidActionError(f"frequency {a} assigned to more than one sensor")
        used |= bit
        if draws[a - 1] >= drop_row[a - 1]:
            outcomes[i] = True
    return outcomes


def step(
    state: SimState, scenario: Scenario, policy, want_record: bool = True
) -> tuple[SimState, SlotRecord | None]:
    """Advance the simulation by one slot (in place) and return the record.

    The policy sees the pre-transmission AoI and the current channel state;
    a success resets the sensor's AoI to 1 for the next slot, any other
    sensor's AoI grows by one, and the channel advances one transition.
    """
    actions = policy.select(state.aoi, state.channel_state)
    outcomes = _apply_actions(state, scenario, actions)
    policy.observe(outcomes)

    record = None
    if want_record:
        costs = np.array(
            [cf.cost(int(age)) for cf, age in zip(scenario.cost_functions, state.aoi)]
        )
        record = SlotRecord(
            slot=state.slot,
            channel_state=state.channel_state,
            actions=np.asarray(actions, dtype=int).copy(),
            outcomes=outcomes.copy(),
            aoi=state.aoi.copy(),
            costs=costs,
        )

    aoi = state.aoi
    for i in range(scenario.num_sensors):
        aoi[i] = 1 if outcomes[i] else aoi[i] + 1
    state.channel_state = sample_next(scenario.chain, state.channel_state, state.rng)
    state.slot += 1
    return state, record


class _CostAccumulator:
    """Kahan-compensated linear sum plus a log-space shadow total."""

    __slots__ = ("total", "_comp", "log_total", "saturated")

    def __init__(self):
        self.total = 0.0
        self._comp = 0.0
        self.log_total = -math.inf
        self.saturated = False

    def add(self, value: float, log_value: float) -> None:
        hi, lo = self.log_total, log_value
        if lo > hi:
            hi, lo = lo, hi
        if hi == -math.inf:
            pass  # both empty
        elif lo == -math.inf:
            self.log_total = hi
        else:
            self.log_total = hi + math.log1p(math.exp(lo - hi))
        if not self.saturated and value < math.inf:
            y = value - self._comp
            t = self.total + y
            self._comp = (t - self.total) - y
            self.total = t
        else:
            self.saturated = True

    def average(self, horizon: int) -> float:
        if self.saturated:
            log_avg = self.log_total - math.log(horizon)
            return math.exp(log_avg) if log_avg < _LOG_MAX_FLOAT else math.inf
        return self.total / horizon

    def log_average(self, horizon: int) -> float:
        return self.log_total - math.log(horizon)


@dataclass(frozen=True)
class SimSummary:
    """Outcome of one simulated run.

    ``avg_cost`` is the per-sensor running average of the per-age cost over
    the horizon, ``log_avg_cost`` its natural log (finite even when the
    linear value saturates).  ``checkpoint_log_total`` maps requested slots
    to the log of the total running average at that point, which is how
    divergence is reported across horizons.  ``mse_buckets`` is populated by
    the full-physics mode only.
    """

    horizon: int
    seed: object
    policy: str
    avg_cost: np.ndarray
    log_avg_cost: np.ndarray
    cycle_lengths: tuple[np.ndarray, ...]
    checkpoint_log_total: dict[int, float] = field(default_factory=dict)
    mse_buckets: "MseBuckets | None" = None
    saturated: bool = False

    @property
    def total_cost(self) -> float:
        return float(self.avg_cost.sum())

    @property
    def log_total_cost(self) -> float:
        finite = self.log_avg_cost[np.isfinite(self.log_avg_cost)]
        if finite.size == 0:
            return -math.inf
        return float(np.logaddexp.reduce(self.log_avg_cost))


@dataclass(frozen=True)
class MseBuckets:
    """Per-sensor empirical squared error grouped by AoI.

    ``counts[n, age]`` samples contributed to ``mean_sq[n, age]``;
    ``predicted[n, age]`` is the analytic per-age cost, the trace of the
    age-propagated steady covariance.  Index 0 is unused.
    """

    counts: np.ndarray
    mean_sq: np.ndarray
    predicted: np.ndarray


def run(
    scenario: Scenario,
    policy,
    horizon: int,
    seed,
    checkpoints=(),
    initial_channel_state: int | None = None,
    record_hook=None,
    record_limit: int | None = None,
) -> SimSummary:
    """Simulate ``horizon`` slots and return averaged costs and cycle samples.

    Reproducible: identical (scenario, policy, horizon, seed) give identical
    summaries.  ``record_hook`` receives a :class:`SlotRecord` for the first
    ``record_limit`` slots (all slots if None); leave it unset for speed.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = scenario.num_sensors
    state = initial_state(scenario, seed, initial_channel_state)
    policy.reset()
    accs = [_CostAccumulator() for _ in range(n)]
    cost_fns = scenario.cost_functions
    cycles: list[list[int]] = [[] for _ in range(n)]
    last_success = [0] * n
    checkpoint_set = {int(c) for c in checkpoints}
    checkpoint_log: dict[int, float] = {}

    sensors = range(n)
    for t in range(1, horizon + 1):
        for i in sensors:
            age = int(state.aoi[i])
            accs[i].add(cost_fns[i].cost(age), cost_fns[i].log_cost(age))
        want = record_hook is not None and (record_limit is None or t <= record_limit)
        state, record = step(state, scenario, policy, want_record=want)
        if want:
            record_hook(record)
        # step() already advanced slot/aoi; successes are where aoi reset to 1
        for i in sensors:
            if state.aoi[i] == 1:
                cycles[i].append(t - last_success[i])
                last_success[i] = t
        if t in checkpoint_set:
            logs = np.array([a.log_average(t) for a in accs])
            checkpoint_log[t] = float(np.logaddexp.reduce(logs))

    avg = np.array([a.average(horizon) for a in accs])
    log_avg = np.array([a.log_average(horizon) for a in accs])
    return SimSummary(
        horizon=horizon,
        seed=seed,
        policy=getattr(policy, "name", type(policy).__name__),
        avg_cost=avg,
        log_avg_cost=log_avg,
        cycle_lengths=tuple(np.array(c, dtype=int) for c in cycles),
        checkpoint_log_total=checkpoint_log,
        saturated=any(a.saturated for a in accs),
    )


def _psd_factor(mat: np.ndarray) -> np.ndarray:
    """Square root factor L with L L' = mat, valid for any symmetric PSD input."""
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def full_physics_run(
    scenario: Scenario,
    policy,
    horizon: int,
    seed,
    bucket_max: int = 10,
    burn_in: int = 1000,
    initial_channel_state: int | None = None,
) -> SimSummary:
    """Simulate the plant/sensor physics and bucket the remote error by AoI.

    Runs the same scheduling loop as :func:`run` while drawing the process
    and measurement noises, propagating the steady-gain local filter, and
    reconstructing the remote estimate from the last delivered local
    estimate.  The dynamics are propagated in error coordinates (local
    estimation error plus the buffered process noise), which reproduces
    ``remote estimate - true state`` exactly while staying bounded even for
    unstable plants whose raw trajectories would overflow:

        local_err(t) = (I - K C)(A local_err(t-1) - w(t)) + K z(t)
        remote_err(t) = A^age local_err(t - age) - sum_{j<age} A^j w(t - j)

    The first ``burn_in`` slots warm up the filter and are excluded from the
    buckets.  Squared remote errors are accumulated per AoI value up to
    ``bucket_max`` next to the analytic per-age cost they should match.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = scenario.num_sensors
    chain = scenario.chain
    state = initial_state(scenario, seed, initial_channel_state)
    policy.reset()
    cost_fns = scenario.cost_functions
    accs = [_CostAccumulator() for _ in range(n)]
    cycles: list[list[int]] = [[] for _ in range(n)]
    last_success = [0] * n

    dims = [p.state_dim for p in scenario.processes]
    mdims = [p.measurement_dim for p in scenario.processes]
    w_fact = [_psd_factor(p.W) for p in scenario.processes]
    z_fact = [np.linalg.cholesky(p.Z) for p in scenario.processes]
    gains = [cf.kf.gain for cf in cost_fns]
    closed = [
        (np.eye(dims[i]) - gains[i] @ p.C) for i, p in enumerate(scenario.processes)
    ]
    a_pows: list[list[np.ndarray]] = []
    for p in scenario.processes:
        pows = [np.eye(p.state_dim)]
        for _ in range(bucket_max):
            pows.append(p.A @ pows[-1])
        a_pows.append(pows)

    local_err = [np.zeros(d) for d in dims]
    ring = bucket_max + 2
    err_hist = [np.zeros((ring, d)) for d in dims]
    noise_hist = [np.zeros((ring, d)) for d in dims]
    counts = np.zeros((n, bucket_max + 1), dtype=int)
    sq_sums = np.zeros((n, bucket_max + 1))

    for t in range(1, horizon + 1):
        for i in range(n):
            proc = scenario.processes[i]
            w = w_fact[i] @ state.rng.standard_normal(dims[i])
            z = z_fact[i] @ state.rng.standard_normal(mdims[i])
            local_err[i] = closed[i] @ (proc.A @ local_err[i] - w) + gains[i] @ z
            err_hist[i][t % ring] = local_err[i]
            noise_hist[i][t % ring] = w

            age = int(state.aoi[i])
            accs[i].add(cost_fns[i].cost(age), cost_fns[i].log_cost(age))
            if t > burn_in and age <= bucket_max:
                err = a_pows[i][age] @ err_hist[i][(t - age) % ring]
                for j in range(age):
                    err -= a_pows[i][j] @ noise_hist[i][(t - j) % ring]
                counts[i, age] += 1
                sq_sums[i, age] += float(err @ err)

        actions = policy.select(state.aoi, state.channel_state)
        outcomes = _apply_actions(state, scenario, actions)
        policy.observe(outcomes)
        aoi = state.aoi
        for i in range(n):
            if outcomes[i]:
                cycles[i].append(t - last_success[i])
                last_success[i] = t
                aoi[i] = 1
            else:
                aoi[i] += 1
        state.channel_state = sample_next(chain, state.channel_state, state.rng)
        state.slot += 1

    with np.errstate(invalid="ignore"):
        mean_sq = np.where(counts > 0, sq_sums / np.maximum(counts, 1), np.nan)
    predicted = np.zeros((n, bucket_max + 1))
    for i in range(n):
        for age in range(1, bucket_max + 1):
            predicted[i, age] = cost_fns[i].cost(age)
    buckets = MseBuckets(counts=counts, mean_sq=mean_sq, predicted=predicted)

    avg = np.array([a.average(horizon) for a in accs])
    log_avg = np.array([a.log_average(horizon) for a in accs])
    return SimSummary(
        horizon=horizon,
        seed=seed,
        policy=getattr(policy, "name", type(policy).__name__),
        avg_cost=avg,
        log_avg_cost=log_avg,
        cycle_lengths=tuple(np.array(c, dtype=int) for c in cycles),
        mse_buckets=buckets,
        saturated=any(a.saturated for a in accs),
    )

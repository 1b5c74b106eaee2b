"""Steady-state neuroevolution of gated perceptrons.

One offspring per step: binary tournament picks a parent, a single-gene
mutation produces the child, the child is evaluated on the training set
and then overwrites a uniformly chosen victim. When child and victim have
exactly equal training error, the one using fewer active gates keeps the
slot, which applies a constant selective pressure against gate use.

A "generation" is ``offspring_per_generation`` steps of this loop
(default: one per population member, i.e. P offspring), so the default
1000-generation run performs 50,000 fitness evaluations.

Because each mutation changes one gene, training fitness is maintained
incrementally: every population member carries the deterministic part of
its pre-activations on the training set, and an offspring's state is its
parent's plus one column update. Only drop-gate coin flips are redrawn
per evaluation. The direct forward pass in :mod:`dendrevo.net` remains
the reference; the cached path must agree with it to float tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

from .net import (
    DEFAULT_DROP_PROB,
    GateKind,
    GateState,
    Individual,
    Network,
    count_active_gates,
    mse,
)
from .nk import Dataset, NKLandscape, generate_dataset


class Variant(Enum):
    """Which gate machinery the mutation operator may introduce."""

    STANDARD = "standard"  # plain MLP: weights only, no gates ever
    DENDRITE_THRESHOLD = "dendrite"  # lower/upper activation thresholds
    DENDRITE_RANGE = "range"  # [lo, hi] admission window
    RANDOM_DROPOUT = "dropout"  # coin-flip transmission control


@dataclass(frozen=True)
class EvoConfig:
    """Evolution settings; defaults follow the reference experiments
    (population 50, 10 hidden nodes, mutation half-width 0.1)."""

    p: int = 50
    h: int = 10
    r: float = 0.1
    generations: int = 1000
    offspring_per_generation: int | None = None  # None means p
    variant: Variant = Variant.STANDARD
    dendrite_mutation_prob: float = 0.5
    parsimony: bool = True
    seed: int = 0
    drop_prob: float = DEFAULT_DROP_PROB
    resample_train_each_generation: bool = False

    def __post_init__(self) -> None:
        if self.p < 2:
            raise ValueError("population size must be at least 2")
        if self.h < 1:
            raise ValueError("need at least one hidden node")
        if self.r <= 0:
            raise ValueError("mutation range half-width must be positive")
        if self.generations < 0:
            raise ValueError("generations cannot be negative")
        if not 0.0 <= self.dendrite_mutation_prob <= 1.0:
            raise ValueError("dendrite_mutation_prob must lie in [0, 1]")
        if self.offspring_per_generation is not None and self.offspring_per_generation < 1:
            raise ValueError("offspring_per_generation must be >= 1")

    @property
    def steps_per_generation(self) -> int:
        return self.offspring_per_generation if self.offspring_per_generation else self.p

    @property
    def effective_dendrite_prob(self) -> float:
        """STANDARD never takes the gate-mutation path."""
        if self.variant is Variant.STANDARD:
            return 0.0
        return self.dendrite_mutation_prob


Population = list  # exactly p Individuals, fitnesses cached on the training set


@dataclass(frozen=True)
class TraceRecord:
    generation: int
    best_train_mse: float
    best_test_mse: float
    best_gate_fraction: float
    mean_gate_fraction: float


@dataclass
class RunTrace:
    """Per-generation metrics plus the final best genome.

    Gate fractions are reported against the full weighted parameter count
    (n*h + 2h + 1, e.g. 15/10021 at n=1000, h=10), matching how the
    gate-usage traces are plotted. ``input_gate_counts[j]`` is the number
    of gated connections into hidden node j; ``output_gate_flags[j]`` is 1
    when the hidden-j-to-output connection is gated.
    """

    records: list[TraceRecord]
    final_network: Network
    input_gate_counts: np.ndarray = field(init=False)
    output_gate_flags: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.input_gate_counts = np.count_nonzero(
            self.final_network.gate_kind_in, axis=1
        ).astype(np.int64)
        self.output_gate_flags = (self.final_network.gate_kind_out != 0).astype(np.int64)


def seed_population(
    config: EvoConfig,
    n: int,
    train: Dataset,
    rng: np.random.Generator,
) -> Population:
    """P networks with weights and biases uniform in [-1, 1], gates inactive."""
    if len(train) == 0:
        raise ValueError("training set must be nonempty")
    pop: Population = []
    for _ in range(config.p):
        net = Network.zeros(n, config.h)
        net.w_in[:] = rng.uniform(-1.0, 1.0, size=(config.h, n))
        net.b_hidden[:] = rng.uniform(-1.0, 1.0, size=config.h)
        net.w_out[:] = rng.uniform(-1.0, 1.0, size=config.h)
        net.b_out = float(rng.uniform(-1.0, 1.0))
        pop.append(Individual(net, mse(net, train), 0))
    return pop


def tournament_select(pop: Population, rng: np.random.Generator) -> int:
    """Binary tournament: two uniform draws with replacement, lower
    training error wins, exact tie decided by a fair coin."""
    a, b = rng.integers(0, len(pop), size=2)
    a, b = int(a), int(b)
    fa, fb = pop[a].fitness, pop[b].fitness
    if fa < fb:
        return a
    if fb < fa:
        return b
    return a if rng.random() < 0.5 else b


# --- single-gene mutation -----------------------------------------------------

# Flat parameter layout for weight mutations: input weights row-major,
# then hidden biases, then output weights, then the output bias.
_FIELD_W_IN = 0
_FIELD_B_HIDDEN = 1
_FIELD_W_OUT = 2
_FIELD_B_OUT = 3


@dataclass(frozen=True)
class WeightChange:
    """One weight or bias shifted by delta."""

    kind: int  # one of the _FIELD_* codes
    j: int  # hidden node (unused for the output bias)
    i: int  # input index, input-weight changes only
    delta: float


@dataclass(frozen=True)
class GateChange:
    """One connection's gate replaced (old may equal new: the dropout
    re-enable move is a deliberate no-op)."""

    output_layer: bool
    j: int
    i: int  # input index, input-layer changes only
    old: GateState
    new: GateState


MutationRecord = WeightChange | GateChange


def _activate_gate(variant: Variant, rng: np.random.Generator) -> GateState:
    """Fresh gate for a connection that had none, per the variant."""
    if variant is Variant.DENDRITE_THRESHOLD:
        threshold = float(rng.uniform(-1.0, 1.0))
        if rng.random() < 0.5:
            return GateState.lower(threshold)
        return GateState.upper(threshold)
    if variant is Variant.DENDRITE_RANGE:
        edges = rng.uniform(-1.0, 1.0, size=2)
        return GateState.band(float(edges.min()), float(edges.max()))
    if variant is Variant.RANDOM_DROPOUT:
        return GateState.drop()
    raise ValueError(f"variant {variant} cannot introduce gates")


def _mutate_active_gate(gate: GateState, r: float, rng: np.random.Generator) -> GateState:
    """Uniform choice among the gate's applicable moves.

    Thresholds: perturb the value, flip lower/upper, or disable.
    Ranges: perturb both edges (re-ordered to keep lo <= hi) or disable.
    Drop gates have no parameter: disable or a no-op re-enable.
    """
    if gate.kind in (GateKind.LOWER, GateKind.UPPER):
        move = int(rng.integers(0, 3))
        if move == 0:
            return GateState(gate.kind, gate.a + float(rng.uniform(-r, r)))
        if move == 1:
            flipped = GateKind.UPPER if gate.kind is GateKind.LOWER else GateKind.LOWER
            return GateState(flipped, gate.a)
        return GateState.inactive()
    if gate.kind is GateKind.RANGE:
        move = int(rng.integers(0, 2))
        if move == 0:
            edges = np.array([gate.a, gate.b]) + rng.uniform(-r, r, size=2)
            return GateState.band(float(edges.min()), float(edges.max()))
        return GateState.inactive()
    if gate.kind is GateKind.DROP:
        move = int(rng.integers(0, 2))
        if move == 0:
            return GateState.drop()
        return GateState.inactive()
    raise ValueError("cannot mutate an inactive gate here")


def describe_mutation(
    parent: Network, config: EvoConfig, rng: np.random.Generator
) -> tuple[Network, MutationRecord]:
    """Single-gene mutation, returning the child and what changed.

    With probability 1 - dendrite_mutation_prob (always, for STANDARD) a
    uniformly chosen weighted parameter, biases included, is shifted by a
    uniform draw from [-r, +r]. Otherwise a uniformly chosen gated
    connection is hit: an inactive gate is activated with fresh uniform
    [-1, 1] parameters, an active one takes one of its moves. Values are
    never clamped; a threshold drifting outside [-1, 1] simply behaves as
    an always-open (or always-shut) condition for inputs in range.
    """
    child = parent.copy()
    n, h = child.n, child.h
    if rng.random() < config.effective_dendrite_prob:
        gate_idx = int(rng.integers(0, child.gateable_count))
        if gate_idx < n * h:
            j, i = divmod(gate_idx, n)
            old = child.input_gate(j, i)
            if old.kind is GateKind.INACTIVE:
                new = _activate_gate(config.variant, rng)
            else:
                new = _mutate_active_gate(old, config.r, rng)
            child.set_input_gate(j, i, new)
            return child, GateChange(False, j, i, old, new)
        j = gate_idx - n * h
        old = child.output_gate(j)
        if old.kind is GateKind.INACTIVE:
            new = _activate_gate(config.variant, rng)
        else:
            new = _mutate_active_gate(old, config.r, rng)
        child.set_output_gate(j, new)
        return child, GateChange(True, j, 0, old, new)
    param_idx = int(rng.integers(0, child.param_count))
    delta = float(rng.uniform(-config.r, config.r))
    if param_idx < n * h:
        j, i = divmod(param_idx, n)
        child.w_in[j, i] += delta
        return child, WeightChange(_FIELD_W_IN, j, i, delta)
    if param_idx < n * h + h:
        j = param_idx - n * h
        child.b_hidden[j] += delta
        return child, WeightChange(_FIELD_B_HIDDEN, j, 0, delta)
    if param_idx < n * h + 2 * h:
        j = param_idx - n * h - h
        child.w_out[j] += delta
        return child, WeightChange(_FIELD_W_OUT, j, 0, delta)
    child.b_out += delta
    return child, WeightChange(_FIELD_B_OUT, 0, 0, delta)


def mutate(parent: Network, config: EvoConfig, rng: np.random.Generator) -> Network:
    """Single-gene mutation; see :func:`describe_mutation` for the rules."""
    child, _ = describe_mutation(parent, config, rng)
    return child


def _replace_slot(
    pop: Population,
    offspring: Individual,
    parsimony: bool,
    rng: np.random.Generator,
) -> tuple[int, bool]:
    """Pick the victim slot and decide; returns (slot, offspring moved in)."""
    idx = int(rng.integers(0, len(pop)))
    victim = pop[idx]
    if parsimony and offspring.fitness == victim.fitness:
        if offspring.active_gate_count > victim.active_gate_count:
            return idx, False
        if offspring.active_gate_count == victim.active_gate_count:
            if rng.random() >= 0.5:
                return idx, False
    pop[idx] = offspring
    return idx, True


def replace(
    pop: Population,
    offspring: Individual,
    parsimony: bool,
    rng: np.random.Generator,
) -> Population:
    """Overwrite a uniformly chosen slot with the offspring.

    Replacement is unconditional on fitness; only an exact fitness tie
    triggers the parsimony rule, where the contender with fewer active
    gates keeps the slot and equal counts fall to a fair coin.
    """
    _replace_slot(pop, offspring, parsimony, rng)
    return pop


# --- incremental training-set evaluation --------------------------------------

_DET_GATE_KINDS = (GateKind.LOWER, GateKind.UPPER, GateKind.RANGE)


def _det_mask(gate: GateState, values: np.ndarray) -> np.ndarray:
    if gate.kind is GateKind.LOWER:
        return values >= gate.a
    if gate.kind is GateKind.UPPER:
        return values <= gate.a
    if gate.kind is GateKind.RANGE:
        return (values >= gate.a) & (values <= gate.b)
    raise ValueError("mask is only defined for deterministic gate kinds")


def _eff_mask(gate: GateState, values: np.ndarray):
    """Deterministic contribution factor of a connection under a gate:
    a 0/1 mask for threshold/range kinds, 1 otherwise (inactive gates
    always transmit; drop corrections are applied per pass, not here)."""
    if gate.kind in _DET_GATE_KINDS:
        return _det_mask(gate, values).astype(np.float64)
    return 1.0


@dataclass
class EvalState:
    """Deterministic evaluation state of one network on one dataset.

    det_pre_hidden holds the hidden pre-activations with threshold/range
    retractions applied and drop-gated contributions still included (drop
    corrections are per-pass). hidden and det_pre_out follow from it the
    same way. For a network with no drop gates, det_pre_out is the exact
    output pre-activation.
    """

    det_pre_hidden: np.ndarray  # (samples, h)
    hidden: np.ndarray  # (samples, h) = expit(det_pre_hidden)
    det_pre_out: np.ndarray  # (samples,)

    def copy(self) -> "EvalState":
        return EvalState(
            self.det_pre_hidden.copy(), self.hidden.copy(), self.det_pre_out.copy()
        )


class TrainEvaluator:
    """Incremental MSE evaluation against one fixed dataset.

    ``full_state`` prices a network from scratch; ``child_state`` prices
    a single-gene mutant from its parent's state in O(samples). ``score``
    turns a state into the MSE, redrawing drop-gate coins per call. The
    direct route (:func:`dendrevo.net.mse`) is the reference; both agree
    to float rounding, and exactly when no drop gates are involved and
    the states were built by the same expressions.
    """

    def __init__(self, data: Dataset, drop_prob: float = DEFAULT_DROP_PROB):
        self.features = data.features
        self.targets = data.targets
        self.drop_prob = drop_prob

    def full_state(self, net: Network) -> EvalState:
        return self._finish_state(net, self.features @ net.w_in.T + net.b_hidden)

    def full_states(self, nets: list[Network]) -> list[EvalState]:
        """States for a whole population at once.

        The input-layer products are fused into one matrix multiply,
        which is what makes per-generation training-set resampling
        affordable. The fused product can differ from the one-network
        route in the last float digit (the BLAS kernel depends on the
        output shape), so a loop that relies on exact fitness ties must
        price every member through the same route.
        """
        if not nets:
            return []
        stacked = np.hstack([net.w_in.T for net in nets])  # (n, len*h)
        products = self.features @ stacked
        states = []
        for m, net in enumerate(nets):
            block = products[:, m * net.h : (m + 1) * net.h] + net.b_hidden
            states.append(self._finish_state(net, block))
        return states

    def _finish_state(self, net: Network, det_pre_hidden: np.ndarray) -> EvalState:
        """Apply deterministic gate retractions and price the output layer."""
        X = self.features
        kinds = net.gate_kind_in.reshape(-1)
        det = np.isin(kinds, _DET_GATE_KINDS)
        flat = np.flatnonzero(det)
        if flat.size:
            j_idx = flat // net.n
            i_idx = flat % net.n
            values = X[:, i_idx]
            a = net.gate_a_in.reshape(-1)[flat]
            b = net.gate_b_in.reshape(-1)[flat]
            k = kinds[flat]
            passed = np.empty(values.shape, dtype=bool)
            sel = k == GateKind.LOWER
            passed[:, sel] = values[:, sel] >= a[sel]
            sel = k == GateKind.UPPER
            passed[:, sel] = values[:, sel] <= a[sel]
            sel = k == GateKind.RANGE
            passed[:, sel] = (values[:, sel] >= a[sel]) & (values[:, sel] <= b[sel])
            retract = np.where(passed, 0.0, net.w_in[j_idx, i_idx] * values)
            starts = np.flatnonzero(np.r_[True, j_idx[1:] != j_idx[:-1]])
            det_pre_hidden[:, j_idx[starts]] -= np.add.reduceat(retract, starts, axis=1)
        hidden = expit(det_pre_hidden)
        det_pre_out = hidden @ net.w_out + net.b_out
        for j in range(net.h):
            gate = net.output_gate(j)
            if gate.kind in _DET_GATE_KINDS:
                mask = _det_mask(gate, hidden[:, j])
                det_pre_out -= np.where(mask, 0.0, net.w_out[j] * hidden[:, j])
        return EvalState(det_pre_hidden, hidden, det_pre_out)

    def _refresh_node(self, child: Network, state: EvalState, j: int) -> None:
        """Recompute hidden column j and fold the change into det_pre_out."""
        h_old = state.hidden[:, j].copy()
        h_new = expit(state.det_pre_hidden[:, j])
        state.hidden[:, j] = h_new
        gate = child.output_gate(j)
        w = float(child.w_out[j])
        if gate.kind in _DET_GATE_KINDS:
            m_old = _det_mask(gate, h_old).astype(np.float64)
            m_new = _det_mask(gate, h_new).astype(np.float64)
            state.det_pre_out += w * (h_new * m_new - h_old * m_old)
        else:
            state.det_pre_out += w * (h_new - h_old)

    def child_state(
        self, parent_state: EvalState, child: Network, change: MutationRecord
    ) -> EvalState:
        state = parent_state.copy()
        X = self.features
        if isinstance(change, WeightChange):
            if change.kind == _FIELD_W_IN:
                j, i = change.j, change.i
                column = X[:, i]
                state.det_pre_hidden[:, j] += (
                    change.delta * column * _eff_mask(child.input_gate(j, i), column)
                )
                self._refresh_node(child, state, j)
            elif change.kind == _FIELD_B_HIDDEN:
                state.det_pre_hidden[:, change.j] += change.delta
                self._refresh_node(child, state, change.j)
            elif change.kind == _FIELD_W_OUT:
                j = change.j
                h = state.hidden[:, j]
                state.det_pre_out += (
                    change.delta * h * _eff_mask(child.output_gate(j), h)
                )
            else:
                state.det_pre_out += change.delta
            return state
        if not change.output_layer:
            j, i = change.j, change.i
            column = X[:, i]
            w = float(child.w_in[j, i])
            state.det_pre_hidden[:, j] += w * column * (
                _eff_mask(change.new, column) - _eff_mask(change.old, column)
            )
            self._refresh_node(child, state, j)
            return state
        j = change.j
        h = state.hidden[:, j]
        w = float(child.w_out[j])
        state.det_pre_out += w * h * (_eff_mask(change.new, h) - _eff_mask(change.old, h))
        return state

    def score(
        self, net: Network, state: EvalState, rng: np.random.Generator | None = None
    ) -> float:
        """MSE from a state. Drop coins, when present, are drawn in the
        same order as the direct route: one block for the input layer's
        drop gates in ascending connection order, then one for the
        output layer's."""
        X = self.features
        drop_in = np.flatnonzero(net.gate_kind_in.reshape(-1) == GateKind.DROP)
        if drop_in.size:
            if rng is None:
                raise ValueError("a DROP gate needs an rng to flip its coins")
            j_idx = drop_in // net.n
            i_idx = drop_in % net.n
            values = X[:, i_idx]
            coins = rng.random((X.shape[0], drop_in.size)) >= self.drop_prob
            retract = np.where(coins, 0.0, net.w_in[j_idx, i_idx] * values)
            pre_hidden = state.det_pre_hidden.copy()
            starts = np.flatnonzero(np.r_[True, j_idx[1:] != j_idx[:-1]])
            pre_hidden[:, j_idx[starts]] -= np.add.reduceat(retract, starts, axis=1)
            hidden = expit(pre_hidden)
            pre_out = hidden @ net.w_out + net.b_out
            for j in range(net.h):
                gate = net.output_gate(j)
                if gate.kind in _DET_GATE_KINDS:
                    mask = _det_mask(gate, hidden[:, j])
                    pre_out -= np.where(mask, 0.0, net.w_out[j] * hidden[:, j])
            pre_out = self._retract_output_drops(net, hidden, pre_out, rng)
        else:
            drop_out = np.flatnonzero(net.gate_kind_out == GateKind.DROP)
            if drop_out.size:
                if rng is None:
                    raise ValueError("a DROP gate needs an rng to flip its coins")
                pre_out = self._retract_output_drops(
                    net, state.hidden, state.det_pre_out.copy(), rng
                )
            else:
                pre_out = state.det_pre_out
        err = expit(pre_out) - self.targets
        return float(err @ err / err.shape[0])

    def _retract_output_drops(self, net, hidden, pre_out, rng):
        drop_out = np.flatnonzero(net.gate_kind_out == GateKind.DROP)
        if drop_out.size:
            values = hidden[:, drop_out]
            coins = rng.random((hidden.shape[0], drop_out.size)) >= self.drop_prob
            pre_out = pre_out - np.where(coins, 0.0, net.w_out[drop_out] * values).sum(axis=1)
        return pre_out


# --- the steady-state loop -----------------------------------------------------


def _record(
    pop: Population,
    generation: int,
    test: Dataset,
    rng: np.random.Generator,
    drop_prob: float,
) -> TraceRecord:
    best_idx = min(range(len(pop)), key=lambda m: pop[m].fitness)
    best = pop[best_idx]
    denom = best.network.param_count
    mean_fraction = float(
        np.mean([member.active_gate_count / denom for member in pop])
    )
    return TraceRecord(
        generation=generation,
        best_train_mse=best.fitness,
        best_test_mse=mse(best.network, test, rng, drop_prob),
        best_gate_fraction=best.active_gate_count / denom,
        mean_gate_fraction=mean_fraction,
    )


def run_evolution(
    config: EvoConfig,
    landscape: NKLandscape | None,
    train: Dataset,
    test: Dataset,
    rng: np.random.Generator | None = None,
) -> RunTrace:
    """Run the steady-state loop and record one trace row per generation.

    All randomness (seeding, selection, mutation, drop-gate coins) flows
    through one stream, so a given seed fully determines the trace.
    Training fitness is maintained by the incremental evaluator; test
    error is measured by the direct forward pass on the generation's
    best member. The landscape is only consulted when per-generation
    training-set resampling is enabled; pass None otherwise if it has
    been dropped.
    """
    if train.n != test.n:
        raise ValueError(f"train n={train.n} and test n={test.n} disagree")
    if landscape is not None and landscape.n != train.n:
        raise ValueError(f"landscape n={landscape.n} does not match data n={train.n}")
    if config.resample_train_each_generation and landscape is None:
        raise ValueError("training-set resampling needs the landscape")
    if rng is None:
        rng = np.random.default_rng(config.seed)

    evaluator = TrainEvaluator(train, config.drop_prob)
    pop = seed_population(config, train.n, train, rng)
    states = evaluator.full_states([member.network for member in pop])
    for member, state in zip(pop, states):
        member.fitness = evaluator.score(member.network, state, rng)
    records = [_record(pop, 0, test, rng, config.drop_prob)]
    for generation in range(1, config.generations + 1):
        if config.resample_train_each_generation:
            train = generate_dataset(landscape, len(train), train.encoding, rng)
            evaluator = TrainEvaluator(train, config.drop_prob)
            states = evaluator.full_states([member.network for member in pop])
            for idx, member in enumerate(pop):
                member.fitness = evaluator.score(member.network, states[idx], rng)
        for _ in range(config.steps_per_generation):
            parent_idx = tournament_select(pop, rng)
            child_net, change = describe_mutation(
                pop[parent_idx].network, config, rng
            )
            child_state = evaluator.child_state(states[parent_idx], child_net, change)
            child = Individual(
                child_net,
                evaluator.score(child_net, child_state, rng),
                count_active_gates(child_net)[0],
            )
            slot, moved_in = _replace_slot(pop, child, config.parsimony, rng)
            if moved_in:
                states[slot] = child_state
        records.append(_record(pop, generation, test, rng, config.drop_prob))
    best = min(pop, key=lambda m: m.fitness)
    return RunTrace(records=records, final_network=best.network)

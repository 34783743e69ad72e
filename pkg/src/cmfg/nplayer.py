"""The finite N-player game built from one shared game specification.

Players are coupled only through the exclusive empirical measure of the other
N-1 states.  This module provides

  * exact joint-state propagation on the dense product space X^N,
  * a vectorized Monte Carlo simulator with counter-based random streams,
  * deviation gains (the epsilon in epsilon-correlated equilibrium),
    decomposed per recommendation, exactly or by simulation with common
    random numbers, and
  * symmetric correlated equilibria via an exact-rational feasibility LP
    reduced to strategy multisets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from . import rng
from .lp import EQ, GE, InfeasibleError, LinRow, LinearProgram, solve_lp
from .mfg import DeviationMap
from .model import (
    DEFAULT_ATOM_CAP,
    DEFAULT_JOINT_CAP,
    DEFAULT_LP_CAP,
    DEFAULT_STRATEGY_CAP,
    EXACT,
    FLOAT,
    FLOAT_SUM_TOL,
    FLOAT_TOL,
    CapacityError,
    FiniteSpace,
    FlowTrajectory,
    GameSpec,
    ProbabilityVector,
    RestrictedStrategy,
    Scalar,
    enumerate_strategies,
    zero,
)

_CHUNK = 4096
_COST_MATRIX_BYTES_CAP = 1 << 29  # 512 MiB of per-replication candidate costs


# ---------------------------------------------------------------------------
# profiles


def _weights_mode(weights) -> str:
    return FLOAT if any(isinstance(w, float) for w in weights) else EXACT


def _check_weights(weights, mode: str, what: str) -> None:
    if any(w <= 0 for w in weights):
        raise ValueError(f"{what} weights must be positive")
    total = sum(weights)
    if mode == EXACT:
        if total != 1:
            raise ValueError(f"{what} weights sum to {total}, not 1")
    elif abs(total - 1.0) > FLOAT_SUM_TOL:
        raise ValueError(f"{what} weights sum to {total!r}")


@dataclass(frozen=True)
class ExplicitProfile:
    """Distribution over length-N strategy assignments, one atom per tuple."""

    n_players: int
    atoms: tuple[tuple[tuple[RestrictedStrategy, ...], Scalar], ...]

    def __post_init__(self):
        if self.n_players < 2:
            raise ValueError("need at least two players")
        if not self.atoms:
            raise ValueError("profile needs at least one atom")
        merged: dict[tuple, list] = {}
        for vec, w in self.atoms:
            if len(vec) != self.n_players:
                raise ValueError(f"atom has {len(vec)} strategies, want {self.n_players}")
            key = tuple(s.actions for s in vec)
            if key in merged:
                merged[key][1] = merged[key][1] + w
            else:
                merged[key] = [tuple(vec), w]
        atoms = sorted(merged.values(), key=lambda e: tuple(s.sort_key() for s in e[0]))
        mode = _weights_mode([w for _, w in atoms])
        _check_weights([w for _, w in atoms], mode, "profile")
        object.__setattr__(self, "atoms", tuple((v, w) for v, w in atoms))

    @property
    def mode(self) -> str:
        return _weights_mode([w for _, w in self.atoms])

    def support_strategies(self) -> tuple[RestrictedStrategy, ...]:
        seen: dict[tuple, RestrictedStrategy] = {}
        for vec, _ in self.atoms:
            for s in vec:
                seen.setdefault(s.actions, s)
        return tuple(sorted(seen.values(), key=lambda s: s.sort_key()))


@dataclass(frozen=True)
class FactoredProfile:
    """Mediator draws a flow, then hands out i.i.d. strategies given the flow."""

    n_players: int
    flows: tuple[FlowTrajectory, ...]
    flow_weights: tuple[Scalar, ...]
    conditionals: tuple[tuple[tuple[RestrictedStrategy, Scalar], ...], ...]

    def __post_init__(self):
        if self.n_players < 2:
            raise ValueError("need at least two players")
        if not (len(self.flows) == len(self.flow_weights) == len(self.conditionals)):
            raise ValueError("flows, weights and conditionals must align")
        if not self.flows:
            raise ValueError("factored profile needs at least one flow")
        mode = _weights_mode(self.flow_weights)
        _check_weights(self.flow_weights, mode, "flow")
        for cond in self.conditionals:
            if not cond:
                raise ValueError("empty strategy conditional")
            _check_weights([w for _, w in cond], _weights_mode([w for _, w in cond]),
                           "conditional")

    @property
    def mode(self) -> str:
        return _weights_mode(self.flow_weights)

    def support_strategies(self) -> tuple[RestrictedStrategy, ...]:
        seen: dict[tuple, RestrictedStrategy] = {}
        for cond in self.conditionals:
            for s, _ in cond:
                seen.setdefault(s.actions, s)
        return tuple(sorted(seen.values(), key=lambda s: s.sort_key()))

    def expand(self, cap: int = DEFAULT_ATOM_CAP) -> ExplicitProfile:
        """Integrate the flow out: atoms over strategy tuples with product weights."""
        n_atoms = sum(len(c) ** self.n_players for c in self.conditionals)
        if n_atoms > cap:
            raise CapacityError(f"expansion needs {n_atoms} atoms, cap {cap}")
        atoms = []
        for wf, cond in zip(self.flow_weights, self.conditionals):
            for combo in itertools.product(cond, repeat=self.n_players):
                w = wf
                for _, ws in combo:
                    w = w * ws
                atoms.append((tuple(s for s, _ in combo), w))
        return ExplicitProfile(self.n_players, tuple(atoms))


CorrelatedProfile = Union[ExplicitProfile, FactoredProfile]


def symmetrize(profile: ExplicitProfile, cap: int = DEFAULT_ATOM_CAP) -> ExplicitProfile:
    """Average the profile over all coordinate permutations."""
    n_fact = math.factorial(profile.n_players)
    if len(profile.atoms) * n_fact > cap:
        raise CapacityError(
            f"symmetrization may need {len(profile.atoms) * n_fact} atoms, cap {cap}"
        )
    atoms = []
    for vec, w in profile.atoms:
        perms = sorted(set(itertools.permutations(range(len(vec)))),
                       key=lambda p: tuple(vec[i].sort_key() for i in p))
        distinct: dict[tuple, tuple] = {}
        for p in perms:
            arranged = tuple(vec[i] for i in p)
            distinct.setdefault(tuple(s.actions for s in arranged), arranged)
        share = (
            w / len(distinct) if isinstance(w, float) else w * Fraction(1, len(distinct))
        )
        for arranged in distinct.values():
            atoms.append((arranged, share))
    return ExplicitProfile(profile.n_players, tuple(atoms))


def is_symmetric(profile: CorrelatedProfile) -> bool:
    """Permutation invariance of the joint strategy law."""
    if isinstance(profile, FactoredProfile):
        return True  # i.i.d. given the flow
    table = {tuple(s.actions for s in vec): w for vec, w in profile.atoms}
    mode = profile.mode
    for vec, w in profile.atoms:
        for p in itertools.permutations(tuple(s.actions for s in vec)):
            other = table.get(tuple(p))
            if other is None:
                return False
            if mode == EXACT:
                if other != w:
                    return False
            elif abs(other - w) > FLOAT_TOL:
                return False
    return True


@dataclass(frozen=True)
class SimulationConfig:
    """Reproducible Monte Carlo run parameters."""

    master_seed: int
    replications: int
    threads: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("need at least one replication")
        object.__setattr__(self, "master_seed", self.master_seed & 0xFFFFFFFFFFFFFFFF)


# ---------------------------------------------------------------------------
# exact joint propagation


@dataclass(frozen=True)
class JointStateDistribution:
    """Dense distribution over X^N, player 0 in the most significant digit."""

    space: FiniteSpace
    n_players: int
    weights: tuple[Scalar, ...]

    def __post_init__(self):
        d = len(self.space)
        if len(self.weights) != d ** self.n_players:
            raise ValueError(
                f"want {d ** self.n_players} weights, got {len(self.weights)}"
            )
        if any(w < 0 for w in self.weights):
            raise ValueError("negative weight")
        total = sum(self.weights)
        if self.mode == EXACT:
            if total != 1:
                raise ValueError(f"weights sum to {total}, not 1")
        elif abs(total - 1.0) > FLOAT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}")

    @property
    def mode(self) -> str:
        return _weights_mode(self.weights)

    def decode(self, idx: int) -> tuple[int, ...]:
        d = len(self.space)
        out = []
        for _ in range(self.n_players):
            out.append(idx % d)
            idx //= d
        return tuple(reversed(out))

    def encode(self, states: Sequence[int]) -> int:
        d = len(self.space)
        idx = 0
        for x in states:
            idx = idx * d + x
        return idx

    def marginal(self, player: int) -> ProbabilityVector:
        d = len(self.space)
        mode = self.mode
        acc = [zero(mode)] * d
        for idx, w in enumerate(self.weights):
            if w:
                acc[self.decode(idx)[player]] += w
        return ProbabilityVector(self.space, tuple(acc), mode)

    @staticmethod
    def from_product(
        m0: ProbabilityVector, n_players: int, cap: int = DEFAULT_JOINT_CAP
    ) -> "JointStateDistribution":
        d = len(m0.space)
        if d ** n_players > cap:
            raise CapacityError(f"{d ** n_players} joint states exceed cap {cap}")
        weights = []
        for combo in itertools.product(m0.weights, repeat=n_players):
            w = combo[0]
            for v in combo[1:]:
                w = w * v
            weights.append(w)
        return JointStateDistribution(m0.space, n_players, tuple(weights))


def _exclusive_measure(
    space: FiniteSpace, states: Sequence[int], skip: int, mode: str
) -> ProbabilityVector:
    counts = [0] * len(space)
    for j, x in enumerate(states):
        if j != skip:
            counts[x] += 1
    n = len(states) - 1
    if mode == EXACT:
        return ProbabilityVector(space, tuple(Fraction(c, n) for c in counts), EXACT)
    return ProbabilityVector(space, tuple(c / n for c in counts), FLOAT)


@dataclass(frozen=True)
class JointPropagation:
    laws: tuple[JointStateDistribution, ...]  # times 0..T
    costs: tuple[Scalar, ...]  # total expected cost per player


def exact_joint_propagate(
    game: GameSpec,
    strategies: Sequence[RestrictedStrategy],
    deviation: Optional[tuple[int, RestrictedStrategy]],
    m0n: Union[ProbabilityVector, JointStateDistribution],
    *,
    joint_cap: int = DEFAULT_JOINT_CAP,
) -> JointPropagation:
    """Forward law on X^N and exact expected costs for every player.

    Each player transitions with the kernel evaluated at the empirical
    measure of the other N-1 players; transitions are conditionally
    independent given the joint state.  `deviation=(i, psi)` makes player i
    follow psi instead of its assigned strategy.
    """
    n = len(strategies)
    if n < 2:
        raise ValueError("need at least two players")
    played = list(strategies)
    if deviation is not None:
        i, psi = deviation
        if not 0 <= i < n:
            raise ValueError(f"player index {i} out of range")
        played[i] = psi
    if isinstance(m0n, ProbabilityVector):
        joint = JointStateDistribution.from_product(m0n, n, joint_cap)
    else:
        joint = m0n
        if joint.n_players != n:
            raise ValueError("initial joint law has wrong player count")
        if len(joint.weights) > joint_cap:
            raise CapacityError(
                f"{len(joint.weights)} joint states exceed cap {joint_cap}"
            )
    if joint.space.labels != game.states.labels:
        raise ValueError("initial law lives on different states")
    mode = game.arithmetic
    d = len(game.states)
    size = d ** n
    weights = list(joint.weights)
    costs = [zero(mode)] * n
    laws = [joint]
    for t in range(game.horizon):
        nxt = [zero(mode)] * size
        for idx, w in enumerate(weights):
            if not w:
                continue
            xs = joint.decode(idx)
            rows = []
            for l in range(n):
                m_l = _exclusive_measure(game.states, xs, l, mode)
                a_l = played[l].action(t, xs[l])
                rows.append(game.kernel(t, xs[l], m_l, a_l).weights)
                costs[l] += w * game.running_cost(t, xs[l], m_l, a_l)
            acc = [(0, w)]
            for row in rows:
                acc = [
                    (base * d + y, pw * wy)
                    for base, pw in acc
                    for y, wy in enumerate(row)
                    if wy
                ]
            for j, wj in acc:
                nxt[j] += wj
        weights = nxt
        laws.append(JointStateDistribution(game.states, n, tuple(weights)))
    for idx, w in enumerate(weights):
        if not w:
            continue
        xs = joint.decode(idx)
        for l in range(n):
            m_l = _exclusive_measure(game.states, xs, l, mode)
            costs[l] += w * game.terminal_cost(xs[l], m_l)
    return JointPropagation(tuple(laws), tuple(costs))


class _AnonymousCostTable:
    """Memoized player cost given own strategy and the multiset of others.

    All players share one game, so a player's expected cost depends on the
    other strategies only through their multiset.
    """

    def __init__(self, game, m0n, joint_cap=DEFAULT_JOINT_CAP):
        self.game = game
        self.m0n = m0n
        self.joint_cap = joint_cap
        self.memo: dict[tuple, Scalar] = {}

    def cost(self, own: RestrictedStrategy, others: Sequence[RestrictedStrategy]) -> Scalar:
        key = (own.actions, tuple(sorted(s.actions for s in others)))
        hit = self.memo.get(key)
        if hit is None:
            ordered = sorted(others, key=lambda s: s.sort_key())
            prop = exact_joint_propagate(
                self.game, (own, *ordered), None, self.m0n, joint_cap=self.joint_cap
            )
            hit = self.memo[key] = prop.costs[0]
        return hit


def profile_cost_exact(
    game: GameSpec,
    profile: CorrelatedProfile,
    player: int,
    u: DeviationMap,
    m0n: Union[ProbabilityVector, JointStateDistribution],
    *,
    joint_cap: int = DEFAULT_JOINT_CAP,
    atom_cap: int = DEFAULT_ATOM_CAP,
) -> Scalar:
    """Expected cost of `player` when it applies modification u to its draw."""
    explicit = (
        profile.expand(atom_cap) if isinstance(profile, FactoredProfile) else profile
    )
    if not 0 <= player < explicit.n_players:
        raise ValueError(f"player index {player} out of range")
    table = _AnonymousCostTable(game, m0n, joint_cap)
    total = zero(game.arithmetic)
    for vec, w in explicit.atoms:
        own = u.apply(vec[player])
        others = tuple(s for j, s in enumerate(vec) if j != player)
        total += w * table.cost(own, others)
    return total


# ---------------------------------------------------------------------------
# vectorized Monte Carlo engine


class _SimTables:
    """Float64 views of the game plus a row-index table for strategies."""

    def __init__(self, game: GameSpec, strategies: Sequence[RestrictedStrategy]):
        gf = game.to_float()
        self.horizon = gf.horizon
        self.d = len(gf.states)
        self.n_actions = len(gf.actions)
        T, d, A = self.horizon, self.d, self.n_actions
        self.kb = np.zeros((T, d, A, d))
        self.kc = np.zeros((T, d, A, d, d))
        for t in range(T):
            for x in range(d):
                for a in range(A):
                    row = gf.transition.row(t, x, a)
                    self.kb[t, x, a] = row.base
                    self.kc[t, x, a] = row.coef
        self.rb = np.array(gf.cost.running_base, dtype=np.float64)
        self.rc = np.array(gf.cost.running_coef, dtype=np.float64)
        self.tb = np.array(gf.cost.terminal_base, dtype=np.float64)
        self.tc = np.array(gf.cost.terminal_coef, dtype=np.float64)
        self.strategies = tuple(strategies)
        self.act = np.zeros((len(strategies), T, d), dtype=np.int64)
        for s_idx, s in enumerate(strategies):
            for t in range(T):
                for x in range(d):
                    self.act[s_idx, t, x] = s.action(t, x)
        self.strategy_index = {s.actions: i for i, s in enumerate(strategies)}


def _pick(weights: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Vectorized categorical_pick over the last axis (identical semantics)."""
    w = np.broadcast_to(weights, z.shape + (weights.shape[-1],))
    positive = w > 0
    cum = np.cumsum(np.where(positive, w, 0.0), axis=-1)
    hit = (cum >= z[..., None]) & positive
    first = hit.argmax(axis=-1)
    fallback = w.shape[-1] - 1 - positive[..., ::-1].argmax(axis=-1)
    return np.where(hit.any(axis=-1), first, fallback).astype(np.int64)


def _others_measure(states: np.ndarray, d: int) -> np.ndarray:
    """Exclusive empirical measures, shape (reps, N, d), denominators N-1."""
    onehot = states[..., None] == np.arange(d)
    counts = onehot.sum(axis=1)
    return (counts[:, None, :] - onehot) / (states.shape[1] - 1)


def _affine_eval(base: np.ndarray, coef: np.ndarray, m: np.ndarray) -> np.ndarray:
    # accumulate coefficient terms in state order, then add the base, matching
    # the scalar evaluation order bit for bit
    acc = np.zeros(base.shape, dtype=np.float64)
    for y in range(m.shape[-1]):
        acc += coef[..., y] * m[..., y]
    return base + acc


def _simulate_states(
    tables: _SimTables, strat_rows: np.ndarray, x0: np.ndarray, noise: np.ndarray
) -> np.ndarray:
    """Trajectories (reps, T+1, N) from per-player strategy rows and noises."""
    reps, n = x0.shape
    traj = np.empty((reps, tables.horizon + 1, n), dtype=np.int64)
    traj[:, 0, :] = x0
    states = x0
    for t in range(tables.horizon):
        m = _others_measure(states, tables.d)
        acts = tables.act[strat_rows, t, states]
        base = tables.kb[t, states, acts]
        coef = tables.kc[t, states, acts]
        w = _affine_eval(base, coef, m[:, :, None, :])
        states = _pick(w, noise[:, t, :])
        traj[:, t + 1, :] = states
    return traj


def _player_cost(
    tables: _SimTables, traj: np.ndarray, strat_rows_i: np.ndarray, player: int
) -> np.ndarray:
    """Realized total cost of one player along each trajectory."""
    reps = traj.shape[0]
    cost = np.zeros(reps, dtype=np.float64)
    for t in range(tables.horizon):
        states = traj[:, t, :]
        xi = states[:, player]
        a = tables.act[strat_rows_i, t, xi]
        m = _others_measure(states, tables.d)[:, player, :]
        cost += _affine_eval(tables.rb[t, xi, a], tables.rc[t, xi, a], m)
    states = traj[:, tables.horizon, :]
    xi = states[:, player]
    m = _others_measure(states, tables.d)[:, player, :]
    cost += _affine_eval(tables.tb[xi], tables.tc[xi], m)
    return cost


class _ProfileSampler:
    """Draws strategy assignments from a profile using slots 0..N."""

    def __init__(self, profile: CorrelatedProfile, tables: _SimTables):
        self.n = profile.n_players
        if isinstance(profile, ExplicitProfile):
            self.kind = "explicit"
            self.atom_cum = np.cumsum([float(w) for _, w in profile.atoms])
            self.atom_rows = np.array(
                [
                    [tables.strategy_index[s.actions] for s in vec]
                    for vec, _ in profile.atoms
                ],
                dtype=np.int64,
            )
        else:
            self.kind = "factored"
            self.flow_cum = np.cumsum([float(w) for w in profile.flow_weights])
            width = max(len(c) for c in profile.conditionals)
            self.cond_cum = np.full((len(profile.flows), width), np.inf)
            self.cond_rows = np.zeros((len(profile.flows), width), dtype=np.int64)
            self.cond_size = np.array(
                [len(c) for c in profile.conditionals], dtype=np.int64
            )
            for k, cond in enumerate(profile.conditionals):
                cum = 0.0
                for s_local, (s, w) in enumerate(cond):
                    cum += float(w)
                    self.cond_cum[k, s_local] = cum
                    self.cond_rows[k, s_local] = tables.strategy_index[s.actions]

    def draw(self, uniforms: np.ndarray) -> np.ndarray:
        """Strategy rows (reps, N); uniforms holds slots 0..N per replication."""
        if self.kind == "explicit":
            atom = np.searchsorted(self.atom_cum, uniforms[:, 0], side="left")
            atom = np.minimum(atom, len(self.atom_cum) - 1)
            return self.atom_rows[atom]
        flow = np.searchsorted(self.flow_cum, uniforms[:, 0], side="left")
        flow = np.minimum(flow, len(self.flow_cum) - 1)
        rows = np.empty((uniforms.shape[0], self.n), dtype=np.int64)
        for j in range(self.n):
            local = (self.cond_cum[flow] < uniforms[:, 1 + j][:, None]).sum(axis=1)
            local = np.minimum(local, self.cond_size[flow] - 1)  # float slack
            rows[:, j] = self.cond_rows[flow, local]
        return rows


def _slot_count(n: int, horizon: int) -> int:
    return 2 * n + 1 + horizon * n


def _initial_states(
    m0: ProbabilityVector, uniforms: np.ndarray
) -> np.ndarray:
    w = np.array([float(v) for v in m0.weights])
    return _pick(w, uniforms)


def _require_product_initial(m0n) -> ProbabilityVector:
    if not isinstance(m0n, ProbabilityVector):
        raise ValueError("Monte Carlo paths need a product initial law")
    return m0n


def mc_profile_cost(
    game: GameSpec,
    profile: CorrelatedProfile,
    player: int,
    u: DeviationMap,
    m0n: ProbabilityVector,
    cfg: SimulationConfig,
) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of one player's expected cost."""
    m0 = _require_product_initial(m0n).to_float()
    n = profile.n_players
    if not 0 <= player < n:
        raise ValueError(f"player index {player} out of range")
    support = list(profile.support_strategies())
    support_keys = {s.actions for s in support}
    for s in support:
        img = u.apply(s)
        if img.actions not in support_keys:
            support_keys.add(img.actions)
            support.append(img)
    tables = _SimTables(game, support)
    remap = np.array(
        [tables.strategy_index[u.apply(s).actions] for s in tables.strategies],
        dtype=np.int64,
    )
    sampler = _ProfileSampler(profile, tables)
    slots = np.arange(_slot_count(n, game.horizon), dtype=np.uint64)
    reps = cfg.replications
    total = 0.0
    total_sq = 0.0
    for start in range(0, reps, _CHUNK):
        count = min(_CHUNK, reps - start)
        uni = rng.uniform_block(cfg.master_seed, start, count, slots)
        strat_rows = sampler.draw(uni[:, : n + 1])
        played = strat_rows.copy()
        played[:, player] = remap[strat_rows[:, player]]
        x0 = _initial_states(m0, uni[:, n + 1 : 2 * n + 1])
        noise = uni[:, 2 * n + 1 :].reshape(count, game.horizon, n)
        traj = _simulate_states(tables, played, x0, noise)
        cost = _player_cost(tables, traj, played[:, player], player)
        total += float(np.sum(cost))
        total_sq += float(np.sum(cost * cost))
    mean = total / reps
    if reps > 1:
        var = max(total_sq - reps * mean * mean, 0.0) / (reps - 1)
        stderr = math.sqrt(var / reps)
    else:
        stderr = 0.0
    return mean, stderr


# ---------------------------------------------------------------------------
# deviation gains


@dataclass(frozen=True)
class DeviationRow:
    """Per-recommendation slice of the gain: all quantities unnormalized."""

    recommendation: RestrictedStrategy
    rec_index: int
    cost: Scalar  # contribution of this recommendation under identity
    best: RestrictedStrategy
    best_index: int
    best_value: Scalar
    gap: Scalar


@dataclass(frozen=True)
class DeviationGainResult:
    player: int
    epsilon: Scalar
    rows: tuple[DeviationRow, ...]
    method: str  # "exact" | "mc"
    stderr: Optional[float] = None
    replications: Optional[int] = None


def deviation_gain(
    game: GameSpec,
    profile: CorrelatedProfile,
    player: int,
    m0n: Union[ProbabilityVector, JointStateDistribution],
    method: str = "exact",
    cfg: Optional[SimulationConfig] = None,
    *,
    joint_cap: int = DEFAULT_JOINT_CAP,
    atom_cap: int = DEFAULT_ATOM_CAP,
    strategy_cap: int = DEFAULT_STRATEGY_CAP,
) -> DeviationGainResult:
    """Largest total gain any strategy modification offers to one player.

    The gain decomposes over recommendations: epsilon equals the sum over
    recommendations phi of (cost contribution under phi) minus (best
    contribution any deviation psi achieves on the event {recommended phi}).
    """
    if method == "exact":
        return _deviation_gain_exact(
            game, profile, player, m0n, joint_cap, atom_cap, strategy_cap
        )
    if method == "mc":
        if cfg is None:
            raise ValueError("Monte Carlo method needs a SimulationConfig")
        return _deviation_gain_mc(game, profile, player, m0n, cfg, strategy_cap)
    raise ValueError(f"unknown method {method!r}")


def _deviation_gain_exact(
    game, profile, player, m0n, joint_cap, atom_cap, strategy_cap
) -> DeviationGainResult:
    explicit = (
        profile.expand(atom_cap) if isinstance(profile, FactoredProfile) else profile
    )
    if not 0 <= player < explicit.n_players:
        raise ValueError(f"player index {player} out of range")
    candidates = enumerate_strategies(game, strategy_cap)
    cand_index = {s.actions: i for i, s in enumerate(candidates)}
    table = _AnonymousCostTable(game, m0n, joint_cap)
    by_rec: dict[tuple, list] = {}
    for vec, w in explicit.atoms:
        by_rec.setdefault(vec[player].actions, []).append((vec, w))
    rows = []
    epsilon = zero(game.arithmetic)
    for rec_key in sorted(by_rec):
        atoms = by_rec[rec_key]
        rec = next(vec[player] for vec, _ in atoms)
        values = []
        for psi in candidates:
            v = zero(game.arithmetic)
            for vec, w in atoms:
                others = tuple(s for j, s in enumerate(vec) if j != player)
                v += w * table.cost(psi, others)
            values.append(v)
        id_value = values[cand_index[rec_key]]
        best_i = 0
        for i in range(1, len(values)):
            if values[i] < values[best_i]:
                best_i = i
        gap = id_value - values[best_i]
        epsilon += gap
        rows.append(
            DeviationRow(
                rec, cand_index[rec_key], id_value,
                candidates[best_i], best_i, values[best_i], gap,
            )
        )
    return DeviationGainResult(player, epsilon, tuple(rows), "exact")


def _deviation_gain_mc(
    game, profile, player, m0n, cfg: SimulationConfig, strategy_cap
) -> DeviationGainResult:
    m0 = _require_product_initial(m0n).to_float()
    n = profile.n_players
    if not 0 <= player < n:
        raise ValueError(f"player index {player} out of range")
    candidates = enumerate_strategies(game, strategy_cap)
    tables = _SimTables(game, candidates)
    sampler = _ProfileSampler(profile, tables)
    reps = cfg.replications
    n_cand = len(candidates)
    if reps * n_cand * 8 > _COST_MATRIX_BYTES_CAP:
        raise CapacityError(
            f"{reps} replications x {n_cand} candidates exceed the cost-matrix cap"
        )
    costs = np.empty((reps, n_cand), dtype=np.float64)
    rec_rows = np.empty(reps, dtype=np.int64)
    slots = np.arange(_slot_count(n, game.horizon), dtype=np.uint64)
    for start in range(0, reps, _CHUNK):
        count = min(_CHUNK, reps - start)
        uni = rng.uniform_block(cfg.master_seed, start, count, slots)
        strat_rows = sampler.draw(uni[:, : n + 1])
        rec_rows[start : start + count] = strat_rows[:, player]
        x0 = _initial_states(m0, uni[:, n + 1 : 2 * n + 1])
        noise = uni[:, 2 * n + 1 :].reshape(count, game.horizon, n)
        played = strat_rows.copy()
        for c in range(n_cand):
            played[:, player] = c
            traj = _simulate_states(tables, played, x0, noise)
            costs[start : start + count, c] = _player_cost(
                tables, traj, played[:, player], player
            )
    rows = []
    gains = np.zeros(reps, dtype=np.float64)
    epsilon = 0.0
    for rec_i in sorted(set(rec_rows.tolist())):
        mask = rec_rows == rec_i
        g_slice = costs[mask]
        sums = g_slice.sum(axis=0) / reps  # unnormalized contributions
        best_i = int(np.argmin(sums))
        gap = float(sums[rec_i] - sums[best_i])
        epsilon += gap
        gains[mask] = g_slice[:, rec_i] - g_slice[:, best_i]
        rows.append(
            DeviationRow(
                candidates[rec_i], rec_i, float(sums[rec_i]),
                candidates[best_i], best_i, float(sums[best_i]), gap,
            )
        )
    if reps > 1:
        mean = float(gains.mean())
        var = float(np.sum((gains - mean) ** 2)) / (reps - 1)
        stderr = math.sqrt(var / reps)
    else:
        stderr = 0.0
    return DeviationGainResult(
        player, epsilon, tuple(rows), "mc", stderr=stderr, replications=reps
    )


# ---------------------------------------------------------------------------
# correlated-equilibrium LP


def _strategy_space_size(game: GameSpec) -> int:
    return len(game.actions) ** (game.horizon * len(game.states))


def ce_constraints(
    game: GameSpec,
    n_players: int,
    m0n: Union[ProbabilityVector, JointStateDistribution],
    *,
    lp_cap: int = DEFAULT_LP_CAP,
    joint_cap: int = DEFAULT_JOINT_CAP,
    strategy_cap: int = DEFAULT_STRATEGY_CAP,
) -> LinearProgram:
    """Full correlated-equilibrium feasibility system over gamma in P(R^N).

    One variable per ordered strategy assignment; one row per (player,
    recommendation, deviation) triple plus the unit-mass equality.  The
    gamma >= 0 part is implicit: LP variables are nonnegative.
    """
    if game.arithmetic != EXACT:
        raise ValueError("the equilibrium LP needs exact arithmetic")
    strategies = enumerate_strategies(game, strategy_cap)
    n_r = len(strategies)
    n_vars = n_r ** n_players
    if n_vars > lp_cap:
        raise CapacityError(f"{n_vars} LP variables exceed cap {lp_cap}")
    assignments = list(itertools.product(range(n_r), repeat=n_players))
    names = tuple("g_" + "_".join(map(str, vec)) for vec in assignments)
    table = _AnonymousCostTable(game, m0n, joint_cap)

    def d_cost(own_i: int, others: tuple[int, ...]) -> Fraction:
        return table.cost(strategies[own_i], tuple(strategies[j] for j in others))

    rows = []
    zero_f = Fraction(0)
    for i in range(n_players):
        for rec in range(n_r):
            for psi in range(n_r):
                if psi == rec:
                    continue
                coeffs = []
                for vec in assignments:
                    if vec[i] != rec:
                        coeffs.append(zero_f)
                        continue
                    others = vec[:i] + vec[i + 1 :]
                    coeffs.append(d_cost(psi, others) - d_cost(rec, others))
                rows.append(LinRow(tuple(coeffs), GE, zero_f))
    rows.append(LinRow(tuple(Fraction(1) for _ in names), EQ, Fraction(1)))
    return LinearProgram(names, tuple(rows))


def solve_symmetric_ce(
    game: GameSpec,
    n_players: int,
    m0n: Union[ProbabilityVector, JointStateDistribution],
    *,
    minimize_total_cost: bool = False,
    lp_cap: int = DEFAULT_LP_CAP,
    joint_cap: int = DEFAULT_JOINT_CAP,
    strategy_cap: int = DEFAULT_STRATEGY_CAP,
) -> ExplicitProfile:
    """A symmetric correlated equilibrium, exact.

    Works on the multiset (orbit) reduction of the symmetric feasibility
    system: variables are strategy multisets; the player-1 constraints carry
    all the content because the system is permutation-covariant.  The result
    expands to explicit atoms with weight w(multiset)/#arrangements.
    """
    if game.arithmetic != EXACT:
        raise ValueError("the equilibrium LP needs exact arithmetic")
    strategies = enumerate_strategies(game, strategy_cap)
    n_r = len(strategies)
    multisets = list(
        itertools.combinations_with_replacement(range(n_r), n_players)
    )
    if len(multisets) > lp_cap:
        raise CapacityError(f"{len(multisets)} LP variables exceed cap {lp_cap}")
    index_of = {m: k for k, m in enumerate(multisets)}
    table = _AnonymousCostTable(game, m0n, joint_cap)

    def d_cost(own_i: int, others: tuple[int, ...]) -> Fraction:
        return table.cost(strategies[own_i], tuple(strategies[j] for j in others))

    zero_f = Fraction(0)
    rows = []
    for rec in range(n_r):
        # every multiset containing rec, keyed by the others-multiset
        contributions = []
        for m_key, k in index_of.items():
            cnt = m_key.count(rec)
            if cnt == 0:
                continue
            others = list(m_key)
            others.remove(rec)
            contributions.append((k, Fraction(cnt, n_players), tuple(others)))
        for psi in range(n_r):
            if psi == rec:
                continue
            coeffs = [zero_f] * len(multisets)
            for k, share, others in contributions:
                coeffs[k] = share * (d_cost(psi, others) - d_cost(rec, others))
            rows.append(LinRow(tuple(coeffs), GE, zero_f))
    rows.append(LinRow(tuple(Fraction(1) for _ in multisets), EQ, Fraction(1)))
    names = tuple("w_" + "_".join(map(str, m)) for m in multisets)
    objective = None
    if minimize_total_cost:
        obj = []
        for m_key in multisets:
            total = zero_f
            for rec in sorted(set(m_key)):
                others = list(m_key)
                others.remove(rec)
                total += m_key.count(rec) * d_cost(rec, tuple(others))
            obj.append(total)
        objective = tuple(obj)
    lp = LinearProgram(names, tuple(rows), objective)
    try:
        solution = solve_lp(lp)
    except InfeasibleError as exc:  # pragma: no cover - contradicts existence
        raise RuntimeError(
            "internal error: symmetric CE system is infeasible"
        ) from exc
    atoms = []
    for m_key, name in zip(multisets, names):
        w = solution[name]
        if w == 0:
            continue
        arrangements = sorted(set(itertools.permutations(m_key)))
        share = w / len(arrangements)
        for arr in arrangements:
            atoms.append((tuple(strategies[j] for j in arr), share))
    return ExplicitProfile(n_players, tuple(atoms))


# ---------------------------------------------------------------------------
# exchangeability


@dataclass(frozen=True)
class ExchangeabilityRow:
    empirical: tuple[Scalar, ...]  # inclusive empirical measure of all N states
    mass: Scalar
    worst_gap: Scalar


@dataclass(frozen=True)
class ExchangeabilityReport:
    ok: bool
    time: int
    rows: tuple[ExchangeabilityRow, ...]


def exchangeability_check(
    game: GameSpec,
    profile: CorrelatedProfile,
    m0n: Union[ProbabilityVector, JointStateDistribution],
    t: int,
    *,
    joint_cap: int = DEFAULT_JOINT_CAP,
    atom_cap: int = DEFAULT_ATOM_CAP,
) -> ExchangeabilityReport:
    """Conditional law of player 0 given the empirical measure equals it.

    Requires a symmetric profile and a product (or exchangeable) initial law;
    checks every empirical measure with positive mass at time t.
    """
    if not is_symmetric(profile):
        raise ValueError("profile is not symmetric")
    explicit = (
        profile.expand(atom_cap) if isinstance(profile, FactoredProfile) else profile
    )
    n = explicit.n_players
    if not 0 <= t <= game.horizon:
        raise ValueError(f"time {t} outside 0..{game.horizon}")
    mode = game.arithmetic
    d = len(game.states)
    mixed = [zero(mode)] * (d ** n)
    for vec, w in explicit.atoms:
        law = exact_joint_propagate(game, vec, None, m0n, joint_cap=joint_cap).laws[t]
        for idx, p in enumerate(law.weights):
            if p:
                mixed[idx] += w * p
    decoder = JointStateDistribution(
        game.states, n, tuple(mixed)
    )
    groups: dict[tuple[int, ...], list] = {}
    for idx, p in enumerate(mixed):
        if not p:
            continue
        xs = decoder.decode(idx)
        counts = [0] * d
        for x in xs:
            counts[x] += 1
        groups.setdefault(tuple(counts), []).append((xs[0], p))
    rows = []
    ok = True
    tol = zero(mode) if mode == EXACT else FLOAT_TOL
    for counts in sorted(groups):
        entries = groups[counts]
        mass = sum(p for _, p in entries)
        cond = [zero(mode)] * d
        for x0, p in entries:
            cond[x0] += p
        worst = zero(mode)
        for s in range(d):
            if mode == EXACT:
                gap = abs(cond[s] / mass - Fraction(counts[s], n))
            else:
                gap = abs(cond[s] / mass - counts[s] / n)
            if gap > worst:
                worst = gap
        if worst > tol:
            ok = False
        if mode == EXACT:
            empirical = tuple(Fraction(c, n) for c in counts)
        else:
            empirical = tuple(c / n for c in counts)
        rows.append(ExchangeabilityRow(empirical, mass, worst))
    return ExchangeabilityReport(ok, t, tuple(rows))

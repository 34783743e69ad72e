"""Bridges between the mean-field solution and finite N-player games.

Lifting turns a correlated flow rho into an N-player profile (draw a flow from
the marginal, then hand out strategies i.i.d. from the conditional).  The
epsilon curve quantifies how far the lifted profile is from an exact
equilibrium as N grows; the convergence report runs the reverse experiment,
measuring how fast the empirical law of (recommendation, empirical flow)
regenerates rho.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import rng
from .mfg import CorrelatedFlow, factor_flow, verify_solution
from .model import (
    DEFAULT_ATOM_CAP,
    DEFAULT_JOINT_CAP,
    DEFAULT_STRATEGY_CAP,
    EXACT,
    FlowTrajectory,
    GameSpec,
    ProbabilityVector,
    Scalar,
)
from .nplayer import (
    FactoredProfile,
    SimulationConfig,
    _ProfileSampler,
    _SimTables,
    _initial_states,
    _simulate_states,
    _slot_count,
    deviation_gain,
)
from .transport import flow_space_distance

InitialFamily = Union[ProbabilityVector, Callable[[int], ProbabilityVector]]


def _initial_for(m0: InitialFamily, n: int) -> ProbabilityVector:
    return m0(n) if callable(m0) else m0


def lift(rho: CorrelatedFlow, n_players: int) -> FactoredProfile:
    """The N-player profile that draws one flow, then i.i.d. recommendations."""
    if n_players < 2:
        raise ValueError("need at least two players")
    fact = factor_flow(rho)
    return FactoredProfile(
        n_players, fact.flows, fact.flow_weights, fact.conditionals
    )


@dataclass(frozen=True)
class EpsilonRow:
    n_players: int
    epsilon: Scalar
    stderr: Optional[float]  # None means the value is exact
    replications: Optional[int]
    seconds: float
    method: str  # "exact" | "mc"

    @property
    def exact(self) -> bool:
        return self.stderr is None


@dataclass(frozen=True)
class EpsilonCurve:
    rows: tuple[EpsilonRow, ...]
    all_players_checked: bool  # False: player 1 stood in for all, by symmetry

    def __post_init__(self):
        ns = [r.n_players for r in self.rows]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("rows must be strictly increasing in N")
        for r in self.rows:
            slack = 0 if r.stderr is None else 2 * r.stderr
            if r.epsilon < -slack:
                raise ValueError(f"negative epsilon {r.epsilon} at N={r.n_players}")


# exact evaluation touches every (atom, joint state, joint successor) triple;
# past this many triples the Monte Carlo route is faster at default replications
_EXACT_WORK_CAP = 32768


def _sub_seed(master: int, n: int) -> int:
    # one stream family per N so rows are independent experiments
    return rng.stream_value(master, n, 0)


def epsilon_curve(
    game: GameSpec,
    rho: CorrelatedFlow,
    m0: InitialFamily,
    ns: Sequence[int],
    cfg: SimulationConfig,
    method: str = "auto",
    *,
    joint_cap: int = DEFAULT_JOINT_CAP,
    atom_cap: int = DEFAULT_ATOM_CAP,
    strategy_cap: int = DEFAULT_STRATEGY_CAP,
) -> EpsilonCurve:
    """Deviation gain of the lifted profile at each population size.

    Exact joint propagation when the joint-state space, the factored
    expansion, and the propagation work (atoms times squared joint size,
    the operation count of one exact evaluation) all fit their caps;
    Monte Carlo with common random numbers otherwise.  Lifted profiles are
    exchangeable, so player 1's gain equals every player's gain.
    """
    if method not in ("auto", "exact", "mc"):
        raise ValueError(f"unknown method {method!r}")
    d = len(game.states)
    rows = []
    for n in sorted(set(int(n) for n in ns)):
        if n < 2:
            raise ValueError("need at least two players")
        profile = lift(rho, n)
        m0n = _initial_for(m0, n)
        if method == "auto":
            joint = d ** n
            atoms = sum(len(c) ** n for c in profile.conditionals)
            fits_work = atoms * joint * joint <= _EXACT_WORK_CAP
            use = "exact" if (joint <= joint_cap and atoms <= atom_cap and fits_work) else "mc"
        else:
            use = method
        started = time.perf_counter()
        if use == "exact":
            gain = deviation_gain(
                game, profile, 0, m0n, "exact",
                joint_cap=joint_cap, atom_cap=atom_cap, strategy_cap=strategy_cap,
            )
            row = EpsilonRow(
                n, gain.epsilon, None, None, time.perf_counter() - started, "exact"
            )
        else:
            sub = SimulationConfig(
                _sub_seed(cfg.master_seed, n), cfg.replications, cfg.threads
            )
            gain = deviation_gain(
                game, profile, 0, m0n, "mc", sub, strategy_cap=strategy_cap
            )
            row = EpsilonRow(
                n, gain.epsilon, gain.stderr, gain.replications,
                time.perf_counter() - started, "mc",
            )
        rows.append(row)
    # lifted profiles are exchangeable, so the player-1 gain covers everyone
    return EpsilonCurve(tuple(rows), all_players_checked=False)


@dataclass(frozen=True)
class EmpiricalCorrelatedFlow:
    """Sampled law of (player 1's recommendation, exclusive empirical flow)."""

    flow: CorrelatedFlow  # exact atoms; empirical weights multiplicity/samples
    samples: int
    n_players: int

    def __post_init__(self):
        if self.flow.mode != EXACT:
            raise ValueError("empirical atoms must be exact rationals")
        denom = self.n_players - 1
        for _, traj, _ in self.flow.atoms:
            for pv in traj.measures:
                for w in pv.weights:
                    if (Fraction(w) * denom).denominator != 1:
                        raise ValueError("flow entry denominator does not divide N-1")


def empirical_rho_n(
    game: GameSpec,
    profile: FactoredProfile,
    m0n: ProbabilityVector,
    cfg: SimulationConfig,
) -> EmpiricalCorrelatedFlow:
    """Simulate the N-player system under identity and bin the observations.

    Each replication contributes one atom (recommendation of player 1, the
    empirical flow of the other N-1 players at times 0..T); identical
    observations merge with summed weights, all exact.
    """
    n = profile.n_players
    tables = _SimTables(game, profile.support_strategies())
    sampler = _ProfileSampler(profile, tables)
    m0f = m0n.to_float()
    slots = np.arange(_slot_count(n, game.horizon), dtype=np.uint64)
    buckets: dict[tuple, int] = {}
    reps = cfg.replications
    chunk = 4096
    for start in range(0, reps, chunk):
        count = min(chunk, reps - start)
        uni = rng.uniform_block(cfg.master_seed, start, count, slots)
        strat_rows = sampler.draw(uni[:, : n + 1])
        x0 = _initial_states(m0f, uni[:, n + 1 : 2 * n + 1])
        noise = uni[:, 2 * n + 1 :].reshape(count, game.horizon, n)
        traj = _simulate_states(tables, strat_rows, x0, noise)
        others = traj[:, :, 1:]  # exclusive of player 1
        counts = (others[..., None] == np.arange(len(game.states))).sum(axis=2)
        for r in range(count):
            key = (int(strat_rows[r, 0]), tuple(map(tuple, counts[r])))
            buckets[key] = buckets.get(key, 0) + 1
    space = game.states
    denom = n - 1
    atoms = []
    for (rec_row, count_rows), mult in buckets.items():
        flow = FlowTrajectory(
            tuple(
                ProbabilityVector(
                    space, tuple(Fraction(c, denom) for c in row), EXACT
                )
                for row in count_rows
            )
        )
        atoms.append((tables.strategies[rec_row], flow, Fraction(mult, reps)))
    return EmpiricalCorrelatedFlow(CorrelatedFlow(tuple(atoms)), reps, n)


@dataclass(frozen=True)
class ConvergenceRow:
    n_players: int
    w1: Scalar
    replications: int
    seconds: float


def convergence_report(
    game: GameSpec,
    rho: CorrelatedFlow,
    m0: InitialFamily,
    ns: Sequence[int],
    cfg: SimulationConfig,
) -> tuple[ConvergenceRow, ...]:
    """W1 distance between the sampled N-player law and rho, per N.

    Refuses flows that are not correlated MFG solutions: the experiment is
    only meaningful for a solution's lift.
    """
    verdict = verify_solution(game, rho, _initial_for(m0, 2))
    if not verdict.is_solution:
        raise ValueError("rho is not a correlated MFG solution")
    rows = []
    for n in sorted(set(int(n) for n in ns)):
        started = time.perf_counter()
        sub = SimulationConfig(
            _sub_seed(cfg.master_seed, n), cfg.replications, cfg.threads
        )
        emp = empirical_rho_n(game, lift(rho, n), _initial_for(m0, n), sub)
        w1 = flow_space_distance(emp.flow, rho)
        rows.append(
            ConvergenceRow(n, w1, cfg.replications, time.perf_counter() - started)
        )
    return tuple(rows)

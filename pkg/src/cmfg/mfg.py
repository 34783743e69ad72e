"""Mean-field limit model: state laws, costs, best responses and solution checks.

A candidate solution is a correlated flow: a joint distribution over
(restricted strategy, trajectory of population measures).  Verification has
two halves: optimality (no strategy modification improves the representative
player's cost) and consistency (each flow in the support regenerates itself
when the conditional strategy mix is propagated forward).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .model import (
    DEFAULT_STRATEGY_CAP,
    EXACT,
    FLOAT,
    FLOAT_TOL,
    FLOAT_SUM_TOL,
    FiniteSpace,
    FlowTrajectory,
    GameSpec,
    ProbabilityVector,
    RestrictedStrategy,
    Scalar,
    dist,
    enumerate_strategies,
    zero,
)


def _flow_key(flow: FlowTrajectory) -> tuple:
    return tuple(m.weights for m in flow.measures)


def _flows_close(a: FlowTrajectory, b: FlowTrajectory, mode: str) -> bool:
    if mode == EXACT:
        return _flow_key(a) == _flow_key(b)
    return all(
        abs(x - y) <= FLOAT_TOL
        for ma, mb in zip(a.measures, b.measures)
        for x, y in zip(ma.weights, mb.weights)
    )


@dataclass(frozen=True)
class CorrelatedFlow:
    """Distribution over (strategy, flow) pairs; atoms are kept in canonical order."""

    atoms: tuple[tuple[RestrictedStrategy, FlowTrajectory, Scalar], ...]

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("correlated flow needs at least one atom")
        mode = self.atoms[0][1].mode
        merged: list[list] = []
        for phi, flow, w in self.atoms:
            if flow.mode != mode:
                raise ValueError("atoms mix arithmetic modes")
            if w <= 0:
                raise ValueError(f"atom weight {w} is not positive")
            hit = None
            for entry in merged:
                if entry[0] == phi and _flows_close(entry[1], flow, mode):
                    hit = entry
                    break
            if hit is not None:
                if mode == EXACT:
                    raise ValueError("duplicate (strategy, flow) atom")
                hit[2] += w  # float mode: near-identical flows merge
            else:
                merged.append([phi, flow, w])
        merged.sort(key=lambda e: (e[0].sort_key(), _flow_key(e[1])))
        total = sum(e[2] for e in merged)
        if mode == EXACT:
            if total != 1:
                raise ValueError(f"atom weights sum to {total}, not 1")
        elif abs(total - 1.0) > FLOAT_SUM_TOL:
            raise ValueError(f"atom weights sum to {total!r}")
        object.__setattr__(self, "atoms", tuple((p, f, w) for p, f, w in merged))

    @property
    def mode(self) -> str:
        return self.atoms[0][1].mode

    def support_strategies(self) -> tuple[RestrictedStrategy, ...]:
        seen = []
        for phi, _, _ in self.atoms:
            if phi not in seen:
                seen.append(phi)
        return tuple(sorted(seen, key=lambda s: s.sort_key()))

    def to_float(self) -> "CorrelatedFlow":
        if self.mode == FLOAT:
            return self
        return CorrelatedFlow(
            tuple((p, f.to_float(), float(w)) for p, f, w in self.atoms)
        )


@dataclass(frozen=True)
class FlowFactorization:
    """The (rho_2, rho_1) split: flow marginal plus per-flow strategy conditionals."""

    flows: tuple[FlowTrajectory, ...]
    flow_weights: tuple[Scalar, ...]
    conditionals: tuple[tuple[tuple[RestrictedStrategy, Scalar], ...], ...]

    def recombine(self) -> CorrelatedFlow:
        atoms = []
        for flow, fw, cond in zip(self.flows, self.flow_weights, self.conditionals):
            for phi, cw in cond:
                atoms.append((phi, flow, fw * cw))
        return CorrelatedFlow(tuple(atoms))


def factor_flow(rho: CorrelatedFlow) -> FlowFactorization:
    """Group atoms by flow; conditional weights are renormalized atom weights."""
    flows: list[FlowTrajectory] = []
    groups: list[list] = []
    for phi, flow, w in rho.atoms:
        for i, known in enumerate(flows):
            if _flows_close(known, flow, rho.mode):
                groups[i].append((phi, w))
                break
        else:
            flows.append(flow)
            groups.append([(phi, w)])
    weights = tuple(sum(w for _, w in g) for g in groups)
    conds = tuple(
        tuple((phi, w / fw) for phi, w in g) for g, fw in zip(groups, weights)
    )
    return FlowFactorization(tuple(flows), weights, conds)


@dataclass(frozen=True)
class DeviationMap:
    """Partial strategy modification u: entries override, everything else is identity."""

    entries: tuple[tuple[RestrictedStrategy, RestrictedStrategy], ...] = ()

    def __post_init__(self):
        keys = [k for k, _ in self.entries]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate deviation keys")

    @staticmethod
    def identity() -> "DeviationMap":
        return DeviationMap(())

    @staticmethod
    def single(key: RestrictedStrategy, value: RestrictedStrategy) -> "DeviationMap":
        return DeviationMap(((key, value),))

    def apply(self, phi: RestrictedStrategy) -> RestrictedStrategy:
        for k, v in self.entries:
            if k == phi:
                return v
        return phi

    def check_support(self, support: Sequence[RestrictedStrategy]) -> None:
        for k, _ in self.entries:
            if k not in support:
                raise ValueError("deviation key outside the profile support")


def _require_game_mode(game: GameSpec, mode: str) -> None:
    if game.arithmetic != mode:
        raise ValueError(f"mixing arithmetic modes: game {game.arithmetic}, data {mode}")


def state_law(
    game: GameSpec,
    phi: RestrictedStrategy,
    flow: FlowTrajectory,
    m0: ProbabilityVector,
) -> FlowTrajectory:
    """Law of the representative state when the strategy and the flow are frozen."""
    if len(flow) != game.horizon + 1:
        raise ValueError(f"flow must have {game.horizon + 1} measures, got {len(flow)}")
    _require_game_mode(game, flow.mode)
    _require_game_mode(game, m0.mode)
    laws = [m0]
    cur = m0.weights
    dx = len(game.states)
    for t in range(game.horizon):
        nxt = [zero(game.arithmetic)] * dx
        for x in range(dx):
            px = cur[x]
            if not px:
                continue
            row = game.transition.row(t, x, phi.action(t, x)).weights_at(flow[t].weights)
            for y in range(dx):
                if row[y]:
                    nxt[y] += px * row[y]
        cur = tuple(nxt)
        laws.append(ProbabilityVector(game.states, cur, game.arithmetic))
    return FlowTrajectory(tuple(laws))


def deterministic_cost(
    game: GameSpec,
    phi: RestrictedStrategy,
    flow: FlowTrajectory,
    m0: ProbabilityVector,
) -> Scalar:
    """Expected total cost of playing phi against a frozen flow."""
    laws = state_law(game, phi, flow, m0)
    total = zero(game.arithmetic)
    for t in range(game.horizon):
        for x in range(len(game.states)):
            p = laws[t][x]
            if p:
                total += p * game.running_cost(t, x, flow[t], phi.action(t, x))
    for x in range(len(game.states)):
        p = laws[game.horizon][x]
        if p:
            total += p * game.terminal_cost(x, flow[game.horizon])
    return total


def correlated_cost(
    game: GameSpec, rho: CorrelatedFlow, u: DeviationMap, m0: ProbabilityVector
) -> Scalar:
    """J(m0; rho, u) = sum over atoms of weight * cost(u(strategy), flow)."""
    _require_game_mode(game, rho.mode)
    u.check_support(rho.support_strategies())
    total = zero(game.arithmetic)
    for phi, flow, w in rho.atoms:
        total += w * deterministic_cost(game, u.apply(phi), flow, m0)
    return total


def conditional_cost(
    game: GameSpec,
    rho: CorrelatedFlow,
    phi: RestrictedStrategy,
    psi: RestrictedStrategy,
    m0: ProbabilityVector,
) -> Scalar:
    """Unnormalized cost of playing psi on the event {recommendation = phi}."""
    total = zero(game.arithmetic)
    for p, flow, w in rho.atoms:
        if p == phi:
            total += w * deterministic_cost(game, psi, flow, m0)
    return total


@dataclass(frozen=True)
class BestResponse:
    strategy: RestrictedStrategy
    value: Scalar
    tied: int  # number of strategies achieving the minimal value


def best_response(
    game: GameSpec,
    rho: CorrelatedFlow,
    phi: RestrictedStrategy,
    m0: ProbabilityVector,
    cap: int = DEFAULT_STRATEGY_CAP,
) -> BestResponse:
    """Exhaustive minimization of the conditional cost over every strategy.

    Ties are broken by the lexicographic strategy order.
    """
    support = rho.support_strategies()
    if phi not in support:
        raise ValueError("recommendation outside the support of the correlated flow")
    flows = [(flow, w) for p, flow, w in rho.atoms if p == phi]
    best_phi = None
    best_val = None
    tied = 0
    for psi in enumerate_strategies(game, cap):
        val = sum(w * deterministic_cost(game, psi, flow, m0) for flow, w in flows)
        if best_val is None or val < best_val:
            best_phi, best_val, tied = psi, val, 1
        elif val == best_val:
            tied += 1
    return BestResponse(best_phi, best_val, tied)


@dataclass(frozen=True)
class GapRow:
    recommendation: RestrictedStrategy
    cost: Scalar            # unnormalized conditional cost of obeying
    best: RestrictedStrategy
    best_value: Scalar
    gap: Scalar
    tied: int


@dataclass(frozen=True)
class OptimalityReport:
    ok: bool
    gap: Scalar
    rows: tuple[GapRow, ...]

    @property
    def has_tie(self) -> bool:
        return any(r.tied > 1 for r in self.rows)


def optimality_gap(
    game: GameSpec,
    rho: CorrelatedFlow,
    m0: ProbabilityVector,
    cap: int = DEFAULT_STRATEGY_CAP,
) -> OptimalityReport:
    """Total improvement available over all recommendations; zero means optimal."""
    _require_game_mode(game, rho.mode)
    rows = []
    gap = zero(game.arithmetic)
    for phi in rho.support_strategies():
        own = conditional_cost(game, rho, phi, phi, m0)
        br = best_response(game, rho, phi, m0, cap)
        g = own - br.value
        rows.append(GapRow(phi, own, br.strategy, br.value, g, br.tied))
        gap += g
    tol = 0 if game.arithmetic == EXACT else FLOAT_TOL
    return OptimalityReport(gap <= tol, gap, tuple(rows))


@dataclass(frozen=True)
class ConsistencyRow:
    flow: FlowTrajectory
    weight: Scalar
    residual: Scalar  # max over t of dist(mixed law, flow(t))


@dataclass(frozen=True)
class ConsistencyReport:
    ok: bool
    rows: tuple[ConsistencyRow, ...]

    @property
    def max_residual(self) -> Scalar:
        return max(r.residual for r in self.rows)


def consistency_check(
    game: GameSpec, rho: CorrelatedFlow, m0: ProbabilityVector
) -> ConsistencyReport:
    """Each supported flow must equal the mixture of the per-strategy state laws."""
    _require_game_mode(game, rho.mode)
    fact = factor_flow(rho)
    rows = []
    tol = 0 if game.arithmetic == EXACT else FLOAT_TOL
    for flow, fw, cond in zip(fact.flows, fact.flow_weights, fact.conditionals):
        laws = [(state_law(game, phi, flow, m0), w) for phi, w in cond]
        residual = zero(game.arithmetic)
        for t in range(game.horizon + 1):
            mixed = [
                sum(law[t][x] * w for law, w in laws)
                for x in range(len(game.states))
            ]
            r = dist(
                ProbabilityVector(game.states, tuple(mixed), game.arithmetic), flow[t]
            )
            if r > residual:
                residual = r
        rows.append(ConsistencyRow(flow, fw, residual))
    return ConsistencyReport(all(r.residual <= tol for r in rows), tuple(rows))


@dataclass(frozen=True)
class SolutionVerdict:
    is_solution: bool
    optimality: OptimalityReport
    consistency: ConsistencyReport


def verify_solution(
    game: GameSpec,
    rho: CorrelatedFlow,
    m0: ProbabilityVector,
    cap: int = DEFAULT_STRATEGY_CAP,
) -> SolutionVerdict:
    """Definition of a correlated MFG solution: optimal and consistent."""
    opt = optimality_gap(game, rho, m0, cap)
    cons = consistency_check(game, rho, m0)
    return SolutionVerdict(opt.ok and cons.ok, opt, cons)


@dataclass(frozen=True)
class DpResult:
    strategy: RestrictedStrategy
    values: tuple[tuple[Scalar, ...], ...]  # V[t][x] for t = 0..T


def dp_best_response(game: GameSpec, flow: FlowTrajectory) -> DpResult:
    """Backward induction against a single frozen flow.

    Only valid when the conditional flow given the recommendation is a Dirac;
    with several flows in the conditional the player cannot condition on the
    flow and enumeration must be used instead.
    """
    if len(flow) != game.horizon + 1:
        raise ValueError(f"flow must have {game.horizon + 1} measures, got {len(flow)}")
    _require_game_mode(game, flow.mode)
    dx, da = len(game.states), len(game.actions)
    T = game.horizon
    values: list[tuple[Scalar, ...]] = [
        tuple(game.terminal_cost(x, flow[T]) for x in range(dx))
    ]
    table: list[tuple[int, ...]] = []
    nxt = values[0]
    for t in range(T - 1, -1, -1):
        row_vals = []
        row_acts = []
        for x in range(dx):
            best_v = None
            best_a = 0
            for a in range(da):
                v = game.running_cost(t, x, flow[t], a) + sum(
                    k * nxt[y]
                    for y, k in enumerate(
                        game.transition.row(t, x, a).weights_at(flow[t].weights)
                    )
                    if k
                )
                if best_v is None or v < best_v:  # ties keep the smaller action
                    best_v, best_a = v, a
            row_vals.append(best_v)
            row_acts.append(best_a)
        values.insert(0, tuple(row_vals))
        table.insert(0, tuple(row_acts))
        nxt = values[0]
    return DpResult(RestrictedStrategy(tuple(table)), tuple(values))


@dataclass(frozen=True)
class MkvResult:
    mixed: FlowTrajectory
    per_strategy: tuple[tuple[RestrictedStrategy, FlowTrajectory], ...]


def mkv_propagate(
    game: GameSpec,
    conditional: Sequence[tuple[RestrictedStrategy, Scalar]],
    m0: ProbabilityVector,
) -> MkvResult:
    """Forward McKean-Vlasov recursion: per-strategy laws evolve against their own mix."""
    _require_game_mode(game, m0.mode)
    if not conditional:
        raise ValueError("empty strategy conditional")
    total = sum(w for _, w in conditional)
    if game.arithmetic == EXACT:
        if total != 1:
            raise ValueError(f"conditional weights sum to {total}, not 1")
    elif abs(total - 1.0) > FLOAT_SUM_TOL:
        raise ValueError(f"conditional weights sum to {total!r}")
    if any(w <= 0 for _, w in conditional):
        raise ValueError("conditional weights must be positive")

    dx = len(game.states)
    strategies = [phi for phi, _ in conditional]
    weights = [w for _, w in conditional]
    laws = [m0.weights for _ in strategies]
    mixed_path = []
    per_path = [[m0] for _ in strategies]

    def mix(rows) -> ProbabilityVector:
        return ProbabilityVector(
            game.states,
            tuple(sum(r[x] * w for r, w in zip(rows, weights)) for x in range(dx)),
            game.arithmetic,
        )

    mixed_path.append(mix(laws))
    for t in range(game.horizon):
        h_t = mixed_path[t]
        new_laws = []
        for phi, cur in zip(strategies, laws):
            nxt = [zero(game.arithmetic)] * dx
            for x in range(dx):
                if not cur[x]:
                    continue
                row = game.transition.row(t, x, phi.action(t, x)).weights_at(h_t.weights)
                for y in range(dx):
                    if row[y]:
                        nxt[y] += cur[x] * row[y]
            new_laws.append(tuple(nxt))
        laws = new_laws
        for path, row in zip(per_path, laws):
            path.append(ProbabilityVector(game.states, row, game.arithmetic))
        mixed_path.append(mix(laws))
    return MkvResult(
        FlowTrajectory(tuple(mixed_path)),
        tuple(
            (phi, FlowTrajectory(tuple(path)))
            for phi, path in zip(strategies, per_path)
        ),
    )

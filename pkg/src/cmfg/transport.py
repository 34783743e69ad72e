"""Exact 1-Wasserstein distances between correlated flows.

The ground space is (strategy, flow trajectory) pairs with

    d((phi, m), (phi', m')) = 1_{phi != phi'} + sum_t dist(m_t, m'_t)

and the optimal coupling is found with a transportation-tree simplex in
rational arithmetic.  Bland's arc ordering (row-major, first negative reduced
cost enters, smallest tied arc leaves) rules out cycling, and every result is
re-certified against the dual before it is returned.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .mfg import CorrelatedFlow
from .model import DEFAULT_OT_CAP, CapacityError, FLOAT

_ZERO = Fraction(0)


@dataclass(frozen=True)
class TransportResult:
    value: Fraction
    plan: tuple[tuple[int, int, Fraction], ...]  # (source, sink, mass), mass > 0
    row_duals: tuple[Fraction, ...]
    col_duals: tuple[Fraction, ...]


def solve_transport(
    supply: Sequence[Fraction],
    demand: Sequence[Fraction],
    cost: Sequence[Sequence[Fraction]],
    *,
    cap: int = DEFAULT_OT_CAP,
) -> TransportResult:
    """Minimum-cost coupling of two equal-mass nonnegative vectors."""
    supply = [Fraction(s) for s in supply]
    demand = [Fraction(d) for d in demand]
    m, n = len(supply), len(demand)
    if m == 0 or n == 0:
        raise ValueError("empty marginal")
    if m + n > cap:
        raise CapacityError(f"{m + n} transport atoms exceed cap {cap}")
    if any(s < 0 for s in supply) or any(d < 0 for d in demand):
        raise ValueError("negative mass")
    if sum(supply) != sum(demand):
        raise ValueError("unbalanced marginals")
    cost = [[Fraction(c) for c in row] for row in cost]
    if len(cost) != m or any(len(row) != n for row in cost):
        raise ValueError("cost matrix shape mismatch")

    # northwest-corner start: always m+n-1 arcs, zeros kept for the tree
    flow: dict[tuple[int, int], Fraction] = {}
    s, d = list(supply), list(demand)
    i = j = 0
    while True:
        t = min(s[i], d[j])
        flow[(i, j)] = t
        s[i] -= t
        d[j] -= t
        if i == m - 1 and j == n - 1:
            break
        if s[i] == 0 and i < m - 1:
            i += 1
        else:
            j += 1

    while True:
        u, v = _duals(flow, cost, m, n)
        entering = None
        for ei in range(m):
            ci, ui = cost[ei], u[ei]
            for ej in range(n):
                if (ei, ej) not in flow and ci[ej] - ui - v[ej] < 0:
                    entering = (ei, ej)
                    break
            if entering:
                break
        if entering is None:
            break
        _pivot(flow, entering, m, n)

    value = sum(cost[i][j] * f for (i, j), f in flow.items())
    plan = tuple(sorted((i, j, f) for (i, j), f in flow.items() if f > 0))
    result = TransportResult(value, plan, tuple(u), tuple(v))
    if not verify_transport(supply, demand, cost, result):
        raise AssertionError("transport certificate failed")  # pragma: no cover
    return result


def _duals(
    flow: dict[tuple[int, int], Fraction],
    cost: Sequence[Sequence[Fraction]],
    m: int,
    n: int,
) -> tuple[list[Fraction], list[Fraction]]:
    """Tree duals with u[0] = 0, via breadth-first walk of the basis arcs."""
    by_row: list[list[int]] = [[] for _ in range(m)]
    by_col: list[list[int]] = [[] for _ in range(n)]
    for (i, j) in flow:
        by_row[i].append(j)
        by_col[j].append(i)
    u: list[Optional[Fraction]] = [None] * m
    v: list[Optional[Fraction]] = [None] * n
    u[0] = _ZERO
    queue = [("r", 0)]
    while queue:
        kind, k = queue.pop()
        if kind == "r":
            for j in by_row[k]:
                if v[j] is None:
                    v[j] = cost[k][j] - u[k]
                    queue.append(("c", j))
        else:
            for i in by_col[k]:
                if u[i] is None:
                    u[i] = cost[i][k] - v[k]
                    queue.append(("r", i))
    if any(x is None for x in u) or any(x is None for x in v):
        raise AssertionError("basis is not a spanning tree")  # pragma: no cover
    return u, v  # type: ignore[return-value]


def _pivot(
    flow: dict[tuple[int, int], Fraction], entering: tuple[int, int], m: int, n: int
) -> None:
    """Push mass around the unique tree cycle closed by the entering arc."""
    ei, ej = entering
    by_row: list[list[int]] = [[] for _ in range(m)]
    by_col: list[list[int]] = [[] for _ in range(n)]
    for (i, j) in flow:
        by_row[i].append(j)
        by_col[j].append(i)
    # path from row ei to column ej through basis arcs
    parent: dict[tuple[str, int], tuple[str, int]] = {}
    stack = [("r", ei)]
    seen = {("r", ei)}
    while stack:
        node = stack.pop()
        kind, k = node
        nbrs = (
            [("c", j) for j in by_row[k]] if kind == "r" else [("r", i) for i in by_col[k]]
        )
        for nxt in nbrs:
            if nxt not in seen:
                seen.add(nxt)
                parent[nxt] = node
                stack.append(nxt)
    path = [("c", ej)]
    while path[-1] != ("r", ei):
        path.append(parent[path[-1]])
    # cycle arcs alternate -,+,-,... walking back from (entering sink)
    minus: list[tuple[int, int]] = []
    plus: list[tuple[int, int]] = [entering]
    for step, (node_a, node_b) in enumerate(zip(path, path[1:])):
        arc = (
            (node_b[1], node_a[1]) if node_a[0] == "c" else (node_a[1], node_b[1])
        )
        (minus if step % 2 == 0 else plus).append(arc)
    theta = min(flow[a] for a in minus)
    leaving = min(a for a in minus if flow[a] == theta)
    for a in minus:
        flow[a] -= theta
    for a in plus:
        if a != entering:
            flow[a] += theta
    del flow[leaving]
    flow[entering] = theta


def verify_transport(
    supply: Sequence[Fraction],
    demand: Sequence[Fraction],
    cost: Sequence[Sequence[Fraction]],
    result: TransportResult,
) -> bool:
    """Exact primal-dual optimality certificate."""
    m, n = len(supply), len(demand)
    row_sum = [_ZERO] * m
    col_sum = [_ZERO] * n
    total = _ZERO
    for i, j, f in result.plan:
        if f < 0:
            return False
        row_sum[i] += f
        col_sum[j] += f
        total += cost[i][j] * f
    if row_sum != list(supply) or col_sum != list(demand):
        return False
    if total != result.value:
        return False
    u, v = result.row_duals, result.col_duals
    if any(cost[i][j] - u[i] - v[j] < 0 for i in range(m) for j in range(n)):
        return False
    # strong duality on the coupling's support
    return all(cost[i][j] == u[i] + v[j] for i, j, f in result.plan if f > 0)


def _flow_key(flow) -> tuple[tuple[Fraction, ...], ...]:
    return tuple(tuple(Fraction(w) for w in pv.weights) for pv in flow.measures)


def atom_distance(strategy_a, flow_a, strategy_b, flow_b) -> Fraction:
    """Ground metric: strategy mismatch indicator plus summed state-law gaps."""
    fa, fb = _flow_key(flow_a), _flow_key(flow_b)
    if len(fa) != len(fb) or any(len(x) != len(y) for x, y in zip(fa, fb)):
        raise ValueError("flows live on different spaces")
    d = _ZERO if strategy_a.actions == strategy_b.actions else Fraction(1)
    for wa, wb in zip(fa, fb):
        d += sum(abs(x - y) for x, y in zip(wa, wb)) / 2
    return d


def flow_space_distance(
    rho_a: CorrelatedFlow, rho_b: CorrelatedFlow, *, cap: int = DEFAULT_OT_CAP
):
    """1-Wasserstein distance between two correlated flows.

    Float weights are promoted to exact rationals (and renormalized to unit
    mass) so the optimum carries an exact certificate either way; the value
    comes back as a float when either input is float-mode.
    """
    atoms_a, atoms_b = rho_a.atoms, rho_b.atoms
    supply = [Fraction(w) for _, _, w in atoms_a]
    demand = [Fraction(w) for _, _, w in atoms_b]
    ta, tb = sum(supply), sum(demand)
    supply = [w / ta for w in supply]
    demand = [w / tb for w in demand]
    cost = [
        [atom_distance(sa, fa, sb, fb) for sb, fb, _ in atoms_b]
        for sa, fa, _ in atoms_a
    ]
    value = solve_transport(supply, demand, cost, cap=cap).value
    if rho_a.mode == FLOAT or rho_b.mode == FLOAT:
        return float(value)
    return value

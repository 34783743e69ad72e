"""Exact optimal transport on finite atom sets and the flow-space W1 metric."""

import random
from fractions import Fraction as F

import pytest
from scipy.optimize import linprog

from cmfg import two_state
from cmfg.model import (
    EXACT,
    CapacityError,
    FiniteSpace,
    FlowTrajectory,
    ProbabilityVector,
)
from cmfg.mfg import CorrelatedFlow
from cmfg.transport import (
    atom_distance,
    flow_space_distance,
    solve_transport,
    verify_transport,
)


def test_tiny_instance_by_hand():
    # moving 1/2 across unit distance and keeping 1/2 in place costs 1/2
    supply = (F(1, 2), F(1, 2))
    demand = (F(1), F(0))
    cost = ((F(0), F(2)), (F(1), F(3)))
    res = solve_transport(supply, demand, cost)
    assert res.value == F(1, 2)
    assert dict(((i, j), m) for i, j, m in res.plan) == {
        (0, 0): F(1, 2),
        (1, 0): F(1, 2),
    }


def test_identity_is_free():
    supply = demand = (F(1, 4), F(1, 4), F(1, 2))
    cost = tuple(
        tuple(F(0) if i == j else F(1) for j in range(3)) for i in range(3)
    )
    assert solve_transport(supply, demand, cost).value == 0


def test_unbalanced_rejected():
    with pytest.raises(ValueError):
        solve_transport((F(1),), (F(1, 2), F(1, 4)), ((F(0), F(1)),))


def test_negative_mass_rejected():
    with pytest.raises(ValueError):
        solve_transport((F(3, 2), F(-1, 2)), (F(1),), ((F(0),), (F(0),)))


def test_cap_enforced():
    supply = (F(1, 2), F(1, 2))
    demand = (F(1), F(0))
    cost = ((F(0), F(1)), (F(1), F(0)))
    with pytest.raises(CapacityError):
        solve_transport(supply, demand, cost, cap=1)


def test_duals_certify_optimality():
    supply = (F(1, 3), F(2, 3))
    demand = (F(1, 2), F(1, 2))
    cost = ((F(1), F(4)), (F(2), F(1, 2)))
    res = solve_transport(supply, demand, cost)
    verify_transport(supply, demand, cost, res)


def test_against_float_solver():
    """Random balanced instances match scipy's LP solution value."""
    rng = random.Random(7)
    for _ in range(30):
        m, n = rng.randint(1, 5), rng.randint(1, 5)
        supply_raw = [rng.randint(1, 9) for _ in range(m)]
        demand_raw = [rng.randint(1, 9) for _ in range(n)]
        ts, td = sum(supply_raw), sum(demand_raw)
        supply = tuple(F(v, ts) for v in supply_raw)
        demand = tuple(F(v, td) for v in demand_raw)
        cost = tuple(
            tuple(F(rng.randint(0, 20), 4) for _ in range(n)) for _ in range(m)
        )
        res = solve_transport(supply, demand, cost)
        # LP over vectorized plan: marginals as equality constraints
        a_eq, b_eq = [], []
        for i in range(m):
            row = [0.0] * (m * n)
            for j in range(n):
                row[i * n + j] = 1.0
            a_eq.append(row)
            b_eq.append(float(supply[i]))
        for j in range(n):
            row = [0.0] * (m * n)
            for i in range(m):
                row[i * n + j] = 1.0
            a_eq.append(row)
            b_eq.append(float(demand[j]))
        c = [float(cost[i][j]) for i in range(m) for j in range(n)]
        ref = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * (m * n), method="highs")
        assert ref.status == 0
        assert abs(float(res.value) - ref.fun) < 1e-9


@pytest.fixture(scope="module")
def dirac_rho(game, rho):
    phi, flow, _ = rho.atoms[0]
    return CorrelatedFlow(((phi, flow, F(1)),))


def test_atom_distance_components(rho):
    (pa, fa, _), (pb, fb, _) = rho.atoms[0], rho.atoms[1]
    d_same = atom_distance(pa, fa, pa, fa)
    assert d_same == 0
    d = atom_distance(pa, fa, pb, fb)
    mismatch = 1 if pa != pb else 0
    law_gap = sum(
        sum(abs(x - y) for x, y in zip(ma.weights, mb.weights)) / 2
        for ma, mb in zip(fa.measures, fb.measures)
    )
    assert d == mismatch + law_gap


def test_flow_space_metric_axioms(rho, dirac_rho):
    assert flow_space_distance(rho, rho) == 0
    d_ab = flow_space_distance(rho, dirac_rho)
    assert d_ab == flow_space_distance(dirac_rho, rho) > 0


def hand_atom_distance(pa, fa, pb, fb):
    mismatch = 0 if pa == pb else 1
    law_gap = sum(
        sum(abs(F(x) - F(y)) for x, y in zip(ma.weights, mb.weights)) / 2
        for ma, mb in zip(fa.measures, fb.measures)
    )
    return mismatch + law_gap


def test_distance_to_dirac_is_forced_plan(rho, dirac_rho):
    # against a single atom every unit of mass has a fixed destination
    tphi, tflow, _ = dirac_rho.atoms[0]
    expected = sum(
        w * hand_atom_distance(phi, flow, tphi, tflow) for phi, flow, w in rho.atoms
    )
    assert expected > 0
    assert flow_space_distance(rho, dirac_rho) == expected


def test_triangle_inequality_on_conditionals(rho):
    from cmfg.mfg import factor_flow

    fact = factor_flow(rho)
    a, b, c = (
        CorrelatedFlow(tuple((phi, flow, w) for phi, w in cond))
        for flow, cond in zip(fact.flows[:3], fact.conditionals[:3])
    )
    assert flow_space_distance(a, c) <= flow_space_distance(a, b) + flow_space_distance(b, c)


def test_float_mode_result_is_float(rho, dirac_rho):
    rho_f = CorrelatedFlow(
        tuple((s, f.to_float(), float(w)) for s, f, w in dirac_rho.atoms)
    )
    exact = flow_space_distance(rho, dirac_rho)
    d = flow_space_distance(rho, rho_f)
    assert isinstance(d, float)
    assert abs(d - float(exact)) < 1e-12

"""Finite-N games: joint propagation, profile costs, CE solving, simulation."""

import math
from fractions import Fraction as F
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmfg import rng
from cmfg.lp import check_solution
from cmfg.mfg import DeviationMap
from cmfg.model import (
    EXACT,
    CapacityError,
    ProbabilityVector,
    RestrictedStrategy,
    categorical_pick,
    enumerate_strategies,
    psi_sample,
    strategy_index,
)
from cmfg.nplayer import (
    ExplicitProfile,
    FactoredProfile,
    JointStateDistribution,
    SimulationConfig,
    _pick,
    ce_constraints,
    deviation_gain,
    exact_joint_propagate,
    exchangeability_check,
    is_symmetric,
    mc_profile_cost,
    profile_cost_exact,
    solve_symmetric_ce,
    symmetrize,
)
from cmfg.limits import lift

PHI_PLUS = RestrictedStrategy(((1, 0), (1, 0)))
PHI_PLUS_HAT = RestrictedStrategy(((1, 0), (0, 0)))
PHI_MINUS = RestrictedStrategy(((0, 1), (0, 1)))
PHI_O = RestrictedStrategy(((0, 0), (0, 0)))


def dirac_profile(*strategies):
    return ExplicitProfile(len(strategies), ((tuple(strategies), F(1)),))


def exclusive(states, skip, d):
    counts = [0] * d
    for j, x in enumerate(states):
        if j != skip:
            counts[x] += 1
    n = len(states) - 1
    return tuple(F(c, n) for c in counts)


def joint_path_oracle(game, strategies, m0):
    """Joint laws and per-player costs by enumerating every joint state path."""
    n = len(strategies)
    d = len(game.states)
    horizon = game.horizon
    laws = [dict() for _ in range(horizon + 1)]
    costs = [F(0)] * n
    for path in product(range(d ** n), repeat=1):
        pass  # paths are built positionwise below
    joints = list(product(range(d), repeat=n))
    for path in product(joints, repeat=horizon + 1):
        prob = F(1)
        for i in range(n):
            prob *= m0[path[0][i]]
        if not prob:
            continue
        run = [F(0)] * n
        ok = True
        for t in range(horizon):
            cur, nxt = path[t], path[t + 1]
            for i in range(n):
                m_i = ProbabilityVector(game.states, exclusive(cur, i, d), EXACT)
                a_i = strategies[i].action(t, cur[i])
                run[i] += game.running_cost(t, cur[i], m_i, a_i)
                step = game.kernel(t, cur[i], m_i, a_i)[nxt[i]]
                if not step:
                    ok = False
                    break
                prob *= step
            if not ok:
                break
        if not ok or not prob:
            continue
        for t in range(horizon + 1):
            laws[t][path[t]] = laws[t].get(path[t], F(0)) + prob
        for i in range(n):
            m_i = ProbabilityVector(
                game.states, exclusive(path[horizon], i, d), EXACT
            )
            costs[i] += prob * (run[i] + game.terminal_cost(path[horizon][i], m_i))
    return laws, costs


@pytest.fixture(scope="module")
def m0n2(game, uniform_m0):
    return JointStateDistribution.from_product(uniform_m0, 2)


class TestProfiles:
    def test_explicit_merges_and_sorts(self):
        a = ((PHI_PLUS, PHI_O), F(1, 4))
        b = ((PHI_O, PHI_PLUS), F(1, 4))
        p = ExplicitProfile(2, (a, b, (a[0], F(1, 2))))
        assert len(p.atoms) == 2
        merged = dict(p.atoms)
        assert merged[(PHI_PLUS, PHI_O)] == F(3, 4)

    def test_weight_sum_enforced(self):
        with pytest.raises(ValueError):
            ExplicitProfile(2, (((PHI_O, PHI_O), F(1, 2)),))

    def test_vector_length_enforced(self):
        with pytest.raises(ValueError):
            ExplicitProfile(3, (((PHI_O, PHI_O), F(1)),))

    def test_factored_expand_products(self, game, rho):
        prof = lift(rho, 2)
        explicit = prof.expand()
        assert explicit.n_players == 2
        assert sum(w for _, w in explicit.atoms) == 1
        # P(both players told phi_plus) = sum_f w_f * cond(phi_plus|f)^2
        from cmfg.mfg import factor_flow

        fact = factor_flow(rho)
        expected = F(0)
        for flow, fw, cond in zip(fact.flows, fact.flow_weights, fact.conditionals):
            lam = dict((s.actions, w) for s, w in cond)
            expected += fw * lam.get(PHI_PLUS.actions, F(0)) ** 2
        got = dict(explicit.atoms).get((PHI_PLUS, PHI_PLUS), F(0))
        assert got == expected

    def test_expand_cap(self, rho):
        with pytest.raises(CapacityError):
            lift(rho, 4).expand(cap=10)


class TestSymmetrize:
    def test_two_player_swap(self):
        p = dirac_profile(PHI_PLUS, PHI_O)
        s = symmetrize(p)
        assert is_symmetric(s)
        weights = dict(s.atoms)
        assert weights[(PHI_PLUS, PHI_O)] == F(1, 2)
        assert weights[(PHI_O, PHI_PLUS)] == F(1, 2)

    def test_idempotent(self):
        s = symmetrize(dirac_profile(PHI_PLUS, PHI_O))
        assert symmetrize(s).atoms == s.atoms

    def test_repeated_entries_counted_once(self):
        s = symmetrize(dirac_profile(PHI_O, PHI_O, PHI_PLUS))
        assert len(s.atoms) == 3
        assert all(w == F(1, 3) for _, w in s.atoms)

    def test_is_symmetric_detects_asymmetry(self):
        assert not is_symmetric(dirac_profile(PHI_PLUS, PHI_O))
        assert is_symmetric(dirac_profile(PHI_O, PHI_O))

    def test_factored_profiles_are_symmetric(self, rho):
        assert is_symmetric(lift(rho, 3))


class TestJointStateDistribution:
    def test_encode_decode_roundtrip(self, game):
        jsd = JointStateDistribution.from_product(
            ProbabilityVector.uniform(game.states, EXACT), 3
        )
        for idx in range(8):
            assert jsd.encode(jsd.decode(idx)) == idx

    def test_player_zero_most_significant(self, game):
        jsd = JointStateDistribution.from_product(
            ProbabilityVector.uniform(game.states, EXACT), 3
        )
        assert jsd.decode(4) == (1, 0, 0)

    def test_marginals_of_product(self, game):
        skew = ProbabilityVector(game.states, (F(3, 4), F(1, 4)), EXACT)
        jsd = JointStateDistribution.from_product(skew, 2)
        for i in range(2):
            assert jsd.marginal(i).weights == skew.weights

    def test_cap(self, game):
        with pytest.raises(CapacityError):
            JointStateDistribution.from_product(
                ProbabilityVector.uniform(game.states, EXACT), 13
            )


class TestExactJointPropagation:
    def test_matches_path_oracle_two_players(self, game, m0n2, uniform_m0):
        for vec in ((PHI_PLUS, PHI_O), (PHI_PLUS, PHI_MINUS), (PHI_O, PHI_O)):
            spec = exact_joint_propagate(game, vec, None, m0n2)
            laws, costs = joint_path_oracle(game, vec, uniform_m0)
            for t in range(game.horizon + 1):
                dense = {}
                for idx, w in enumerate(spec.laws[t].weights):
                    if w:
                        dense[spec.laws[t].decode(idx)] = w
                assert dense == laws[t]
            assert tuple(spec.costs) == tuple(costs)

    def test_deviation_changes_one_player(self, game, m0n2, uniform_m0):
        vec = (PHI_PLUS, PHI_O)
        spec = exact_joint_propagate(game, vec, (0, PHI_O), m0n2)
        _, costs = joint_path_oracle(game, (PHI_O, PHI_O), uniform_m0)
        assert spec.costs[0] == costs[0]

    def test_three_players_against_oracle(self, game, uniform_m0):
        m0n3 = JointStateDistribution.from_product(uniform_m0, 3)
        vec = (PHI_PLUS, PHI_O, PHI_MINUS)
        spec = exact_joint_propagate(game, vec, None, m0n3)
        laws, costs = joint_path_oracle(game, vec, uniform_m0)
        assert tuple(spec.costs) == tuple(costs)
        final = {
            spec.laws[2].decode(i): w
            for i, w in enumerate(spec.laws[2].weights)
            if w
        }
        assert final == laws[2]


class TestProfileCostExact:
    def test_pinned_two_player_table(self, game, m0n2):
        ident = DeviationMap.identity()
        cases = {
            (PHI_PLUS, PHI_PLUS): F(-27, 256),
            (PHI_PLUS, PHI_O): F(7, 128),
            (PHI_O, PHI_PLUS): F(0),
            (PHI_PLUS_HAT, PHI_PLUS_HAT): F(-3, 64),
        }
        for (mine, other), expected in cases.items():
            cost = profile_cost_exact(
                game, dirac_profile(mine, other), 0, ident, m0n2
            )
            assert cost == expected, (mine, other)

    def test_symmetry_between_players(self, game, m0n2):
        ident = DeviationMap.identity()
        c0 = profile_cost_exact(game, dirac_profile(PHI_PLUS, PHI_O), 1, ident, m0n2)
        c1 = profile_cost_exact(game, dirac_profile(PHI_O, PHI_PLUS), 0, ident, m0n2)
        assert c0 == c1

    def test_deviation_map_applies_to_own_draw(self, game, m0n2):
        u = DeviationMap.single(PHI_PLUS, PHI_O)
        cost = profile_cost_exact(game, dirac_profile(PHI_PLUS, PHI_PLUS), 0, u, m0n2)
        assert cost == profile_cost_exact(
            game, dirac_profile(PHI_O, PHI_PLUS), 0, DeviationMap.identity(), m0n2
        )

    def test_mixture_is_affine(self, game, m0n2):
        ident = DeviationMap.identity()
        mixed = ExplicitProfile(
            2, (((PHI_PLUS, PHI_PLUS), F(1, 3)), ((PHI_O, PHI_O), F(2, 3)))
        )
        cost = profile_cost_exact(game, mixed, 0, ident, m0n2)
        assert cost == F(1, 3) * F(-27, 256) + F(2, 3) * F(0)


def scalar_mc_reference(game, profile, player, u, m0, cfg):
    """Rebuild the simulator one replication at a time from the stream layout.

    Slot 0 draws the profile atom (or flow), slots 1..N the per-player
    conditional strategies, N+1..2N the initial states, and 2N+1+t*N+i the
    transition noise of player i at time t.
    """
    g = game.to_float()
    m0f = m0.to_float()
    n = profile.n_players
    horizon = g.horizon
    if isinstance(profile, ExplicitProfile):
        atom_vecs = [vec for vec, _ in profile.atoms]
        atom_w = [float(w) for _, w in profile.atoms]
    else:
        flows_w = [float(w) for w in profile.flow_weights]
        conds = [
            ([s for s, _ in cond], [float(w) for _, w in cond])
            for cond in profile.conditionals
        ]
    costs = []
    for rep in range(cfg.replications):
        def uni(slot):
            return rng.uniform(cfg.master_seed, rep, slot)

        if isinstance(profile, ExplicitProfile):
            vec = list(atom_vecs[categorical_pick(atom_w, uni(0))])
        else:
            k = categorical_pick(flows_w, uni(0))
            names, weights = conds[k]
            vec = [names[categorical_pick(weights, uni(1 + j))] for j in range(n)]
        vec[player] = u.apply(vec[player])
        states = [
            categorical_pick(m0f.weights, uni(n + 1 + j)) for j in range(n)
        ]
        total = 0.0
        for t in range(horizon):
            m_self = ProbabilityVector(
                g.states,
                tuple(c / (n - 1) for c in _counts(states, player, len(g.states))),
                "float",
            )
            total += g.running_cost(
                t, states[player], m_self, vec[player].action(t, states[player])
            )
            new_states = []
            for i in range(n):
                m_i = ProbabilityVector(
                    g.states,
                    tuple(c / (n - 1) for c in _counts(states, i, len(g.states))),
                    "float",
                )
                a_i = vec[i].action(t, states[i])
                z = uni(2 * n + 1 + t * n + i)
                new_states.append(psi_sample(g, t, states[i], m_i, a_i, z))
            states = new_states
        m_self = ProbabilityVector(
            g.states,
            tuple(c / (n - 1) for c in _counts(states, player, len(g.states))),
            "float",
        )
        total += g.terminal_cost(states[player], m_self)
        costs.append(total)
    # aggregate exactly like the array engine does within one chunk
    arr = np.array(costs)
    reps = len(costs)
    mean = float(np.sum(arr)) / reps
    if reps > 1:
        total_sq = float(np.sum(arr * arr))
        var = max(total_sq - reps * mean * mean, 0.0) / (reps - 1)
        stderr = math.sqrt(var / reps)
    else:
        stderr = 0.0
    return mean, stderr


def _counts(states, skip, d):
    counts = [0.0] * d
    for j, x in enumerate(states):
        if j != skip:
            counts[x] += 1.0
    return counts


class TestMonteCarlo:
    def test_bit_identical_to_scalar_reference_explicit(self, game, uniform_m0):
        profile = ExplicitProfile(
            3,
            (
                ((PHI_PLUS, PHI_O, PHI_MINUS), F(1, 2)),
                ((PHI_O, PHI_O, PHI_O), F(1, 2)),
            ),
        )
        cfg = SimulationConfig(master_seed=11, replications=64)
        u = DeviationMap.single(PHI_PLUS, PHI_PLUS_HAT)
        got = mc_profile_cost(game, profile, 0, u, uniform_m0, cfg)
        want = scalar_mc_reference(game, profile, 0, u, uniform_m0, cfg)
        assert got[0] == want[0]

    def test_bit_identical_to_scalar_reference_factored(self, game, rho, uniform_m0):
        profile = lift(rho, 4)
        cfg = SimulationConfig(master_seed=5, replications=64)
        got = mc_profile_cost(
            game, profile, 2, DeviationMap.identity(), uniform_m0, cfg
        )
        want = scalar_mc_reference(
            game, profile, 2, DeviationMap.identity(), uniform_m0, cfg
        )
        assert got[0] == want[0]

    def test_chunking_does_not_change_estimate(self, game, rho, uniform_m0):
        # replications above the chunk size take the multi-chunk path
        profile = lift(rho, 2)
        small = SimulationConfig(master_seed=1, replications=4100)
        mean, stderr = mc_profile_cost(
            game, profile, 0, DeviationMap.identity(), uniform_m0, small
        )
        ref = scalar_mc_reference(
            game, profile, 0, DeviationMap.identity(), uniform_m0, small
        )
        assert abs(mean - ref[0]) < 1e-12

    def test_three_sigma_agreement_with_exact(self, game, rho, uniform_m0, m0n2):
        profile = lift(rho, 2)
        exact = profile_cost_exact(
            game, profile, 0, DeviationMap.identity(), m0n2
        )
        cfg = SimulationConfig(master_seed=0, replications=40_000)
        mean, stderr = mc_profile_cost(
            game, profile, 0, DeviationMap.identity(), uniform_m0, cfg
        )
        assert abs(mean - float(exact)) <= 3 * stderr

    def test_single_replication_has_zero_stderr(self, game, rho, uniform_m0):
        cfg = SimulationConfig(master_seed=0, replications=1)
        _, stderr = mc_profile_cost(
            game, lift(rho, 2), 0, DeviationMap.identity(), uniform_m0, cfg
        )
        assert stderr == 0.0


class TestPickParity:
    @given(
        st.lists(st.integers(0, 5), min_size=2, max_size=4).filter(lambda w: sum(w) > 0),
        st.floats(0.0, 1.0, allow_nan=False),
    )
    @settings(max_examples=80)
    def test_vector_pick_matches_scalar(self, raw, z):
        total = sum(raw)
        w = np.array([[v / total for v in raw]])
        zs = np.array([z])
        got = _pick(w, zs)[0]
        want = categorical_pick([v / total for v in raw], z)
        assert got == want


class TestDeviationGain:
    def test_lifted_two_player_gain_is_zero(self, game, rho, m0n2):
        result = deviation_gain(game, lift(rho, 2), 0, m0n2, "exact")
        assert result.epsilon == 0
        assert result.method == "exact"
        assert all(row.gap == 0 for row in result.rows)

    def test_rows_cover_the_support(self, game, rho, m0n2):
        result = deviation_gain(game, lift(rho, 2), 0, m0n2, "exact")
        recs = {row.recommendation for row in result.rows}
        assert recs == set(rho.support_strategies())

    def test_exact_matches_brute_force(self, game, m0n2):
        profile = symmetrize(dirac_profile(PHI_PLUS, PHI_O))
        result = deviation_gain(game, profile, 0, m0n2, "exact")
        strategies = enumerate_strategies(game)
        ident = DeviationMap.identity()
        base = profile_cost_exact(game, profile, 0, ident, m0n2)
        brute_eps = F(0)
        for rec in (PHI_PLUS, PHI_O):
            values = []
            for psi in strategies:
                u = DeviationMap.single(rec, psi)
                values.append(profile_cost_exact(game, profile, 0, u, m0n2))
            own = profile_cost_exact(game, profile, 0, ident, m0n2)
            brute_eps += own - min(values)
        assert result.epsilon == brute_eps

    def test_mc_estimates_positive_gain(self, game, uniform_m0, m0n2):
        # telling player 0 to idle while the other holds up leaves 27/256
        # of value on the table: joining the crowd is strictly better
        profile = dirac_profile(PHI_O, PHI_PLUS)
        exact = deviation_gain(game, profile, 0, m0n2, "exact")
        assert exact.epsilon >= F(27, 256) > 0
        cfg = SimulationConfig(master_seed=0, replications=60_000)
        mc = deviation_gain(game, profile, 0, uniform_m0, "mc", cfg)
        assert mc.method == "mc" and mc.replications == 60_000
        assert abs(mc.epsilon - float(exact.epsilon)) <= 4 * (mc.stderr + 1e-12)

    def test_mc_epsilon_is_nonnegative(self, game, rho, uniform_m0):
        cfg = SimulationConfig(master_seed=2, replications=5000)
        result = deviation_gain(game, lift(rho, 3), 0, uniform_m0, "mc", cfg)
        assert result.epsilon >= 0
        assert result.stderr >= 0


class TestCeConstraints:
    def test_size_matches_two_player_case(self, game, m0n2):
        lp = ce_constraints(game, 2, m0n2)
        assert len(lp.variables) == 256
        assert len(lp.rows) == 2 * 16 * 15 + 1

    def test_lifted_solution_satisfies_all_rows(self, game, rho, m0n2):
        lp = ce_constraints(game, 2, m0n2)
        explicit = lift(rho, 2).expand()
        weights = {
            tuple(strategy_index(game, s) for s in vec): w
            for vec, w in explicit.atoms
        }
        values = {}
        strategies = enumerate_strategies(game)
        for i in range(len(strategies)):
            for j in range(len(strategies)):
                values[f"g_{i}_{j}"] = weights.get((i, j), F(0))
        assert check_solution(lp, values)

    def test_float_game_rejected(self, game, m0n2):
        with pytest.raises(ValueError):
            ce_constraints(game.to_float(), 2, m0n2)

    def test_lp_cap(self, game, m0n2):
        with pytest.raises(CapacityError):
            ce_constraints(game, 5, m0n2)


class TestSolveSymmetricCe:
    def test_two_player_equilibrium(self, game, uniform_m0):
        profile = solve_symmetric_ce(game, 2, uniform_m0)
        assert is_symmetric(profile)
        for player in range(2):
            result = deviation_gain(game, profile, player, uniform_m0, "exact")
            assert result.epsilon == 0

    def test_min_cost_variant_improves_total(self, game, uniform_m0):
        plain = solve_symmetric_ce(game, 2, uniform_m0)
        best = solve_symmetric_ce(game, 2, uniform_m0, minimize_total_cost=True)
        ident = DeviationMap.identity()
        m0n = JointStateDistribution.from_product(uniform_m0, 2)

        def total(profile):
            return sum(
                profile_cost_exact(game, profile, i, ident, m0n) for i in range(2)
            )

        assert total(best) <= total(plain)
        assert total(best) == F(-27, 128)


class TestExchangeability:
    def test_symmetrized_profile_passes(self, game, uniform_m0):
        profile = symmetrize(dirac_profile(PHI_PLUS, PHI_O, PHI_O))
        m0n = JointStateDistribution.from_product(uniform_m0, 3)
        for t in (1, 2):
            report = exchangeability_check(game, profile, m0n, t)
            assert report.ok
            assert all(row.worst_gap == 0 for row in report.rows)

    def test_lifted_profile_passes(self, game, rho, uniform_m0):
        m0n = JointStateDistribution.from_product(uniform_m0, 3)
        report = exchangeability_check(game, lift(rho, 3), m0n, 1)
        assert report.ok

    def test_asymmetric_profile_rejected(self, game, uniform_m0):
        m0n = JointStateDistribution.from_product(uniform_m0, 2)
        with pytest.raises(ValueError):
            exchangeability_check(game, dirac_profile(PHI_PLUS, PHI_O), m0n, 1)

    def test_time_range_checked(self, game, uniform_m0):
        profile = symmetrize(dirac_profile(PHI_PLUS, PHI_O))
        m0n = JointStateDistribution.from_product(uniform_m0, 2)
        with pytest.raises(ValueError):
            exchangeability_check(game, profile, m0n, 5)

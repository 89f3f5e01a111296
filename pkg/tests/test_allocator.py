import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perimeter_bandits.allocator import (
    CapacityError,
    brute_force_optimal,
    brute_force_values,
    optimality_gaps,
    optimality_gaps_arms,
    precompute_q,
    solve_optimal,
    solve_optimal_forced,
)
from perimeter_bandits.domain import Allocation, CaseI, CaseII, Instance, allocation_of, detection_vector

from conftest import e1, random_instance


def q_direct(lam, model):
    """Oracle q-table: evaluate each interval's detection vector from scratch."""
    K, U = model.K, model.U
    q = np.zeros((K, K, U))
    for i in range(K):
        for j in range(i, K):
            for u in range(U):
                cells = [0] * K
                cells[i : j + 1] = [u + 1] * (j - i + 1)
                q[i, j, u] = detection_vector(model, Allocation(tuple(cells), U)) @ lam
    return q


def test_q_e1(E1):
    q = precompute_q(E1.lam, E1.model)
    expected = {(1, 1, 1): 2, (2, 2, 1): 1, (3, 3, 1): 4, (1, 2, 1): 1.5, (2, 3, 1): 2.5, (1, 3, 1): 7 / 3}
    for key, v in expected.items():
        assert q[key] == pytest.approx(v, abs=1e-12)


def test_q_zero_rates_and_perfect_table(E1):
    assert not precompute_q(np.zeros(3), E1.model).values.any()
    lam = np.array([1.0, 2.0, 5.0])
    q = precompute_q(lam, CaseI.constant(3, 2, 1.0))
    for i in range(1, 4):
        for j in range(i, 4):
            assert q[i, j, 2] == pytest.approx(lam[i - 1 : j].sum())


@pytest.mark.parametrize("phi", ["reciprocal", "half-offset"])
def test_q_matches_direct_evaluation(phi, rng):
    for _ in range(20):
        inst = random_instance(rng, int(rng.integers(1, 7)), int(rng.integers(1, 4)), phi)
        assert np.allclose(precompute_q(inst.lam, inst.model).values, q_direct(inst.lam, inst.model), atol=1e-12)
        table = CaseI(inst.model.cover_table())
        assert np.allclose(precompute_q(inst.lam, table).values, q_direct(inst.lam, inst.model), atol=1e-12)


def test_solve_examples():
    ivs, v = solve_optimal(precompute_q(e1().lam, e1().model))
    assert ivs == ((3, 3, 1),) and v == 4.0
    assert solve_optimal(precompute_q(e1(2).lam, e1(2).model))[1] == pytest.approx(6.0)
    ivs, v = solve_optimal(np.zeros((3, 3, 2)))
    assert v == 0.0 and ivs == ()


def test_tie_break_lexicographic():
    # both searchers identical: (1,1,1),(3,3,2) must win over (1,1,2),(3,3,1)
    ivs, _ = solve_optimal(precompute_q(e1(2).lam, e1(2).model))
    assert ivs == ((1, 1, 1), (3, 3, 2))


def test_forced_examples(E1):
    q = precompute_q(E1.lam, E1.model)
    assert solve_optimal_forced(q, 3, 1, 3, "max")[1] == 4.0
    ivs, v = solve_optimal_forced(q, 3, 1, 3, "min")
    assert v == pytest.approx(7 / 3) and ivs == ((1, 3, 1),)
    ivs, v = solve_optimal_forced(q, 3, 1, 1, "min")
    assert v == pytest.approx(1.5) and ivs == ((1, 2, 1),)
    assert brute_force_optimal(q) == 4.0
    assert brute_force_optimal(q, forced_cell=2) == pytest.approx(2.5)
    assert brute_force_optimal(np.zeros((3, 3, 1))) == 0.0


def test_capacity_guards():
    with pytest.raises(CapacityError):
        brute_force_optimal(np.zeros((9, 9, 1)))
    with pytest.raises(CapacityError):
        solve_optimal(np.zeros((2, 2, 3)), width_limit=2)


def test_oracle_equivalence_small(rng):
    for _ in range(60):
        K, U = int(rng.integers(1, 7)), int(rng.integers(1, 4))
        inst = random_instance(rng, K, U, str(rng.choice(["reciprocal", "half-offset"])))
        q = precompute_q(inst.lam, inst.model)
        ivs, v = solve_optimal(q)
        assert v == pytest.approx(brute_force_optimal(q), abs=1e-9)
        assert q.reward(allocation_of(ivs, K, U)) == pytest.approx(v, abs=1e-9)
        for k in range(1, K + 1):
            civs, cv = solve_optimal_forced(q, K, U, k, "max")
            assert cv == pytest.approx(brute_force_optimal(q, forced_cell=k), abs=1e-9)
            assert allocation_of(civs, K, U).cells[k - 1] != 0
            assert solve_optimal_forced(q, K, U, k, "min")[1] == pytest.approx(
                min(brute_force_values(q.values, K, U, k)), abs=1e-9)
            for u in range(1, U + 1):
                assert solve_optimal_forced(q, K, U, k, searcher=u)[1] == pytest.approx(
                    brute_force_optimal(q, forced_cell=k, forced_searcher=u), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_scale_equivariance(seed, c):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(1, 7)), int(rng.integers(1, 4)))
    q = precompute_q(inst.lam, inst.model)
    qc = precompute_q(c * inst.lam, inst.model)
    ivs, v = solve_optimal(q)
    _, vc = solve_optimal(qc)
    assert vc == pytest.approx(c * v, rel=1e-9, abs=1e-12)
    assert qc.reward(allocation_of(ivs, inst.K, inst.U)) == pytest.approx(vc, rel=1e-9, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_searcher_permutation(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(1, 7)), int(rng.integers(1, 4)))
    q = precompute_q(inst.lam, inst.model).values
    perm = rng.permutation(inst.U)
    assert solve_optimal(q[:, :, perm])[1] == pytest.approx(solve_optimal(q)[1], abs=1e-9)


def test_gaps_e1(E1):
    g = optimality_gaps(E1)
    assert g.opt == 4.0
    assert g.delta_max_k[2] == pytest.approx(5 / 3)
    assert g.delta_min_k[2] == pytest.approx(1.5)
    assert g.prob_min_k[2] == pytest.approx(1 / 3)
    assert np.all(g.delta_min_k <= g.delta_max_k + 1e-12)


def test_gap_flag_when_every_cover_is_optimal():
    inst = Instance(np.array([3.0]), CaseII("reciprocal", np.ones((1, 1))))
    g = optimality_gaps(inst)
    assert np.isnan(g.delta_min_k[0]) and not g.has_suboptimal.any()
    assert g.delta_max_k[0] == 0.0


def _brute_gaps(inst):
    q = precompute_q(inst.lam, inst.model).values
    K, U = inst.K, inst.U
    opt = max(brute_force_values(q, K, U))
    tol = 1e-9 * max(1, opt)
    dmin, dmax = [], []
    for k in range(1, K + 1):
        vals = brute_force_values(q, K, U, k)
        sub = [v for v in vals if v < opt - tol]
        dmin.append(opt - max(sub) if sub else math.nan)
        dmax.append(opt - min(vals))
    return np.array(dmin), np.array(dmax)


def test_gaps_match_enumeration(rng):
    for _ in range(40):
        inst = random_instance(rng, int(rng.integers(1, 6)), int(rng.integers(1, 4)))
        g = optimality_gaps(inst)
        dmin, dmax = _brute_gaps(inst)
        assert np.allclose(g.delta_min_k, dmin, atol=1e-9, equal_nan=True)
        assert np.allclose(g.delta_max_k, dmax, atol=1e-9)
        assert g.opt >= max(brute_force_values(precompute_q(inst.lam, inst.model).values, inst.K, inst.U)) - 1e-9


def test_arm_gaps_match_enumeration(rng):
    for _ in range(20):
        inst = random_instance(rng, int(rng.integers(1, 6)), int(rng.integers(1, 4)), "half-offset")
        g = optimality_gaps_arms(inst)
        q = precompute_q(inst.lam, inst.model).values
        opt = g.opt
        tol = 1e-9 * max(1, opt)
        scale = inst.model.scaling_table()
        for k in range(inst.K):
            for u in range(inst.U):
                vals = brute_force_values(q, inst.K, inst.U, k + 1, u + 1)
                sub = [v for v in vals if v < opt - tol]
                if sub:
                    assert g.delta_min_k[k, u] == pytest.approx(opt - max(sub), abs=1e-9)
                    assert g.delta_max_k[k, u] == pytest.approx(opt - min(sub), abs=1e-9)
                else:
                    assert np.isnan(g.delta_min_k[k, u])
                # the widest covering interval is the whole line
                assert g.prob_min_k[k, u] == pytest.approx(scale[u, inst.K])

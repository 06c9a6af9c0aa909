import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from umvd.harness.generators import generate
from umvd.instance import Ultrametric, build_ladder, instance_from_levels, is_ultrametric
from umvd.lp import solve_instance
from umvd.oracle import OracleBudgetError, exact_opt, exact_opt_bruteforce, verify_solution
from umvd.pivot import run

from conftest import levels_matrix


def test_ultrametric_input_costs_nothing():
    inst = generate("perturbed_ultrametric", 6, 3, k=0, seed=1)
    res = exact_opt(inst)
    assert res.opt_cost == 0
    assert np.array_equal(res.witness.level, build_ladder(inst).level_of)


def test_triangle_costs_one(pp_minus_triangle):
    res = exact_opt(pp_minus_triangle)
    assert res.opt_cost == 1
    brute = exact_opt_bruteforce(pp_minus_triangle)
    assert brute.opt_cost == 1 and brute.enumerated_count == 8


def test_two_clusters_cost_nothing():
    lv = levels_matrix({(0, 1): 2, (2, 3): 2, (0, 2): 1, (0, 3): 1, (1, 2): 1, (1, 3): 1}, 4)
    assert exact_opt(instance_from_levels(lv)).opt_cost == 0


def test_budget_guard():
    inst = generate("random_levels", 7, 3, seed=0)
    with pytest.raises(OracleBudgetError) as info:
        exact_opt(inst, budget=1000)
    assert info.value.required == 3**21


def test_verify_solution(pp_minus_triangle):
    res = exact_opt(pp_minus_triangle)
    assert verify_solution(pp_minus_triangle, res.witness) == (True, 1.0)
    lad = build_ladder(pp_minus_triangle)
    assert verify_solution(pp_minus_triangle, Ultrametric(lad.level_of.copy(), lad)) == (False, 0.0)


@given(st.integers(0, 10_000), st.sampled_from(["random_levels", "kpartite_perturbed", "perturbed_ultrametric"]))
def test_witness_and_sandwich(seed, kind):
    inst = generate(kind, 5, 3, k=2, seed=seed)
    res = exact_opt(inst)
    assert is_ultrametric(res.witness)
    ok, cost = verify_solution(inst, res.witness)
    assert ok and cost == res.opt_cost
    assert exact_opt_bruteforce(inst).opt_cost == res.opt_cost
    y = solve_instance(inst)
    assert y.objective <= res.opt_cost + 1e-6
    assert run(inst, y, 0.4, rng_seed=seed, trace=False).cost >= res.opt_cost


@given(st.integers(0, 10_000), st.permutations(range(5)))
def test_relabeling_invariance(seed, perm):
    inst = generate("random_levels", 5, 3, seed=seed)
    lv = build_ladder(inst).level_of
    perm = np.array(perm)
    moved = instance_from_levels(lv[np.ix_(perm, perm)])
    assert exact_opt(moved).opt_cost == exact_opt(inst).opt_cost


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_uniform_weights_scale(seed, w):
    inst = generate("random_levels", 5, 2, seed=seed)
    lv = build_ladder(inst).level_of
    W = np.full((5, 5), float(w))
    weighted = instance_from_levels(lv, mode="weighted", weights=W)
    assert exact_opt(weighted).opt_cost == w * exact_opt(inst).opt_cost

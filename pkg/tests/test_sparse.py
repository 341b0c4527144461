from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadic_sparse.campaign import make_input, trial_rng
from dyadic_sparse.dyadic import DyadicCube, GridFunction, all_cubes, children, scalar_average
from dyadic_sparse.sparse import (SparseCollection, build_sparse_collection,
                                  build_sparse_collection_body, domination_ratio, optimal_eta,
                                  random_sparse_collection, sparse_form, sparse_form_body,
                                  stopping_children, universal_collection, verify_sparse)

from conftest import spike

ROOT1 = DyadicCube.root(1)


def brute_children(f1, f2, Q, lam):
    """Scan all strict subcubes, keep the maximal ones passing the stopping test."""
    hit = [I for I in all_cubes(Q.d, f1.L) if Q.strictly_contains(I)
           and any(scalar_average(f, I) > lam * scalar_average(f, Q) for f in (f1, f2))]
    return sorted(I for I in hit if not any(J.strictly_contains(I) for J in hit))


def test_stopping_examples():
    one = GridFunction.constant(1, 4)
    assert stopping_children(one, one, ROOT1) == []
    assert stopping_children(spike(1, 4, 1.0, 0), one, ROOT1) == []
    f1 = spike(1, 12, 1.0, 0)
    one = GridFunction.constant(1, 12)
    assert stopping_children(f1, one, ROOT1) == [DyadicCube(9, (0,))]
    with pytest.raises(ValueError):
        stopping_children(one, one, ROOT1, lam=1.0)


def test_stopping_matches_brute_force(rng):
    for t in range(10):
        d, L = (1, 8) if t % 2 else (2, 4)
        f1 = make_input(trial_rng(1, t), d, L, 1, "mixed")
        f2 = make_input(trial_rng(2, t), d, L, 1, "spikes")
        Q = DyadicCube(1, (0,) * d)
        assert stopping_children(f1, f2, Q, 16.0) == brute_children(f1, f2, Q, 16.0)


def test_constant_collection_is_root_and_children():
    one = GridFunction.constant(2, 4)
    S = build_sparse_collection(one, one)
    assert S.cubes == sorted([DyadicCube.root(2)] + children(DyadicCube.root(2)))
    assert sparse_form([DyadicCube.root(2)], one, one) == 1.0


def test_spike_chain_shrinks():
    f1, one = spike(1, 12, 1.0, 0, base=0.0), GridFunction.constant(1, 12)
    assert stopping_children(f1, one, ROOT1) == [DyadicCube(9, (0,))]
    S = build_sparse_collection(f1, one)
    # below Q[1;0] the average is 2, so stopping needs 2^12 |I|^-1 2^-12 > 2^9
    chain = [Q for Q in S.cubes if Q.index == (0,) and Q.depth >= 1]
    assert [Q.depth for Q in chain] == [1, 10]
    for Q in chain:
        assert stopping_children(f1, one, Q) == brute_children(f1, one, Q, 256.0)


@pytest.mark.parametrize("d,L", [(1, 10), (2, 5)])
def test_packing_and_eta(d, L):
    for t in range(20):
        rng = trial_rng(5, d, t)
        f1, f2 = make_input(rng, d, L, 1, "mixed"), make_input(rng, d, L, 1, "mixed")
        S = build_sparse_collection(f1, f2)
        rep = verify_sparse(S, 2.0 ** -d * (1 - 2.0 ** -7))
        assert S.packing_bound == Fraction(1, 128)
        assert rep.packing_ok and rep.disjoint and rep.feasible
        assert rep.eta_optimal_exact >= Fraction(1, 2 ** d) * Fraction(127, 128)
        kids = S.forest_children()
        for Q in S.cubes:
            for I in kids[Q]:
                if S.layer[Q] >= 0:
                    for f in (f1, f2):
                        assert scalar_average(f, I) <= 2 ** d * 256 * scalar_average(f, Q) * (1 + 1e-12)


def test_root_alone_and_optimal_eta():
    S = SparseCollection.from_cubes([ROOT1], 1, 3)
    assert optimal_eta(S) == 1 and verify_sparse(S, 1.0).feasible
    S = SparseCollection.from_cubes([ROOT1, DyadicCube(1, (0,))], 1, 3)
    assert optimal_eta(S) == Fraction(2, 3)
    assert not verify_sparse(S, 0.7).feasible


def test_sparse_form_brute_force(rng):
    f1 = GridFunction.from_flat(rng.standard_normal(64), 1, 6)
    f2 = GridFunction.from_flat(rng.standard_normal(64), 1, 6)
    S = random_sparse_collection(3, 1, 6)
    direct = sum(Q.measure * scalar_average(f1, Q) * scalar_average(f2, Q) for Q in S.cubes)
    assert sparse_form(S, f1, f2) == pytest.approx(direct, rel=1e-13)
    assert sparse_form_body(S, f1, f2) == pytest.approx(direct, rel=1e-13)
    assert optimal_eta(S) >= Fraction(1, 2)


def test_universal_collection():
    one = GridFunction.constant(1, 6)
    U = universal_collection(one, one)
    assert U.cubes == [ROOT1]
    T = random_sparse_collection(0, 1, 6)
    assert domination_ratio(T, U, one, one) <= 2
    f1, f2 = spike(1, 8, 1.0, 5), spike(1, 8, 1.0, 7, base=0.1)
    U = universal_collection(f1, f2)
    assert domination_ratio(U, U, f1, f2) == 1.0
    worst = max(domination_ratio(random_sparse_collection(s, 1, 8), U, f1, f2) for s in range(50))
    assert worst <= 32


def test_body_collection_matches_scalar_for_n1(rng):
    f1 = make_input(trial_rng(9, 0), 1, 10, 1, "spikes")
    f2 = make_input(trial_rng(9, 1), 1, 10, 1, "mixed")
    a = build_sparse_collection(f1, f2)
    b = build_sparse_collection_body(f1, f2)
    assert a.cubes == b.cubes


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([(1, 8), (2, 4)]))
def test_collection_properties(seed, grid):
    d, L = grid
    rng = np.random.default_rng(seed)
    f1, f2 = make_input(rng, d, L, 1, "mixed"), make_input(rng, d, L, 1, "spikes")
    S = build_sparse_collection(f1, f2)
    assert S.cubes == build_sparse_collection(f1, f2).cubes
    rep = verify_sparse(S, 0.0)
    assert rep.packing_ok and rep.disjoint
    bigger = SparseCollection.from_cubes(S.cubes + [DyadicCube(L, (0,) * d)], d, L)
    assert sparse_form(bigger, f1, f2) >= sparse_form(S, f1, f2)

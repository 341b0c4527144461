import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadic_sparse.campaign import make_input, trial_rng
from dyadic_sparse.czd import (body_cz_check, cancellation_check, cz_bounds, cz_decompose,
                               cz_decompose_body, mainiter_check, mainiter_constant,
                               mainitervec_check, offdiagonal_check, r_of_i, scale_split)
from dyadic_sparse.dyadic import DyadicCube, GridFunction, all_cubes, norms
from dyadic_sparse.shift import DyadicShift, random_shift
from dyadic_sparse.sparse import stopping_children

from conftest import spike

ROOT1 = DyadicCube.root(1)


def test_no_stopping_cubes_gives_good_only(rng):
    f = GridFunction.from_flat(rng.standard_normal(16), 1, 4)
    Q = DyadicCube(1, (1,))
    dec = cz_decompose(f, Q, [])
    assert np.array_equal(dec.good.values, f.restrict(Q).values)
    assert not dec.bad and not dec.exceptional_mask().any()


def test_constant_bad_parts_vanish():
    f = GridFunction.constant(1, 5, 3.0)
    dec = cz_decompose(f, ROOT1, [DyadicCube(2, (1,)), DyadicCube(3, (6,))])
    assert all(not b.values.any() for b in dec.bad.values())
    assert np.allclose(dec.good.values, 3.0)


def test_overlapping_cubes_rejected():
    f = GridFunction.constant(1, 4)
    with pytest.raises(ValueError):
        cz_decompose(f, ROOT1, [DyadicCube(1, (0,)), DyadicCube(2, (0,))])
    with pytest.raises(ValueError):
        cz_decompose(f, DyadicCube(1, (0,)), [DyadicCube(2, (3,))])


def test_spike_decomposition():
    f = spike(1, 12, 1.0, 0)
    cubes = stopping_children(f, f, ROOT1)
    dec = cz_decompose(f, ROOT1, cubes)
    b = cz_bounds(f, dec)
    assert b.ok()
    assert b.reconstruction == 0.0
    # the good part is bounded by 2^d lam <f>_Q
    assert norms(dec.good)[2] <= 2 * 256 * 2


def test_cz_bounds_random():
    for t in range(30):
        d, L = (1, 10) if t % 2 else (2, 5)
        f = make_input(trial_rng(0, t), d, L, 1, "mixed")
        Q = DyadicCube.root(d)
        dec = cz_decompose(f, Q, stopping_children(f, f, Q))
        assert cz_bounds(f, dec).ok()


def test_scale_split_and_r_of_i():
    cubes = [DyadicCube(k, (0,)) for k in range(7)]
    parts = scale_split(cubes, 3)
    assert [[Q.depth for Q in p] for p in parts] == [[0, 3, 6], [1, 4], [2, 5]]
    with pytest.raises(ValueError):
        scale_split(cubes, 0)
    I = DyadicCube(5, (7,))
    assert r_of_i(I, 0, 3) == DyadicCube(3, (1,))
    assert r_of_i(I, 1, 3) == DyadicCube(4, (3,))
    assert r_of_i(I, 2, 3) is None
    assert r_of_i(I, 0, 1) is None


def test_zero_shift_has_zero_residual():
    f = spike(1, 10, 1.0, 3)
    S = DyadicShift(1, 10, 1, 1, {})
    rep = mainiter_check(S, f, f, ROOT1)
    assert rep.lhs == 0.0 and rep.residual == 0.0 and rep.ok


def test_constant_inputs():
    f = GridFunction.constant(1, 8)
    S = random_shift(2, 2, 1, 8)
    rep = mainiter_check(S, f, f, ROOT1)
    assert rep.stopping == [] and rep.ok
    assert rep.residual <= mainiter_constant(1)


@pytest.mark.parametrize("rho", [1, 2, 3, 5])
def test_mainiter_random(rho):
    for t in range(6):
        f1 = make_input(trial_rng(1, rho, t), 1, 10, 1, "mixed")
        f2 = make_input(trial_rng(2, rho, t), 1, 10, 1, "spikes")
        S = random_shift(100 * rho + t, rho, 1, 10)
        rep = mainiter_check(S, f1, f2, ROOT1)
        assert rep.ok, rep.as_dict()
        assert rep.identity_error <= 1e-10


def test_cancellation_brute_force():
    """Every kernel cube at least rho levels above a stopping cube annihilates ``b_I``."""
    for t in range(10):
        f = make_input(trial_rng(4, t), 1, 9, 1, "spikes")
        S = random_shift(t, 1 + t % 3, 1, 9, density=0.8)
        dec = cz_decompose(f, ROOT1, stopping_children(f, f, ROOT1))
        g = make_input(trial_rng(5, t), 1, 9, 1, "mixed")
        assert cancellation_check(S, dec, g) <= 1e-12
        assert cancellation_check(S, dec, g, bad_first=True) <= 1e-12
        for I, b in dec.bad.items():
            for R in S.kernels:
                if R.strictly_contains(I) and I.depth - R.depth >= S.rho:
                    v = S.restrict([R]).form(g, b)
                    assert abs(v) <= 1e-12 * max(1.0, norms(b)[0] * norms(g)[2] * 2 ** (S.rho + 1))


def test_offdiagonal():
    for t in range(8):
        d, L = (1, 8) if t % 2 else (2, 4)
        f1 = make_input(trial_rng(6, t), d, L, 1, "mixed")
        f2 = make_input(trial_rng(7, t), d, L, 1, "mixed")
        rep = offdiagonal_check(random_shift(t, 1 + t % 3, d, L), f1, f2)
        assert rep.ok


def test_vector_n1_matches_scalar():
    for t in range(5):
        f1 = make_input(trial_rng(8, t), 1, 10, 1, "mixed")
        f2 = make_input(trial_rng(9, t), 1, 10, 1, "spikes")
        S = random_shift(t, 2, 1, 10)
        a = mainiter_check(S, f1, f2, ROOT1)
        b = mainitervec_check(S, f1, f2, ROOT1)
        assert a.stopping == b.stopping
        assert b.lhs == a.lhs
        assert b.residual == pytest.approx(a.residual, rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("n", [2, 3])
def test_mainitervec(n):
    for t in range(3):
        f1 = make_input(trial_rng(10, n, t), 1, 9, n, "mixed")
        f2 = make_input(trial_rng(11, n, t), 1, 9, n, "spikes")
        rep = mainitervec_check(random_shift(t, 1 + t, 1, 9), f1, f2, ROOT1)
        assert rep.ok, rep.as_dict()


def test_body_cz(rng):
    vals = np.tile([1.0, 0.5], (2048, 1)) + 0.1 * rng.standard_normal((2048, 2))
    vals[5] = [3e5, -1e5]
    f = GridFunction.from_flat(vals, 1, 11)
    dec = cz_decompose_body(f, ROOT1)
    assert dec.cubes
    rep = body_cz_check(f, dec)
    assert rep.ok() and rep.good_margin <= 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_inside_split_identity(seed, rho):
    rng = np.random.default_rng(seed)
    f1, f2 = make_input(rng, 1, 8, 1, "mixed"), make_input(rng, 1, 8, 1, "mixed")
    rep = mainiter_check(random_shift(seed, rho, 1, 8), f1, f2, ROOT1)
    assert rep.identity_error <= 1e-10 and rep.ok

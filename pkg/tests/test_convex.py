import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadic_sparse.campaign import make_input, random_zonotope, trial_rng
from dyadic_sparse.convex import (Zonotope, alternating_ascent, body_average, contains,
                                  default_dilation, direction_bank, facet_normals, john_ellipsoid,
                                  minkowski_product, minkowski_product_full, sandwich_margins,
                                  vector_stopping, vector_stopping_report, vertices)
from dyadic_sparse.dyadic import DyadicCube, GridFunction, all_cubes
from dyadic_sparse.sparse import stopping_children

E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])


def square():
    return body_average(GridFunction.from_flat([E1, E2], 1, 1), DyadicCube.root(1))


def test_body_average_examples():
    f = GridFunction.constant(1, 3, [2.0, -1.0])
    K = body_average(f, DyadicCube.root(1))
    assert K.p == 1 and np.allclose(np.abs(K.generators), [[2.0, 1.0]])
    K = square()
    assert sorted(map(tuple, np.abs(K.generators))) == [(0.0, 0.5), (0.5, 0.0)]
    pts, _ = vertices(K)
    assert sorted(map(tuple, np.abs(pts))) == [(0.5, 0.5)] * 4


def test_support_examples():
    seg = Zonotope.segment(E1)
    assert seg.support(E1) == 1.0 and seg.support(E2) == 0.0
    u = np.array([1.0, 1.0]) / np.sqrt(2)
    assert square().support(u) == pytest.approx(1 / np.sqrt(2), rel=1e-15)


def test_support_is_cellwise_formula(rng):
    for _ in range(200):
        n, L = int(rng.integers(1, 4)), int(rng.integers(1, 6))
        f = GridFunction.from_flat(rng.standard_normal((1 << L, n)), 1, L)
        Q = DyadicCube(int(rng.integers(0, L + 1)), (0,))
        Q = DyadicCube(Q.depth, (int(rng.integers(0, 1 << Q.depth)),))
        u = rng.standard_normal(n)
        direct = np.abs(f.cube_values(Q) @ u).sum() * f.cell_measure / Q.measure
        assert body_average(f, Q).support(u) == pytest.approx(direct, rel=1e-12)


def test_radius_bounded_by_scalar_average(rng):
    f = GridFunction.from_flat(rng.standard_normal((32, 2)), 1, 5)
    K = body_average(f, DyadicCube.root(1))
    mean_abs = np.linalg.norm(f.flat(), axis=1).mean()
    assert K.support(direction_bank(2)).max() <= mean_abs * (1 + 1e-12)
    assert K.radius() <= mean_abs * (1 + 1e-12)


def test_gl_equivariance(rng):
    f = GridFunction.from_flat(rng.standard_normal((16, 2)), 1, 4)
    M = rng.standard_normal((2, 2)) + 2 * np.eye(2)
    Q = DyadicCube(1, (1,))
    K, MK = body_average(f, Q), body_average(f.apply_matrix(M), Q)
    U = direction_bank(2, 64)
    assert np.allclose(MK.support(U), K.support(U @ M), rtol=1e-12)


def test_product_examples():
    seg1, seg2 = Zonotope.segment(E1), Zonotope.segment(E2)
    assert minkowski_product(seg1, seg1) == 1.0
    assert minkowski_product(seg1, seg2) == 0.0
    K = Zonotope.from_generators([E1, E2])
    H = Zonotope.segment(E1 + E2)
    assert minkowski_product(K, H) == pytest.approx(2.0)


def brute_product(K, H):
    best = 0.0
    for s in itertools.product((-1, 1), repeat=K.p):
        best = max(best, H.support(np.asarray(s) @ K.generators))
    return best


def test_product_oracles_agree(rng):
    for t in range(60):
        n = int(rng.integers(2, 4))
        K, H = (random_zonotope(rng, n, int(rng.integers(1, 9))) for _ in range(2))
        exact = brute_product(K, H)
        assert minkowski_product(K, H) == pytest.approx(exact, rel=1e-12)
        assert minkowski_product(H, K) == pytest.approx(exact, rel=1e-12)
        assert alternating_ascent(K, H).value == pytest.approx(exact, rel=1e-9)
        M = rng.standard_normal((n, n)) + 2 * np.eye(n)
        assert minkowski_product(K.transform(M), H) == pytest.approx(
            minkowski_product(K, H.transform(M.T)), rel=1e-9)


def test_product_ascent_upper_bound(rng):
    K, H = random_zonotope(rng, 3, 30), random_zonotope(rng, 3, 30)
    r = minkowski_product_full(K, H, method="ascent")
    assert r.lower <= minkowski_product(K, H, method="vertex") * (1 + 1e-12) <= r.upper
    with pytest.raises(ValueError):
        minkowski_product(K, Zonotope.segment(E1))


def test_john_examples():
    E = john_ellipsoid(Zonotope.from_generators([2 * E1, 3 * E2]))
    assert np.allclose(E.shape, np.diag([2.0, 3.0]), atol=1e-7)
    E = john_ellipsoid(Zonotope.from_generators([E1 + E2, E1 - E2]))
    assert np.allclose(E.shape, np.sqrt(2) * np.eye(2), atol=1e-7)
    assert john_ellipsoid(Zonotope.segment(E1 + E2)).degenerate
    E = john_ellipsoid(Zonotope.from_generators([[3.0]], 1))
    assert E.shape[0, 0] == pytest.approx(3.0)


def test_john_sandwich_random(rng):
    for t in range(40):
        n = int(rng.integers(2, 4))
        K = random_zonotope(rng, n, int(rng.integers(n, 25)), float(rng.uniform(0, 2)))
        assert sandwich_margins(K, john_ellipsoid(K)).ok(1e-6)


def test_contains_examples():
    K = square()
    assert contains(K, K).verdict
    c = contains(Zonotope.segment(E2), Zonotope.segment(E1))
    assert not c.verdict and abs(c.direction @ E1) > 0.99
    E = john_ellipsoid(K)
    D = Zonotope.from_generators(direction_bank(2, 64))
    disc = D.transform(E.shape / D.support(direction_bank(2)).max())
    assert contains(K, disc, c=0.99).verdict
    assert contains(disc, K, c=1 / np.sqrt(2) * 0.99).verdict


def test_vector_stopping_constant_is_empty():
    f = GridFunction.constant(1, 8, [1.0, 2.0])
    assert vector_stopping(f, DyadicCube.root(1)) == []
    with pytest.raises(ValueError):
        vector_stopping(f, DyadicCube.root(1), A=4.0)


def test_vector_stopping_scalar_matches_scalar_rule(rng):
    for t in range(20):
        f = make_input(trial_rng(7, t), 1, 10, 1, "spikes")
        Q = DyadicCube.root(1)
        assert vector_stopping(f, Q) == stopping_children(f, f, Q, default_dilation(1))


def brute_stopping(f, Q, A):
    """Scan every strict subcube against the facet normals of ``A <f>_Q``."""
    K = body_average(f, Q)
    normals, _ = facet_normals(K)
    thr = A * K.support(normals) * (1 + 1e-12)
    bad = [I for I in all_cubes(f.d, f.L) if Q.strictly_contains(I)
           and np.any(body_average(f, I).support(normals) > thr)]
    return sorted(I for I in bad if not any(J.strictly_contains(I) for J in bad))


@pytest.mark.parametrize("d,L", [(1, 11), (2, 6)])
def test_vector_stopping_spike_brute_force(d, L, rng):
    vals = np.tile(rng.standard_normal(2), (1 << (d * L), 1)) + 0.1 * rng.standard_normal((1 << (d * L), 2))
    vals[3] = [3e5, -1e5]
    f = GridFunction.from_flat(vals, d, L)
    Q, A = DyadicCube.root(d), default_dilation(2)
    got = vector_stopping(f, Q, A)
    assert got and sorted(got) == brute_stopping(f, Q, A)
    rep = vector_stopping_report(f, Q, A)
    assert rep.containment_ok and rep.packing_ok
    assert sum(I.measure for I in got) < 4 / A


def test_vector_stopping_is_gl_invariant(rng):
    for t in range(10):
        f = make_input(trial_rng(3, t), 1, 10, 2, "spikes")
        while True:
            M = rng.standard_normal((2, 2))
            if np.linalg.cond(M) < 1e3:
                break
        Q = DyadicCube.root(1)
        assert vector_stopping(f, Q) == vector_stopping(f.apply_matrix(M), Q)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([2, 3]))
def test_stopping_properties_hold(seed, n):
    f = make_input(np.random.default_rng(seed), 1, 9, n, "mixed")
    rep = vector_stopping_report(f, DyadicCube.root(1))
    assert rep.containment_ok and rep.packing_ok

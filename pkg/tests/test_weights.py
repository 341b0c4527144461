import numpy as np
import pytest

from dyadic_sparse.campaign import make_input, trial_rng
from dyadic_sparse.dyadic import DyadicCube, GridFunction
from dyadic_sparse.shift import random_shift, subshift_norm_oracle
from dyadic_sparse.sparse import build_sparse_collection_body, random_sparse_collection
from dyadic_sparse.weights import (MatrixWeight, a2_characteristic, carleson_packing,
                                   embedding_check, loglog_slope, weight_family,
                                   weighted_norm, weighted_operator_norm, weighted_sweep)


def test_validation():
    with pytest.raises(ValueError):
        MatrixWeight(np.zeros((4, 2, 2)), 1)
    with pytest.raises(ValueError):
        MatrixWeight(np.ones((4, 2)), 1)
    with pytest.raises(ValueError):
        weight_family("nope", 0.1)
    with pytest.raises(ValueError):
        weight_family("rotating", 1.0)
    with pytest.raises(ValueError):
        weight_family("rotating", 0.2, n=3)
    with pytest.raises(ValueError):
        weight_family("block-random", 9.0)


def test_constant_weight_has_characteristic_one(rng):
    M = rng.standard_normal((2, 2))
    W = MatrixWeight.constant(1, 5, M @ M.T + np.eye(2))
    assert a2_characteristic(W).value == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("t", [2.0, 10.0, 1e3])
def test_two_cell_weight(t):
    W = MatrixWeight(np.array([t, 1 / t]).reshape(2, 1, 1), 1)
    ch = a2_characteristic(W)
    assert ch.value == pytest.approx(((t + 1 / t) / 2) ** 2, rel=1e-12)
    assert ch.cube == DyadicCube.root(1)


def test_characteristic_symmetry_and_scaling():
    W = weight_family("rotating", 0.6, seed=3, L=6)
    c = a2_characteristic(W).value
    assert a2_characteristic(W.inverse()).value == pytest.approx(c, rel=1e-9)
    assert a2_characteristic(W.scaled(7.0)).value == pytest.approx(c, rel=1e-12)


def test_weighted_norm(rng):
    f = GridFunction.from_flat(rng.standard_normal((32, 2)), 1, 5)
    assert weighted_norm(f, MatrixWeight.identity(1, 5, 2)) == pytest.approx(
        np.sqrt((f.flat() ** 2).sum() / 32), rel=1e-14)
    W = MatrixWeight.constant(1, 5, np.diag([1.0, 1e-10]))
    g = GridFunction.from_flat(np.tile([0.0, 1.0], (32, 1)), 1, 5)
    assert weighted_norm(g, W) == pytest.approx(1e-5)


def test_operator_norm_matches_dense(rng):
    S = random_shift(1, 2, 1, 5)
    W = weight_family("rotating", 0.5, seed=1, L=5)
    T = np.kron(S.assemble(5), np.eye(2))
    Wh = np.zeros((64, 64))
    Wm = np.zeros((64, 64))
    for c in range(32):
        ev, V = np.linalg.eigh(W.values[c])
        Wh[2 * c:2 * c + 2, 2 * c:2 * c + 2] = (V * np.sqrt(ev)) @ V.T
        Wm[2 * c:2 * c + 2, 2 * c:2 * c + 2] = (V / np.sqrt(ev)) @ V.T
    exact = np.linalg.norm(Wh @ T @ Wm, 2)
    assert weighted_operator_norm(S, W).value == pytest.approx(exact, rel=1e-7)


def test_constant_weight_reproduces_unweighted_norm(rng):
    S = random_shift(4, 1, 1, 6)
    M = rng.standard_normal((2, 2))
    W = MatrixWeight.constant(1, 6, M @ M.T + 0.1 * np.eye(2))
    assert weighted_operator_norm(S, W, tol=1e-12).value == pytest.approx(
        subshift_norm_oracle(S, tol=1e-12).value, rel=1e-9)
    with pytest.raises(ValueError):
        weighted_operator_norm(random_shift(0, 1, 1, 13), MatrixWeight.identity(1, 13, 2))


def test_rotating_characteristic_grows():
    chars = [a2_characteristic(weight_family("rotating", a, seed=0, L=9)).value
             for a in np.linspace(0, 0.9, 10)]
    assert all(b > a for a, b in zip(chars, chars[1:]))
    assert chars[-1] / chars[0] >= 100


def test_other_families():
    W = weight_family("scalar-power", 0.5, L=6, n=3)
    assert W.n == 3 and np.allclose(W.values[..., 0, 1], 0)
    W = weight_family("block-random", 2.0, seed=5, L=6)
    assert a2_characteristic(W).value >= 1
    assert a2_characteristic(weight_family("block-random", 0.0, L=6)).value == pytest.approx(1.0)


def test_packing_collapses_to_measure():
    S = random_sparse_collection(2, 1, 7)
    W = weight_family("rotating", 0.7, seed=2, L=7)
    for j in (1, 2):
        rep = carleson_packing(S, W, j)
        assert rep.collapse_error <= 1e-10
        assert rep.value == pytest.approx(rep.measure_ratio, rel=1e-9)
        assert rep.value <= 2 + 1e-12


def test_embedding_check():
    f1 = make_input(trial_rng(0, 0), 1, 7, 2, "mixed")
    f2 = make_input(trial_rng(0, 1), 1, 7, 2, "mixed")
    W = weight_family("rotating", 0.5, seed=0, L=7)
    S = build_sparse_collection_body(W.inverse().multiply(f1), W.multiply(f2))
    rep = embedding_check(S, W, f1, f2)
    assert rep.ok
    assert all(r <= 16 for r in rep.embedding_ratio)


def test_sweep():
    S = random_shift(3, 1, 1, 7)
    rep = weighted_sweep(S, "rotating", np.linspace(0, 0.9, 6), seed=3)
    assert rep.ok and rep.converged and len(rep.rows) == 6
    assert rep.rows[0].characteristic == pytest.approx(1.0)
    assert loglog_slope([1, 10, 100], [2, 20, 200]) == pytest.approx(1.0)
    assert np.isnan(loglog_slope([1.0], [1.0]))

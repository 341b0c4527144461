import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadic_sparse.dyadic import DyadicCube, GridFunction, inner_product
from dyadic_sparse.shift import (A2Certificate, DyadicShift, ShiftKernel, component_form,
                                 dense_subshift_norm, exact_subshift_sup, normalize_a2,
                                 random_shift, shift_form, subshift_norm_oracle)


def haar_shift(L=4):
    """Single Haar multiplier on the root: (m1, m2) = (1, 1), block = h h^T."""
    block = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return DyadicShift(1, L, 1, 1, {DyadicCube.root(1): block})


def test_kernel_validation():
    Q = DyadicCube(1, (0,))
    with pytest.raises(ValueError):
        ShiftKernel(Q, 1, 1, np.zeros((2, 3)))
    S = DyadicShift(1, 3, 0, 0, {Q: np.array([[3.0]])})
    with pytest.raises(ValueError):
        S.validate()
    with pytest.raises(ValueError):
        DyadicShift(1, 2, 2, 2, {Q: np.zeros((4, 4))})


def test_haar_form_by_hand():
    S = haar_shift()
    f = GridFunction.from_flat([1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0], 1, 4)
    # int over halves: (1/4, 0) -> (1/4)^2
    assert S.form(f, f) == pytest.approx(1 / 16)
    assert S.rho == 1 and S.is_cancellative()


def test_form_matches_operator_and_matrix(rng):
    S = random_shift(3, 2, 1, 6)
    f1 = GridFunction.from_flat(rng.standard_normal(64), 1, 6)
    f2 = GridFunction.from_flat(rng.standard_normal(64), 1, 6)
    Tf = S.apply_function(f1)
    assert S.form(f1, f2) == pytest.approx(inner_product(Tf, f2), rel=1e-12, abs=1e-14)
    Ts = S.apply_function(f2, adjoint=True)
    assert inner_product(f1, Ts) == pytest.approx(inner_product(Tf, f2), rel=1e-12, abs=1e-14)
    M = S.assemble(6)
    u1, u2 = f1.flat()[:, 0] * 2.0 ** -3, f2.flat()[:, 0] * 2.0 ** -3
    assert u2 @ M @ u1 == pytest.approx(S.form(f1, f2), rel=1e-12, abs=1e-14)
    total = sum(S.per_cube_forms(f1, f2).values())
    assert total == pytest.approx(S.form(f1, f2), rel=1e-12, abs=1e-14)
    k = next(iter(S.kernels.values()))
    assert component_form(k, f1, f2) == pytest.approx(S.per_cube_forms(f1, f2)[k.cube])


def test_vector_form_is_sum_of_coordinates(rng):
    S = random_shift(4, 2, 2, 3)
    f1 = GridFunction.from_flat(rng.standard_normal((64, 2)), 2, 3)
    f2 = GridFunction.from_flat(rng.standard_normal((64, 2)), 2, 3)
    parts = sum(S.form(f1.component(j), f2.component(j)) for j in range(2))
    assert S.form(f1, f2) == pytest.approx(parts, rel=1e-12)


def test_restrict_and_shift_form(rng):
    S = random_shift(5, 1, 1, 5)
    f = GridFunction.from_flat(rng.standard_normal(32), 1, 5)
    top = [Q for Q in S.kernels if Q.depth <= 1]
    rest = [Q for Q in S.kernels if Q.depth > 1]
    assert shift_form(S, f, f, top) + shift_form(S, f, f, rest) == pytest.approx(S.form(f, f))
    assert shift_form(S, f, f, lambda Q: True) == pytest.approx(S.form(f, f))
    with pytest.raises(ValueError):
        S.restrict([DyadicCube(5, (0,))])


def test_norm_oracle_matches_dense():
    S = random_shift(7, 2, 1, 6)
    assert subshift_norm_oracle(S, tol=1e-12).value == pytest.approx(dense_subshift_norm(S), rel=1e-8)


def test_exact_small_certificate():
    S = random_shift(11, 1, 1, 4, density=0.6, strategy="exact-small", max_kernels=6)
    sup, all_norms = exact_subshift_sup(S)
    assert sup <= 1 + 1e-9
    assert len(all_norms) == 1 << len(S)
    assert S.certificate.bound == pytest.approx(sup, rel=1e-12)


@pytest.mark.parametrize("strategy", ["scale-count", "haar-bessel"])
def test_certificates_dominate_exact(strategy):
    for seed in range(5):
        raw = random_shift(seed, 2, 1, 4, density=0.5, cancellative=True, strategy="exact-small",
                           max_kernels=6)
        raw = raw.scaled(raw.certificate.factor)
        exact, _ = exact_subshift_sup(raw)
        cert = normalize_a2(raw, strategy).certificate
        assert cert.bound * cert.factor >= exact * (1 - 1e-12)


def test_haar_bessel_needs_cancellation():
    S = DyadicShift(1, 3, 0, 0, {DyadicCube.root(1): np.array([[0.5]])})
    with pytest.raises(ValueError):
        normalize_a2(S, "haar-bessel")
    with pytest.raises(ValueError):
        normalize_a2(S, "nope")


def test_random_shift_is_deterministic_and_bounded():
    a, b = random_shift(9, 3, 2, 4), random_shift(9, 3, 2, 4)
    assert list(a.kernels) == list(b.kernels)
    assert all(np.array_equal(a.kernels[Q].block, b.kernels[Q].block) for Q in a.kernels)
    a.validate()
    assert a.rho == 3 and a.effective_depth <= 4
    with pytest.raises(ValueError):
        random_shift(0, 5, 1, 4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3))
def test_normalized_shifts_have_subshift_norm_at_most_one(seed, rho):
    S = random_shift(seed, rho, 1, 5, density=0.4)
    sub = S.restrict(lambda Q: (Q.depth + sum(Q.index)) % 2 == 0)
    assert dense_subshift_norm(sub) <= S.certificate.bound * (1 + 1e-9) + 1e-12
    assert S.certificate.bound <= 1 + 1e-12


def test_empty_shift():
    S = DyadicShift(1, 3, 1, 1, {})
    f = GridFunction.constant(1, 3)
    assert S.form(f, f) == 0.0 and len(S) == 0
    assert subshift_norm_oracle(S).value == 0.0
    assert normalize_a2(S).certificate == A2Certificate("scale-count", 1.0, 0.0)

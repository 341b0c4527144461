"""Matrix A2 weights, weighted norms of shift extensions and the Carleson side of the
weighted estimate.

A weight stores one symmetric positive-definite ``n x n`` matrix per finest cell.  Cube
averages are exact cell sums.  With ``V1 = W^{-1}`` and ``V2 = W``, the weighted operator
norm of ``T (x) Id`` is the spectral norm of ``W^{1/2} T W^{-1/2}`` (block-diagonal cell
multipliers).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .convex import body_average, minkowski_product_full
from .dyadic import DyadicCube, GridFunction, check_grid, level_reduce
from .linalg import NormResult, power_norm, psd_power
from .shift import DyadicShift

logger = logging.getLogger(__name__)

SPD_FLOOR = 1e-12
MAX_OPERATOR_SIZE = 8192
FAMILIES = ("scalar-power", "rotating", "block-random")


@dataclass(frozen=True)
class MatrixWeight:
    values: np.ndarray   # (2**L,)*d + (n, n)
    d: int

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != self.d + 2 or v.shape[-1] != v.shape[-2]:
            raise ValueError(f"expected shape (2**L,)*{self.d} + (n, n), got {v.shape}")
        v = 0.5 * (v + np.swapaxes(v, -1, -2))
        w = np.linalg.eigvalsh(v)
        tr = np.trace(v, axis1=-2, axis2=-1)
        if np.any(w[..., 0] <= SPD_FLOOR * tr):
            raise ValueError("weight is not positive definite on every cell")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, d: int, L: int, M) -> "MatrixWeight":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(np.broadcast_to(M, (1 << L,) * d + M.shape).copy(), d)

    @classmethod
    def identity(cls, d: int, L: int, n: int) -> "MatrixWeight":
        return cls.constant(d, L, np.eye(n))

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    @property
    def L(self) -> int:
        return int(np.log2(self.values.shape[0]))

    def power(self, p: float) -> "MatrixWeight":
        return MatrixWeight(psd_power(self.values, p, SPD_FLOOR), self.d)

    def inverse(self) -> "MatrixWeight":
        return MatrixWeight(np.linalg.inv(self.values), self.d)

    def scaled(self, c: float) -> "MatrixWeight":
        return MatrixWeight(self.values * c, self.d)

    def averages(self, depth: int) -> np.ndarray:
        """``<W>_Q`` for every depth-``depth`` cube, shape ``(2**depth,)*d + (n, n)``."""
        return level_reduce(self.values, self.d, depth) / float(1 << (self.d * (self.L - depth)))

    def average(self, Q: DyadicCube) -> np.ndarray:
        return self.averages(Q.depth)[Q.index]

    def multiply(self, f: GridFunction) -> GridFunction:
        """Pointwise ``x -> W(x) f(x)``."""
        if f.n != self.n or f.L != self.L:
            raise ValueError("weight and function live on different grids")
        return GridFunction(np.einsum("...ij,...j->...i", self.values, f.values), f.d)


@dataclass(frozen=True)
class Characteristic:
    value: float
    cube: DyadicCube
    per_depth: tuple


def a2_characteristic(W: MatrixWeight) -> Characteristic:
    """``sup_Q ||<W>_Q^{1/2} <W^{-1}>_Q^{1/2}||^2`` over all dyadic cubes.

    The squared norm is the top eigenvalue of ``<W>^{1/2} <W^{-1}> <W>^{1/2}``.
    """
    Winv = W.inverse()
    best, arg, per = -np.inf, None, []
    for depth in range(W.L + 1):
        A, B = W.averages(depth), Winv.averages(depth)
        try:
            Ah = psd_power(A, 0.5, SPD_FLOOR)
        except ValueError as exc:
            raise ValueError(f"near-singular average at depth {depth}") from exc
        M = Ah @ B @ Ah
        top = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))[..., -1]
        i = np.unravel_index(int(np.argmax(top)), top.shape)
        per.append(float(top[i]))
        if top[i] > best:
            best, arg = float(top[i]), DyadicCube(depth, tuple(int(t) for t in i))
    return Characteristic(best, arg, tuple(per))


def weighted_norm(f: GridFunction, W: MatrixWeight) -> float:
    """``(int |W^{1/2} f|^2)^{1/2}`` as an exact cell sum."""
    if f.n != W.n or f.L != W.L:
        raise ValueError("weight and function live on different grids")
    q = np.einsum("...i,...ij,...j->...", f.values, W.values, f.values)
    return float(np.sqrt(max(q.sum(), 0.0) * f.cell_measure))


def weighted_operator_norm(S: DyadicShift, W: MatrixWeight, tol: float = 1e-8,
                           seed: int = 0, max_iter: int = 20000) -> NormResult:
    """``||T (x) Id||`` on ``L^2(W)``: the spectral norm of ``W^{1/2} T W^{-1/2}``."""
    if S.d != W.d or S.L > W.L:
        raise ValueError("shift and weight live on different grids")
    n, d, L = W.n, W.d, W.L
    size = n << (d * L)
    if size > MAX_OPERATOR_SIZE:
        raise ValueError(f"operator size {size} exceeds {MAX_OPERATOR_SIZE}")
    Wh = psd_power(W.values, 0.5, SPD_FLOOR)
    Wmh = psd_power(W.values, -0.5, SPD_FLOOR)
    shape = (1 << L,) * d + (n,)

    def mul(M, x):
        return np.einsum("...ij,...j->...i", M, x)

    def apply(x):
        return mul(Wh, S.apply(mul(Wmh, x)))

    def adjoint(x):
        return mul(Wmh, S.apply(mul(Wh, x), adjoint=True))

    def dense():
        N = 1 << (d * L)
        T = np.kron(S.assemble(L), np.eye(n))
        Dh = np.zeros((size, size))
        Dm = np.zeros((size, size))
        for c in range(N):
            Dh[c * n:(c + 1) * n, c * n:(c + 1) * n] = Wh.reshape(N, n, n)[c]
            Dm[c * n:(c + 1) * n, c * n:(c + 1) * n] = Wmh.reshape(N, n, n)[c]
        return Dh @ T @ Dm

    return power_norm(apply, adjoint, shape, tol=tol, max_iter=max_iter, seed=seed, dense=dense)


# ---------------------------------------------------------------------------
# Carleson side
# ---------------------------------------------------------------------------

def _cubes(S) -> list[DyadicCube]:
    return list(S.cubes) if hasattr(S, "cubes") else sorted(S)


def _weight_pair(W: MatrixWeight, j: int) -> MatrixWeight:
    if j not in (1, 2):
        raise ValueError("j must be 1 (W^{-1}) or 2 (W)")
    return W.inverse() if j == 1 else W


@dataclass(frozen=True)
class PackingReport:
    value: float           # max_R |R|^{-1} sum_{Q in S, Q ⊂ R} ||<V>^{1/2} A_Q <V>^{1/2}||
    measure_ratio: float   # max_R |R|^{-1} sum_{Q in S, Q ⊂ R} |Q|
    collapse_error: float  # max_Q | ||<V>^{1/2} A_Q <V>^{1/2}|| - |Q| | / |Q|
    worst: DyadicCube | None


def carleson_packing(S, W: MatrixWeight, j: int) -> PackingReport:
    """Packing of ``A_Q = |Q| <V_j>_Q^{-1}`` over ``S``; it collapses to pure measure packing."""
    V = _weight_pair(W, j)
    cubes = _cubes(S)
    members = set(cubes)
    terms, err = {}, 0.0
    for Q in cubes:
        avg = V.average(Q)
        h = psd_power(avg, 0.5, SPD_FLOOR)
        t = float(np.linalg.norm(h @ (Q.measure * np.linalg.inv(avg)) @ h, 2))
        terms[Q] = t
        err = max(err, abs(t - Q.measure) / Q.measure)
    acc = {Q: 0.0 for Q in cubes}
    meas = {Q: 0.0 for Q in cubes}
    for Q in cubes:
        for k in range(Q.depth + 1):
            R = Q.ancestor(k)
            if R in members:
                acc[R] += terms[Q]
                meas[R] += Q.measure
    if not cubes:
        return PackingReport(0.0, 0.0, 0.0, None)
    worst = max(cubes, key=lambda R: (acc[R] / R.measure, R))
    return PackingReport(acc[worst] / worst.measure, max(meas[R] / R.measure for R in cubes),
                         err, worst)


@dataclass(frozen=True)
class EmbeddingReport:
    sparse_form: float        # sum |Q| <V1 f1>_Q <V2 f2>_Q
    extremizer_error: float   # max_Q |F1Q . F2Q - <V1f1>_Q <V2f2>_Q| / scale
    reduction_rhs: float      # [W]^{1/2} prod_j (sum |Q| |<V_j>^{-1/2} F_jQ|^2)^{1/2}
    embedding: tuple          # sum_Q (A_jQ F_jQ).F_jQ for j = 1, 2
    embedding_ratio: tuple    # embedding_j / ([W] ||f_j||^2_{L^2(V_j)})
    characteristic: float

    @property
    def ok(self) -> bool:
        return self.extremizer_error <= 1e-9 and self.sparse_form <= self.reduction_rhs * (1 + 1e-9)


def _extremizer(g1: GridFunction, g2: GridFunction, Q: DyadicCube) -> tuple[float, np.ndarray, np.ndarray]:
    """Body product of ``<g1>_Q, <g2>_Q`` and the averages ``F_jQ`` of an extremizing
    pair ``phi_jQ``: cell signs against the optimal point of the other body."""
    K, H = body_average(g1, Q), body_average(g2, Q)
    res = minkowski_product_full(K, H)
    if H.p == 0 or K.p == 0:
        return 0.0, np.zeros(g1.n), np.zeros(g2.n)
    h = res.signs_h @ H.generators
    v1, v2 = g1.cube_values(Q), g2.cube_values(Q)
    F1 = (np.where(v1 @ h >= 0, 1.0, -1.0) @ v1) / len(v1)
    F2 = (np.where(v2 @ F1 >= 0, 1.0, -1.0) @ v2) / len(v2)
    return res.value, F1, F2


def embedding_check(S, W: MatrixWeight, f1: GridFunction, f2: GridFunction) -> EmbeddingReport:
    """Weighted sparse form, the extremizer identity and the Carleson-embedding sums for
    ``V1 = W^{-1}``, ``V2 = W``."""
    V1, V2 = W.inverse(), W
    g1, g2 = V1.multiply(f1), V2.multiply(f2)
    char = a2_characteristic(W).value
    form, err, emb = 0.0, 0.0, [0.0, 0.0]
    for Q in _cubes(S):
        val, F1, F2 = _extremizer(g1, g2, Q)
        form += Q.measure * val
        err = max(err, abs(float(F1 @ F2) - val) / max(val, 1e-300))
        for j, (V, F) in enumerate(((V1, F1), (V2, F2))):
            emb[j] += Q.measure * float(F @ np.linalg.solve(V.average(Q), F))
    n1 = weighted_norm(f1, V1) ** 2
    n2 = weighted_norm(f2, V2) ** 2
    rhs = np.sqrt(char) * np.sqrt(emb[0] * emb[1])
    ratios = tuple(e / (char * nn) if nn > 0 else 0.0 for e, nn in zip(emb, (n1, n2)))
    return EmbeddingReport(form, err, float(rhs), tuple(emb), ratios, char)


# ---------------------------------------------------------------------------
# families and sweeps
# ---------------------------------------------------------------------------

def _centres(d: int, L: int) -> np.ndarray:
    c = (np.arange(1 << L) + 0.5) / (1 << L)
    return np.stack(np.meshgrid(*([c] * d), indexing="ij"), axis=-1)


def _power_profile(d: int, L: int, a: float) -> np.ndarray:
    """``u(x) = (|x - x0| + 2^{-L})^{-a}`` with ``x0`` the centre of the unit cube, a
    boundary point of the depth-1 cells."""
    r = np.linalg.norm(_centres(d, L) - 0.5, axis=-1)
    return (r + 2.0 ** -L) ** (-a)


def weight_family(kind: str, param: float, seed: int = 0, d: int = 1, L: int = 8,
                  n: int = 2) -> MatrixWeight:
    """Experiment weights.

    ``scalar-power``: ``u(x) Id`` with exponent ``a = param`` in ``[0, 1)``.
    ``rotating`` (``n = 2``): ``R_theta diag(u, 1/u) R_theta^T``; ``theta`` alternates by a
    right angle between neighbouring finest cells on top of a seeded offset, so averages
    over any cube mix both eigendirections.
    ``block-random``: ``exp(param H_B)`` with ``H_B`` a seeded symmetric Gaussian matrix per
    depth-``min(L, 3)`` block, ``param`` in ``[0, 8]``.
    """
    check_grid(d, L)
    if kind not in FAMILIES:
        raise ValueError(f"unknown family {kind!r}; choose from {FAMILIES}")
    rng = np.random.default_rng(seed)
    if kind in ("scalar-power", "rotating"):
        if not 0.0 <= param < 1.0:
            raise ValueError("exponent must lie in [0, 1)")
        u = _power_profile(d, L, param)
        if kind == "scalar-power":
            return MatrixWeight(u[..., None, None] * np.eye(n), d)
        if n != 2:
            raise ValueError("the rotating family is defined for n = 2")
        idx = np.indices((1 << L,) * d).sum(axis=0)
        theta = rng.uniform(0, np.pi) + 0.5 * np.pi * (idx % 2)
        c, s = np.cos(theta), np.sin(theta)
        R = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
        D = np.zeros(u.shape + (2, 2))
        D[..., 0, 0], D[..., 1, 1] = u, 1.0 / u
        return MatrixWeight(R @ D @ np.swapaxes(R, -1, -2), d)
    if not 0.0 <= param <= 8.0:
        raise ValueError("block-random scale must lie in [0, 8]")
    depth = min(L, 3)
    G = rng.standard_normal((1 << depth,) * d + (n, n))
    H = 0.5 * (G + np.swapaxes(G, -1, -2))
    w, V = np.linalg.eigh(H)
    E = (V * np.exp(param * w)[..., None, :]) @ np.swapaxes(V, -1, -2)
    return MatrixWeight(np.ascontiguousarray(_repeat(E, d, L - depth)), d)


def _repeat(arr: np.ndarray, d: int, k: int) -> np.ndarray:
    for ax in range(d):
        arr = np.repeat(arr, 1 << k, axis=ax)
    return arr


@dataclass
class SweepRow:
    param: float
    characteristic: float
    norm: float
    ratio: float
    slope: float   # log-log slope of norm vs characteristic over the rows so far


@dataclass
class SweepReport:
    family: str
    rows: list = field(default_factory=list)
    slope: float = float("nan")
    max_ratio: float = 0.0
    envelope: float = float("inf")
    slope_limit: float = 1.6
    converged: bool = True

    @property
    def ok(self) -> bool:
        slope_ok = not np.isfinite(self.slope) or self.slope <= self.slope_limit
        return self.max_ratio <= self.envelope and slope_ok and self.converged


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` on ``log x``; ``nan`` with fewer than two distinct ``x``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    keep = (x > 0) & (y > 0)
    x, y = np.log(x[keep]), np.log(y[keep])
    if len(x) < 2 or np.ptp(x) < 1e-9:
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


def weighted_sweep(S: DyadicShift, family: str, params, seed: int = 0, n: int = 2,
                   envelope: float = float("inf"), slope_limit: float = 1.6,
                   tol: float = 1e-8) -> SweepReport:
    """Record ``([W], ||T (x) Id||_{L^2(W)}, ratio = norm / [W]^{3/2})`` along a family."""
    rep = SweepReport(family, envelope=envelope, slope_limit=slope_limit)
    chars, nrm = [], []
    for a in params:
        W = weight_family(family, float(a), seed, S.d, S.L, n)
        c = a2_characteristic(W).value
        res = weighted_operator_norm(S, W, tol=tol, seed=seed)
        rep.converged &= res.converged
        chars.append(c)
        nrm.append(res.value)
        rep.rows.append(SweepRow(float(a), c, res.value, res.value / c ** 1.5, loglog_slope(chars, nrm)))
    rep.slope = loglog_slope(chars, nrm)
    rep.max_ratio = max((r.ratio for r in rep.rows), default=0.0)
    return rep

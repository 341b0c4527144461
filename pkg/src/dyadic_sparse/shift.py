"""Dyadic shifts: kernel blocks, bilinear forms, subshift norms and A2 normalization.

A kernel ``s_Q`` is stored as a constant block indexed by the relative-depth ``m1``
subcubes ``R`` and relative-depth ``m2`` subcubes ``S`` of ``Q``::

    S_Q(f1, f2) = sum_{R,S} block[R, S] * (int_R f1) * (int_S f2)

The associated operator ``T`` satisfies ``<T f1, f2> = S(f1, f2)``; it only sees
integrals over cubes of depth at most ``max(Q.depth) + max(m1, m2)`` and returns
functions constant on such cubes, so its norm can be computed on that coarser grid.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .dyadic import (DyadicCube, GridFunction, cubes_at_depth, gather_subcubes, level_reduce,
                     scatter_subcubes, upsample)
from .linalg import NormResult, dense_norm, power_norm

logger = logging.getLogger(__name__)

STRATEGIES = ("exact-small", "scale-count", "haar-bessel")
EXACT_SMALL_LIMIT = 12
A1_RTOL = 1e-12


@dataclass(frozen=True)
class ShiftKernel:
    cube: DyadicCube
    m1: int
    m2: int
    block: np.ndarray

    def __post_init__(self):
        b = np.array(self.block, dtype=float)
        d = self.cube.d
        want = (1 << (d * self.m1), 1 << (d * self.m2))
        if b.shape != want:
            raise ValueError(f"block shape {b.shape} does not match relative depths {want}")
        b.flags.writeable = False
        object.__setattr__(self, "block", b)

    @property
    def sup(self) -> float:
        return float(np.abs(self.block).max()) if self.block.size else 0.0

    def satisfies_a1(self) -> bool:
        return self.sup <= (1.0 + A1_RTOL) / self.cube.measure

    def scaled(self, c: float) -> "ShiftKernel":
        return ShiftKernel(self.cube, self.m1, self.m2, self.block * c)


@dataclass(frozen=True)
class A2Certificate:
    """``factor`` is the divisor applied; ``bound`` certifies sup over subshifts of the norm."""

    strategy: str
    factor: float
    bound: float


def _integrals_at(f: GridFunction, Q: DyadicCube, rel: int) -> np.ndarray:
    """Signed integrals of ``f`` over the relative-depth-``rel`` subcubes of ``Q``, shape ``(K, n)``."""
    if Q.depth + rel > f.L:
        raise ValueError(f"kernel needs depth {Q.depth + rel} > grid depth {f.L}")
    lev = f.integrals(Q.depth + rel)
    return gather_subcubes(lev, f.d, Q.depth, rel, np.array([Q.index]))[0]


def component_form(k: ShiftKernel, f1: GridFunction, f2: GridFunction) -> float:
    """``S_Q(f1, f2)``; coordinates are paired and summed when ``n > 1``."""
    if f1.n != f2.n:
        raise ValueError("value dimensions differ")
    u1 = _integrals_at(f1, k.cube, k.m1)
    u2 = _integrals_at(f2, k.cube, k.m2)
    return float(np.einsum("aj,ab,bj->", u1, k.block, u2))


class DyadicShift:
    """Finite map cube -> kernel sharing relative depths ``(m1, m2)``."""

    def __init__(self, d: int, L: int, m1: int, m2: int,
                 kernels: Mapping[DyadicCube, ShiftKernel | np.ndarray] | Iterable[ShiftKernel] = (),
                 certificate: A2Certificate | None = None):
        self.d, self.L, self.m1, self.m2 = d, L, m1, m2
        if isinstance(kernels, Mapping):
            items = [v if isinstance(v, ShiftKernel) else ShiftKernel(Q, m1, m2, v)
                     for Q, v in kernels.items()]
        else:
            items = list(kernels)
        ks: dict[DyadicCube, ShiftKernel] = {}
        for k in items:
            if (k.m1, k.m2) != (m1, m2):
                raise ValueError("all kernels of a shift share (m1, m2)")
            if k.cube.d != d:
                raise ValueError("kernel cube dimension mismatch")
            if k.cube.depth + max(m1, m2) > L:
                raise ValueError(f"kernel on {k.cube} exceeds the finest level {L}")
            if k.cube in ks:
                raise ValueError(f"duplicate kernel on {k.cube}")
            ks[k.cube] = k
        self.kernels = dict(sorted(ks.items()))
        self.certificate = certificate or A2Certificate("none", 1.0, float("inf"))
        self._groups = None

    @property
    def rho(self) -> int:
        return max(1, self.m1, self.m2)

    @property
    def cubes(self) -> list[DyadicCube]:
        return list(self.kernels)

    def __len__(self):
        return len(self.kernels)

    @property
    def depths(self) -> list[int]:
        return sorted({Q.depth for Q in self.kernels})

    @property
    def effective_depth(self) -> int:
        if not self.kernels:
            return 0
        return max(Q.depth for Q in self.kernels) + max(self.m1, self.m2)

    def restrict(self, cubes: Iterable[DyadicCube] | Callable[[DyadicCube], bool]) -> "DyadicShift":
        """The subshift over the selected kernel cubes."""
        if callable(cubes):
            sel = [k for Q, k in self.kernels.items() if cubes(Q)]
        else:
            want = set(cubes)
            missing = want - set(self.kernels)
            if missing:
                raise ValueError(f"restriction names cubes without kernels: {sorted(missing)[:3]}")
            sel = [self.kernels[Q] for Q in sorted(want)]
        return DyadicShift(self.d, self.L, self.m1, self.m2, sel, self.certificate)

    def scaled(self, c: float, certificate: A2Certificate | None = None) -> "DyadicShift":
        return DyadicShift(self.d, self.L, self.m1, self.m2,
                           [k.scaled(c) for k in self.kernels.values()],
                           certificate or self.certificate)

    def groups(self):
        """Kernels grouped by depth: ``{depth: (index array (k, d), blocks (k, K1, K2))}``."""
        if self._groups is None:
            g = {}
            for depth in self.depths:
                ks = [k for Q, k in self.kernels.items() if Q.depth == depth]
                idx = np.array([k.cube.index for k in ks], dtype=int).reshape(len(ks), self.d)
                g[depth] = (idx, np.stack([k.block for k in ks]))
            self._groups = g
        return self._groups

    def validate(self) -> None:
        """Raise if A1 (kernel bound) or the block structure is violated."""
        for Q, k in self.kernels.items():
            if not k.satisfies_a1():
                raise ValueError(f"A1 violated on {Q}: sup {k.sup} > 1/|Q| = {1 / Q.measure}")
            if Q.depth + max(self.m1, self.m2) > self.L:
                raise ValueError(f"kernel on {Q} below the finest level")

    def is_cancellative(self, rtol: float = 1e-12) -> bool:
        for k in self.kernels.values():
            scale = max(k.sup, 1e-300) * max(k.block.shape)
            if (np.abs(k.block.sum(axis=0)).max() > rtol * scale
                    or np.abs(k.block.sum(axis=1)).max() > rtol * scale):
                return False
        return True

    # -- forms and operators --------------------------------------------------
    def form(self, f1: GridFunction, f2: GridFunction) -> float:
        """``S(f1, f2)`` summed over all kernels (``S (x) Id`` for vector inputs)."""
        if f1.n != f2.n:
            raise ValueError("value dimensions differ")
        total = 0.0
        for depth, (idx, blocks) in self.groups().items():
            u1 = gather_subcubes(f1.integrals(depth + self.m1), self.d, depth, self.m1, idx)
            u2 = gather_subcubes(f2.integrals(depth + self.m2), self.d, depth, self.m2, idx)
            total += float(np.einsum("kaj,kab,kbj->", u1, blocks, u2))
        return total

    def per_cube_forms(self, f1: GridFunction, f2: GridFunction) -> dict[DyadicCube, float]:
        out = {}
        for depth, (idx, blocks) in self.groups().items():
            u1 = gather_subcubes(f1.integrals(depth + self.m1), self.d, depth, self.m1, idx)
            u2 = gather_subcubes(f2.integrals(depth + self.m2), self.d, depth, self.m2, idx)
            vals = np.einsum("kaj,kab,kbj->k", u1, blocks, u2)
            for i, v in zip(idx, vals):
                out[DyadicCube(depth, tuple(i))] = float(v)
        return out

    def apply(self, values: np.ndarray, adjoint: bool = False) -> np.ndarray:
        """Apply ``T`` (or ``T*``) to cell values on a grid of any depth ``>= effective_depth``.

        ``values`` has shape ``(2**D,)*d + (b,)``; the trailing axis is a batch axis.
        """
        d = self.d
        D = int(np.log2(values.shape[0]))
        cell = 2.0 ** (-d * D)
        rest = values.shape[d:]
        m_in, m_out = (self.m2, self.m1) if adjoint else (self.m1, self.m2)
        out_levels: dict[int, np.ndarray] = {}
        for depth, (idx, blocks) in self.groups().items():
            u = gather_subcubes(level_reduce(values, d, depth + m_in) * cell, d, depth, m_in, idx)
            if adjoint:
                w = np.einsum("kab,kb...->ka...", blocks, u)
            else:
                w = np.einsum("kab,ka...->kb...", blocks, u)
            lev_depth = depth + m_out
            if lev_depth not in out_levels:
                out_levels[lev_depth] = np.zeros((1 << lev_depth,) * d + rest)
            scatter_subcubes(out_levels[lev_depth], d, depth, m_out, idx, w)
        out = np.zeros_like(values, dtype=float)
        for lev_depth, lev in out_levels.items():
            out += upsample(lev, d, D - lev_depth)
        return out

    def apply_function(self, f: GridFunction, adjoint: bool = False) -> GridFunction:
        return GridFunction(self.apply(f.values, adjoint), f.d)

    def assemble(self, depth: int | None = None) -> np.ndarray:
        """Dense matrix of ``T`` in L2-orthonormal cell coordinates on the depth-``depth`` grid.

        Its spectral norm equals the L2 operator norm of the (sub)shift.
        """
        D = self.effective_depth if depth is None else depth
        N = 1 << (self.d * D)
        eye = np.eye(N).reshape((1 << D,) * self.d + (N,))
        # columns are images of basis vectors; uniform cell measure keeps it orthonormal
        return self.apply(eye).reshape(N, N)

    def __repr__(self):
        return (f"DyadicShift(d={self.d}, L={self.L}, m1={self.m1}, m2={self.m2}, "
                f"kernels={len(self.kernels)}, cert={self.certificate.strategy})")


def shift_form(S: DyadicShift, f1: GridFunction, f2: GridFunction,
               restriction: Iterable[DyadicCube] | Callable[[DyadicCube], bool] | None = None) -> float:
    """The subshift form over ``restriction`` (all kernels when ``None``)."""
    if restriction is None:
        return S.form(f1, f2)
    return S.restrict(restriction).form(f1, f2)


def subshift_norm_oracle(S: DyadicShift, subcollection: Iterable[DyadicCube] | None = None,
                         tol: float = 1e-9, seed: int = 0) -> NormResult:
    """Largest singular value of the assembled bilinear form, by power iteration.

    Works matrix-free on the coarsest grid that resolves the kernels; a dense SVD
    is used only if the iteration cap is reached.
    """
    sub = S if subcollection is None else S.restrict(subcollection)
    if not sub.kernels:
        return NormResult(0.0, True, 0, "empty")
    D = sub.effective_depth
    shape = (1 << D,) * S.d + (1,)
    return power_norm(lambda x: sub.apply(x), lambda y: sub.apply(y, adjoint=True), shape,
                      tol=tol, seed=seed, dense=lambda: sub.assemble(D))


def dense_subshift_norm(S: DyadicShift, subcollection: Iterable[DyadicCube] | None = None) -> float:
    sub = S if subcollection is None else S.restrict(subcollection)
    if not sub.kernels:
        return 0.0
    return dense_norm(sub.assemble())


def kernel_operator_bound(k: ShiftKernel) -> float:
    """``|Q| * ||s_Q||_inf``, an upper bound for the norm of ``S_Q`` on L2."""
    return k.cube.measure * k.sup


def _gray_subset_norms(mats: list[np.ndarray]) -> np.ndarray:
    """Spectral norms of all ``2**N`` subset sums, indexed by bitmask."""
    N = len(mats)
    out = np.zeros(1 << N)
    acc = np.zeros_like(mats[0])
    mask = 0
    for i in range(1, 1 << N):
        bit = (i & -i).bit_length() - 1
        mask ^= 1 << bit
        if mask >> bit & 1:
            acc = acc + mats[bit]
        else:
            acc = acc - mats[bit]
        out[mask] = dense_norm(acc)
    return out


def exact_subshift_sup(S: DyadicShift, limit: int = EXACT_SMALL_LIMIT) -> tuple[float, np.ndarray]:
    """``max`` over all subcollections of the subshift norm, by full enumeration."""
    N = len(S.kernels)
    if N > limit:
        raise ValueError(f"exact-small enumeration needs N <= {limit}, got {N}")
    if N == 0:
        return 0.0, np.zeros(1)
    D = S.effective_depth
    mats = [S.restrict([Q]).assemble(D) for Q in S.kernels]
    norms_ = _gray_subset_norms(mats)
    return float(norms_.max()), norms_


def bessel_constants(S: DyadicShift) -> tuple[float, float]:
    """Frame-type (Bessel) constants of the mean-zero bump systems on both sides.

    The system on side ``m`` is ``{(1_R - |R|/|Q| 1_Q)/sqrt|Q| : Q kernel cube, R depth-m subcube}``;
    the constant is the squared norm of its analysis map (the Gram matrix norm).
    """
    D = S.effective_depth
    d = S.d
    N = 1 << (d * D)
    cell = 2.0 ** (-d * D)
    out = []
    for m in (S.m1, S.m2):
        rows = []
        for Q in S.kernels:
            qmask = np.zeros((1 << D,) * d)
            qmask[Q.slices(D)] = 1.0
            for R in Q.descendants(m):
                psi = -(R.measure / Q.measure) * qmask
                psi[R.slices(D)] += 1.0
                rows.append(psi.reshape(N) * np.sqrt(cell / Q.measure))
        out.append(dense_norm(np.array(rows)) ** 2 if rows else 0.0)
    return out[0], out[1]


def normalize_a2(S: DyadicShift, strategy: str = "scale-count",
                 limit: int = EXACT_SMALL_LIMIT) -> DyadicShift:
    """Rescale so that every subshift has L2 bilinear norm at most 1.

    The divisor is never below 1, so the kernel bound A1 is preserved.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    if not S.kernels:
        return S.scaled(1.0, A2Certificate(strategy, 1.0, 0.0))
    S.validate()
    if strategy == "exact-small":
        sup, _ = exact_subshift_sup(S, limit)
    elif strategy == "scale-count":
        # same-depth cubes are disjoint: each depth contributes at most its worst kernel
        sup = sum(max(kernel_operator_bound(k) for Q, k in S.kernels.items() if Q.depth == depth)
                  for depth in S.depths)
        factor = max(1.0, float(len(S.depths)))
        return S.scaled(1.0 / factor, A2Certificate(strategy, factor, sup / factor))
    else:
        if not S.is_cancellative():
            raise ValueError("haar-bessel normalization needs mean-zero rows and columns")
        b1, b2 = bessel_constants(S)
        top = max(Q.measure * float(np.linalg.norm(k.block, 2)) for Q, k in S.kernels.items())
        sup = top * np.sqrt(b1 * b2)
    factor = max(1.0, sup)
    return S.scaled(1.0 / factor, A2Certificate(strategy, factor, sup / factor))


def _draw_depths(rng: np.random.Generator, rho: int, cancellative: bool) -> tuple[int, int]:
    lo = 1 if cancellative else 0
    other = int(rng.integers(lo, rho + 1))
    if rng.integers(2):
        return rho, other
    return other, rho


def random_shift(seed: int, rho: int, d: int, L: int, density: float = 0.5,
                 cancellative: bool = False, strategy: str = "scale-count",
                 max_kernel_depth: int | None = None, max_kernels: int | None = None) -> DyadicShift:
    """Seeded random shift of complexity ``rho`` passed through :func:`normalize_a2`.

    Every cube of admissible depth carries a kernel with probability ``density``;
    entries are uniform in ``[-1/|Q|, 1/|Q|]``.  Cancellative blocks are double-centred
    (mean-zero rows and columns) and then rescaled, not clipped, back under the A1 bound.
    """
    if rho < 1 or rho > L:
        raise ValueError(f"need 1 <= rho <= L, got rho={rho}, L={L}")
    rng = np.random.default_rng(seed)
    m1, m2 = _draw_depths(rng, rho, cancellative)
    top = L - max(m1, m2)
    if max_kernel_depth is not None:
        top = min(top, max_kernel_depth)
    kernels = []
    for depth in range(top + 1):
        cubes = list(cubes_at_depth(d, depth))
        keep = rng.random(len(cubes)) < density
        for Q, k in zip(cubes, keep):
            if not k:
                continue
            bound = 1.0 / Q.measure
            block = rng.uniform(-bound, bound, size=(1 << (d * m1), 1 << (d * m2)))
            if cancellative:
                block = block - block.mean(axis=0, keepdims=True) - block.mean(axis=1, keepdims=True) \
                    + block.mean()
                peak = np.abs(block).max()
                if peak > bound:
                    block *= bound / peak
            kernels.append(ShiftKernel(Q, m1, m2, block))
    if max_kernels is not None and len(kernels) > max_kernels:
        pick = np.sort(rng.choice(len(kernels), size=max_kernels, replace=False))
        kernels = [kernels[i] for i in pick]
    S = DyadicShift(d, L, m1, m2, kernels)
    return normalize_a2(S, strategy)

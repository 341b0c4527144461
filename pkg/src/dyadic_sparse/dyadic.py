"""Dyadic cubes of the unit cube and exact calculus for piecewise-constant grid functions.

A :class:`GridFunction` holds one value (a vector in R^n) per finest-level cell
of the standard dyadic grid of depth ``L`` on ``[0, 1)^d``.  Every integral over
a dyadic cube of depth ``<= L`` is a finite cell-weighted sum, so there is no
quadrature error anywhere in the package.

Array layout: ``values.shape == (2**L,) * d + (n,)``.  The cube of depth ``k``
with index ``(i_1, ..., i_d)`` covers the cells ``i_a * 2**(L-k) <= c_a < (i_a + 1) * 2**(L-k)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

SUPPORTED_DIMS = (1, 2)
MAX_DEPTH = {1: 12, 2: 6}


@dataclass(frozen=True, order=True)
class DyadicCube:
    """Dyadic subcube of ``[0,1)^d`` of side ``2**-depth``."""

    depth: int
    index: tuple[int, ...]

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        object.__setattr__(self, "index", tuple(int(i) for i in self.index))
        top = 1 << self.depth
        if any(i < 0 or i >= top for i in self.index):
            raise ValueError(f"index {self.index} out of range for depth {self.depth}")

    @classmethod
    def root(cls, d: int) -> "DyadicCube":
        return cls(0, (0,) * d)

    @property
    def d(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return 2.0 ** -self.depth

    @property
    def measure(self) -> float:
        return 2.0 ** (-self.d * self.depth)

    def cells(self, L: int) -> int:
        """Number of finest cells of a depth-``L`` grid inside the cube."""
        if self.depth > L:
            raise ValueError("cube finer than the grid")
        return 1 << (self.d * (L - self.depth))

    def parent(self) -> "DyadicCube":
        if self.depth == 0:
            raise ValueError("the root cube has no parent")
        return DyadicCube(self.depth - 1, tuple(i >> 1 for i in self.index))

    def ancestor(self, depth: int) -> "DyadicCube":
        if depth > self.depth or depth < 0:
            raise ValueError("ancestor depth must lie in [0, depth]")
        shift = self.depth - depth
        return DyadicCube(depth, tuple(i >> shift for i in self.index))

    def contains(self, other: "DyadicCube") -> bool:
        """``other`` is a (not necessarily strict) subcube of ``self``."""
        if other.depth < self.depth:
            return False
        return other.ancestor(self.depth) == self

    def strictly_contains(self, other: "DyadicCube") -> bool:
        return other.depth > self.depth and self.contains(other)

    def descendants(self, rel_depth: int) -> list["DyadicCube"]:
        """Subcubes at relative depth ``rel_depth`` in row-major order of their local offsets."""
        m = 1 << rel_depth
        base = tuple(i * m for i in self.index)
        return [
            DyadicCube(self.depth + rel_depth, tuple(b + o for b, o in zip(base, off)))
            for off in itertools.product(range(m), repeat=self.d)
        ]

    def slices(self, L: int) -> tuple[slice, ...]:
        """Cell-array slices covering this cube on a depth-``L`` grid."""
        if self.depth > L:
            raise ValueError("cube finer than the grid")
        s = 1 << (L - self.depth)
        return tuple(slice(i * s, (i + 1) * s) for i in self.index)

    def interval(self) -> tuple[tuple[float, float], ...]:
        return tuple((i * self.side, (i + 1) * self.side) for i in self.index)

    def __str__(self):
        return f"Q[{self.depth};{','.join(map(str, self.index))}]"


def children(Q: DyadicCube, L: int | None = None) -> list[DyadicCube]:
    """The ``2**d`` dyadic children of ``Q``."""
    if L is not None and Q.depth >= L:
        raise ValueError(f"cube at depth {Q.depth} has no children on a depth-{L} grid")
    return Q.descendants(1)


def cubes_at_depth(d: int, depth: int) -> Iterator[DyadicCube]:
    for idx in itertools.product(range(1 << depth), repeat=d):
        yield DyadicCube(depth, idx)


def all_cubes(d: int, L: int) -> Iterator[DyadicCube]:
    for k in range(L + 1):
        yield from cubes_at_depth(d, k)


def check_grid(d: int, L: int) -> None:
    if d not in SUPPORTED_DIMS:
        raise ValueError(f"d={d} unsupported; use one of {SUPPORTED_DIMS}")
    if L < 0:
        raise ValueError("L must be nonnegative")


def level_reduce(arr: np.ndarray, d: int, depth: int) -> np.ndarray:
    """Sum a cell array ``(2**L,)*d + rest`` over blocks, giving ``(2**depth,)*d + rest``."""
    L = int(np.log2(arr.shape[0]))
    if depth > L:
        raise ValueError("target depth finer than the grid")
    s = 1 << (L - depth)
    m = 1 << depth
    rest = arr.shape[d:]
    if d == 1:
        return arr.reshape((m, s) + rest).sum(axis=1)
    return arr.reshape((m, s, m, s) + rest).sum(axis=(1, 3))


def upsample(arr: np.ndarray, d: int, factor_depth: int) -> np.ndarray:
    """Repeat a level array ``factor_depth`` levels down (piecewise-constant refinement)."""
    if factor_depth == 0:
        return arr
    r = 1 << factor_depth
    out = np.repeat(arr, r, axis=0)
    if d == 2:
        out = np.repeat(out, r, axis=1)
    return out


def gather_subcubes(level: np.ndarray, d: int, depth: int, rel: int, idx: np.ndarray) -> np.ndarray:
    """Entries of a depth-``depth+rel`` level array grouped by depth-``depth`` parent cubes.

    ``idx`` has shape ``(k, d)``; the result has shape ``(k, 2**(d*rel)) + rest`` with the
    subcubes of each parent in row-major order of their local offsets.
    """
    m = 1 << depth
    r = 1 << rel
    rest = level.shape[d:]
    if d == 1:
        blocks = level.reshape((m, r) + rest)
        return blocks[idx[:, 0]]
    blocks = level.reshape((m, r, m, r) + rest)
    blocks = np.moveaxis(blocks, 2, 1).reshape((m, m, r * r) + rest)
    return blocks[idx[:, 0], idx[:, 1]]


def scatter_subcubes(level: np.ndarray, d: int, depth: int, rel: int, idx: np.ndarray,
                     vals: np.ndarray) -> None:
    """Inverse of :func:`gather_subcubes`; adds ``vals`` into ``level`` in place."""
    m = 1 << depth
    r = 1 << rel
    rest = level.shape[d:]
    if d == 1:
        view = level.reshape((m, r) + rest)
        np.add.at(view, idx[:, 0], vals)
        return
    view = np.moveaxis(level.reshape((m, r, m, r) + rest), 2, 1)
    np.add.at(view, (idx[:, 0], idx[:, 1]), vals.reshape((len(idx), r, r) + rest))


class GridFunction:
    """Piecewise-constant R^n-valued function on the finest cells of a depth-``L`` grid.

    Instances are immutable; level integrals are cached on first use.
    """

    __slots__ = ("values", "d", "L", "n", "_cache")

    def __init__(self, values, d: int):
        arr = np.array(values, dtype=float)
        check_grid(d, 0)
        if arr.ndim == d:
            arr = arr[..., None]
        if arr.ndim != d + 1:
            raise ValueError(f"expected {d} grid axes plus one value axis, got shape {arr.shape}")
        side = arr.shape[0]
        L = int(round(np.log2(side))) if side > 0 else -1
        if side < 1 or (1 << L) != side or any(s != side for s in arr.shape[:d]):
            raise ValueError(f"grid axes must all equal 2**L, got {arr.shape[:d]}")
        if arr.shape[-1] < 1:
            raise ValueError("value dimension n must be >= 1")
        arr.flags.writeable = False
        self.values = arr
        self.d = d
        self.L = L
        self.n = arr.shape[-1]
        self._cache = {}

    # -- construction -------------------------------------------------------
    @classmethod
    def constant(cls, d: int, L: int, value=1.0) -> "GridFunction":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.broadcast_to(v, (1 << L,) * d + v.shape), d)

    @classmethod
    def indicator(cls, Q: DyadicCube, L: int, value=1.0) -> "GridFunction":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        arr = np.zeros((1 << L,) * Q.d + v.shape)
        arr[Q.slices(L)] = v
        return cls(arr, Q.d)

    @classmethod
    def from_flat(cls, flat, d: int, L: int) -> "GridFunction":
        flat = np.asarray(flat, dtype=float)
        if flat.ndim == 1:
            flat = flat[:, None]
        return cls(flat.reshape((1 << L,) * d + (flat.shape[1],)), d)

    def flat(self) -> np.ndarray:
        """Cell values as ``(2**(d*L), n)`` in row-major cell order."""
        return self.values.reshape(-1, self.n)

    @property
    def num_cells(self) -> int:
        return 1 << (self.d * self.L)

    @property
    def cell_measure(self) -> float:
        return 2.0 ** (-self.d * self.L)

    # -- arithmetic ---------------------------------------------------------
    def _like(self, arr) -> "GridFunction":
        return GridFunction(arr, self.d)

    def _check(self, other: "GridFunction"):
        if (self.d, self.L, self.n) != (other.d, other.L, other.n):
            raise ValueError("grid functions live on different grids or value spaces")

    def __add__(self, other):
        self._check(other)
        return self._like(self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return self._like(self.values - other.values)

    def __mul__(self, c: float):
        return self._like(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.values)

    def restrict(self, Q: DyadicCube) -> "GridFunction":
        """``f * 1_Q``."""
        arr = np.zeros_like(self.values)
        sl = Q.slices(self.L)
        arr[sl] = self.values[sl]
        return self._like(arr)

    def component(self, j: int) -> "GridFunction":
        return self._like(self.values[..., j:j + 1])

    def apply_matrix(self, M) -> "GridFunction":
        """Pointwise ``x -> M f(x)`` for an ``(m, n)`` matrix."""
        M = np.asarray(M, dtype=float)
        return self._like(self.values @ M.T)

    def coarsen(self, depth: int) -> "GridFunction":
        """Cell averages on the depth-``depth`` grid (conditional expectation)."""
        return GridFunction(self.integrals(depth) / 2.0 ** (-self.d * depth), self.d)

    def refine(self, L: int) -> "GridFunction":
        if L < self.L:
            raise ValueError("refine target coarser than grid")
        return GridFunction(upsample(self.values, self.d, L - self.L), self.d)

    # -- exact integrals ----------------------------------------------------
    def integrals(self, depth: int) -> np.ndarray:
        """Signed integrals over every cube of the given depth, shape ``(2**depth,)*d + (n,)``."""
        key = ("int", depth)
        if key not in self._cache:
            self._cache[key] = level_reduce(self.values, self.d, depth) * self.cell_measure
        return self._cache[key]

    def abs_integrals(self, depth: int) -> np.ndarray:
        """Integrals of the pointwise Euclidean norm ``|f|`` over every depth-``depth`` cube."""
        key = ("abs", depth)
        if key not in self._cache:
            if "absval" not in self._cache:
                self._cache["absval"] = np.linalg.norm(self.values, axis=-1)
            self._cache[key] = level_reduce(self._cache["absval"], self.d, depth) * self.cell_measure
        return self._cache[key]

    def abs_averages(self, depth: int) -> np.ndarray:
        return self.abs_integrals(depth) / 2.0 ** (-self.d * depth)

    def integral(self, Q: DyadicCube) -> np.ndarray:
        self._check_cube(Q)
        return self.integrals(Q.depth)[Q.index].copy()

    def cube_values(self, Q: DyadicCube) -> np.ndarray:
        """Values on the cells of ``Q``, shape ``(cells, n)`` in row-major order."""
        self._check_cube(Q)
        return self.values[Q.slices(self.L)].reshape(-1, self.n)

    def _check_cube(self, Q: DyadicCube):
        if Q.d != self.d:
            raise ValueError("cube dimension does not match grid dimension")
        if Q.depth > self.L:
            raise ValueError(f"cube depth {Q.depth} exceeds finest level {self.L}")

    def __repr__(self):
        return f"GridFunction(d={self.d}, L={self.L}, n={self.n})"


def scalar_average(f: GridFunction, Q: DyadicCube) -> float:
    """``<f>_Q = |Q|^{-1} * integral over Q of |f|`` (Euclidean norm if ``n > 1``)."""
    f._check_cube(Q)
    return float(f.abs_integrals(Q.depth)[Q.index]) / Q.measure


def signed_pair_integral(f: GridFunction, Q: DyadicCube, g: GridFunction, R: DyadicCube) -> float:
    """``(int_Q f) . (int_R g)``, summed over components when ``n > 1``."""
    if f.n != g.n:
        raise ValueError(f"value dimensions differ: {f.n} vs {g.n}")
    return float(np.dot(f.integral(Q), g.integral(R)))


def norms(f: GridFunction) -> tuple[float, float, float]:
    """``(L1, L2, Linf)`` norms of ``|f|``."""
    a = np.linalg.norm(f.values, axis=-1)
    m = f.cell_measure
    return float(a.sum() * m), float(np.sqrt((a * a).sum() * m)), float(a.max())


def inner_product(f: GridFunction, g: GridFunction) -> float:
    f._check(g)
    return float(np.sum(f.values * g.values) * f.cell_measure)


def cube_from_cells(d: int, depth: int, flat_index: int) -> DyadicCube:
    """Cube of given depth from its row-major flat index."""
    m = 1 << depth
    return DyadicCube(depth, tuple(int(i) for i in np.unravel_index(flat_index, (m,) * d)))


def sorted_cubes(cubes: Iterable[DyadicCube]) -> list[DyadicCube]:
    return sorted(cubes)


def maximal_cubes(flags: list[np.ndarray], Q: DyadicCube) -> list[DyadicCube]:
    """Maximal flagged strict subcubes of ``Q``.

    ``flags[r]`` is a boolean array of shape ``(2**r,)*d`` over the relative-depth-``r``
    subcubes of ``Q``; ``flags[0]`` is ignored.
    """
    d = Q.d
    out = []
    covered = np.zeros((1,) * d, dtype=bool)
    for r in range(1, len(flags)):
        covered = upsample(covered, d, 1)
        new = flags[r] & ~covered
        base = tuple(i << r for i in Q.index)
        for loc in np.argwhere(new):
            out.append(DyadicCube(Q.depth + r, tuple(int(b + o) for b, o in zip(base, loc))))
        covered |= new
    return sorted(out)

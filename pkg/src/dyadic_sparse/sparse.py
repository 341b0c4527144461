"""Stopping cubes, sparse collections and sparse forms.

The collection built from ``(f1, f2)`` is the root, its ``2**d`` children ``Q_l`` and,
below each ``Q_l``, successive generations of stopping cubes: ``I`` is a stopping child
of ``Q`` when it is a maximal strict subcube with ``<f_j>_I > lam <f_j>_Q`` for some ``j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .convex import body_average, default_dilation, minkowski_product, vector_stopping
from .dyadic import DyadicCube, GridFunction, children, maximal_cubes, upsample

DEFAULT_LAMBDA = 2.0 ** 8
PRINCIPAL_RATIO = 4.0
ROOT_LAYER = -1


def _check_pair(f1: GridFunction, f2: GridFunction) -> None:
    if (f1.d, f1.L) != (f2.d, f2.L):
        raise ValueError("inputs live on different grids")


def _region(level: np.ndarray, Q: DyadicCube, rel: int) -> np.ndarray:
    """The relative-depth-``rel`` subcube entries of ``Q`` in a depth ``Q.depth + rel`` array."""
    r = 1 << rel
    return level[tuple(slice(i * r, (i + 1) * r) for i in Q.index)]


def stopping_flags(fs: Iterable[GridFunction], Q: DyadicCube, lam: float) -> list[np.ndarray]:
    """Per relative depth, which subcubes ``I`` of ``Q`` have ``<f>_I > lam <f>_Q`` for some ``f``."""
    fs = list(fs)
    L = fs[0].L
    flags = [np.zeros((1 << r,) * Q.d, dtype=bool) for r in range(L - Q.depth + 1)]
    for f in fs:
        base = lam * float(f.abs_averages(Q.depth)[Q.index])
        for r in range(1, L - Q.depth + 1):
            flags[r] |= _region(f.abs_averages(Q.depth + r), Q, r) > base
    return flags


def stopping_children(f1: GridFunction, f2: GridFunction, Q: DyadicCube,
                      lam: float = DEFAULT_LAMBDA) -> list[DyadicCube]:
    """Maximal strict subcubes ``I`` of ``Q`` with ``<f_j>_I > lam <f_j>_Q`` for ``j = 1`` or ``2``.

    Strict comparison, no tolerance.
    """
    if lam <= 1:
        raise ValueError(f"lam={lam} must exceed 1")
    _check_pair(f1, f2)
    f1._check_cube(Q)
    return maximal_cubes(stopping_flags((f1, f2), Q, lam), Q)


def packing_holds(Q: DyadicCube, cubes: Iterable[DyadicCube], L: int, bound: Fraction) -> bool:
    """``sum |I| <= bound |Q|`` compared exactly in integer cell counts."""
    return Fraction(sum(I.cells(L) for I in cubes)) <= bound * Q.cells(L)


@dataclass
class SparseCollection:
    """Cubes organised as an inclusion forest.

    ``parent`` maps each cube to its forest parent (``None`` for tops), ``layer`` records
    the generation (``-1`` for the root, ``0`` for the root's children in a built
    collection), ``tree`` the index of the top-level child a cube descends from.
    Built collections carry the per-node packing bound of their stopping rule.
    """

    d: int
    L: int
    parent: dict = field(default_factory=dict)
    layer: dict = field(default_factory=dict)
    tree: dict = field(default_factory=dict)
    packing_bound: Fraction | None = None

    @classmethod
    def from_cubes(cls, cubes: Iterable[DyadicCube], d: int, L: int) -> "SparseCollection":
        cubes = sorted(set(cubes))
        S = cls(d, L)
        for Q in cubes:
            if Q.d != d or Q.depth > L:
                raise ValueError(f"{Q} does not live on the depth-{L} grid in dimension {d}")
            par = None
            for k in range(Q.depth - 1, -1, -1):
                A = Q.ancestor(k)
                if A in S.parent:
                    par = A
                    break
            S.parent[Q] = par
            S.layer[Q] = 0 if par is None else S.layer[par] + 1
        return S

    @property
    def cubes(self) -> list[DyadicCube]:
        return sorted(self.parent)

    def __len__(self):
        return len(self.parent)

    def __contains__(self, Q):
        return Q in self.parent

    def forest_children(self) -> dict:
        kids = {Q: [] for Q in self.parent}
        for Q, P in self.parent.items():
            if P is not None:
                kids[P].append(Q)
        return {Q: sorted(v) for Q, v in kids.items()}

    def owners(self) -> np.ndarray:
        """Cell array of indices into ``cubes`` giving the deepest member containing each
        cell (``-1`` if none): the greedy witness ``E_Q = Q minus its forest children``."""
        own = np.full((1 << self.L,) * self.d, -1, dtype=np.int64)
        for i, Q in sorted(enumerate(self.cubes), key=lambda t: t[1].depth):
            own[Q.slices(self.L)] = i
        return own

    def witness_cells(self) -> dict:
        """``|E_Q|`` in finest cells for the greedy witness."""
        own = self.owners()
        counts = np.bincount(own[own >= 0].ravel(), minlength=len(self))
        return {Q: int(c) for Q, c in zip(self.cubes, counts)}


def _grow(f1: GridFunction, f2: GridFunction, rule, bound: Fraction | None) -> SparseCollection:
    _check_pair(f1, f2)
    d, L = f1.d, f1.L
    root = DyadicCube.root(d)
    S = SparseCollection(d, L, packing_bound=bound)
    S.parent[root] = None
    S.layer[root] = ROOT_LAYER
    if L == 0:
        return S
    for ell, Ql in enumerate(children(root, L)):
        S.parent[Ql] = root
        S.layer[Ql] = 0
        S.tree[Ql] = ell
        current, gen = [Ql], 0
        while current:
            gen += 1
            nxt = []
            for Q in current:
                for I in rule(Q):
                    S.parent[I] = Q
                    S.layer[I] = gen
                    S.tree[I] = ell
                    nxt.append(I)
            current = nxt
    return S


def build_sparse_collection(f1: GridFunction, f2: GridFunction,
                            lam: float = DEFAULT_LAMBDA) -> SparseCollection:
    """Root, its children ``Q_l`` and the generations of stopping cubes below each ``Q_l``.

    Records the per-node packing bound ``2/lam`` (``2**-7`` at the default).
    """
    if lam <= 1:
        raise ValueError(f"lam={lam} must exceed 1")
    return _grow(f1, f2, lambda Q: stopping_children(f1, f2, Q, lam),
                 Fraction(2) / Fraction(lam))


def build_sparse_collection_body(f1: GridFunction, f2: GridFunction,
                                 A: float | None = None) -> SparseCollection:
    """Vector analogue: stopping children of ``Q`` are the maximal cubes among both vector
    stopping sets; the packing bound is ``2 n^2 / A``."""
    n = f1.n
    A = default_dilation(n) if A is None else float(A)
    return _grow(f1, f2, lambda Q: vector_stopping_pair(f1, f2, Q, A),
                 Fraction(2 * n * n) / Fraction(A))


def vector_stopping_pair(f1: GridFunction, f2: GridFunction, Q: DyadicCube,
                         A: float | None = None) -> list[DyadicCube]:
    """Maximal cubes of ``I_{Q,f1} ∪ I_{Q,f2}``."""
    both = sorted(set(vector_stopping(f1, Q, A)) | set(vector_stopping(f2, Q, A)))
    return [I for I in both if not any(J.strictly_contains(I) for J in both)]


@dataclass
class SparseReport:
    eta_greedy: float
    eta_optimal: float
    eta_optimal_exact: Fraction
    disjoint: bool
    feasible: bool
    eta_requested: float
    packing_ok: bool | None
    packing_worst: float | None

    def as_dict(self) -> dict:
        return {
            "eta_greedy": self.eta_greedy, "eta_optimal": self.eta_optimal,
            "eta_optimal_exact": str(self.eta_optimal_exact), "disjoint": self.disjoint,
            "feasible": self.feasible, "eta_requested": self.eta_requested,
            "packing_ok": self.packing_ok, "packing_worst": self.packing_worst,
        }


def subtree_cells(S: SparseCollection) -> dict:
    """``sum of |P|`` (in cells) over members ``P`` contained in each member ``Q``."""
    kids = S.forest_children()
    tot = {}
    for Q in sorted(S.parent, key=lambda c: -c.depth):
        tot[Q] = Q.cells(S.L) + sum(tot[c] for c in kids[Q])
    return tot


def optimal_eta(S: SparseCollection) -> Fraction:
    """Largest ``eta`` admitting pairwise disjoint ``E_Q ⊂ Q`` with ``|E_Q| >= eta |Q|``.

    For a nested family this is ``min_Q |Q| / sum_{P ⊂ Q} |P|``: the condition is
    necessary since the ``E_P`` with ``P ⊂ Q`` are disjoint subsets of ``Q``, and
    sufficient by allocating bottom-up, each ``Q`` taking ``eta |Q|`` from what its
    descendants left (sets need not be unions of cells).
    """
    if len(S) == 0:
        return Fraction(1)
    tot = subtree_cells(S)
    return min(Fraction(Q.cells(S.L), tot[Q]) for Q in S.parent)


def verify_sparse(S: SparseCollection, eta: float) -> SparseReport:
    """Check ``eta``-sparseness and report the greedy and the optimal feasible ``eta``.

    The greedy witness ``E_Q = Q minus its forest children`` is checked for disjointness
    cell by cell; the optimal ``eta`` comes from :func:`optimal_eta`.  For collections
    built by a stopping rule the per-node packing ``sum |I| <= bound |Q|`` is also
    checked in exact arithmetic (the root, whose children are not stopping cubes, is
    skipped).
    """
    if len(set(S.parent)) != len(S.parent):
        raise ValueError("duplicate cubes")
    for Q, P in S.parent.items():
        if P is not None and not P.strictly_contains(Q):
            raise ValueError(f"forest parent {P} does not contain {Q}")
    wc = S.witness_cells()
    owners = S.owners()
    cubes = S.cubes
    # the owner map makes the E_Q disjoint; check each lies inside its cube
    counts = np.bincount(owners[owners >= 0].ravel(), minlength=len(cubes))
    disjoint = all(int(np.count_nonzero(owners[Q.slices(S.L)] == i)) == counts[i]
                   for i, Q in enumerate(cubes))
    greedy = min((wc[Q] / Q.cells(S.L) for Q in cubes), default=1.0)
    opt = optimal_eta(S)
    packing_ok = packing_worst = None
    if S.packing_bound is not None:
        kids = S.forest_children()
        worst, ok = 0.0, True
        for Q in cubes:
            if S.layer.get(Q, 0) < 0:
                continue
            ok &= packing_holds(Q, kids[Q], S.L, S.packing_bound)
            worst = max(worst, sum(I.measure for I in kids[Q]) / Q.measure)
        packing_ok, packing_worst = bool(ok), worst
    return SparseReport(float(greedy), float(opt), opt, bool(disjoint), Fraction(eta) <= opt,
                        float(eta), packing_ok, packing_worst)


# ---------------------------------------------------------------------------
# sparse forms
# ---------------------------------------------------------------------------

def _cubes(S) -> list[DyadicCube]:
    return S.cubes if isinstance(S, SparseCollection) else sorted(set(S))


def sparse_form(S, f1: GridFunction, f2: GridFunction) -> float:
    """``sum_Q |Q| <f1>_Q <f2>_Q``."""
    _check_pair(f1, f2)
    by_depth = {}
    for Q in _cubes(S):
        by_depth.setdefault(Q.depth, []).append(Q.index)
    total = 0.0
    for k, idx in sorted(by_depth.items()):
        ix = tuple(np.array(idx).T)
        total += float(np.sum(f1.abs_averages(k)[ix] * f2.abs_averages(k)[ix])) * 2.0 ** (-f1.d * k)
    return total


def sparse_form_terms(S, f1: GridFunction, f2: GridFunction) -> dict:
    return {Q: Q.measure * float(f1.abs_averages(Q.depth)[Q.index] * f2.abs_averages(Q.depth)[Q.index])
            for Q in _cubes(S)}


def sparse_form_body(S, f1: GridFunction, f2: GridFunction) -> float:
    """``sum_Q |Q| <f1>_Q <f2>_Q`` with convex-body averages and the Minkowski product."""
    _check_pair(f1, f2)
    if f1.n != f2.n:
        raise ValueError(f"value dimensions differ: {f1.n} vs {f2.n}")
    return float(sum(Q.measure * minkowski_product(body_average(f1, Q), body_average(f2, Q))
                     for Q in _cubes(S)))


# ---------------------------------------------------------------------------
# universal collection
# ---------------------------------------------------------------------------

def product_levels(f1: GridFunction, f2: GridFunction) -> list[np.ndarray]:
    """``<f1>_Q <f2>_Q`` for every cube, one array per depth."""
    return [f1.abs_averages(k) * f2.abs_averages(k) for k in range(f1.L + 1)]


def universal_collection(f1: GridFunction, f2: GridFunction,
                         ratio: float = PRINCIPAL_RATIO) -> SparseCollection:
    """Principal cubes: the root, and every ``R`` whose product ``<f1>_R <f2>_R`` exceeds
    ``ratio`` times the product at its nearest principal ancestor."""
    _check_pair(f1, f2)
    d, L = f1.d, f1.L
    P = product_levels(f1, f2)
    principal = [np.ones((1,) * d, dtype=bool)]
    base = P[0]  # product at the nearest principal ancestor-or-self
    for k in range(1, L + 1):
        inherited = upsample(base, d, 1)
        pk = P[k] > ratio * inherited
        principal.append(pk)
        base = np.where(pk, P[k], inherited)
    cubes = [DyadicCube(k, tuple(int(i) for i in loc))
             for k in range(L + 1) for loc in np.argwhere(principal[k])]
    return SparseCollection.from_cubes(cubes, d, L)


def random_sparse_collection(seed: int, d: int, L: int, eta: float = 0.5,
                             weights: np.ndarray | None = None,
                             attempts: int | None = None) -> SparseCollection:
    """Random ``eta``-sparse collection: cubes are proposed in random order (optionally
    weighted) and kept while every member ``R`` satisfies ``sum_{Q ⊂ R} |Q| <= |R|/eta``,
    which for nested families is equivalent to ``eta``-sparseness."""
    rng = np.random.default_rng(seed)
    all_c = [DyadicCube(k, tuple(int(i) for i in loc))
             for k in range(L + 1) for loc in np.argwhere(np.ones((1 << k,) * d, dtype=bool))]
    p = None
    if weights is not None:
        p = np.asarray(weights, dtype=float)
        p = p / p.sum()
    n_try = min(attempts or len(all_c), len(all_c))
    order = rng.choice(len(all_c), size=n_try, replace=False, p=p)
    cap = Fraction(eta).limit_denominator(1 << 20)
    num, den = cap.numerator, cap.denominator
    # inside[k][idx]: cells of members contained in that depth-k cube
    inside = [np.zeros((1 << k,) * d, dtype=np.int64) for k in range(L + 1)]
    member = [np.zeros((1 << k,) * d, dtype=bool) for k in range(L + 1)]
    for i in order:
        Q = all_c[i]
        if member[Q.depth][Q.index]:
            continue
        c = Q.cells(L)
        if num * (c + inside[Q.depth][Q.index]) > den * c:
            continue
        anc = [Q.ancestor(k) for k in range(Q.depth)]
        if any(member[A.depth][A.index] and num * (inside[A.depth][A.index] + c) > den * A.cells(L)
               for A in anc):
            continue
        member[Q.depth][Q.index] = True
        for A in anc + [Q]:
            inside[A.depth][A.index] += c
    cubes = [DyadicCube(k, tuple(int(j) for j in loc))
             for k in range(L + 1) for loc in np.argwhere(member[k])]
    return SparseCollection.from_cubes(cubes, d, L)


def domination_ratio(T: SparseCollection | Iterable[DyadicCube], S: SparseCollection,
                     f1: GridFunction, f2: GridFunction) -> float:
    """``Lambda_T / Lambda_S`` (``0`` when both vanish)."""
    num = sparse_form(T, f1, f2)
    den = sparse_form(S, f1, f2)
    if den == 0:
        return 0.0 if num == 0 else float("inf")
    return num / den

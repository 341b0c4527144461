"""Calderon-Zygmund decompositions and numerical checks of the main iteration step.

For a base cube ``Q`` with disjoint stopping cubes ``I``::

    f 1_Q = g + sum_I b_I,   g = f off E, g = f_I on I,   b_I = (f - f_I) 1_I

where ``f_I`` is the signed average.  The checkers split a shift into the part living
on ``G = {R : R not inside E}`` and the parts inside each ``I``, then bound the ``G``
part class by class (``depth mod rho``) through the good/bad pieces.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .convex import (Zonotope, body_average, contains, default_dilation, john_ellipsoid,
                     minkowski_product_full)
from .dyadic import DyadicCube, GridFunction, children, norms, scalar_average
from .shift import DyadicShift, component_form
from .sparse import DEFAULT_LAMBDA, stopping_children, vector_stopping_pair


# ---------------------------------------------------------------------------
# decomposition
# ---------------------------------------------------------------------------

@dataclass
class CZDecomposition:
    base: DyadicCube
    cubes: list
    good: GridFunction
    bad: dict = field(default_factory=dict)
    averages: dict = field(default_factory=dict)  # I -> signed average f_I

    @property
    def bad_total(self) -> GridFunction:
        out = self.good * 0.0
        for b in self.bad.values():
            out = out + b
        return out

    def exceptional_mask(self) -> np.ndarray:
        L = self.good.L
        mask = np.zeros((1 << L,) * self.good.d, dtype=bool)
        for I in self.cubes:
            mask[I.slices(L)] = True
        return mask


def _check_disjoint(Q: DyadicCube, cubes) -> None:
    cubes = sorted(cubes)
    for I in cubes:
        if not Q.contains(I):
            raise ValueError(f"{I} is not inside the base cube {Q}")
    for i, I in enumerate(cubes):
        for J in cubes[i + 1:]:
            if I.contains(J) or J.contains(I):
                raise ValueError(f"stopping cubes overlap: {I}, {J}")


def cz_decompose(f: GridFunction, Q: DyadicCube, cubes) -> CZDecomposition:
    """Decompose ``f 1_Q`` along pairwise disjoint subcubes of ``Q``."""
    cubes = sorted(cubes)
    f._check_cube(Q)
    _check_disjoint(Q, cubes)
    L = f.L
    g = f.restrict(Q).values.copy()
    bad, avgs = {}, {}
    for I in cubes:
        sl = I.slices(L)
        vals = f.values[sl]
        avg = vals.reshape(-1, f.n).mean(axis=0)
        g[sl] = avg
        b = np.zeros_like(f.values)
        b[sl] = vals - avg
        bad[I] = GridFunction(b, f.d)
        avgs[I] = avg
    return CZDecomposition(Q, cubes, GridFunction(g, f.d), bad, avgs)


@dataclass
class CZBounds:
    """Observed quantities over the explicit constants; every ratio must be <= 1."""

    cz1: float              # ||g||_inf / (2^{d} lam <f>_Q)
    cz2: float              # ||g||_2 / ((2^{d} lam)^{1/2} |Q|^{1/2} <f>_Q)
    cz3: float              # max_I ||b_I||_1 / (2^{d+1} lam |I| <f>_Q)
    reconstruction: float   # max |f 1_Q - g - sum b_I| / max |f|
    mean_zero: float        # max_I |int_I b_I| / (|I| max |f|)

    def ok(self, recon_tol: float = 1e-12, mean_tol: float = 1e-14) -> bool:
        return (self.cz1 <= 1 and self.cz2 <= 1 and self.cz3 <= 1
                and self.reconstruction <= recon_tol and self.mean_zero <= mean_tol)


def cz_bounds(f: GridFunction, dec: CZDecomposition, lam: float = DEFAULT_LAMBDA) -> CZBounds:
    """Check (CZ1)-(CZ3) with the constants ``2^d lam``, ``(2^d lam)^{1/2}``, ``2^{d+1} lam``
    (``2^{d+8}``, ``2^{(d+8)/2}``, ``2^{d+9}`` at ``lam = 2^8``)."""
    Q, d = dec.base, f.d
    avg = scalar_average(f, Q)
    c1 = 2.0 ** d * lam
    scale = float(np.abs(f.values).max()) or 1.0
    if avg == 0:
        return CZBounds(0.0, 0.0, 0.0, 0.0, 0.0)
    _, g2, ginf = norms(dec.good)
    cz1 = ginf / (c1 * avg)
    cz2 = float(g2 / np.sqrt(c1 * Q.measure) / avg)
    cz3, mz = 0.0, 0.0
    for I, b in dec.bad.items():
        l1 = norms(b)[0]
        cz3 = max(cz3, l1 / (2 * c1 * I.measure * avg))
        mz = max(mz, float(np.abs(b.integral(I)).max()) / (I.measure * scale))
    recon = f.restrict(Q) - dec.good - dec.bad_total
    rec = float(np.abs(recon.values).max()) / scale
    return CZBounds(cz1, cz2, cz3, rec, mz)


def cz_decompose_body(f: GridFunction, Q: DyadicCube, cubes=None, A: float | None = None) -> CZDecomposition:
    """Decomposition along the vector stopping cubes (computed if not given)."""
    if cubes is None:
        from .convex import vector_stopping
        cubes = vector_stopping(f, Q, A)
    return cz_decompose(f, Q, cubes)


@dataclass
class BodyCZReport:
    good_margin: float   # containment margin of g(x) in 2^d A <f>_Q (<= 0 contained)
    good_ok: bool
    bad_margin: float    # margin of <b_I>_I in 2^{d+1} A <f>_Q
    bad_ok: bool
    reconstruction: float
    mean_zero: float
    degenerate: bool

    def ok(self) -> bool:
        return self.good_ok and self.bad_ok and self.reconstruction <= 1e-12 and self.mean_zero <= 1e-14


def body_cz_check(f: GridFunction, dec: CZDecomposition, A: float | None = None) -> BodyCZReport:
    """Body CZ containments: ``g(x) in 2^d A <f>_Q`` for every ``x`` in ``Q``
    and ``<b_I>_I in 2^{d+1} A <f>_Q`` (since ``<b_I>_I ⊂ 2<f>_I``)."""
    n, d, L = f.n, f.d, f.L
    A = default_dilation(n) if A is None else float(A)
    Q = dec.base
    K = body_average(f, Q)
    vals = np.unique(dec.good.values[Q.slices(L)].reshape(-1, n), axis=0)
    gc = contains(K.dilate(2 ** d * A), Zonotope.from_generators(vals, n))
    bm, bok = -np.inf, True
    for I, b in dec.bad.items():
        c = contains(K.dilate(2 ** (d + 1) * A), body_average(b, I))
        bm, bok = max(bm, c.margin), bok and c.verdict
    scale = float(np.abs(f.values).max()) or 1.0
    recon = f.restrict(Q) - dec.good - dec.bad_total
    mz = max((float(np.abs(b.integral(I)).max()) / (I.measure * scale) for I, b in dec.bad.items()),
             default=0.0)
    return BodyCZReport(gc.margin, gc.verdict, float(bm) if dec.bad else 0.0, bool(bok),
                        float(np.abs(recon.values).max()) / scale, mz, K.rank() < n)


# ---------------------------------------------------------------------------
# scale classes
# ---------------------------------------------------------------------------

def scale_split(cubes, rho: int) -> list[list[DyadicCube]]:
    """Partition by ``depth mod rho``; within a class nested cubes differ by ``>= rho`` levels."""
    if rho < 1:
        raise ValueError("rho must be >= 1")
    out = [[] for _ in range(rho)]
    for Q in sorted(cubes):
        out[Q.depth % rho].append(Q)
    return out


def r_of_i(I: DyadicCube, m: int, rho: int) -> DyadicCube | None:
    """The ancestor ``R ⊋ I`` with ``depth(R) = m mod rho`` and ``l(R) < 2^rho l(I)``.

    The window ``depth(I) - rho < depth(R) < depth(I)`` holds at most one depth of each
    class; it is empty when ``rho = 1``.
    """
    for k in range(max(I.depth - rho + 1, 0), I.depth):
        if k % rho == m % rho:
            return I.ancestor(k)
    return None


def _inside_any(R: DyadicCube, cubes) -> bool:
    return any(I.contains(R) for I in cubes)


# ---------------------------------------------------------------------------
# main iteration checks
# ---------------------------------------------------------------------------

def _kernel_form(S: DyadicShift, R: DyadicCube, a: GridFunction, b: GridFunction) -> float:
    k = S.kernels.get(R)
    return 0.0 if k is None else component_form(k, a, b)


@dataclass
class ClassTerms:
    m: int
    kernels: int
    total: float
    gg: float
    gb_route: float      # sum_I |S_{R(I)}(g1, b2I)|
    bg_route: float
    bb_route: float      # sum_R |S_R(B1_R, B2_R)|, B_R = sum_{R(I)=R} b_I
    split_error: float   # |S(f1,f2) - S(g1,g2) - S(g1,b2) - S(b1,g2) - S(b1,b2)|
    collapse_error: float


def _class_terms(S: DyadicShift, Sm: DyadicShift, m: int, rho: int,
                 d1: CZDecomposition, d2: CZDecomposition,
                 f1q: GridFunction, f2q: GridFunction) -> ClassTerms:
    g1, g2 = d1.good, d2.good
    b1, b2 = d1.bad_total, d2.bad_total
    total = Sm.form(f1q, f2q)
    gg, gb, bg, bb = Sm.form(g1, g2), Sm.form(g1, b2), Sm.form(b1, g2), Sm.form(b1, b2)
    split = abs(total - gg - gb - bg - bb)
    cls = set(Sm.kernels)
    err = 0.0
    gb_route = bg_route = 0.0
    gb_sum = bg_sum = 0.0
    groups1, groups2 = {}, {}
    for I, b in d2.bad.items():
        R = r_of_i(I, m, rho)
        v = _kernel_form(S, R, g1, b) if R in cls else 0.0
        gb_route += abs(v)
        gb_sum += v
        if R is not None:
            groups2.setdefault(R, []).append(b)
    for I, b in d1.bad.items():
        R = r_of_i(I, m, rho)
        v = _kernel_form(S, R, b, g2) if R in cls else 0.0
        bg_route += abs(v)
        bg_sum += v
        if R is not None:
            groups1.setdefault(R, []).append(b)
    bb_sum = bb_route = 0.0
    for R in set(groups1) & set(groups2) & cls:
        B1 = sum(groups1[R][1:], groups1[R][0])
        B2 = sum(groups2[R][1:], groups2[R][0])
        v = _kernel_form(S, R, B1, B2)
        bb_sum += v
        bb_route += abs(v)
    err = max(abs(gb - gb_sum), abs(bg - bg_sum), abs(bb - bb_sum))
    return ClassTerms(m, len(Sm), total, abs(gg), gb_route, bg_route, bb_route, split, err)


def mainiter_constant(d: int, cert: float = 1.0, lam: float = DEFAULT_LAMBDA) -> float:
    """Per-class constant ``C'`` with ``|S_G'(f1 1_Q, f2 1_Q)| <= C' |Q| <f1>_Q <f2>_Q``:
    ``cert 2^d lam`` (good-good) ``+ 2 * 2^{d+1} lam`` (good-bad) ``+ 4 lam`` (bad-bad)."""
    return cert * 2.0 ** d * lam + 2 * 2.0 ** (d + 1) * lam + 4 * lam


@dataclass
class MainIterReport:
    lhs: float
    recursion_sum: float
    good_part: float
    normalizer: float          # rho |Q| <f1>_Q <f2>_Q
    residual: float            # max(0, |lhs| - recursion_sum) / normalizer
    identity_error: float      # relative error of S = S_G + sum_I S_D(I)
    envelope: float
    classes: list
    class_bounds_ok: bool
    cancellation_max: float
    bad_packing_ok: bool
    cz: tuple
    stopping: list

    @property
    def ok(self) -> bool:
        return (self.residual <= self.envelope and self.identity_error <= 1e-10
                and self.class_bounds_ok and self.cancellation_max <= 1e-12 and self.bad_packing_ok)

    def as_dict(self) -> dict:
        return {
            "lhs": self.lhs, "recursion_sum": self.recursion_sum, "good_part": self.good_part,
            "normalizer": self.normalizer, "residual": self.residual,
            "identity_error": self.identity_error, "envelope": self.envelope,
            "class_bounds_ok": self.class_bounds_ok, "cancellation_max": self.cancellation_max,
            "bad_packing_ok": self.bad_packing_ok, "stopping": [str(I) for I in self.stopping],
            "ok": self.ok,
        }


def cancellation_check(S: DyadicShift, dec: CZDecomposition, other: GridFunction,
                       bad_first: bool = False) -> float:
    """Largest normalized ``|S_R(g, b_I)|`` over kernel cubes ``R ⊋ I`` with
    ``l(R) >= 2^rho l(I)``; the block constancy and ``int b_I = 0`` make these vanish."""
    worst = 0.0
    gmax = float(np.linalg.norm(other.values, axis=-1).max())
    for I, b in dec.bad.items():
        bl1 = norms(b)[0]
        for k in range(0, I.depth - S.rho + 1):
            R = I.ancestor(k)
            if R not in S.kernels:
                continue
            v = _kernel_form(S, R, b, other) if bad_first else _kernel_form(S, R, other, b)
            scale = S.kernels[R].sup * R.measure * gmax * bl1
            if scale > 0:
                worst = max(worst, abs(v) / scale)
    return worst


def _inside_split(S: DyadicShift, f1: GridFunction, f2: GridFunction, Q: DyadicCube, cubes):
    """``S(f1 1_Q, f2 1_Q) = S_G(...) + sum_I S_{D(I)}(f1 1_I, f2 1_I)``, with the pieces."""
    f1q, f2q = f1.restrict(Q), f2.restrict(Q)
    lhs = S.form(f1q, f2q)
    G = [R for R in S.kernels if not _inside_any(R, cubes)]
    SG = S.restrict(G)
    good = SG.form(f1q, f2q)
    pieces = [S.restrict(lambda R, I=I: I.contains(R)).form(f1.restrict(I), f2.restrict(I)) for I in cubes]
    return f1q, f2q, lhs, SG, good, pieces


def mainiter_check(S: DyadicShift, f1: GridFunction, f2: GridFunction, Q: DyadicCube,
                   lam: float = DEFAULT_LAMBDA, envelope: float | None = None) -> MainIterReport:
    """Numerical check of the main iteration inequality on ``Q`` for scalar inputs."""
    if f1.n != 1 or f2.n != 1:
        raise ValueError("mainiter_check takes scalar inputs; use mainitervec_check")
    d, rho = S.d, S.rho
    cubes = stopping_children(f1, f2, Q, lam)
    a1, a2 = scalar_average(f1, Q), scalar_average(f2, Q)
    f1q, f2q, lhs, SG, good, pieces = _inside_split(S, f1, f2, Q, cubes)
    rec = float(sum(abs(p) for p in pieces))
    norm = rho * Q.measure * a1 * a2
    scale = max(abs(lhs), abs(good), rec, 1e-300)
    ident = abs(lhs - good - sum(pieces)) / scale
    cert = min(S.certificate.bound, 1.0) if np.isfinite(S.certificate.bound) else 1.0
    cprime = mainiter_constant(d, cert, lam)
    env = cprime if envelope is None else envelope
    if norm == 0:
        if abs(lhs) > 1e-300 and rec == 0:
            raise ValueError("nonzero form with vanishing averages")
        return MainIterReport(lhs, rec, good, 0.0, 0.0, ident, env, [], True, 0.0, True, (), cubes)
    d1, d2 = cz_decompose(f1, Q, cubes), cz_decompose(f2, Q, cubes)
    b1, b2 = cz_bounds(f1, d1, lam), cz_bounds(f2, d2, lam)
    base = Q.measure * a1 * a2
    classes, ok = [], True
    g1n, g2n = norms(d1.good)[1], norms(d2.good)[1]
    g1i, g2i = norms(d1.good)[2], norms(d2.good)[2]
    sb1 = sum(norms(b)[0] for b in d1.bad.values())
    sb2 = sum(norms(b)[0] for b in d2.bad.values())
    for m, cls in enumerate(scale_split(SG.kernels, rho)):
        Sm = SG.restrict(cls)
        t = _class_terms(S, Sm, m, rho, d1, d2, f1q, f2q)
        classes.append(t)
        tol = 1e-10 * max(abs(t.total), base, 1e-300)
        ok &= t.split_error <= tol and t.collapse_error <= tol
        ok &= t.gg <= cert * g1n * g2n * (1 + 1e-9) + tol
        ok &= t.gg <= cert * 2.0 ** d * lam * base * (1 + 1e-9)
        ok &= t.gb_route <= g1i * sb2 * (1 + 1e-12) + tol
        ok &= t.bg_route <= g2i * sb1 * (1 + 1e-12) + tol
        ok &= t.gb_route <= 2 * 2.0 ** d * lam * base * (1 + 1e-12)
        ok &= t.bg_route <= 2 * 2.0 ** d * lam * base * (1 + 1e-12)
        ok &= t.bb_route <= 4 * lam * base * (1 + 1e-12)
    canc = max(cancellation_check(S, d2, d1.good), cancellation_check(S, d1, d2.good, bad_first=True))
    bad_packing = _bad_packing_ok(f1q, d1, Q, rho, lam) and _bad_packing_ok(f2q, d2, Q, rho, lam)
    resid = max(0.0, abs(lhs) - rec) / norm
    return MainIterReport(lhs, rec, good, norm, resid, ident, env, classes, bool(ok), canc,
                          bad_packing, (b1, b2), cubes)


def _bad_packing_ok(fq: GridFunction, dec: CZDecomposition, Q: DyadicCube, rho: int, lam: float) -> bool:
    """``sum_{R(I)=R} ||b_I||_1 <= 2|R| <f>_R`` and ``<f 1_Q>_R <= lam <f>_Q`` for ``R`` not in ``E``."""
    aQ = scalar_average(fq, Q)
    ok = True
    for m in range(rho):
        groups = {}
        for I, b in dec.bad.items():
            R = r_of_i(I, m, rho)
            if R is not None:
                groups.setdefault(R, []).append(norms(b)[0])
        for R, l1s in groups.items():
            aR = scalar_average(fq, R)
            ok &= sum(l1s) <= 2 * R.measure * aR * (1 + 1e-12)
            ok &= aR <= lam * aQ * (1 + 1e-12)
    return bool(ok)


# ---------------------------------------------------------------------------
# off-diagonal terms
# ---------------------------------------------------------------------------

@dataclass
class OffDiagonalReport:
    total: float
    bound: float
    trichotomy_ok: bool
    cases: dict

    @property
    def ok(self) -> bool:
        return self.total <= self.bound * (1 + 1e-12) and self.trichotomy_ok


def offdiagonal_check(S: DyadicShift, f1: GridFunction, f2: GridFunction) -> OffDiagonalReport:
    """``sum_{k != l} |S(f1 1_{Q_k}, f2 1_{Q_l})| <= 2^{2d} (rho+1) <f1> <f2>`` on the root,
    with the three-case behaviour of each kernel checked."""
    d, rho = S.d, S.rho
    root = DyadicCube.root(d)
    kids = children(root, f1.L)
    total = 0.0
    ok = True
    cases = {"zero": 0, "averaged": 0, "otherwise": 0}
    for k, Qk in enumerate(kids):
        for l, Ql in enumerate(kids):
            if k == l:
                continue
            a, b = f1.restrict(Qk), f2.restrict(Ql)
            total += abs(S.form(a, b))
            abar = GridFunction.indicator(Qk, f1.L, float(f1.integral(Qk)[0]) / Qk.measure)
            bbar = GridFunction.indicator(Ql, f2.L, float(f2.integral(Ql)[0]) / Ql.measure)
            bound = Qk.measure * scalar_average(f1, Qk) * scalar_average(f2, Ql)
            for R, kern in S.kernels.items():
                v = component_form(kern, a, b)
                scale = max(abs(v), bound, 1e-300)
                if not (R.contains(Qk) and R.contains(Ql)):
                    cases["zero"] += 1
                    ok &= abs(v) <= 1e-12 * scale
                elif R.side >= 2.0 ** rho * Ql.side:
                    cases["averaged"] += 1
                    ok &= abs(v - component_form(kern, abar, bbar)) <= 1e-12 * scale
                else:
                    cases["otherwise"] += 1
                    ok &= abs(v) <= bound * (1 + 1e-12)
    bnd = 2.0 ** (2 * d) * (rho + 1) * scalar_average(f1, root) * scalar_average(f2, root)
    return OffDiagonalReport(total, bnd, bool(ok), cases)


# ---------------------------------------------------------------------------
# vector version
# ---------------------------------------------------------------------------

@dataclass
class MainIterVecReport:
    lhs: float
    recursion_sum: float
    good_part: float
    normalizer: float       # rho |Q| <f1>_Q <f2>_Q (Minkowski product)
    residual: float
    identity_error: float
    john_pair_ok: bool
    john_pair_margin: float    # max |(A1 e_k)(A2 e_l)| / <f1><f2>
    coordwise_max: float    # max_{k,l} |S_G(f~1k 1_Q, f~2l 1_Q)| / (rho |Q|)
    coordwise_bound: float
    recombination_error: float
    degenerate: bool
    body_cz: tuple
    stopping: list

    @property
    def ok(self) -> bool:
        return (self.john_pair_ok and self.coordwise_max <= self.coordwise_bound
                and self.identity_error <= 1e-10 and self.recombination_error <= 1e-9
                and all(r.ok() for r in self.body_cz))

    def as_dict(self) -> dict:
        return {
            "lhs": self.lhs, "recursion_sum": self.recursion_sum, "good_part": self.good_part,
            "normalizer": self.normalizer, "residual": self.residual,
            "identity_error": self.identity_error, "john_pair_ok": self.john_pair_ok,
            "john_pair_margin": self.john_pair_margin, "coordwise_max": self.coordwise_max,
            "coordwise_bound": self.coordwise_bound,
            "recombination_error": self.recombination_error, "degenerate": self.degenerate,
            "stopping": [str(I) for I in self.stopping], "ok": self.ok,
        }


def coordwise_constant(n: int, d: int, A: float, cert: float = 1.0) -> float:
    """Per-class constant for one coordinate pair after John normalization: with
    ``c = 2^d A sqrt(n)`` bounding ``g~``, ``cert c^2`` (good-good)
    ``+ 2 c (2c)(2n^2/A)`` (good-bad) ``+ 4 A n`` (bad-bad)."""
    c = 2.0 ** d * A * np.sqrt(n)
    return cert * c * c + 2 * c * 2 * c * 2 * n * n / A + 4 * A * n


def john_map(K: Zonotope) -> tuple[np.ndarray, bool]:
    """Shape matrix of the John ellipsoid; for lower-dimensional bodies, the John
    ellipsoid of the span (singular, to be inverted on the span only)."""
    E = john_ellipsoid(K)
    return E.shape, E.degenerate


def mainitervec_check(S: DyadicShift, f1: GridFunction, f2: GridFunction, Q: DyadicCube,
                      A: float | None = None) -> MainIterVecReport:
    """Vector main-iteration check: John normalization, the John pair bound, coordinatewise bounds on
    the ``G`` part, and the recombination identity."""
    n, d, rho = f1.n, S.d, S.rho
    if n > 3:
        raise ValueError("n <= 3 supported")
    A = default_dilation(n) if A is None else float(A)
    cubes = vector_stopping_pair(f1, f2, Q, A)
    K1, K2 = body_average(f1, Q), body_average(f2, Q)
    prod = minkowski_product_full(K1, K2).value
    f1q, f2q, lhs, SG, good, pieces = _inside_split(S, f1, f2, Q, cubes)
    rec = float(sum(abs(p) for p in pieces))
    norm = rho * Q.measure * prod
    scale = max(abs(lhs), abs(good), rec, 1e-300)
    ident = abs(lhs - good - sum(pieces)) / scale
    A1, deg1 = john_map(K1)
    A2, deg2 = john_map(K2)
    # the John pair bound: A_j e_k lies in the John ellipsoid, hence in <f_j>_Q
    M = A1.T @ A2
    jk = float(np.abs(M).max())
    john_pair_ok = jk <= prod * (1 + 1e-9) + 1e-300
    # f takes values in the span of its body, where the pseudo-inverse inverts A
    ft1 = f1q.apply_matrix(np.linalg.pinv(A1))
    ft2 = f2q.apply_matrix(np.linalg.pinv(A2))
    coords = np.zeros((n, n))
    for k in range(n):
        for l in range(n):
            coords[k, l] = SG.form(ft1.component(k), ft2.component(l))
    recomb = abs(float(np.sum(M * coords)) - good)
    recomb /= max(abs(good), float(np.abs(M * coords).sum()), 1e-300)
    cert = min(S.certificate.bound, 1.0) if np.isfinite(S.certificate.bound) else 1.0
    cw = float(np.abs(coords).max()) / (rho * Q.measure) if Q.measure else 0.0
    cz = (body_cz_check(f1, cz_decompose(f1, Q, cubes), A), body_cz_check(f2, cz_decompose(f2, Q, cubes), A))
    resid = max(0.0, abs(lhs) - rec) / norm if norm > 0 else 0.0
    return MainIterVecReport(lhs, rec, good, norm, resid, ident, bool(john_pair_ok),
                             jk / prod if prod > 0 else 0.0, cw,
                             float(coordwise_constant(n, d, A, cert)), float(recomb), deg1 or deg2, cz, cubes)

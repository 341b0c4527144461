"""Symmetric zonotopes: convex-body averages, support functions, containment,
John ellipsoids, Minkowski products and the vector-valued stopping rule.

A zonotope ``K = {sum_i t_i g_i : |t_i| <= 1}`` has support function
``h_K(u) = sum_i |<g_i, u>|``.  The body average of a piecewise-constant ``f`` over ``Q``
is the zonotope with one generator ``f(c) |c| / |Q|`` per cell ``c`` of ``Q``: the
extremal test functions are cellwise sign patterns.

Geometry is exact (up to floating point) for ``n <= 3``: containment is tested on the
facet normals of the outer body, which are generator perpendiculars (``n = 2``) or
pairwise cross products (``n = 3``).  ``n >= 4`` is not supported.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .dyadic import DyadicCube, GridFunction, level_reduce, maximal_cubes

MAX_N = 3
ENUMERATION_LIMIT = 20
VERTEX_LIMIT_3D = 200
RANK_RTOL = 1e-12
CONTAIN_RTOL = 1e-12


# ---------------------------------------------------------------------------
# zonotopes
# ---------------------------------------------------------------------------

def _canonical(G: np.ndarray) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    if G.size == 0:
        return G.reshape(0, G.shape[-1] if G.ndim == 2 else 1)
    norms = np.linalg.norm(G, axis=1)
    G = G[norms > 0]
    norms = norms[norms > 0]
    if len(G) == 0:
        return G
    # first nonzero coordinate nonnegative
    first = np.argmax(G != 0, axis=1)
    sign = np.sign(G[np.arange(len(G)), first])
    G = G * sign[:, None]
    # merge parallel generators (same unit direction up to rounding)
    keys = np.round(G / norms[:, None], 12) + 0.0
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    out = np.zeros((inv.max() + 1, G.shape[1]))
    np.add.at(out, inv, G)
    return out


@dataclass(frozen=True)
class Zonotope:
    """Centrally symmetric zonotope given by its generator rows ``(p, n)``."""

    generators: np.ndarray
    n: int = field(default=0)

    def __post_init__(self):
        G = np.asarray(self.generators, dtype=float)
        if G.ndim == 1:
            G = G.reshape(-1, self.n or 1) if G.size else np.zeros((0, self.n or 1))
        n = self.n or G.shape[1]
        if G.shape[1] != n:
            raise ValueError("generator width does not match n")
        G = G.copy()
        G.flags.writeable = False
        object.__setattr__(self, "generators", G)
        object.__setattr__(self, "n", n)

    @classmethod
    def from_generators(cls, G, n: int | None = None, canonical: bool = True) -> "Zonotope":
        G = np.asarray(G, dtype=float)
        if G.ndim == 1:
            G = G.reshape(1, -1) if n is None else G.reshape(-1, n)
        n = G.shape[1] if n is None else n
        return cls(_canonical(G) if canonical else G, n)

    @classmethod
    def segment(cls, v) -> "Zonotope":
        return cls.from_generators(np.atleast_2d(np.asarray(v, dtype=float)))

    @property
    def p(self) -> int:
        return self.generators.shape[0]

    def support(self, u) -> np.ndarray | float:
        """``h_K(u)``; ``u`` may be a single vector or an ``(m, n)`` stack."""
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            return float(np.abs(self.generators @ u).sum())
        return _support_rows(self.generators, u)

    def dilate(self, c: float) -> "Zonotope":
        return Zonotope(self.generators * abs(c), self.n)

    def transform(self, M) -> "Zonotope":
        """``M K``, again a zonotope."""
        M = np.asarray(M, dtype=float)
        return Zonotope.from_generators(self.generators @ M.T, M.shape[0])

    def rank(self) -> int:
        return _span(self.generators, self.n)[0].shape[1]

    def radius(self) -> float:
        """Largest Euclidean norm of a point of ``K``."""
        if self.p == 0:
            return 0.0
        if self.n == 1:
            return float(np.abs(self.generators).sum())
        pts, _ = vertices(self) if _vertex_enumerable(self) else (None, None)
        if pts is not None:
            return float(np.linalg.norm(pts, axis=1).max())
        return float(self.support(direction_bank(self.n)).max())

    def regularized(self, eps_rel: float = 1e-10) -> "Zonotope":
        """Add ``eps * e_k`` generators, ``eps = eps_rel * (largest generator norm)``."""
        scale = float(np.linalg.norm(self.generators, axis=1).max()) if self.p else 1.0
        eps = eps_rel * scale
        return Zonotope.from_generators(np.vstack([self.generators, eps * np.eye(self.n)]), self.n)


def body_average(f: GridFunction, Q: DyadicCube) -> Zonotope:
    """The convex-body average ``<f>_Q``."""
    vals = f.cube_values(Q)
    return Zonotope.from_generators(vals * (f.cell_measure / Q.measure), f.n)


# ---------------------------------------------------------------------------
# directions, spans, facets, vertices
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _bank(n: int, count: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0]])
    if n == 2:
        t = np.pi * np.arange(count) / count
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if n == 3:
        # Fibonacci lattice on the sphere; symmetric bodies need only a hemisphere
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        r = np.sqrt(1 - z * z)
        phi = np.pi * (1 + 5 ** 0.5) * i
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    raise ValueError(f"n={n} unsupported")


def direction_bank(n: int, count: int | None = None) -> np.ndarray:
    """Quasi-uniform unit directions: 360 half-circle angles for ``n=2``, 10**4 for ``n=3``."""
    if count is None:
        count = {1: 1, 2: 360, 3: 10_000}.get(n, 0)
    b = _bank(n, count)
    b.flags.writeable = False
    return b


def _span(G: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal bases ``(span, complement)`` of the generator span."""
    if G.shape[0] == 0:
        return np.zeros((n, 0)), np.eye(n)
    U, s, _ = np.linalg.svd(G.T, full_matrices=True)
    r = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    return U[:, :r], U[:, r:]


def _unique_directions(V: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(V, axis=1)
    V = V[norms > 0] / norms[norms > 0, None]
    if len(V) == 0:
        return V
    first = np.argmax(np.abs(V) > 1e-15, axis=1)
    V = V * np.sign(V[np.arange(len(V)), first])[:, None]
    _, keep = np.unique(np.round(V, 12) + 0.0, axis=0, return_index=True)
    return V[np.sort(keep)]


def _facet_normals_full(G: np.ndarray, r: int) -> np.ndarray:
    """Unit facet normals of a full-dimensional zonotope in R^r, one per antipodal pair."""
    if r == 1:
        return np.array([[1.0]])
    if r == 2:
        return _unique_directions(np.stack([-G[:, 1], G[:, 0]], axis=1))
    if r == 3:
        i, j = np.triu_indices(len(G), 1)
        C = np.cross(G[i], G[j])
        scale = np.linalg.norm(G[i], axis=1) * np.linalg.norm(G[j], axis=1)
        C = C[np.linalg.norm(C, axis=1) > 1e-12 * scale]
        return _unique_directions(C)
    raise ValueError(f"n={r} unsupported")


def facet_normals(K: Zonotope) -> tuple[np.ndarray, np.ndarray]:
    """``(normals, complement)``: unit facet normals of ``K`` inside its span, and an
    orthonormal basis of the orthogonal complement of the span (rows)."""
    if K.n > MAX_N:
        raise ValueError(f"n={K.n} unsupported")
    U, Uc = _span(K.generators, K.n)
    r = U.shape[1]
    if r == 0:
        return np.zeros((0, K.n)), Uc.T
    normals = _facet_normals_full(K.generators @ U, r) @ U.T
    return normals, Uc.T


def _signs(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0, -1.0)


def _vertex_signs_2d(G: np.ndarray) -> np.ndarray:
    """Sign patterns of all vertices of a planar zonotope (generators ``(p, 2)``)."""
    p = len(G)
    if p == 0:
        return np.zeros((1, 0))
    ang = np.mod(np.arctan2(G[:, 0], -G[:, 1]), np.pi)  # angle of the perpendicular
    crit = np.sort(np.concatenate([ang, ang + np.pi]))
    gaps = np.diff(np.concatenate([crit, crit[:1] + 2 * np.pi]))
    mids = crit + gaps / 2
    mids = mids[gaps > 1e-13]
    if len(mids) == 0:
        mids = np.array([0.0, np.pi])
    U = np.stack([np.cos(mids), np.sin(mids)], axis=1)
    return _signs(U @ G.T)


def _vertex_signs_3d(G: np.ndarray) -> np.ndarray:
    p = len(G)
    if p == 0:
        return np.zeros((1, 0))
    patterns = []
    gn = np.linalg.norm(G, axis=1)
    for i, j in itertools.combinations(range(p), 2):
        w = np.cross(G[i], G[j])
        nw = np.linalg.norm(w)
        if nw <= 1e-12 * gn[i] * gn[j]:
            continue
        w = w / nw
        dots = G @ w
        zero = np.abs(dots) <= 1e-12 * gn
        base = _signs(dots)
        # tangent plane at w
        e1 = G[i] - np.dot(G[i], w) * w
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(w, e1)
        Z = np.flatnonzero(zero)
        sub = _vertex_signs_2d(np.stack([G[Z] @ e1, G[Z] @ e2], axis=1))
        for s in sub:
            pat = base.copy()
            pat[Z] = s
            patterns.append(pat)
    if not patterns:  # all generators parallel: a segment
        return _vertex_signs_2d(np.stack([G @ (G[0] / gn[0]), np.zeros(p)], axis=1))
    return np.unique(np.array(patterns), axis=0)


def _vertex_enumerable(K: Zonotope) -> bool:
    return K.n <= 2 or (K.n == 3 and K.p <= VERTEX_LIMIT_3D)


def vertices(K: Zonotope) -> tuple[np.ndarray, np.ndarray]:
    """``(points, signs)`` with ``points = signs @ generators``; contains every vertex.

    Exact for ``n <= 2`` and for ``n = 3`` with at most ``VERTEX_LIMIT_3D`` generators.
    """
    G = K.generators
    if K.p == 0:
        return np.zeros((1, K.n)), np.zeros((1, 0))
    U, _ = _span(G, K.n)
    r = U.shape[1]
    Gr = G @ U
    if r == 1:
        s = _signs(Gr[:, 0])[None, :]
        S = np.vstack([s, -s])
    elif r == 2:
        S = _vertex_signs_2d(Gr)
    elif r == 3:
        if K.p > VERTEX_LIMIT_3D:
            raise ValueError(f"vertex enumeration capped at {VERTEX_LIMIT_3D} generators for n=3")
        S = _vertex_signs_3d(Gr)
    else:
        raise ValueError(f"n={K.n} unsupported")
    return S @ G, S


def _all_signs(p: int) -> np.ndarray:
    return 1.0 - 2.0 * ((np.arange(1 << p)[:, None] >> np.arange(p)) & 1)


# ---------------------------------------------------------------------------
# containment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Containment:
    verdict: bool
    direction: np.ndarray | None
    margin: float  # max over tested directions of h_cH(u) - h_K(u), normalized


def contains(K: Zonotope, H: Zonotope, c: float = 1.0, rtol: float = CONTAIN_RTOL,
             method: str = "facets") -> Containment:
    """Is ``c H`` a subset of ``K``?  Returns the verdict and a separating direction.

    ``method='facets'`` is exact: ``cH`` lies in ``K`` iff ``h_cH <= h_K`` on the facet
    normals of ``K`` (and ``h_cH = 0`` off the span of ``K``).  ``method='bank'`` only
    tests the direction bank, a necessary condition.
    """
    if K.n != H.n:
        raise ValueError(f"dimension mismatch: {K.n} vs {H.n}")
    c = abs(c)
    scale = max(float(np.abs(K.generators).sum()), c * float(np.abs(H.generators).sum()), 1e-300)
    if method == "bank":
        dirs, comp = direction_bank(K.n), np.zeros((0, K.n))
    else:
        dirs, comp = facet_normals(K)
    worst, wdir = -np.inf, None
    if len(dirs):
        gap = c * H.support(dirs) - K.support(dirs)
        i = int(np.argmax(gap))
        worst, wdir = gap[i], dirs[i]
    if len(comp):
        gap = c * H.support(comp)
        i = int(np.argmax(gap))
        if gap[i] > worst:
            worst, wdir = gap[i], comp[i]
    margin = float(worst) / scale
    ok = margin <= rtol
    return Containment(ok, None if ok else np.array(wdir), margin)


def contains_point(K: Zonotope, v, c: float = 1.0, rtol: float = CONTAIN_RTOL) -> bool:
    """Is ``v`` in ``c K``?"""
    return contains(K.dilate(c), Zonotope.from_generators(np.atleast_2d(v), K.n), rtol=rtol).verdict


def dilate(K: Zonotope, c: float) -> Zonotope:
    return K.dilate(c)


# ---------------------------------------------------------------------------
# John ellipsoid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ellipsoid:
    """``shape @ (unit ball)``; ``shape`` symmetric positive semidefinite."""

    shape: np.ndarray
    degenerate: bool = False
    iterations: int = 0

    @property
    def n(self) -> int:
        return self.shape.shape[0]

    def support(self, u) -> np.ndarray | float:
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            return float(np.linalg.norm(self.shape @ u))
        return np.linalg.norm(u @ self.shape.T, axis=1)

    def volume_factor(self) -> float:
        return float(abs(np.linalg.det(self.shape)))


def _support_rows(G: np.ndarray, D: np.ndarray, chunk: int = 1 << 22) -> np.ndarray:
    """``h(u)`` for every row ``u`` of ``D``, chunked to bound memory."""
    step = max(1, chunk // max(1, len(G)))
    return np.concatenate([np.abs(D[i:i + step] @ G.T).sum(axis=1)
                           for i in range(0, len(D), step)]) if len(D) else np.zeros(0)


def _sym_basis(r: int) -> list[np.ndarray]:
    out = []
    for i in range(r):
        for j in range(i, r):
            E = np.zeros((r, r))
            E[i, j] = E[j, i] = 1.0
            out.append(E)
    return out


def _max_logdet(P: np.ndarray, b2: np.ndarray, gap: float = 1e-11,
                max_newton: int = 2000) -> tuple[np.ndarray, int]:
    """Maximize ``log det M`` over symmetric ``M`` subject to ``p_i^T M p_i <= b2_i``.

    Log-barrier path following with damped Newton steps in the ``r(r+1)/2`` entries of
    ``M`` (no objective evaluations, so large ``t`` loses no precision); stops once
    the barrier duality gap ``m/t`` is below ``gap``.
    """
    m, r = P.shape
    Es = _sym_basis(r)
    F = np.stack([np.einsum("ij,jk,ik->i", P, E, P) for E in Es], axis=1)
    Ms = np.stack(Es)
    x = np.array([0.5 * b2.min() if E.trace() else 0.0 for E in Es])

    t, steps = 1.0, 0
    while True:
        for _ in range(100):
            M = np.tensordot(x, Ms, 1)
            Minv = np.linalg.inv(M)
            c = b2 - F @ x
            Y = np.einsum("ij,kjl->kil", Minv, Ms)
            grad = -t * np.einsum("kii->k", Y) + F.T @ (1.0 / c)
            hess = t * np.einsum("kij,lji->kl", Y, Y) + (F.T / c ** 2) @ F
            dx = -np.linalg.solve(hess, grad)
            dec = -grad @ dx
            steps += 1
            if dec / 2 <= 1e-9 or steps >= max_newton:
                break
            # largest step keeping c > 0 and M positive definite
            Fd = F @ dx
            pos = Fd > 0
            amax = float(np.min(c[pos] / Fd[pos])) if pos.any() else np.inf
            Li = np.linalg.inv(np.linalg.cholesky(M))
            lam = np.linalg.eigvalsh(Li @ np.tensordot(dx, Ms, 1) @ Li.T)
            if lam[0] < 0:
                amax = min(amax, -1.0 / lam[0])
            # damped Newton step for a self-concordant barrier
            lam_n = np.sqrt(dec)
            alpha = min(1.0 if lam_n < 0.25 else 1.0 / (1.0 + lam_n), 0.99 * amax)
            x = x + alpha * dx
        if m / t <= gap or steps >= max_newton:
            return np.tensordot(x, Ms, 1), steps
        t *= 20.0


def _max_logdet_active(P: np.ndarray, b2: np.ndarray, gap: float, batch: int = 64) -> tuple[np.ndarray, int]:
    """``_max_logdet`` on a growing subset of constraints until none is violated."""
    m = len(P)
    if m <= 4 * batch:
        return _max_logdet(P, b2, gap)
    # nearest facets plus, for spread, the best-aligned facet for each bank direction
    bank = direction_bank(P.shape[1], 4 * batch if P.shape[1] == 3 else batch)
    aligned = np.argmax(np.abs(bank @ P.T) / np.sqrt(b2), axis=1)
    active = np.union1d(np.argsort(b2)[:batch], aligned)
    total = 0
    while True:
        M, it = _max_logdet(P[active], b2[active], gap)
        total += it
        val = np.einsum("ij,jk,ik->i", P, M, P) / b2
        viol = np.flatnonzero(val > 1 + 1e-12)
        if len(viol) == 0:
            return M, total
        add = viol[np.argsort(-val[viol])[:batch]]
        active = np.union1d(active, add)


def john_ellipsoid(K: Zonotope, gap: float = 1e-11) -> Ellipsoid:
    """Largest-volume ellipsoid inside ``K`` (centred, since ``K`` is symmetric).

    ``A B`` lies in ``K`` iff ``|A u| <= h_K(u)`` for every facet normal ``u``; with
    ``M = A^2`` these constraints are linear, so the problem is a small log-det program
    solved by an interior-point method.  The result is shrunk, if needed, so that every
    facet constraint holds exactly.
    A lower-dimensional ``K`` gets the John ellipsoid of its span and ``degenerate=True``.
    """
    if K.n > MAX_N:
        raise ValueError(f"n={K.n} unsupported")
    U, _ = _span(K.generators, K.n)
    r = U.shape[1]
    if r == 0:
        return Ellipsoid(np.zeros((K.n, K.n)), True, 0)
    Gr = K.generators @ U
    if r == 1:
        Ar = np.array([[np.abs(Gr).sum()]])
        it = 0
    else:
        # John ellipsoids are linearly equivariant: solve for the whitened body T K
        _, sv, Vt = np.linalg.svd(Gr, full_matrices=False)
        T = Vt / sv[:, None]
        Gw = Gr @ T.T
        normals = _facet_normals_full(Gw, r)
        h = _support_rows(Gw, normals)
        Mw, it = _max_logdet_active(normals, h ** 2, gap)
        ev, V = np.linalg.eigh(0.5 * (Mw + Mw.T))
        Aw = (V * np.sqrt(np.clip(ev, 0, None))) @ V.T
        B = np.linalg.solve(T, Aw)
        ev, V = np.linalg.eigh(B @ B.T)
        Ar = (V * np.sqrt(np.clip(ev, 0, None))) @ V.T
        normals = _facet_normals_full(Gr, r)
        h = _support_rows(Gr, normals)
        # certify inner containment: ||Ar u|| <= h(u) on every facet normal
        worst = float(np.max(np.linalg.norm(normals @ Ar, axis=1) / h))
        if worst > 1.0:
            Ar = Ar / worst
    A = U @ Ar @ U.T
    A = 0.5 * (A + A.T)
    return Ellipsoid(A, r < K.n, it)


@dataclass(frozen=True)
class Sandwich:
    inner: float   # max_u h_E(u)/h_K(u) over facet normals; <= 1 means E in K
    outer: float   # max over points of K of |E^{-1} v| / sqrt(rank); <= 1 means K in sqrt(n) E
    exact: bool

    def ok(self, tol: float = 1e-6) -> bool:
        return self.inner <= 1 + tol and self.outer <= 1 + tol


def sandwich_margins(K: Zonotope, E: Ellipsoid) -> Sandwich:
    """Check ``E in K in sqrt(n) E`` (``sqrt(rank)`` within the span for degenerate bodies)."""
    U, _ = _span(K.generators, K.n)
    r = U.shape[1]
    if r == 0:
        return Sandwich(0.0, 0.0, True)
    normals, _ = facet_normals(K)
    inner = float(np.max(E.support(normals) / _support_rows(K.generators, normals)))
    Ar = U.T @ E.shape @ U
    Ainv = np.linalg.inv(Ar)
    Gr = K.generators @ U
    if r == 1:
        return Sandwich(inner, float(np.abs(Gr).sum() * abs(Ainv[0, 0])), True)
    if K.p <= 16 or _vertex_enumerable(K):
        pts, _ = vertices(K)
        outer = float(np.max(np.linalg.norm((pts @ U) @ Ainv.T, axis=1)))
        exact = True
    else:
        # h_K(A^{-T} w) over unit w bounds |A^{-1} v| from below; sampled
        dirs = direction_bank(r)
        outer = float(np.max(_support_rows(Gr, dirs @ Ainv)))
        exact = False
    return Sandwich(inner, outer / np.sqrt(r), exact)


# ---------------------------------------------------------------------------
# Minkowski product
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProductResult:
    value: float
    lower: float
    upper: float
    method: str
    signs_k: np.ndarray
    signs_h: np.ndarray


def _enumerate_product(K: Zonotope, H: Zonotope) -> tuple[float, np.ndarray, np.ndarray]:
    swap = K.p > H.p
    X, Y = (H, K) if swap else (K, H)
    S = _all_signs(X.p)
    best, bs = -1.0, None
    for lo in range(0, len(S), 1 << 14):
        pts = S[lo:lo + (1 << 14)] @ X.generators
        vals = Y.support(pts)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, bs = float(vals[i]), S[lo + i]
    t = _signs(Y.generators @ (bs @ X.generators))
    return (best, t, bs) if swap else (best, bs, t)


def _ascent(M: np.ndarray, starts: np.ndarray, max_rounds: int = 100) -> tuple[float, np.ndarray, np.ndarray]:
    """Alternating sign ascent for ``max s^T M t`` from the given ``t`` starts (rows)."""
    T = starts.copy()
    for _ in range(max_rounds):
        S = _signs(T @ M.T)
        Tn = _signs(S @ M)
        if np.array_equal(Tn, T):
            break
        T = Tn
    S = _signs(T @ M.T)
    vals = np.einsum("ip,pq,iq->i", S, M, T)
    i = int(np.argmax(vals))
    return float(vals[i]), S[i], T[i]


def alternating_ascent(K: Zonotope, H: Zonotope, extra_starts: int = 0, seed: int = 0) -> ProductResult:
    """Lower bound for ``KH`` by alternating best responses.

    Started from every vertex sign pattern of ``H`` that can be enumerated (exact for
    ``n <= 2`` and small ``n = 3`` bodies), otherwise from the direction bank, plus
    ``extra_starts`` random patterns.
    """
    if K.n != H.n:
        raise ValueError(f"dimension mismatch: {K.n} vs {H.n}")
    if K.p == 0 or H.p == 0:
        return ProductResult(0.0, 0.0, 0.0, "ascent", np.zeros(K.p), np.zeros(H.p))
    M = K.generators @ H.generators.T
    if _vertex_enumerable(H):
        starts = vertices(H)[1]
    else:
        starts = _signs(direction_bank(H.n) @ H.generators.T)
    if extra_starts:
        rng = np.random.default_rng(seed)
        starts = np.vstack([starts, _signs(rng.standard_normal((extra_starts, H.p)))])
    val, s, t = _ascent(M, starts)
    return ProductResult(val, val, np.inf, "ascent", s, t)


def product_upper_bound(K: Zonotope, H: Zonotope) -> float:
    """``n * ||A_K^T A_H||`` from ``K in sqrt(n) E_K`` and ``H in sqrt(n) E_H``."""
    EK, EH = john_ellipsoid(K), john_ellipsoid(H)
    sk = sandwich_margins(K, EK).outer
    sh = sandwich_margins(H, EH).outer
    # the computed ellipsoids are certified up to these outer margins
    return K.n * max(sk, 1.0) * max(sh, 1.0) * float(np.linalg.norm(EK.shape.T @ EH.shape, 2))


def minkowski_product(K: Zonotope, H: Zonotope, method: str = "auto") -> float:
    """Right endpoint of the Minkowski product ``KH = {<k, h> : k in K, h in H}``."""
    return minkowski_product_full(K, H, method).value


def minkowski_product_full(K: Zonotope, H: Zonotope, method: str = "auto") -> ProductResult:
    """Minkowski product with the extremizing sign patterns on both bodies.

    Methods: ``enumerate`` (all sign vectors of the smaller body), ``vertex`` (every
    vertex of ``H`` against ``h_K``; exact for ``n <= 3`` within the vertex limit),
    ``ascent`` (lower bound, with the John upper bound reported).
    """
    if K.n != H.n:
        raise ValueError(f"dimension mismatch: {K.n} vs {H.n}")
    if K.p == 0 or H.p == 0:
        return ProductResult(0.0, 0.0, 0.0, "empty", np.ones(K.p), np.ones(H.p))
    if method == "auto":
        if K.n == 1:
            method = "interval"
        elif min(K.p, H.p) <= 12:
            method = "enumerate"
        elif _vertex_enumerable(H) or _vertex_enumerable(K):
            method = "vertex"
        else:
            method = "ascent"
    if method == "interval":
        s = _signs(K.generators[:, 0])
        t = _signs(H.generators[:, 0])
        v = float(np.abs(K.generators).sum() * np.abs(H.generators).sum())
        return ProductResult(v, v, v, method, s, t)
    if method == "enumerate":
        if min(K.p, H.p) > ENUMERATION_LIMIT:
            raise ValueError(f"enumeration limited to {ENUMERATION_LIMIT} generators")
        v, s, t = _enumerate_product(K, H)
        return ProductResult(v, v, v, method, s, t)
    if method == "vertex":
        swap = not _vertex_enumerable(H)
        X, Y = (K, H) if swap else (H, K)
        pts, S = vertices(X)
        vals = Y.support(pts)
        i = int(np.argmax(vals))
        other = _signs(Y.generators @ pts[i])
        s, t = (S[i], other) if swap else (other, S[i])
        v = float(vals[i])
        return ProductResult(v, v, v, method, s, t)
    if method == "ascent":
        res = alternating_ascent(K, H)
        return ProductResult(res.value, res.value, product_upper_bound(K, H), method,
                             res.signs_k, res.signs_h)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# vector stopping rule
# ---------------------------------------------------------------------------

def default_dilation(n: int) -> float:
    return 2.0 ** 8 * n * n


def _noncontained_levels(f: GridFunction, Q: DyadicCube, A: float, chunk: int = 4096) -> list[np.ndarray]:
    """Boolean arrays, one per relative depth ``1..L-depth``: ``<f>_I`` not inside ``A <f>_Q``."""
    d, L = f.d, f.L
    K = body_average(f, Q)
    normals, comp = facet_normals(K)
    block = f.values[Q.slices(L)]
    span_r = L - Q.depth
    flags = [np.zeros((1 << r,) * d, dtype=bool) for r in range(span_r + 1)]
    if span_r == 0:
        return flags
    scale = float(np.linalg.norm(block, axis=-1).mean()) if block.size else 0.0
    atol = CONTAIN_RTOL * A * scale
    cell = f.cell_measure
    dirs = [(normals, A * K.support(normals) * (1 + CONTAIN_RTOL) + atol if len(normals) else None),
            (comp, np.full(len(comp), atol))]
    for D, thr in dirs:
        for lo in range(0, len(D), chunk):
            Dc = D[lo:lo + chunk]
            P = np.abs(block @ Dc.T)
            for r in range(1, span_r + 1):
                meas = 2.0 ** (-d * (Q.depth + r))
                h = level_reduce(P, d, r) * (cell / meas)
                flags[r] |= np.any(h > thr[lo:lo + chunk], axis=-1)
    return flags


def vector_stopping(f: GridFunction, Q: DyadicCube, A: float | None = None) -> list[DyadicCube]:
    """Maximal strict dyadic subcubes ``I`` of ``Q`` with ``<f>_I`` not inside ``A <f>_Q``."""
    n = f.n
    A = default_dilation(n) if A is None else float(A)
    if A <= n * n:
        raise ValueError(f"dilation A={A} must exceed n^2={n * n}")
    f._check_cube(Q)
    return maximal_cubes(_noncontained_levels(f, Q, A), Q)


@dataclass
class VectorStoppingReport:
    cubes: list[DyadicCube]
    A: float
    containment_ok: bool
    containment_margin: float
    packing_cells: int
    packing_ok: bool
    types: dict
    type_packing: dict
    john_degenerate: bool

    def as_dict(self) -> dict:
        return {
            "cubes": [str(c) for c in self.cubes], "A": self.A,
            "containment_ok": self.containment_ok, "containment_margin": self.containment_margin,
            "packing_cells": self.packing_cells, "packing_ok": self.packing_ok,
            "type_packing": {str(k): v for k, v in self.type_packing.items()},
            "john_degenerate": self.john_degenerate,
        }


def vector_stopping_report(f: GridFunction, Q: DyadicCube, A: float | None = None) -> VectorStoppingReport:
    """Stopping set with its properties checked: ``<f>_I in 2^d A <f>_Q`` for every ``I``,
    ``sum |I| < (n^2/A)|Q|`` compared exactly in integer cell counts, and the per-type
    diagnostic after John normalization (each ``I`` typed by a witnessing coordinate)."""
    n, d = f.n, f.d
    A = default_dilation(n) if A is None else float(A)
    cubes = vector_stopping(f, Q, A)
    K = body_average(f, Q)
    big = K.dilate(2 ** d * A)
    margin, ok = -np.inf, True
    for I in cubes:
        c = contains(big, body_average(f, I))
        margin = max(margin, c.margin)
        ok &= c.verdict
    cells = sum(I.cells(f.L) for I in cubes)
    qcells = Q.cells(f.L)
    # sum |I| < (n^2/A)|Q|  <=>  cells * A < n^2 * qcells   (A is 2^8 n^2 by default: exact)
    packing_ok = cells * A < n * n * qcells
    E = john_ellipsoid(K.regularized() if K.rank() < n else K)
    Tinv = np.linalg.inv(E.shape)
    ft = f.apply_matrix(Tinv)
    types = {}
    for I in cubes:
        h = body_average(ft, I).support(np.eye(n))
        types[I] = [j for j in range(n) if np.sqrt(n) * h[j] > A]
    type_packing = {}
    for j in range(n):
        s = sum(I.measure for I in cubes if j in types[I])
        type_packing[j] = {"sum": s, "bound": n / A * Q.measure, "ok": s < n / A * Q.measure}
    return VectorStoppingReport(cubes, A, bool(ok), float(margin if cubes else 0.0), cells,
                                bool(packing_ok), types, type_packing, K.rank() < n)

"""Seeded randomized campaigns: configuration, input generators, domination checks and
the suite runner behind the command line.

Every trial draws from its own generator keyed by ``(seed, trial)``, so results do not
depend on execution order or worker count.  Reports hold no timings and are sorted
before serialization, which keeps them byte-identical across runs.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import czd
from .convex import (Zonotope, alternating_ascent, body_average, john_ellipsoid,
                     minkowski_product_full, sandwich_margins, vector_stopping_report)
from .dyadic import MAX_DEPTH, DyadicCube, GridFunction
from .io import write_csv, write_json
from .shift import exact_subshift_sup, random_shift
from .sparse import (build_sparse_collection, build_sparse_collection_body, sparse_form,
                     sparse_form_body, stopping_children, verify_sparse)
from .weights import (MatrixWeight, a2_characteristic, loglog_slope, weight_family,
                      weighted_operator_norm, weighted_sweep)

logger = logging.getLogger(__name__)

GENERATORS = ("spikes", "signs", "ramps", "haar", "mixed")
SUITES = ("sparse", "shift", "czd", "convex", "weights", "scalar", "vector")
STRATEGIES = ("exact-small", "scale-count", "haar-bessel")


@dataclass
class CampaignConfig:
    d: int = 1
    L: int = 10
    n: int = 2
    rho_min: int = 1
    rho_max: int = 6
    trials: int = 50
    seed: int = 0
    strategy: str = "scale-count"
    density: float = 0.5
    max_kernels: int | None = None
    generator: str = "mixed"
    envelope: float | None = None
    exponent_limit: float = 1.1
    sparse_grids: list = field(default_factory=lambda: [[1, 10], [2, 5]])
    shift_trials: int = 50
    czd_trials: int = 50
    convex_trials: int = 100
    stopping_trials: int = 50
    weight_family: str = "rotating"
    weight_L: int = 9
    a_grid: list = field(default_factory=lambda: [round(0.1 * k, 10) for k in range(10)])
    weight_shifts: int = 2
    slope_limit: float = 1.6
    workers: int = 1
    suites: list = field(default_factory=lambda: list(SUITES))

    def validate(self) -> None:
        if self.d not in MAX_DEPTH:
            raise ValueError(f"d must be one of {sorted(MAX_DEPTH)}")
        if not 0 <= self.L <= MAX_DEPTH[self.d]:
            raise ValueError(f"L must lie in [0, {MAX_DEPTH[self.d]}] for d={self.d}")
        if not 1 <= self.n <= 3:
            raise ValueError("n must be 1, 2 or 3")
        if not 1 <= self.rho_min <= self.rho_max <= self.L:
            raise ValueError("need 1 <= rho_min <= rho_max <= L")
        if self.generator not in GENERATORS:
            raise ValueError(f"generator must be one of {GENERATORS}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        for s in self.suites:
            if s not in SUITES:
                raise ValueError(f"unknown suite {s!r}; choose from {SUITES}")
        for d, L in self.sparse_grids:
            if d not in MAX_DEPTH or not 0 <= L <= MAX_DEPTH[d]:
                raise ValueError(f"sparse grid (d={d}, L={L}) outside desk limits")
        if min(self.trials, self.shift_trials, self.czd_trials, self.convex_trials,
               self.stopping_trials, self.weight_shifts) < 0:
            raise ValueError("trial counts must be nonnegative")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "CampaignConfig":
        return cls.from_dict(json.loads(text))

    @property
    def rhos(self) -> list[int]:
        return list(range(self.rho_min, self.rho_max + 1))


# ---------------------------------------------------------------------------
# seeds and inputs
# ---------------------------------------------------------------------------

def trial_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([int(seed)] + [int(k) for k in keys])


def derived_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(seed)] + [int(k) for k in keys]).generate_state(1)[0])


def make_input(rng: np.random.Generator, d: int, L: int, n: int = 1, kind: str = "mixed") -> GridFunction:
    """Adversarial test input.

    Values come from a three-element palette times random signs (few directions, so
    parallel generators merge in body averages).  ``ramps`` and ``haar`` replace the
    background by a linear ramp or by signs alternating at one random scale; all kinds
    but ``signs`` add one to three single-cell spikes carrying mass ``10^[-1, 2]``.
    """
    if kind == "mixed":
        kind = GENERATORS[int(rng.integers(4))]
    N = 1 << (d * L)
    pal = rng.standard_normal((3, n))
    pal /= np.linalg.norm(pal, axis=1, keepdims=True)
    sign = rng.choice([-1.0, 1.0], size=(N, 1))
    idx = np.indices((1 << L,) * d).reshape(d, -1)
    if kind == "ramps":
        x = (idx[0] + 0.5) / (1 << L)
        v = np.outer(0.1 + x, pal[0])
    elif kind == "haar":
        k = int(rng.integers(1, L + 1)) if L > 0 else 0
        s = 1.0 - 2.0 * ((idx[0] >> max(L - k, 0)) & 1)
        v = np.outer(s, pal[0])
    else:
        v = pal[rng.integers(3, size=N)] * sign
    if kind != "signs":
        for _ in range(int(rng.integers(1, 4))):
            c = int(rng.integers(N))
            u = rng.standard_normal(n)
            v[c] += u / np.linalg.norm(u) * N * 10.0 ** rng.uniform(-1, 2)
    return GridFunction.from_flat(v, d, L)


def make_pair(seed: int, trial: int, d: int, L: int, n: int, kind: str):
    rng = trial_rng(seed, trial)
    return make_input(rng, d, L, n, kind), make_input(rng, d, L, n, kind)


def _map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# domination
# ---------------------------------------------------------------------------

def scalar_envelope(d: int) -> float:
    """Proof-chain bound for ``|S| / (rho Lambda)`` under an A2 certificate ``<= 1``:
    the per-class main-iteration constant plus the off-diagonal term ``2^{2d} (rho+1)/rho``."""
    return czd.mainiter_constant(d, 1.0) + 2.0 ** (2 * d + 1)


def vector_envelope(d: int, n: int) -> float:
    """As :func:`scalar_envelope`, with ``n^2`` coordinate pairs after John normalization."""
    if n == 1:
        return scalar_envelope(d)
    A = 2.0 ** 8 * n * n
    return float(n * n * czd.coordwise_constant(n, d, A, 1.0) + 2.0 ** (2 * d + 1))


@dataclass
class DominationReport:
    kind: str
    rows: list = field(default_factory=list)
    discarded: int = 0
    envelope: float = float("inf")
    exponent_limit: float = 1.1
    max_ratio: float = 0.0
    median_ratio: float = 0.0
    per_rho: dict = field(default_factory=dict)
    exponent: float = float("nan")
    offending: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        exp_ok = not np.isfinite(self.exponent) or self.exponent <= self.exponent_limit
        return self.max_ratio <= self.envelope and exp_ok and not self.offending

    def summary(self) -> dict:
        return {"kind": self.kind, "trials": len(self.rows), "discarded": self.discarded,
                "envelope": self.envelope, "max_ratio": self.max_ratio,
                "median_ratio": self.median_ratio, "per_rho": self.per_rho,
                "exponent": self.exponent, "exponent_limit": self.exponent_limit,
                "offending": self.offending, "ok": self.ok, **self.extra}


def _finish(rep: DominationReport) -> DominationReport:
    rep.rows.sort(key=lambda r: (r["trial"], r["rho"]))
    ratios = [r["ratio"] for r in rep.rows]
    rep.max_ratio = max(ratios, default=0.0)
    rep.median_ratio = float(np.median(ratios)) if ratios else 0.0
    rhos = sorted({r["rho"] for r in rep.rows})
    for rho in rhos:
        sel = [r for r in rep.rows if r["rho"] == rho]
        rep.per_rho[str(rho)] = {"max_ratio": max(r["ratio"] for r in sel),
                                 "max_undivided": max(r["undivided"] for r in sel),
                                 "count": len(sel)}
    if len(rhos) >= 2:
        rep.exponent = loglog_slope(rhos, [rep.per_rho[str(r)]["max_undivided"] for r in rhos])
    rep.offending = [[r["trial"], r["rho"], r["shift_seed"]] for r in rep.rows
                     if r["ratio"] > rep.envelope]
    return rep


def _domination_trial(args) -> tuple[list, int, dict]:
    cfg, t, vector = args
    n = cfg.n if vector else 1
    f1, f2 = make_pair(cfg.seed, t, cfg.d, cfg.L, n, cfg.generator)
    # the collection sees only the inputs
    if vector:
        col = build_sparse_collection_body(f1, f2)
        lam = sparse_form_body(col, f1, f2)
    else:
        col = build_sparse_collection(f1, f2)
        lam = sparse_form(col, f1, f2)
    stats = {"cubes": len(col), "degenerate": 0, "john_worst": 0.0}
    if vector and n > 1:
        for Q in col.cubes:
            for f in (f1, f2):
                K = body_average(f, Q)
                if K.rank() < n:
                    stats["degenerate"] += 1
                    continue
                sw = sandwich_margins(K, john_ellipsoid(K))
                stats["john_worst"] = max(stats["john_worst"], sw.inner - 1, sw.outer - 1)
    rows, discarded = [], 0
    for rho in cfg.rhos:
        s = derived_seed(cfg.seed, t, rho)
        S = random_shift(s, rho, cfg.d, cfg.L, cfg.density, strategy=cfg.strategy,
                         max_kernels=cfg.max_kernels)
        form = S.form(f1, f2)
        if lam == 0.0:
            discarded += 1
            continue
        rows.append({"trial": t, "rho": rho, "shift_seed": s, "kernels": len(S),
                     "form": form, "sparse": lam, "ratio": abs(form) / (rho * lam),
                     "undivided": abs(form) / lam, "cubes": len(col)})
    return rows, discarded, stats


def _verify(cfg: CampaignConfig, vector: bool) -> DominationReport:
    cfg.validate()
    n = cfg.n if vector else 1
    env = cfg.envelope
    if env is None:
        env = vector_envelope(cfg.d, n) if vector else scalar_envelope(cfg.d)
    rep = DominationReport("vector" if vector else "scalar", envelope=env,
                           exponent_limit=cfg.exponent_limit)
    degenerate, john_worst = 0, 0.0
    for rows, disc, stats in _map(_domination_trial, [(cfg, t, vector) for t in range(cfg.trials)],
                                  cfg.workers):
        rep.rows += rows
        rep.discarded += disc
        degenerate += stats["degenerate"]
        john_worst = max(john_worst, stats["john_worst"])
    if vector:
        rep.extra = {"n": n, "degenerate_bodies": degenerate, "john_sandwich_excess": float(john_worst),
                     "john_ok": bool(john_worst <= 1e-6)}
    rep = _finish(rep)
    if vector and john_worst > 1e-6:
        rep.offending.append(["john", john_worst])
    return rep


def verify_scalar_domination(cfg: CampaignConfig) -> DominationReport:
    """``|S(f1, f2)| / (rho Lambda_S(f1, f2))`` over trials and complexities, with the
    sparse collection built once per input pair."""
    return _verify(cfg, vector=False)


def verify_vector_domination(cfg: CampaignConfig) -> DominationReport:
    """Vector version with body averages, vector stopping and Minkowski products."""
    return _verify(cfg, vector=True)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

@dataclass
class SuiteResult:
    name: str
    ok: bool
    rows: list
    summary: dict


def suite_sparse(cfg: CampaignConfig) -> SuiteResult:
    """Packing at every node (exact) and feasible sparseness of built collections."""
    rows, ok = [], True
    for gi, (d, L) in enumerate(cfg.sparse_grids):
        target = Fraction(1, 2 ** d) * (1 - Fraction(1, 128))
        for t in range(cfg.trials):
            f1, f2 = make_pair(derived_seed(cfg.seed, 1, gi), t, d, L, 1, cfg.generator)
            col = build_sparse_collection(f1, f2)
            rep = verify_sparse(col, float(target))
            good = bool(rep.packing_ok and rep.disjoint and rep.eta_optimal_exact >= target)
            ok &= good
            rows.append({"d": d, "L": L, "trial": t, "cubes": len(col),
                         "packing_worst": rep.packing_worst, "eta_optimal": rep.eta_optimal,
                         "eta_greedy": rep.eta_greedy, "ok": good})
    summary = {"trials": len(rows), "ok": ok,
               "max_packing": max((r["packing_worst"] for r in rows), default=0.0),
               "min_eta": min((r["eta_optimal"] for r in rows), default=1.0),
               "packing_bound": 2.0 ** -7}
    return SuiteResult("sparse", ok, rows, summary)


def suite_shift(cfg: CampaignConfig) -> SuiteResult:
    """Exact-small certificates on shifts with at most 8 kernels, against scale-count."""
    rows, ok = [], True
    for t in range(cfg.shift_trials):
        rng = trial_rng(cfg.seed, 2, t)
        d = int(rng.integers(1, 3))
        L = 4 if d == 1 else 3
        rho = int(rng.integers(1, 3))
        s = derived_seed(cfg.seed, 2, t)
        Se = random_shift(s, rho, d, L, 0.3, strategy="exact-small", max_kernels=8)
        Sc = random_shift(s, rho, d, L, 0.3, strategy="scale-count", max_kernels=8)
        sup, _ = exact_subshift_sup(Se)
        raw_exact = Se.certificate.bound * Se.certificate.factor
        raw_count = Sc.certificate.bound * Sc.certificate.factor
        good = sup <= 1 + 1e-9 and raw_count >= raw_exact * (1 - 1e-12)
        ok &= good
        rows.append({"trial": t, "d": d, "L": L, "rho": rho, "kernels": len(Se),
                     "exact_sup_after": sup, "raw_exact": raw_exact, "raw_scale_count": raw_count,
                     "ok": good})
    summary = {"trials": len(rows), "ok": ok,
               "max_normalized_sup": max((r["exact_sup_after"] for r in rows), default=0.0)}
    return SuiteResult("shift", ok, rows, summary)


def _czd_trial(args) -> dict:
    cfg, t = args
    d, L = cfg.d, cfg.L
    f1, f2 = make_pair(derived_seed(cfg.seed, 3), t, d, L, 1, cfg.generator)
    rng = trial_rng(cfg.seed, 3, t)
    root = DyadicCube.root(d)
    cubes = stopping_children(f1, f2, root)
    b1 = czd.cz_bounds(f1, czd.cz_decompose(f1, root, cubes))
    b2 = czd.cz_bounds(f2, czd.cz_decompose(f2, root, cubes))
    rho = int(rng.integers(cfg.rho_min, cfg.rho_max + 1))
    s = derived_seed(cfg.seed, 3, t, rho)
    S = random_shift(s, rho, d, L, cfg.density, strategy=cfg.strategy, max_kernels=cfg.max_kernels)
    mi = czd.mainiter_check(S, f1, f2, root)
    od = czd.offdiagonal_check(S, f1, f2)
    return {"trial": t, "rho": rho, "shift_seed": s, "stopping": len(cubes),
            "cz1": max(b1.cz1, b2.cz1), "cz2": max(b1.cz2, b2.cz2), "cz3": max(b1.cz3, b2.cz3),
            "reconstruction": max(b1.reconstruction, b2.reconstruction),
            "mean_zero": max(b1.mean_zero, b2.mean_zero), "cz_ok": b1.ok() and b2.ok(),
            "residual": mi.residual, "envelope": mi.envelope, "identity_error": mi.identity_error,
            "cancellation": mi.cancellation_max, "class_bounds_ok": mi.class_bounds_ok,
            "bad_packing_ok": mi.bad_packing_ok, "mainiter_ok": mi.ok,
            "offdiag_ratio": od.total / od.bound if od.bound else 0.0, "offdiag_ok": od.ok}


def suite_czd(cfg: CampaignConfig) -> SuiteResult:
    """CZ constants, cancellation, main-iteration and off-diagonal checks on the root."""
    rows = _map(_czd_trial, [(cfg, t) for t in range(cfg.czd_trials)], cfg.workers)
    ok = all(r["cz_ok"] and r["mainiter_ok"] and r["offdiag_ok"] for r in rows)
    keys = ("cz1", "cz2", "cz3", "reconstruction", "mean_zero", "residual", "identity_error",
            "cancellation", "offdiag_ratio")
    summary = {k: max((r[k] for r in rows), default=0.0) for k in keys}
    summary.update({"trials": len(rows), "with_stopping": sum(r["stopping"] > 0 for r in rows), "ok": ok})
    return SuiteResult("czd", ok, rows, summary)


def random_zonotope(rng: np.random.Generator, n: int, p: int, anisotropy: float = 0.0) -> Zonotope:
    G = rng.standard_normal((p, n)) * np.exp(anisotropy * rng.standard_normal(n))
    return Zonotope.from_generators(G, n)


def suite_convex(cfg: CampaignConfig) -> SuiteResult:
    """John sandwich, Minkowski-product oracle agreement and vector stopping."""
    rows, ok = [], True
    for t in range(cfg.convex_trials):
        rng = trial_rng(cfg.seed, 4, t)
        n = int(rng.integers(2, 4))
        K = random_zonotope(rng, n, int(rng.integers(n, 41)), float(rng.uniform(0, 2)))
        sw = sandwich_margins(K, john_ellipsoid(K))
        H = random_zonotope(rng, n, int(rng.integers(1, 13)))
        K2 = random_zonotope(rng, n, int(rng.integers(1, 13)))
        enum = minkowski_product_full(K2, H, method="enumerate").value
        asc = alternating_ascent(K2, H).value
        prod_err = abs(asc - enum) / max(enum, 1e-300)
        good = sw.ok(1e-6) and prod_err <= 1e-9
        ok &= good
        rows.append({"kind": "body", "trial": t, "n": n, "generators": K.p,
                     "john_inner": float(sw.inner), "john_outer": float(sw.outer),
                     "product_error": prod_err, "ok": good})
    for t in range(cfg.stopping_trials):
        n = 2 + t % 2
        d, L = (1, 12) if t % 3 else (2, 6)
        f = make_input(trial_rng(cfg.seed, 5, t), d, L, n, "spikes")
        rep = vector_stopping_report(f, DyadicCube.root(d))
        good = bool(rep.containment_ok and rep.packing_ok)
        ok &= good
        rows.append({"kind": "stopping", "trial": t, "n": n, "d": d, "L": L,
                     "stopping": len(rep.cubes), "containment_margin": rep.containment_margin,
                     "packing_cells": rep.packing_cells, "ok": good})
    bodies = [r for r in rows if r["kind"] == "body"]
    stops = [r for r in rows if r["kind"] == "stopping"]
    summary = {"bodies": len(bodies), "stopping_trials": len(stops), "ok": ok,
               "max_john_inner": max((r["john_inner"] for r in bodies), default=0.0),
               "max_john_outer": max((r["john_outer"] for r in bodies), default=0.0),
               "max_product_error": max((r["product_error"] for r in bodies), default=0.0),
               "with_stopping": sum(r["stopping"] > 0 for r in stops)}
    return SuiteResult("convex", ok, rows, summary)


def suite_weights(cfg: CampaignConfig) -> SuiteResult:
    """Weighted norms along a weight family for several normalized shifts."""
    rows, ok = [], True
    slopes, ratios = [], []
    for k in range(cfg.weight_shifts):
        s = derived_seed(cfg.seed, 6, k)
        rho = 1 + k % max(1, min(cfg.rho_max, 3))
        S = random_shift(s, rho, 1, cfg.weight_L, cfg.density, strategy=cfg.strategy)
        rep = weighted_sweep(S, cfg.weight_family, cfg.a_grid, seed=k, n=2,
                             slope_limit=cfg.slope_limit)
        unweighted = weighted_operator_norm(S, MatrixWeight.identity(1, cfg.weight_L, 2), seed=k).value
        scaled = weighted_operator_norm(S, weight_family(cfg.weight_family, cfg.a_grid[-1], k, 1,
                                                         cfg.weight_L).scaled(7.0), seed=k).value
        const_ok = abs(rep.rows[0].norm - unweighted) <= 1e-9 * max(unweighted, 1e-300) \
            if cfg.a_grid and cfg.a_grid[0] == 0 else True
        scale_ok = abs(scaled - rep.rows[-1].norm) <= 1e-7 * max(scaled, 1e-300)
        good = rep.ok and const_ok and scale_ok
        ok &= good
        slopes.append(rep.slope)
        for r in rep.rows:
            ratios.append(r.ratio)
            rows.append({"shift": k, "shift_seed": s, "rho": rho, "param": r.param,
                         "characteristic": r.characteristic, "norm": r.norm, "ratio": r.ratio,
                         "slope": r.slope, "ok": good})
    chars = [r["characteristic"] for r in rows]
    summary = {"shifts": cfg.weight_shifts, "ok": ok,
               "max_slope": max((s for s in slopes if np.isfinite(s)), default=float("nan")),
               "max_ratio": max(ratios, default=0.0),
               "characteristic_decades": float(np.log10(max(chars) / min(chars))) if chars else 0.0}
    return SuiteResult("weights", ok, rows, summary)


def _domination_suite(cfg: CampaignConfig, vector: bool) -> SuiteResult:
    rep = verify_vector_domination(cfg) if vector else verify_scalar_domination(cfg)
    return SuiteResult(rep.kind, rep.ok, rep.rows, rep.summary())


SUITE_FUNCS = {
    "sparse": suite_sparse,
    "shift": suite_shift,
    "czd": suite_czd,
    "convex": suite_convex,
    "weights": suite_weights,
    "scalar": lambda cfg: _domination_suite(cfg, False),
    "vector": lambda cfg: _domination_suite(cfg, True),
}


def write_suite(res: SuiteResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    cols = sorted({k for r in res.rows for k in r})
    write_csv(out / f"{res.name}.csv", res.rows, cols)
    write_json(out / f"{res.name}.json", {"suite": res.name, "ok": res.ok, "summary": res.summary})


def run_all(cfg: CampaignConfig, out: Path | None = None) -> tuple[int, dict]:
    """Run the configured suites; exit status 0 when every verdict passes."""
    cfg.validate()
    verdicts = {}
    for name in SUITES:
        if name not in cfg.suites:
            continue
        logger.info("running suite %s", name)
        res = SUITE_FUNCS[name](cfg)
        verdicts[name] = res.ok
        if out is not None:
            write_suite(res, Path(out))
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        write_json(Path(out) / "summary.json", {"config": asdict(cfg), "verdicts": verdicts,
                                               "ok": all(verdicts.values())})
    return (0 if all(verdicts.values()) else 1), verdicts

"""Command line: ``dyadic-sparse <command> ...``; exit status 0 when every verdict passes."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import campaign, czd
from .campaign import CampaignConfig
from .convex import john_ellipsoid, minkowski_product_full, sandwich_margins
from .dyadic import DyadicCube
from .io import (dumps_collection, dumps_shift, fmt, jsonable, loads_grid,
                 loads_shift, loads_zonotope, read_text, write_csv, write_json)
from .shift import random_shift, subshift_norm_oracle
from .sparse import build_sparse_collection, sparse_form, verify_sparse
from .weights import weighted_sweep


def parse_grid(text: str) -> list[float]:
    """``start:stop:count`` (inclusive linspace) or a comma-separated list."""
    if ":" in text:
        a, b, k = text.split(":")
        return [float(x) for x in np.linspace(float(a), float(b), int(k))]
    return [float(x) for x in text.split(",") if x]


def _config(args) -> CampaignConfig:
    data = json.loads(read_text(args.config)) if getattr(args, "config", None) else {}
    cfg = CampaignConfig.from_dict(data)
    for key in ("d", "L", "n", "trials", "rho_min", "rho_max", "seed", "strategy", "workers",
                "generator", "envelope", "density"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "suite", None) is not None:
        cfg.suites = [s for group in args.suite for s in group.split(",") if s]
    cfg.validate()
    return cfg


def _emit(obj, out: Path | None, name: str) -> None:
    print(json.dumps(jsonable(obj), indent=2, sort_keys=True))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / f"{name}.json", obj)


def cmd_sparse(args) -> int:
    f1 = loads_grid(read_text(args.input))
    f2 = loads_grid(read_text(args.input2)) if args.input2 else f1
    S = build_sparse_collection(f1, f2, args.lam)
    rep = verify_sparse(S, args.eta)
    res = {"cubes": len(S), "sparse_form": sparse_form(S, f1, f2), **rep.as_dict()}
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "collection.csv").write_text(dumps_collection(S))
    _emit(res, args.out, "sparse")
    return 0 if rep.feasible and rep.packing_ok is not False else 1


def cmd_shift(args) -> int:
    if args.shift_file and Path(args.shift_file).exists() and not args.write:
        S = loads_shift(read_text(args.shift_file))
    else:
        S = random_shift(args.seed, args.rho, args.d, args.L, args.density, strategy=args.strategy)
        if args.shift_file:
            Path(args.shift_file).write_text(dumps_shift(S))
    norm = subshift_norm_oracle(S)
    c = S.certificate
    res = {"d": S.d, "L": S.L, "rho": S.rho, "m1": S.m1, "m2": S.m2, "kernels": len(S),
           "strategy": c.strategy, "factor": c.factor, "certified_bound": c.bound,
           "norm": norm.value, "converged": norm.converged}
    _emit(res, args.out, "shift")
    return 0 if norm.value <= max(c.bound, 0.0) * (1 + 1e-9) or not np.isfinite(c.bound) else 1


def cmd_czd(args) -> int:
    if args.input:
        f1 = loads_grid(read_text(args.input))
        f2 = loads_grid(read_text(args.input2)) if args.input2 else f1
        S = loads_shift(read_text(args.shift_file)) if args.shift_file else \
            random_shift(args.seed or 0, args.rho, f1.d, f1.L)
        Q = DyadicCube.root(f1.d)
        if f1.n == 1:
            rep = czd.mainiter_check(S, f1, f2, Q)
        else:
            rep = czd.mainitervec_check(S, f1, f2, Q)
        _emit(rep.as_dict(), args.out, "czd")
        return 0 if rep.ok else 1
    cfg = _config(args)
    res = campaign.suite_czd(cfg)
    if args.out:
        campaign.write_suite(res, args.out)
    print(json.dumps(jsonable(res.summary), indent=2, sort_keys=True))
    return 0 if res.ok else 1


def cmd_convex(args) -> int:
    if args.action == "suite":
        cfg = _config(args)
        res = campaign.suite_convex(cfg)
        if args.out:
            campaign.write_suite(res, args.out)
        print(json.dumps(jsonable(res.summary), indent=2, sort_keys=True))
        return 0 if res.ok else 1
    if not args.body:
        raise SystemExit("--body is required")
    K = loads_zonotope(read_text(args.body))
    if args.action == "john":
        E = john_ellipsoid(K)
        sw = sandwich_margins(K, E)
        res = {"shape": E.shape.tolist(), "degenerate": E.degenerate, "inner": sw.inner,
               "outer": sw.outer, "exact": sw.exact, "ok": sw.ok()}
        _emit(res, args.out, "john")
        return 0 if sw.ok() else 1
    H = loads_zonotope(read_text(args.body2)) if args.body2 else K
    r = minkowski_product_full(K, H)
    _emit({"product": r.value, "lower": r.lower, "upper": r.upper, "method": r.method},
          args.out, "product")
    return 0


def cmd_weights(args) -> int:
    S = random_shift(args.shift_seed, args.rho, 1, args.L, args.density, strategy=args.strategy)
    rep = weighted_sweep(S, args.family, parse_grid(args.a_grid), seed=args.shift_seed,
                         envelope=args.envelope, slope_limit=args.slope_limit)
    rows = [{"param": r.param, "characteristic": r.characteristic, "norm": r.norm,
             "ratio": r.ratio, "slope": r.slope} for r in rep.rows]
    for r in rows:
        print(",".join(fmt(r[k]) for k in ("param", "characteristic", "norm", "ratio", "slope")))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        write_csv(args.out / "sweep.csv", rows, ["param", "characteristic", "norm", "ratio", "slope"])
    print(f"slope={fmt(rep.slope)} max_ratio={fmt(rep.max_ratio)} ok={rep.ok}")
    return 0 if rep.ok else 1


def _verify(args, vector: bool) -> int:
    cfg = _config(args)
    rep = campaign.verify_vector_domination(cfg) if vector else campaign.verify_scalar_domination(cfg)
    res = campaign.SuiteResult(rep.kind, rep.ok, rep.rows, rep.summary())
    if args.out:
        campaign.write_suite(res, args.out)
    print(json.dumps(jsonable(res.summary), indent=2, sort_keys=True))
    return 0 if rep.ok else 1


def cmd_run_all(args) -> int:
    cfg = _config(args)
    status, verdicts = campaign.run_all(cfg, args.out)
    for name, ok in verdicts.items():
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
    return status


def _campaign_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--rho-min", dest="rho_min", type=int)
    p.add_argument("--rho-max", dest="rho_max", type=int)
    p.add_argument("--strategy", choices=campaign.STRATEGIES)
    p.add_argument("--generator", choices=campaign.GENERATORS)
    p.add_argument("--density", type=float)
    p.add_argument("--envelope", type=float)
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dyadic-sparse", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sparse", help="build and verify the sparse collection of two inputs")
    p.add_argument("action", choices=["build"])
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--input2", type=Path)
    p.add_argument("--lam", type=float, default=256.0)
    p.add_argument("--eta", type=float, default=0.25)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_sparse)

    p = sub.add_parser("shift", help="generate or load a shift and report its certificate")
    p.add_argument("--shift-file", dest="shift_file")
    p.add_argument("--write", action="store_true", help="overwrite --shift-file with a new shift")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rho", type=int, default=1)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--L", type=int, default=6)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--strategy", choices=campaign.STRATEGIES, default="scale-count")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_shift)

    p = sub.add_parser("czd", help="main-iteration checks on given inputs, or the czd suite")
    _campaign_args(p)
    p.add_argument("--input", type=Path)
    p.add_argument("--input2", type=Path)
    p.add_argument("--shift-file", dest="shift_file")
    p.add_argument("--rho", type=int, default=1)
    p.set_defaults(func=cmd_czd)

    p = sub.add_parser("convex", help="John ellipsoid, Minkowski product, or the convex suite")
    p.add_argument("action", choices=["john", "product", "suite"])
    p.add_argument("--body", type=Path)
    p.add_argument("--body2", type=Path)
    _campaign_args(p)
    p.set_defaults(func=cmd_convex)

    p = sub.add_parser("weights", help="weighted-norm sweep along a weight family")
    p.add_argument("action", choices=["sweep"])
    p.add_argument("--family", default="rotating")
    p.add_argument("--a-grid", dest="a_grid", default="0:0.9:10")
    p.add_argument("--shift-seed", dest="shift_seed", type=int, default=0)
    p.add_argument("--rho", type=int, default=1)
    p.add_argument("--L", type=int, default=9)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--strategy", choices=campaign.STRATEGIES, default="scale-count")
    p.add_argument("--envelope", type=float, default=float("inf"))
    p.add_argument("--slope-limit", dest="slope_limit", type=float, default=1.6)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_weights)

    for name, vector in (("verify-scalar", False), ("verify-vector", True)):
        p = sub.add_parser(name, help=f"{'vector' if vector else 'scalar'} domination campaign")
        _campaign_args(p)
        p.set_defaults(func=lambda a, v=vector: _verify(a, v))

    p = sub.add_parser("run-all", help="run the configured suites")
    _campaign_args(p)
    p.add_argument("--suite", action="append",
                   help=f"suite filter, repeatable or comma-separated: {', '.join(campaign.SUITES)}")
    p.set_defaults(func=cmd_run_all)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args))
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

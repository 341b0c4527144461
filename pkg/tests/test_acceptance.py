"""Acceptance criteria 1-11 at full size.

Each test prints one ``criterion N: PASS|FAIL`` line (also collected into the pytest
terminal summary).  Runs in several minutes on one CPU; run alone with
``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
"""
from dataclasses import replace

import numpy as np
import pytest

from dyadic_sparse.campaign import (SUITE_FUNCS, CampaignConfig, run_all,
                                    verify_scalar_domination, verify_vector_domination)

from conftest import ACCEPTANCE

BASE = CampaignConfig(d=1, L=10, n=2, rho_min=1, rho_max=6, trials=500, seed=2024)


def report(k: int, ok: bool, detail: str) -> None:
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[k] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def scalar_run():
    return verify_scalar_domination(BASE)


@pytest.fixture(scope="module")
def convex_run():
    return SUITE_FUNCS["convex"](replace(BASE, convex_trials=1000, stopping_trials=200))


@pytest.fixture(scope="module")
def vector_run():
    return verify_vector_domination(BASE)


def test_criterion_01_packing():
    res = SUITE_FUNCS["sparse"](replace(BASE, sparse_grids=[[1, 10], [2, 5]]))
    s = res.summary
    report(1, res.ok and s["trials"] == 1000,
           f"{s['trials']} pairs, worst packing {s['max_packing']:.6g} <= 2^-7, min eta {s['min_eta']:.4g}")


@pytest.fixture(scope="module")
def czd_runs():
    return [SUITE_FUNCS["czd"](replace(BASE, d=d, L=L, rho_max=min(6, L), czd_trials=500))
            for d, L in ((1, 10), (2, 5))]


def test_criterion_02_cz_constants(czd_runs):
    rows = [r for res in czd_runs for r in res.rows]
    ok = all(r["cz_ok"] for r in rows) and all(
        r["cz1"] <= 1 and r["cz3"] <= 1 and r["reconstruction"] <= 1e-12 and r["mean_zero"] <= 1e-14
        for r in rows)
    worst = {k: max(r[k] for r in rows) for k in ("cz1", "cz3", "reconstruction", "mean_zero")}
    report(2, ok and len(rows) == 1000,
           f"{len(rows)} trials, ||g||/(2^(d+8)<f>) <= {worst['cz1']:.4g}, "
           f"||b||/(2^(d+9)|I|<f>) <= {worst['cz3']:.4g}, reconstruction {worst['reconstruction']:.2g}, "
           f"mean {worst['mean_zero']:.2g}")


def test_criterion_03_cancellation(czd_runs):
    rows = [r for res in czd_runs for r in res.rows if r["stopping"] > 0]
    shifts = {(r["shift_seed"], r["rho"]) for r in rows}
    worst = max(r["cancellation"] for r in rows)
    report(3, worst <= 1e-12 and len(shifts) >= 200,
           f"{len(shifts)} shifts with stopping cubes, max normalized |S_R(g, b_I)| {worst:.2g}")


def test_criterion_04_scalar_domination(scalar_run):
    r = scalar_run
    report(4, r.ok and len(r.rows) + r.discarded == 3000,
           f"{len(r.rows)} rows, max ratio {r.max_ratio:.4g} <= envelope {r.envelope:.6g}, "
           f"rho exponent {r.exponent:.3g} <= {r.exponent_limit}")


def test_criterion_05_vector_stopping(convex_run):
    rows = [r for r in convex_run.rows if r["kind"] == "stopping"]
    ok = len(rows) == 200 and all(r["ok"] for r in rows) and {r["n"] for r in rows} == {2, 3}
    report(5, ok, f"{len(rows)} trials, {sum(r['stopping'] > 0 for r in rows)} with stopping cubes, "
                  f"containment and packing exact")


def test_criterion_06_john(convex_run, vector_run):
    rows = [r for r in convex_run.rows if r["kind"] == "body"]
    inner = max(r["john_inner"] for r in rows)
    outer = max(r["john_outer"] for r in rows)
    camp = vector_run.extra["john_sandwich_excess"]
    ok = len(rows) == 1000 and inner <= 1 + 1e-6 and outer <= 1 + 1e-6 and camp <= 1e-6
    report(6, ok, f"{len(rows)} random bodies, inner {inner:.12g}, outer {outer:.12g}; "
                  f"campaign bodies excess {camp:.2g}")


def test_criterion_07_minkowski(convex_run):
    rows = [r for r in convex_run.rows if r["kind"] == "body"]
    worst = max(r["product_error"] for r in rows)
    report(7, len(rows) == 1000 and worst <= 1e-9,
           f"{len(rows)} instances, max |ascent - enumeration| / enumeration {worst:.2g}")


def test_criterion_08_vector_domination(vector_run, scalar_run):
    r = vector_run
    one = verify_vector_domination(replace(BASE, n=1))
    same = len(one.rows) == len(scalar_run.rows) and all(
        (a["trial"], a["rho"], a["shift_seed"]) == (b["trial"], b["rho"], b["shift_seed"])
        and abs(a["ratio"] - b["ratio"]) <= 1e-12 * max(abs(b["ratio"]), 1e-300)
        for a, b in zip(one.rows, scalar_run.rows))
    report(8, r.ok and same and len(r.rows) + r.discarded == 3000,
           f"n=2: max ratio {r.max_ratio:.4g} <= envelope {r.envelope:.6g}, "
           f"rho exponent {r.exponent:.3g}; n=1 matches scalar trial-for-trial: {same}")


def test_criterion_09_weights():
    cfg = replace(BASE, weight_family="rotating", weight_L=9, weight_shifts=20,
                  a_grid=[round(0.1 * k, 10) for k in range(10)], slope_limit=1.6)
    res = SUITE_FUNCS["weights"](cfg)
    s = res.summary
    ok = res.ok and s["characteristic_decades"] >= 2 and s["max_slope"] <= 1.6
    report(9, ok, f"20 shifts x 10 parameters, characteristic spans {s['characteristic_decades']:.3g} "
                  f"decades, max slope {s['max_slope']:.3g}, max norm/[W]^1.5 {s['max_ratio']:.3g}, "
                  f"constant weight equals unweighted norm")


def test_criterion_10_certificates():
    res = SUITE_FUNCS["shift"](replace(BASE, shift_trials=200))
    rows = res.rows
    ok = res.ok and all(r["kernels"] <= 8 for r in rows)
    report(10, ok, f"{len(rows)} shifts, max subcollection norm after exact normalization "
                   f"{res.summary['max_normalized_sup']:.12g}, scale-count >= exact on all")


def test_criterion_11_reproducibility(tmp_path):
    cfg = replace(BASE, trials=20, rho_max=3, shift_trials=20, czd_trials=20, convex_trials=50,
                  stopping_trials=10, weight_L=6, weight_shifts=2)
    for out in ("a", "b"):
        run_all(cfg, tmp_path / out)
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = names == sorted(p.name for p in (tmp_path / "b").iterdir()) and all(
        (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names)
    report(11, same and len(names) == 2 * 7 + 1, f"{len(names)} report files byte-identical")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))

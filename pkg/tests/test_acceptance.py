"""Acceptance criteria on the default 30-segment mesh.

Every criterion prints one PASS/FAIL line (collected again in the terminal
summary). The full module takes about 12 minutes on one core:
``pytest tests/test_acceptance.py -s``.
"""

import time

import numpy as np
import pytest

import test_bem
import test_colloc
import test_nlp
from hkt_ccd.bem import max_cp
from hkt_ccd.nlp import cluster
from hkt_ccd.pipelines import DesignVector, compare, solve_steady_design

pytestmark = pytest.mark.slow

SEG = 30
UMAX = 47000.0


def within(x, target, tol):
    return abs(x - target) <= tol


def geometry_gap(a, b):
    """Largest free chord (m) and twist (deg) difference between two results."""
    return (float(np.max(np.abs(a.geometry.free_chords - b.geometry.free_chords))),
            float(np.max(np.abs(a.geometry.free_twists - b.geometry.free_twists))))


def scenario(runs, u_max):
    return compare([runs.get(m, u_max, segments=SEG) for m in ("baseline", "sequential", "ccd")])


@pytest.fixture(scope="module")
def steady(baseline):
    out = {}
    for lam0 in (8.0, 10.0):
        t0 = time.perf_counter()
        dv, sol = solve_steady_design(DesignVector.from_spec(baseline, lam0), baseline)
        cp, lam = max_cp(dv.apply(baseline), dv.lambda_design)
        out[lam0] = dict(design=dv, solution=sol, cp=cp, lam=lam, seconds=time.perf_counter() - t0)
    return out


def test_criterion_1_baseline_steady_performance(baseline, verdict):
    t0 = time.perf_counter()
    cp, lam = max_cp(baseline, 7.6)
    dt = time.perf_counter() - t0
    assert verdict("1", {
        "Cp 0.4633 +/- 0.02": within(cp, 0.4633, 0.02),
        "lambda 7.6 +/- 0.5": within(lam, 7.6, 0.5),
        "runtime < 10 s": dt < 10.0,
    }, f"max Cp {cp:.4f} at lambda {lam:.3f} ({dt:.2f} s)")


def test_criterion_2_steady_design_bands(steady, verdict):
    a, b = steady[8.0], steady[10.0]
    assert verdict("2 (bands and runtime)", {
        "start 8: converged": a["solution"].converged,
        "start 10: converged": b["solution"].converged,
        "start 8: Cp 0.4744 +/- 0.02": within(a["cp"], 0.4744, 0.02),
        "start 8: lambda 8.5 +/- 0.5": within(a["lam"], 8.5, 0.5),
        "start 10: Cp 0.4745 +/- 0.02": within(b["cp"], 0.4745, 0.02),
        "start 10: lambda 9.1 +/- 0.5": within(b["lam"], 9.1, 0.5),
        "runtime < 5 min each": max(a["seconds"], b["seconds"]) < 300.0,
    }, f"start 8 -> Cp {a['cp']:.5f} at {a['lam']:.3f}; start 10 -> Cp {b['cp']:.5f} at {b['lam']:.3f}; "
       f"{a['seconds']:.1f} s / {b['seconds']:.1f} s")


@pytest.mark.xfail(strict=True, reason="the steady Cp ridge has a single optimum for this model; see README")
def test_criterion_2_two_distinct_optima(steady, verdict):
    groups = cluster([steady[8.0]["solution"], steady[10.0]["solution"]])
    assert verdict("2 (two distinct optima)", {"two clusters": len(groups) == 2},
                   f"{len(groups)} cluster(s) from starts 8 and 10")


def test_criterion_3_unbounded_scenario(runs, verdict):
    rep = scenario(runs, None)
    base, seq, ccd = (rep.entry(m) for m in ("baseline", "sequential", "ccd"))
    dc, dt = geometry_gap(seq, ccd)
    total = sum(e.wall_time for e in rep.entries)
    assert verdict("3", {
        "all converged": all(e.status == "converged" for e in rep.entries),
        "baseline 13165 kJ +/- 5%": within(base.energy, 13165, 0.05 * 13165),
        "sequential 13481 kJ +/- 5%": within(seq.energy, 13481, 0.05 * 13481),
        "ccd 13481 kJ +/- 5%": within(ccd.energy, 13481, 0.05 * 13481),
        "sequential = ccd within 0.2%": abs(seq.energy - ccd.energy) <= 0.002 * seq.energy,
        "geometries within 1e-3 m / 0.1 deg": dc <= 1e-3 and dt <= 0.1,
        "improvement 2.4 +/- 1.0": within(seq.improvement_pct, 2.4, 1.0) and within(ccd.improvement_pct, 2.4, 1.0),
        "runtime < 60 min": total < 3600.0,
    }, f"E = {base.energy:.0f} / {seq.energy:.0f} / {ccd.energy:.0f} kJ, "
       f"+{seq.improvement_pct:.2f} / +{ccd.improvement_pct:.2f} %, "
       f"geometry gap {dc:.1e} m / {dt:.1e} deg, {total:.0f} s")


def test_criterion_4_bounded_scenario(runs, verdict):
    rep = scenario(runs, UMAX)
    seq, ccd = rep.entry("sequential"), rep.entry("ccd")
    assert verdict("4", {
        "all converged": all(e.status == "converged" for e in rep.entries),
        "sequential +4.3 +/- 1.5": within(seq.improvement_pct, 4.3, 1.5),
        "ccd +4.9 +/- 1.5": within(ccd.improvement_pct, 4.9, 1.5),
        "ccd >= sequential": ccd.energy >= seq.energy,
        "ccd lambda* 10.0 +/- 1.0": within(ccd.lambda_star, 10.0, 1.0),
        "ccd saturates less": ccd.saturation_fraction < seq.saturation_fraction,
    }, f"+{seq.improvement_pct:.2f} / +{ccd.improvement_pct:.2f} %, ccd lambda* {ccd.lambda_star:.2f}, "
       f"saturation {seq.saturation_fraction:.3f} -> {ccd.saturation_fraction:.3f}")


def test_criterion_5_flow_profile_sensitivity(runs, verdict):
    sin_b, ramp_b = runs.get("ccd", UMAX, segments=SEG), runs.get("ccd", UMAX, "ramp", segments=SEG)
    sin_u, ramp_u = runs.get("ccd", None, segments=SEG), runs.get("ccd", None, "ramp", segments=SEG)
    db, _ = geometry_gap(sin_b, ramp_b)
    dc, dt = geometry_gap(sin_u, ramp_u)
    assert verdict("5", {
        "converged": all(r.status == "converged" for r in (sin_b, ramp_b, sin_u, ramp_u)),
        "bounded: some chord differs > 1e-2 m": db > 1e-2,
        "unbounded: within 1e-3 m / 0.1 deg": dc <= 1e-3 and dt <= 0.1,
    }, f"bounded chord gap {db:.3f} m; unbounded gap {dc:.1e} m / {dt:.1e} deg")


def test_criterion_6_initial_geometry_sensitivity(runs, verdict):
    a = runs.get("ccd", UMAX, segments=SEG)
    b = runs.get("ccd", UMAX, segments=SEG, start="sequential")
    dc, dt = geometry_gap(a, b)
    assert verdict("6", {
        "converged": a.status == b.status == "converged",
        "same geometry within 1e-3 m / 0.1 deg": dc <= 1e-3 and dt <= 0.1,
    }, f"gap {dc:.1e} m / {dt:.1e} deg, E = {a.energy:.1f} vs {b.energy:.1f} kJ")


def _property_checks(baseline, runs):
    yield "Hermite-Simpson defects exact on cubics", test_colloc.test_defects_exact_for_cubic_states
    yield "Simpson quadrature exact on cubics", test_colloc.test_simpson_exact_for_cubics
    yield "AD vs central FD", lambda: test_colloc.test_ad_gradients_match_central_fd(baseline)
    yield "Betz bound", lambda: test_bem.test_betz_bound(baseline=baseline)
    yield "Reynolds invariance", lambda: test_bem.test_cp_depends_on_lambda_only(baseline=baseline)
    yield "fixed-point BEM oracle", lambda: test_bem.test_oracle_equivalence_random_instances(baseline)
    for guess in (6.5, 9.0):
        yield (f"MPPT from lambda {guess}",
               lambda g=guess: test_colloc.test_constant_flow_tracks_optimal_tip_speed_ratio(baseline, g))

    def resim():
        assert runs.cache
        for key, r in runs.cache.items():
            assert abs(r.resim_energy - r.energy) <= 0.005 * r.energy, key

    yield f"re-simulation of {len(runs.cache)} pipeline runs", resim
    yield "NLP active bound", test_nlp.test_active_bound
    yield "NLP equality QP", test_nlp.test_equality_constrained_quadratic
    yield "NLP Rosenbrock", test_nlp.test_rosenbrock


def test_criterion_7_property_suite(baseline, runs, verdict):
    # runs after criteria 3 to 6 so the re-simulation check covers every full-mesh run
    checks, why = {}, []
    for name, check in _property_checks(baseline, runs):
        try:
            check()
            checks[name] = True
        except AssertionError as exc:
            checks[name] = False
            why.append(f"{name}: {str(exc).splitlines()[0] if str(exc) else 'assertion failed'}")
    assert verdict("7", checks, f"{sum(checks.values())}/{len(checks)} properties" + "".join(f"; {w}" for w in why))


def test_criterion_8_wall_times_are_informational(runs, verdict):
    times = {f"{k[0]}/{k[2]}/{'unbounded' if k[1] is None else 'bounded'}"
             + ("" if k[4] == "baseline" else f"/from {k[4]}"): r.wall_time
             for k, r in runs.cache.items() if k[3] == SEG}
    detail = ", ".join(f"{k} {v:.0f} s" for k, v in times.items())
    assert verdict("8", {"wall times recorded": all(t > 0 for t in times.values())},
                   f"informational only: {detail}")

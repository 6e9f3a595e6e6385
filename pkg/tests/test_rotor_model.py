import csv
import json
import shutil
from dataclasses import replace

import numpy as np
import pytest

from hkt_ccd.rotor_model import (CHORD_MAX, AirfoilPolar, BladeGeometry, BladeSection, IngestionError,
                                 PolarFormatError, RotorSpec, build_scaled_baseline, data_dir, load_geometry,
                                 load_polar, load_polars, lookup_polar, validate_bounds, write_geometry,
                                 write_polar)


def _nrel_chords():
    with open(data_dir() / "nrel5mw_blade.csv", newline="") as fh:
        return np.array([float(r["chord_m"]) for r in csv.DictReader(fh)])


def test_baseline_matches_table_values(baseline):
    assert baseline.tip_radius == pytest.approx(6.3)
    assert baseline.geometry.hub_radius == pytest.approx(0.15)
    assert baseline.inertia == 2234.0
    assert baseline.num_blades == 3
    assert baseline.fluid_density == 1000.0


def test_baseline_sections(baseline):
    secs = baseline.geometry.sections
    assert len(secs) == 10
    assert [s.kind for s in secs[:3]] == ["cylinder"] * 3
    assert all(s.kind == "foil" and s.is_design_free for s in secs[3:])
    assert {s.polar_id for s in secs[3:]} == {"DU21_A17"}
    assert sum(s.dr for s in secs) == pytest.approx(6.3 - 0.15, abs=1e-12)


def test_scaled_chords_fit_the_bound(baseline):
    # the largest published chord is 4.652 m, so every scaled chord is below 1 m
    assert _nrel_chords().max() * 0.1 <= CHORD_MAX
    chords = baseline.geometry.free_chords
    assert np.all((chords > 0) & (chords <= CHORD_MAX))
    assert validate_bounds(baseline.geometry) == []


def test_baseline_deterministic():
    a, b = build_scaled_baseline(), build_scaled_baseline()
    assert a.geometry == b.geometry
    for name in a.polars:
        assert np.array_equal(a.polars[name].cl, b.polars[name].cl)


def test_missing_data_file_names_the_file(tmp_path):
    for f in data_dir().iterdir():
        if f.is_file() and f.name != "du21_a17.csv":
            shutil.copy(f, tmp_path / f.name)
    with pytest.raises(IngestionError, match="du21_a17.csv"):
        build_scaled_baseline(tmp_path)


def test_corrupt_rotor_json(tmp_path):
    for f in data_dir().iterdir():
        if f.is_file():
            shutil.copy(f, tmp_path / f.name)
    (tmp_path / "nrel5mw_rotor.json").write_text("{not json")
    with pytest.raises(IngestionError, match="nrel5mw_rotor.json"):
        build_scaled_baseline(tmp_path)


def test_data_dir_env_override(monkeypatch, tmp_path):
    monkeypatch.setenv("HKT_DATA_DIR", str(tmp_path))
    assert data_dir() == tmp_path
    with pytest.raises(IngestionError):
        build_scaled_baseline()


# -- polars ------------------------------------------------------------------------

def test_du21_lift_crosses_zero_at_small_negative_alpha():
    p = load_polar(data_dir() / "du21_a17.csv")
    near = (p.alpha > -10) & (p.alpha < 5)
    a, cl = p.alpha[near], p.cl[near]
    k = np.flatnonzero(np.diff(np.sign(cl)) > 0)
    assert len(k) == 1
    zero = a[k[0]] - cl[k[0]] * (a[k[0] + 1] - a[k[0]]) / (cl[k[0] + 1] - cl[k[0]])
    assert -6.0 < zero < 0.0


@pytest.mark.parametrize("name", ["cylinder1.csv", "cylinder2.csv"])
def test_cylinder_has_no_lift(name):
    p = load_polar(data_dir() / name)
    assert np.all(p.cl == 0.0)
    cd = p.cd[0]
    assert np.all(p.cd == cd)
    rng = np.random.default_rng(0)
    for a in rng.uniform(-400, 400, 20):
        assert lookup_polar(p, a) == (0.0, cd)


def _write(path, rows, header="alpha_deg,cl,cd"):
    path.write_text(header + "\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n")
    return path


def test_polar_duplicate_alpha_rejected(tmp_path):
    f = _write(tmp_path / "p.csv", [(-180, 0, 0.1), (0, 0.5, 0.01), (0, 0.6, 0.01), (180, 0, 0.1)])
    with pytest.raises(PolarFormatError, match="row"):
        load_polar(f)


def test_polar_coverage_gap_rejected(tmp_path):
    f = _write(tmp_path / "p.csv", [(-170, 0, 0.1), (0, 0.5, 0.01), (180, 0, 0.1)])
    with pytest.raises(PolarFormatError, match="180"):
        load_polar(f)


def test_polar_negative_cd_rejected(tmp_path):
    f = _write(tmp_path / "p.csv", [(-180, 0, 0.1), (0, 0.5, -0.01), (180, 0, 0.1)])
    with pytest.raises(PolarFormatError, match="row 3"):
        load_polar(f)


def test_polar_bad_header_and_missing_file(tmp_path):
    f = _write(tmp_path / "p.csv", [(-180, 0, 0.1), (180, 0, 0.1)], header="a,b,c")
    with pytest.raises(PolarFormatError):
        load_polar(f)
    with pytest.raises(IngestionError):
        load_polar(tmp_path / "nope.csv")


def test_polar_rows_sorted(tmp_path):
    f = _write(tmp_path / "p.csv", [(180, 0, 0.1), (0, 0.5, 0.01), (-180, 0, 0.1)])
    p = load_polar(f)
    assert list(p.alpha) == [-180, 0, 180]
    assert list(p.cl) == [0, 0.5, 0]


def test_polar_round_trip_bit_identical(tmp_path):
    p = load_polar(data_dir() / "du21_a17.csv")
    write_polar(p, tmp_path / "copy.csv")
    q = load_polar(tmp_path / "copy.csv", name=p.name)
    for k in ("alpha", "cl", "cd"):
        assert np.array_equal(getattr(p, k), getattr(q, k))


def test_polar_invariants_on_construction():
    with pytest.raises(PolarFormatError):
        AirfoilPolar("x", [0.0], [0.0], [0.0])


def test_lookup_exact_at_nodes_and_linear_between():
    p = load_polar(data_dir() / "du21_a17.csv")
    for k in range(0, len(p.alpha) - 1, 7):
        assert lookup_polar(p, p.alpha[k]) == (p.cl[k], p.cd[k])
        mid = 0.5 * (p.alpha[k] + p.alpha[k + 1])
        cl, cd = lookup_polar(p, mid)
        assert cl == pytest.approx(0.5 * (p.cl[k] + p.cl[k + 1]), abs=1e-14)
        assert cd == pytest.approx(0.5 * (p.cd[k] + p.cd[k + 1]), abs=1e-14)


def test_lookup_wraps_and_is_continuous():
    p = load_polar(data_dir() / "du21_a17.csv")
    assert lookup_polar(p, 370.0) == pytest.approx(lookup_polar(p, 10.0), abs=1e-12)
    rng = np.random.default_rng(42)
    a = rng.uniform(-180, 180 - 1e-8, 1000)
    cl0, cd0 = lookup_polar(p, a)
    cl1, cd1 = lookup_polar(p, a + 1e-9)
    slope = np.max(np.abs(np.diff(p.cl) / np.diff(p.alpha)))
    assert np.max(np.abs(cl1 - cl0)) <= slope * 1e-9 * 1.01
    assert np.max(np.abs(cd1 - cd0)) <= 1e-8


def test_load_polars_unknown_name():
    with pytest.raises(IngestionError):
        load_polars(["NACA0012"])


# -- geometry ----------------------------------------------------------------------

def test_validate_bounds_names_section(baseline):
    g = baseline.geometry
    chords = g.free_chords.copy()
    chords[2] = 1.2
    msgs = validate_bounds(g.with_design(chords, g.free_twists))
    assert len(msgs) == 1 and "section 5" in msgs[0]


def test_twist_bounds_are_closed(baseline):
    g = baseline.geometry
    assert validate_bounds(g.with_design(g.free_chords, np.full(7, 30.0))) == []
    assert validate_bounds(g.with_design(g.free_chords, np.zeros(7))) == []
    assert len(validate_bounds(g.with_design(g.free_chords, np.full(7, 30.5)))) == 7
    assert len(validate_bounds(g.with_design(np.zeros(7), g.free_twists))) == 7


def test_geometry_round_trip(tmp_path, baseline):
    write_geometry(baseline.geometry, tmp_path / "g.csv")
    assert load_geometry(tmp_path / "g.csv") == baseline.geometry


def test_bundled_geometry_matches_builder(baseline):
    assert load_geometry(data_dir() / "scaled_baseline_geometry.csv") == baseline.geometry


def test_geometry_invariants(baseline):
    secs = list(baseline.geometry.sections)
    with pytest.raises(ValueError, match="increasing"):
        BladeGeometry(secs[::-1], 0.15, 6.3)
    with pytest.raises(ValueError, match="tile"):
        BladeGeometry([replace(secs[0], dr=secs[0].dr * 0.5)] + secs[1:], 0.15, 6.3)
    with pytest.raises(ValueError):
        BladeSection(1.0, 0.1, 0.3, 5.0, "cylinder", "Cylinder1", True)
    with pytest.raises(ValueError):
        BladeSection(1.0, 0.0, 0.3, 5.0, "foil", "DU21_A17", True)


def test_rotor_spec_invariants(baseline):
    with pytest.raises(ValueError):
        replace(baseline, inertia=0.0)
    with pytest.raises(ValueError):
        replace(baseline, fluid_density=-1.0)
    with pytest.raises(ValueError):
        replace(baseline, num_blades=0)
    with pytest.raises(ValueError):
        RotorSpec(baseline.geometry, {"DU21_A17": baseline.polars["DU21_A17"]})


def test_integration_weights(baseline):
    w = baseline.integration_weights()
    assert w.sum() == pytest.approx(0.5 * (6.3 + baseline.geometry.sections[-1].r_mid)
                                    - 0.5 * (0.15 + baseline.geometry.sections[0].r_mid))
    mid = replace(baseline, load_quadrature="midpoint").integration_weights()
    assert np.array_equal(mid, [s.dr for s in baseline.geometry.sections])


def test_rotor_json_carries_table_values():
    meta = json.loads((data_dir() / "nrel5mw_rotor.json").read_text())
    assert meta["rotor_diameter_m"] * meta["scaled"]["length_scale"] == pytest.approx(12.6)
    assert meta["hub_diameter_m"] * meta["scaled"]["length_scale"] == pytest.approx(0.3)

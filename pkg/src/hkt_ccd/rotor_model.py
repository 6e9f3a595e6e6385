"""Rotor geometry, the scaled NREL 5MW baseline, design bounds and airfoil polars."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

CHORD_MAX = 1.0  # m
TWIST_MIN = 0.0  # deg
TWIST_MAX = 30.0  # deg
DEFAULT_FLUID_DENSITY = 1000.0  # kg/m^3, fresh water

GEOMETRY_HEADER = ["r_mid_m", "dr_m", "chord_m", "twist_deg", "kind", "polar_id", "free"]
POLAR_HEADER = ["alpha_deg", "cl", "cd"]

# NREL 5MW aerodynamic nodes grouped into 10 design segments: three root
# cylinders kept one-to-one, the 14 outboard nodes merged pairwise.
SEGMENT_GROUPS = [[0], [1], [2], [3, 4], [5, 6], [7, 8], [9, 10], [11, 12], [13, 14], [15, 16]]
FOIL_POLAR = "DU21_A17"

_POLAR_FILES = {
    "DU21_A17": "du21_a17.csv",
    "Cylinder1": "cylinder1.csv",
    "Cylinder2": "cylinder2.csv",
}


class IngestionError(RuntimeError):
    """A bundled or user-supplied data file is missing or unreadable."""


class PolarFormatError(ValueError):
    pass


def data_dir() -> Path:
    """Bundled data directory, overridable with ``HKT_DATA_DIR``."""
    env = os.environ.get("HKT_DATA_DIR")
    if env:
        return Path(env)
    return Path(__file__).resolve().parent / "data"


@dataclass(frozen=True)
class AirfoilPolar:
    name: str
    alpha: np.ndarray  # deg
    cl: np.ndarray
    cd: np.ndarray
    # Hermite node slopes used by the BEM solver's C1 interpolant.
    dcl: np.ndarray = field(init=False, repr=False, compare=False)
    dcd: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("alpha", "cl", "cd"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.alpha) == len(self.cl) == len(self.cd)) or len(self.alpha) < 2:
            raise PolarFormatError(f"polar {self.name!r}: arrays must share a length >= 2")
        for slot, values in (("dcl", self.cl), ("dcd", self.cd)):
            slopes = PchipInterpolator(self.alpha, values).derivative()(self.alpha)
            slopes.setflags(write=False)
            object.__setattr__(self, slot, slopes)


@dataclass(frozen=True)
class BladeSection:
    r_mid: float  # m
    dr: float  # m
    chord: float  # m
    twist: float  # deg
    kind: str  # "cylinder" | "foil"
    polar_id: str
    is_design_free: bool

    def __post_init__(self):
        if self.kind not in ("cylinder", "foil"):
            raise ValueError(f"unknown section kind {self.kind!r}")
        if self.dr <= 0:
            raise ValueError("section span must be positive")
        if self.kind == "cylinder" and self.is_design_free:
            raise ValueError("cylindrical root sections are not design variables")


@dataclass(frozen=True)
class BladeGeometry:
    sections: tuple[BladeSection, ...]
    hub_radius: float
    tip_radius: float

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(self.sections))
        r = [s.r_mid for s in self.sections]
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("sections must be ordered by strictly increasing radius")
        for s in self.sections:
            if not self.hub_radius < s.r_mid < self.tip_radius:
                raise ValueError(f"section at r={s.r_mid} lies outside the blade span")
        edge = self.hub_radius
        for i, s in enumerate(self.sections):
            lo, hi = s.r_mid - s.dr / 2, s.r_mid + s.dr / 2
            if abs(lo - edge) > 1e-9:
                raise ValueError(f"section {i} does not tile the span (gap/overlap at r={edge})")
            edge = hi
        if abs(edge - self.tip_radius) > 1e-9:
            raise ValueError("sections do not reach the tip radius")

    @property
    def free_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.sections) if s.is_design_free]

    @property
    def free_chords(self) -> np.ndarray:
        return np.array([self.sections[i].chord for i in self.free_indices])

    @property
    def free_twists(self) -> np.ndarray:
        return np.array([self.sections[i].twist for i in self.free_indices])

    def with_design(self, chords: Sequence[float], twists: Sequence[float]) -> "BladeGeometry":
        """Copy with the free sections' chords and twists replaced."""
        free = self.free_indices
        if len(chords) != len(free) or len(twists) != len(free):
            raise ValueError(f"expected {len(free)} chords and twists")
        sections = list(self.sections)
        for i, c, t in zip(free, chords, twists):
            sections[i] = replace(sections[i], chord=float(c), twist=float(t))
        return replace(self, sections=tuple(sections))


@dataclass(frozen=True)
class RotorSpec:
    geometry: BladeGeometry
    polars: Mapping[str, AirfoilPolar]
    num_blades: int = 3
    inertia: float = 2234.0  # kg m^2
    fluid_density: float = DEFAULT_FLUID_DENSITY
    rated_speed: float = 1.6  # m/s, informational
    # "trapezoid": loads integrated over [hub, r_mid..., tip] with zero load at
    # both ends; "midpoint": load(r_mid) * dr.
    load_quadrature: str = "trapezoid"

    def __post_init__(self):
        if self.load_quadrature not in ("trapezoid", "midpoint"):
            raise ValueError(f"unknown load quadrature {self.load_quadrature!r}")
        if self.inertia <= 0 or self.fluid_density <= 0 or self.num_blades < 1:
            raise ValueError("inertia and fluid density must be positive, num_blades >= 1")
        missing = {s.polar_id for s in self.geometry.sections} - set(self.polars)
        if missing:
            raise ValueError(f"no polar loaded for {sorted(missing)}")

    @property
    def tip_radius(self) -> float:
        return self.geometry.tip_radius

    def integration_weights(self) -> np.ndarray:
        """Spanwise weights turning per-length section loads into totals."""
        g = self.geometry
        r = np.array([s.r_mid for s in g.sections])
        if self.load_quadrature == "midpoint":
            return np.array([s.dr for s in g.sections])
        edges = np.concatenate([[g.hub_radius], r, [g.tip_radius]])
        return 0.5 * (edges[2:] - edges[:-2])

    @property
    def disk_area(self) -> float:
        return float(np.pi * self.geometry.tip_radius**2)

    def with_design(self, chords, twists) -> "RotorSpec":
        return replace(self, geometry=self.geometry.with_design(chords, twists))


# -- polars ---------------------------------------------------------------

def load_polar(path, name: str | None = None) -> AirfoilPolar:
    """Read a ``alpha_deg,cl,cd`` CSV into a validated full-range polar."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = [row for row in reader if row and any(c.strip() for c in row)]
    except (OSError, StopIteration) as exc:
        raise IngestionError(f"cannot read polar file {path}: {exc}") from exc
    if header != POLAR_HEADER:
        raise PolarFormatError(f"{path}: expected header {','.join(POLAR_HEADER)}, got {','.join(header)}")

    data = []
    for lineno, row in enumerate(rows, start=2):
        try:
            alpha, cl, cd = (float(x) for x in row)
        except ValueError as exc:
            raise PolarFormatError(f"{path}: row {lineno}: {exc}") from exc
        if not all(np.isfinite([alpha, cl, cd])):
            raise PolarFormatError(f"{path}: row {lineno}: non-finite value")
        if cd < 0:
            raise PolarFormatError(f"{path}: row {lineno}: negative cd {cd}")
        data.append((lineno, alpha, cl, cd))
    if len(data) < 2:
        raise PolarFormatError(f"{path}: need at least two rows")

    data.sort(key=lambda d: d[1])
    for prev, cur in zip(data, data[1:]):
        if cur[1] <= prev[1]:
            raise PolarFormatError(f"{path}: row {cur[0]}: alpha {cur[1]} is not strictly increasing")
    alpha = np.array([d[1] for d in data])
    if alpha[0] > -180 + 1e-6 or alpha[-1] < 180 - 1e-6:
        raise PolarFormatError(
            f"{path}: alpha must cover [-180, 180] deg (got [{alpha[0]}, {alpha[-1]}])"
        )
    return AirfoilPolar(
        name=name or path.stem,
        alpha=alpha,
        cl=np.array([d[2] for d in data]),
        cd=np.array([d[3] for d in data]),
    )


def write_polar(polar: AirfoilPolar, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POLAR_HEADER)
        for a, l, d in zip(polar.alpha, polar.cl, polar.cd):
            w.writerow([repr(float(a)), repr(float(l)), repr(float(d))])


def wrap_alpha(alpha):
    """Map angles in degrees into [-180, 180)."""
    return np.mod(np.asarray(alpha, dtype=float) + 180.0, 360.0) - 180.0


def lookup_polar(polar: AirfoilPolar, alpha):
    """Piecewise-linear (cl, cd) at ``alpha`` degrees, wrapped into [-180, 180]."""
    a = np.asarray(alpha, dtype=float)
    inside = (a >= -180.0) & (a <= 180.0)
    a = np.where(inside, a, wrap_alpha(a))
    cl = np.interp(a, polar.alpha, polar.cl)
    cd = np.interp(a, polar.alpha, polar.cd)
    if np.ndim(alpha) == 0:
        return float(cl), float(cd)
    return cl, cd


# -- geometry -------------------------------------------------------------

def validate_bounds(geometry: BladeGeometry) -> list[str]:
    """Return one message per violated design bound on the free sections."""
    out = []
    for i, s in enumerate(geometry.sections):
        if not s.is_design_free:
            continue
        if not 0.0 < s.chord <= CHORD_MAX:
            out.append(f"section {i}: chord {s.chord:.6g} m outside (0, {CHORD_MAX}]")
        if not TWIST_MIN <= s.twist <= TWIST_MAX:
            out.append(f"section {i}: twist {s.twist:.6g} deg outside [{TWIST_MIN}, {TWIST_MAX}]")
    return out


def write_geometry(geometry: BladeGeometry, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GEOMETRY_HEADER)
        for s in geometry.sections:
            w.writerow([repr(s.r_mid), repr(s.dr), repr(s.chord), repr(s.twist),
                        s.kind, s.polar_id, int(s.is_design_free)])


def load_geometry(path) -> BladeGeometry:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise IngestionError(f"cannot read geometry file {path}: {exc}") from exc
    if not rows or list(rows[0].keys()) != GEOMETRY_HEADER:
        raise IngestionError(f"{path}: expected header {','.join(GEOMETRY_HEADER)}")
    sections = []
    for lineno, row in enumerate(rows, start=2):
        try:
            sections.append(BladeSection(
                r_mid=float(row["r_mid_m"]), dr=float(row["dr_m"]),
                chord=float(row["chord_m"]), twist=float(row["twist_deg"]),
                kind=row["kind"].strip(), polar_id=row["polar_id"].strip(),
                is_design_free=row["free"].strip().lower() in ("1", "true", "yes"),
            ))
        except (ValueError, TypeError) as exc:
            raise IngestionError(f"{path}: row {lineno}: {exc}") from exc
    # the file carries spans only; rounding removes the r_mid +/- dr/2 residue
    hub = round(sections[0].r_mid - sections[0].dr / 2, 12)
    tip = round(sections[-1].r_mid + sections[-1].dr / 2, 12)
    return BladeGeometry(sections=tuple(sections), hub_radius=hub, tip_radius=tip)


def load_polars(names=None, directory=None) -> dict[str, AirfoilPolar]:
    directory = Path(directory) if directory is not None else data_dir()
    names = names or list(_POLAR_FILES)
    out = {}
    for name in names:
        try:
            fname = _POLAR_FILES[name]
        except KeyError:
            raise IngestionError(f"no bundled polar named {name!r}") from None
        path = directory / fname
        if not path.exists():
            raise IngestionError(f"missing polar data file {path}")
        out[name] = load_polar(path, name=name)
    return out


def _read_nrel_table(path: Path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        table = {
            "r": np.array([float(r["r_node_m"]) for r in rows]),
            "dr": np.array([float(r["dr_m"]) for r in rows]),
            "chord": np.array([float(r["chord_m"]) for r in rows]),
            "twist": np.array([float(r["twist_deg"]) for r in rows]),
            "airfoil": [r["airfoil"].strip() for r in rows],
        }
    except (OSError, KeyError, ValueError) as exc:
        raise IngestionError(f"cannot ingest NREL 5MW blade table {path}: {exc}") from exc
    if len(table["r"]) != 17:
        raise IngestionError(f"{path}: expected 17 aerodynamic nodes, found {len(table['r'])}")
    return table


def build_scaled_baseline(directory=None, fluid_density: float = DEFAULT_FLUID_DENSITY) -> RotorSpec:
    """The 1:10 scaled NREL 5MW rotor used as the hydrokinetic baseline."""
    directory = Path(directory) if directory is not None else data_dir()
    meta_path = directory / "nrel5mw_rotor.json"
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise IngestionError(f"cannot ingest rotor data file {meta_path}: {exc}") from exc
    table = _read_nrel_table(directory / "nrel5mw_blade.csv")
    scale = float(meta["scaled"]["length_scale"])

    hub = round(0.5 * meta["hub_diameter_m"] * scale, 12)
    tip = round(0.5 * meta["rotor_diameter_m"] * scale, 12)
    # The published node spans are rounded (2.7333); stretch them to tile exactly.
    dr = table["dr"] * ((tip - hub) / scale) / table["dr"].sum() * scale

    sections = []
    edge = hub
    for k, group in enumerate(SEGMENT_GROUPS):
        w = dr[group]
        span = float(w.sum())
        chord = float(np.dot(w, table["chord"][group]) / span) * scale
        twist = float(np.dot(w, table["twist"][group]) / span)
        foils = {table["airfoil"][i] for i in group}
        cylinder = all(f.startswith("Cylinder") for f in foils)
        sections.append(BladeSection(
            r_mid=edge + span / 2,
            dr=span,
            chord=chord,
            twist=twist,
            kind="cylinder" if cylinder else "foil",
            polar_id=table["airfoil"][group[0]] if cylinder else FOIL_POLAR,
            is_design_free=not cylinder,
        ))
        edge += span
    # snap the accumulated edge onto the tip to kill round-off
    last = sections[-1]
    sections[-1] = replace(last, dr=tip - (last.r_mid - last.dr / 2), r_mid=0.5 * (tip + last.r_mid - last.dr / 2))
    geometry = BladeGeometry(sections=tuple(sections), hub_radius=hub, tip_radius=tip)

    polar_ids = sorted({s.polar_id for s in sections})
    return RotorSpec(
        geometry=geometry,
        polars=load_polars(polar_ids, directory),
        num_blades=int(meta["num_blades"]),
        inertia=float(meta["scaled"]["rotor_inertia_kgm2"]),
        fluid_density=fluid_density,
        rated_speed=float(meta["scaled"]["rated_speed_mps"]),
    )

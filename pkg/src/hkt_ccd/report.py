"""Report artifacts: markdown energy table, CSV series and SVG line plots."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .pipelines import ComparisonReport
from .rotor_model import write_geometry

SUMMARY_HEADER = ["method", "status", "energy_kJ", "improvement_pct", "cp_star", "lambda_star",
                  "saturation_fraction", "resim_energy_kJ", "wall_time_s"]


def _fmt(x, spec=".10g"):
    return "" if x is None else format(float(x), spec)


def write_cp_curve(path, curve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "cp"])
        for lam, cp in curve:
            w.writerow([_fmt(lam), _fmt(cp)])


def write_summary(path, report: ComparisonReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for e in report.entries:
            w.writerow([e.method, e.status, _fmt(e.energy), _fmt(e.improvement_pct), _fmt(e.cp_star),
                        _fmt(e.lambda_star), _fmt(e.saturation_fraction), _fmt(e.resim_energy),
                        _fmt(e.wall_time, ".3f")])


def markdown(report: ComparisonReport, title: str = "Energy comparison", failures=None) -> str:
    cfg = report.cfg
    umax = "unbounded" if cfg.u_max is None else f"{cfg.u_max:g} N m"
    prof = report.profile
    lines = [
        f"# {title}",
        "",
        f"Flow profile: {prof.kind} {', '.join(f'{k}={v}' for k, v in prof.params.items() if k not in ('times', 'speeds'))}; "
        f"horizon {cfg.horizon:g} s, {cfg.num_segments} collocation segments, control bound {umax}, "
        f"initial rotor speed {cfg.omega0_mode}.",
        "",
        "| Method | Generated energy (kJ) | Improvement (%) | max Cp | at lambda | Saturated time fraction | Re-simulated energy (kJ) | Computation time (s) |",
        "|---|---:|---:|---:|---:|---:|---:|---:|",
    ]
    for e in report.entries:
        lines.append(
            f"| {e.method} | {e.energy:.0f} | {e.improvement_pct:+.1f} | {e.cp_star:.4f} | {e.lambda_star:.2f} | "
            f"{e.saturation_fraction:.3f} | {e.resim_energy:.0f} | {e.wall_time:.1f} |")
    lines += ["", "Computation times are informational and hardware dependent.", ""]
    for e in report.entries:
        if e.status != "converged" or e.notes:
            lines.append(f"- {e.method}: solver status {e.status}" + "".join(f"; {n}" for n in e.notes))
    for method, msg in (failures or {}).items():
        lines.append(f"- {method}: FAILED ({msg})")
    lines += ["", "## Geometry (free sections)", "",
              "| Method | " + " | ".join(f"c{i + 1} (m)" for i in range(len(report.entries[0].geometry.free_indices)))
              + " | " + " | ".join(f"tw{i + 1} (deg)" for i in range(len(report.entries[0].geometry.free_indices))) + " |",
              "|---|" + "---:|" * (2 * len(report.entries[0].geometry.free_indices))]
    for e in report.entries:
        g = e.geometry
        lines.append(f"| {e.method} | " + " | ".join(f"{c:.4f}" for c in g.free_chords) + " | "
                     + " | ".join(f"{t:.3f}" for t in g.free_twists) + " |")
    return "\n".join(lines) + "\n"


def _plot(path, series, xlabel, ylabel, title):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "hkt-ccd"
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, x, y in series:
        ax.plot(x, y, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_artifacts(report: ComparisonReport, out_dir, cp_curves: dict, title="Energy comparison",
                    failures=None) -> list[Path]:
    """Write every report file into ``out_dir``; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for e in report.entries:
        p = out / f"geometry_{e.method}.csv"
        write_geometry(e.geometry, p)
        written.append(p)
        p = out / f"trajectory_{e.method}.csv"
        e.trajectory.write_csv(p)
        written.append(p)
        p = out / f"cp_curve_{e.method}.csv"
        write_cp_curve(p, cp_curves[e.method])
        written.append(p)
    p = out / "summary.csv"
    write_summary(p, report)
    written.append(p)
    p = out / "report.md"
    p.write_text(markdown(report, title, failures), encoding="utf-8")
    written.append(p)

    ents = report.entries
    plots = {
        "cp_curves.svg": ([(e.method, *np.array(cp_curves[e.method]).T) for e in ents],
                          "tip-speed ratio", "Cp", "Power coefficient"),
        "chord.svg": ([(e.method, [s.r_mid for s in e.geometry.sections], [s.chord for s in e.geometry.sections]) for e in ents],
                      "radius (m)", "chord (m)", "Chord distribution"),
        "twist.svg": ([(e.method, [s.r_mid for s in e.geometry.sections], [s.twist for s in e.geometry.sections]) for e in ents],
                      "radius (m)", "twist (deg)", "Twist distribution"),
        "omega.svg": ([(e.method, e.trajectory.times, e.trajectory.omega) for e in ents],
                      "time (s)", "rotor speed (rad/s)", "Rotor speed"),
        "control.svg": ([(e.method, e.trajectory.times, e.trajectory.u) for e in ents],
                        "time (s)", "generator torque (N m)", "Control torque"),
        "flow.svg": ([("v", ents[0].trajectory.times, ents[0].trajectory.v)],
                     "time (s)", "flow speed (m/s)", "Inflow"),
    }
    for name, (series, xl, yl, ttl) in plots.items():
        _plot(out / name, series, xl, yl, ttl)
        written.append(out / name)
    return written

import os

import pytest
from hypothesis import HealthCheck, settings

from hkt_ccd.rotor_model import build_scaled_baseline

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def baseline():
    return build_scaled_baseline()


class ScenarioRuns:
    """Memoized pipeline runs shared across test modules.

    Keys are (method, u_max, profile kind, segments, start) so that every
    expensive optimization runs at most once per session.
    """

    def __init__(self, spec):
        self.spec = spec
        self.cache = {}

    def profile(self, kind):
        from hkt_ccd.dynamics import FlowProfile

        return {"sinusoidal": FlowProfile.sinusoidal, "ramp": FlowProfile.ramp}[kind]()

    def get(self, method, u_max=None, kind="sinusoidal", segments=30, start="baseline"):
        from hkt_ccd.colloc import OcpConfig
        from hkt_ccd.pipelines import DesignVector, run_baseline, run_ccd, run_sequential

        key = (method, u_max, kind, segments, start)
        if key not in self.cache:
            prof = self.profile(kind)
            cfg = OcpConfig(num_segments=segments, u_max=u_max)
            init = DesignVector.from_spec(self.spec, 8.0)
            if method == "baseline":
                res = run_baseline(prof, cfg, self.spec)
            elif method == "sequential":
                res = run_sequential(prof, cfg, init, self.spec)
            elif start == "baseline":
                res = run_ccd(prof, cfg, init, None, self.spec)
            else:  # CCD started at the sequential optimum, geometry and trajectory
                seq = self.get("sequential", u_max, kind, segments)
                res = run_ccd(prof, cfg, seq.design, None, self.spec, initial_trajectory=seq.trajectory)
            self.cache[key] = res
        return self.cache[key]


@pytest.fixture(scope="session")
def runs(baseline):
    return ScenarioRuns(baseline)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line per acceptance criterion; returns the verdict."""

    def record(label, checks: dict, detail=""):
        ok = all(checks.values())
        failed = [k for k, v in checks.items() if not v]
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}"
        if failed:
            line += f"  [failed: {', '.join(failed)}]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

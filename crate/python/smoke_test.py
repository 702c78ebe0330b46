"""Smoke test for the pylgeo extension module.

Build and install first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/pylgeo-*.whl
"""

import math
import pathlib
import tempfile

import pylgeo

ROOT = pathlib.Path(__file__).resolve().parent.parent


def check_spectral():
    ev = pylgeo.eigenvalues([[2.0, 1.0], [1.0, 2.0]])
    assert all(abs(a - b) < 1e-12 for a, b in zip(ev, [1.0, 3.0])), ev
    s = pylgeo.arctan_sum([[4.0 / 3.0, 0, 0], [0, 2.0, 0], [0, 0, 2.0]])
    assert abs(s - math.pi) < 1e-12, s
    assert pylgeo.elementary_symmetric([1.0, 2.0, 3.0, 4.0]) == [1.0, 10.0, 35.0, 50.0, 24.0]
    det, sigma = pylgeo.geodesic_operator(0.7, [0.2, -0.4], [[1.0, 0.3], [0.3, 2.0]], 0.5)
    assert abs(det - sigma) < 1e-12, (det, sigma)
    branch = pylgeo.Branch.select(2)
    assert abs(branch.big_theta - math.pi) < 1e-15


def check_closed_form():
    cfg = pylgeo.Config.load(ROOT / "configs" / "constant_hessian_n2.cfg")
    cfg = cfg.with_overrides(tau_schedule=[1.0, 0.25], grid=8, time_grid=9)
    sol = cfg.solve()
    assert sol.converged
    for k, tau in enumerate(sol.taus):
        times, rows = sol.v_hat(k)
        for t, row in zip(times, rows):
            exact = (2.0 / 3.0) * tau * t * (t - 1.0)
            assert max(abs(v - exact) for v in row) < 1e-8
    gaps = sol.cauchy_gaps
    assert len(gaps) == 1 and abs(gaps[0] - 0.75 / 6.0) < 1e-8, gaps
    assert sol.records()[0]["converged"]


def check_errors_and_reports():
    try:
        pylgeo.Config.load(ROOT / "configs" / "inadmissible_n2.cfg").solve()
    except pylgeo.AdmissibilityError:
        pass
    else:
        raise AssertionError("Q = I should be rejected")
    try:
        pylgeo.Config.from_toml("n = 0")
    except pylgeo.ConfigError:
        pass
    else:
        raise AssertionError("bad config accepted")
    with tempfile.TemporaryDirectory() as out:
        cfg = pylgeo.Config.load(ROOT / "configs" / "negative_branch_n2.cfg").with_overrides(out=out)
        report = cfg.run("solve")
        assert report["passed"] and report["negative_branch"], report["error"]
        assert (pathlib.Path(out) / "report.json").exists()


def main():
    check_spectral()
    check_closed_form()
    check_errors_and_reports()
    print("pylgeo smoke test: ok")


if __name__ == "__main__":
    main()

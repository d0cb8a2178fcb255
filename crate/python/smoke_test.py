"""Smoke test for the gcflow_py extension module.

Build and install first, for example:

    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/gcflow_py-*.whl
"""

import math

import gcflow_py as g


def main() -> None:
    grid = g.Grid(2, math.pi / 4, 32)
    assert len(grid) == 32 and grid.dim == 2

    flat = g.Field.constant(grid, 0.0)
    assert abs(flat.min_eig_w(grid) - 1.0) < 1e-12
    assert all(abs(k - 1.0) < 1e-12 for k in flat.gauss_curvature(grid))

    params = g.FlowParams(0.5, t_end=1.0, c_rescale=0.0)
    out = g.run_flow(flat, params, grid)
    exact = g.radial_solution(1.0, 0.5, 0.0)
    err = max(abs(p - exact) for p in out.phi())
    assert err < 1e-3, err
    assert abs(exact - math.log(g.theta(0.0, 1.0, 0.5))) < 1e-14
    assert out.report_csv().startswith("t,s,theta,")
    assert abs(out.records()[-1]["m_max"] - 1.0) < 1e-3

    bump = g.Field.bump(grid, 0.05, math.pi / 4)
    run = g.run_flow(bump, g.FlowParams(0.5, s_end=1.0), grid)
    recs = run.records()
    assert recs[-1]["osc_phitilde"] < recs[0]["osc_phitilde"]

    try:
        g.FlowParams(1.2, t_end=1.0)
    except ValueError as e:
        assert "0<alpha<1" in str(e)
    else:
        raise AssertionError("alpha = 1.2 accepted")

    try:
        g.run_flow(g.Field.bump(grid, 3.0, math.pi / 4), params, grid)
    except g.FlowError as e:
        assert "admissible" in str(e) or "convex" in str(e), e
    else:
        raise AssertionError("inadmissible bump accepted")

    assert abs(g.beta(0.5, 2) - 2.0) < 1e-15
    print(f"smoke test ok: radial error {err:.2e}, {run.steps} steps to s = {run.s:.3f}")


if __name__ == "__main__":
    main()

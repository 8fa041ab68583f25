"""Acceptance criteria 1-10 at their stated tolerances.

Each test records one verdict line; the lines are printed in the pytest
terminal summary and when this file is run as a script.  Criteria that are
not attainable are left failing; the numbers behind them are in the lines.
"""
import time

import pytest

from wicknls import experiments as ex

pytestmark = pytest.mark.acceptance

RESULTS = {}


def _record(n, passed, detail, elapsed, budget):
    ok = bool(passed) and elapsed < budget
    line = f"{'PASS' if ok else 'FAIL'}  criterion {n:>2}: {detail}  [{elapsed:.1f}s / budget {budget:.0f}s]"
    RESULTS[n] = line
    print(line)
    return ok


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_criterion_01_gaussian_moments():
    res, dt = _timed(ex.gaussian_moments, max_k2=5, ps=(1, 2, 3), samples=100_000, seed=0)
    assert _record(1, res["passed"], f"max |z| = {res['max_abs_z']:.2f} over {len(res['rows'])} moments (< 4)", dt, 60)


def test_criterion_02_wick_second_moment():
    res, dt = _timed(ex.wick_second_moment, modes=((1, 0), (1, 1), (2, 0)), n_cut=16, samples=100_000, seed=0)
    zs = ", ".join(f"{r['mode']}: z={r['z']:+.2f}" for r in res["rows"])
    assert _record(2, res["passed"], f"{zs} (|z| < 4)", dt, 600)


def test_criterion_03_uniform_bound():
    res, dt = _timed(ex.wick_uniform_bound, cutoffs=(4, 8, 16, 32), beta=-0.5, seed=0)
    vals = lambda name: ", ".join(f"{r['value']:.0f}" for r in res["rows"] if r["estimator"] == name)  # noqa: E731
    detail = (f"renormalized MC {vals('renormalized_mc')} max/min {res['renormalized_ratio']:.2f} (< 1.25), "
              f"exact {vals('renormalized_exact')}; plain MC {vals('plain_mc')} increasing: {res['plain_increasing']}")
    assert _record(3, res["passed"], detail, dt, 900)


def test_criterion_04_gradient_moment():
    res, dt = _timed(ex.gradient_moment, n_cut=4, samples=50_000, seed=0)
    zs = ", ".join(f"z={r['z']:+.2f}" for r in res["rows"])
    assert _record(4, res["passed"], f"{zs} (|z| < 4)", dt, 600)


def test_criterion_05_conservation():
    res, dt = _timed(ex.conservation, cases=((1, 32), (2, 32)), dt=1e-3, T=1.0)
    parts = [f"d={r['dim']}: mass {r['mass_drift']:.1e} H {r['hamiltonian_drift']:.1e} order {r['hamiltonian_order']:.2f}"
             for r in res["rows"]]
    assert _record(5, res["passed"], "; ".join(parts) + " (mass <= 1e-8, H <= 1e-6, order 4 +- 0.5)", dt, 300)


def test_criterion_06_renormalized_mass():
    res, dt = _timed(ex.renormalized_mass_stats, n_cut=4, samples=100_000, seed=0)
    detail = f"mean z={res['z_mean']:+.2f}, var {res['var']:.2f} vs {res['var_exact']:.1f} z={res['z_var']:+.2f}"
    assert _record(6, res["passed"], detail, dt, 60)


@pytest.mark.parametrize("dim", [1, 2])
def test_criterion_07_gibbs_invariance(dim):
    res, dt = _timed(ex.gibbs_invariance, dim, n_cut=8, members=10_000, T=1.0, dt=1e-3, seed=0)
    g, neg = res["reports"]["gibbs"], res["reports"]["negative_control"]
    min_p = min(t.p_value for t in g.tests)
    detail = (f"d={dim} gibbs rejections {len(g.rejections)} (min p {min_p:.3g}); "
              f"negative control rejections {len(neg.rejections)} (>= 1)")
    key = 7 + dim / 10
    assert _record(key, res["passed"], detail, dt, 1800)


@pytest.mark.parametrize("dim", [1, 2])
def test_criterion_08_surface_invariance(dim):
    res, dt = _timed(ex.surface_invariance, dim, n_cut=8, members=10_000, T=1.0, dt=1e-3, seed=0)
    rep = res["report"]
    failed = [k for k, v in res["checks"].items() if not v]
    detail = (f"d={dim} r={res['r']:.3f} acceptance {rep.info.get('acceptance_fraction', 0):.2f}, "
              f"KS rejections {len(rep.rejections)}, E(1)={res['one'].ratio!r}, "
              f"E(E)={res['E'].ratio:.4f}+-{res['E'].ratio_se:.4f}; failed checks: {failed or 'none'}")
    assert _record(8 + dim / 10, res["passed"], detail, dt, 1800)


def test_criterion_09_appendix_series():
    res, dt = _timed(ex.appendix_series, K=(8, 16, 32, 64), beta=-0.5, dim=2)
    parts = [f"{s}: increments {', '.join(f'{x:.1f}' for x in res[s]['increments'])}, "
             f"final {100 * res[s]['final_fraction']:.1f}%" for s in ("S1", "S2")]
    assert _record(9, res["passed"], "; ".join(parts) + " (decreasing, final < 10%)", dt, 120)


def test_criterion_10_oracle_equivalence():
    res, dt = _timed(ex.oracle_equivalence, trials=100, seed=0)
    worst = max(max(r["fft_vs_direct"], r["orthogonality"]) for r in res["rows"])
    gauge = max(r["gauge"] for r in res["rows"])
    assert _record(10, res["passed"], f"max fft/direct or orthogonality error {worst:.1e}, gauge {gauge:.1e}", dt, 120)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))

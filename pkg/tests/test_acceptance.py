"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The heavy scenario runs
(vacuum disk, two-level density, INS decay, viscosity sweep) are module-scoped
fixtures so dependent criteria share them.
"""

import dataclasses
import time

import numpy as np
import pytest

from torusflow import cns, diagnostics as dg, harness as hz, inequalities as ineq
from torusflow import linear as lt, spectral as sp

TWO_PI = 2 * np.pi


def _report(cid, name, ok, details):
    print(f"\n[acceptance] {cid} {name}: {'PASS' if ok else 'FAIL'} ({details})")
    assert ok, f"{cid} {name}: {details}"


@pytest.fixture(scope="module")
def vacuum_run(tmp_path_factory):
    t0 = time.perf_counter()
    manifest = hz.run_scenario(hz.preset("vacuum-disk"), tmp_path_factory.mktemp("vacuum"))
    return manifest, time.perf_counter() - t0


@pytest.fixture(scope="module")
def ins_run(tmp_path_factory):
    t0 = time.perf_counter()
    manifest = hz.run_scenario(hz.preset("ins-smooth"), tmp_path_factory.mktemp("ins"))
    return manifest, time.perf_counter() - t0


@pytest.fixture(scope="module")
def sweep_run(tmp_path_factory):
    t0 = time.perf_counter()
    report = hz.sweep(
        hz.preset("sweep-template"), [10.0, 20.0, 40.0, 80.0],
        tmp_path_factory.mktemp("sweep"), workers=1,
    )
    return report, time.perf_counter() - t0


@pytest.fixture(scope="module")
def two_level_run(tmp_path_factory):
    t0 = time.perf_counter()
    manifest = hz.run_scenario(hz.preset("two-level-density"), tmp_path_factory.mktemp("twolevel"))
    return manifest, time.perf_counter() - t0


def test_c1_identity_suite():
    grid = sp.make_grid((TWO_PI, TWO_PI), (64, 64))
    rng = np.random.default_rng(7)
    params = cns.CnsParams(mu=1.0, lam=4.0, kappa=1.0, gamma=1.4)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        rho = sp.random_band_limited(grid, rng, 8, mean_value=1.0, amplitude=0.6)
        u1 = sp.random_band_limited(grid, rng, 8, amplitude=1.0).values
        u2 = sp.random_band_limited(grid, rng, 8, amplitude=1.0).values
        st = cns.CnsState(
            0.0, rho, sp.vector(grid, rho.values * u1, rho.values * u2), params, grid
        )
        res = dg.identity_residuals(st)
        worst = max(worst, res["flux_identity"], res["elliptic_pythagoras"],
                    res["helmholtz_reconstruction"])
    wall = time.perf_counter() - t0
    ok = worst < 1e-10 and wall < 5.0
    _report("C1", "identity-suite", ok,
            f"worst residual {worst:.2e} over 100 states at N=64, {wall:.2f}s")


def _rk4_mode(a0, d0, nu, k2, pp, t_end, n):
    h = t_end / n
    a, d = float(a0), float(d0)
    for _ in range(n):
        k1a, k1d = -d, pp * k2 * a - nu * k2 * d
        a2, d2 = a + 0.5 * h * k1a, d + 0.5 * h * k1d
        k2a, k2d = -d2, pp * k2 * a2 - nu * k2 * d2
        a3, d3 = a + 0.5 * h * k2a, d + 0.5 * h * k2d
        k3a, k3d = -d3, pp * k2 * a3 - nu * k2 * d3
        a4, d4 = a + h * k3a, d + h * k3d
        k4a, k4d = -d4, pp * k2 * a4 - nu * k2 * d4
        a += h / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
        d += h / 6.0 * (k1d + 2 * k2d + 2 * k3d + k4d)
    return a, d


def test_c2_linear_oracle():
    t0 = time.perf_counter()
    lattice = [
        (2.0, 1.0, 1.0),   # confluent point
        (0.5, 1.0, 1.0), (1.0, 2.0, 1.0), (5.0, 1.0, 1.0), (10.0, 1.0, 1.0),
        (10.0, 4.0, 2.0), (50.0, 2.0, 1.0), (100.0, 1.0, 1.0), (4.0, 4.0, 4.0),
    ]
    worst_evolve = 0.0
    worst_vieta = 0.0
    for nu, k2, pp in lattice:
        lam_p, lam_m, _ = lt.acoustic_eigenvalues(nu, k2, pp)
        worst_vieta = max(
            worst_vieta,
            abs(lam_p + lam_m + nu * k2) / max(1.0, nu * k2),
            abs(lam_p * lam_m - pp * k2) / max(1.0, pp * k2),
        )
        t_end = min(2.0, 20.0 / abs(lam_p.real))
        a0, d0 = 0.8, -0.9
        a, d = lt.evolve_linear_mode(a0, d0, nu, k2, pp, t_end)
        ar, dr = _rk4_mode(a0, d0, nu, k2, pp, t_end, 8000)
        worst_evolve = max(worst_evolve, abs(a - ar), abs(d - dr))
    wall = time.perf_counter() - t0
    ok = worst_evolve < 1e-10 and worst_vieta < 1e-12 and wall < 1.0
    _report("C2", "linear-oracle", ok,
            f"evolve vs RK4 {worst_evolve:.2e}, Vieta {worst_vieta:.2e}, {wall:.2f}s")


def test_c3_solver_vs_linear():
    cfg = hz.preset("acoustic-mode")  # nu = 10, P'(1) = 1, N = 32
    grid = sp.make_grid(cfg.lengths, cfg.resolution)
    st = cns.generate_initial_data(cfg.initial, grid, cfg.params())
    a0 = cfg.initial.amplitude
    _, lam_m, _ = lt.acoustic_eigenvalues(cfg.nu, 1.0, 1.0)
    d0 = -lam_m.real * a0
    t0 = time.perf_counter()
    times = [0.0]
    sim = [2.0 * np.real(st.rho.spec()[1, 0])]
    next_s = 0.1
    while st.time < 5.0 - 1e-12:
        dt = min(cns.cfl_dt(st, cfg.cfl), next_s - st.time, 5.0 - st.time)
        st = cns.cns_step(st, dt)
        if st.time >= next_s - 1e-12:
            times.append(st.time)
            sim.append(2.0 * np.real(st.rho.spec()[1, 0]))
            next_s += 0.1
    wall = time.perf_counter() - t0
    a_lin, _ = lt.evolve_linear_mode(a0, d0, cfg.nu, 1.0, 1.0, np.array(times))
    err = np.linalg.norm(np.array(sim) - a_lin) / np.linalg.norm(a_lin)
    ok = err < 0.01 and wall < 30.0
    _report("C3", "solver-vs-linear", ok,
            f"amplitude-1e-6 acoustic mode over [0,5]: rel L2 error {err:.4f}, {wall:.1f}s")


def test_c4_conservation_vacuum_disk(vacuum_run):
    manifest, wall = vacuum_run
    cons = manifest.conservation
    ok = (
        cons["mass_rel_drift"] < 1e-12
        and cons["momentum_drift_per_time"] < 1e-8
        and cons["rho_min"] >= 0.0
        and wall < 300.0
    )
    _report("C4", "conservation-vacuum", ok,
            f"mass drift {cons['mass_rel_drift']:.2e}, momentum drift/t "
            f"{cons['momentum_drift_per_time']:.2e}, min rho {cons['rho_min']:.2e}, "
            f"{manifest.n_steps} steps, {wall:.0f}s")


def _balance_residual(dt, tmp_path):
    cfg = dataclasses.replace(hz.preset("smooth-perturbation"), dt=dt, diagnostic_interval=dt)
    manifest = hz.run_scenario(cfg, tmp_path / f"dt_{dt:g}")
    rows = hz._read_csv(manifest.csv_path)
    diss = cfg.mu * rows["norm_grad_Pu_L2"] ** 2 + cfg.nu * rows["norm_div_u_L2"] ** 2
    r = dg.balance_residual_arrays(rows["t"], rows["E"], diss)
    return float(np.max(np.abs(r)))


def test_c5_energy_balance_order(tmp_path):
    t0 = time.perf_counter()
    r_coarse = _balance_residual(0.05, tmp_path)
    r_fine = _balance_residual(0.025, tmp_path)
    wall = time.perf_counter() - t0
    ratio = r_coarse / r_fine
    ok = ratio >= 3.5 and wall < 300.0
    _report("C5", "energy-balance-order", ok,
            f"residual {r_coarse:.3e} -> {r_fine:.3e} under dt halving, "
            f"ratio {ratio:.2f} (>= 3.5), {wall:.0f}s")


def test_c6_ins_decay_bound(ins_run):
    manifest, wall = ins_run
    rows = hz._read_csv(manifest.csv_path)
    b1 = manifest.predicted["beta1"]
    ke = 2.0 * rows["KE"]  # int rho |u|^2
    bound = 1.05 * ke[0] * np.exp(-b1 * rows["t"])
    margin = float(np.max(ke / bound))
    ok = bool(np.all(ke <= bound)) and manifest.flags["ke_bound_ok"] and wall < 300.0
    _report("C6", "ins-decay-bound", ok,
            f"beta1 = {b1:.4f}, max KE/(1.05 e^(-beta1 t) KE0) = {margin:.4f}, "
            f"rho in [{manifest.conservation['rho_min']:.3f}, "
            f"{manifest.conservation['rho_max']:.3f}], {wall:.0f}s")


def test_c7_nu_scaling(sweep_run):
    report, wall = sweep_run
    slope = report["acoustic_rate_loglog_slope"]
    spread = report["grad_Pu_rate_relative_spread"]
    ok = abs(slope + 1.0) <= 0.15 and spread < 0.20 and wall < 1200.0
    per_nu = ", ".join(f"nu={r['nu']:g}: {r['rate_P']:.4f}" for r in report["per_nu"])
    _report("C7", "nu-scaling", ok,
            f"slope {slope:.4f} (-1 +/- 0.15), grad-Pu spread {spread:.2%} (< 20%); "
            f"rates: {per_nu}; {wall:.0f}s")


def test_c8_density_bounds(two_level_run):
    manifest, wall = two_level_run
    lo = manifest.conservation["rho_min"]
    hi = manifest.conservation["rho_max"]
    ok = lo >= 0.25 and hi <= 4.0 and wall < 600.0
    _report("C8", "density-bounds", ok,
            f"rho(t,x) in [{lo:.4f}, {hi:.4f}] over T=10 at nu=80 "
            f"(need [0.25, 4]), {wall:.0f}s")


def test_c9_effective_flux_report(two_level_run):
    manifest, _ = two_level_run
    fg = manifest.fits["norm_Gtilde_L2"]
    fp = manifest.fits["norm_Ptilde_L2"]
    ok = (
        fg is not None and fp is not None
        and np.isfinite(fg["alpha"]) and np.isfinite(fp["alpha"]) and fp["alpha"] != 0.0
    )
    ratio = fg["alpha"] / fp["alpha"] if ok else float("nan")
    _report("C9", "effective-flux-comparison (REPORT-ONLY)", ok,
            f"rate(G~) = {fg['alpha']:.5f} [R2 {fg['r_squared']:.3f}], "
            f"rate(P~) = {fp['alpha']:.5f} [R2 {fp['r_squared']:.3f}], "
            f"ratio = {ratio:.3f}; no pass/fail on the comparison per the open question")


def test_c10_inequality_corpus():
    grid = sp.make_grid((TWO_PI, TWO_PI), (32, 32))
    t0 = time.perf_counter()
    rep_p = ineq.run_inequality_corpus("poincare_weighted", grid, 1000, seed=11)
    rep_t = ineq.run_inequality_corpus("pti", grid, 1000, seed=12)
    a = sp.constant_field(grid, 1.0)
    z = sp.scalar(grid, np.cos(grid.X))
    lhs, rhs = ineq.eval_poincare_weighted(a, z)
    eig_ratio = lhs / rhs

    f1_vals_ok = all(
        abs(ineq.F1(0.0, g) - 1.0) < 1e-8 and abs(ineq.F1(1.0, g) - g) < 1e-10
        for g in (1.0, 1.4, 2.0, 3.0)
    )
    svals = np.linspace(0.0, 6.0, 1000)
    fvals = [ineq.F1(s, 1.7) for s in svals]
    f1_monotone = all(b >= a_ - 1e-12 for a_, b in zip(fvals, fvals[1:]))

    lemma_ok = True
    c_gammas = {}
    for gamma in (1.0, 1.4, 2.0):
        lattice = np.arange(0.0, 3.0 + 1e-9, 0.01)
        out = ineq.check_energy_equivalence(lattice, 1.0, 3.0, gamma)
        lemma_ok &= out["pressure"].violations == 0
        lemma_ok &= out["energy_lower"].fitted_constant > 0
        lemma_ok &= np.isfinite(out["energy_upper"].fitted_constant)
        c_gammas[gamma] = out["energy_lower"].fitted_constant
    wall = time.perf_counter() - t0
    ok = (
        rep_p.violations == 0
        and rep_t.violations == 0
        and abs(eig_ratio - 1.0) < 1e-8
        and f1_vals_ok
        and f1_monotone
        and lemma_ok
        and wall < 10.0
    )
    _report("C10", "inequality-corpus", ok,
            f"1000 trials: A.1 violations {rep_p.violations}, density-weighted Poincare "
            f"violations {rep_t.violations}, eigenmode ratio {eig_ratio:.10f}, "
            f"F1 endpoints+monotone {f1_vals_ok and f1_monotone}, "
            f"lemma c_gamma {dict((k, round(v, 4)) for k, v in c_gammas.items())}, {wall:.1f}s")


def test_c11_time_weighted(sweep_run):
    report, _ = sweep_run
    # analytic checks of the accumulator (quadrature tolerance 1e-3)
    t = np.linspace(0.0, 3.0, 31)
    s_const = dg.TimeSeries("one", t, np.ones_like(t))
    v1 = dg.weighted_norm_accumulator(s_const, 0.0, 0.0, "integral")
    t2 = np.linspace(0.0, 25.0, 25001)
    s_exp = dg.TimeSeries("exp", t2, np.exp(-2.0 * t2))
    v2 = dg.weighted_norm_accumulator(s_exp, 1.0, 0.0, "integral")
    t3 = np.linspace(0.0, 10.0, 20001)
    s_exp3 = dg.TimeSeries("exp", t3, np.exp(-2.0 * t3))
    v3 = dg.weighted_norm_accumulator(s_exp3, 1.0, 1.0, "sup")
    analytic_ok = (
        abs(v1 - 3.0) < 1e-3 and abs(v2 - 1.0) < 1e-3 and abs(v3 - 1.0 / np.e) < 1e-3
    )

    # weighted functionals on the criterion-7 runs: finite, reported
    functional_lines = []
    finite_ok = True
    for row in report["per_nu"]:
        rows = hz._read_csv(row["csv_path"])
        beta = 0.9 * row["rate_P"]
        grad2 = dg.TimeSeries("gradPu2", rows["t"], rows["norm_grad_Pu_L2"] ** 2)
        gtinf = dg.TimeSeries("GtLinf", rows["t"], rows["norm_Gtilde_Linf"])
        sup_tw = dg.weighted_norm_accumulator(grad2, beta, 1.0, "sup")
        int_g = dg.weighted_norm_accumulator(gtinf, beta, 0.0, "integral")
        finite_ok &= np.isfinite(sup_tw) and np.isfinite(int_g)
        functional_lines.append(
            f"nu={row['nu']:g}: sup t e^bt ||grad Pu||^2 = {sup_tw:.3e}, "
            f"int e^bt ||G~||_inf = {int_g:.3e}"
        )
    ok = analytic_ok and finite_ok
    _report("C11", "time-weighted-quantities", ok,
            f"analytic: int 1 = {v1:.4f}, int e^(b-2)t = {v2:.4f}, sup t e^-t = {v3:.4f}; "
            + "; ".join(functional_lines))

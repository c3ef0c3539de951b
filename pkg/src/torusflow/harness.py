"""Experiment configuration, scenario presets, run orchestration, reports.

A run is deterministic: the same config and seed produce byte-identical CSV
output, independent of how many runs execute concurrently (parallelism only
ever happens across whole runs, which share nothing mutable).
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as dg
from . import spectral as sp
from .checkpoint import save_checkpoint
from .cns import (
    CnsParams,
    InitialDataSpec,
    SolverError,
    cfl_dt,
    cns_step,
    generate_initial_data,
)
from .ins import beta1, generate_ins_initial_data, ins_cfl_dt, ins_step
from .linear import predicted_alpha0

__all__ = [
    "ConfigError",
    "RunConfig",
    "RunManifest",
    "load_config",
    "preset",
    "PRESET_NAMES",
    "run_scenario",
    "sweep",
    "check_suite",
    "fit_csv",
]

# thresholds for the manifest pass/fail flags (from the scheme contracts)
MASS_DRIFT_TOL = 1e-12  # relative, whole run
MOMENTUM_DRIFT_TOL = 1e-8  # absolute, per unit simulated time
KE_BOUND_SLACK = 1.05  # discrete slack on exp(-beta1 t)
DIV_FREE_TOL = 1e-10  # ||div u|| <= tol * ||grad u||

FIT_COLUMNS = ["KE", "norm_Ptilde_L2", "norm_Gtilde_L2", "norm_grad_Pu_L2"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Full experiment description; every field is echoed into the manifest."""

    system: str  # "CNS" | "INS"
    lengths: tuple = (2 * math.pi, 2 * math.pi)
    resolution: tuple = (64, 64)
    t_end: float = 1.0
    dt: float | None = None  # None => auto-CFL
    cfl: float = 0.4
    diagnostic_interval: float = 0.1
    seed: int = 0
    label: str = "run"
    mu: float = 1.0
    lam: float = 0.0
    kappa: float = 1.0
    gamma: float = 1.0
    initial: InitialDataSpec = field(
        default_factory=lambda: InitialDataSpec(kind="smooth_perturbation")
    )
    fit_window: tuple | None = None  # None => last two thirds of the run

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.system not in ("CNS", "INS"):
            raise ConfigError(f"system must be CNS or INS, got {self.system!r}")
        if self.t_end <= 0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not (0 < self.cfl <= 0.9):
            raise ConfigError(f"cfl must lie in (0, 0.9], got {self.cfl}")
        if self.diagnostic_interval <= 0:
            raise ConfigError("diagnostic_interval must be positive")
        if len(self.lengths) != 2 or len(self.resolution) != 2:
            raise ConfigError("lengths and resolution must each have 2 entries")
        if self.mu <= 0 or self.lam + 2 * self.mu <= 0:
            raise ConfigError("need mu > 0 and nu = lam + 2*mu > 0")

    @property
    def nu(self) -> float:
        return self.lam + 2.0 * self.mu

    def params(self) -> CnsParams:
        return CnsParams(mu=self.mu, lam=self.lam, kappa=self.kappa, gamma=self.gamma)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lengths"] = list(self.lengths)
        d["resolution"] = list(self.resolution)
        d["initial"]["levels"] = list(self.initial.levels)
        d["initial"]["mode"] = list(self.initial.mode)
        return d


def _cfg_from_dict(data: dict, label: str = "run") -> RunConfig:
    data = dict(data)
    init_data = data.pop("initial", {})
    try:
        init = InitialDataSpec(
            **{
                **init_data,
                "levels": tuple(init_data.get("levels", (0.5, 2.0))),
                "mode": tuple(init_data.get("mode", (1, 0))),
            }
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad [initial] table: {err}") from err
    data.setdefault("label", label)
    for key in ("lengths", "resolution", "fit_window"):
        if key in data and data[key] is not None:
            data[key] = tuple(data[key])
    try:
        return RunConfig(initial=init, **data)
    except TypeError as err:
        raise ConfigError(f"bad config: {err}") from err


def load_config(path) -> RunConfig:
    """Parse a TOML run configuration (schema documented in the README)."""
    import tomli

    try:
        with open(path, "rb") as f:
            raw = tomli.load(f)
    except tomli.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from err
    run = raw.get("run", {})
    run["initial"] = raw.get("initial", {})
    if "grid" in raw:
        run.update(raw["grid"])
    if "params" in raw:
        run.update(raw["params"])
    return _cfg_from_dict(run, label=os.path.splitext(os.path.basename(str(path)))[0])


# -- scenario presets ---------------------------------------------------------

TWO_PI = 2 * math.pi


def _presets() -> dict:
    return {
        "rest": RunConfig(
            system="CNS",
            resolution=(32, 32),
            t_end=0.5,
            diagnostic_interval=0.05,
            kappa=1.0,
            gamma=2.0,
            initial=InitialDataSpec(kind="smooth_perturbation", amplitude=0.0),
            label="rest",
        ),
        "acoustic-mode": RunConfig(
            system="CNS",
            resolution=(32, 32),
            t_end=5.0,
            mu=1.0,
            lam=8.0,  # nu = 10
            kappa=1.0,
            gamma=1.0,
            diagnostic_interval=0.1,
            initial=InitialDataSpec(kind="acoustic_mode", amplitude=1e-6, mode=(1, 0)),
            label="acoustic-mode",
        ),
        "smooth-perturbation": RunConfig(
            system="CNS",
            resolution=(64, 64),
            t_end=2.0,
            dt=0.1,
            diagnostic_interval=0.1,
            mu=1.0,
            lam=0.0,  # nu = 2
            kappa=0.04,  # quiet acoustics: sound speed 0.2
            gamma=1.0,
            initial=InitialDataSpec(kind="smooth_perturbation", amplitude=0.05, seed=12, kmax=3),
            label="smooth-perturbation",
        ),
        "vacuum-disk": RunConfig(
            system="CNS",
            resolution=(128, 128),
            t_end=10.0,
            diagnostic_interval=0.25,
            mu=1.0,
            lam=8.0,  # nu = 10
            kappa=1.0,
            gamma=2.0,
            initial=InitialDataSpec(
                kind="vacuum_patch",
                amplitude=1.0,
                velocity_amplitude=0.2,
                patch_radius=0.2,
                mollification_width=2.0,
                seed=21,
            ),
            label="vacuum-disk",
        ),
        "two-level-density": RunConfig(
            system="CNS",
            resolution=(128, 128),
            t_end=10.0,
            diagnostic_interval=0.25,
            mu=1.0,
            lam=78.0,  # nu = 80
            kappa=1.0,
            gamma=2.0,
            initial=InitialDataSpec(
                kind="discontinuous_density",
                amplitude=1.0,
                velocity_amplitude=0.3,
                levels=(0.5, 2.0),
                patch_radius=0.25,
                mollification_width=2.0,
                seed=22,
            ),
            label="two-level-density",
        ),
        "sweep-template": RunConfig(
            system="CNS",
            resolution=(32, 32),
            t_end=40.0,
            diagnostic_interval=0.2,
            mu=1.0,
            lam=8.0,  # nu = 10; the sweep overrides lam per nu
            kappa=1.0,
            gamma=1.0,
            initial=InitialDataSpec(
                kind="smooth_perturbation",
                amplitude=1e-3,
                seed=31,
                kmax=3,
                K=1.0,
            ),
            label="sweep-template",
        ),
        "ins-smooth": RunConfig(
            system="INS",
            resolution=(128, 128),
            t_end=5.0,
            dt=2.5e-3,
            diagnostic_interval=0.05,
            mu=1.0,
            initial=InitialDataSpec(
                kind="smooth_perturbation",
                amplitude=0.5,
                velocity_amplitude=0.5,
                seed=41,
                kmax=3,
            ),
            label="ins-smooth",
        ),
        "ins-vacuum-regularized": RunConfig(
            system="INS",
            resolution=(64, 64),
            t_end=0.5,
            dt=1e-3,
            diagnostic_interval=0.05,
            mu=1.0,
            initial=InitialDataSpec(
                kind="vacuum_patch",
                amplitude=1.0,
                velocity_amplitude=0.3,
                patch_radius=0.2,
                seed=42,
            ),
            label="ins-vacuum-regularized",
        ),
    }


PRESET_NAMES = tuple(_presets().keys())


def preset(name: str) -> RunConfig:
    try:
        return _presets()[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESET_NAMES}") from None


# -- running ------------------------------------------------------------------


@dataclass
class RunManifest:
    """Machine-readable record of one run."""

    config: dict
    system: str
    build: str
    wall_clock_s: float
    n_steps: int
    conservation: dict
    flags: dict
    fits: dict
    predicted: dict
    regularized: bool
    csv_path: str
    failure: str | None = None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True, default=float)


def _format_row(row: dict) -> str:
    return ",".join(repr(float(row[c])) for c in dg.CSV_COLUMNS)


def _write_csv(path, rows):
    lines = [",".join(dg.CSV_COLUMNS)]
    lines.extend(_format_row(r) for r in rows)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        f.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def _default_window(t_end: float):
    return (t_end / 3.0, t_end)


def _fit_or_note(series_rows, column, window):
    t = np.array([r["t"] for r in series_rows])
    v = np.array([r[column] for r in series_rows])
    if np.all(v == 0.0):
        return dg.DecayFit(0.0, 0.0, 1.0, window, int(t.size))
    mask = (t >= window[0]) & (t <= window[1])
    if mask.sum() < 5 or np.any(v[mask] <= 0.0):
        return None
    return dg.fit_decay(dg.TimeSeries(column, t, v), window)


def _integrate(config: RunConfig, on_sample):
    """Shared stepping loop; calls on_sample(state) at diagnostic times."""
    grid = sp.make_grid(config.lengths, config.resolution)
    if config.system == "CNS":
        state = generate_initial_data(config.initial, grid, config.params())
        stepper, dt_bound = cns_step, cfl_dt
    else:
        state = generate_ins_initial_data(config.initial, grid, config.mu)
        stepper, dt_bound = ins_step, ins_cfl_dt
    on_sample(state)
    next_sample = config.diagnostic_interval
    n_steps = 0
    while state.time < config.t_end - 1e-12:
        if config.dt is not None:
            dt = config.dt
        else:
            dt = dt_bound(state, config.cfl)
            if not np.isfinite(dt):
                dt = config.diagnostic_interval
            dt = min(dt, next_sample - state.time)
        dt = min(dt, config.t_end - state.time)
        state = stepper(state, dt)
        n_steps += 1
        if state.time >= next_sample - 1e-12:
            on_sample(state)
            while next_sample <= state.time + 1e-12:
                next_sample += config.diagnostic_interval
    return state, n_steps


def run_scenario(config: RunConfig, out_dir) -> RunManifest:
    """Integrate to t_end, write CSV + manifest, and evaluate the run flags.

    On solver failure the last state is dumped to failure_state.ckpt in the
    output directory and the error is re-raised.
    """
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{config.label}.csv")
    rows = []
    states_seen = {"last": None}
    rho_bar0 = {"value": None}

    def on_sample(state):
        states_seen["last"] = state
        if rho_bar0["value"] is None and config.system == "CNS":
            rho_bar0["value"] = sp.mean(state.rho)
        rows.append(dg.diagnostics_row(state, rho_bar0["value"]))

    t0 = _time.perf_counter()
    try:
        final_state, n_steps = _integrate(config, on_sample)
    except SolverError as err:
        if err.state is not None:
            save_checkpoint(err.state, os.path.join(out_dir, "failure_state.ckpt"))
        elif states_seen["last"] is not None:
            save_checkpoint(states_seen["last"], os.path.join(out_dir, "failure_state.ckpt"))
        raise
    wall = _time.perf_counter() - t0

    _write_csv(csv_path, rows)

    t = np.array([r["t"] for r in rows])
    mass = np.array([r["mass"] for r in rows])
    momx = np.array([r["mom_x"] for r in rows])
    momy = np.array([r["mom_y"] for r in rows])
    rho_min = min(r["rho_min"] for r in rows)
    rho_max = max(r["rho_max"] for r in rows)
    mass_drift = float(np.max(np.abs(mass - mass[0]))) / max(abs(mass[0]), 1e-300)
    mom_drift = float(
        max(np.max(np.abs(momx - momx[0])), np.max(np.abs(momy - momy[0])))
    ) / max(config.t_end, 1e-300)
    conservation = {
        "mass_rel_drift": mass_drift,
        "momentum_drift_per_time": mom_drift,
        "rho_min": rho_min,
        "rho_max": rho_max,
    }
    flags = {
        "mass_ok": mass_drift < MASS_DRIFT_TOL,
        "momentum_ok": mom_drift < MOMENTUM_DRIFT_TOL,
        "rho_nonnegative": rho_min >= 0.0,
    }

    window = config.fit_window or _default_window(config.t_end)
    fits = {}
    for col in FIT_COLUMNS:
        f = _fit_or_note(rows, col, window)
        fits[col] = None if f is None else dataclasses.asdict(f)

    predicted = {}
    regularized = False
    grid = sp.make_grid(config.lengths, config.resolution)
    if config.system == "CNS":
        pred = predicted_alpha0(config.mu, rho_bar0["value"], config.kappa, config.gamma, config.nu)
        predicted["alpha0_shape"] = pred.alpha0_shape
        predicted["nu"] = config.nu
    else:
        # beta1 from the initial density (regenerated deterministically)
        init_state = generate_ins_initial_data(config.initial, grid, config.mu)
        b1 = beta1(init_state.rho, config.mu, grid)
        predicted["beta1"] = b1
        ke = np.array([2.0 * r["KE"] for r in rows])  # int rho|u|^2
        bound = KE_BOUND_SLACK * ke[0] * np.exp(-b1 * t)
        flags["ke_bound_ok"] = bool(np.all(ke <= bound + 1e-300))
        grad_u = np.array([r["norm_grad_Pu_L2"] for r in rows])
        div_u = np.array([r["norm_div_u_L2"] for r in rows])
        flags["div_free_ok"] = bool(np.all(div_u <= DIV_FREE_TOL * np.maximum(grad_u, 1e-300)))
        regularized = bool(getattr(final_state, "regularized", False))

    from . import __version__

    manifest = RunManifest(
        config=config.to_dict(),
        system=config.system,
        build=f"torusflow-{__version__}",
        wall_clock_s=wall,
        n_steps=n_steps,
        conservation=conservation,
        flags=flags,
        fits=fits,
        predicted=predicted,
        regularized=regularized,
        csv_path=csv_path,
    )
    tmp = os.path.join(out_dir, "manifest.json.tmp")
    with open(tmp, "w") as f:
        f.write(manifest.to_json() + "\n")
    os.replace(tmp, os.path.join(out_dir, "manifest.json"))
    return manifest


# -- parameter sweep -----------------------------------------------------------

PU_FIT_WINDOW = (0.5, 12.0)  # parabolic branch window (rate ~ mu)


def _sweep_worker(args):
    config_dict, nu, out_dir = args
    cfg = _cfg_from_dict(config_dict)
    cfg = dataclasses.replace(cfg, lam=nu - 2.0 * cfg.mu, label=f"nu_{nu:g}")
    # longer horizon for slower decay; the slow acoustic rate scales like 1/nu
    base_nu = config_dict["lam"] + 2.0 * config_dict["mu"]
    cfg = dataclasses.replace(cfg, t_end=config_dict["t_end"] * nu / base_nu)
    run_dir = os.path.join(out_dir, f"nu_{nu:g}")
    manifest = run_scenario(cfg, run_dir)
    rows = _read_csv(manifest.csv_path)
    t = rows["t"]
    fit_p = dg.fit_decay(
        dg.TimeSeries("norm_Ptilde_L2", t, rows["norm_Ptilde_L2"]),
        (cfg.t_end / 3.0, cfg.t_end),
    )
    pu_win = (PU_FIT_WINDOW[0], min(PU_FIT_WINDOW[1], cfg.t_end))
    fit_pu = dg.fit_decay(
        dg.TimeSeries("norm_grad_Pu_L2", t, rows["norm_grad_Pu_L2"]), pu_win
    )
    return {
        "nu": nu,
        "rate_P": fit_p.alpha,
        "rate_P_r2": fit_p.r_squared,
        "rate_gradPu": fit_pu.alpha,
        "rate_gradPu_r2": fit_pu.r_squared,
        "csv_path": manifest.csv_path,
        "t_end": cfg.t_end,
    }


def _read_csv(path) -> dict:
    with open(path) as f:
        header = f.readline().strip().split(",")
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}


def sweep(template: RunConfig, nu_list, out_dir, workers: int | None = None) -> dict:
    """Run the template once per nu and regress fitted rates against nu.

    Runs are independent and may execute in parallel (one run per worker);
    any failed run marks the whole sweep failed.
    """
    nus = sorted(float(v) for v in nu_list)
    if len(nus) < 3:
        raise ConfigError(f"sweep needs at least 3 nu values, got {len(nus)}")
    if any(v <= 2.0 * template.mu for v in nus):
        raise ConfigError("every nu must exceed 2*mu (lam > 0 crossover)")
    os.makedirs(out_dir, exist_ok=True)
    args = [(template.to_dict(), nu, out_dir) for nu in nus]
    if workers is None:
        workers = min(len(nus), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            table = list(pool.map(_sweep_worker, args))
    else:
        table = [_sweep_worker(a) for a in args]

    log_nu = np.log([row["nu"] for row in table])
    log_rate = np.log([row["rate_P"] for row in table])
    slope = float(np.polyfit(log_nu, log_rate, 1)[0])
    pu_rates = np.array([row["rate_gradPu"] for row in table])
    pu_spread = float(np.max(pu_rates) / np.min(pu_rates) - 1.0)
    report = {
        "nu_values": nus,
        "per_nu": table,
        "acoustic_rate_loglog_slope": slope,
        "grad_Pu_rate_relative_spread": pu_spread,
        "workers": workers,
    }
    tmp = os.path.join(out_dir, "sweep_report.json.tmp")
    with open(tmp, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True, default=float)
        f.write("\n")
    os.replace(tmp, os.path.join(out_dir, "sweep_report.json"))
    return report


# -- inequality / identity suite ------------------------------------------------


def check_suite(corpus_size: int, seed: int) -> dict:
    """Run the inequality catalog and identity residuals on random corpora.

    Returns a dict with per-inequality reports and an overall ``ok`` flag
    (False on any hard violation).
    """
    from . import inequalities as ineq
    from .cns import CnsParams, CnsState

    if corpus_size < 0:
        raise ConfigError("corpus size must be nonnegative")
    if corpus_size == 0:
        return {"ok": True, "reports": [], "identity_max_residual": 0.0, "trials": 0}

    grid = sp.make_grid((TWO_PI, TWO_PI), (32, 32))
    reports = []
    for iid in ("poincare_weighted", "pti", "utl2"):
        reports.append(ineq.run_inequality_corpus(iid, grid, corpus_size, seed))
    for iid, p in (
        ("gn_weighted", 4),
        ("gn_weighted", 6),
        ("sobolev_weighted", 4),
        ("interp_l4", None),
        ("gnlr", 3),
        ("gnlr", 6),
    ):
        rep = ineq.run_inequality_corpus(iid, grid, corpus_size, seed + 1, p=p)
        rep.inequality_id = f"{iid}" + (f"_p{p}" if p else "")
        reports.append(rep)

    # sharpness witness: first eigenmode saturates the Poincare constant
    a = sp.constant_field(grid, 1.0)
    z = sp.scalar(grid, np.cos(grid.X))
    lhs, rhs = ineq.eval_poincare_weighted(a, z)
    eigenmode_ratio = lhs / rhs

    # Lemma A.2 equivalence over the deterministic density lattice + noise
    rng = np.random.default_rng(seed + 2)
    lemma = {}
    for gamma in (1.0, 1.4, 2.0):
        rho_star = 3.0
        lattice = np.concatenate(
            [np.arange(0.0, rho_star + 1e-9, 0.01), rng.uniform(0.0, rho_star, 500)]
        )
        lemma[f"gamma_{gamma:g}"] = {
            k: dataclasses.asdict(v) if isinstance(v, ineq.InequalityReport) else v
            for k, v in ineq.check_energy_equivalence(lattice, 1.0, rho_star, gamma).items()
        }

    # F1 endpoint values and monotonicity
    f1_ok = (
        abs(ineq.F1(0.0, 2.0) - 1.0) < 1e-9
        and abs(ineq.F1(1.0, 1.7) - 1.7) < 1e-9
        and all(
            ineq.F1(s2, 1.5) >= ineq.F1(s1, 1.5) - 1e-12
            for s1, s2 in zip(np.linspace(0, 5, 50), np.linspace(0, 5, 50)[1:])
        )
    )

    # identity residuals on random band-limited states
    rng = np.random.default_rng(seed + 3)
    params = CnsParams(mu=1.0, lam=3.0, kappa=1.2, gamma=1.5)
    worst_identity = 0.0
    n_states = max(corpus_size // 10, 3)
    for _ in range(n_states):
        rho = sp.random_band_limited(grid, rng, 5, mean_value=1.0, amplitude=0.5)
        u1 = sp.random_band_limited(grid, rng, 5, amplitude=1.0).values
        u2 = sp.random_band_limited(grid, rng, 5, amplitude=1.0).values
        st = CnsState(
            time=0.0,
            rho=rho,
            momentum=sp.vector(grid, rho.values * u1, rho.values * u2),
            params=params,
            grid=grid,
        )
        res = dg.identity_residuals(st)
        worst_identity = max(worst_identity, max(res.values()))

    hard_violations = sum(
        r.violations for r in reports if r.inequality_id.split("_p")[0] in ineq.SHARP_IDS
    )
    lemma_violations = sum(
        block["pressure"]["violations"] for block in lemma.values()
    )
    ok = (
        hard_violations == 0
        and lemma_violations == 0
        and abs(eigenmode_ratio - 1.0) < 1e-8
        and f1_ok
        and worst_identity < 1e-10
    )
    return {
        "ok": ok,
        "trials": corpus_size,
        "reports": [dataclasses.asdict(r) for r in reports],
        "poincare_eigenmode_ratio": eigenmode_ratio,
        "lemma_a2": lemma,
        "f1_ok": f1_ok,
        "identity_max_residual": worst_identity,
        "identity_states": n_states,
    }


def fit_csv(csv_path, column, window=None):
    """CLI helper: fit a decay rate to one CSV column."""
    rows = _read_csv(csv_path)
    if column not in rows:
        raise ConfigError(f"column {column!r} not in {csv_path} (has {sorted(rows)})")
    series = dg.TimeSeries(column, rows["t"], rows[column])
    return dg.fit_decay(series, window)

"""Functionals, time series, decay fits, and exact-identity residuals.

Everything here is a pure function of states or sampled series.  The three
identity residuals (flux decomposition, elliptic Pythagoras, Helmholtz
reconstruction) are discrete identities of the spectral operators and hold
to rounding for arbitrary states; they serve as self-checks of a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .cns import CnsState, effective_flux, potential_energy_density, velocity_from_momentum
from .spectral import VectorField

__all__ = [
    "TimeSeries",
    "DecayFit",
    "energy_total",
    "dissipation_rate",
    "energy_balance_residual",
    "balance_residual_arrays",
    "D_functional",
    "tilde_fields",
    "identity_residuals",
    "weighted_norm_accumulator",
    "fit_decay",
    "density_bounds",
    "diagnostics_row",
    "CSV_COLUMNS",
]


@dataclass
class TimeSeries:
    """Sampled diagnostic trajectory with strictly increasing times."""

    name: str
    t: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t.shape != self.values.shape:
            raise ValueError("time and value arrays differ in length")
        if self.t.size > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError(f"times of series {self.name!r} are not strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"series {self.name!r} contains non-finite values")

    def __len__(self):
        return self.t.size


@dataclass
class DecayFit:
    """Exponential envelope A*exp(-alpha*t); alpha > 0 means decay."""

    alpha: float
    amplitude: float
    r_squared: float
    window: tuple
    n_points: int


def _is_ins(state) -> bool:
    return hasattr(state, "u") and not isinstance(state, CnsState)


def energy_total(state, rho_bar: float | None = None) -> float:
    """E = int(rho |u|^2 / 2 + e(rho)); potential part taken against rho_bar."""
    from .ins import kinetic_energy

    ke = 0.5 * kinetic_energy(state)
    if _is_ins(state):
        return ke
    if rho_bar is None:
        rho_bar = sp.mean(state.rho)
    e = potential_energy_density(state.rho, rho_bar, state.params)
    return ke + float(np.mean(e.values))


def dissipation_rate(state) -> float:
    """Instantaneous dissipation mu*||grad Pu||^2 + nu*||div u||^2."""
    if _is_ins(state):
        return state.mu * sp.grad_norm_l2(state.u) ** 2
    u = velocity_from_momentum(state)
    Pu, _ = sp.leray_project(u)
    p = state.params
    return p.mu * sp.grad_norm_l2(Pu) ** 2 + p.nu * sp.lp_norm(sp.div(u), 2) ** 2


def balance_residual_arrays(t, E, diss) -> np.ndarray:
    """r(t) = E(t) + trapezoidal integral of the dissipation - E(0)."""
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    diss = np.asarray(diss, dtype=float)
    if t.size < 3:
        raise ValueError("energy balance residual needs at least 3 samples")
    acc = np.zeros_like(t)
    acc[1:] = np.cumsum(0.5 * (diss[1:] + diss[:-1]) * np.diff(t))
    return E + acc - E[0]


def energy_balance_residual(states) -> TimeSeries:
    """Residual of the energy balance along a sampled trajectory."""
    states = list(states)
    if len(states) < 3:
        raise ValueError("energy balance residual needs at least 3 states")
    rho_bar = None if _is_ins(states[0]) else sp.mean(states[0].rho)
    t = np.array([s.time for s in states])
    E = np.array([energy_total(s, rho_bar) for s in states])
    diss = np.array([dissipation_rate(s) for s in states])
    r = balance_residual_arrays(t, E, diss)
    return TimeSeries("energy_balance_residual", t, r, {"functional": "E + int(diss) - E0"})


def D_functional(state, nu: float | None = None) -> float:
    """D = int(rho |u|^2)/2 + (1/nu) int(e)."""
    from .ins import kinetic_energy

    ke = 0.5 * kinetic_energy(state)
    if _is_ins(state):
        return ke
    if nu is None:
        nu = state.params.nu
    rho_bar = sp.mean(state.rho)
    e = potential_energy_density(state.rho, rho_bar, state.params)
    return ke + float(np.mean(e.values)) / nu


def tilde_fields(state: CnsState):
    """(P_tilde, P_bar, G_tilde, G_bar); P_bar + G_bar = nu*mean(div u) = 0."""
    from .cns import pressure

    P = pressure(state.rho, state.params)
    P_bar = sp.mean(P)
    P_tilde = sp.scalar(state.grid, P.values - P_bar)
    _, G_tilde, G_bar = effective_flux(state)
    return P_tilde, P_bar, G_tilde, G_bar


def identity_residuals(state: CnsState, u_dot: VectorField | None = None) -> dict:
    """Relative residuals of three exact identities of the flux machinery.

    flux_identity:            nu*div(u) = G_tilde + P_tilde
    elliptic_pythagoras:      ||mu*lap(Pu)||^2 + ||grad G||^2 = ||rho u_dot||^2
                              with rho*u_dot evaluated in the residual form
                              mu*(lap u - grad div u) + grad G
    helmholtz_reconstruction: u = Pu - grad((-lap)^-1 (G_tilde + P_tilde))/nu

    If a measured convective derivative is supplied, the defect between it
    and the residual form is reported under "momentum_residual".
    """
    g = state.grid
    p = state.params
    u = velocity_from_momentum(state)
    P_tilde, _, G_tilde, _ = tilde_fields(state)
    div_u = sp.div(u)

    num = sp.scalar(g, p.nu * div_u.values - G_tilde.values - P_tilde.values)
    flux_res = sp.lp_norm(num, 2) / max(sp.lp_norm(sp.scalar(g, p.nu * div_u.values), 2), 1e-300)

    Pu, _ = sp.leray_project(u)
    lap_Pu = sp.vector_laplacian(Pu)
    G = sp.scalar(g, G_tilde.values)  # gradient ignores the mean anyway
    gG = sp.grad(G)
    r1 = p.mu * lap_Pu.u1.values + gG.u1.values
    r2 = p.mu * lap_Pu.u2.values + gG.u2.values
    lhs = p.mu**2 * sp.lp_norm(lap_Pu, 2) ** 2 + sp.lp_norm(gG, 2) ** 2
    rhs = float(np.mean(r1**2 + r2**2))
    elliptic_res = abs(lhs - rhs) / max(rhs, 1e-300)

    # G~ + P~ is mean-free analytically; drop the float dust the O(1) means
    # leave behind before inverting the Laplacian
    phi = sp.inv_neg_laplacian(sp.remove_mean(sp.scalar(g, G_tilde.values + P_tilde.values)))
    gphi = sp.grad(phi)
    rec1 = Pu.u1.values - gphi.u1.values / p.nu
    rec2 = Pu.u2.values - gphi.u2.values / p.nu
    u1, u2 = u.phys()
    err = np.sqrt(np.mean((u1 - rec1) ** 2 + (u2 - rec2) ** 2))
    helmholtz_res = err / max(sp.lp_norm(u, 2), 1e-300)

    out = {
        "flux_identity": flux_res,
        "elliptic_pythagoras": elliptic_res,
        "helmholtz_reconstruction": helmholtz_res,
    }
    if u_dot is not None:
        rho = state.rho.phys()
        d1 = rho * u_dot.u1.phys() - r1
        d2 = rho * u_dot.u2.phys() - r2
        out["momentum_residual"] = float(np.sqrt(np.mean(d1**2 + d2**2))) / max(
            np.sqrt(rhs), 1e-300
        )
    return out


def weighted_norm_accumulator(
    series: TimeSeries, beta: float, sigma: float, reduction: str
) -> float:
    """sup or trapezoidal integral of exp(beta*t) * t^sigma * value(t)."""
    if len(series) == 0:
        raise ValueError("empty series")
    if beta < 0 or sigma < 0:
        raise ValueError("beta and sigma must be nonnegative")
    w = np.exp(beta * series.t) * np.power(series.t, sigma) * series.values
    if reduction == "sup":
        return float(np.max(w))
    if reduction == "integral":
        if len(series) < 2:
            raise ValueError("integral reduction needs at least 2 samples")
        return float(np.trapezoid(w, series.t))
    raise ValueError(f"unknown reduction {reduction!r}")


def fit_decay(series: TimeSeries, window: tuple | None = None) -> DecayFit:
    """Least squares on (t, log value); alpha > 0 means decay.

    Requires at least 5 strictly positive samples in the window.
    """
    t = series.t
    y = series.values
    if window is not None:
        lo, hi = window
        mask = (t >= lo) & (t <= hi)
        t, y = t[mask], y[mask]
    else:
        window = (float(series.t[0]), float(series.t[-1])) if len(series) else (0.0, 0.0)
    if t.size < 5:
        raise ValueError(f"need at least 5 samples in window, got {t.size}")
    if np.any(y <= 0):
        raise ValueError("nonpositive samples in fit window")
    logy = np.log(y)
    slope, intercept = np.polyfit(t, logy, 1)
    pred = slope * t + intercept
    ss_res = float(np.sum((logy - pred) ** 2))
    ss_tot = float(np.sum((logy - np.mean(logy)) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res < 1e-24 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return DecayFit(
        alpha=float(-slope),
        amplitude=float(np.exp(intercept)),
        r_squared=r2,
        window=(float(window[0]), float(window[1])),
        n_points=int(t.size),
    )


def density_bounds(states):
    """(inf, sup) of the density over the whole sampled trajectory."""
    lo = np.inf
    hi = -np.inf
    for s in states:
        lo = min(lo, sp.grid_min(s.rho))
        hi = max(hi, sp.grid_max(s.rho))
    return lo, hi


CSV_COLUMNS = [
    "t",
    "E",
    "KE",
    "PE",
    "D",
    "norm_grad_Pu_L2",
    "norm_div_u_L2",
    "norm_Gtilde_L2",
    "norm_Ptilde_L2",
    "norm_Gtilde_Linf",
    "rho_min",
    "rho_max",
    "mass",
    "mom_x",
    "mom_y",
    "res_flux_id",
    "res_elliptic",
    "res_helmholtz",
]


def diagnostics_row(state, rho_bar: float | None = None) -> dict:
    """One CSV row of the standard diagnostics for a CNS or INS state."""
    from .ins import kinetic_energy

    r = state.rho.phys()
    ke = 0.5 * kinetic_energy(state)
    if _is_ins(state):
        u = state.u
        mass = float(np.mean(r))
        u1, u2 = u.phys()
        m1, m2 = r * u1, r * u2
        p_tilde = sp.remove_mean(state.p)
        row = {
            "E": ke,
            "KE": ke,
            "PE": 0.0,
            "D": ke,
            "norm_Gtilde_L2": 0.0,
            "norm_Ptilde_L2": sp.lp_norm(p_tilde, 2),
            "norm_Gtilde_Linf": 0.0,
            "res_flux_id": 0.0,
            "res_elliptic": 0.0,
            "res_helmholtz": 0.0,
        }
        grad_pu = sp.grad_norm_l2(u)
    else:
        if rho_bar is None:
            rho_bar = sp.mean(state.rho)
        e = float(np.mean(potential_energy_density(state.rho, rho_bar, state.params).values))
        u = velocity_from_momentum(state)
        m1, m2 = state.momentum.phys()
        mass = float(np.mean(r))
        P_tilde, _, G_tilde, _ = tilde_fields(state)
        res = identity_residuals(state)
        row = {
            "E": ke + e,
            "KE": ke,
            "PE": e,
            "D": ke + e / state.params.nu,
            "norm_Gtilde_L2": sp.lp_norm(G_tilde, 2),
            "norm_Ptilde_L2": sp.lp_norm(P_tilde, 2),
            "norm_Gtilde_Linf": sp.lp_norm(G_tilde, np.inf),
            "res_flux_id": res["flux_identity"],
            "res_elliptic": res["elliptic_pythagoras"],
            "res_helmholtz": res["helmholtz_reconstruction"],
        }
        Pu, _ = sp.leray_project(u)
        grad_pu = sp.grad_norm_l2(Pu)
    row.update(
        {
            "t": state.time,
            "norm_grad_Pu_L2": grad_pu,
            "norm_div_u_L2": sp.lp_norm(sp.div(u), 2),
            "rho_min": float(np.min(r)),
            "rho_max": float(np.max(r)),
            "mass": mass,
            "mom_x": float(np.mean(m1)),
            "mom_y": float(np.mean(m2)),
        }
    )
    return row

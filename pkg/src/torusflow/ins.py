"""Inhomogeneous incompressible Navier-Stokes with bounded density.

Splitting per step (density first, then momentum predictor, then projection):

1. density advected by the conservative MUSCL upwind scheme with the
   divergence-free velocity (range-preserving, exact mass);
2. explicit dealiased momentum transport, then an implicit backward-Euler
   viscous solve (rho*I - dt*mu*lap) u = m by preconditioned conjugate
   gradients with the constant-coefficient spectral inverse as preconditioner;
3. variable-density pressure projection: div((1/rho_eps) grad p) = div(u*)/dt
   solved by warm-started PCG, with rho_eps = max(rho, eps_den) floored only
   inside the projection coefficient.

All momentum updates are mean-free, so int(rho*u) is conserved to rounding
(exactly, except where the density floor is active; such runs are flagged
"regularized").
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .cns import (
    CnsState,
    InitialDataSpec,
    SolverError,
    CflViolation,
    _flux_div,
    _vel_arrays,
    limit_mass_fluxes,
)
from .spectral import ScalarField, TorusGrid, VectorField

__all__ = [
    "InsState",
    "ProjectionError",
    "ins_step",
    "beta1",
    "kinetic_energy",
    "generate_ins_initial_data",
    "ins_cfl_dt",
]

EPS_DEN_FRAC = 1e-4  # density floor fraction of sup(rho), projection only
CG_RTOL = 1e-10


class ProjectionError(SolverError):
    """PCG failed to reach the requested residual."""


@dataclass
class InsState:
    """Density, divergence-free velocity, and mean-zero pressure."""

    time: float
    rho: ScalarField
    u: VectorField
    p: ScalarField
    mu: float
    regularized: bool = False  # density floor was active at some step

    @property
    def grid(self) -> TorusGrid:
        return self.rho.grid

    def copy(self) -> "InsState":
        return InsState(
            self.time, self.rho.copy(), self.u.copy(), self.p.copy(), self.mu, self.regularized
        )


def _pcg(apply_op, b, x0, precond, rtol, max_iter, label):
    """Plain preconditioned CG on flattened arrays; returns (x, iterations)."""
    x = x0.copy()
    r = b - apply_op(x)
    bnorm = math.sqrt(float(np.sum(b * b)))
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    tol = rtol * bnorm
    rnorm = math.sqrt(float(np.sum(r * r)))
    if rnorm <= tol:
        return x, 0
    z = precond(r)
    d = z.copy()
    rz = float(np.sum(r * z))
    for it in range(1, max_iter + 1):
        Ad = apply_op(d)
        dAd = float(np.sum(d * Ad))
        if dAd <= 0.0:
            raise ProjectionError(f"{label}: operator lost positivity (dAd = {dAd:.3e})")
        alpha = rz / dAd
        x += alpha * d
        r -= alpha * Ad
        rnorm = math.sqrt(float(np.sum(r * r)))
        if rnorm <= tol:
            return x, it
        z = precond(r)
        rz_new = float(np.sum(r * z))
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise ProjectionError(
        f"{label}: no convergence in {max_iter} iterations (residual {rnorm:.3e}, target {tol:.3e})"
    )


def ins_cfl_dt(state: InsState, cfl: float = 0.4) -> float:
    """Advective step bound (viscosity and pressure are implicit)."""
    u1, u2 = state.u.phys()
    umax = float(np.max(np.sqrt(u1**2 + u2**2)))
    if umax == 0.0:
        return np.inf
    return cfl * min(state.grid.spacing) / umax


def ins_step(
    state: InsState,
    dt: float,
    *,
    eps_den_frac: float = EPS_DEN_FRAC,
    rtol: float = CG_RTOL,
    max_iter: int = 2000,
    check_cfl: bool = True,
) -> InsState:
    """Advance one step; the returned velocity is divergence-free.

    Raises CflViolation when dt exceeds the advective bound and
    ProjectionError when a PCG solve stalls (the message carries the
    residual).
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if check_cfl:
        bound = ins_cfl_dt(state)
        if dt > bound * (1.0 + 1e-9):
            raise CflViolation(
                f"dt = {dt:.3e} exceeds advective bound {bound:.3e} at t = {state.time:.4f}",
                state=state,
            )
    g = state.grid
    mu = state.mu
    h1, h2 = g.spacing
    rho0 = state.rho.phys()
    u1, u2 = state.u.phys()
    m1 = rho0 * u1
    m2 = rho0 * u2

    # 1. density transport (positivity-limited, conservative)
    Fx, Fy = limit_mass_fluxes(g, rho0, rho0, u1, u2, dt)
    rho1 = rho0 - dt * _flux_div(Fx, Fy, h1, h2)
    rho1 = np.maximum(rho1, 0.0)

    # 2. explicit momentum transport (conservative, dealiased)
    mask = g.dealias_mask
    ikx = 1j * g.KDX
    iky = 1j * g.KDY
    c11 = g.to_spec(m1 * u1) * mask
    c12 = g.to_spec(m1 * u2) * mask
    c21 = g.to_spec(m2 * u1) * mask
    c22 = g.to_spec(m2 * u2) * mask
    m1_adv = m1 - dt * g.to_phys(ikx * c11 + iky * c12)
    m2_adv = m2 - dt * g.to_phys(ikx * c21 + iky * c22)

    # 3. implicit viscous solve (rho1*I - dt*mu*lap) u* = m_adv, per component
    rho_mean = max(float(np.mean(rho1)), 1e-300)

    def visc_op(x):
        return rho1 * x + dt * mu * g.to_phys(g.K2 * g.to_spec(x))

    def visc_pre(r):
        return g.to_phys(g.to_spec(r) / (rho_mean + dt * mu * g.K2))

    us1, _ = _pcg(visc_op, m1_adv, u1, visc_pre, rtol, max_iter, "viscous solve")
    us2, _ = _pcg(visc_op, m2_adv, u2, visc_pre, rtol, max_iter, "viscous solve")
    m1_star = m1_adv + dt * mu * g.to_phys(-g.K2 * g.to_spec(us1))
    m2_star = m2_adv + dt * mu * g.to_phys(-g.K2 * g.to_spec(us2))

    # 4. pressure projection with floored coefficient
    rho_sup = max(float(np.max(rho1)), 1e-300)
    eps_den = eps_den_frac * rho_sup
    regularized = state.regularized or bool(np.min(rho1) < eps_den)
    w = 1.0 / np.maximum(rho1, eps_den)
    w_mean = float(np.mean(w))

    div_us = g.to_phys(ikx * g.to_spec(us1) + iky * g.to_spec(us2))
    b = -div_us / dt  # solve -div(w grad p) = -div(u*)/dt (SPD form)
    b -= np.mean(b)

    def proj_op(p):
        cp = g.to_spec(p)
        g1 = g.to_phys(ikx * cp)
        g2 = g.to_phys(iky * cp)
        return -g.to_phys(ikx * g.to_spec(w * g1) + iky * g.to_spec(w * g2))

    def proj_pre(r):
        cr = g.to_spec(r)
        out = cr * g.INV_K2 / w_mean
        out[0, 0] = 0.0
        return g.to_phys(out)

    p_new, _ = _pcg(proj_op, b, state.p.phys(), proj_pre, rtol, max_iter, "pressure projection")
    p_new -= np.mean(p_new)
    gp1 = g.to_phys(ikx * g.to_spec(p_new))
    gp2 = g.to_phys(iky * g.to_spec(p_new))
    u1_new = us1 - dt * w * gp1
    u2_new = us2 - dt * w * gp2
    # pin the conserved momentum mean (CG residuals would otherwise leak it);
    # a constant velocity shift is divergence-free
    rho1_mean = max(float(np.mean(rho1)), 1e-300)
    u1_new += (np.mean(m1) - np.mean(rho1 * u1_new)) / rho1_mean
    u2_new += (np.mean(m2) - np.mean(rho1 * u2_new)) / rho1_mean

    if not (np.all(np.isfinite(u1_new)) and np.all(np.isfinite(rho1))):
        raise SolverError(f"non-finite state after step at t = {state.time:.4f}", state=state)

    return InsState(
        time=state.time + dt,
        rho=sp.scalar(g, rho1),
        u=sp.vector(g, u1_new, u2_new),
        p=sp.scalar(g, p_new),
        mu=mu,
        regularized=regularized,
    )


def beta1(rho0: ScalarField, mu: float, grid: TorusGrid) -> float:
    """Kinetic-energy decay rate 2*mu / (sup(rho0) * c_T^2 * ||rho0||_2^2).

    The density is normalized to mean 1 first; a zero field is rejected.
    """
    r = rho0.phys()
    m = float(np.mean(r))
    if m <= 0:
        raise ValueError("density field has nonpositive mean")
    rn = r / m
    c = sp.poincare_constant(grid)
    rho_sup = float(np.max(rn))
    l2sq = float(np.mean(rn**2))
    return 2.0 * mu / (rho_sup * c**2 * l2sq)


def kinetic_energy(state) -> float:
    """int rho |u|^2 dbar(x), computed momentum-first so vacuum contributes 0."""
    r = state.rho.phys()
    if isinstance(state, CnsState):
        m1, m2 = state.momentum.phys()
    else:
        u1, u2 = state.u.phys()
        m1, m2 = r * u1, r * u2
    eps = 1e-8 * math.sqrt(max(float(np.max(r)), 1e-300))
    u1, u2 = _vel_arrays(m1, m2, r, eps)
    return float(np.mean(m1 * u1 + m2 * u2))


def generate_ins_initial_data(spec: InitialDataSpec, grid: TorusGrid, mu: float) -> InsState:
    """Divergence-free random initial data with int(rho0*u0) = 0."""
    from .cns import _density_profile

    rng = np.random.default_rng(spec.seed)
    rho = _density_profile(spec, grid, rng)
    if np.min(rho) < 0:
        raise ValueError("initial density dips below zero; lower the amplitude")
    amp = spec.amplitude if spec.velocity_amplitude is None else spec.velocity_amplitude
    v = sp.vector(
        grid,
        sp.random_band_limited(grid, rng, spec.kmax, amplitude=amp).values,
        sp.random_band_limited(grid, rng, spec.kmax, amplitude=amp).values,
    )
    Pv, _ = sp.leray_project(v)
    u1, u2 = Pv.phys()
    rho_mean = max(float(np.mean(rho)), 1e-300)
    u1 = u1 - np.mean(rho * u1) / rho_mean  # constant shift stays divergence-free
    u2 = u2 - np.mean(rho * u2) / rho_mean
    return InsState(
        time=0.0,
        rho=sp.scalar(grid, rho),
        u=sp.vector(grid, u1, u2),
        p=sp.scalar(grid, np.zeros(grid.shape)),
        mu=mu,
    )

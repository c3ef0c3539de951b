"""Closed-form linear theory about the constant state (rho_bar, 0).

On each Fourier mode k the linearized compressible system splits into a
heat-like equation for the solenoidal velocity (decay exponent -mu*|k|^2)
and a damped-oscillator pair for (density perturbation a, velocity
divergence d):

    a' = -rho_bar * d
    d' = (p_prime / rho_bar) * |k|^2 * a - (nu / rho_bar) * |k|^2 * d

whose characteristic polynomial for rho_bar = 1 is

    lambda^2 + nu*|k|^2*lambda + p_prime*|k|^2 = 0.

For p_prime = 1 the roots are -(nu*|k|^2/2)*(1 +/- R_k) with
R_k = sqrt(1 - 4/(nu^2*|k|^2)); the slow branch tends to -1/nu as
nu -> infinity, the fast branch to -nu*|k|^2.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .spectral import TorusGrid

__all__ = [
    "ModeSpectrum",
    "DecayPrediction",
    "acoustic_eigenvalues",
    "parabolic_eigenvalue",
    "predicted_alpha0",
    "evolve_linear_mode",
    "g_mode_rate",
    "mode_table",
    "slowest_linear_rate",
]

# Relative discriminant size below which the double-root formula is used.
CONFLUENT_TOL = 1e-10


@dataclass
class ModeSpectrum:
    """Eigenvalues attached to one integer frequency pair."""

    k: tuple
    k_mag2: float
    lambda_plus: complex
    lambda_minus: complex
    lambda_parabolic: float
    R_k: complex


@dataclass
class DecayPrediction:
    """Shape of the energy decay rate; the absolute constant is unknown."""

    alpha0_shape: float
    undetermined_constant: float | None = None  # None means "unfitted"
    slowest_mode: tuple | None = None


def acoustic_eigenvalues(nu: float, k_mag2: float, p_prime: float = 1.0):
    """Roots of lambda^2 + nu*|k|^2*lambda + p_prime*|k|^2 = 0.

    Returns (lambda_plus, lambda_minus, R_k) where lambda_plus is the fast
    branch (-> -nu*|k|^2 as nu grows) and lambda_minus the slow one
    (-> -p_prime/nu).  Complex values appear when nu^2*|k|^2 < 4*p_prime.
    """
    if nu <= 0:
        raise ValueError(f"nu must be positive, got {nu}")
    if k_mag2 < 1.0:
        raise ValueError(
            f"|k|^2 = {k_mag2} rejected: the mean mode is handled by conservation"
        )
    R = cmath.sqrt(1.0 - 4.0 * p_prime / (nu**2 * k_mag2))
    lam_plus = -(nu * k_mag2 / 2.0) * (1.0 + R)
    if R.imag == 0.0:
        # 1 - R cancels for nu^2|k|^2 >> p'; recover the slow root from the
        # product lam_plus * lam_minus = p'|k|^2 instead.
        lam_plus = complex(lam_plus.real)
        lam_minus = complex(p_prime * k_mag2 / lam_plus.real)
    else:
        lam_minus = -(nu * k_mag2 / 2.0) * (1.0 - R)
    return lam_plus, lam_minus, R


def parabolic_eigenvalue(mu: float, k_mag2: float) -> float:
    """Decay exponent -mu*|k|^2 of the solenoidal velocity on mode k."""
    return -mu * k_mag2


def predicted_alpha0(
    mu: float,
    rho_bar: float,
    kappa: float,
    gamma: float,
    nu: float,
    grid: TorusGrid | None = None,
) -> DecayPrediction:
    """min(mu/rho_bar, rho_bar*P'(rho_bar)/nu), the shape of the energy rate.

    The dimensionless prefactor is non-constructive and left unfitted.  If a
    grid is supplied, the k achieving the slowest linear decay is attached.
    """
    p_prime = kappa * gamma * rho_bar ** (gamma - 1.0)
    shape = min(mu / rho_bar, rho_bar * p_prime / nu)
    slowest = None
    if grid is not None:
        _, slowest = slowest_linear_rate(grid, nu, mu, p_prime, rho_bar)
    return DecayPrediction(alpha0_shape=shape, slowest_mode=slowest)


def _mode_rates(nu, mu, p_prime, k_mag2, rho_bar=1.0):
    """Decay rates (positive numbers) of the three branches on one mode."""
    lam_p, lam_m, _ = acoustic_eigenvalues(nu / rho_bar, k_mag2, p_prime)
    return -lam_p.real, -lam_m.real, mu / rho_bar * k_mag2


def slowest_linear_rate(grid: TorusGrid, nu, mu, p_prime=1.0, rho_bar=1.0):
    """Smallest decay rate over all nonzero grid modes, with its k."""
    best_rate = math.inf
    best_k = None
    n1, n2 = grid.resolution
    L1, L2 = grid.lengths
    for f1 in range(-(n1 // 2) + 1, n1 // 2):
        for f2 in range(-(n2 // 2) + 1, n2 // 2):
            if f1 == 0 and f2 == 0:
                continue
            k2 = (2 * np.pi * f1 / L1) ** 2 + (2 * np.pi * f2 / L2) ** 2
            if k2 < 1.0:
                continue
            _, slow, parab = _mode_rates(nu, mu, p_prime, k2, rho_bar)
            rate = min(slow, parab)
            if rate < best_rate:
                best_rate = rate
                best_k = (f1, f2)
    if best_k is None:
        raise ValueError("grid has no admissible modes with |k|^2 >= 1")
    return best_rate, best_k


def g_mode_rate(nu: float, k_mag2: float, p_prime: float = 1.0) -> float:
    """Fast acoustic branch lambda_plus, the linear proxy for the flux G.

    Tends to -nu*|k|^2 (a parabolic mode with diffusion nu) as nu grows.
    """
    lam_plus, _, _ = acoustic_eigenvalues(nu, k_mag2, p_prime)
    return lam_plus.real


def evolve_linear_mode(a0, d0, nu, k_mag2, p_prime, t):
    """Exact solution of the (a, d) mode pair at time(s) t.

    Uses the eigen-decomposition; the confluent case nu^2*|k|^2 = 4*p_prime
    is dispatched to the limit formula with the t*exp(lambda*t) secular term.
    Accepts scalar or array t and returns real (a(t), d(t)).
    """
    t = np.asarray(t, dtype=float)
    lam_p, lam_m, _ = acoustic_eigenvalues(nu, k_mag2, p_prime)
    disc = nu**2 * k_mag2 - 4.0 * p_prime
    if abs(disc) < CONFLUENT_TOL * nu**2 * k_mag2:
        # double root lambda = -nu*|k|^2/2; solution e^{lt} (I + t(M - l I)) v0
        lam = -nu * k_mag2 / 2.0
        # (M - lam I) v0 = (-(lam*a0 + d0), lam*(lam*a0 + d0)) since lam^2 = p'*|k|^2
        w = lam * a0 + d0
        a = np.exp(lam * t) * (a0 - t * w)
        d = np.exp(lam * t) * (d0 + t * lam * w)
        return np.real(a), np.real(d)
    # eigenvectors (1, -lambda); coefficients from the 2x2 Vandermonde solve
    c_p = (d0 + lam_m * a0) / (lam_m - lam_p)
    c_m = (d0 + lam_p * a0) / (lam_p - lam_m)
    ep = np.exp(lam_p * t)
    em = np.exp(lam_m * t)
    a = c_p * ep + c_m * em
    d = -lam_p * c_p * ep - lam_m * c_m * em
    return np.real(a), np.real(d)


def mode_table(nu: float, mu: float, kmax: int, p_prime: float = 1.0):
    """ModeSpectrum rows for integer frequencies with 1 <= |k|^2 <= 2*kmax^2."""
    rows = []
    for f1 in range(0, kmax + 1):
        for f2 in range(-kmax, kmax + 1):
            if f1 == 0 and f2 <= 0:
                continue  # one representative per conjugate pair
            k2 = float(f1**2 + f2**2)
            lam_p, lam_m, R = acoustic_eigenvalues(nu, k2, p_prime)
            rows.append(
                ModeSpectrum(
                    k=(f1, f2),
                    k_mag2=k2,
                    lambda_plus=lam_p,
                    lambda_minus=lam_m,
                    lambda_parabolic=parabolic_eigenvalue(mu, k2),
                    R_k=R,
                )
            )
    rows.sort(key=lambda r: (r.k_mag2, r.k))
    return rows

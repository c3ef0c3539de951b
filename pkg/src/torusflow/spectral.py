"""Periodic-box geometry and Fourier-space operators.

Everything downstream works on a uniform grid over a 2-D torus.  Integrals
and norms use the normalized measure (total measure 1), so ``mean(1) == 1``
and ``lp_norm(const c, p) == c`` for every p.  Spectral coefficients are
stored with the same normalization: coefficient (0, 0) is the mean.

Conventions:

* arrays are indexed ``values[i, j] ~ f(x_i, y_j)`` ('ij' meshgrid order);
* derivative multipliers are zeroed on the Nyquist lines, so odd derivatives
  have no sign ambiguity and ``div(grad(f)) == laplacian(f)`` exactly;
* the mean (mode 0) of a vector field belongs to the Leray part, since
  constants are divergence-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TorusGrid",
    "ScalarField",
    "VectorField",
    "make_grid",
    "grad",
    "div",
    "curl",
    "laplacian",
    "leray_project",
    "inv_neg_laplacian",
    "poincare_constant",
    "dealias",
    "mean",
    "remove_mean",
    "lp_norm",
    "grid_min",
    "grid_max",
    "grad_norm_l2",
    "random_band_limited",
]

PHYS = "physical"
SPEC = "spectral"


class TorusGrid:
    """Uniform grid on a 2-D torus with precomputed wavenumber tables."""

    def __init__(self, lengths, resolution):
        L1, L2 = float(lengths[0]), float(lengths[1])
        N1, N2 = int(resolution[0]), int(resolution[1])
        if L1 <= 0 or L2 <= 0:
            raise ValueError(f"box lengths must be positive, got {lengths}")
        for N in (N1, N2):
            if N < 8:
                raise ValueError(f"resolution {N} too small (need >= 8)")
            if N % 2 != 0:
                raise ValueError(f"resolution {N} must be even")

        self.lengths = (L1, L2)
        self.resolution = (N1, N2)
        self.shape = (N1, N2)
        self.spacing = (L1 / N1, L2 / N2)
        self.normalized_measure = True

        # Integer mode numbers and physical wavenumbers 2*pi*n/L.
        self.freq_x = np.fft.fftfreq(N1, d=1.0 / N1)  # ..., -N/2, ..., N/2-1
        self.freq_y = np.fft.fftfreq(N2, d=1.0 / N2)
        self.kx = 2.0 * np.pi / L1 * self.freq_x
        self.ky = 2.0 * np.pi / L2 * self.freq_y

        # Derivative multipliers: Nyquist line zeroed.
        kdx = self.kx.copy()
        kdy = self.ky.copy()
        kdx[N1 // 2] = 0.0
        kdy[N2 // 2] = 0.0
        self.KDX = kdx[:, None]
        self.KDY = kdy[None, :]
        self.K2 = self.KDX**2 + self.KDY**2  # zero at mode 0 and Nyquist lines
        safe = np.where(self.K2 > 0.0, self.K2, 1.0)
        self.INV_K2 = np.where(self.K2 > 0.0, 1.0 / safe, 0.0)

        fx = np.abs(self.freq_x)[:, None]
        fy = np.abs(self.freq_y)[None, :]
        self.dealias_mask = (fx <= N1 / 3.0) & (fy <= N2 / 3.0)

        self.x = L1 * np.arange(N1) / N1
        self.y = L2 * np.arange(N2) / N2
        self.X, self.Y = np.meshgrid(self.x, self.y, indexing="ij")

        self._npoints = N1 * N2

    # -- transforms on raw arrays ------------------------------------------

    def to_spec(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fft2(values) / self._npoints

    def to_phys(self, coeffs: np.ndarray) -> np.ndarray:
        return np.real(np.fft.ifft2(coeffs)) * self._npoints

    # ----------------------------------------------------------------------

    @property
    def cell_measure(self) -> float:
        """Weight of one grid point in the normalized measure."""
        return 1.0 / self._npoints

    def __eq__(self, other):
        return (
            isinstance(other, TorusGrid)
            and self.lengths == other.lengths
            and self.resolution == other.resolution
        )

    def __hash__(self):
        return hash((self.lengths, self.resolution))

    def __repr__(self):
        return f"TorusGrid(lengths={self.lengths}, resolution={self.resolution})"


def make_grid(lengths, resolution) -> TorusGrid:
    """Build a torus grid; rejects odd or tiny resolutions."""
    return TorusGrid(lengths, resolution)


@dataclass
class ScalarField:
    """Grid-sampled scalar: real values (physical) or coefficients (spectral)."""

    grid: TorusGrid
    values: np.ndarray
    rep: str = PHYS

    def __post_init__(self):
        if self.rep not in (PHYS, SPEC):
            raise ValueError(f"unknown representation {self.rep!r}")
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} != grid shape {self.grid.shape}"
            )

    def to_physical(self) -> "ScalarField":
        if self.rep == PHYS:
            return self
        return ScalarField(self.grid, self.grid.to_phys(self.values), PHYS)

    def to_spectral(self) -> "ScalarField":
        if self.rep == SPEC:
            return self
        return ScalarField(self.grid, self.grid.to_spec(self.values), SPEC)

    def phys(self) -> np.ndarray:
        """Physical-space values as a raw array."""
        return self.to_physical().values

    def spec(self) -> np.ndarray:
        return self.to_spectral().values

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.rep)


@dataclass
class VectorField:
    """Two scalar components on a shared grid and representation."""

    u1: ScalarField
    u2: ScalarField

    def __post_init__(self):
        if self.u1.grid != self.u2.grid:
            raise ValueError("vector components live on different grids")
        if self.u1.rep != self.u2.rep:
            raise ValueError("vector components in different representations")

    @property
    def grid(self) -> TorusGrid:
        return self.u1.grid

    @property
    def rep(self) -> str:
        return self.u1.rep

    def to_physical(self) -> "VectorField":
        return VectorField(self.u1.to_physical(), self.u2.to_physical())

    def phys(self):
        """Pair of physical-space component arrays."""
        return self.u1.phys(), self.u2.phys()

    def copy(self) -> "VectorField":
        return VectorField(self.u1.copy(), self.u2.copy())


def scalar(grid: TorusGrid, values, rep: str = PHYS) -> ScalarField:
    return ScalarField(grid, np.asarray(values, dtype=complex if rep == SPEC else float), rep)


def vector(grid: TorusGrid, v1, v2, rep: str = PHYS) -> VectorField:
    return VectorField(scalar(grid, v1, rep), scalar(grid, v2, rep))


def constant_field(grid: TorusGrid, value: float) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, float(value)), PHYS)


# -- differential operators (return physical representation) ---------------


def grad(s: ScalarField) -> VectorField:
    """Spectral gradient of a scalar field."""
    g = s.grid
    c = s.spec()
    return vector(g, g.to_phys(1j * g.KDX * c), g.to_phys(1j * g.KDY * c))


def div(v: VectorField) -> ScalarField:
    """Spectral divergence of a vector field."""
    g = v.grid
    c1 = v.u1.spec()
    c2 = v.u2.spec()
    return scalar(g, g.to_phys(1j * g.KDX * c1 + 1j * g.KDY * c2))


def curl(v: VectorField) -> ScalarField:
    """2-D scalar curl d(u2)/dx - d(u1)/dy."""
    g = v.grid
    c1 = v.u1.spec()
    c2 = v.u2.spec()
    return scalar(g, g.to_phys(1j * g.KDX * c2 - 1j * g.KDY * c1))


def laplacian(s: ScalarField) -> ScalarField:
    g = s.grid
    return scalar(g, g.to_phys(-g.K2 * s.spec()))


def vector_laplacian(v: VectorField) -> VectorField:
    g = v.grid
    return vector(g, g.to_phys(-g.K2 * v.u1.spec()), g.to_phys(-g.K2 * v.u2.spec()))


def leray_project(v: VectorField):
    """Split v = Pv + Qv with div(Pv) = 0 and Qv a gradient.

    Mode 0 (the mean) is assigned to the Leray part: constants are
    divergence-free.  Returns (Pv, Qv) in physical representation.
    """
    g = v.grid
    c1 = v.u1.spec()
    c2 = v.u2.spec()
    kdotu = g.KDX * c1 + g.KDY * c2
    q1 = g.KDX * kdotu * g.INV_K2
    q2 = g.KDY * kdotu * g.INV_K2
    Pv = vector(g, g.to_phys(c1 - q1), g.to_phys(c2 - q2))
    Qv = vector(g, g.to_phys(q1), g.to_phys(q2))
    return Pv, Qv


def inv_neg_laplacian(s: ScalarField) -> ScalarField:
    """Solve -lap(f) = s for mean-zero s; result is mean-zero.

    Nonzero-mean input is rejected (the operator is singular there).
    """
    c = s.spec()
    g = s.grid
    m = abs(c[0, 0])
    nrm = np.sqrt(np.sum(np.abs(c) ** 2))
    if m > 1e-10 * max(nrm, 1e-300):
        raise ValueError(f"inv_neg_laplacian needs mean-zero input, |mean| = {m:.3e}")
    out = c * g.INV_K2
    out[0, 0] = 0.0
    return scalar(g, g.to_phys(out))


def poincare_constant(grid: TorusGrid) -> float:
    """Sharp constant in ||z - mean z||_2 <= c ||grad z||_2 on the box.

    Equals 1/sqrt(lambda_1) with lambda_1 = (2*pi/max(L))**2 the smallest
    nonzero eigenvalue of -lap.
    """
    return max(grid.lengths) / (2.0 * np.pi)


# -- pointwise / reduction helpers ------------------------------------------


def dealias(s: ScalarField) -> ScalarField:
    """Zero all modes with |k_i| > N_i/3 (2/3-rule)."""
    g = s.grid
    out = scalar(g, s.spec() * g.dealias_mask, SPEC)
    return out if s.rep == SPEC else out.to_physical()


def mean(s: ScalarField) -> float:
    if s.rep == SPEC:
        return float(np.real(s.values[0, 0]))
    return float(np.mean(s.values))


def remove_mean(s: ScalarField) -> ScalarField:
    if s.rep == SPEC:
        out = s.values.copy()
        out[0, 0] = 0.0
        return ScalarField(s.grid, out, SPEC)
    return ScalarField(s.grid, s.values - np.mean(s.values), PHYS)


def _magnitude(f) -> np.ndarray:
    if isinstance(f, VectorField):
        a1, a2 = f.phys()
        return np.sqrt(a1**2 + a2**2)
    return np.abs(f.phys())


def lp_norm(f, p) -> float:
    """L_p norm in the normalized measure; p = inf gives the grid max.

    Vector fields use the pointwise Euclidean magnitude.  The grid max is a
    lower bound of the true sup of the underlying function.
    """
    a = _magnitude(f)
    if p == np.inf or p == "inf":
        return float(np.max(a))
    p = float(p)
    if p < 1:
        raise ValueError(f"p must be in [1, inf], got {p}")
    return float(np.mean(a**p) ** (1.0 / p))


def grid_min(s: ScalarField) -> float:
    return float(np.min(s.phys()))


def grid_max(s: ScalarField) -> float:
    return float(np.max(s.phys()))


def grad_norm_l2(f) -> float:
    """||grad f||_2; for vector fields the full Jacobian Frobenius norm."""
    if isinstance(f, VectorField):
        g11, g12 = grad(f.u1).phys()
        g21, g22 = grad(f.u2).phys()
        return float(np.sqrt(np.mean(g11**2 + g12**2 + g21**2 + g22**2)))
    d1, d2 = grad(f).phys()
    return float(np.sqrt(np.mean(d1**2 + d2**2)))


def random_band_limited(
    grid: TorusGrid,
    rng: np.random.Generator,
    kmax: int | None = None,
    *,
    mean_value: float = 0.0,
    amplitude: float = 1.0,
) -> ScalarField:
    """Seeded random field supported on modes 1 <= |k_i| <= kmax.

    Normalized to sup-norm ``amplitude`` before the mean is added, so
    values lie in [mean_value - amplitude, mean_value + amplitude].
    """
    N1, N2 = grid.resolution
    if kmax is None:
        kmax = min(N1, N2) // 3
    kmax = min(kmax, N1 // 2 - 1, N2 // 2 - 1)
    c = grid.to_spec(rng.standard_normal(grid.shape))
    band = (np.abs(grid.freq_x)[:, None] <= kmax) & (np.abs(grid.freq_y)[None, :] <= kmax)
    c = np.where(band, c, 0.0)
    c[0, 0] = 0.0
    v = grid.to_phys(c)
    top = np.max(np.abs(v))
    if top > 0:
        v *= amplitude / top
    return scalar(grid, v + mean_value)

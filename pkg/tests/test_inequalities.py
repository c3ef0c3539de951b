import numpy as np
import pytest

from torusflow import inequalities as ineq
from torusflow import spectral as sp


def f1_closed(s, gamma):
    """Independent closed form (s^gamma - 1)/(s - 1), gamma at s = 1."""
    if s == 1.0:
        return gamma
    return (s**gamma - 1.0) / (s - 1.0)


class TestF1:
    @pytest.mark.parametrize("gamma", [1.0, 1.4, 2.0, 2.5, 4.0])
    def test_value_at_zero(self, gamma):
        assert ineq.F1(0.0, gamma) == pytest.approx(1.0, rel=1e-10)

    @pytest.mark.parametrize("gamma", [1.0, 1.4, 2.0, 3.0])
    def test_value_at_one(self, gamma):
        assert ineq.F1(1.0, gamma) == pytest.approx(gamma, rel=1e-12)

    def test_gamma2_closed_form(self):
        # F1(s) = s + 1 for gamma = 2
        assert ineq.F1(3.0, 2.0) == pytest.approx(4.0, rel=1e-12)

    def test_gamma1_is_constant_one(self):
        for s in [0.0, 0.5, 2.0, 9.0]:
            assert ineq.F1(s, 1.0) == pytest.approx(1.0, rel=1e-12)

    @pytest.mark.parametrize("gamma", [1.0, 1.3, 2.0, 3.7])
    @pytest.mark.parametrize("s", [0.0, 0.2, 1.0, 2.4, 7.0])
    def test_against_closed_form(self, gamma, s):
        assert ineq.F1(s, gamma) == pytest.approx(f1_closed(s, gamma), rel=1e-9)

    def test_monotone(self):
        for gamma in [1.0, 1.5, 2.0, 3.0]:
            svals = np.linspace(0.0, 8.0, 1000)
            fvals = [ineq.F1(s, gamma) for s in svals]
            assert all(b >= a - 1e-12 for a, b in zip(fvals, fvals[1:]))

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            ineq.F1(1.0, 0.5)
        with pytest.raises(ValueError):
            ineq.F1(-1.0, 2.0)


class TestSharpInequalities:
    def test_poincare_reduces_to_classic(self, grid32, rng):
        a = sp.constant_field(grid32, 1.0)
        z = sp.remove_mean(sp.random_band_limited(grid32, rng))
        lhs, rhs = ineq.eval_poincare_weighted(a, z)
        c = sp.poincare_constant(grid32)
        assert rhs == pytest.approx(c**2 * sp.grad_norm_l2(z) ** 2, rel=1e-12)
        assert lhs <= rhs * (1 + 1e-12)

    def test_poincare_constant_z(self, grid32):
        a = sp.constant_field(grid32, 1.0)
        z = sp.constant_field(grid32, 3.0)
        lhs, rhs = ineq.eval_poincare_weighted(a, z)
        assert lhs == pytest.approx(9.0)
        assert rhs >= 9.0 * (1 - 1e-12)

    def test_poincare_sharp_on_first_eigenmode(self, grid64):
        a = sp.constant_field(grid64, 1.0)
        z = sp.scalar(grid64, np.cos(grid64.X))
        lhs, rhs = ineq.eval_poincare_weighted(a, z)
        assert lhs / rhs == pytest.approx(1.0, abs=1e-10)

    def test_poincare_corpus_clean(self, grid32):
        rep = ineq.run_inequality_corpus("poincare_weighted", grid32, 300, seed=1)
        assert rep.violations == 0
        assert rep.worst_ratio <= 1.0 + 1e-12

    def test_pti_corpus_clean(self, grid32):
        rep = ineq.run_inequality_corpus("pti", grid32, 300, seed=2)
        assert rep.violations == 0
        assert rep.worst_ratio <= 1.0 + 1e-12

    def test_utl2_corpus_clean(self, grid32):
        rep = ineq.run_inequality_corpus("utl2", grid32, 200, seed=3)
        assert rep.violations == 0

    def test_pti_requires_weighted_mean_zero(self, grid32, rng):
        a = sp.constant_field(grid32, 1.0)
        z = sp.vector(grid32, np.ones(grid32.shape), np.zeros(grid32.shape))
        with pytest.raises(ValueError):
            ineq.eval_pti(a, z)

    def test_weight_must_have_mean_one(self, grid32, rng):
        a = sp.constant_field(grid32, 2.0)
        z = sp.random_band_limited(grid32, rng)
        with pytest.raises(ValueError):
            ineq.eval_poincare_weighted(a, z)


class TestFittedInequalities:
    @pytest.mark.parametrize("inequality_id,p", [
        ("gn_weighted", 4),
        ("gn_weighted", 6),
        ("sobolev_weighted", 4),
        ("interp_l4", None),
        ("gnlr", 3),
        ("gnlr", 6),
    ])
    def test_fitted_constant_finite(self, grid32, inequality_id, p):
        rep = ineq.run_inequality_corpus(inequality_id, grid32, 100, seed=5, p=p)
        assert rep.violations == 0
        assert rep.fitted_constant is not None
        assert np.isfinite(rep.fitted_constant) and rep.fitted_constant > 0

    def test_fitted_constant_stable_under_corpus_growth(self, grid32):
        small = ineq.run_inequality_corpus("interp_l4", grid32, 50, seed=7)
        large = ineq.run_inequality_corpus("interp_l4", grid32, 200, seed=7)
        assert large.fitted_constant >= small.fitted_constant * (1 - 1e-12)
        assert large.fitted_constant < 10.0 * small.fitted_constant


class TestEnergyEquivalence:
    @pytest.mark.parametrize("gamma", [1.0, 1.4, 2.0, 3.0])
    def test_lattice(self, gamma):
        rho_star = 3.0
        lattice = np.arange(0.0, rho_star + 1e-9, 0.01)
        out = ineq.check_energy_equivalence(lattice, 1.0, rho_star, gamma)
        assert out["pressure"].violations == 0
        assert out["energy_lower"].fitted_constant > 0
        assert np.isfinite(out["energy_upper"].fitted_constant)

    def test_with_random_samples(self, rng):
        rho = rng.uniform(0.0, 2.0, 2000)
        out = ineq.check_energy_equivalence(rho, 0.8, 2.0, 1.7)
        assert out["pressure"].violations == 0
        assert out["energy_lower"].violations == 0

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            ineq.check_energy_equivalence([1.0, 5.0], 1.0, 2.0, 2.0)


def test_check_inequality_dispatch(grid32, rng):
    a = sp.constant_field(grid32, 1.0)
    z = sp.remove_mean(sp.random_band_limited(grid32, rng))
    out = ineq.check_inequality("poincare_weighted", a, z)
    assert out["ok"]
    with pytest.raises(ValueError):
        ineq.check_inequality("nope", a, z)

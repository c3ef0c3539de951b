import dataclasses
import json
import os

import numpy as np
import pytest

from torusflow import harness as hz
from torusflow import checkpoint as ck
from torusflow import cns, ins, spectral as sp
from torusflow.cli import main as cli_main


class TestConfig:
    def test_preset_names_cover_spec(self):
        for name in (
            "rest",
            "acoustic-mode",
            "smooth-perturbation",
            "vacuum-disk",
            "two-level-density",
            "ins-smooth",
            "ins-vacuum-regularized",
        ):
            assert name in hz.PRESET_NAMES
            hz.preset(name).validate()

    def test_unknown_preset(self):
        with pytest.raises(hz.ConfigError):
            hz.preset("nope")

    def test_rejects_bad_system(self):
        with pytest.raises(hz.ConfigError):
            hz.RunConfig(system="XXX")

    def test_rejects_bad_dt(self):
        with pytest.raises(hz.ConfigError):
            hz.RunConfig(system="CNS", dt=-1.0)

    def test_toml_round_trip(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text(
            """
[run]
system = "CNS"
t_end = 0.5
dt = 0.01
diagnostic_interval = 0.1
seed = 3

[grid]
lengths = [6.283185307179586, 6.283185307179586]
resolution = [16, 16]

[params]
mu = 1.0
lam = 2.0
kappa = 0.5
gamma = 1.4

[initial]
kind = "smooth_perturbation"
amplitude = 0.05
"""
        )
        cfg = hz.load_config(path)
        assert cfg.system == "CNS"
        assert cfg.resolution == (16, 16)
        assert cfg.nu == pytest.approx(4.0)
        assert cfg.initial.amplitude == 0.05

    def test_toml_errors_are_config_errors(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[run]\nsystem = 'CNS'\nbogus_key = 1\n")
        with pytest.raises(hz.ConfigError):
            hz.load_config(path)


def small_cns_config(**kw):
    base = dict(
        system="CNS",
        resolution=(16, 16),
        t_end=0.3,
        diagnostic_interval=0.05,
        mu=1.0,
        lam=2.0,
        kappa=1.0,
        gamma=1.0,
        initial=cns.InitialDataSpec(kind="smooth_perturbation", amplitude=0.05, seed=5, kmax=2),
        label="smoke",
    )
    base.update(kw)
    return hz.RunConfig(**base)


class TestRunScenario:
    def test_writes_csv_and_manifest(self, tmp_path):
        cfg = small_cns_config()
        manifest = hz.run_scenario(cfg, tmp_path)
        assert os.path.exists(manifest.csv_path)
        assert os.path.exists(tmp_path / "manifest.json")
        data = json.loads((tmp_path / "manifest.json").read_text())
        assert data["system"] == "CNS"
        assert data["flags"]["mass_ok"]
        assert data["flags"]["momentum_ok"]
        assert data["flags"]["rho_nonnegative"]
        assert data["predicted"]["alpha0_shape"] > 0

    def test_rest_state_fits_report_zero(self, tmp_path):
        cfg = dataclasses.replace(
            hz.preset("rest"), resolution=(16, 16), t_end=0.2, diagnostic_interval=0.02
        )
        manifest = hz.run_scenario(cfg, tmp_path)
        for col in ("KE", "norm_Ptilde_L2", "norm_Gtilde_L2"):
            fit = manifest.fits[col]
            assert fit is not None and fit["alpha"] == 0.0 and fit["amplitude"] == 0.0
        rows = hz._read_csv(manifest.csv_path)
        assert np.max(rows["res_flux_id"]) < 1e-12
        assert np.max(rows["res_elliptic"]) < 1e-12
        assert np.max(rows["res_helmholtz"]) < 1e-12

    def test_deterministic_reruns_byte_identical(self, tmp_path):
        cfg = small_cns_config()
        m1 = hz.run_scenario(cfg, tmp_path / "a")
        m2 = hz.run_scenario(cfg, tmp_path / "b")
        b1 = open(m1.csv_path, "rb").read()
        b2 = open(m2.csv_path, "rb").read()
        assert b1 == b2

    def test_ins_manifest_has_beta1_and_bound_flag(self, tmp_path):
        cfg = hz.RunConfig(
            system="INS",
            resolution=(16, 16),
            t_end=0.2,
            dt=2e-3,
            diagnostic_interval=0.05,
            mu=1.0,
            initial=cns.InitialDataSpec(
                kind="smooth_perturbation", amplitude=0.4, velocity_amplitude=0.4, seed=6, kmax=2
            ),
            label="ins-smoke",
        )
        manifest = hz.run_scenario(cfg, tmp_path)
        assert manifest.predicted["beta1"] > 0
        assert manifest.flags["ke_bound_ok"]
        assert manifest.flags["div_free_ok"]

    def test_solver_failure_dumps_state(self, tmp_path):
        cfg = small_cns_config(dt=5.0)  # violates the CFL bound immediately
        with pytest.raises(cns.SolverError):
            hz.run_scenario(cfg, tmp_path)
        assert os.path.exists(tmp_path / "failure_state.ckpt")


class TestSweep:
    def test_rejects_short_nu_list(self, tmp_path):
        with pytest.raises(hz.ConfigError):
            hz.sweep(hz.preset("sweep-template"), [10.0], tmp_path)

    def test_mini_sweep_slope(self, tmp_path):
        template = dataclasses.replace(
            hz.preset("sweep-template"),
            resolution=(16, 16),
            t_end=20.0,
            diagnostic_interval=0.2,
        )
        report = hz.sweep(template, [5.0, 10.0, 20.0], tmp_path, workers=1)
        assert report["acoustic_rate_loglog_slope"] == pytest.approx(-1.0, abs=0.2)
        assert os.path.exists(tmp_path / "sweep_report.json")


class TestPresetSmoke:
    def test_ins_vacuum_regularized_flag(self, tmp_path):
        cfg = dataclasses.replace(
            hz.preset("ins-vacuum-regularized"),
            resolution=(32, 32),
            t_end=0.02,
            dt=2e-3,
            diagnostic_interval=5e-3,
        )
        manifest = hz.run_scenario(cfg, tmp_path)
        assert manifest.regularized
        assert manifest.flags["rho_nonnegative"]

    def test_acoustic_preset_runs(self, tmp_path):
        cfg = dataclasses.replace(hz.preset("acoustic-mode"), t_end=0.3)
        manifest = hz.run_scenario(cfg, tmp_path)
        assert manifest.flags["mass_ok"]


class TestSweepParallel:
    def test_workers_do_not_change_outputs(self, tmp_path):
        template = dataclasses.replace(
            hz.preset("sweep-template"),
            resolution=(16, 16),
            t_end=6.0,
            diagnostic_interval=0.2,
        )
        r1 = hz.sweep(template, [5.0, 8.0, 12.0], tmp_path / "serial", workers=1)
        r2 = hz.sweep(template, [5.0, 8.0, 12.0], tmp_path / "pool", workers=2)
        for row1, row2 in zip(r1["per_nu"], r2["per_nu"]):
            b1 = open(row1["csv_path"], "rb").read()
            b2 = open(row2["csv_path"], "rb").read()
            assert b1 == b2


class TestCheckSuite:
    def test_empty_corpus(self):
        report = hz.check_suite(0, seed=1)
        assert report["ok"] and report["reports"] == []

    def test_small_corpus_clean(self):
        report = hz.check_suite(50, seed=1)
        assert report["ok"]
        assert report["identity_max_residual"] < 1e-10
        assert report["poincare_eigenmode_ratio"] == pytest.approx(1.0, abs=1e-8)


class TestCheckpoint:
    def test_cns_round_trip(self, tmp_path, grid32, rng):
        rho = sp.random_band_limited(grid32, rng, 4, mean_value=1.0, amplitude=0.5)
        st = cns.CnsState(
            time=1.25,
            rho=rho,
            momentum=sp.vector(grid32, rho.values * 0.3, rho.values * -0.1),
            params=cns.CnsParams(mu=1.0, lam=3.0, kappa=2.0, gamma=1.4),
            grid=grid32,
        )
        path = tmp_path / "state.ckpt"
        ck.save_checkpoint(st, path)
        back = ck.load_checkpoint(path)
        assert back.time == st.time
        assert back.params == st.params
        assert np.array_equal(back.rho.values, st.rho.values)
        assert np.array_equal(back.momentum.u1.values, st.momentum.u1.values)

    def test_ins_round_trip(self, tmp_path, grid32):
        st = ins.InsState(
            time=0.5,
            rho=sp.constant_field(grid32, 1.0),
            u=sp.vector(grid32, np.cos(grid32.Y), np.zeros(grid32.shape)),
            p=sp.scalar(grid32, np.zeros(grid32.shape)),
            mu=2.0,
            regularized=True,
        )
        path = tmp_path / "state.ckpt"
        ck.save_checkpoint(st, path)
        back = ck.load_checkpoint(path)
        assert back.mu == 2.0 and back.regularized
        assert np.array_equal(back.u.u1.values, st.u.u1.values)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            ck.load_checkpoint(path)


class TestCli:
    def test_run_preset(self, tmp_path, capsys):
        code = cli_main(
            ["run", "--preset", "rest", "--out", str(tmp_path)]
        )
        assert code == 0
        assert "PASS" in capsys.readouterr().out

    def test_linear_table(self, tmp_path, capsys):
        out = tmp_path / "modes.csv"
        code = cli_main(["linear", "--nu", "10", "--kmax", "2", "--out", str(out)])
        assert code == 0
        text = out.read_text().splitlines()
        assert text[0].startswith("k1,k2")
        assert len(text) > 3
        assert "slowest linear rate" in capsys.readouterr().out

    def test_check_small(self, capsys):
        code = cli_main(["check", "--corpus-size", "20", "--seed", "1"])
        assert code == 0
        assert "PASS" in capsys.readouterr().out

    def test_fit_command(self, tmp_path, capsys):
        cfg = small_cns_config()
        manifest = hz.run_scenario(cfg, tmp_path)
        code = cli_main(["fit", "--csv", manifest.csv_path, "--column", "KE"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert "alpha" in out

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[run]\nsystem = 'NOPE'\n")
        code = cli_main(["run", "--config", str(bad), "--out", str(tmp_path)])
        assert code == 3

    def test_solver_error_exit_code(self, tmp_path):
        cfgfile = tmp_path / "boom.toml"
        cfgfile.write_text(
            """
[run]
system = "CNS"
t_end = 0.5
dt = 5.0
diagnostic_interval = 0.1
[grid]
resolution = [16, 16]
[initial]
kind = "smooth_perturbation"
amplitude = 0.1
"""
        )
        code = cli_main(["run", "--config", str(cfgfile), "--out", str(tmp_path)])
        assert code == 2

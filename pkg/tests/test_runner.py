import numpy as np
import pytest

from hyperising.cli import main as cli_main
from hyperising.model import ModelParams
from hyperising.runner import (
    DEFAULTS,
    ExperimentConfig,
    dump_couplings,
    format_number,
    load_config,
    read_csv,
    reproduce,
    run,
)


def small_otoc_config(tmp_path, **kw):
    base = dict(
        experiment="otoc",
        model=ModelParams(n=4, j=1, h=1, m=0.05, l_max=1),
        backend="dense",
        beta=0.5,
        t_max=1.0,
        dt_grid=0.25,
        output_dir=str(tmp_path / "run"),
    )
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    def test_rejects_unknown_experiment(self):
        with pytest.raises(ValueError):
            ExperimentConfig(experiment="nope", model=ModelParams(n=4))

    def test_rejects_unknown_sweep_key(self):
        with pytest.raises(ValueError):
            ExperimentConfig(
                experiment="otoc", model=ModelParams(n=4), sweep={"j": [1.0]}
            )

    def test_load_config_roundtrip(self, tmp_path):
        cfg_text = "\n".join(
            [
                "[experiment]",
                "kind = otoc",
                "backend = dense",
                "beta = 1.5",
                "v_site = 1",
                "[model]",
                "n = 5",
                "l_max = 2.0",
                "[grid]",
                "t_max = 2.0",
                "dt = 0.5",
                "[sweep]",
                "l_max = 1.0,2.0",
                "[output]",
                "dir = outdir",
            ]
        )
        path = tmp_path / "config.ini"
        path.write_text(cfg_text)
        config = load_config(str(path))
        assert config.experiment == "otoc"
        assert config.model.n == 5
        assert config.beta == 1.5
        assert config.v_site == 1
        assert config.sweep == {"l_max": [1.0, 2.0]}
        assert config.output_dir == "outdir"

    def test_missing_config_file(self):
        with pytest.raises(FileNotFoundError):
            load_config("/nonexistent/config.ini")


class TestRun:
    def test_empty_sweep_writes_manifest_only(self, tmp_path):
        config = small_otoc_config(tmp_path, sweep={"beta": []})
        artifacts = run(config)
        root = tmp_path / "run"
        assert (root / "manifest.txt").exists()
        assert "empty-sweep" in (root / "manifest.txt").read_text()
        assert not (root / "otoc.csv").exists()
        assert artifacts["manifest"].endswith("manifest.txt")

    def test_single_point_artifacts(self, tmp_path):
        config = small_otoc_config(tmp_path)
        run(config)
        root = tmp_path / "run"
        header, data = read_csv(root / "otoc.csv")
        assert header == ["t", "ReF", "ImF", "O", "C"]
        assert data.shape == (5, 5)
        text = (root / "manifest.txt").read_text()
        assert "status = ok" in text
        assert "[model]" in text

    def test_determinism(self, tmp_path):
        config_a = small_otoc_config(tmp_path, output_dir=str(tmp_path / "a"))
        config_b = small_otoc_config(tmp_path, output_dir=str(tmp_path / "b"))
        run(config_a)
        run(config_b)
        payload_a = (tmp_path / "a" / "otoc.csv").read_bytes()
        payload_b = (tmp_path / "b" / "otoc.csv").read_bytes()
        assert payload_a == payload_b

    def test_sweep_points(self, tmp_path):
        config = small_otoc_config(tmp_path, sweep={"l_max": [0.5, 1.5]})
        artifacts = run(config)
        assert len(artifacts["points"]) == 2
        for sub in artifacts["points"]:
            header, data = read_csv(sub + "/otoc.csv")
            assert data.shape[0] == 5
        manifest = (tmp_path / "run" / "manifest.txt").read_text()
        assert "point_000_l_max0.5.points = 5" in manifest

    def test_lightcone_artifacts(self, tmp_path):
        config = ExperimentConfig(
            experiment="lightcone",
            model=ModelParams(n=5, j=1, h=1, m=0.05, l_max=1),
            beta=0.0,
            t_max=3.0,
            dt_grid=0.25,
            output_dir=str(tmp_path / "cone"),
        )
        run(config)
        root = tmp_path / "cone"
        header, data = read_csv(root / "lightcone.csv")
        assert header == ["site", "t_s"]
        assert data.shape == (4, 2)
        header2, omat = read_csv(root / "omatrix.csv")
        assert omat.shape == (4, 14)
        assert (root / "lightcone_fit.txt").exists()

    def test_krylov_artifacts(self, tmp_path):
        config = ExperimentConfig(
            experiment="krylov-state",
            model=ModelParams(n=4, j=1, h=1, m=0.05, l_max=1),
            horizon=2.0,
            store_dt=0.2,
            output_dir=str(tmp_path / "kry"),
        )
        run(config)
        root = tmp_path / "kry"
        header, lan = read_csv(root / "lanczos.csv")
        assert header == ["n", "a_n", "b_n"]
        assert np.isnan(lan[0, 2])  # b_0 undefined
        header, obs = read_csv(root / "krylov_observables.csv")
        assert header == ["t", "C_K", "S_K"]
        assert "max_norm_drift" in (root / "manifest.txt").read_text()


class TestReproduce:
    def test_unknown_figure(self):
        with pytest.raises(ValueError, match="unknown recipe"):
            reproduce("fig99")

    def test_operator_recipe_scaled_down(self, tmp_path):
        artifacts = reproduce(
            "fig5", output_dir=str(tmp_path / "f5"), n=4, horizon=3.0
        )
        header, obs = read_csv(tmp_path / "f5" / "krylov_observables.csv")
        assert obs.shape[1] == 3
        manifest = (tmp_path / "f5" / "manifest.txt").read_text()
        assert "experiment = krylov-operator" in manifest
        assert "n = 4" in manifest

    def test_state_recipe_config_shape(self, tmp_path):
        # recipe must sweep the three curvature values at n=11
        from hyperising.runner import RECIPES

        config = RECIPES["fig4"]()
        assert config.experiment == "krylov-state"
        assert config.model.n == 11
        assert config.sweep == {"l_max": [1.0, 2.0, 4.0]}

    def test_lightcone_recipes_cover_both_regimes(self):
        from hyperising.runner import RECIPES

        assert RECIPES["fig6"]().model.l_max == 0.05
        assert RECIPES["fig7"]().model.l_max == 3.0
        assert RECIPES["fig6"]().beta == 0.25
        cone = RECIPES["fig2-desk"]()
        assert cone.sweep["l_max"] == [1.0, 2.0, 3.0, 4.0, 5.0]
        assert cone.beta == 0.0
        lyap = RECIPES["fig3"]()
        assert lyap.model.n == 13
        assert max(lyap.sweep["beta"]) == 6.0


class TestFormatting:
    def test_format_number_significant_digits(self):
        assert format_number(np.pi) == f"{np.pi:.18g}"
        assert format_number(3) == "3"

    def test_dump_couplings_digits(self, tmp_path):
        text = dump_couplings(ModelParams(n=3, l_max=1.0))
        lines = text.strip().splitlines()
        assert lines[0] == "i,rho,eta,bond_coeff"
        assert lines[1].split(",")[1] == "-1"
        eta0 = float(lines[1].split(",")[2])
        assert eta0 == pytest.approx(np.cosh(1.0), abs=1e-14)
        assert lines[3].split(",")[3] == ""  # no bond after the last site


class TestCli:
    def test_model_dump(self, capsys):
        assert cli_main(["model", "--n", "4", "--lmax", "1", "--dump-couplings"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("i,rho,eta,bond_coeff")

    def test_otoc_and_fits_pipeline(self, tmp_path, capsys):
        out_dir = str(tmp_path / "cli_otoc")
        rc = cli_main(
            [
                "otoc", "--n", "4", "--lmax", "1", "--beta", "0",
                "--t-max", "6", "--dt-grid", "0.1", "--out-dir", out_dir,
            ]
        )
        assert rc == 0
        fit_out = tmp_path / "fit.txt"
        rc = cli_main(
            [
                "fit-lyapunov", "--input", out_dir + "/otoc.csv",
                "--beta", "1.0", "--out", str(fit_out),
            ]
        )
        assert rc == 0
        text = fit_out.read_text()
        assert "lambda =" in text and "mss_ratio =" in text

    def test_lightcone_and_fit(self, tmp_path):
        out_dir = str(tmp_path / "cli_cone")
        rc = cli_main(
            [
                "lightcone", "--n", "5", "--lmax", "1", "--beta", "0",
                "--t-max", "3", "--dt-grid", "0.25", "--out-dir", out_dir,
            ]
        )
        assert rc == 0
        fit_out = tmp_path / "cone_fit.txt"
        rc = cli_main(
            [
                "fit-lightcone", "--input", out_dir + "/lightcone.csv",
                "--center", "2", "--out", str(fit_out),
            ]
        )
        assert rc == 0
        assert "preferred =" in fit_out.read_text()

    def test_krylov_and_segmentation(self, tmp_path):
        out_dir = str(tmp_path / "cli_kry")
        rc = cli_main(
            [
                "krylov-operator", "--n", "3", "--lmax", "1",
                "--horizon", "12", "--store-dt", "0.1", "--out-dir", out_dir,
            ]
        )
        assert rc == 0
        seg_out = tmp_path / "seg.txt"
        rc = cli_main(
            ["segment-ck", "--input", out_dir + "/krylov_observables.csv", "--out", str(seg_out)]
        )
        assert rc == 0
        assert "exp_window =" in seg_out.read_text()
        ent_out = tmp_path / "ent.txt"
        rc = cli_main(
            ["fit-entropy", "--input", out_dir + "/krylov_observables.csv", "--out", str(ent_out)]
        )
        assert rc == 0
        assert "r_squared =" in ent_out.read_text()

    def test_run_from_config(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text(
            "\n".join(
                [
                    "[experiment]",
                    "kind = otoc",
                    "[model]",
                    "n = 4",
                    "l_max = 1.0",
                    "[grid]",
                    "t_max = 0.5",
                    "dt = 0.25",
                ]
            )
        )
        rc = cli_main(
            ["run", "--config", str(cfg), "--out-dir", str(tmp_path / "from_cfg")]
        )
        assert rc == 0
        assert (tmp_path / "from_cfg" / "otoc.csv").exists()

    def test_mps_backend_cli(self, tmp_path):
        out_dir = str(tmp_path / "cli_mps")
        rc = cli_main(
            [
                "otoc", "--backend", "mps", "--n", "4", "--lmax", "1",
                "--beta", "0.5", "--t-max", "0.5", "--dt-grid", "0.25",
                "--chi-max", "32", "--out-dir", out_dir,
            ]
        )
        assert rc == 0
        header, data = read_csv(out_dir + "/otoc.csv")
        assert header[-1] == "discarded_weight"

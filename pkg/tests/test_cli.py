import json

import pytest

from faradaykit import cli


def run(args, capsys):
    code = cli.main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestTuneout:
    def test_finds_interline_root(self, tmp_path, capsys):
        code, out, _ = run(["--out-dir", str(tmp_path), "tuneout",
                            "--species", "rb87", "--from-nm", "781",
                            "--to-nm", "794"], capsys)
        assert code == 0
        assert "790.0" in out
        csv = (tmp_path / "tuneout.csv").read_text()
        assert csv.startswith("# provenance:")
        assert "lambda_nm,scalar_sum,xi_f,xi_s,ratio" in csv

    def test_empty_window(self, tmp_path, capsys):
        code, out, _ = run(["--out-dir", str(tmp_path), "tuneout",
                            "--from-nm", "810", "--to-nm", "815"], capsys)
        assert code == 0
        assert "no magic-zero" in out


class TestErrors:
    def test_missing_recipe_exit_3(self, tmp_path, capsys):
        code, _, err = run(["--out-dir", str(tmp_path), "roundtrip",
                            "--recipe", "/nonexistent/r.json"], capsys)
        assert code == 3
        payload = json.loads(err)
        assert payload["error"]["type"] == "io"
        assert "/nonexistent/r.json" in payload["error"]["message"]

    def test_invalid_recipe_exit_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        code, _, err = run(["--out-dir", str(tmp_path), "simulate",
                            "--recipe", str(bad)], capsys)
        assert code == 1
        assert json.loads(err)["error"]["type"] == "validation"

    def test_wrong_schema_version(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"schema_version": 99}))
        code, _, err = run(["--out-dir", str(tmp_path), "simulate",
                            "--recipe", str(bad)], capsys)
        assert code == 1


class TestAperture:
    def test_both_kinds(self, tmp_path, capsys):
        for kind, expected in (("gaussian", 0.79), ("thomas-fermi", 0.73)):
            code, out, _ = run(["--out-dir", str(tmp_path), "aperture",
                                "--kind", kind], capsys)
            assert code == 0
            payload = json.loads(out)
            assert payload["a_over_R"] == pytest.approx(expected, abs=0.01)
        saved = json.loads((tmp_path / "aperture.json").read_text())
        assert "provenance" in saved


class TestLifetime:
    def test_json_output(self, tmp_path, capsys):
        code, out, _ = run(["--out-dir", str(tmp_path), "lifetime",
                            "--power-mw", "9.7", "--tau-one-body", "35.0"],
                           capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["gamma_per_watt"] == pytest.approx(98.0, rel=0.02)
        assert payload["tau_combined"] < payload["tau_s"]


class TestRecipes:
    def test_spinor_trajectory(self, tmp_path, capsys):
        code, out, _ = run(["--out-dir", str(tmp_path), "spinor",
                            "--recipe", "fig4_dressing"], capsys)
        assert code == 0
        lines = (tmp_path / "spinor.csv").read_text().splitlines()
        assert lines[1] == "t,rho0,Theta,Fz_envelope"

    def test_coeffs_grid(self, tmp_path, capsys):
        code, _, _ = run(["--out-dir", str(tmp_path), "coeffs",
                          "--from-nm", "786", "--to-nm", "793",
                          "--points", "20"], capsys)
        assert code == 0
        lines = (tmp_path / "coeffs.csv").read_text().splitlines()
        assert len(lines) == 22  # provenance + header + 20 rows

    def test_snr_scan(self, tmp_path, capsys):
        code, _, _ = run(["--out-dir", str(tmp_path), "snr-scan",
                          "--recipe", "fig2_regimes"], capsys)
        assert code == 0
        lines = (tmp_path / "snr_scan.csv").read_text().splitlines()
        assert lines[1] == "detuning_GHz,lambda_nm,ratio,snr_db"
        assert len(lines) > 100


@pytest.fixture(scope="module")
def quick_recipe():
    recipe, _ = cli._load_recipe("fig6_magnetometry")
    recipe = json.loads(json.dumps(recipe))  # deep copy
    recipe["acquisition"]["duration_s"] = 0.3
    return recipe


class TestSimulateAnalyze:
    def test_file_pipeline(self, tmp_path, capsys, quick_recipe):
        rpath = tmp_path / "quick.json"
        rpath.write_text(json.dumps(quick_recipe))
        code, out, _ = run(["--out-dir", str(tmp_path), "simulate",
                            "--recipe", str(rpath)], capsys)
        assert code == 0
        assert (tmp_path / "fig6_magnetometry.meta.json").exists()
        assert (tmp_path / "fig6_magnetometry.f64le").exists()

        code, out, _ = run(["--out-dir", str(tmp_path), "analyze",
                            "--signal", str(tmp_path / "fig6_magnetometry"),
                            "--line-hz", "50", "--harmonics", "3"], capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["amplitudes_uG"][0] == pytest.approx(162.0, abs=2.0)
        track = (tmp_path / "track.csv").read_text().splitlines()
        assert track[1] == "t,f_hz,f_err_hz,amp,snr_db"
        harmonics = json.loads((tmp_path / "harmonics.json").read_text())
        assert "provenance" in harmonics

    def test_roundtrip_passes_and_deterministic(self, tmp_path, capsys,
                                                quick_recipe):
        rpath = tmp_path / "quick.json"
        rpath.write_text(json.dumps(quick_recipe))
        outs = []
        for d in ("a", "b"):
            code, out, _ = run(["--out-dir", str(tmp_path / d), "--seed", "5",
                                "roundtrip", "--recipe", str(rpath)], capsys)
            assert code == 0
            assert "PASS mean_field_uG" in out
            outs.append((tmp_path / d / "roundtrip_report.json").read_bytes()
                        + (tmp_path / d / "track.csv").read_bytes()
                        + (tmp_path / d / "harmonics.json").read_bytes())
        assert outs[0] == outs[1]

    def test_seed_changes_output(self, tmp_path, capsys, quick_recipe):
        rpath = tmp_path / "quick.json"
        rpath.write_text(json.dumps(quick_recipe))
        tracks = []
        for seed, d in (("5", "a2"), ("6", "b2")):
            code, _, _ = run(["--out-dir", str(tmp_path / d), "--seed", seed,
                              "roundtrip", "--recipe", str(rpath)], capsys)
            tracks.append((tmp_path / d / "track.csv").read_bytes())
        assert tracks[0] != tracks[1]

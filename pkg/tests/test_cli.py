import csv
import json

import pytest

from patchwave.cli import main


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSpectrumCommand:
    def test_fig6_census(self, tmp_path):
        out = tmp_path / "spc"
        code = main(
            [
                "spectrum", "--scheme", "spectral", "--N", "10", "--n", "6",
                "--r", "0.1", "--cD", "1e-6", "--cV", "1e-4",
                "--route", "block", "--out", str(out),
            ]
        )
        assert code == 0
        rows = _rows(out / "spectrum.csv")
        assert sum(r["class"] == "macro" for r in rows) == 75
        assert sum(r["class"] == "micro" for r in rows) == 1400
        summary = json.loads((out / "summary.json").read_text())
        assert summary["micro_count"] == 1400
        assert (out / "manifest.json").exists()

    def test_zero_dissipation_neutral(self, tmp_path):
        out = tmp_path / "spc0"
        code = main(
            [
                "spectrum", "--scheme", "spectral", "--N", "6", "--n", "6",
                "--r", "0.1", "--route", "block", "--out", str(out),
            ]
        )
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["max_abs_re"] <= 1e-10

    def test_nyquist_parity_exit_code(self, tmp_path, capsys):
        code = main(
            ["spectrum", "--scheme", "spectral", "--N", "8", "--n", "6",
             "--r", "0.1", "--out", str(tmp_path / "x")]
        )
        assert code == 2
        assert "Nyquist parity" in capsys.readouterr().err


class TestSweepCommands:
    def test_stability_sweep(self, tmp_path):
        out = tmp_path / "stab"
        code = main(
            [
                "stability", "--schemes", "spectral,square-p2",
                "--N-list", "6", "--n-list", "6", "--r-list", "0.1",
                "--cD-list", "0,1e-3", "--cV-list", "1e-2", "--out", str(out),
            ]
        )
        assert code == 0
        rows = _rows(out / "max_re.csv")
        assert len(rows) == 4
        assert all(float(r["max_re"]) <= 1e-9 for r in rows)

    def test_consistency_sweep_skips_invalid(self, tmp_path):
        out = tmp_path / "cons"
        code = main(
            [
                "consistency", "--schemes", "square-p6",
                "--N-list", "6,10,14,18", "--n-list", "6", "--r-list", "0.1",
                "--cD-list", "1e-3", "--cV-list", "1e-2", "--out", str(out),
            ]
        )
        assert code == 0  # N=6 is skipped as invalid, not failed
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["skipped"]) == 1
        rows = _rows(out / "errors.csv")
        assert len(rows) == 3
        fits = _rows(out / "fits.csv")
        slope = next(
            float(r["exponent"]) for r in fits
            if r["k_x"] == "1" and r["k_y"] == "0"
        )
        assert slope == pytest.approx(6.0, abs=0.3)

    def test_roundoff_sweep(self, tmp_path):
        out = tmp_path / "ro"
        code = main(
            [
                "roundoff", "--schemes", "square-p2", "--N-list", "6",
                "--n-list", "6", "--r-list", "0.1", "--cD-list", "1e-3",
                "--cV-list", "1e-2", "--out", str(out),
            ]
        )
        assert code == 0
        rows = _rows(out / "errors.csv")
        assert float(rows[0]["eps_macro"]) <= 1e-10
        peaks = _rows(out / "peaks.csv")
        assert len(peaks) == 1


class TestSimulateCommand:
    def test_deterministic_reruns(self, tmp_path):
        args = [
            "simulate", "--scheme", "square-p2", "--N", "6", "--n", "6",
            "--r", "0.1", "--cD", "1e-6", "--cV", "1e-4",
            "--t-end", "0.05", "--snap-every", "2",
        ]
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        for f in sorted(out1.glob("snapshot_*.csv")):
            assert f.read_bytes() == (out2 / f.name).read_bytes()
        run = json.loads((out1 / "run.json").read_text())
        assert "total_h_drift_per_time" in run

    def test_manifest_reproduces_config(self, tmp_path):
        out = tmp_path / "sim"
        assert (
            main(
                ["simulate", "--scheme", "square-p2", "--N", "6", "--n", "6",
                 "--r", "0.1", "--t-end", "0.02", "--out", str(out)]
            )
            == 0
        )
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["arguments"]["N"] == 6
        assert manifest["command"] == "simulate"


class TestConfigFile:
    def test_config_defaults_and_flag_override(self, tmp_path, monkeypatch):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"N": 6, "n": 6, "r": 0.1, "scheme": "square-p2"}))
        out = tmp_path / "gi"
        monkeypatch.setattr(
            "sys.argv",
            ["patchwave", "grid-info", "--config", str(cfg), "--out", str(out)],
        )
        code = main(["grid-info", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        doc = json.loads((out / "grid.json").read_text())
        assert doc["N"] == 6


class TestGridInfo:
    def test_writes_stencil_manifest(self, tmp_path):
        out = tmp_path / "gi"
        code = main(
            ["grid-info", "--N", "10", "--n", "6", "--r", "0.1",
             "--scheme", "square-p2", "--out", str(out)]
        )
        assert code == 0
        man = json.loads((out / "stencils.json").read_text())
        assert man["stencils"]["v_edge_of_v_patch"]["offsets_x"] == [-2, 0, 2]
        micro = json.loads((out / "micro_grid.json").read_text())
        assert micro["state_count"] == 27

import csv
from pathlib import Path

import numpy as np
import pytest
import yaml

from bbsinglet.cli import main
from bbsinglet.config import load_config, read_config_text
from bbsinglet.engine import build_problem
from bbsinglet.tables import read_pulse_table, read_trajectory

DATA = Path(__file__).parent / "data"
DATA_FILES = ("pulse.csv", "history.jsonl", "trajectory.csv", "summary.json")


def derived_config(tmp_path, name, edit, filename="cfg.yaml"):
    doc = yaml.safe_load(read_config_text(f"bundled:{name}"))
    edit(doc)
    p = tmp_path / filename
    p.write_text(yaml.safe_dump(doc))
    return str(p)


def short_three_spin(tmp_path, generations=15, png=False):
    def edit(d):
        d["ga"].update(generations=generations, population_size=24)
        d["bb"]["n_segments"] = 200
        d["output"]["formats"] = ["csv", "png"] if png else ["csv"]
    return derived_config(tmp_path, "three_spin", edit)


class TestValidate:
    def test_btmsb(self, capsys):
        assert main(["validate", "bundled:btmsb"]) == 0
        out = capsys.readouterr().out
        assert "Hilbert dimension: 2048" in out and "result: PASS" in out and "memory" in out

    def test_isotropic_heteronuclear(self, tmp_path, capsys):
        def edit(d):
            d["spin_system"]["couplings"][1]["form"] = "isotropic"
        assert main(["validate", derived_config(tmp_path, "three_spin", edit)]) == 1
        out = capsys.readouterr().out
        assert "C1-H" in out and "result: FAIL" in out

    def test_empty_file(self, tmp_path, capsys):
        (tmp_path / "e.yaml").write_text("")
        assert main(["validate", str(tmp_path / "e.yaml")]) == 2
        assert "schema error" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert main(["validate", str(tmp_path / "none.yaml")]) == 2
        assert "not found" in capsys.readouterr().err

    def test_dimension_guard(self, tmp_path, capsys):
        def edit(d):
            d["spin_system"]["sites"][2]["count"] = 11
        cfg = derived_config(tmp_path, "btmsb", edit)
        assert main(["validate", cfg]) == 1
        assert "--force" in capsys.readouterr().out
        assert main(["validate", cfg, "--force"]) == 0
        assert main(["optimize", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "--force" in capsys.readouterr().err


class TestOptimize:
    def test_deterministic(self, tmp_path):
        cfg = short_three_spin(tmp_path)
        assert main(["optimize", cfg, "--seed", "42", "--out", str(tmp_path / "a")]) == 0
        assert main(["optimize", cfg, "--seed", "42", "--out", str(tmp_path / "b")]) == 0
        for f in DATA_FILES:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        assert (tmp_path / "a" / "run.log").exists()
        hist = (tmp_path / "a" / "history.jsonl").read_text().splitlines()
        assert len(hist) == 16 and '"best_Q"' in hist[0] and '"mean_Q"' in hist[0]

    def test_seed_changes_result(self, tmp_path):
        cfg = short_three_spin(tmp_path, generations=2)
        main(["optimize", cfg, "--seed", "1", "--out", str(tmp_path / "a")])
        main(["optimize", cfg, "--seed", "2", "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "pulse.csv").read_bytes() != (tmp_path / "b" / "pulse.csv").read_bytes()

    @pytest.mark.slow
    def test_two_spin_demo_near_ceiling(self, tmp_path, capsys):
        assert main(["optimize", "bundled:two_spin", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        ceiling = float(out.split("(ceiling ")[2].split(")")[0])
        final = read_trajectory(tmp_path / "trajectory.csv")["enhancement"][-1]
        assert ceiling == pytest.approx(1.0, abs=1e-4)
        assert final >= 0.9 * ceiling

    def test_btmsb_tiny_budget(self, tmp_path, capsys):
        def edit(d):
            d["ga"].update(population_size=8, generations=5, elitism_count=2)
            d["output"]["formats"] = ["csv", "png"]
        cfg = derived_config(tmp_path, "btmsb", edit)
        assert main(["optimize", cfg, "--out", str(tmp_path / "o")]) == 0
        out = capsys.readouterr().out
        assert "ceiling 0.352590" in out and "enhancement" in out
        for f in DATA_FILES + ("trajectory.png", "pulse.png", "history.png"):
            assert (tmp_path / "o" / f).stat().st_size > 0

    def test_png_deterministic(self, tmp_path):
        cfg = short_three_spin(tmp_path, generations=1, png=True)
        main(["optimize", cfg, "--out", str(tmp_path / "a")])
        main(["optimize", cfg, "--out", str(tmp_path / "b")])
        for f in ("trajectory.png", "pulse.png", "history.png"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


class TestSimulate:
    def test_silent_table(self, tmp_path, three_spin):
        p = tmp_path / "silent.csv"
        rows = ["index,duration_ms,1H_amp_hz,1H_phase_deg,13C_amp_hz,13C_phase_deg"]
        rows += [f"{i},0.500000,0.000000,0.000000,0.000000,0.000000" for i in range(40)]
        p.write_text("\n".join(rows) + "\n")
        assert main(["simulate", "bundled:three_spin", str(p), "--out", str(tmp_path / "s")]) == 0
        tr = read_trajectory(tmp_path / "s" / "trajectory.csv")
        assert len(tr["time_ms"]) == 41
        assert np.max(np.abs(tr["enhancement"])) < 1e-12

    def test_round_trip_and_envelope(self, tmp_path, three_spin_cfg, three_spin):
        cfg = short_three_spin(tmp_path, generations=15)
        main(["optimize", cfg, "--out", str(tmp_path / "o")])
        assert main(["simulate", cfg, str(tmp_path / "o" / "pulse.csv"), "--out", str(tmp_path / "s")]) == 0
        a = (tmp_path / "o" / "trajectory.csv").read_bytes()
        assert a == (tmp_path / "s" / "trajectory.csv").read_bytes()
        # matches the in-process trajectory of the re-imported pulse
        seq = read_pulse_table(tmp_path / "o" / "pulse.csv", three_spin, dt=5e-4)
        problem = build_problem(three_spin, 5e-4, three_spin_cfg.polarizations())
        rec = problem.trajectory(seq)
        tr = read_trajectory(tmp_path / "s" / "trajectory.csv")
        assert np.array_equal(tr["enhancement"], rec.enhancement)
        # envelope rises: the late-time maximum exceeds the early-time one, below the ceiling
        e = tr["enhancement"]
        half = len(e) // 2
        assert np.max(e[half:]) > np.max(e[:half])
        assert np.max(e) <= problem.ceiling_enhancement() + 1e-9

    def test_stride(self, tmp_path):
        cfg = short_three_spin(tmp_path, generations=0)
        main(["optimize", cfg, "--out", str(tmp_path / "o")])
        main(["simulate", cfg, str(tmp_path / "o" / "pulse.csv"), "--stride", "50", "--out", str(tmp_path / "s")])
        assert len(read_trajectory(tmp_path / "s" / "trajectory.csv")["time_ms"]) == 5

    def test_dt_mismatch(self, tmp_path, capsys):
        def edit(d):
            d["bb"]["dt_s"] = 0.001
        cfg = derived_config(tmp_path, "btmsb", edit)
        assert main(["simulate", cfg, str(DATA / "btmsb_seed42_pulse.csv"), "--out", str(tmp_path)]) == 2
        assert "duration_ms" in capsys.readouterr().err

    def test_channel_mismatch(self, tmp_path, capsys):
        assert main(["simulate", "bundled:two_spin", str(DATA / "btmsb_seed42_pulse.csv"), "--out", str(tmp_path)]) == 2
        assert "header" in capsys.readouterr().err


def hbac_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestHBAC:
    def gain_config(self, tmp_path, t_s=25.9, tau=10.0):
        def edit(d):
            d["relaxation"].update(t_singlet_s=t_s, tau_ac_s=tau, tau_hb_s=tau,
                                   gain={"alpha": {"1H": 0.77, "13C": 0.40}, "beta": 0.5})
        return derived_config(tmp_path, "btmsb", edit, f"g{t_s}.yaml")

    def test_single_ac_row(self, tmp_path):
        assert main(["hbac", self.gain_config(tmp_path), "-m", "0", "--out", str(tmp_path)]) == 0
        rows = hbac_rows(tmp_path / "hbac.csv")
        assert len(rows) == 1 and rows[0]["m"] == "0"
        assert set(rows[0]) == {"m", "eps_singlet", "eps_1H"}

    def test_high_contrast_increasing(self, tmp_path):
        assert main(["hbac", self.gain_config(tmp_path, 250.0, 15.0), "--iterations", "5", "--out", str(tmp_path)]) == 0
        e = [float(r["eps_singlet"]) for r in hbac_rows(tmp_path / "hbac.csv")]
        assert all(b > a for a, b in zip(e, e[1:]))

    def test_physical_constants_plateau(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["hbac", "bundled:btmsb", "-m", "3", "--pulse", str(DATA / "btmsb_seed42_pulse.csv"),
                     "--out", str(out)]) == 0
        assert "BB pulse" in capsys.readouterr().out
        e = [float(r["eps_singlet"]) for r in hbac_rows(out / "hbac.csv")]
        assert e[0] > 2.0
        assert all(abs(b - a) / a < 0.05 for a, b in zip(e[1:], e[2:]))

    def test_no_relaxation_section(self, capsys):
        assert main(["hbac", "bundled:two_spin"]) == 2
        assert "relaxation" in capsys.readouterr().err

    def test_deterministic(self, tmp_path):
        cfg = self.gain_config(tmp_path)
        main(["hbac", cfg, "--out", str(tmp_path / "a")])
        main(["hbac", cfg, "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "hbac.csv").read_bytes() == (tmp_path / "b" / "hbac.csv").read_bytes()


class TestFit:
    def write(self, path, t, y):
        path.write_text("time_s,value\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(t, y)))

    def test_decay(self, tmp_path, capsys):
        t = np.linspace(0, 60, 20)
        self.write(tmp_path / "d.csv", t, np.exp(-t / 25.9))
        assert main(["fit", str(tmp_path / "d.csv"), "--out", str(tmp_path / "o"), "--plot"]) == 0
        out = capsys.readouterr().out
        tc = float(out.split("time_constant_s: ")[1].split()[0])
        assert tc == pytest.approx(25.9, rel=1e-5)
        assert "amplitude" in out and "rms_residual" in out
        assert (tmp_path / "o" / "fit.csv").exists() and (tmp_path / "o" / "fit.png").exists()

    def test_inversion(self, tmp_path, capsys):
        t = np.linspace(0.1, 15, 15)
        self.write(tmp_path / "ir.csv", t, 1 - 2 * np.exp(-t / 3.0))
        assert main(["fit", str(tmp_path / "ir.csv"), "--model", "inversion", "--out", str(tmp_path / "o")]) == 0
        tc = float(capsys.readouterr().out.split("time_constant_s: ")[1].split()[0])
        assert tc == pytest.approx(3.0, rel=1e-5)

    def test_single_point(self, tmp_path, capsys):
        self.write(tmp_path / "one.csv", [0.0], [1.0])
        assert main(["fit", str(tmp_path / "one.csv"), "--out", str(tmp_path / "o")]) == 1
        assert "at least 3" in capsys.readouterr().err


def test_schema_command(capsys):
    assert main(["schema"]) == 0
    out = capsys.readouterr().out
    assert '"spin_system"' in out and '"ga"' in out


def test_console_script_installed():
    import shutil
    import subprocess

    exe = shutil.which("bbsinglet")
    assert exe is not None
    r = subprocess.run([exe, "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "0.1.0"

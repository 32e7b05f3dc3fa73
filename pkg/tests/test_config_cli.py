import csv
import hashlib
import json
import os

import pytest

from tbbsim.cli import main
from tbbsim.config import emit_config, ms_to_sim_time, parse_config
from tbbsim.errors import ConfigError

PHYS_PARAMS = """\
[params]
gamma_MHz = 3.03
kappa_MHz = 3.92
g_MHz = 0.33
deltaA_MHz = -29.0
Gamma_rel = 0.00093
N = 10000
"""

GAMMA_PARAMS = """\
[params]
kappa = 1.2937
g = 0.1089
delta_A = -9.571
Gamma = 0.00093
N = 10000
"""


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


class TestParse:
    def test_physical_units_converted(self):
        cfg = parse_config(PHYS_PARAMS)
        assert cfg.params.kappa == pytest.approx(3.92 / 3.03, abs=1e-4)
        assert cfg.params.g == pytest.approx(0.33 / 3.03, abs=1e-4)
        assert cfg.params.delta_A == pytest.approx(-29 / 3.03, abs=1e-3)
        assert cfg.gamma_MHz == 3.03

    def test_gamma_units_passthrough(self):
        cfg = parse_config(GAMMA_PARAMS)
        assert cfg.params.kappa == 1.2937
        assert cfg.gamma_MHz is None

    def test_empty_file_lists_required_keys(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("")
        msg = str(exc.value)
        assert "[params]" in msg and "kappa" in msg and "gamma_MHz" in msg

    def test_duplicate_key_cites_both_lines(self):
        text = GAMMA_PARAMS + "kappa = 2.0\n"
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        msg = str(exc.value)
        assert "duplicate key 'kappa'" in msg
        assert "line 7" in msg and "line 2" in msg

    def test_unknown_key_rejected_with_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config(GAMMA_PARAMS + "kapa = 2.0\n")
        assert "line 7" in str(exc.value)
        assert "kapa" in str(exc.value)

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError) as exc:
            parse_config(GAMMA_PARAMS + "[stedy]\n")
        assert "unknown section" in str(exc.value)

    def test_unit_mixing_rejected(self):
        text = PHYS_PARAMS + "kappa = 1.3\n"
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        assert "mixing unit systems" in str(exc.value)

    def test_comments_and_quoted_hash(self):
        text = GAMMA_PARAMS + (
            "[output]\n"
            'dir = "out#1"  # trailing comment\n')
        cfg = parse_config(text)
        assert cfg.get("output", "dir") == "out#1"

    def test_round_trip(self):
        text = PHYS_PARAMS + "[steady]\neta = 370.0\nG = 0.76\n"
        cfg = parse_config(text)
        cfg2 = parse_config(emit_config(cfg))
        assert cfg2.sections == cfg.sections
        assert cfg2.params == cfg.params

    def test_ms_conversion(self):
        # 5 ms at gamma = 3.03 MHz
        assert ms_to_sim_time(5.0, 3.03) == pytest.approx(95190.26, rel=1e-6)


class TestCli:
    def run(self, tmp_path, command, config_text, extra_args=()):
        cfg_path = tmp_path / "run.toml"
        cfg_path.write_text(config_text)
        out = tmp_path / "out"
        code = main([command, "--config", str(cfg_path), "--out", str(out),
                     "--quiet", *extra_args])
        return code, out

    def test_steady_point(self, tmp_path):
        text = GAMMA_PARAMS + "[steady]\neta = 370.0\nlambda = 1e6\n"
        code, out = self.run(tmp_path, "steady", text)
        assert code == 0
        rows = read_csv(out / "branches.csv")
        assert len(rows) == 3
        assert [r["stability"] for r in rows] == \
            ["stable", "unstable", "stable"]

    def test_no_atoms_scan_all_transparent(self, tmp_path):
        params = GAMMA_PARAMS.replace("N = 10000", "N = 0")
        params = params.replace("delta_A = -9.571", "delta_A = -9.571")
        text = params.replace("kappa = 1.2937", "kappa = 1.2937") + (
            "[steady]\n"
            'scan = "eta"\n'
            "scan_min = 1.0\nscan_max = 100.0\nscan_points = 5\n"
            "lambda = 0.01\n")
        # on cavity resonance an empty cavity transmits fully at any drive
        code, out = self.run(tmp_path, "steady", text)
        assert code == 0
        rows = read_csv(out / "branches.csv")
        assert len(rows) == 5
        for r in rows:
            assert float(r["transmittance"]) == pytest.approx(1.0, abs=1e-12)

    def test_partial_exit_on_bad_row(self, tmp_path):
        text = GAMMA_PARAMS + (
            "[steady]\n"
            'scan = "lambda"\n'
            "eta = 100.0\n"
            "scan_min = 0.0\nscan_max = 0.01\nscan_points = 3\n")
        code, out = self.run(tmp_path, "steady", text)
        assert code == 4
        rows = read_csv(out / "branches.csv")
        assert any("LambdaZeroError" in r["error"] for r in rows)
        assert any(r["error"] == "" for r in rows)

    def test_config_error_exit_code(self, tmp_path):
        code, _ = self.run(tmp_path, "steady", GAMMA_PARAMS + "[steady]\n")
        assert code == 2
        code, _ = self.run(tmp_path, "steady", "not a config\n")
        assert code == 2

    def test_phase_diagram_no_atoms_all_bright(self, tmp_path):
        params = GAMMA_PARAMS.replace("N = 10000", "N = 0")
        text = params + (
            "[phase_diagram]\n"
            "eta_min = 10.0\neta_max = 100.0\neta_points = 2\n"
            "repump_min = 0.2\nrepump_max = 0.8\nrepump_points = 2\n"
            "[output]\nheatmap = true\n")
        code, out = self.run(tmp_path, "phase-diagram", text)
        assert code == 0
        rows = read_csv(out / "phase_map.csv")
        assert len(rows) == 4
        assert all(r["phase"] == "bright" for r in rows)
        assert read_csv(out / "boundary.csv") == []
        svg = (out / "heatmap.svg").read_text()
        assert svg.count("<rect") >= 4

    def test_manifest_checksums_match(self, tmp_path):
        text = GAMMA_PARAMS + "[steady]\neta = 100.0\nlambda = 0.01\n"
        code, out = self.run(tmp_path, "steady", text)
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "steady"
        for entry in manifest["files"]:
            assert sha(out / entry["name"]) == entry["sha256"]

    def test_simulate_trajectory_and_events(self, tmp_path):
        text = GAMMA_PARAMS + (
            "[simulate]\n"
            "eta = 236.0\nlambda = 0.0\n"
            "t_end = 30000.0\nstride = 500\n")
        code, out = self.run(tmp_path, "simulate", text)
        assert code == 0
        rows = read_csv(out / "trajectory.csv")
        assert len(rows) >= 500
        assert list(rows[0]) == ["t", "re_alpha", "im_alpha", "re_m", "im_m",
                                 "n_e", "n_g", "n_f", "eta", "lambda",
                                 "transmittance"]
        events = read_csv(out / "events.csv")
        assert [e["direction"] for e in events] == ["up"]

    def test_deterministic_across_thread_counts(self, tmp_path):
        text = GAMMA_PARAMS + (
            "[phase_diagram]\n"
            "eta_min = 100.0\neta_max = 500.0\neta_points = 6\n"
            "repump_min = 0.3\nrepump_max = 0.8\nrepump_points = 4\n")
        hashes = []
        for threads, sub in (("1", "a"), ("2", "b")):
            sub_path = tmp_path / sub
            sub_path.mkdir()
            code, out = self.run(sub_path, "phase-diagram", text,
                                 extra_args=("--threads", threads))
            assert code == 0
            hashes.append((sha(out / "phase_map.csv"),
                           sha(out / "boundary.csv")))
        assert hashes[0] == hashes[1]

    def test_hysteresis_outputs(self, tmp_path):
        text = GAMMA_PARAMS + (
            "[hysteresis]\n"
            'target = "eta"\n'
            "min = 250.0\nmax = 480.0\n"
            "t_up = 4000.0\nt_down = 1500.0\ncycles = 2\n"
            "fixed_lambda = 1e6\n")
        code, out = self.run(tmp_path, "hysteresis", text)
        assert code == 0
        for k in (1, 2):
            assert (out / f"cycle_{k}_up.csv").exists()
            assert (out / f"cycle_{k}_down.csv").exists()
        areas = read_csv(out / "loop_areas.csv")
        assert len(areas) == 2
        assert all(float(a["area"]) > 1e-3 for a in areas)

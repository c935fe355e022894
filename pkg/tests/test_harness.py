import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from phc_noma.harness import (
    ExperimentConfig,
    exit_chart_experiment,
    parse_config,
    preset_config,
    reference_crlb,
    run_experiment,
)

# shrunk geometry keeps harness-level tests fast; L_p=127 is the smallest
# m-sequence length whose preferred pairs stay under the 0.2 cross-correlation cap
SMALL = dict(
    K=4,
    M=2,
    L_b=64,
    N_c=4,
    L_q=64,
    L_p=127,
    L_g=4,
    frames=4,
    trials=2,
    eb_dbj=-167.0,
    sweep="eb_dbj",
    sweep_values=(-167.0,),
    schemes=("proposed_grouped", "perfect_sync"),
)


def small_config(**kw):
    merged = dict(SMALL)
    merged.update(kw)
    return ExperimentConfig(**merged)


class TestConfigParsing:
    def test_round_trip_fields(self):
        text = """
        # comment line
        seed = 9
        trials = 3
        eb_dbj = -167.5
        schemes = proposed_grouped, mmse
        sweep_values = -170, -168
        sigma_x = 0.3
        """
        cfg = parse_config(text)
        assert cfg.seed == 9 and cfg.trials == 3
        assert cfg.schemes == ("proposed_grouped", "mmse")
        assert cfg.sweep_values == (-170.0, -168.0)
        assert cfg.sigma_x == 0.3

    def test_unknown_field_named_in_error(self):
        with pytest.raises(ValueError, match="no_such_field"):
            parse_config("no_such_field = 3")

    def test_bad_line_reports_lineno(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_config("seed = 1\nbogus line")

    def test_table3_defaults_representable(self):
        cfg = ExperimentConfig()
        assert (cfg.K, cfg.M, cfg.N_c, cfg.L_b, cfg.L_p, cfg.L_q) == (10, 2, 10, 1024, 511, 320)
        assert (cfg.alpha, cfg.eps_p, cfg.eps_q, cfg.eta) == (0.5, 0.75, 0.3, 0.5)
        assert (cfg.T_in, cfg.T_out, cfg.f, cfg.tau) == (4, 12, 6e14, 1e-6)

    def test_e_nb_override(self):
        cfg = parse_config("e_nb_dbj = -181")
        assert cfg.physical().n_b == pytest.approx(
            10 ** (-18.1) / (6.626e-34 * 6e14), rel=1e-9
        )


class TestDeterminism:
    def test_byte_identical_reruns(self, tmp_path):
        cfg = small_config()
        p1 = run_experiment(cfg, tmp_path / "a")
        p2 = run_experiment(cfg, tmp_path / "b")
        assert p1.read_bytes() == p2.read_bytes()

    def test_worker_count_invariance(self, tmp_path):
        cfg1 = small_config(workers=1)
        cfg2 = small_config(workers=2)
        p1 = run_experiment(cfg1, tmp_path / "w1")
        p2 = run_experiment(cfg2, tmp_path / "w2")
        assert p1.read_bytes() == p2.read_bytes()

    def test_seed_changes_output(self, tmp_path):
        p1 = run_experiment(small_config(seed=1), tmp_path / "s1")
        p2 = run_experiment(small_config(seed=2), tmp_path / "s2")
        assert p1.read_bytes() != p2.read_bytes()


class TestCsvContract:
    def test_schema_and_provenance(self, tmp_path):
        cfg = small_config(sweep_values=(-167.0, -165.0))
        path = run_experiment(cfg, tmp_path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# schema=1"
        assert lines[1] == "scheme,seed,sweep,sweep_value,trials,metric,value"
        for line in lines[2:]:
            fields = line.split(",")
            assert len(fields) == 7
            assert fields[0] in cfg.schemes + ("crlb",)
            assert int(fields[1]) == cfg.seed
            assert fields[2] == "eb_dbj"
            assert int(fields[4]) == cfg.trials

    def test_sweep_cardinality(self, tmp_path):
        cfg = small_config(sweep_values=(-167.0, -166.0, -165.0))
        path = run_experiment(cfg, tmp_path)
        text = path.read_text()
        for name in cfg.schemes:
            rows = [l for l in text.splitlines() if l.startswith(name + ",") and ",ber," in l]
            assert len(rows) == 3

    def test_manifest_written(self, tmp_path):
        run_experiment(small_config(), tmp_path)
        manifest = (tmp_path / "run-manifest.txt").read_text()
        assert "config_sha256" in manifest and "seed = 1" in manifest

    def test_invalid_scheme_rejected(self, tmp_path):
        cfg = small_config(schemes=("proposed_grouped", "nonexistent"))
        with pytest.raises(ValueError, match="nonexistent"):
            run_experiment(cfg, tmp_path)

    def test_trials_validated(self, tmp_path):
        with pytest.raises(ValueError, match="trials"):
            run_experiment(small_config(trials=0), tmp_path)


class TestUngroupedMode:
    def test_group_count_drops_to_one(self):
        from phc_noma.simulate import build_scenario

        cfg = small_config().trial_config(-167.0, 0)
        from dataclasses import replace

        sc = build_scenario(replace(cfg, M=1))
        assert len(sc.sps) == 1
        assert np.all(sc.groups == 0)

    def test_grouped_and_ungrouped_agree_at_high_energy(self, tmp_path):
        # keep the staggered delay gaps wider than the peak-dedup window even
        # with the single shared pilot
        cfg = small_config(
            schemes=("proposed_grouped", "proposed_ungrouped"),
            sweep_values=(-164.0,),
            trials=4,
            frames=8,
            delay_frac=0.9,
        )
        path = run_experiment(cfg, tmp_path)
        bers = {}
        for line in path.read_text().splitlines():
            parts = line.split(",")
            if len(parts) == 7 and parts[5] == "ber":
                bers[parts[0]] = float(parts[6])
        assert abs(bers["proposed_grouped"] - bers["proposed_ungrouped"]) < 5e-3


class TestCrlbReference:
    def test_positive_and_decreasing(self):
        cfg = small_config()
        b1 = reference_crlb(cfg, -170.0)
        b2 = reference_crlb(cfg, -166.0)
        assert 0 < b2 < b1


class TestExitExperiment:
    def test_writes_components_and_trajectory(self, tmp_path):
        cfg = small_config(schemes=("proposed_grouped",), trials=1, alpha=1.0)
        path = exit_chart_experiment(cfg, tmp_path)
        text = path.read_text().splitlines()
        assert text[0] == "# schema=1"
        comps = {l.split(",")[0] for l in text[2:]}
        assert comps == {"detector", "decoder", "trajectory"}


class TestCli:
    def test_simulate_with_config_file(self, tmp_path):
        cfg_file = tmp_path / "cfg.txt"
        cfg_file.write_text(
            "\n".join(
                [
                    "seed = 4",
                    "trials = 1",
                    "frames = 3",
                    "K = 4",
                    "M = 2",
                    "L_b = 64",
                    "N_c = 4",
                    "L_q = 64",
                    "L_p = 127",
                    "L_g = 4",
                    "eb_dbj = -166",
                    "sweep_values = -166",
                    "schemes = proposed_grouped",
                ]
            )
        )
        out = tmp_path / "out"
        proc = subprocess.run(
            [sys.executable, "-m", "phc_noma.cli", "simulate", "--config", str(cfg_file), "--out", str(out)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        csv = Path(proc.stdout.strip())
        assert csv.exists()
        assert (out / "run-manifest.txt").exists()

    def test_bad_config_is_diagnosed(self, tmp_path):
        cfg_file = tmp_path / "cfg.txt"
        cfg_file.write_text("bogus_field = 1")
        proc = subprocess.run(
            [sys.executable, "-m", "phc_noma.cli", "simulate", "--config", str(cfg_file), "--out", str(tmp_path / "o")],
            capture_output=True,
            text=True,
        )
        assert proc.returncode != 0
        assert "bogus_field" in proc.stderr

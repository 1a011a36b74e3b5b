import csv
import json
import math

import numpy as np
import pytest

from irsloc.association import count_unfiltered_solutions
from irsloc.cli import main
from irsloc.harness import (
    DEFAULT_BS,
    DEFAULT_IRS_LAYOUTS,
    ExperimentConfig,
    baseline_3bs,
    cardinality_experiment,
    default_config,
    error_probability,
    association_accuracy,
    required_taps,
    run_localization,
    run_trial,
    summarize_localization,
    topology_experiment,
    topology_variants,
    uniqueness_experiment,
    write_localization_csv,
    write_rows_csv,
)
from irsloc.ranging import RangingConfig
from irsloc.scene import Point2D, Scene, check_topology, mirror_across_bs_line
from irsloc.waveform import OfdmConfig


class TestConfig:
    def test_defaults(self):
        cfg = default_config()
        assert cfg.bs == DEFAULT_BS
        assert cfg.irs == DEFAULT_IRS_LAYOUTS[1]
        assert cfg.k == 4 and cfg.trials == 1000
        assert cfg.tau_m == 1.5 and cfg.error_radius_m == 0.8
        assert cfg.ofdm.n_taps == 512  # stock single-IRS layout fits

    def test_window_widened_for_far_layouts(self):
        # side IRSs at |x| = 60..70 put compound echoes past 512 cells
        assert default_config(2).ofdm.n_taps == 640
        assert default_config(3).ofdm.n_taps == 640
        assert required_taps(
            DEFAULT_BS, DEFAULT_IRS_LAYOUTS[1], 50.0, OfdmConfig()
        ) <= 512

    def test_window_multiple_of_64_and_covers_bound(self):
        for r in (1, 2, 3):
            taps = required_taps(DEFAULT_BS, DEFAULT_IRS_LAYOUTS[r], 50.0, OfdmConfig())
            assert taps % 64 == 0
            from irsloc.scene import distance

            reach = max(
                distance(b, q) for b in DEFAULT_BS for q in DEFAULT_IRS_LAYOUTS[r]
            )
            assert taps * 0.75 >= 2.0 * (reach + 50.0)

    def test_explicit_ofdm_not_touched(self):
        ofdm = OfdmConfig(cp_len=512, n_taps=512)
        cfg = default_config(3, ofdm=ofdm)
        assert cfg.ofdm.n_taps == 512

    def test_unknown_layout(self):
        with pytest.raises(ValueError):
            default_config(4)

    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(k=0)
        with pytest.raises(ValueError):
            ExperimentConfig(tau_m=-1.0)

    def test_json_round_trip(self, tmp_path):
        cfg = default_config(2, k=3, trials=7, seed=42)
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again == cfg
        path = tmp_path / "cfg.json"
        cfg.save(path)
        assert ExperimentConfig.load(path) == cfg

    def test_round_trip_with_ranging(self, tmp_path):
        rcfg = RangingConfig(rho=1.0, rho1=0.1, rho2=1.0, delta1=1e-9, delta2=1e-9)
        cfg = default_config(1, ranging=rcfg)
        path = tmp_path / "cfg.json"
        cfg.save(path)
        loaded = ExperimentConfig.load(path)
        assert loaded.ranging == rcfg

    def test_weights_follow_cell(self):
        cfg = default_config()
        assert cfg.weights.sigma_direct == pytest.approx(0.75 / (2 * math.sqrt(3)))


class TestTrials:
    def test_deterministic_given_seed(self):
        cfg = default_config(1, k=3, trials=1)
        s1 = np.random.SeedSequence(7).spawn(1)[0]
        s2 = np.random.SeedSequence(7).spawn(1)[0]
        a = run_trial(cfg, 0, s1)
        b = run_trial(cfg, 0, s2)
        assert a.true_positions == b.true_positions
        assert a.errors_m == b.errors_m
        assert a.chosen == b.chosen

    def test_run_localization_reproducible(self):
        cfg = default_config(1, k=3, trials=4, seed=11)
        a = run_localization(cfg)
        b = run_localization(cfg)
        assert [o.errors_m for o in a] == [o.errors_m for o in b]

    def test_oracle_never_worse_on_association(self):
        cfg = default_config(2, k=4, trials=20, seed=13)
        alg = run_localization(cfg)
        oracle = run_localization(cfg, oracle=True)
        assert error_probability(oracle, 0.8) <= error_probability(alg, 0.8) + 1e-12
        assert all(o.association_correct for o in oracle)

    def test_outcome_bookkeeping(self):
        cfg = default_config(1, k=3, trials=1, seed=3)
        out = run_trial(cfg, 5, np.random.SeedSequence(3).spawn(1)[0])
        assert out.trial == 5
        assert out.k == 3
        assert out.n_unfiltered == count_unfiltered_solutions(3, 1)
        assert out.n_feasible >= 1
        assert len(out.errors_m) == 3
        assert not out.detection_failed

    def test_phase1_trial_end_to_end(self):
        # one full waveform trial: synthesis, sparse recovery, association
        cfg = default_config(1, k=2, trials=1, seed=21, skip_phase1=False)
        out = run_trial(cfg, 0, np.random.SeedSequence(21).spawn(1)[0])
        assert not out.detection_failed
        assert out.association_correct
        assert max(out.errors_m) < 0.8


class TestScoring:
    def _outcome(self, errors, correct=True):
        k = len(errors)
        return type(
            "O",
            (),
            {
                "errors_m": tuple(errors),
                "association_correct": correct,
                "detection_failed": False,
                "k": k,
            },
        )()

    def test_error_probability(self):
        outs = [self._outcome([0.1, 0.9]), self._outcome([math.inf, 0.2])]
        assert error_probability(outs, 0.8) == pytest.approx(0.5)
        assert error_probability(outs, 1.0) == pytest.approx(0.25)

    def test_error_probability_empty(self):
        with pytest.raises(ValueError):
            error_probability([])

    def test_association_accuracy(self):
        outs = [self._outcome([0.1], True), self._outcome([0.1], False)]
        assert association_accuracy(outs) == pytest.approx(0.5)


class TestCardinality:
    def test_rows_shape_and_counts(self):
        cfg = default_config(1, trials=30, seed=5)
        rows = cardinality_experiment(cfg, k_values=(2, 3))
        assert [row["k"] for row in rows] == [2, 3]
        for row in rows:
            assert row["unfiltered"] == count_unfiltered_solutions(row["k"], 1)
            assert 1 <= row["mean_feasible"] <= row["unfiltered"]
            assert row["mean_reduced"] <= row["mean_feasible"]
            assert row["reduced_kind"] == "residual_pruned"

    def test_multi_irs_uses_closest_filter(self):
        cfg = default_config(3, trials=10, seed=5)
        rows = cardinality_experiment(cfg, k_values=(2,))
        assert rows[0]["reduced_kind"] == "closest_irs"
        assert rows[0]["n_irs"] == 3


class TestTopology:
    def test_variant_geometry(self):
        variants = topology_variants(DEFAULT_BS)
        assert set(variants) == {"c1_hold", "c1_fail", "c2_hold", "c2_fail"}
        # failing variants pair an anchor with its mirror image
        for name in ("c1_fail", "c2_fail"):
            a, b = variants[name]
            assert b == mirror_across_bs_line(DEFAULT_BS, a)
        for name, expect_c1, expect_c2 in [
            ("c1_hold", True, True),
            ("c1_fail", False, True),
            ("c2_hold", True, True),
            ("c2_fail", True, False),
        ]:
            probe = Scene(
                bs=DEFAULT_BS,
                irs=variants[name],
                targets=(variants[name][0],),
                true_irs=(0,),
            )
            report = check_topology(probe)
            assert (report.c1_ok, report.c2_ok) == (expect_c1, expect_c2), name

    def test_experiment_rows(self):
        cfg = default_config(2, k=2, trials=8, seed=9)
        rows = topology_experiment(cfg)
        assert len(rows) == 4
        by_name = {row["variant"]: row for row in rows}
        assert by_name["c1_fail"]["c1_ok"] is False
        assert by_name["c2_fail"]["c2_ok"] is False
        for row in rows:
            assert 0.0 <= row["error_probability"] <= 1.0


class TestBaseline:
    def test_smoke_and_limits(self):
        cfg = default_config(1, k=2, trials=5, seed=2)
        outcomes = baseline_3bs(cfg)
        assert len(outcomes) == 5
        assert error_probability(outcomes, 0.8) <= 1.0
        with pytest.raises(ValueError):
            baseline_3bs(default_config(1, k=8, trials=1))


class TestUniqueness:
    def test_small_run_all_localized(self):
        report = uniqueness_experiment(18, seed=3)
        assert report["scenes"] == 18
        assert report["unique_and_correct"] == 18
        assert report["localized"] == 18
        assert report["worst_position_error_m"] < 1e-6
        assert report["failures"] == []


class TestCsv:
    def test_localization_csv(self, tmp_path):
        cfg = default_config(1, k=2, trials=3, seed=6)
        outcomes = run_localization(cfg)
        path = tmp_path / "loc.csv"
        write_localization_csv(path, outcomes)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3 * 2
        for row in rows:
            assert float(row["error_m"]) >= 0.0

    def test_rows_csv(self, tmp_path):
        path = tmp_path / "rows.csv"
        write_rows_csv(path, [{"a": 1, "b": "x"}, {"a": 2, "b": "y"}])
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows == [{"a": "1", "b": "x"}, {"a": "2", "b": "y"}]
        with pytest.raises(ValueError):
            write_rows_csv(path, [])

    def test_summary_keys(self):
        cfg = default_config(1, k=2, trials=2, seed=1)
        outcomes = run_localization(cfg)
        row = summarize_localization(outcomes, 0.8, "algorithm")
        assert row["mode"] == "algorithm"
        assert row["trials"] == 2
        assert 0.0 <= row["error_probability"] <= 1.0


class TestCli:
    def test_cardinality_command(self, tmp_path, capsys):
        rc = main(
            [
                "cardinality",
                "--k-values",
                "2,3",
                "--trials",
                "5",
                "--seed",
                "2",
                "--out",
                str(tmp_path),
            ]
        )
        assert rc == 0
        assert (tmp_path / "cardinality.csv").exists()
        assert "K=2" in capsys.readouterr().out

    def test_localize_command(self, tmp_path, capsys):
        rc = main(
            [
                "localize",
                "--k",
                "2",
                "--trials",
                "4",
                "--seed",
                "3",
                "--out",
                str(tmp_path),
            ]
        )
        assert rc == 0
        assert (tmp_path / "localization.csv").exists()
        assert (tmp_path / "localization_summary.csv").exists()
        assert "error probability" in capsys.readouterr().out

    def test_localize_with_config_file(self, tmp_path):
        cfg = default_config(2, k=2, trials=3, seed=5)
        cfg_path = tmp_path / "cfg.json"
        cfg.save(cfg_path)
        rc = main(
            ["localize", "--config", str(cfg_path), "--out", str(tmp_path / "out")]
        )
        assert rc == 0
        assert (tmp_path / "out" / "localization.csv").exists()

    def test_topology_command(self, tmp_path):
        rc = main(
            ["topology", "--k", "2", "--trials", "4", "--seed", "1", "--out", str(tmp_path)]
        )
        assert rc == 0
        assert (tmp_path / "topology.csv").exists()

    def test_baseline_command(self, tmp_path):
        rc = main(
            ["baseline", "--k", "2", "--trials", "3", "--seed", "1", "--out", str(tmp_path)]
        )
        assert rc == 0
        assert (tmp_path / "baseline.csv").exists()

    def test_uniqueness_command(self, tmp_path, capsys):
        rc = main(
            ["uniqueness-check", "--scenes", "9", "--seed", "1", "--out", str(tmp_path)]
        )
        assert rc == 0
        assert (tmp_path / "uniqueness.json").exists()
        report = json.loads((tmp_path / "uniqueness.json").read_text())
        assert report["localized"] == 9

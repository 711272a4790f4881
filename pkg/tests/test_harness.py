import shutil

import numpy as np
import pytest

from corekit.data_model import SynthConfig
from corekit.harness import (
    ConfigError,
    ExperimentConfig,
    ReportError,
    ResultRow,
    RunFailure,
    TrainerSettings,
    config_from_mapping,
    parse_kv_file,
    prepare_data,
    report,
    run_once,
    stable_seed,
    summarize_rows,
    sweep,
)
from corekit.metrics import group_eval
from corekit.trainer import train


def small_config(**overrides):
    base = dict(
        name="unit",
        synth=SynthConfig(n=400, d=4, class_count=2, rho=0.9, seed=21),
        test_n=400,
        methods=("el2n",),
        policies=("Diff", "Rand"),
        rates=(0.2,),
        seeds=(0,),
        surrogate=TrainerSettings(),
        surrogate_short_epochs=3,
        surrogate_long_epochs=6,
        downstream=TrainerSettings(base_epochs=3),
        ap_baseline_trials=20,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestExperimentConfig:
    def test_needs_some_data_source(self):
        with pytest.raises(ConfigError, match="synthetic dataset or a train CSV"):
            ExperimentConfig(synth=None, train_csv=None)

    def test_rejects_unknown_policy(self):
        with pytest.raises(ConfigError, match="unknown policy"):
            small_config(policies=("Diffy",))

    def test_rejects_unknown_method(self):
        with pytest.raises(ConfigError, match="unknown score method"):
            small_config(methods=("gradnorm",))

    def test_rejects_out_of_range_rate(self):
        with pytest.raises(ConfigError, match="rates"):
            small_config(rates=(0.0,))


class TestRunOnce:
    def test_rate_one_random_equals_full_data_training(self):
        cfg = small_config(policies=("Rand",), methods=("none",), rates=(1.0,))
        row = run_once(cfg, "none", "Rand", 1.0, 0)
        assert row.n_selected == 400
        data = prepare_data(cfg)
        tc = cfg.downstream.to_train_config(rate=1.0, seed=stable_seed(0, "downstream"))
        model = train(data.train, None, tc)
        full = group_eval(model, data.test, data.train_table)
        assert row.wga == pytest.approx(full.worst_group_accuracy, abs=1e-12)
        assert row.avg_acc == pytest.approx(full.weighted_average_accuracy, abs=1e-12)

    def test_identical_arguments_identical_rows(self):
        cfg = small_config()
        a = run_once(cfg, "el2n", "Diff", 0.2, 0)
        b = run_once(cfg, "el2n", "Diff", 0.2, 0)
        assert a == b

    def test_epoch_scaling_feeds_downstream(self):
        from corekit.trainer import scaled_epochs

        # the downstream train config carries the run's rate, so a 2% run
        # with base 100 stretches to 5000 epochs
        cfg = small_config(downstream=TrainerSettings(base_epochs=100))
        tc = cfg.downstream.to_train_config(rate=0.02, seed=0)
        assert scaled_epochs(tc.base_epochs, tc.selection_rate) == 5000
        # and the pipeline actually trains on the coreset it selected
        cfg = small_config(rates=(0.5,), downstream=TrainerSettings(base_epochs=4))
        row = run_once(cfg, "el2n", "Rand", 0.5, 0)
        assert row.n_selected == 200

    def test_score_free_policy_with_score_method_needs_no_surrogate(self):
        cfg = small_config(methods=("none",), policies=("RGbal",))
        row = run_once(cfg, "none", "RGbal", 0.2, 1)
        assert row.conflict_ap > 0  # random baseline mean

    def test_diff_policy_without_scores_fails_in_select_stage(self):
        cfg = small_config(methods=("none",))
        with pytest.raises(RunFailure) as err:
            run_once(cfg, "none", "Diff", 0.2, 0)
        assert err.value.stage == "select"

    @pytest.mark.parametrize(
        "policy", ["Diff", "DiffStar", "Eas", "Med", "Strat", "Rand", "RGbal", "DiffGbal", "EasGbal"]
    )
    def test_every_policy_runs_through_the_pipeline(self, policy):
        cfg = small_config(policies=(policy,))
        row = run_once(cfg, "el2n", policy, 0.2, 0)
        assert row.n_selected == 80
        assert np.isfinite([row.bias_level, row.wga, row.avg_acc, row.conflict_ap]).all()
        # the group_counts column always totals the selected count
        counts = sum(int(part.split(":")[1]) for part in row.group_counts.split("|"))
        assert counts == row.n_selected

    def test_difficult_star_infeasible_at_full_rate(self):
        # trimming the top scorers leaves fewer samples than a rate-1.0 budget
        cfg = small_config(policies=("DiffStar",), rates=(1.0,))
        with pytest.raises(RunFailure) as err:
            run_once(cfg, "el2n", "DiffStar", 1.0, 0)
        assert err.value.stage == "select"


class TestImportedData:
    @staticmethod
    def write_dataset(path, n, seed):
        from corekit.data_model import generate_synthetic, save_dataset_csv

        ds = generate_synthetic(SynthConfig(n=n, d=4, class_count=2, rho=0.9, seed=seed))
        save_dataset_csv(path, ds)
        return ds

    def test_csv_data_with_imported_scores_skips_surrogate(self, tmp_path):
        from corekit.characterize import ScoreVector
        from corekit.data_model import save_scores

        train_ds = self.write_dataset(tmp_path / "train.csv", 200, seed=1)
        self.write_dataset(tmp_path / "test.csv", 100, seed=2)
        rng = np.random.default_rng(3)
        save_scores(tmp_path / "el2n.ssf", ScoreVector("el2n", rng.random(200)))
        cfg = ExperimentConfig(
            name="imported",
            synth=None,
            train_csv=str(tmp_path / "train.csv"),
            test_csv=str(tmp_path / "test.csv"),
            score_files={"el2n": str(tmp_path / "el2n.ssf")},
            methods=("el2n",),
            policies=("Diff",),
            rates=(0.2,),
            seeds=(0,),
            downstream=TrainerSettings(base_epochs=2),
            ap_baseline_trials=10,
        )
        row = run_once(cfg, "el2n", "Diff", 0.2, 0)
        assert row.n_selected == 40
        assert row.dataset == "imported"
        # identical scores for every seed: the file, not a surrogate, is the source
        other = run_once(cfg, "el2n", "Diff", 0.2, 1)
        assert other.conflict_ap == row.conflict_ap

    def test_imported_score_length_mismatch_fails(self, tmp_path):
        from corekit.characterize import ScoreVector
        from corekit.data_model import save_scores

        self.write_dataset(tmp_path / "train.csv", 200, seed=1)
        self.write_dataset(tmp_path / "test.csv", 100, seed=2)
        save_scores(tmp_path / "el2n.ssf", ScoreVector("el2n", np.ones(7)))
        cfg = ExperimentConfig(
            name="imported",
            synth=None,
            train_csv=str(tmp_path / "train.csv"),
            test_csv=str(tmp_path / "test.csv"),
            score_files={"el2n": str(tmp_path / "el2n.ssf")},
            methods=("el2n",),
            policies=("Diff",),
            rates=(0.2,),
            seeds=(0,),
        )
        with pytest.raises(RunFailure) as err:
            run_once(cfg, "el2n", "Diff", 0.2, 0)
        assert err.value.stage == "score"


class TestSweep:
    def test_row_count_is_dimension_product(self, tmp_path):
        cfg = small_config(methods=("el2n",), policies=("Diff", "Rand"), rates=(0.2, 0.5, 1.0), seeds=(0, 1))
        result = sweep(cfg, tmp_path / "out", workers=1)
        assert len(result.rows) == 1 * 2 * 3 * 2
        assert not result.failures
        lines = (tmp_path / "out" / "results.csv").read_text().splitlines()
        assert len(lines) == 13  # header + 12 rows

    def test_summary_mean_over_seeds(self):
        rows = [
            ResultRow("d", "el2n", "Diff", 0.1, 0, 1.0, 0.4, 0.9, 0.5, 10, "g"),
            ResultRow("d", "el2n", "Diff", 0.1, 1, 1.0, 0.6, 0.9, 0.5, 10, "g"),
        ]
        summary = summarize_rows(rows)
        assert len(summary) == 1
        assert summary[0]["wga_mean"] == pytest.approx(0.5)
        assert summary[0]["n_seeds"] == 2

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = small_config(seeds=(0, 1))
        a = sweep(cfg, tmp_path / "a", workers=1)
        b = sweep(cfg, tmp_path / "b", workers=1)
        assert a.results_csv.read_bytes() == b.results_csv.read_bytes()
        assert a.summary_csv.read_bytes() == b.summary_csv.read_bytes()

    def test_resumed_sweep_matches_uninterrupted(self, tmp_path):
        cfg = small_config(seeds=(0, 1))
        full = sweep(cfg, tmp_path / "full", workers=1)
        # simulate an interrupted sweep: only part of the cache survived
        partial_dir = tmp_path / "partial"
        (partial_dir / "cache").mkdir(parents=True)
        cached = sorted((tmp_path / "full" / "cache").glob("*.json"))
        for keep in cached[: len(cached) // 2]:
            shutil.copy(keep, partial_dir / "cache" / keep.name)
        resumed = sweep(cfg, partial_dir, workers=1)
        assert resumed.results_csv.read_bytes() == full.results_csv.read_bytes()

    def test_parallel_schedule_is_byte_identical(self, tmp_path):
        cfg = small_config(seeds=(0, 1), policies=("Rand",), methods=("none",))
        serial = sweep(cfg, tmp_path / "serial", workers=1)
        parallel = sweep(cfg, tmp_path / "parallel", workers=2)
        assert serial.results_csv.read_bytes() == parallel.results_csv.read_bytes()

    def test_failures_logged_and_sweep_continues(self, tmp_path):
        cfg = small_config(methods=("none",), policies=("Diff", "Rand"))
        result = sweep(cfg, tmp_path / "out", workers=1)
        assert len(result.rows) == 1  # Rand succeeded
        assert len(result.failures) == 1  # Diff cannot run without scores
        assert result.failures[0]["stage"] == "select"
        failure_lines = result.failures_csv.read_text().splitlines()
        assert len(failure_lines) == 2

    def test_workers_env_must_be_positive_int(self, tmp_path, monkeypatch):
        monkeypatch.setenv("COREKIT_WORKERS", "zero")
        cfg = small_config()
        with pytest.raises(ConfigError, match="COREKIT_WORKERS"):
            sweep(cfg, tmp_path / "out")


class TestReport:
    def test_empty_results_raise(self, tmp_path):
        csv_path = tmp_path / "results.csv"
        csv_path.write_text(
            "dataset,method,policy,rate,seed,bias_level,wga,avg_acc,conflict_ap,n_selected,group_counts\n"
        )
        with pytest.raises(ReportError, match="no rows"):
            report(csv_path, tmp_path / "plots")

    def test_single_row_renders(self, tmp_path):
        csv_path = tmp_path / "results.csv"
        csv_path.write_text(
            "dataset,method,policy,rate,seed,bias_level,wga,avg_acc,conflict_ap,n_selected,group_counts\n"
            "unit,el2n,Diff,0.1,0,1.5,0.5,0.9,0.7,10,0-0:5|1-1:5\n"
        )
        summary = report(csv_path, tmp_path / "plots")
        assert len(summary.plot_paths) == 1
        assert summary.plot_paths[0].exists()
        assert summary.markdown_path.exists()
        assert "0.500" in summary.markdown_path.read_text()

    def test_axes_cover_plotted_values(self, tmp_path):
        cfg = small_config(seeds=(0, 1), rates=(0.2, 1.0))
        result = sweep(cfg, tmp_path / "out", workers=1)
        summary = report(result.results_csv, tmp_path / "plots")
        assert summary.panels
        for panel in summary.panels:
            assert panel.xlim[0] <= panel.x_range[0] <= panel.x_range[1] <= panel.xlim[1]
            assert panel.ylim[0] <= panel.y_range[0] <= panel.y_range[1] <= panel.ylim[1]

    def test_schema_mismatch_rejected(self, tmp_path):
        csv_path = tmp_path / "results.csv"
        csv_path.write_text("dataset,method\nunit,el2n\n")
        with pytest.raises(ReportError, match="header"):
            report(csv_path, tmp_path / "plots")


class TestConfigFiles:
    def test_parse_kv_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# comment\n"
            "name = demo\n"
            "synth.n = 100\n"
            "\n"
            "rates = 0.1, 0.5\n"
        )
        mapping = parse_kv_file(path)
        assert mapping == {"name": "demo", "synth.n": "100", "rates": "0.1, 0.5"}

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("name demo\n")
        with pytest.raises(ConfigError, match="expected 'key = value'"):
            parse_kv_file(path)

    def test_duplicate_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("name = a\nname = b\n")
        with pytest.raises(ConfigError, match="duplicate"):
            parse_kv_file(path)

    def test_mapping_builds_config(self):
        cfg = config_from_mapping(
            {
                "name": "demo",
                "synth.n": "500",
                "synth.d": "6",
                "synth.rho": "0.9",
                "methods": "el2n, uncertainty",
                "policies": "Diff, Rand",
                "rates": "0.1, 0.4",
                "seeds": "0, 1, 2",
                "downstream.base_epochs": "5",
            }
        )
        assert cfg.synth.n == 500
        assert cfg.methods == ("el2n", "uncertainty")
        assert cfg.rates == (0.1, 0.4)
        assert cfg.downstream.base_epochs == 5

    def test_bad_value_names_key(self):
        with pytest.raises(ConfigError, match="synth.n"):
            config_from_mapping({"synth.n": "lots"})

    def test_config_identity_is_stable(self):
        a = small_config()
        b = small_config()
        assert a.identity() == b.identity()

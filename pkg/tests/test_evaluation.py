"""
插补评估单元测试
"""

import numpy as np
import pytest


class OracleImputer:
    """直接返回真值的插补器，用来检查指标管线"""

    name = "oracle"

    def impute(self, dataset, eval_mask, target_range=None):
        from stimpute.evaluation import ImputationResult

        return ImputationResult(
            values=dataset.values.copy(),
            provenance=np.zeros(dataset.values.shape, dtype=np.int64),
        )


def _model_imputer(dataset, config, seed=0):
    from stimpute.evaluation import ModelImputer
    from stimpute.model import ModelParams
    from stimpute.normalizer import fit_normalizer

    normalizer = fit_normalizer(dataset, (0, dataset.num_steps), dataset.native_mask)
    return ModelImputer(config, ModelParams.initialize(config, seed), normalizer)


class TestEvaluate:
    """evaluate"""

    def test_oracle_scores_zero(self, synthetic_dataset):
        from stimpute.evaluation import evaluate

        report = evaluate([OracleImputer()], synthetic_dataset, [0.2, 0.4], seed=1)

        assert len(report.entries) == 2
        for entry in report.entries:
            assert entry.mae == 0.0
            assert entry.rmse == 0.0
            assert entry.n_eval > 0

    def test_only_test_split_is_scored(self, synthetic_dataset):
        from stimpute.evaluation import evaluate
        from stimpute.masking import MaskSpec, generate_mask

        report = evaluate([OracleImputer()], synthetic_dataset, [0.3], seed=2)
        mask = generate_mask(synthetic_dataset, MaskSpec(missing_rate=0.3, seed=2))

        assert report.metadata["test_range"] == [160, 200]
        assert report.entries[0].n_eval == int(mask[160:200].sum())

    def test_derived_seeds(self, synthetic_dataset):
        from stimpute.evaluation import evaluate
        from stimpute.hash_utils import derive_seed

        report = evaluate([OracleImputer()], synthetic_dataset, [0.2, 0.6], seed=5)
        assert report.metadata["derived_seeds"] == {"0.2": 5, "0.6": derive_seed(5, 1)}

    def test_entry_order_is_method_major(self, synthetic_dataset):
        from stimpute.evaluation import build_imputers, evaluate

        imputers = build_imputers(["last_observation", "linear_interpolation"])
        report = evaluate(imputers, synthetic_dataset, [0.2, 0.4])

        assert [(e.method, e.missing_rate) for e in report.entries] == [
            ("last_observation", 0.2),
            ("last_observation", 0.4),
            ("linear_interpolation", 0.2),
            ("linear_interpolation", 0.4),
        ]

    def test_parallel_matches_serial(self, synthetic_dataset):
        from stimpute.evaluation import build_imputers, evaluate

        names = ["linear_interpolation", "historical_mean", "last_observation"]
        serial = evaluate(build_imputers(names), synthetic_dataset, [0.2, 0.4], seed=3, workers=1)
        parallel = evaluate(build_imputers(names), synthetic_dataset, [0.2, 0.4], seed=3, workers=3)

        assert serial.to_dict()["results"] == parallel.to_dict()["results"]

    def test_baselines_beat_nothing(self, synthetic_dataset):
        """在平滑的合成数据上线性插值的误差应小于数据本身的尺度"""
        from stimpute.evaluation import build_imputers, evaluate

        report = evaluate(build_imputers(["linear_interpolation"]), synthetic_dataset, [0.2])
        scale = float(np.abs(synthetic_dataset.values[160:]).mean())
        assert report.entries[0].mae < scale

    def test_extra_metadata(self, synthetic_dataset):
        from stimpute.evaluation import evaluate

        report = evaluate([OracleImputer()], synthetic_dataset, [0.2], metadata={"checkpoint": "x.bin"})
        assert report.metadata["checkpoint"] == "x.bin"
        assert report.metadata["dataset"] == "synthetic"


class TestBuildImputers:
    """方法名 → 插补器"""

    def test_known_names(self):
        from stimpute.evaluation import build_imputers

        imputers = build_imputers(["Linear_Interpolation", "historical_mean"])
        assert [i.name for i in imputers] == ["linear_interpolation", "historical_mean"]

    def test_unknown_name(self):
        from stimpute.evaluation import build_imputers
        from stimpute.exceptions import ConfigValidationError

        with pytest.raises(ConfigValidationError):
            build_imputers(["kriging"])


class TestMetricsReport:
    """报告与表格"""

    def _report(self):
        from stimpute.evaluation import MetricsEntry, MetricsReport

        return MetricsReport(
            entries=[
                MetricsEntry("d", 0.2, "model", 1.0, 0.1, 1.5, 10),
                MetricsEntry("d", 0.4, "model", 2.0, None, 2.5, 20),
                MetricsEntry("d", 0.2, "linear_interpolation", 3.0, 0.3, 3.5, 10),
            ]
        )

    def test_render_table(self):
        table = self._report().render_table()
        lines = table.splitlines()

        assert "20%" in lines[0]
        assert "40%" in lines[0]
        assert lines[1].startswith("Method")
        assert lines[3].startswith("model")
        assert "n/a" in lines[3]
        assert lines[4].startswith("linear_interpolation")
        assert "1.0000" in lines[3]

    def test_get_and_rates(self):
        report = self._report()
        assert report.rates() == [0.2, 0.4]
        assert report.methods() == ["model", "linear_interpolation"]
        assert report.get("linear_interpolation", 0.4) is None
        assert report.get("model", 0.4).n_eval == 20

    def test_invariant_violation(self):
        from stimpute.evaluation import MetricsEntry, MetricsReport
        from stimpute.exceptions import MetricsInvariantError

        with pytest.raises(MetricsInvariantError):
            MetricsReport(entries=[MetricsEntry("d", 0.2, "bad", 2.0, None, 1.0, 5)])

    def test_write_json(self, temp_dir):
        import json

        path = temp_dir / "report.json"
        self._report().write_json(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        assert len(data["results"]) == 3
        assert data["results"][1]["mape"] is None


class TestModelImputer:
    """ModelImputer"""

    def test_fully_observed_without_mask_is_unchanged(self, synthetic_dataset, small_config):
        from stimpute.evaluation import PROVENANCE_ORIGINAL

        imputer = _model_imputer(synthetic_dataset, small_config)
        result = imputer.impute(synthetic_dataset, np.zeros(synthetic_dataset.values.shape))

        np.testing.assert_array_equal(result.values, synthetic_dataset.values)
        assert (result.provenance == PROVENANCE_ORIGINAL).all()

    def test_provenance_and_edge_fallback(self, synthetic_dataset, small_config):
        from stimpute.evaluation import PROVENANCE_FALLBACK, PROVENANCE_IMPUTED, PROVENANCE_ORIGINAL

        mask = np.zeros(synthetic_dataset.values.shape)
        mask[0, 1] = 1
        mask[50, 2] = 1
        mask[199, 0] = 1
        imputer = _model_imputer(synthetic_dataset, small_config)
        result = imputer.impute(synthetic_dataset, mask)

        assert result.provenance[0, 1] == PROVENANCE_FALLBACK
        assert result.provenance[199, 0] == PROVENANCE_FALLBACK
        assert result.provenance[50, 2] == PROVENANCE_IMPUTED
        assert result.provenance[50, 1] == PROVENANCE_ORIGINAL
        assert np.isfinite(result.values).all()
        assert result.values[50, 1] == synthetic_dataset.values[50, 1]
        assert imputer.fallback_manager.fallback_entries == 2

    def test_native_gaps_filled(self, gappy_dataset, tiny_config):
        from stimpute.evaluation import PROVENANCE_IMPUTED

        imputer = _model_imputer(gappy_dataset, tiny_config)
        result = imputer.impute(gappy_dataset, np.zeros((10, 3)))

        assert np.isfinite(result.values).all()
        assert result.provenance[2, 0] == PROVENANCE_IMPUTED
        assert result.provenance[5, 1] == PROVENANCE_IMPUTED

    def test_non_finite_output_raises(self, synthetic_dataset, small_config, monkeypatch):
        from stimpute.exceptions import EXIT_NUMERICAL_ABORT, NumericalError

        imputer = _model_imputer(synthetic_dataset, small_config)
        monkeypatch.setattr(
            imputer.network, "predict", lambda x, m, params: np.full(x.shape[:1] + (x.shape[2],), np.nan)
        )
        mask = np.zeros(synthetic_dataset.values.shape)
        mask[50, 2] = 1

        with pytest.raises(NumericalError) as exc_info:
            imputer.impute(synthetic_dataset, mask)
        assert exc_info.value.exit_code == EXIT_NUMERICAL_ABORT
        assert imputer.fallback_manager.fallback_entries == 0

    @pytest.mark.parametrize("workers", [1, 2])
    def test_non_finite_output_aborts_evaluation(self, synthetic_dataset, small_config, monkeypatch, workers):
        from stimpute.evaluation import BaselineImputer, evaluate
        from stimpute.exceptions import NumericalError

        imputer = _model_imputer(synthetic_dataset, small_config)
        monkeypatch.setattr(
            imputer.network, "predict", lambda x, m, params: np.full(x.shape[:1] + (x.shape[2],), np.nan)
        )

        with pytest.raises(NumericalError):
            evaluate([imputer, BaselineImputer("linear_interpolation")], synthetic_dataset, [0.2], workers=workers)

    def test_node_count_mismatch(self, synthetic_dataset, tiny_config):
        from stimpute.evaluation import ModelImputer
        from stimpute.exceptions import ConfigurationError
        from stimpute.model import ModelParams
        from stimpute.normalizer import Normalizer

        imputer = ModelImputer(tiny_config, ModelParams.initialize(tiny_config), Normalizer(np.zeros(3), np.ones(3)))
        with pytest.raises(ConfigurationError):
            imputer.impute(synthetic_dataset, np.zeros(synthetic_dataset.values.shape))

    def test_model_in_evaluation(self, synthetic_dataset, small_config):
        from stimpute.evaluation import evaluate

        report = evaluate([_model_imputer(synthetic_dataset, small_config)], synthetic_dataset, [0.2])
        entry = report.entries[0]
        assert entry.method == "model"
        assert entry.rmse >= entry.mae > 0


class TestRoundTripCheck:
    """归一化往返检查"""

    def test_passes_for_reasonable_statistics(self, gappy_dataset):
        from stimpute.evaluation import check_normalization_round_trip
        from stimpute.normalizer import Normalizer

        normalizer = Normalizer(np.full(3, 50.0), np.full(3, 5.0))
        check_normalization_round_trip(normalizer, gappy_dataset.values, gappy_dataset.native_mask)

    def test_fails_for_degenerate_statistics(self, gappy_dataset):
        from stimpute.evaluation import check_normalization_round_trip
        from stimpute.exceptions import MetricsInvariantError
        from stimpute.normalizer import Normalizer

        normalizer = Normalizer(np.full(3, 1e12), np.full(3, 1e-6))
        with pytest.raises(MetricsInvariantError):
            check_normalization_round_trip(normalizer, gappy_dataset.values, gappy_dataset.native_mask)

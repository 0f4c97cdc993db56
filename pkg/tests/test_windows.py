"""
窗口样本构造单元测试
"""

import numpy as np
import pytest


def _identity_normalizer(n):
    from stimpute.normalizer import Normalizer

    return Normalizer(np.zeros(n), np.ones(n))


class TestMakeWindows:
    """make_windows"""

    def test_target_column_is_hidden(self, gappy_dataset, tiny_config):
        from stimpute.windows import make_windows

        mask = np.zeros((10, 3))
        mask[4, 0] = 1
        samples = list(make_windows(gappy_dataset, mask, _identity_normalizer(3), tiny_config))

        assert len(samples) == 1
        sample = samples[0]
        assert sample.target_index == 4
        assert sample.x_window.shape == (1, 3, 3)
        assert (sample.x_window[0, :, 1] == 0).all()
        assert (sample.m_window[0, :, 1] == 0).all()
        assert sample.eval_mask_t.tolist() == [1.0, 0.0, 0.0]
        assert sample.x_true_t[0] == pytest.approx(gappy_dataset.values[4, 0])

    def test_hidden_entries_never_leak(self, gappy_dataset, tiny_config):
        """人工隐藏和原始缺失的条目在输入中都是 0，可见性也是 0"""
        from stimpute.windows import make_windows

        mask = np.zeros((10, 3))
        mask[3, 2] = 1
        mask[4, 0] = 1
        samples = {s.target_index: s for s in make_windows(gappy_dataset, mask, _identity_normalizer(3), tiny_config)}

        window = samples[4]
        # 窗口覆盖时间步 3, 4, 5
        assert window.x_window[0, 2, 0] == 0.0
        assert window.m_window[0, 2, 0] == 0.0
        assert window.x_window[0, 1, 2] == 0.0
        assert window.m_window[0, 1, 2] == 0.0
        assert window.m_window[0, 0, 0] == 1.0
        assert window.x_window[0, 0, 0] == pytest.approx(gappy_dataset.values[3, 0])
        assert np.isfinite(window.x_window).all()

    def test_train_mode_only_masked_targets(self, gappy_dataset, tiny_config):
        from stimpute.windows import make_windows

        mask = np.zeros((10, 3))
        samples = list(make_windows(gappy_dataset, mask, _identity_normalizer(3), tiny_config))
        assert samples == []

    def test_inference_mode_covers_native_gaps(self, gappy_dataset, tiny_config):
        from stimpute.windows import make_windows

        mask = np.zeros((10, 3))
        samples = list(
            make_windows(gappy_dataset, mask, _identity_normalizer(3), tiny_config, mode="inference")
        )
        assert [s.target_index for s in samples] == [2, 5, 6]
        assert samples[1].target_nodes.tolist() == [0.0, 1.0, 0.0]
        assert samples[1].eval_mask_t.sum() == 0

    def test_edge_targets_are_skipped_and_reported(self, gappy_dataset, tiny_config):
        from stimpute.windows import WindowReport, make_windows

        mask = np.zeros((10, 3))
        mask[0, 0] = 1
        mask[9, 1] = 1
        mask[5, 2] = 1
        report = WindowReport()
        samples = list(
            make_windows(gappy_dataset, mask, _identity_normalizer(3), tiny_config, report=report)
        )

        assert [s.target_index for s in samples] == [5]
        assert report.emitted == 1
        assert report.skipped == 2
        assert report.skipped_targets == [0, 9]

    def test_target_range(self, gappy_dataset, tiny_config):
        from stimpute.windows import make_windows

        mask = np.zeros((10, 3))
        mask[3, 0] = 1
        mask[7, 0] = 1
        samples = list(
            make_windows(gappy_dataset, mask, _identity_normalizer(3), tiny_config, target_range=(5, 10))
        )
        assert [s.target_index for s in samples] == [7]

    def test_normalization_applied(self, gappy_dataset, tiny_config):
        from stimpute.normalizer import Normalizer
        from stimpute.windows import make_windows

        normalizer = Normalizer(np.full(3, 50.0), np.full(3, 5.0))
        mask = np.zeros((10, 3))
        mask[4, 2] = 1
        sample = next(make_windows(gappy_dataset, mask, normalizer, tiny_config))

        expected = (gappy_dataset.values[3, 2] - 50.0) / 5.0
        assert sample.x_window[0, 2, 0] == pytest.approx(expected)
        assert sample.x_true_t[2] == pytest.approx((gappy_dataset.values[4, 2] - 50.0) / 5.0)

    def test_rejects_node_mismatch(self, gappy_dataset):
        from stimpute.exceptions import ConfigurationError
        from stimpute.model import ModelConfig
        from stimpute.windows import make_windows

        with pytest.raises(ConfigurationError):
            list(make_windows(gappy_dataset, np.zeros((10, 3)), _identity_normalizer(3), ModelConfig.tiny(4)))

    def test_rejects_unknown_mode(self, gappy_dataset, tiny_config):
        from stimpute.exceptions import ConfigurationError
        from stimpute.windows import make_windows

        with pytest.raises(ConfigurationError):
            list(make_windows(gappy_dataset, np.zeros((10, 3)), _identity_normalizer(3), tiny_config, mode="test"))


class TestBatches:
    """批次切分"""

    def test_iter_batches(self, synthetic_dataset, small_config):
        from stimpute.masking import MaskSpec, generate_mask
        from stimpute.windows import iter_batches, make_windows

        mask = generate_mask(synthetic_dataset, MaskSpec(missing_rate=0.5, seed=0))
        samples = list(make_windows(synthetic_dataset, mask, _identity_normalizer(4), small_config))
        batches = list(iter_batches(samples, 16))

        assert sum(len(b) for b in batches) == len(samples)
        assert batches[0].x.shape == (16, 1, 4, 5)
        assert batches[0].x_true.shape == (16, 4)

    def test_shuffle_is_seeded(self, synthetic_dataset, small_config):
        from stimpute.masking import MaskSpec, generate_mask
        from stimpute.windows import iter_batches, make_windows

        mask = generate_mask(synthetic_dataset, MaskSpec(missing_rate=0.5, seed=0))
        samples = list(make_windows(synthetic_dataset, mask, _identity_normalizer(4), small_config))

        def order(seed):
            rng = np.random.Generator(np.random.PCG64(seed))
            return np.concatenate([b.target_indices for b in iter_batches(samples, 8, rng)])

        np.testing.assert_array_equal(order(1), order(1))
        assert sorted(order(1).tolist()) == sorted(s.target_index for s in samples)


class TestLeakFreedom:
    """被隐藏位置上的哨兵值不影响模型输入与输出"""

    @pytest.mark.parametrize("sentinel", [1e6, -3.5e8, np.inf])
    def test_sentinel_does_not_change_output(self, synthetic_dataset, small_config, sentinel):
        from stimpute.dataset import STDataset
        from stimpute.masking import MaskSpec, generate_mask
        from stimpute.model import ImputationNetwork
        from stimpute.normalizer import Normalizer
        from stimpute.windows import iter_batches, make_windows

        mask = generate_mask(synthetic_dataset, MaskSpec(missing_rate=0.3, seed=2))
        normalizer = Normalizer(synthetic_dataset.values.mean(axis=0), synthetic_dataset.values.std(axis=0))

        def poisoned(value):
            values = np.where(mask == 1, value, synthetic_dataset.values)
            return STDataset(values=values, native_mask=synthetic_dataset.native_mask, sensor_ids=synthetic_dataset.sensor_ids)

        network = ImputationNetwork(small_config)
        params = network.init_params(1)
        outputs = []
        for value in (0.0, sentinel):
            samples = list(make_windows(poisoned(value), mask, normalizer, small_config, target_range=(0, 60)))
            batch = next(iter_batches(samples, len(samples)))
            outputs.append((batch.x, network.predict(batch.x, batch.m, params)))

        np.testing.assert_array_equal(outputs[0][0], outputs[1][0])
        np.testing.assert_array_equal(outputs[0][1], outputs[1][1])

"""
合成数据生成单元测试
"""

import json

import numpy as np
import pytest


class TestGenerateSynthetic:
    """generate_synthetic"""

    def test_deterministic(self):
        from stimpute.synthetic import generate_synthetic

        a = generate_synthetic(5, 50, seed=1)
        b = generate_synthetic(5, 50, seed=1)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.metadata["digest"] == b.metadata["digest"]

    def test_seed_changes_output(self):
        from stimpute.synthetic import generate_synthetic

        a = generate_synthetic(5, 50, seed=1)
        b = generate_synthetic(5, 50, seed=2)
        assert not np.array_equal(a.values, b.values)

    def test_shape_and_metadata(self):
        from stimpute.synthetic import generate_synthetic

        dataset = generate_synthetic(3, 20, seed=0)
        assert dataset.values.shape == (20, 3)
        assert dataset.native_mask.all()
        assert dataset.sensor_ids == ["s000", "s001", "s002"]
        assert dataset.timestamps[1] == "2024-01-01 00:05:00"
        assert dataset.metadata["n_nodes"] == 3

    @pytest.mark.parametrize("nodes", [0, 1])
    def test_needs_two_nodes(self, nodes):
        from stimpute.exceptions import ArgumentError
        from stimpute.synthetic import generate_synthetic

        with pytest.raises(ArgumentError):
            generate_synthetic(nodes, 10, seed=0)

    def test_single_step_is_initial_state(self):
        from stimpute.synthetic import generate_synthetic

        state = np.array([1.0, 2.0, 3.0])
        dataset = generate_synthetic(3, 1, seed=0, initial_state=state)
        np.testing.assert_array_equal(dataset.values[0], state)

    def test_noise_free_dynamics(self):
        """无噪声时第一步只有扩散项和相位为 0 的季节项"""
        from stimpute.synthetic import generate_synthetic

        state = np.array([0.0, 1.0, 0.0, 0.0])
        dataset = generate_synthetic(4, 2, seed=0, beta=0.1, amplitude=0.0, noise_std=0.0, initial_state=state)
        np.testing.assert_allclose(dataset.values[1], [0.1, 0.8, 0.1, 0.0])

    def test_neighbors_more_correlated_than_far_nodes(self):
        from stimpute.synthetic import generate_synthetic, neighbor_correlations

        dataset = generate_synthetic(8, 2000, seed=4)
        corr = neighbor_correlations(dataset.values)
        assert corr["neighbor"] > corr["far"]


class TestWriteSynthetic:
    """写出 CSV 与元数据"""

    def test_files_written(self, temp_dir):
        from stimpute.dataset import load_matrix_csv
        from stimpute.synthetic import CSV_NAME, META_NAME, generate_synthetic, write_synthetic

        dataset = generate_synthetic(3, 12, seed=2)
        csv_path, meta_path = write_synthetic(dataset, temp_dir / "out")

        assert csv_path.name == CSV_NAME
        assert meta_path.name == META_NAME
        reloaded = load_matrix_csv(csv_path)
        np.testing.assert_allclose(reloaded.values, dataset.values)
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        assert meta["seed"] == 2
        assert meta["generator"] == "ring_diffusion"

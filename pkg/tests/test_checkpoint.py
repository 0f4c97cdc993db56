"""
checkpoint 读写单元测试
"""

import numpy as np
import pytest


@pytest.fixture
def checkpoint(tiny_config):
    from stimpute.checkpoint import Checkpoint
    from stimpute.model import ModelParams
    from stimpute.normalizer import Normalizer

    return Checkpoint(
        config=tiny_config,
        params=ModelParams.initialize(tiny_config, seed=4),
        normalizer=Normalizer(np.array([1.0, 2.0, 3.0]), np.array([0.5, 1.0, 2.0])),
        train_step=17,
        metadata={"dataset": "unit"},
    )


class TestCheckpoint:
    """保存与加载"""

    def test_round_trip(self, checkpoint, temp_dir):
        from stimpute.checkpoint import load_checkpoint, save_checkpoint

        path = save_checkpoint(checkpoint, temp_dir / "model.bin")
        loaded = load_checkpoint(path)

        assert loaded.config == checkpoint.config
        assert loaded.train_step == 17
        assert loaded.metadata == {"dataset": "unit"}
        assert loaded.fingerprint == checkpoint.fingerprint
        np.testing.assert_array_equal(loaded.normalizer.std, checkpoint.normalizer.std)
        for name in checkpoint.params:
            np.testing.assert_array_equal(loaded.params[name].data, checkpoint.params[name].data)

    def test_file_starts_with_magic(self, checkpoint, temp_dir):
        from stimpute.checkpoint import MAGIC, save_checkpoint

        path = save_checkpoint(checkpoint, temp_dir / "model.bin")
        assert path.read_bytes()[:8] == MAGIC

    def test_bad_magic(self, checkpoint, temp_dir):
        from stimpute.checkpoint import load_checkpoint, save_checkpoint
        from stimpute.exceptions import CheckpointFormatError

        path = save_checkpoint(checkpoint, temp_dir / "model.bin")
        blob = bytearray(path.read_bytes())
        blob[0:8] = b"NOTACKPT"
        path.write_bytes(bytes(blob))

        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)

    def test_truncated_payload(self, checkpoint, temp_dir):
        from stimpute.checkpoint import load_checkpoint, save_checkpoint
        from stimpute.exceptions import CheckpointFormatError

        path = save_checkpoint(checkpoint, temp_dir / "model.bin")
        path.write_bytes(path.read_bytes()[:-8])

        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)

    def test_trailing_bytes(self, checkpoint, temp_dir):
        from stimpute.checkpoint import load_checkpoint, save_checkpoint
        from stimpute.exceptions import CheckpointFormatError

        path = save_checkpoint(checkpoint, temp_dir / "model.bin")
        path.write_bytes(path.read_bytes() + b"\x00")

        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)

    def test_header_length_past_end(self, temp_dir):
        import struct

        from stimpute.checkpoint import MAGIC, load_checkpoint
        from stimpute.exceptions import CheckpointFormatError

        path = temp_dir / "short.bin"
        path.write_bytes(MAGIC + struct.pack("<Q", 1000) + b"{}")

        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)

    def test_missing_file(self, temp_dir):
        from stimpute.checkpoint import load_checkpoint
        from stimpute.exceptions import CheckpointFormatError

        with pytest.raises(CheckpointFormatError):
            load_checkpoint(temp_dir / "absent.bin")

    def test_node_count_mismatch(self, checkpoint, temp_dir):
        from stimpute.checkpoint import load_checkpoint, save_checkpoint
        from stimpute.exceptions import ConfigurationError

        path = save_checkpoint(checkpoint, temp_dir / "model.bin")
        with pytest.raises(ConfigurationError) as exc_info:
            load_checkpoint(path, expected_num_nodes=5)
        assert exc_info.value.invariant == "num_nodes"

    def test_loaded_params_give_same_output(self, checkpoint, temp_dir):
        from stimpute.checkpoint import load_checkpoint, save_checkpoint
        from stimpute.model import ImputationNetwork

        path = save_checkpoint(checkpoint, temp_dir / "model.bin")
        loaded = load_checkpoint(path)
        network = ImputationNetwork(checkpoint.config)
        x = np.random.Generator(np.random.PCG64(0)).normal(size=(2, 1, 3, 3))
        m = np.ones_like(x)

        np.testing.assert_array_equal(
            network.predict(x, m, loaded.params), network.predict(x, m, checkpoint.params)
        )


def _rewrite_header(path, edit):
    """按 edit(header) 的返回值替换 JSON 头，参数数据保持不变"""
    import json
    import struct

    from stimpute.checkpoint import MAGIC

    blob = path.read_bytes()
    (length,) = struct.unpack_from("<Q", blob, len(MAGIC))
    start = len(MAGIC) + 8
    header = json.loads(blob[start : start + length].decode("utf-8"))
    new_header = json.dumps(edit(header)).encode("utf-8")
    path.write_bytes(MAGIC + struct.pack("<Q", len(new_header)) + new_header + blob[start + length :])


class TestCorruptHeader:
    """头部结构错误一律报告为 CheckpointFormatError"""

    @pytest.mark.parametrize(
        "edit",
        [
            lambda h: {**h, "parameters": 5},
            lambda h: {**h, "parameters": [{"name": "input_proj"}]},
            lambda h: {**h, "normalizer": {}},
            lambda h: {**h, "normalizer": {"mean": [0.0], "std": [1.0]}},
            lambda h: {**h, "normalizer": {"mean": [0.0, 0.0, 0.0], "std": [1.0, 0.0, 1.0]}},
            lambda h: {**h, "model_config": {**h["model_config"], "bogus": 1}},
            lambda h: [h],
        ],
        ids=["parameters_int", "parameter_no_shape", "normalizer_empty", "normalizer_nodes", "normalizer_zero_std", "config_key", "header_list"],
    )
    def test_rejected(self, checkpoint, temp_dir, edit):
        from stimpute.checkpoint import load_checkpoint, save_checkpoint
        from stimpute.exceptions import CheckpointFormatError

        path = save_checkpoint(checkpoint, temp_dir / "model.bin")
        _rewrite_header(path, edit)

        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)

    def test_cli_exit_code(self, checkpoint, temp_dir, sample_csv):
        from stimpute.checkpoint import save_checkpoint
        from stimpute.cli import main
        from stimpute.exceptions import EXIT_INVALID_INPUT

        path = save_checkpoint(checkpoint, temp_dir / "model.bin")
        _rewrite_header(path, lambda h: {**h, "normalizer": {}})

        code = main(["impute", "--data", str(sample_csv), "--checkpoint", str(path), "--out", str(temp_dir / "out")])
        assert code == EXIT_INVALID_INPUT

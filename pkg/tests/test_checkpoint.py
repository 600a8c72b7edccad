import struct

import numpy as np
import pytest

from harcnn.checkpoint import (
    CHECKPOINT_MAGIC,
    CheckpointError,
    load_checkpoint,
    load_norm_stats,
    save_checkpoint,
    save_norm_stats,
)
from harcnn.dsp import WelchConfig
from harcnn.features import NormStats
from harcnn.model import DEFAULT_MODEL_SPEC, init_model, predict_batch


def make_norm(seed=0):
    rng = np.random.default_rng(seed)
    return NormStats(
        freq_mean=rng.standard_normal((9, 65)).astype(np.float32),
        freq_std=np.abs(rng.standard_normal((9, 65))).astype(np.float32),
        power_mean=rng.standard_normal((9, 33)).astype(np.float32),
        power_std=np.abs(rng.standard_normal((9, 33))).astype(np.float32),
    )


class TestCheckpointRoundTrip:
    def test_parameters_and_metadata_survive(self, tmp_path):
        params = init_model(seed=12, norm=make_norm())
        path = tmp_path / "model.harmcnn"
        save_checkpoint(path, params, WelchConfig(), epoch=17)
        loaded, welch, meta = load_checkpoint(path)
        for (name_a, arr_a), (name_b, arr_b) in zip(
            params.named_arrays(), loaded.named_arrays()
        ):
            assert name_a == name_b
            assert np.array_equal(arr_a, arr_b)
        assert welch == WelchConfig()
        assert meta["epoch"] == 17
        assert meta["seed"] == 12
        assert meta["stream_order"][0] == "body_acc_x"
        assert loaded.spec == DEFAULT_MODEL_SPEC
        assert loaded.norm.epsilon == params.norm.epsilon
        assert np.array_equal(loaded.norm.freq_mean, params.norm.freq_mean)

    def test_predictions_bit_identical_after_round_trip(self, tmp_path):
        params = init_model(seed=3, norm=make_norm(1))
        path = tmp_path / "model.harmcnn"
        save_checkpoint(path, params, WelchConfig(), epoch=1)
        loaded, _, _ = load_checkpoint(path)
        rng = np.random.default_rng(44)
        freq = rng.standard_normal((100, 9, 65)).astype(np.float32)
        power = rng.standard_normal((100, 9, 33)).astype(np.float32)
        assert np.array_equal(
            predict_batch(params, freq, power), predict_batch(loaded, freq, power)
        )

    def test_save_is_deterministic(self, tmp_path):
        params = init_model(seed=5, norm=make_norm(2))
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        save_checkpoint(a, params, WelchConfig(), epoch=2)
        save_checkpoint(b, params, WelchConfig(), epoch=2)
        assert a.read_bytes() == b.read_bytes()

    def test_model_without_stats_round_trips(self, tmp_path):
        params = init_model(seed=9)
        path = tmp_path / "bare.bin"
        save_checkpoint(path, params, WelchConfig(), epoch=0)
        loaded, _, _ = load_checkpoint(path)
        assert loaded.norm is None


class TestCheckpointErrors:
    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"WHATEVER" + b"\x00" * 20)
        with pytest.raises(CheckpointError, match="bad checkpoint magic"):
            load_checkpoint(path)

    def test_version_mismatch_is_explicit(self, tmp_path):
        params = init_model(seed=1)
        path = tmp_path / "v2.bin"
        save_checkpoint(path, params, WelchConfig(), epoch=0)
        data = bytearray(path.read_bytes())
        data[8:10] = struct.pack("<H", 2)
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="unsupported checkpoint format version 2"):
            load_checkpoint(path)

    def test_missing_record_named(self, tmp_path):
        params = init_model(seed=1)
        path = tmp_path / "cut.bin"
        save_checkpoint(path, params, WelchConfig(), epoch=0)
        # Drop the trailing record (fusion.b) by truncating its payload.
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - (4 + 8 + 4 + 4 + 4 * 6)])
        with pytest.raises(CheckpointError, match="missing tensor record 'fusion.b'"):
            load_checkpoint(path)

    def test_interrupted_write_leaves_no_file(self, tmp_path, monkeypatch):
        import harcnn.binio as binio

        params = init_model(seed=1)
        path = tmp_path / "atomic.bin"

        def boom(*args, **kwargs):
            raise OSError("disk full")

        monkeypatch.setattr(binio.os, "replace", boom)
        with pytest.raises(OSError):
            save_checkpoint(path, params, WelchConfig(), epoch=0)
        assert not path.exists()
        assert list(tmp_path.iterdir()) == []


class TestNormSidecar:
    def test_round_trip(self, tmp_path):
        norm = make_norm(7)
        path = tmp_path / "stats.bin"
        save_norm_stats(path, norm)
        loaded = load_norm_stats(path)
        assert np.array_equal(loaded.freq_mean, norm.freq_mean)
        assert np.array_equal(loaded.power_std, norm.power_std)
        assert loaded.epsilon == norm.epsilon

    def test_checkpoint_magic_is_not_a_sidecar(self, tmp_path):
        params = init_model(seed=2, norm=make_norm())
        path = tmp_path / "model.bin"
        save_checkpoint(path, params, WelchConfig(), epoch=0)
        with pytest.raises(CheckpointError, match="bad stats sidecar magic"):
            load_norm_stats(path)
        assert path.read_bytes()[:8] == CHECKPOINT_MAGIC

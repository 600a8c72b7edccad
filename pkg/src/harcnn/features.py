"""Two-channel feature extraction and train-set normalization.

Every inertial window becomes a frequency matrix (per-stream one-sided
FFT magnitudes, 9x65) and a power matrix (per-stream Welch PSD values,
9x33 under the default config). The two matrices stay separate: they
feed separate CNN channels and their bin counts differ.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .binio import FormatError, atomic_write_bytes
from .dataset import N_STREAMS, SAMPLE_RATE_HZ, WINDOW_LEN, SplitManifest
from .dsp import WelchConfig, fft_real, magnitude_onesided, welch_psd

DEFAULT_WELCH = WelchConfig(segment_len=64, overlap=32, window_kind="hamming")
FREQ_BINS = WINDOW_LEN // 2 + 1  # 65
DEFAULT_EPSILON = 1e-8

CACHE_MAGIC = b"HARFEAT1"
NORM_MAGIC = b"HARNORM1"


@dataclass
class FeatureTensor:
    """Per-sample feature pair: freq (9 x N/2+1) and power (9 x O/2+1) matrices."""

    freq: np.ndarray
    power: np.ndarray


@dataclass
class NormStats:
    """Per-position z-score statistics fitted on the training split.

    Arrays are float32 so checkpointed stats reproduce in-memory ones
    bit-for-bit; the normalization math itself runs in float64.
    """

    freq_mean: np.ndarray
    freq_std: np.ndarray
    power_mean: np.ndarray
    power_std: np.ndarray
    epsilon: float = DEFAULT_EPSILON


@dataclass
class FeatureSet:
    """Stacked features of one split: freq (n,9,F), power (n,9,P), labels (n,) in 1..6."""

    freq: np.ndarray
    power: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.freq.shape[0]


def extract_features(window: np.ndarray, cfg: WelchConfig = DEFAULT_WELCH) -> FeatureTensor:
    """Feature tensor of one 9x128 window (float64 matrices)."""
    streams = np.asarray(window, dtype=np.float64)
    if streams.shape != (N_STREAMS, WINDOW_LEN):
        raise ValueError(f"window shape must be {(N_STREAMS, WINDOW_LEN)}, got {streams.shape}")
    freq = magnitude_onesided(fft_real(streams))
    power = welch_psd(streams, cfg, SAMPLE_RATE_HZ).values
    return FeatureTensor(freq=freq, power=power)


def extract_features_batch(
    windows: np.ndarray, cfg: WelchConfig = DEFAULT_WELCH
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized extraction over (n, 9, 128) windows; returns (freq, power) stacks."""
    w = np.asarray(windows, dtype=np.float64)
    if w.ndim != 3 or w.shape[1:] != (N_STREAMS, WINDOW_LEN):
        raise ValueError(f"windows shape must be (n, {N_STREAMS}, {WINDOW_LEN}), got {w.shape}")
    freq = magnitude_onesided(fft_real(w))
    power = welch_psd(w, cfg, SAMPLE_RATE_HZ).values
    return freq, power


def extract_split(manifest: SplitManifest, cfg: WelchConfig = DEFAULT_WELCH) -> FeatureSet:
    """Feature set of a whole split, labels carried through."""
    freq, power = extract_features_batch(manifest.windows, cfg)
    return FeatureSet(freq=freq, power=power, labels=manifest.labels.copy())


def fit_normalizer(
    tensors: Iterable[FeatureTensor] | Sequence[FeatureTensor],
    epsilon: float = DEFAULT_EPSILON,
) -> NormStats:
    """Per-position mean and population std across a sequence of tensors."""
    tensors = list(tensors)
    if not tensors:
        raise ValueError("cannot fit a normalizer on an empty sequence")
    freq = np.stack([t.freq for t in tensors])
    power = np.stack([t.power for t in tensors])
    return fit_normalizer_arrays(freq, power, epsilon)


def fit_normalizer_arrays(
    freq: np.ndarray, power: np.ndarray, epsilon: float = DEFAULT_EPSILON
) -> NormStats:
    """Stacked-array variant of fit_normalizer."""
    if freq.shape[0] == 0:
        raise ValueError("cannot fit a normalizer on an empty sequence")
    freq = np.asarray(freq, dtype=np.float64)
    power = np.asarray(power, dtype=np.float64)
    return NormStats(
        freq_mean=freq.mean(axis=0).astype(np.float32),
        freq_std=freq.std(axis=0).astype(np.float32),
        power_mean=power.mean(axis=0).astype(np.float32),
        power_std=power.std(axis=0).astype(np.float32),
        epsilon=float(epsilon),
    )


def apply_normalizer(tensor: FeatureTensor, stats: NormStats) -> FeatureTensor:
    """Elementwise (x - mean) / (std + epsilon) in float64."""
    freq = np.asarray(tensor.freq, dtype=np.float64)
    power = np.asarray(tensor.power, dtype=np.float64)
    if freq.shape[-2:] != stats.freq_mean.shape or power.shape[-2:] != stats.power_mean.shape:
        raise ValueError(
            f"feature shapes {freq.shape[-2:]}/{power.shape[-2:]} do not match stats "
            f"{stats.freq_mean.shape}/{stats.power_mean.shape}"
        )
    eps = stats.epsilon
    return FeatureTensor(
        freq=(freq - stats.freq_mean.astype(np.float64)) / (stats.freq_std.astype(np.float64) + eps),
        power=(power - stats.power_mean.astype(np.float64)) / (stats.power_std.astype(np.float64) + eps),
    )


def normalize_set(features: FeatureSet, stats: NormStats) -> FeatureSet:
    """Normalized copy of a whole feature set."""
    out = apply_normalizer(FeatureTensor(freq=features.freq, power=features.power), stats)
    return FeatureSet(freq=out.freq, power=out.power, labels=features.labels.copy())


def _record_dtype(freq_bins: int, power_bins: int) -> np.dtype:
    return np.dtype(
        [
            ("label", "u1"),
            ("freq", "<f4", (N_STREAMS, freq_bins)),
            ("power", "<f4", (N_STREAMS, power_bins)),
        ]
    )


def write_feature_cache(path: str | Path, features: FeatureSet) -> None:
    """Serialize a feature set to the binary cache format (atomic write).

    Layout: magic, u32 sample count, u32 freq bins, u32 power bins, then per
    sample a u8 class id followed by the freq and power matrices as
    little-endian float32, row-major.
    """
    n = len(features)
    records = np.empty(n, dtype=_record_dtype(features.freq.shape[-1], features.power.shape[-1]))
    records["label"] = features.labels
    records["freq"] = features.freq
    records["power"] = features.power
    header = CACHE_MAGIC + struct.pack(
        "<III", n, features.freq.shape[-1], features.power.shape[-1]
    )
    atomic_write_bytes(path, header + records.tobytes())


def read_feature_cache(path: str | Path) -> FeatureSet:
    """Read a feature cache back; values come out float32 exactly as stored."""
    data = Path(path).read_bytes()
    if data[:8] != CACHE_MAGIC:
        raise FormatError(f"{path}: bad feature cache magic {data[:8]!r}")
    if len(data) < 20:
        raise FormatError(f"{path}: truncated feature cache header")
    n, freq_bins, power_bins = struct.unpack("<III", data[8:20])
    dtype = _record_dtype(freq_bins, power_bins)
    expected = 20 + n * dtype.itemsize
    if len(data) != expected:
        raise FormatError(f"{path}: cache size {len(data)} != expected {expected}")
    records = np.frombuffer(data, dtype=dtype, count=n, offset=20)
    return FeatureSet(
        freq=records["freq"].copy(),
        power=records["power"].copy(),
        labels=records["label"].astype(np.int64),
    )

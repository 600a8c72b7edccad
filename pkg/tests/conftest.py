"""Shared fixtures: synthetic datasets in the UCI directory layout.

Synthetic windows carry class-dependent spectral signatures (distinct
dominant bins per activity) so learnability and pipeline tests have
structure to find; they never stand in for the published dataset's
numbers.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from harcnn.dataset import Activity, N_STREAMS, STREAM_NAMES, WINDOW_LEN

# Dominant frequency bin and amplitude profile per class.
_CLASS_BINS = {
    Activity.WALKING: 3,
    Activity.WALKING_UPSTAIRS: 7,
    Activity.WALKING_DOWNSTAIRS: 11,
    Activity.SITTING: 17,
    Activity.STANDING: 23,
    Activity.LAYING: 29,
}


def make_class_window(rng, activity):
    """One synthetic 9x128 window with a per-class spectral signature."""
    t = np.arange(WINDOW_LEN)
    f = _CLASS_BINS[activity]
    window = np.empty((N_STREAMS, WINDOW_LEN))
    for s in range(N_STREAMS):
        amp = 0.5 + 0.1 * s + 0.05 * activity.value
        phase = rng.uniform(0, 2 * np.pi)
        window[s] = (
            amp * np.sin(2 * np.pi * f * t / WINDOW_LEN + phase)
            + 0.2 * np.sin(2 * np.pi * (2 * f % 60 + 1) * t / WINDOW_LEN + phase / 2)
            + 0.15 * rng.standard_normal(WINDOW_LEN)
        )
    return window


def make_split_arrays(rng, counts):
    """Interleaved windows/labels/subjects for the given per-class counts."""
    order = []
    for activity, n in counts.items():
        order.extend([activity] * n)
    rng.shuffle(order)
    windows = np.stack([make_class_window(rng, a) for a in order])
    labels = np.array([a.value for a in order], dtype=np.int64)
    subjects = (np.arange(len(order)) % 30 + 1).astype(np.int64)
    return windows, labels, subjects


def write_uci_split(root, split, windows, labels, subjects):
    """Write arrays as UCI-layout text files under root/split/."""
    base = Path(root) / split
    signals = base / "Inertial Signals"
    signals.mkdir(parents=True, exist_ok=True)
    for s, stream in enumerate(STREAM_NAMES):
        path = signals / f"{stream}_{split}.txt"
        with open(path, "w") as f:
            for row in windows[:, s, :]:
                f.write(" ".join(f"{v:.17e}" for v in row) + "\n")
    with open(base / f"y_{split}.txt", "w") as f:
        f.writelines(f"{v}\n" for v in labels)
    with open(base / f"subject_{split}.txt", "w") as f:
        f.writelines(f"{v}\n" for v in subjects)


def build_synthetic_dataset(root, train_per_class=8, test_per_class=4, seed=1234):
    rng = np.random.default_rng(seed)
    train_counts = {a: train_per_class for a in Activity}
    test_counts = {a: test_per_class for a in Activity}
    write_uci_split(root, "train", *make_split_arrays(rng, train_counts))
    write_uci_split(root, "test", *make_split_arrays(rng, test_counts))
    return root


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("uci_synth")
    return build_synthetic_dataset(root)


def real_dataset_root():
    """Path to the published dataset if present, else None.

    Looked up via $HARCNN_DATASET, then ./data/UCI HAR Dataset.
    """
    env = os.environ.get("HARCNN_DATASET")
    candidates = [env] if env else []
    candidates.append("data/UCI HAR Dataset")
    for cand in candidates:
        if cand and (Path(cand) / "train" / "Inertial Signals").is_dir():
            return Path(cand)
    return None


requires_real_dataset = pytest.mark.skipif(
    real_dataset_root() is None,
    reason="published UCI HAR dataset not found (set HARCNN_DATASET or place it at "
    "data/UCI HAR Dataset)",
)

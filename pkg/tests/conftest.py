import os
from pathlib import Path

import numpy as np
import pytest

from fairmetric.core import LabeledDataset, RatingScale


def random_spd(rng, d, jitter=0.3):
    a = rng.normal(size=(d, d))
    return a @ a.T + jitter * np.eye(d)


def make_dataset(rng, n, d, scale=(1, 5), tag="test"):
    labels = rng.integers(scale[0], scale[1] + 1, size=n)
    return LabeledDataset(
        features=rng.normal(size=(n, d)),
        labels=labels,
        scale=RatingScale(*scale),
        feature_names=tuple(f"f{i}" for i in range(d)),
        source_tag=tag,
    )


def toy(features, labels, scale=(1, 10)):
    features = np.asarray(features, dtype=float)
    return LabeledDataset(
        features=features,
        labels=np.asarray(labels),
        scale=RatingScale(*scale),
        feature_names=tuple(f"f{i}" for i in range(features.shape[1])),
    )


def _data_dir() -> Path | None:
    env = os.environ.get("FAIRMETRIC_DATA")
    candidates = [Path(env)] if env else []
    candidates.append(Path(__file__).resolve().parent.parent / "data")
    for cand in candidates:
        if cand.is_dir():
            return cand
    return None


@pytest.fixture(scope="session")
def published_survey():
    root = _data_dir()
    if root is None or not (root / "survey.csv").exists():
        pytest.skip("published survey data not supplied (set FAIRMETRIC_DATA or ./data)")
    return root / "survey.csv"


@pytest.fixture(scope="session")
def published_defendants():
    root = _data_dir()
    if root is None or not (root / "defendants.csv").exists():
        pytest.skip("published defendant data not supplied (set FAIRMETRIC_DATA or ./data)")
    return root / "defendants.csv", (root / "schema.txt" if (root / "schema.txt").exists() else None)

import numpy as np
import pytest

from camo_bench.dataset import AttributeSet, Dataset, FrameAnnotation, Sequence
from camo_bench.harness.fixtures import synthetic_dataset


def make_sequence(name, boxes, *, absent=None, attrs=("BC",), width=640.0, height=480.0, category="fish"):
    absent = absent or [False] * len(boxes)
    frames = []
    for box, gone in zip(boxes, absent):
        if gone:
            frames.append(FrameAnnotation(None if box is None else FrameAnnotation.present(*box).box, True))
        else:
            frames.append(FrameAnnotation.present(*box))
    return Sequence(name, category, tuple(frames), AttributeSet.from_names(attrs), width, height)


@pytest.fixture
def random_dataset() -> Dataset:
    return synthetic_dataset(n_sequences=10, n_frames=40, seed=123, absent_rate=0.15)


@pytest.fixture
def rng():
    return np.random.default_rng(0)

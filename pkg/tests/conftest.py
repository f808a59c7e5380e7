import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def rand_image(h, w, seed=0, lo=0.1, hi=0.9):
    """Random image away from the sRGB/Lab branch kinks at the dark end."""
    rng = np.random.default_rng(seed)
    return lo + (hi - lo) * rng.random((h, w, 3))


def smooth_image(h, w, seed=0, lo=0.15, hi=0.85):
    """Low-frequency random field: palette clustering behaves like a photo."""
    rng = np.random.default_rng(seed)
    coarse = rng.random((max(2, h // 8), max(2, w // 8), 3))
    from rsf.resample import bilinear_resize

    img = bilinear_resize(coarse, h, w)
    img = (img - img.min()) / max(img.max() - img.min(), 1e-9)
    return lo + (hi - lo) * img


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

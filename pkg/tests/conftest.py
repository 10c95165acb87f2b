"""Shared helpers for deterministic test inputs.

Random instances are drawn from the library's own counter-based generator so
every test is reproducible down to the bit without global seeding.
"""

import numpy as np
import pytest

from curriseg import Image, Mask, ProbMap, Rng


def rand_probs(seed: int, h: int, w: int) -> ProbMap:
    u = Rng(seed).uniforms(h * w).reshape(h, w)
    # keep strictly inside (0,1) so log/ratio terms stay smooth
    return ProbMap(0.02 + 0.96 * u)


def rand_mask(seed: int, h: int, w: int, density: float = 0.4) -> Mask:
    u = Rng(seed).uniforms(h * w).reshape(h, w)
    return Mask((u < density).astype(np.uint8))


def rand_image(seed: int, h: int, w: int) -> Image:
    u = Rng(seed).uniforms(h * w).reshape(h, w)
    return Image(0.05 + 0.9 * u)


@pytest.fixture
def tmp_dir(tmp_path):
    return tmp_path

import numpy as np
import pytest

from layoutforge.layout import Component, ComponentType, Layout
from layoutforge.prng import make_rng


def random_layout(rng: np.random.Generator, max_components: int = 10, min_size: float = 0.03) -> Layout:
    """Uniformly scattered visible components; no structure guarantees."""
    n = int(rng.integers(0, max_components + 1))
    comps = []
    for _ in range(n):
        w = float(rng.uniform(min_size, 0.6))
        h = float(rng.uniform(min_size, 0.6))
        comps.append(
            Component(
                ctype=ComponentType(int(rng.integers(0, 8))),
                cx=float(rng.uniform(0.0, 1.0)),
                cy=float(rng.uniform(0.0, 1.0)),
                w=w,
                h=h,
                color=tuple(float(v) for v in rng.uniform(0, 1, 3)),
                visible=True,
            )
        )
    return Layout(components=tuple(comps))


@pytest.fixture
def rng():
    return make_rng(20240)

import math

import numpy as np
import pytest

from bedflux.synth import Grid, WaveSpec, generate

DT = 120.0


def three_wave_specs():
    """Persistent, decaying and slow-persistent waves on a 256 x 1 x 200 grid."""
    return [
        WaveSpec(0.02, 1.6, 1200.0, phase=0.2),
        WaveSpec(0.015, 0.8, 480.0, decay_rate=math.log(0.98) / DT, phase=1.0),
        WaveSpec(0.03, 6.4, 10800.0, phase=-0.5),
    ]


def three_wave_grid():
    return Grid(nx=256, ny=1, nt=200, dx=0.05, dy=0.05, dt=DT)


@pytest.fixture(scope="session")
def three_wave_field():
    return generate(three_wave_specs(), three_wave_grid(), mean_bed=0.15)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def fine_specs():
    """Slow waves sampled finely in time, so the central-difference oracle error is ~1e-7."""
    return [
        WaveSpec(0.02, 1.3, 10800.0, phase=0.4),
        WaveSpec(0.015, 2.7, 14400.0, decay_rate=-1e-4, phase=1.1),
    ]


def fine_grid(refine=1):
    """10 m transect over a 120 s record; ``refine=2`` halves both dx and dt."""
    return Grid(nx=199 * refine + 1, ny=1, nt=60 * refine + 1, dx=0.05 / refine, dy=0.05, dt=2.0 / refine)

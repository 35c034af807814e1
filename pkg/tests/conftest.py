import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from qlandscape.field import FieldSpec, TimeGrid, generate_initial_field
from qlandscape.qsys import DipoleSpec, build_system, transition_frequency


@pytest.fixture
def rotor5():
    return build_system(5, "rotor", DipoleSpec("dropoff", 1.0, seed=7), (1, 5))


@pytest.fixture
def small_field(rotor5):
    grid = TimeGrid(28.0, 256)
    spec = FieldSpec(
        strength=1.0, omega_max=transition_frequency(rotor5, 1, 5), seed=3
    )
    return generate_initial_field(spec, grid)


def make_system(n, h0_kind, dipole_kind, seed, target=None, drop_off=0.5):
    target = target or (1, min(5, n))
    if dipole_kind == "alpha":
        spec = DipoleSpec("alpha", seed=seed)
    else:
        spec = DipoleSpec("dropoff", drop_off, seed=seed)
    return build_system(n, h0_kind, spec, target)


def make_field(system, n_t=256, strength=1.0, seed=0, omega=None):
    grid = TimeGrid(28.0, n_t)
    if omega is None:
        omega = transition_frequency(system, 1, system.target_state)
    return generate_initial_field(
        FieldSpec(strength=strength, omega_max=omega, seed=seed), grid
    )

"""Control-landscape climbing for state transfer in N-level quantum systems.

The package builds model systems (rotor/oscillator ladders with random dipole
couplings), propagates them under time-discretized control fields, climbs the
transfer-probability landscape with an adaptive gradient flow, and runs the
campaign experiments (yield statistics, trap testing, effort scaling, and
landscape-structure studies) behind a command-line interface.
"""

from .backend import BACKEND_NAME
from .field import (
    ControlField,
    FieldSpec,
    TimeGrid,
    field_distance,
    fluence,
    generate_initial_field,
    refine_grid,
)
from .qsys import (
    DipoleSpec,
    QuantumSystem,
    build_dipole_alpha,
    build_dipole_dropoff,
    build_oscillator_h0,
    build_rotor_h0,
    build_system,
    transition_frequency,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "ControlField",
    "DipoleSpec",
    "FieldSpec",
    "QuantumSystem",
    "TimeGrid",
    "build_dipole_alpha",
    "build_dipole_dropoff",
    "build_oscillator_h0",
    "build_rotor_h0",
    "build_system",
    "field_distance",
    "fluence",
    "generate_initial_field",
    "refine_grid",
    "transition_frequency",
    "__version__",
]

"""Time-discretized control fields: generation, quadrature, refinement, distance.

All time integrals use the left-endpoint Riemann sum on the uniform grid,
consistent with the piecewise-constant convention of the propagator: sample j
governs the interval [t_j, t_{j+1}).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = [
    "TimeGrid",
    "ControlField",
    "FieldSpec",
    "generate_initial_field",
    "fluence",
    "refine_grid",
    "field_distance",
    "gaussian_envelope",
    "dump_field",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of n_points left endpoints on [0, horizon)."""

    horizon: float = 28.0
    n_points: int = 2048

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError(f"need at least 2 grid points, got {self.n_points}")
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_points

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_points) * self.dt

    def refined(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.horizon, self.n_points * factor)


@dataclass(frozen=True)
class ControlField:
    """Real control field sampled at the grid's left endpoints."""

    grid: TimeGrid
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.shape != (self.grid.n_points,):
            raise ValueError(
                f"expected {self.grid.n_points} samples, got shape {samples.shape}"
            )
        if not np.all(np.isfinite(samples)):
            raise ValueError("field samples must be finite")
        samples = samples.copy()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def with_samples(self, samples: np.ndarray) -> "ControlField":
        """New field on the same grid."""
        return ControlField(self.grid, samples)


@dataclass(frozen=True)
class FieldSpec:
    """Recipe for a random multi-frequency initial field.

    ``strength`` is the square root of the target fluence; the raw waveform is
    normalized to unit fluence before scaling, so the generated field has
    fluence ``strength**2`` exactly.
    """

    strength: float = 1.0
    n_components: int = 20
    envelope_beta: float = 0.05
    omega_max: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError("strength must be nonnegative")
        if self.n_components < 1:
            raise ValueError("need at least one frequency component")
        if self.omega_max <= 0:
            raise ValueError("omega_max must be positive")
        if self.envelope_beta < 0:
            raise ValueError("envelope parameter must be nonnegative")


def gaussian_envelope(t: np.ndarray, beta: float, horizon: float) -> np.ndarray:
    """Gaussian window exp(-beta (t - horizon/2)^2) centered on the grid."""
    return np.exp(-beta * (t - 0.5 * horizon) ** 2)


def generate_initial_field(spec: FieldSpec, grid: TimeGrid) -> ControlField:
    """Draw a random sum-of-sines field under a Gaussian envelope.

    Frequencies are uniform on (0, omega_max], phases uniform on [0, 2 pi);
    the frequency block is drawn before the phase block so the stream layout
    is reproducible.  The waveform is normalized to unit fluence and scaled
    by ``spec.strength``.
    """
    rng = np.random.default_rng(spec.seed)
    omegas = spec.omega_max * (1.0 - rng.random(spec.n_components))
    phases = rng.uniform(0.0, 2.0 * np.pi, spec.n_components)
    t = grid.times
    raw = gaussian_envelope(t, spec.envelope_beta, grid.horizon) * np.sin(
        np.outer(t, omegas) + phases
    ).sum(axis=1)
    norm = np.sum(raw * raw) * grid.dt
    if norm == 0.0:
        raise ValueError("degenerate waveform: zero fluence before normalization")
    return ControlField(grid, spec.strength * raw / np.sqrt(norm))


def fluence(field: ControlField) -> float:
    """Time-integrated squared field (left-endpoint Riemann sum)."""
    s = field.samples
    return float(np.sum(s * s) * field.grid.dt)


def field_distance(a: ControlField, b: ControlField) -> float:
    """L2 distance in time between two fields on the same grid."""
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")
    d = a.samples - b.samples
    return float(np.sqrt(np.sum(d * d) * a.grid.dt))


def refine_grid(field: ControlField, factor: int) -> ControlField:
    """Resample on a grid ``factor`` times finer via natural cubic interpolation.

    Original sample positions are reproduced exactly; points beyond the last
    original knot extrapolate the natural spline.
    """
    if factor < 2 or int(factor) != factor:
        raise ValueError(f"refinement factor must be an integer >= 2, got {factor}")
    factor = int(factor)
    fine = field.grid.refined(factor)
    spline = CubicSpline(field.grid.times, field.samples, bc_type="natural")
    values = spline(fine.times)
    values[::factor] = field.samples
    return ControlField(fine, values)


def dump_field(field: ControlField, path) -> None:
    """Write the field as two-column text: time then sample, one pair per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for t, v in zip(field.grid.times, field.samples):
            fh.write(f"{float(t)!r} {float(v)!r}\n")

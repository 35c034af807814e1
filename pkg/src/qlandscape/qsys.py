"""Model quantum systems: diagonal Hamiltonians plus random dipole couplings.

Level labels are 1-based throughout the public API (states ``|1>`` .. ``|N>``),
matching the usual spectroscopic counting; the underlying arrays are 0-indexed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuantumSystem",
    "DipoleSpec",
    "build_rotor_h0",
    "build_oscillator_h0",
    "build_dipole_dropoff",
    "build_dipole_alpha",
    "build_system",
    "transition_frequency",
]


def build_rotor_h0(n_levels: int, gamma: float = 0.25) -> np.ndarray:
    """Rigid-rotor energy ladder ``gamma * j * (j + 1)`` for j = 0..N-1."""
    if n_levels < 2:
        raise ValueError(f"need at least 2 levels, got {n_levels}")
    if gamma <= 0:
        raise ValueError(f"rotor constant must be positive, got {gamma}")
    j = np.arange(n_levels, dtype=np.float64)
    return gamma * j * (j + 1.0)


def build_oscillator_h0(
    n_levels: int, omega: float = 5.0, dissoc: float = 1200.0
) -> np.ndarray:
    """Anharmonic-oscillator ladder ``omega*(j+1/2) - omega^2/dissoc*(j+1/2)^2``.

    The quadratic correction turns the ladder over at ``j + 1/2 = dissoc/(2*omega)``;
    requesting levels past the turnover is rejected because the spectrum would stop
    ascending (an unphysical bound-state count).
    """
    if n_levels < 2:
        raise ValueError(f"need at least 2 levels, got {n_levels}")
    if omega <= 0 or dissoc <= 0:
        raise ValueError("omega and dissoc must be positive")
    n_bound = math.floor(dissoc / (2.0 * omega))
    if n_levels > n_bound:
        raise ValueError(
            f"only {n_bound} ascending levels available for "
            f"omega={omega}, dissoc={dissoc}; requested {n_levels}"
        )
    x = np.arange(n_levels, dtype=np.float64) + 0.5
    energies = omega * x - (omega * omega / dissoc) * x * x
    if np.any(np.diff(energies) <= 0):
        raise ValueError("oscillator levels are not strictly ascending")
    return energies


def _random_signs(rng: np.random.Generator, n_levels: int) -> np.ndarray:
    """Symmetric +-1 matrix; one draw per upper-triangle element, row-major."""
    rows, cols = np.triu_indices(n_levels, k=1)
    draws = rng.integers(0, 2, size=rows.size) * 2 - 1
    signs = np.ones((n_levels, n_levels))
    signs[rows, cols] = draws
    signs[cols, rows] = draws
    return signs


def _zero_target_pair(dipole: np.ndarray, target: tuple[int, int]) -> None:
    i, f = target
    n = dipole.shape[0]
    if not (1 <= i <= n and 1 <= f <= n) or i == f:
        raise ValueError(f"invalid target pair {target} for {n} levels")
    dipole[i - 1, f - 1] = 0.0
    dipole[f - 1, i - 1] = 0.0


def build_dipole_dropoff(
    n_levels: int, drop_off: float, target: tuple[int, int], seed: int
) -> np.ndarray:
    """Symmetric dipole with ``|mu_jk| = drop_off**(|j-k|-1)`` off the diagonal.

    Every upper-triangle element gets an independent random sign (mirrored to
    keep the matrix symmetric) and the direct (i, f) coupling is zeroed last.
    Convention ``0**0 == 1`` keeps the first off-diagonal at unity for
    ``drop_off == 0``.
    """
    if n_levels < 2:
        raise ValueError(f"need at least 2 levels, got {n_levels}")
    if not 0.0 <= drop_off <= 1.0:
        raise ValueError(f"drop-off rate must lie in [0, 1], got {drop_off}")
    offsets = np.abs(np.subtract.outer(np.arange(n_levels), np.arange(n_levels)))
    mags = np.zeros((n_levels, n_levels))
    off = offsets >= 1
    mags[off] = float(drop_off) ** (offsets[off] - 1.0)
    rng = np.random.default_rng(seed)
    dipole = mags * _random_signs(rng, n_levels)
    _zero_target_pair(dipole, target)
    return dipole


def build_dipole_alpha(n_levels: int, target: tuple[int, int], seed: int) -> np.ndarray:
    """Banded random dipole: one magnitude per diagonal offset, +-1 per element.

    Offset d draws its magnitude uniformly from ``[0.9 - 0.1 d, 1.1 - 0.1 d]``
    for d <= 9 and from ``[0, 0.1]`` for d >= 10, so coupling decays with level
    distance.  Draw order is fixed: magnitudes for offsets 1..N-1 ascending,
    then element signs over the upper triangle row-major; the (i, f) entry is
    zeroed after the sign draws.
    """
    if n_levels < 2:
        raise ValueError(f"need at least 2 levels, got {n_levels}")
    rng = np.random.default_rng(seed)
    mags_by_offset = np.empty(n_levels)
    mags_by_offset[0] = 0.0
    for d in range(1, n_levels):
        if d <= 9:
            lo, hi = 0.9 - 0.1 * d, 1.1 - 0.1 * d
        else:
            lo, hi = 0.0, 0.1
        mags_by_offset[d] = rng.uniform(lo, hi)
    offsets = np.abs(np.subtract.outer(np.arange(n_levels), np.arange(n_levels)))
    dipole = mags_by_offset[offsets] * _random_signs(rng, n_levels)
    _zero_target_pair(dipole, target)
    return dipole


@dataclass(frozen=True)
class DipoleSpec:
    """Recipe for a random dipole matrix: construction kind plus RNG seed."""

    kind: str  # "dropoff" or "alpha"
    drop_off: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("dropoff", "alpha"):
            raise ValueError(f"unknown dipole kind {self.kind!r}")
        if self.kind == "dropoff":
            if self.drop_off is None or not 0.0 <= self.drop_off <= 1.0:
                raise ValueError(f"drop-off rate must lie in [0, 1], got {self.drop_off}")

    @property
    def label(self) -> str:
        if self.kind == "alpha":
            return "alpha"
        return f"D={self.drop_off:g}"

    def build(self, n_levels: int, target: tuple[int, int]) -> np.ndarray:
        if self.kind == "alpha":
            return build_dipole_alpha(n_levels, target, self.seed)
        return build_dipole_dropoff(n_levels, self.drop_off, target, self.seed)


@dataclass(frozen=True)
class QuantumSystem:
    """N-level system with a nondegenerate diagonal Hamiltonian and symmetric dipole.

    ``initial_state`` and ``target_state`` are 1-based level labels of the
    designated transfer pair; the direct coupling between them must be zero.
    """

    energies: np.ndarray
    dipole: np.ndarray
    initial_state: int
    target_state: int

    def __post_init__(self):
        energies = np.asarray(self.energies, dtype=np.float64)
        dipole = np.asarray(self.dipole, dtype=np.float64)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "dipole", dipole)
        n = energies.size
        if n < 2:
            raise ValueError("need at least 2 levels")
        if dipole.shape != (n, n):
            raise ValueError(f"dipole shape {dipole.shape} does not match {n} levels")
        if np.any(np.diff(energies) <= 0):
            raise ValueError("energies must be strictly ascending")
        if not np.array_equal(dipole, dipole.T):
            raise ValueError("dipole must be exactly symmetric")
        if np.any(np.diag(dipole) != 0.0):
            raise ValueError("dipole diagonal must be zero")
        if np.max(np.abs(dipole)) > 1.0 + 1e-12:
            raise ValueError("dipole magnitudes must not exceed 1")
        i, f = self.initial_state, self.target_state
        if not (1 <= i <= n and 1 <= f <= n) or i == f:
            raise ValueError(f"invalid transfer pair ({i}, {f}) for {n} levels")
        if dipole[i - 1, f - 1] != 0.0:
            raise ValueError("direct coupling of the transfer pair must be zero")
        energies.setflags(write=False)
        dipole.setflags(write=False)

    @property
    def n_levels(self) -> int:
        return self.energies.size

    @property
    def i_index(self) -> int:
        """0-based index of the initial state."""
        return self.initial_state - 1

    @property
    def f_index(self) -> int:
        """0-based index of the target state."""
        return self.target_state - 1


def build_system(
    n_levels: int,
    h0_kind: str,
    dipole_spec: DipoleSpec,
    target: tuple[int, int],
    gamma: float = 0.25,
    omega: float = 5.0,
    dissoc: float = 1200.0,
) -> QuantumSystem:
    """Assemble a QuantumSystem from an H0 kind and a dipole recipe."""
    if h0_kind == "rotor":
        energies = build_rotor_h0(n_levels, gamma)
    elif h0_kind == "oscillator":
        energies = build_oscillator_h0(n_levels, omega, dissoc)
    else:
        raise ValueError(f"unknown h0 kind {h0_kind!r}")
    dipole = dipole_spec.build(n_levels, target)
    return QuantumSystem(energies, dipole, target[0], target[1])


def transition_frequency(system: QuantumSystem, a: int, b: int) -> float:
    """Energy difference E_b - E_a between 1-based levels (hbar = 1)."""
    n = system.n_levels
    if not (1 <= a <= n and 1 <= b <= n):
        raise ValueError(f"level labels must lie in 1..{n}, got ({a}, {b})")
    return float(system.energies[b - 1] - system.energies[a - 1])

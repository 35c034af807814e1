"""Landscape-structure metrics: path ratio, slope, Hessian trace, curvature, spectra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import PropagationCache, hessian, hessian_trace_density
from .field import field_distance, refine_grid

__all__ = [
    "LandscapeMetrics",
    "RatioResult",
    "SpectrumSummary",
    "curvature",
    "hessian_spectrum",
    "hessian_trace",
    "magnitude_gap",
    "ratio_metric",
    "slope_metric",
    "spectrum_summary",
]


@dataclass(frozen=True)
class RatioResult:
    r_eps: float
    path_len: float
    euclid_dist: float
    degenerate: bool = False


def ratio_metric(record) -> RatioResult:
    """Path length over straight-line distance for one climb record.

    Path increments are accumulated on whatever grid each step used; the
    initial field is lifted to the final grid before the chord is measured.
    A zero chord (no net motion) yields a flagged degenerate ratio.
    """
    if len(record.iterates) < 2:
        raise ValueError("ratio metric needs at least two iterates")
    path_len = record.path_length
    start = record.initial_field
    while start.grid.n_points < record.final_field.grid.n_points:
        factor = record.final_field.grid.n_points // start.grid.n_points
        start = refine_grid(start, factor)
    euclid = field_distance(start, record.final_field)
    if euclid == 0.0:
        return RatioResult(float("nan"), path_len, 0.0, degenerate=True)
    return RatioResult(path_len / euclid, path_len, euclid, degenerate=False)


def slope_metric(gradient: np.ndarray, grid) -> float:
    """L2 norm in time of the functional gradient: sqrt(sum g^2 dt)."""
    g = np.asarray(gradient)
    return float(np.sqrt(np.sum(g * g) * grid.dt))


def hessian_trace(cache: PropagationCache) -> float:
    """Time integral of the Hessian diagonal (no full matrix is formed)."""
    return hessian_trace_density(cache)


def curvature(cache: PropagationCache, gradient: np.ndarray) -> float:
    """Hessian projected on the normalized gradient direction.

    Evaluates (1/||g||^2) * sum_jk g_j H_jk g_k dt^2 with streaming prefix and
    suffix contractions, never materializing the Hessian matrix.  Rejects a
    zero gradient, where the projection is undefined.
    """
    g = np.asarray(gradient, dtype=np.float64)
    dt = cache.field.grid.dt
    norm2 = float(np.sum(g * g) * dt)
    if norm2 == 0.0:
        raise ValueError("curvature is undefined at a critical point (zero gradient)")
    indices = np.arange(cache.n_steps)
    beta, kvec = cache.deriv_vectors(indices)
    c = cache.final_amplitude()
    x_amp = np.conj(beta[:, cache.system.i_index])

    gd = g * dt
    sx = np.sum(x_amp * gd)
    gram = 2.0 * np.real(x_amp * np.conj(sx))

    # ordered part: rows j pair with columns k <= j through prefix sums of k_k,
    # and with columns k > j through suffix sums of beta_k.
    prefix_k = np.cumsum(kvec * gd[:, None], axis=0)
    suffix_b = np.cumsum((beta * gd[:, None])[::-1], axis=0)[::-1]
    ordered = np.einsum("ja,ja->j", beta.conj(), prefix_k)
    above = np.empty_like(ordered)
    above[:-1] = np.einsum("ja,ja->j", np.conj(suffix_b[1:]), kvec[:-1])
    above[-1] = 0.0
    v = gram - 2.0 * np.real(np.conj(c) * (ordered + above))
    return float(np.sum(v * gd) / norm2)


def hessian_spectrum(cache: PropagationCache, stride: int = 1, max_points: int = 2048) -> np.ndarray:
    """Eigenvalues (ascending) of the quadrature-scaled Hessian dt_sub * H.

    Scaling by the sample spacing makes the spectrum approximate the integral
    operator's, so magnitudes are grid independent.
    """
    h = hessian(cache, stride=stride, max_points=max_points)
    dt_sub = cache.field.grid.dt * stride
    return np.linalg.eigvalsh(dt_sub * h)


@dataclass(frozen=True)
class SpectrumSummary:
    n_positive: int
    n_negative: int
    tol: float
    bound: int
    within_bound: bool


def spectrum_summary(eigenvalues: np.ndarray, n_levels: int, where: str) -> SpectrumSummary:
    """Count the nonzero eigenvalues against the critical-point bounds.

    "Nonzero" means exceeding tol = 1e-6 * max |eigenvalue|.  At the bottom at
    most 2 positive eigenvalues are expected; at the top at most 2N - 2
    negative ones.
    """
    ev = np.asarray(eigenvalues)
    scale = float(np.max(np.abs(ev))) if ev.size else 0.0
    tol = 1e-6 * scale
    n_pos = int(np.sum(ev > tol))
    n_neg = int(np.sum(ev < -tol))
    if where == "bottom":
        bound = 2
        ok = n_pos <= bound
    elif where == "top":
        bound = 2 * n_levels - 2
        ok = n_neg <= bound
    else:
        raise ValueError(f"where must be 'bottom' or 'top', got {where!r}")
    return SpectrumSummary(n_pos, n_neg, tol, bound, ok)


def magnitude_gap(eigenvalues: np.ndarray, count: int) -> float:
    """Ratio of the count-th largest |eigenvalue| to the next one.

    Separates the expected nonzero block (of size ``count``) from the zero
    tail; infinite when the tail vanishes.
    """
    mags = np.sort(np.abs(np.asarray(eigenvalues)))[::-1]
    if count <= 0 or count >= mags.size:
        raise ValueError(f"count must lie in 1..{mags.size - 1}, got {count}")
    if mags[count] == 0.0:
        return float("inf")
    return float(mags[count - 1] / mags[count])


@dataclass
class LandscapeMetrics:
    """Structure metrics of one climb, as persisted by the campaigns."""

    r_eps: float
    euclid_dist: float
    path_len: float
    s0: float
    smax: float
    trace_bottom: float | None = None
    trace_top: float | None = None
    curvature_bottom: float | None = None
    curvature_top: float | None = None
    spectrum_bottom: np.ndarray | None = None
    spectrum_top: np.ndarray | None = None

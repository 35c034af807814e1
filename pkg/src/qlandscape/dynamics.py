"""Schrodinger propagation and the transfer-probability derivatives.

The control enters as H(t) = H0 - mu * eps(t) with eps piecewise constant on
the field grid, so every step propagator exp(-i dt (H0 - mu eps_j)) is exact
(hbar = 1).  Derivative quantities are exact derivatives of the discrete
objective: gradient entries are (1/dt) dP/d(eps_j) and Hessian entries
(1/dt^2) d2P/d(eps_j)d(eps_k), both functional densities with all dt factors
left to the quadratures.  They reduce to the continuum functional derivatives
as dt -> 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .field import ControlField
from .qsys import QuantumSystem

__all__ = [
    "PropagationCache",
    "HessianSizeError",
    "propagate",
    "transition_probability",
    "gradient",
    "hessian",
    "hessian_diagonal",
    "hessian_trace_density",
]

_BLOCK = 256


class HessianSizeError(ValueError):
    """Raised when a requested Hessian would exceed the configured size cap."""


def _step_eigs(h0, mu, eps_block):
    n = h0.size
    h = (-eps_block[:, None, None]) * mu
    idx = np.arange(n)
    h[:, idx, idx] += h0
    return np.linalg.eigh(h)


def _phase_core(w, dt):
    """Divided-difference core (e^{i theta} - 1)/(i theta), theta_ab = dt (w_a - w_b)."""
    half = 0.5 * dt * (w[:, :, None] - w[:, None, :])
    return np.exp(1j * half) * np.sinc(half / np.pi)


@dataclass
class PropagationCache:
    """Cumulative propagators and step eigensystems for one (system, field) pair.

    ``u_cum[j]`` is U(t_j, 0) for j = 0..n_t with ``u_cum[0]`` the identity;
    ``eigvecs[j]``/``eigvals[j]`` diagonalize the step-j Hamiltonian and supply
    the discrete Heisenberg dipoles on demand.
    """

    system: QuantumSystem
    field: ControlField
    u_cum: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray
    _deriv_vectors: dict = dataclass_field(default_factory=dict, repr=False)

    @property
    def u_final(self) -> np.ndarray:
        return self.u_cum[-1]

    @property
    def n_steps(self) -> int:
        return self.field.grid.n_points

    def unitarity_defect(self) -> float:
        """max_j || U_j^dag U_j - I ||_max over the cumulative propagators."""
        eye = np.eye(self.system.n_levels)
        prods = np.matmul(self.u_cum.conj().transpose(0, 2, 1), self.u_cum)
        return float(np.max(np.abs(prods - eye)))

    def final_amplitude(self) -> complex:
        return complex(self.u_final[self.system.f_index, self.system.i_index])

    def deriv_vectors(self, indices: np.ndarray):
        """Per-step vectors (beta_j, k_j) of the discrete Heisenberg dipoles.

        k_j = M_j |i> and beta_j = M_j U(T,0)^dag |f> in the Schrodinger basis,
        where M_j is the Hermitian discrete Heisenberg dipole of step j.  All
        second-order quantities are bilinear in these.
        """
        key = (int(indices[0]), int(indices[-1]), len(indices))
        if key in self._deriv_vectors:
            return self._deriv_vectors[key]
        dt = self.field.grid.dt
        mu = self.system.dipole
        i0 = self.system.i_index
        f0 = self.system.f_index
        n = self.system.n_levels
        w_back = self.u_final.conj().T[:, f0]
        beta = np.empty((len(indices), n), dtype=np.complex128)
        kvec = np.empty((len(indices), n), dtype=np.complex128)
        for start in range(0, len(indices), _BLOCK):
            sel = indices[start : start + _BLOCK]
            v = self.eigvecs[sel]
            core = _phase_core(self.eigvals[sel], dt)
            mu_t = np.matmul(np.matmul(v.transpose(0, 2, 1), mu), v)
            cmu = core * mu_t
            u = self.u_cum[sel]
            udag = u.conj().transpose(0, 2, 1)
            psi = u[:, :, i0]
            phi = u @ w_back
            # M_j x = U_j^dag V (core o mu_t) V^T U_j x
            kx = np.einsum(
                "jpa,ja->jp", v, np.einsum("jab,jb->ja", cmu, np.einsum("jpa,jp->ja", v, psi))
            )
            bx = np.einsum(
                "jpa,ja->jp", v, np.einsum("jab,jb->ja", cmu, np.einsum("jpa,jp->ja", v, phi))
            )
            kvec[start : start + _BLOCK] = np.einsum("jpq,jq->jp", udag, kx)
            beta[start : start + _BLOCK] = np.einsum("jpq,jq->jp", udag, bx)
        out = (beta, kvec)
        self._deriv_vectors[key] = out
        return out


def propagate(system: QuantumSystem, field: ControlField) -> PropagationCache:
    """Build the cumulative propagators U(t_j, 0) for all grid points."""
    if system.dipole.shape[0] != system.n_levels:
        raise ValueError("dipole dimension mismatch")
    n = system.n_levels
    n_t = field.grid.n_points
    dt = field.grid.dt
    eps = field.samples
    v_all = np.empty((n_t, n, n))
    w_all = np.empty((n_t, n))
    for start in range(0, n_t, _BLOCK):
        stop = min(start + _BLOCK, n_t)
        w_all[start:stop], v_all[start:stop] = _step_eigs(
            system.energies, system.dipole, eps[start:stop]
        )
    u_cum = np.empty((n_t + 1, n, n), dtype=np.complex128)
    u_cum[0] = np.eye(n)
    for j in range(n_t):
        vj = v_all[j]
        step = (vj * np.exp(-1j * dt * w_all[j])) @ vj.T
        u_cum[j + 1] = step @ u_cum[j]
    return PropagationCache(system, field, u_cum, v_all, w_all)


def transition_probability(cache: PropagationCache, i: int | None = None, f: int | None = None) -> float:
    """|<f|U(T,0)|i>|^2 for 1-based levels (defaults: the system's pair)."""
    n = cache.system.n_levels
    i = cache.system.initial_state if i is None else i
    f = cache.system.target_state if f is None else f
    if not (1 <= i <= n and 1 <= f <= n):
        raise ValueError(f"level labels must lie in 1..{n}, got ({i}, {f})")
    amp = cache.u_final[f - 1, i - 1]
    p = float(np.abs(amp) ** 2)
    if not -1e-12 <= p <= 1.0 + 1e-12:
        raise FloatingPointError(f"transition probability {p} outside [0, 1] tolerance")
    return min(max(p, 0.0), 1.0)


def gradient(cache: PropagationCache) -> np.ndarray:
    """Functional-density gradient of P over the field samples.

    Entry j equals (1/dt) dP/d(eps_j); identical arithmetic to the fast
    propagation backend up to floating-point ordering.
    """
    system = cache.system
    dt = cache.field.grid.dt
    n_t = cache.n_steps
    c = cache.final_amplitude()
    w_back = cache.u_final.conj().T[:, system.f_index]
    x_amp = np.empty(n_t, dtype=np.complex128)
    for start in range(0, n_t, _BLOCK):
        stop = min(start + _BLOCK, n_t)
        v = cache.eigvecs[start:stop]
        core = _phase_core(cache.eigvals[start:stop], dt)
        mu_t = np.matmul(np.matmul(v.transpose(0, 2, 1), system.dipole), v)
        u = cache.u_cum[start:stop]
        psi_t = np.einsum("jpa,jp->ja", v, u[:, :, system.i_index])
        chi_t = np.einsum("jpa,jp->ja", v, u @ w_back)
        x_amp[start:stop] = np.einsum("ja,jab,jb->j", chi_t.conj(), core * mu_t, psi_t)
    return 2.0 * np.imag(c * np.conj(x_amp))


def _hessian_blocks(cache: PropagationCache, stride: int, max_points: int):
    if stride < 1 or int(stride) != stride:
        raise ValueError(f"stride must be a positive integer, got {stride}")
    n_sub = (cache.n_steps + stride - 1) // stride
    if n_sub > max_points:
        raise HessianSizeError(
            f"{n_sub}x{n_sub} Hessian exceeds the cap of {max_points} sample points; "
            "increase the stride or raise max_points"
        )
    indices = np.arange(0, cache.n_steps, stride)
    beta, kvec = cache.deriv_vectors(indices)
    c = cache.final_amplitude()
    x_amp = np.conj(beta[:, cache.system.i_index])
    return indices, c, x_amp, beta, kvec


def hessian(cache: PropagationCache, stride: int = 1, max_points: int = 2048) -> np.ndarray:
    """Symmetric matrix of second functional-density derivatives of P.

    Element (j, k) with t_j >= t_k is
    2 Re[X_j conj(X_k) - conj(c) <f|U(T,0) M_j M_k|i>], mirrored to the upper
    triangle; the returned matrix samples every ``stride``-th grid point and
    carries no dt factors (quadratures scale by dt * stride).
    """
    _, c, x_amp, beta, kvec = _hessian_blocks(cache, stride, max_points)
    ordered = 2.0 * np.real(
        np.outer(x_amp, np.conj(x_amp)) - np.conj(c) * (beta.conj() @ kvec.T)
    )
    return np.tril(ordered) + np.tril(ordered, -1).T


def hessian_diagonal(cache: PropagationCache) -> np.ndarray:
    """Diagonal H(t_j, t_j) on the full grid without materializing the matrix."""
    indices = np.arange(cache.n_steps)
    beta, kvec = cache.deriv_vectors(indices)
    c = cache.final_amplitude()
    x_amp = np.conj(beta[:, cache.system.i_index])
    pair = np.einsum("ja,ja->j", beta.conj(), kvec)
    return 2.0 * np.real(np.abs(x_amp) ** 2 - np.conj(c) * pair)


def hessian_trace_density(cache: PropagationCache) -> float:
    """Integral of the Hessian diagonal, sum_j H(t_j, t_j) dt."""
    return float(np.sum(hessian_diagonal(cache)) * cache.field.grid.dt)

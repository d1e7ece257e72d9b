"""Per-mode propagators of the slowly varied dynamics.

``evolve_exact`` integrates ``dU/dt = i T H(t) U``; ``evolve_adiabatic``
adds the adiabatic correction ``-[P(t), P'(t)] U`` so that the flow
intertwines the spectral projectors exactly. Both integrate with an adaptive
embedded Runge-Kutta pair compiled with numba. The closed-form frozen and WKB
propagators, and a fixed-step Magnus integrator, serve as independent
references.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import _kernels
from .exceptions import DomainError, InvariantViolation, StepLimitExceeded, ToleranceNotAchievable
from .profiles import (
    _check_time,
    charge_form,
    dagger,
    dispersion,
    dispersion_derivatives,
    frame_from_frequency,
    generator_from_frequency,
)

_METHODS = {
    "dop853": (_kernels.dop853, _kernels.dop853_batch),
    "dopri5": (_kernels.dopri5, _kernels.dopri5_batch),
}


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances for the adaptive integrator.

    ``max_steps`` is a budget per unit of ``T``: the effective cap is
    ``max_steps * max(1, T)`` because the number of oscillations grows
    linearly with ``T``. ``initial_step = 0`` lets the kernel pick one.
    """

    rel_tol: float = 1e-11
    abs_tol: float = 1e-11
    max_steps: int = 10_000
    initial_step: float = 0.0
    method: str = "dop853"

    def __post_init__(self):
        if not 0 < self.rel_tol <= 1e-3:
            raise InvariantViolation("rel_tol must lie in (0, 1e-3]")
        if self.abs_tol <= 0:
            raise InvariantViolation("abs_tol must be positive")
        if self.max_steps < 1000:
            raise InvariantViolation("max_steps must be at least 1000")
        if self.initial_step < 0:
            raise InvariantViolation("initial_step must be >= 0")
        if self.method not in _METHODS:
            raise InvariantViolation(f"unknown method {self.method!r}; choose from {sorted(_METHODS)}")

    def step_budget(self, T):
        return int(self.max_steps * max(1.0, float(T)))

    def to_dict(self):
        return asdict(self)


DEFAULT_CONFIG = IntegratorConfig()


@dataclass(frozen=True)
class PropagatorResult:
    U: np.ndarray
    pseudo_unitarity_residual: float
    steps_taken: int
    rejected_steps: int
    tolerance_used: float


@dataclass(frozen=True)
class BatchResult:
    """Propagators for a whole array of modes; fields carry a leading mode axis."""

    eps: np.ndarray
    U: np.ndarray
    residuals: np.ndarray
    steps_taken: np.ndarray
    rejected_steps: np.ndarray
    tolerance_used: float


def pseudo_unitarity_residual(U):
    """Operator norm of ``U^* q U - q`` (zero for an exact flow)."""
    q = charge_form()
    return np.linalg.norm(dagger(U) @ q @ U - q, ord=2, axis=(-2, -1))


def _validate(T, t, s):
    if not T >= 1:
        raise DomainError(f"T must be >= 1, got {T!r}")
    _check_time(t)
    _check_time(s)


def _raise_for_status(status, eps, T, t, s, cfg):
    bad = np.flatnonzero(status != _kernels.OK)
    if bad.size == 0:
        return
    j = bad[0]
    where = f"eps={float(np.atleast_1d(eps)[j]):.6g}, T={T}, t={t}, s={s}, rel_tol={cfg.rel_tol}"
    if status[j] == _kernels.STEP_LIMIT:
        raise StepLimitExceeded(f"step budget {cfg.step_budget(T)} exhausted ({where})")
    raise ToleranceNotAchievable(f"step size underflow ({where})")


def evolve_batch(eps, profile, T, t, s, cfg=None, adiabatic=False):
    """Integrate ``U(t, s)`` for every mode in ``eps`` (independently, possibly in parallel)."""
    cfg = cfg or DEFAULT_CONFIG
    _validate(T, t, s)
    eps = np.ascontiguousarray(np.atleast_1d(np.asarray(eps, dtype=float)))
    if np.any(eps <= 0):
        raise DomainError("modes need eps > 0")
    coeffs = np.asarray(profile.coeffs, dtype=float)
    _, batch = _METHODS[cfg.method]
    U, acc, rej, status = batch(
        coeffs,
        eps,
        float(T),
        float(s),
        float(t),
        bool(adiabatic),
        cfg.rel_tol,
        cfg.abs_tol,
        cfg.initial_step,
        cfg.step_budget(T),
    )
    _raise_for_status(status, eps, T, t, s, cfg)
    if t == s:
        acc = np.maximum(acc, 1)
    return BatchResult(eps, U, pseudo_unitarity_residual(U), acc, rej, cfg.rel_tol)


def _single(eps, profile, T, t, s, cfg, adiabatic):
    cfg = cfg or DEFAULT_CONFIG
    _validate(T, t, s)
    if not eps > 0:
        raise DomainError("modes need eps > 0")
    kernel, _ = _METHODS[cfg.method]
    y, acc, rej, status = kernel(
        np.asarray(profile.coeffs, dtype=float),
        float(eps),
        float(T),
        float(s),
        float(t),
        bool(adiabatic),
        cfg.rel_tol,
        cfg.abs_tol,
        cfg.initial_step,
        cfg.step_budget(T),
    )
    _raise_for_status(np.array([status]), eps, T, t, s, cfg)
    U = y.reshape(2, 2).copy()
    return PropagatorResult(U, float(pseudo_unitarity_residual(U)), max(int(acc), 1), int(rej), cfg.rel_tol)


def evolve_exact(eps, profile, T, t, s, cfg=None):
    """Rescaled Cauchy evolution ``U_T(t, s)`` solving ``dU/dt = i T H(t) U``, ``U(s, s) = 1``."""
    return _single(eps, profile, T, t, s, cfg, adiabatic=False)


def evolve_adiabatic(eps, profile, T, t, s, cfg=None):
    """Adiabatic evolution: ``dU/dt = (i T H(t) - [P(t), P'(t)]) U``, ``U(s, s) = 1``.

    It satisfies ``P(t) U(t, s) = U(t, s) P(s)`` exactly for the continuum flow.
    """
    return _single(eps, profile, T, t, s, cfg, adiabatic=True)


def frozen_propagator(eps, profile, T, t0, delta):
    """``exp(i T delta H(t0))`` in closed form (``H(t0)**2 = eps_t0**2``)."""
    e = np.asarray(dispersion(eps, t0, profile))
    phase = e * T * delta
    H = generator_from_frequency(e)
    eye = np.broadcast_to(np.eye(2, dtype=complex), H.shape)
    return np.cos(phase)[..., None, None] * eye + (1j * np.sin(phase) / e)[..., None, None] * H


def magnus_propagator(eps, profile, T, t, s, n_steps, adiabatic=False):
    """Fixed-step fourth-order Magnus approximation of ``U(t, s)``; exactly pseudo-unitary."""
    _validate(T, t, s)
    return _kernels.magnus4(
        np.asarray(profile.coeffs, dtype=float), float(eps), float(T), float(s), float(t), bool(adiabatic), int(n_steps)
    )


# -- WKB -----------------------------------------------------------------


def wkb_symbol(eps, profile, T, t):
    """Approximate Riccati solution ``b_T = eps_t + (i / 2T) d/dt ln eps_t``."""
    e, e1, _ = dispersion_derivatives(eps, t, profile)
    return e + 0.5j / T * (e1 / e)


def riccati_remainder(eps, profile, T, t):
    """Defect ``T**-2 (L'**2 / 4 - L'' / 2)`` left by :func:`wkb_symbol`, with ``L = ln eps_t``."""
    e, e1, e2 = dispersion_derivatives(eps, t, profile)
    dl = e1 / e
    ddl = e2 / e - dl * dl
    return (0.25 * dl * dl - 0.5 * ddl) / T**2


def wkb_phase(eps, profile, t, s, n_quad=64):
    """``integral_s^t eps_sigma d sigma`` by Gauss-Legendre quadrature."""
    if n_quad < 8:
        raise DomainError("n_quad must be at least 8")
    _check_time(t)
    _check_time(s)
    x, w = leggauss(n_quad)
    half = 0.5 * (t - s)
    sigma = 0.5 * (t + s) + half * x
    eps = np.asarray(eps, dtype=float)
    vals = np.sqrt(eps[..., None] ** 2 + np.maximum(profile.m_sq(sigma), 0.0))
    return half * (vals @ w)


def wkb_frame(eps, profile, T, t):
    """Frames built from ``b_T^+ = b_T`` and ``b_T^- = -conj(b_T)``; returns ``(T_T, T_T^-1)``."""
    bp = np.asarray(wkb_symbol(eps, profile, T, t), dtype=complex)
    bm = -np.conj(bp)
    norm = (bp - bm) ** -0.5
    one = np.ones_like(bp)
    fwd = np.stack([np.stack([one, -one], -1), np.stack([bp, -bm], -1)], -2)
    inv = np.stack([np.stack([-bm, one], -1), np.stack([-bp, one], -1)], -2)
    return fwd * norm[..., None, None], inv * norm[..., None, None]


def wkb_propagator(eps, profile, T, t, s, n_quad=64):
    """Factorised approximation ``T_T(t) diag(u+, u-) T_T(s)^-1`` with ``u± = exp(±i T phase)``."""
    fwd_t, _ = wkb_frame(eps, profile, T, t)
    _, inv_s = wkb_frame(eps, profile, T, s)
    phase = T * wkb_phase(eps, profile, t, s, n_quad)
    V = np.zeros(np.shape(phase) + (2, 2), dtype=complex)
    V[..., 0, 0] = np.exp(1j * phase)
    V[..., 1, 1] = np.exp(-1j * phase)
    return fwd_t @ V @ inv_s


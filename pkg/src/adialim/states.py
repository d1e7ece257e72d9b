"""Covariances of quasi-free states, mode by mode.

A gauge-invariant quasi-free state is described by one hermitian form
``lam`` on Cauchy data with ``lam >= 0`` and ``lam - q >= 0`` (the second
covariance is ``lam - q`` and is never stored). All families here are
diagonal in the spectral parameter ``eps``: for each mode the covariance is
a 2x2 hermitian matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import DomainError, InvariantViolation
from .profiles import (
    MassProfile,
    charge_form,
    dagger,
    diag_charge_form,
    dispersion,
    frame,
    japanese,
    projector_from_frequency,
)

POSITIVITY_TOL = 1e-12
# beyond this beta*eps the thermal occupation underflows and coth == 1
_COTH_CUTOFF = 700.0


def is_hermitian(m, atol=1e-12):
    return bool(np.all(np.abs(m - dagger(m)) <= atol * np.maximum(1.0, np.abs(m))))


def state_eigenvalues(lam):
    """Smallest eigenvalues of ``lam`` and of ``lam - q``, per mode."""
    lam = np.asarray(lam)
    herm = 0.5 * (lam + dagger(lam))
    lo = np.linalg.eigvalsh(herm)[..., 0]
    lo_minus = np.linalg.eigvalsh(herm - charge_form())[..., 0]
    return lo, lo_minus


def check_state(lam, tol=POSITIVITY_TOL, what="covariance"):
    """Raise :class:`InvariantViolation` unless ``lam >= 0`` and ``lam - q >= 0`` for every mode."""
    if not is_hermitian(lam):
        raise InvariantViolation(f"{what} is not hermitian")
    lo, lo_minus = state_eigenvalues(lam)
    worst = min(float(np.min(lo)), float(np.min(lo_minus)))
    if worst < -tol:
        raise InvariantViolation(f"{what} violates state positivity (min eigenvalue {worst:.3e})")
    return worst


def coth_half(x):
    """``coth(x / 2)`` written as ``1 + 2 / expm1(x)`` (accurate for small ``x``)."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    live = x <= _COTH_CUTOFF
    out[live] = 1.0 + 2.0 / np.expm1(x[live])
    return out


def _from_diagonal(eps_t, plus, minus):
    """``T^-1(t)^* diag(plus, minus) T^-1(t)`` in closed form."""
    eps_t = np.asarray(eps_t, dtype=float)
    s = np.asarray(plus) + np.asarray(minus)
    d = np.asarray(plus) - np.asarray(minus)
    out = np.empty(np.broadcast(eps_t, s).shape + (2, 2), dtype=complex)
    out[..., 0, 0] = 0.5 * eps_t * s
    out[..., 0, 1] = 0.5 * d
    out[..., 1, 0] = 0.5 * d
    out[..., 1, 1] = 0.5 * s / eps_t
    return out


# -- per-mode covariances ---------------------------------------------------


def vacuum_covariance(eps, t, profile):
    """``(1/2) [[eps_t, 1], [1, 1/eps_t]]`` = ``q P(t)``."""
    e = dispersion(eps, t, profile)
    projector_from_frequency(e)  # frequency check
    return _from_diagonal(e, 1.0, 0.0)


def kms_covariance(eps, t, profile, beta):
    """Thermal covariance at inverse temperature ``beta`` for the dynamics frozen at ``t``."""
    if not beta > 0:
        raise DomainError("beta must be positive")
    e = dispersion(eps, t, profile)
    projector_from_frequency(e)
    c = coth_half(beta * e)
    return _from_diagonal(e, 0.5 * (c + 1.0), 0.5 * (c - 1.0))


def hadamard_hat(b, c, d):
    """``[[1 + |b|^2, conj(b) d c], [conj(c) d b, |c|^2]]`` from values of b, c, d."""
    b, c, d = np.broadcast_arrays(*(np.asarray(x, dtype=complex) for x in (b, c, d)))
    if np.any(np.abs(d) > 1.0 + 1e-15):
        raise InvariantViolation("Hadamard family needs |d(eps)| <= 1")
    out = np.empty(b.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = 1.0 + np.abs(b) ** 2
    out[..., 0, 1] = np.conj(b) * d * c
    out[..., 1, 0] = np.conj(c) * d * b
    out[..., 1, 1] = np.abs(c) ** 2
    return out


def hadamard_covariance(b, c, d, eps, t, profile):
    """Pull the hat-form :func:`hadamard_hat` back to Cauchy data: ``lam = (T^-1)^* hat T^-1``.

    ``b``, ``c``, ``d`` are callables of ``eps``.
    """
    eps = np.asarray(eps, dtype=float)
    hat = hadamard_hat(b(eps), c(eps), d(eps))
    _, inv = frame(eps, t, profile)
    return dagger(inv) @ hat @ inv


def hat_transform(lam, eps, t, profile):
    """Congruence ``T(t)^* lam T(t)`` into the frame diagonalising the frozen dynamics."""
    fwd, _ = frame(eps, t, profile)
    return dagger(fwd) @ lam @ fwd


def diag_part(m):
    out = np.zeros_like(m)
    out[..., 0, 0] = m[..., 0, 0]
    out[..., 1, 1] = m[..., 1, 1]
    return out


def check_hat_state(hat, tol=POSITIVITY_TOL):
    """Positivity in the hat frame: ``hat >= 0`` and ``hat - q_hat >= 0``."""
    hat = 0.5 * (hat + dagger(hat))
    lo = np.linalg.eigvalsh(hat)[..., 0]
    lo2 = np.linalg.eigvalsh(hat - diag_charge_form())[..., 0]
    worst = min(float(np.min(lo)), float(np.min(lo2)))
    if worst < -tol:
        raise InvariantViolation(f"hat form violates positivity (min eigenvalue {worst:.3e})")
    return worst


# -- named profile functions for Hadamard families -------------------------

SHAPE_FUNCTIONS = {
    "zero": lambda e: np.zeros_like(np.asarray(e, dtype=float)),
    "one": lambda e: np.ones_like(np.asarray(e, dtype=float)),
    "half": lambda e: np.full_like(np.asarray(e, dtype=float), 0.5),
    "gaussian": lambda e: np.exp(-np.asarray(e, dtype=float) ** 2),
    "sech": lambda e: 1.0 / np.cosh(np.asarray(e, dtype=float)),
}


def shape_function(name):
    try:
        return SHAPE_FUNCTIONS[name]
    except KeyError:
        raise DomainError(f"unknown function preset {name!r}; known: {sorted(SHAPE_FUNCTIONS)}") from None


# -- families ---------------------------------------------------------------


@dataclass(frozen=True)
class CovarianceFamily:
    """An ``eps``-indexed covariance ``eps -> lam(eps)`` at time ``reference_time``.

    ``func`` is vectorised: an array of modes maps to an array of 2x2 forms.
    """

    kind: str
    params: dict
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    reference_time: int = -1
    profile: MassProfile | None = None

    def __post_init__(self):
        if self.reference_time not in (-1, 1):
            raise InvariantViolation("reference_time must be -1 or +1")

    def __call__(self, eps):
        return self.func(np.asarray(eps, dtype=float))

    def check(self, eps, tol=POSITIVITY_TOL):
        """Check state positivity on the modes ``eps``; returns the worst eigenvalue."""
        return check_state(self(eps), tol, what=f"{self.kind} covariance")

    def describe(self):
        return {"kind": self.kind, "reference_time": self.reference_time, **self.params}

    def to_json(self, eps):
        """Serializable document ``{kind, parameters, grid: [{eps, lambda}]}``."""
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        lam = self(eps)
        grid = []
        for e, m in zip(eps, lam):
            flat = m.reshape(4)
            grid.append({"eps": float(e), "lambda": [[float(z.real), float(z.imag)] for z in flat]})
        params = {"reference_time": self.reference_time, **self.params}
        if self.profile is not None:
            params["profile"] = self.profile.describe()
        return {"kind": self.kind, "parameters": params, "grid": grid}

    @classmethod
    def from_json(cls, doc):
        """Rebuild a tabulated (``custom``) family; it can only be evaluated at the stored modes."""
        table = {}
        for entry in doc["grid"]:
            z = np.array([complex(re, im) for re, im in entry["lambda"]]).reshape(2, 2)
            table[float(entry["eps"])] = z
        params = dict(doc.get("parameters", {}))
        ref = int(params.pop("reference_time", -1))
        params.pop("profile", None)

        def lookup(eps):
            eps = np.asarray(eps, dtype=float)
            try:
                vals = [table[float(e)] for e in eps.reshape(-1)]
            except KeyError as exc:
                raise DomainError(f"mode {exc.args[0]} not tabulated in this family") from None
            return np.array(vals, dtype=complex).reshape(eps.shape + (2, 2))

        return cls("custom", {"source_kind": doc["kind"], **params}, lookup, ref, None)


def vacuum_family(profile, reference_time=-1):
    return CovarianceFamily(
        "vacuum", {}, lambda eps: vacuum_covariance(eps, reference_time, profile), reference_time, profile
    )


def kms_family(profile, beta, reference_time=-1):
    beta = float(beta)
    if not beta > 0:
        raise DomainError("beta must be positive")
    return CovarianceFamily(
        "kms", {"beta": beta}, lambda eps: kms_covariance(eps, reference_time, profile, beta), reference_time, profile
    )


def hadamard_family(profile, b="gaussian", c="gaussian", d="one", reference_time=-1):
    """Hadamard family built from named (or callable) ``b``, ``c``, ``d``."""
    names = {}
    funcs = []
    for label, spec in (("b", b), ("c", c), ("d", d)):
        if callable(spec):
            names[label] = getattr(spec, "__name__", "callable")
            funcs.append(spec)
        else:
            names[label] = spec
            funcs.append(shape_function(spec))
    fb, fc, fd = funcs
    return CovarianceFamily(
        "hadamard",
        names,
        lambda eps: hadamard_covariance(fb, fc, fd, eps, reference_time, profile),
        reference_time,
        profile,
    )


def validate_hadamard(family, eps, order=8):
    """Check ``|d| <= 1`` and that ``<eps>^order (|b| + |c|)`` stays finite on the modes."""
    fb, fc, fd = (shape_function(family.params[k]) for k in "bcd")
    eps = np.asarray(eps, dtype=float)
    if np.any(np.abs(fd(eps)) > 1.0):
        raise InvariantViolation("|d(eps)| must not exceed 1")
    decay = japanese(eps) ** order * (np.abs(fb(eps)) + np.abs(fc(eps)))
    if not np.all(np.isfinite(decay)):
        raise InvariantViolation("b, c do not decay on the grid")
    return float(np.max(decay))


# -- adiabatic limits -------------------------------------------------------


def adiabatic_limit_closed_form(family, profile):
    """Closed-form adiabatic limit at time +1 of a family given at time -1.

    Transform to the diagonal frame at -1, drop the off-diagonal (oscillating)
    blocks, and transform back with the frame at +1.
    """
    if family.reference_time != -1:
        raise DomainError("the initial covariance must be given at reference time -1")

    def limit(eps):
        hat = hat_transform(family(eps), eps, -1, profile)
        _, inv = frame(eps, 1, profile)
        return dagger(inv) @ diag_part(hat) @ inv

    return CovarianceFamily("adiabatic-limit", {"source": family.describe()}, limit, 1, profile)


def effective_beta(limit, profile, eps):
    """Inverse temperature a genuine thermal state at time +1 would need at each mode.

    From ``lam_11 = (eps_1 / 2) coth(beta eps_1 / 2)``:
    ``beta_eff = (2 / eps_1) arcoth(2 lam_11 / eps_1)``.
    """
    eps = np.asarray(eps, dtype=float)
    e1 = dispersion(eps, 1, profile)
    x = 2.0 * limit(eps)[..., 0, 0].real / e1
    if np.any(x <= 1.0):
        raise DomainError("arcoth argument <= 1: not the covariance of a thermal-like state")
    return (2.0 / e1) * np.arctanh(1.0 / x)


def kms_defect(limit, profile, eps):
    """Spread ``max - min`` of :func:`effective_beta` over the modes; zero iff thermal."""
    b = effective_beta(limit, profile, eps)
    return float(np.max(b) - np.min(b))


def hadamard_remainder(limit, profile):
    """``r(eps) = lam_ad(eps) - lam_vac(eps)`` at time +1."""
    if limit.reference_time != 1:
        raise DomainError("remainder is defined for a family at time +1")
    return lambda eps: limit(eps) - vacuum_covariance(eps, 1, profile)


def smoothing_report(remainder, eps, n_max=8):
    """``sup_eps <eps>^N ||r(eps)||`` for ``N = 0 .. n_max`` (operator norm)."""
    eps = np.asarray(eps, dtype=float)
    norms = np.linalg.norm(remainder(eps), ord=2, axis=(-2, -1))
    jp = japanese(eps)
    return [float(np.max(jp**n * norms)) for n in range(n_max + 1)]


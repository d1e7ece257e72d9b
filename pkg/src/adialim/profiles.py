"""Mass profiles and the closed-form per-mode 2x2 objects.

Every mode of the field obeys ``phi'' + (eps**2 + m_sq(t)) phi = 0``. In the
Cauchy-data coordinates ``f = (phi, -i phi')`` the evolution reads
``df/dt = i H(t) f`` with ``H(t) = [[0, 1], [eps_t**2, 0]]``.

All 2x2 objects are plain complex numpy arrays of shape ``(..., 2, 2)``; the
leading axes follow the shape of ``eps``, so a whole mode grid can be
evaluated in one call.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .exceptions import DegenerateDispersionError, DomainError, InvariantViolation

#: ``eps_t`` below this value is treated as a vanished frequency.
UNDERFLOW = 1e-300

_TIME_SLACK = 1e-12


class Case(str, enum.Enum):
    A = "A"  # m(t) > 0 throughout
    B = "B"  # m(-1) = 0, m strictly increasing
    C = "C"  # m(1) = 0, m strictly decreasing


class Space(str, enum.Enum):
    ENERGY = "E"
    A = "A"
    B = "B"
    C = "C"


# quintic smoothstep s(u) = 10u^3 - 15u^4 + 6u^5, ascending coefficients
_SMOOTHSTEP = np.array([0.0, 0.0, 0.0, 10.0, -15.0, 6.0])


@dataclass(frozen=True)
class MassProfile:
    """Time-dependent mass squared ``m_sq(t)`` on ``[-1, 1]``.

    The profile is stored as a real polynomial in ``t`` (ascending
    coefficients), which keeps both derivatives exact and lets the compiled
    integrator evaluate it without Python callbacks. The default smooth
    profile (quintic smoothstep between two masses) is itself a polynomial.

    Use :meth:`smoothstep`, :meth:`constant` or :meth:`polynomial` rather than
    the raw constructor.
    """

    coeffs: tuple
    case: Case
    shape: str = "polynomial"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "case", Case(self.case))
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        self._validate()

    # -- constructors -----------------------------------------------------
    @classmethod
    def smoothstep(cls, m_minus, m_plus, case=None):
        """``m_sq(t) = m_-^2 + (m_+^2 - m_-^2) s((t+1)/2)`` with the quintic smoothstep ``s``."""
        m_minus, m_plus = float(m_minus), float(m_plus)
        if m_minus < 0 or m_plus < 0:
            raise InvariantViolation("masses must be non-negative")
        if case is None:
            if m_minus == 0 and m_plus == 0:
                raise InvariantViolation("m_minus and m_plus cannot both vanish")
            case = Case.B if m_minus == 0 else Case.C if m_plus == 0 else Case.A
        # s((t+1)/2) as a polynomial in t
        u_of_t = np.array([0.5, 0.5])
        s_t = np.zeros(1)
        for k, c in enumerate(_SMOOTHSTEP):
            s_t = P.polyadd(s_t, c * P.polypow(u_of_t, k))
        coeffs = P.polyadd([m_minus**2], (m_plus**2 - m_minus**2) * s_t)
        return cls(
            tuple(coeffs),
            case,
            shape="smoothstep",
            params={"m_minus": m_minus, "m_plus": m_plus},
        )

    @classmethod
    def constant(cls, m):
        m = float(m)
        if m <= 0:
            raise InvariantViolation("a constant profile needs m > 0 (case A)")
        return cls((m * m,), Case.A, shape="constant", params={"m": m})

    @classmethod
    def polynomial(cls, coeffs, case=Case.A):
        """Arbitrary polynomial ``m_sq(t) = sum_k coeffs[k] t**k``."""
        return cls(tuple(coeffs), case, shape="polynomial", params={"coeffs": list(coeffs)})

    # -- evaluation -------------------------------------------------------
    def m_sq(self, t):
        return P.polyval(t, self.coeffs)

    def m_sq_d1(self, t):
        return P.polyval(t, P.polyder(self.coeffs, 1)) if len(self.coeffs) > 1 else 0.0 * np.asarray(t)

    def m_sq_d2(self, t):
        return P.polyval(t, P.polyder(self.coeffs, 2)) if len(self.coeffs) > 2 else 0.0 * np.asarray(t)

    @property
    def m_minus(self):
        return float(np.sqrt(max(self.m_sq(-1.0), 0.0)))

    @property
    def m_plus(self):
        return float(np.sqrt(max(self.m_sq(1.0), 0.0)))

    @property
    def is_constant(self):
        return all(c == 0.0 for c in self.coeffs[1:])

    def describe(self):
        """JSON-friendly description used in report metadata."""
        return {
            "shape": self.shape,
            "case": self.case.value,
            "coeffs": list(self.coeffs),
            **self.params,
        }

    def _validate(self):
        t = np.linspace(-1.0, 1.0, 1001)
        msq = self.m_sq(t)
        # tolerate rounding in the polynomial expansion at a vanishing endpoint
        floor = -1e-13 * max(1.0, float(np.max(np.abs(msq))))
        if np.any(msq < floor):
            raise InvariantViolation("m_sq(t) must be non-negative on [-1, 1]")
        if self.case is Case.A:
            if np.min(msq) <= 0:
                raise InvariantViolation("case A requires m_sq(t) > 0 on [-1, 1]")
            return
        d1 = self.m_sq_d1(t[1:-1])
        if self.case is Case.B:
            if abs(self.m_sq(-1.0)) > 1e-13 or np.any(d1 <= 0):
                raise InvariantViolation("case B requires m_sq(-1) = 0 and m_sq increasing")
        else:
            if abs(self.m_sq(1.0)) > 1e-13 or np.any(d1 >= 0):
                raise InvariantViolation("case C requires m_sq(1) = 0 and m_sq decreasing")


def _check_time(t):
    t_arr = np.asarray(t, dtype=float)
    if not np.all((t_arr >= -1.0 - _TIME_SLACK) & (t_arr <= 1.0 + _TIME_SLACK)):
        raise DomainError(f"time {t!r} outside [-1, 1]")


def _check_frequency(eps_t):
    if np.any(~(np.asarray(eps_t) >= UNDERFLOW)):
        raise DegenerateDispersionError("mode frequency eps_t vanished or underflowed")


def dispersion(eps, t, profile):
    """Instantaneous mode frequency ``eps_t = sqrt(eps**2 + m_sq(t))``."""
    _check_time(t)
    eps = np.asarray(eps, dtype=float)
    return np.sqrt(eps * eps + np.maximum(profile.m_sq(t), 0.0))


def dispersion_derivatives(eps, t, profile):
    """Return ``(eps_t, d eps_t/dt, d^2 eps_t/dt^2)`` from the analytic profile derivatives."""
    e = dispersion(eps, t, profile)
    d1 = profile.m_sq_d1(t)
    d2 = profile.m_sq_d2(t)
    e1 = d1 / (2.0 * e)
    e2 = d2 / (2.0 * e) - d1 * d1 / (4.0 * e**3)
    return e, e1, e2


def _mat(a11, a12, a21, a22):
    a11, a12, a21, a22 = np.broadcast_arrays(*(np.asarray(x, dtype=complex) for x in (a11, a12, a21, a22)))
    out = np.empty(a11.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = a11
    out[..., 0, 1] = a12
    out[..., 1, 0] = a21
    out[..., 1, 1] = a22
    return out


def generator_from_frequency(eps_t):
    return _mat(0.0, 1.0, np.asarray(eps_t) ** 2, 0.0)


def generator(eps, t, profile):
    """``H(t) = [[0, 1], [eps_t**2, 0]]``; the flow is ``dU/dt = i T H(t) U``."""
    return generator_from_frequency(dispersion(eps, t, profile))


def charge_form():
    """The conserved charge ``q = [[0, 1], [1, 0]]``."""
    return np.array([[0, 1], [1, 0]], dtype=complex)


def diag_charge_form():
    """The charge in the diagonal frame, ``q_hat = diag(1, -1)``."""
    return np.array([[1, 0], [0, -1]], dtype=complex)


def projector_from_frequency(eps_t):
    _check_frequency(eps_t)
    eps_t = np.asarray(eps_t, dtype=float)
    return 0.5 * _mat(1.0, 1.0 / eps_t, eps_t, 1.0)


def spectral_projector(eps, t, profile):
    """Projector onto the positive-frequency eigenspace of ``H(t)``.

    ``P = (1/2) [[1, 1/eps_t], [eps_t, 1]]``, so that ``P H = H P = eps_t P``.
    """
    return projector_from_frequency(dispersion(eps, t, profile))


def projector_derivative(eps, t, profile):
    e, e1, _ = dispersion_derivatives(eps, t, profile)
    _check_frequency(e)
    return 0.5 * _mat(0.0, -e1 / e**2, e1, 0.0)


def frame_from_frequency(eps_t):
    _check_frequency(eps_t)
    eps_t = np.asarray(eps_t, dtype=float)
    lo = eps_t**-0.5
    hi = eps_t**0.5
    c = 2.0**-0.5
    return c * _mat(lo, -lo, hi, hi), c * _mat(hi, lo, -hi, lo)


def frame(eps, t, profile):
    """Return ``(T(t), T(t)^-1)``, the frame diagonalizing the frozen generator.

    Columns of ``T`` are the positive/negative frequency eigenvectors of
    ``H(t)``, normalised so that ``T^* q T = q_hat``.
    """
    return frame_from_frequency(dispersion(eps, t, profile))


def japanese(x):
    return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)


def weight_matrix(space, eps, t, profile):
    """Diagonal weight ``W`` with ``||f||_space = |W f|``.

    ``E`` is the energy norm, ``A``, ``B``, ``C`` the case-adapted spaces.
    """
    space = Space(space)
    eps = np.asarray(eps, dtype=float)
    if np.any(eps <= 0):
        raise DomainError("weight matrices need eps > 0")
    e = dispersion(eps, t, profile)
    _check_frequency(e)
    jp = japanese(eps)
    if space is Space.ENERGY:
        w0, w1 = e, np.ones_like(e)
    elif space is Space.A:
        w0, w1 = jp**0.5, jp**-0.5
    elif space is Space.B:
        w0, w1 = eps**-0.5 * e, eps**-0.5
    else:
        w0, w1 = jp**0.5, jp**0.5 / e
    return _mat(w0, 0.0, 0.0, w1)


def space_for_case(case):
    return {Case.A: Space.A, Case.B: Space.B, Case.C: Space.C}[Case(case)]


def dagger(m):
    return np.conj(np.swapaxes(m, -1, -2))

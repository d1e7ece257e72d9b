"""Compiled per-mode integrators for dU/dt = A(t) U on 2x2 complex matrices.

``A(t) = i T H(t) - adiabatic * [P(t), P'(t)]`` where ``H = [[0, 1], [a, 0]]``,
``a = eps**2 + m_sq(t)`` and ``[P, P'] = (a'/(4a)) diag(1, -1)``.

The mass profile enters only through its polynomial coefficients, so the
kernels never call back into Python. Every mode is integrated independently
(its own step sequence), which keeps results bitwise identical whatever the
thread count.
"""

import warnings

import numpy as np
from numba import config as _numba_config
from numba import njit, prange
from numba.core.errors import NumbaWarning
from scipy.integrate._ivp import dop853_coefficients as _d853

# old system TBB is skipped in favour of the OpenMP/workqueue layers; don't warn about it
warnings.filterwarnings("ignore", message="The TBB threading layer", category=NumbaWarning)
_numba_config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

OK = 0
STEP_LIMIT = 1
STEP_UNDERFLOW = 2

# Dormand-Prince 5(4)
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
A71, A73, A74, A75, A76 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)

# PI step control (Hairer & Wanner's DOPRI5 defaults)
SAFE = 0.9
BETA = 0.04
EXPO1 = 0.2 - BETA * 0.75
FAC_MIN = 0.2
FAC_MAX = 10.0


@njit(cache=True)
def _poly(coeffs, t):
    a = 0.0
    d1 = 0.0
    n = coeffs.shape[0]
    for k in range(n - 1, -1, -1):
        d1 = d1 * t + a
        a = a * t + coeffs[k]
    return a, d1


@njit(cache=True)
def _coefficients(coeffs, eps, T, adiabatic, t):
    msq, dmsq = _poly(coeffs, t)
    if msq < 0.0:
        msq = 0.0
    a = eps * eps + msq
    kappa = 0.0
    if adiabatic:
        kappa = dmsq / (4.0 * a)
    return a, kappa


@njit(cache=True)
def _rhs(coeffs, eps, T, adiabatic, t, y, out):
    a, kappa = _coefficients(coeffs, eps, T, adiabatic, t)
    iT = 1j * T
    # rows of A = [[-kappa, iT], [iT a, kappa]] applied to y = [[y0, y1], [y2, y3]]
    out[0] = -kappa * y[0] + iT * y[2]
    out[1] = -kappa * y[1] + iT * y[3]
    out[2] = iT * a * y[0] + kappa * y[2]
    out[3] = iT * a * y[1] + kappa * y[3]


@njit(cache=True)
def dopri5(coeffs, eps, T, t0, t1, adiabatic, rtol, atol, h0, max_steps):
    """Integrate from ``t0`` to ``t1`` starting at the identity.

    Returns ``(U flat[4], accepted, rejected, status)``.
    """
    y = np.zeros(4, dtype=np.complex128)
    y[0] = 1.0
    y[3] = 1.0
    if t0 == t1:
        return y, 0, 0, OK

    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)
    k1 = np.empty(4, dtype=np.complex128)
    k2 = np.empty(4, dtype=np.complex128)
    k3 = np.empty(4, dtype=np.complex128)
    k4 = np.empty(4, dtype=np.complex128)
    k5 = np.empty(4, dtype=np.complex128)
    k6 = np.empty(4, dtype=np.complex128)
    k7 = np.empty(4, dtype=np.complex128)
    ys = np.empty(4, dtype=np.complex128)
    ynew = np.empty(4, dtype=np.complex128)

    a0, kappa0 = _coefficients(coeffs, eps, T, adiabatic, t0)
    h = h0
    if h <= 0.0:
        h = 0.1 * rtol**0.2 / (T * np.sqrt(a0) + abs(kappa0) + 1.0)
    if h > span:
        h = span

    t = t0
    _rhs(coeffs, eps, T, adiabatic, t, y, k1)
    facold = 1e-4
    accepted = 0
    rejected = 0
    last_rejected = False
    while True:
        if accepted + rejected >= max_steps:
            return y, accepted, rejected, STEP_LIMIT
        remaining = abs(t1 - t)
        last = False
        if h >= remaining:
            # a short final step (or a tiny total span) is not an underflow
            h = remaining
            last = True
        elif h < 1e-14 * max(1.0, abs(t)):
            return y, accepted, rejected, STEP_UNDERFLOW
        hs = direction * h

        for i in range(4):
            ys[i] = y[i] + hs * A21 * k1[i]
        _rhs(coeffs, eps, T, adiabatic, t + C2 * hs, ys, k2)
        for i in range(4):
            ys[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i])
        _rhs(coeffs, eps, T, adiabatic, t + C3 * hs, ys, k3)
        for i in range(4):
            ys[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        _rhs(coeffs, eps, T, adiabatic, t + C4 * hs, ys, k4)
        for i in range(4):
            ys[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        _rhs(coeffs, eps, T, adiabatic, t + C5 * hs, ys, k5)
        for i in range(4):
            ys[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        tnew = t1 if last else t + hs
        _rhs(coeffs, eps, T, adiabatic, tnew, ys, k6)
        for i in range(4):
            ynew[i] = y[i] + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i])
        _rhs(coeffs, eps, T, adiabatic, tnew, ynew, k7)

        err = 0.0
        for i in range(4):
            ei = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            sk = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            err += (abs(ei) / sk) ** 2
        err = np.sqrt(err / 4.0)

        fac11 = err**EXPO1 if err > 0.0 else 0.0
        fac = fac11 / facold**BETA
        fac = max(1.0 / FAC_MAX, min(1.0 / FAC_MIN, fac / SAFE))
        if err <= 1.0:
            facold = max(err, 1e-4)
            accepted += 1
            for i in range(4):
                y[i] = ynew[i]
                k1[i] = k7[i]
            t = tnew
            if last:
                return y, accepted, rejected, OK
            hnew = h / fac
            if last_rejected and hnew > h:
                hnew = h
            last_rejected = False
            h = hnew
        else:
            rejected += 1
            last_rejected = True
            h = h / min(1.0 / FAC_MIN, fac11 / SAFE)


# Dormand-Prince 8(5,3): Butcher tables as published with scipy
D853_A = np.ascontiguousarray(_d853.A[:_d853.N_STAGES, :_d853.N_STAGES])
D853_B = np.ascontiguousarray(_d853.B)
D853_C = np.ascontiguousarray(_d853.C[:_d853.N_STAGES])
D853_E3 = np.ascontiguousarray(_d853.E3)
D853_E5 = np.ascontiguousarray(_d853.E5)
BETA8 = 0.04
EXPO8 = 1.0 / 8.0 - BETA8 * 0.2
FAC8_MIN = 0.333
FAC8_MAX = 6.0


@njit(cache=True)
def dop853(coeffs, eps, T, t0, t1, adiabatic, rtol, atol, h0, max_steps):
    """Order-8 variant of :func:`dopri5`, same contract."""
    A = D853_A
    B = D853_B
    C = D853_C
    E3 = D853_E3
    E5 = D853_E5
    ns = B.shape[0]
    y = np.zeros(4, dtype=np.complex128)
    y[0] = 1.0
    y[3] = 1.0
    if t0 == t1:
        return y, 0, 0, OK

    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)
    K = np.empty((ns + 1, 4), dtype=np.complex128)
    ys = np.empty(4, dtype=np.complex128)
    ynew = np.empty(4, dtype=np.complex128)

    a0, kappa0 = _coefficients(coeffs, eps, T, adiabatic, t0)
    h = h0
    if h <= 0.0:
        h = 0.5 * rtol**0.125 / (T * np.sqrt(a0) + abs(kappa0) + 1.0)
    if h > span:
        h = span

    t = t0
    _rhs(coeffs, eps, T, adiabatic, t, y, K[0])
    facold = 1e-4
    accepted = 0
    rejected = 0
    last_rejected = False
    while True:
        if accepted + rejected >= max_steps:
            return y, accepted, rejected, STEP_LIMIT
        remaining = abs(t1 - t)
        last = False
        if h >= remaining:
            # a short final step (or a tiny total span) is not an underflow
            h = remaining
            last = True
        elif h < 1e-14 * max(1.0, abs(t)):
            return y, accepted, rejected, STEP_UNDERFLOW
        hs = direction * h

        for s in range(1, ns):
            for i in range(4):
                acc = 0j
                for j in range(s):
                    acc += A[s, j] * K[j, i]
                ys[i] = y[i] + hs * acc
            _rhs(coeffs, eps, T, adiabatic, t + C[s] * hs, ys, K[s])
        for i in range(4):
            acc = 0j
            for j in range(ns):
                acc += B[j] * K[j, i]
            ynew[i] = y[i] + hs * acc
        tnew = t1 if last else t + hs
        _rhs(coeffs, eps, T, adiabatic, tnew, ynew, K[ns])

        err5 = 0.0
        err3 = 0.0
        for i in range(4):
            e5 = 0j
            e3 = 0j
            for j in range(ns + 1):
                e5 += E5[j] * K[j, i]
                e3 += E3[j] * K[j, i]
            sk = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            err5 += (abs(e5) / sk) ** 2
            err3 += (abs(e3) / sk) ** 2
        if err5 == 0.0 and err3 == 0.0:
            err = 0.0
        else:
            err = h * err5 / np.sqrt((err5 + 0.01 * err3) * 4.0)

        fac11 = err**EXPO8 if err > 0.0 else 0.0
        fac = fac11 / facold**BETA8
        fac = max(1.0 / FAC8_MAX, min(1.0 / FAC8_MIN, fac / SAFE))
        if err <= 1.0:
            facold = max(err, 1e-4)
            accepted += 1
            for i in range(4):
                y[i] = ynew[i]
                K[0, i] = K[ns, i]
            t = tnew
            if last:
                return y, accepted, rejected, OK
            hnew = h / fac
            if last_rejected and hnew > h:
                hnew = h
            last_rejected = False
            h = hnew
        else:
            rejected += 1
            last_rejected = True
            h = h / min(1.0 / FAC8_MIN, fac11 / SAFE)


@njit(parallel=True, cache=True)
def dop853_batch(coeffs, eps_arr, T, t0, t1, adiabatic, rtol, atol, h0, max_steps):
    n = eps_arr.shape[0]
    U = np.empty((n, 2, 2), dtype=np.complex128)
    acc = np.empty(n, dtype=np.int64)
    rej = np.empty(n, dtype=np.int64)
    status = np.empty(n, dtype=np.int64)
    for j in prange(n):
        y, a, r, s = dop853(coeffs, eps_arr[j], T, t0, t1, adiabatic, rtol, atol, h0, max_steps)
        U[j, 0, 0] = y[0]
        U[j, 0, 1] = y[1]
        U[j, 1, 0] = y[2]
        U[j, 1, 1] = y[3]
        acc[j] = a
        rej[j] = r
        status[j] = s
    return U, acc, rej, status


@njit(parallel=True, cache=True)
def dopri5_batch(coeffs, eps_arr, T, t0, t1, adiabatic, rtol, atol, h0, max_steps):
    n = eps_arr.shape[0]
    U = np.empty((n, 2, 2), dtype=np.complex128)
    acc = np.empty(n, dtype=np.int64)
    rej = np.empty(n, dtype=np.int64)
    status = np.empty(n, dtype=np.int64)
    for j in prange(n):
        y, a, r, s = dopri5(coeffs, eps_arr[j], T, t0, t1, adiabatic, rtol, atol, h0, max_steps)
        U[j, 0, 0] = y[0]
        U[j, 0, 1] = y[1]
        U[j, 1, 0] = y[2]
        U[j, 1, 1] = y[3]
        acc[j] = a
        rej[j] = r
        status[j] = s
    return U, acc, rej, status


@njit(cache=True)
def _expm_2x2(m00, m01, m10, m11):
    tau = 0.5 * (m00 + m11)
    d = 0.5 * (m00 - m11)
    s2 = d * d + m01 * m10
    s = np.sqrt(s2)
    if abs(s) < 1e-8:
        ch = 1.0 + s2 / 2.0 + s2 * s2 / 24.0
        sh = 1.0 + s2 / 6.0 + s2 * s2 / 120.0
    else:
        ch = np.cosh(s)
        sh = np.sinh(s) / s
    e = np.exp(tau)
    return e * (ch + sh * d), e * sh * m01, e * sh * m10, e * (ch - sh * d)


@njit(cache=True)
def magnus4(coeffs, eps, T, t0, t1, adiabatic, n_steps):
    """Fixed-step fourth-order Magnus integrator (two-point Gauss rule)."""
    u00, u01, u10, u11 = 1.0 + 0j, 0j, 0j, 1.0 + 0j
    h = (t1 - t0) / n_steps
    off = np.sqrt(3.0) / 6.0
    w = np.sqrt(3.0) / 12.0
    iT = 1j * T
    for k in range(n_steps):
        t = t0 + k * h
        a1, kap1 = _coefficients(coeffs, eps, T, adiabatic, t + (0.5 - off) * h)
        a2, kap2 = _coefficients(coeffs, eps, T, adiabatic, t + (0.5 + off) * h)
        # A_j = [[-kap_j, iT], [iT a_j, kap_j]]
        p00 = -kap1
        p01 = iT
        p10 = iT * a1
        p11 = kap1
        q00 = -kap2
        q01 = iT
        q10 = iT * a2
        q11 = kap2
        # commutator [A2, A1]
        c00 = q00 * p00 + q01 * p10 - (p00 * q00 + p01 * q10)
        c01 = q00 * p01 + q01 * p11 - (p00 * q01 + p01 * q11)
        c10 = q10 * p00 + q11 * p10 - (p10 * q00 + p11 * q10)
        c11 = q10 * p01 + q11 * p11 - (p10 * q01 + p11 * q11)
        o00 = 0.5 * h * (p00 + q00) + w * h * h * c00
        o01 = 0.5 * h * (p01 + q01) + w * h * h * c01
        o10 = 0.5 * h * (p10 + q10) + w * h * h * c10
        o11 = 0.5 * h * (p11 + q11) + w * h * h * c11
        e00, e01, e10, e11 = _expm_2x2(o00, o01, o10, o11)
        n00 = e00 * u00 + e01 * u10
        n01 = e00 * u01 + e01 * u11
        n10 = e10 * u00 + e11 * u10
        n11 = e10 * u01 + e11 * u11
        u00, u01, u10, u11 = n00, n01, n10, n11
    out = np.empty((2, 2), dtype=np.complex128)
    out[0, 0] = u00
    out[0, 1] = u01
    out[1, 0] = u10
    out[1, 1] = u11
    return out

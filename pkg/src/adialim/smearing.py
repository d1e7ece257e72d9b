"""Spectral quadrature, test functions and smeared (weak) limits.

Per-mode pull-backs ``U^* lam U`` do not converge as ``T`` grows: their
off-diagonal parts in the diagonal frame keep oscillating with unit
amplitude. Convergence only holds after smearing against a test function
over the absolutely continuous spectrum, which is what
:func:`weak_limit_error` measures.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .exceptions import DomainError
from .profiles import dagger
from .propagators import DEFAULT_CONFIG, evolve_batch
from .states import adiabatic_limit_closed_form

PANEL_MAX = 32


@dataclass(frozen=True)
class ModeGrid:
    """Composite Gauss-Legendre rule for ``integral_delta^R g(eps) eps**measure_power d eps``."""

    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    delta: float
    R: float
    measure_power: int

    @property
    def n_nodes(self):
        return int(self.nodes.size)

    def describe(self):
        return {"delta": self.delta, "R": self.R, "n_nodes": self.n_nodes, "measure_power": self.measure_power}


def build_grid(delta, R, n_nodes, measure_power=2):
    """Split ``[delta, R]`` into ``ceil(n_nodes / 32)`` equal panels with near-equal node counts.

    The density ``eps**measure_power`` is folded into the weights.
    """
    delta, R = float(delta), float(R)
    if not (0 < delta < R and math.isfinite(R)):
        raise DomainError(f"grid bounds must satisfy 0 < delta < R (got delta={delta}, R={R})")
    if n_nodes < 16:
        raise DomainError("n_nodes must be at least 16")
    if measure_power < 0:
        raise DomainError("measure_power must be >= 0")
    n_panels = -(-n_nodes // PANEL_MAX)
    sizes = [n_nodes // n_panels + (1 if i < n_nodes % n_panels else 0) for i in range(n_panels)]
    edges = np.linspace(delta, R, n_panels + 1)
    nodes, weights = [], []
    for i, m in enumerate(sizes):
        x, w = leggauss(m)
        half = 0.5 * (edges[i + 1] - edges[i])
        nodes.append(edges[i] + half * (x + 1.0))
        weights.append(half * w)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights) * nodes**measure_power
    return ModeGrid(nodes, weights, delta, R, int(measure_power))


def required_nodes(T, R):
    """Smallest node count resolving the fastest phase ``2 T integral eps``: ``4 T R / pi``."""
    return math.ceil(4.0 * T * R / math.pi)


def grid_for(T, delta, R, n_min, measure_power=2):
    return build_grid(delta, R, max(int(n_min), required_nodes(T, R)), measure_power)


@dataclass(frozen=True)
class TestFunction:
    """Cauchy-data test function ``eps -> (f0(eps), f1(eps))`` supported in ``support``."""

    f0: Callable = field(repr=False)
    f1: Callable = field(repr=False)
    support: tuple
    smoothness_class: int
    name: str = "custom"

    __test__ = False  # not a pytest class

    def __call__(self, eps):
        eps = np.asarray(eps, dtype=float)
        lo, hi = self.support
        inside = (eps >= lo) & (eps <= hi)
        out = np.zeros(eps.shape + (2,), dtype=complex)
        out[..., 0] = np.where(inside, self.f0(eps), 0.0)
        out[..., 1] = np.where(inside, self.f1(eps), 0.0)
        return out

    def describe(self):
        return {"name": self.name, "support": list(self.support), "smoothness_class": self.smoothness_class}


def bump(lo=0.5, hi=4.0):
    """C^2 polynomial bump ``((eps - lo)(hi - eps))**2``, scaled to peak value 1, in the f0 slot."""
    lo, hi = float(lo), float(hi)
    if not 0 < lo < hi:
        raise DomainError("bump support must satisfy 0 < lo < hi")
    scale = (0.5 * (hi - lo)) ** 4

    def f0(eps):
        return ((eps - lo) * (hi - eps)) ** 2 / scale

    def f1(eps):
        return np.zeros_like(eps)

    return TestFunction(f0, f1, (lo, hi), 2, name="bump")


def indicator(lo, hi, f0=1.0, f1=0.0):
    """Constant Cauchy data on ``[lo, hi]`` (discontinuous; for quadrature checks)."""
    return TestFunction(
        lambda e: np.full_like(e, f0, dtype=complex),
        lambda e: np.full_like(e, f1, dtype=complex),
        (float(lo), float(hi)),
        0,
        name="indicator",
    )


def _on_grid(A, grid):
    values = A(grid.nodes) if callable(A) else np.asarray(A)
    if values.shape != (grid.n_nodes, 2, 2):
        raise DomainError(f"expected {(grid.n_nodes, 2, 2)} matrix values, got {values.shape}")
    return values


def smear(A, f, grid):
    """``sum_k w_k conj(f(eps_k)) . A(eps_k) f(eps_k)``.

    ``A`` is either a callable of the modes or an array of 2x2 matrices on
    ``grid.nodes``. The reduction uses numpy's pairwise summation in node
    order, so the result is deterministic.
    """
    lo, hi = f.support
    if lo < grid.delta - 1e-12 or hi > grid.R + 1e-12:
        raise DomainError("test function support must lie inside the grid range")
    values = _on_grid(A, grid)
    fv = f(grid.nodes)
    integrand = np.einsum("ki,kij,kj->k", np.conj(fv), values, fv)
    return complex(np.sum(grid.weights * integrand))


def propagate_grid(profile, T, grid, cfg=None):
    """``U_T(-1, 1)`` on every grid node (maps data at time +1 back to time -1)."""
    return evolve_batch(grid.nodes, profile, T, -1.0, 1.0, cfg or DEFAULT_CONFIG)


def pull_back_covariance(lambda_minus, profile, T, grid, cfg=None, propagators=None):
    """``U_T(-1, 1)^* lam_{-1} U_T(-1, 1)`` on the grid nodes.

    Pass ``propagators`` (from :func:`propagate_grid`) to reuse integrations
    across several initial states.
    """
    if lambda_minus.reference_time != -1:
        raise DomainError("the initial covariance must be given at reference time -1")
    prop = propagators if propagators is not None else propagate_grid(profile, T, grid, cfg)
    U = prop.U
    return dagger(U) @ lambda_minus(grid.nodes) @ U


def weak_limit_error(lambda_minus, profile, T, f, grid, cfg=None, propagators=None):
    """``|smear(pull_back_T - closed-form limit, f)|``.

    The grid must resolve the oscillations: ``n_nodes >= 4 T R / pi``.
    """
    if grid.n_nodes < required_nodes(T, grid.R):
        raise DomainError(
            f"grid with {grid.n_nodes} nodes under-resolves T={T}; need >= {required_nodes(T, grid.R)}"
        )
    pulled = pull_back_covariance(lambda_minus, profile, T, grid, cfg, propagators)
    limit = adiabatic_limit_closed_form(lambda_minus, profile)
    return abs(smear(pulled - limit(grid.nodes), f, grid))


SWEEP_COLUMNS = ("T", "error", "n_nodes", "rel_tol")


def write_sweep_csv(path, rows):
    """Write ``rows`` (mappings with :data:`SWEEP_COLUMNS`) as CSV with a header."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in SWEEP_COLUMNS})

"""Test-problem builders: Lorenz96 and 1-D heat, covariances, observations.

The model sequences feed the tangent-linear blocks M_i, the SOAR kernel
builds the background and model-error covariances, and make_realization
draws seeded right-hand sides so that experiments average over identical
realizations across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .blocks import SystemData


@dataclass
class CovarianceParams:
    L_B: float = 0.6
    L_Q: float = 0.75
    sigma_B: float = 0.5
    sigma_Q: float = 0.2
    nnz_B: int | None = None  # None: full band
    nnz_Q: int | None = None


@dataclass
class ProblemSpec:
    family: str  # lorenz96 or heat
    s: int
    p: int
    N: int
    dt: float
    dx: float = 1e-3
    cov: CovarianceParams = field(default_factory=CovarianceParams)
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("lorenz96", "heat"):
            raise ValueError(f"unknown problem family {self.family!r}")
        if not 0 < self.p <= self.s:
            raise ValueError("need 0 < p <= s")
        if self.dt <= 0 or self.dx <= 0:
            raise ValueError("dt and dx must be positive")

    @property
    def stability_ratio(self):
        return self.dt / self.dx**2


def lorenz96_rhs(x):
    """The chaotic advection-dissipation vector field with forcing 8."""
    return (np.roll(x, -1) - np.roll(x, 2)) * np.roll(x, 1) - x + 8.0


def lorenz96_jacobian(x):
    s = len(x)
    J = -np.eye(s)
    idx = np.arange(s)
    J[idx, (idx + 1) % s] += np.roll(x, 1)
    J[idx, (idx - 2) % s] += -np.roll(x, 1)
    J[idx, (idx - 1) % s] += np.roll(x, -1) - np.roll(x, 2)
    return J


def lorenz96_step(x, dt):
    """One RK4 step of the Lorenz96 field."""
    k1 = lorenz96_rhs(x)
    k2 = lorenz96_rhs(x + 0.5 * dt * k1)
    k3 = lorenz96_rhs(x + 0.5 * dt * k2)
    k4 = lorenz96_rhs(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def lorenz96_tlm(x, dt):
    """Exact Jacobian of one RK4 step, by the chain rule through the stages."""
    if len(x) < 4:
        raise ValueError("Lorenz96 needs s >= 4")
    I = np.eye(len(x))
    k1 = lorenz96_rhs(x)
    k2 = lorenz96_rhs(x + 0.5 * dt * k1)
    k3 = lorenz96_rhs(x + 0.5 * dt * k2)
    A1 = lorenz96_jacobian(x)
    A2 = lorenz96_jacobian(x + 0.5 * dt * k1) @ (I + 0.5 * dt * A1)
    A3 = lorenz96_jacobian(x + 0.5 * dt * k2) @ (I + 0.5 * dt * A2)
    A4 = lorenz96_jacobian(x + dt * k3) @ (I + dt * A3)
    return I + dt / 6.0 * (A1 + 2 * A2 + 2 * A3 + A4)


def lorenz96_trajectory_models(s, N, dt, spinup: int = 100):
    """Tangent-linear sequence M_1..M_N along a spun-up trajectory."""
    i = np.arange(s)
    x = 8.0 + 0.01 * np.sin(2 * np.pi * i / s)
    for _ in range(spinup):
        x = lorenz96_step(x, dt)
    models = np.empty((N, s, s))
    for m in range(N):
        models[m] = lorenz96_tlm(x, dt)
        x = lorenz96_step(x, dt)
    return models


def heat_model(s, dt, dx):
    """Forward-Euler step matrix of the 1-D heat equation, zero boundaries.

    Symmetric tridiagonal with interior diagonal 1 - 2r and off-diagonal r,
    r = dt/dx^2; the first and last rows and columns are zeroed so the
    boundary values stay pinned at zero.
    """
    if s < 3:
        raise ValueError("heat model needs s >= 3")
    r = dt / dx**2
    M = np.diag(np.full(s, 1.0 - 2.0 * r)) + np.diag(np.full(s - 1, r), 1) + np.diag(
        np.full(s - 1, r), -1
    )
    M[0, :] = 0.0
    M[-1, :] = 0.0
    M[:, 0] = 0.0
    M[:, -1] = 0.0
    return M


def soar_covariance(s, L, sigma, nnz_per_row: int | None = None, floor_rel: float = 1e-4):
    """Banded second-order auto-regressive covariance on the unit circle.

    C_ij = sigma^2 (1 + d/L) exp(-d/L) with circular grid distance d,
    truncated to the nnz_per_row nearest neighbors per row, symmetrized,
    and shifted by the smallest tau >= 0 keeping the minimum eigenvalue at
    max(floor_rel * sigma^2, 1e-8).  Long correlation lengths make the raw
    kernel numerically singular, and the relative floor keeps the condition
    number of the covariance (and everything built from its inverse) usable.
    """
    i = np.arange(s)
    diff = np.abs(i[:, None] - i[None, :])
    d = np.minimum(diff, s - diff) / s
    C = sigma**2 * (1.0 + d / L) * np.exp(-d / L)
    if nnz_per_row is not None:
        half = nnz_per_row // 2
        C[np.minimum(diff, s - diff) > half] = 0.0
    C = 0.5 * (C + C.T)
    lam_min = float(np.linalg.eigvalsh(C).min())
    floor = max(floor_rel * sigma**2, 1e-8)
    if lam_min < floor:
        C += (floor - lam_min) * np.eye(s)
    return C


def build_observation(s, p):
    """Selection operator with one unit entry per row, evenly spaced."""
    if not 0 < p <= s:
        raise ValueError("need 0 < p <= s")
    H = np.zeros((p, s))
    cols = np.array([round(i * s / p) for i in range(p)])
    H[np.arange(p), cols] = 1.0
    return H


def build_R(p, L: float | None = None, sigma: float = 0.1, nnz_per_row: int | None = None):
    """Observation-error covariance, a SOAR kernel of size p.

    The default correlation length is two observation spacings, which keeps
    the kernel well conditioned at any p; a fixed physical length would make
    R numerically singular once the observations sit closer than it.
    """
    if L is None:
        L = 2.0 / p
    return soar_covariance(p, L, sigma, nnz_per_row)


def build_models(spec: ProblemSpec):
    if spec.family == "heat":
        M = heat_model(spec.s, spec.dt, spec.dx)
        return np.repeat(M[None, :, :], spec.N, axis=0)
    return lorenz96_trajectory_models(spec.s, spec.N, spec.dt)


def make_realization(spec: ProblemSpec, seed: int | None = None, zero_noise: bool = False) -> SystemData:
    """One seeded instance of the inner linear problem.

    b_0 ~ N(0, B), c_i ~ N(0, Q), d_i ~ N(0, R), drawn through Cholesky
    factors from a generator seeded with spec.seed unless seed overrides it.
    """
    if seed is None:
        seed = spec.seed
    B = soar_covariance(spec.s, spec.cov.L_B, spec.cov.sigma_B, spec.cov.nnz_B)
    Q = soar_covariance(spec.s, spec.cov.L_Q, spec.cov.sigma_Q, spec.cov.nnz_Q)
    R = build_R(spec.p)
    H = build_observation(spec.s, spec.p)
    models = build_models(spec)
    n = spec.N + 1
    if zero_noise:
        b = np.zeros((spec.s, n))
        d = np.zeros((spec.p, n))
    else:
        rng = np.random.default_rng(seed)
        LB = sla.cholesky(B, lower=True)
        LQ = sla.cholesky(Q, lower=True)
        LR = sla.cholesky(R, lower=True)
        b = np.empty((spec.s, n))
        b[:, 0] = LB @ rng.standard_normal(spec.s)
        b[:, 1:] = LQ @ rng.standard_normal((spec.s, spec.N))
        d = LR @ rng.standard_normal((spec.p, n))
    return SystemData(B=B, Q=Q, R=R, H=H, models=models, b=b, d=d)

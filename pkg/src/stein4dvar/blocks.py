"""Kronecker-structured block operators for the weak-constraint 4D-Var systems.

The unknowns of the time window are kept as dense s x (N+1) matrices whose
column j is the state-sized block at observation time j; vec() of such a
matrix reproduces the stacked vector of all states.  All operators of the
two linear systems (the SPD Hessian form and the 3x3 saddle-point form) act
column-wise through the small factor matrices B, Q, R, H, M_i.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla


class DimensionError(ValueError):
    """Non-conforming block-matrix dimensions."""


class FactorizationError(ValueError):
    """A matrix required to be SPD failed its symmetric factorization."""


def _cholesky(name, A):
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got {A.shape}")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise FactorizationError(f"{name} is not symmetric")
    try:
        return sla.cho_factor(A, lower=True)
    except sla.LinAlgError as exc:
        raise FactorizationError(f"{name} is not positive definite: {exc}") from exc


@dataclass
class SaddleTriple:
    """Block representation (theta, lam, x) of a saddle-point vector.

    theta and x are s x (N+1), lam is p x (N+1); vec-stacking the three
    blocks gives the usual long vector of the saddle system.
    """

    theta: np.ndarray
    lam: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        if self.theta.shape[1] != self.lam.shape[1] or self.theta.shape != self.x.shape:
            raise DimensionError(
                f"non-conforming triple blocks {self.theta.shape}, "
                f"{self.lam.shape}, {self.x.shape}"
            )

    @classmethod
    def zeros(cls, s, p, ncols):
        return cls(np.zeros((s, ncols)), np.zeros((p, ncols)), np.zeros((s, ncols)))

    def copy(self):
        return SaddleTriple(self.theta.copy(), self.lam.copy(), self.x.copy())

    def scaled(self, a):
        return SaddleTriple(a * self.theta, a * self.lam, a * self.x)

    def axpy(self, a, other):
        """In-place self += a * other."""
        self.theta += a * other.theta
        self.lam += a * other.lam
        self.x += a * other.x

    def norm(self):
        return np.sqrt(triple_inner(self, self))

    def to_vector(self):
        return np.concatenate(
            [self.theta.ravel(order="F"), self.lam.ravel(order="F"), self.x.ravel(order="F")]
        )

    @classmethod
    def from_vector(cls, v, s, p, ncols):
        n1, n2 = s * ncols, p * ncols
        return cls(
            v[:n1].reshape((s, ncols), order="F"),
            v[n1 : n1 + n2].reshape((p, ncols), order="F"),
            v[n1 + n2 :].reshape((s, ncols), order="F"),
        )


def triple_inner(u: SaddleTriple, v: SaddleTriple) -> float:
    """Frobenius inner product over the three blocks; equals vec(u).vec(v)."""
    if u.theta.shape != v.theta.shape or u.lam.shape != v.lam.shape:
        raise DimensionError("non-conforming triples")
    return float(
        np.vdot(u.theta, v.theta) + np.vdot(u.lam, v.lam) + np.vdot(u.x, v.x)
    )


@dataclass
class SystemData:
    """All matrices of one linearized inner problem.

    B, Q (s x s) and R (p x p) are SPD; H is p x s; models holds the N
    tangent-linear matrices M_1..M_N.  b collects [b_0, c_1, .., c_N] and d
    collects [d_0, .., d_N] column-wise.  Symmetric factorizations of B, Q,
    R are cached once at construction and shared by every inverse apply.
    """

    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    H: np.ndarray
    models: np.ndarray  # (N, s, s)
    b: np.ndarray  # (s, N+1)
    d: np.ndarray  # (p, N+1)

    B_cho: tuple = field(init=False, repr=False)
    Q_cho: tuple = field(init=False, repr=False)
    R_cho: tuple = field(init=False, repr=False)

    def __post_init__(self):
        self.models = np.asarray(self.models, dtype=float)
        s = self.B.shape[0]
        p = self.R.shape[0]
        if self.models.ndim != 3 or self.models.shape[1:] != (s, s):
            raise DimensionError(f"models must be (N, {s}, {s}), got {self.models.shape}")
        n = self.models.shape[0] + 1
        if self.H.shape != (p, s):
            raise DimensionError(f"H must be ({p}, {s}), got {self.H.shape}")
        if self.b.shape != (s, n) or self.d.shape != (p, n):
            raise DimensionError("rhs blocks do not conform with s, p, N+1")
        self.B_cho = _cholesky("B", self.B)
        self.Q_cho = _cholesky("Q", self.Q)
        self.R_cho = _cholesky("R", self.R)

    @property
    def s(self):
        return self.B.shape[0]

    @property
    def p(self):
        return self.R.shape[0]

    @property
    def N(self):
        return self.models.shape[0]

    @property
    def ncols(self):
        return self.N + 1


def apply_D(sys: SystemData, Z: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Apply the block-diagonal D = e1 e1^T (x) B + (I - e1 e1^T) (x) Q.

    Column 0 gets B (or B^-1), the remaining columns get Q (or Q^-1).
    """
    if Z.shape != (sys.s, sys.ncols):
        raise DimensionError(f"expected {(sys.s, sys.ncols)}, got {Z.shape}")
    out = np.empty_like(Z)
    if inverse:
        out[:, :1] = sla.cho_solve(sys.B_cho, Z[:, :1])
        out[:, 1:] = sla.cho_solve(sys.Q_cho, Z[:, 1:])
    else:
        out[:, :1] = sys.B @ Z[:, :1]
        out[:, 1:] = sys.Q @ Z[:, 1:]
    return out


def apply_L(sys: SystemData, Z: np.ndarray, transpose: bool = False) -> np.ndarray:
    """Apply the block bidiagonal L (or L^T) with the exact model sequence."""
    if Z.shape != (sys.s, sys.ncols):
        raise DimensionError(f"expected {(sys.s, sys.ncols)}, got {Z.shape}")
    out = Z.copy()
    if transpose:
        # column i loses M_{i+1}^T Z_{i+1}, last column untouched
        out[:, :-1] -= np.einsum("nji,jn->in", sys.models, Z[:, 1:])
    else:
        # column i loses M_i Z_{i-1}, first column untouched
        out[:, 1:] -= np.einsum("nij,jn->in", sys.models, Z[:, :-1])
    return out


def solve_L(sys: SystemData, V: np.ndarray, transpose: bool = False, cut: int | None = None) -> np.ndarray:
    """Solve L X = V (or L^T X = V) by block substitution.

    With cut=k the subdiagonal blocks at positions i with i % k == 0 are
    dropped first (the chain-cutting approximation); cut=None or N+1 keeps
    the exact L.
    """
    if V.shape != (sys.s, sys.ncols):
        raise DimensionError(f"expected {(sys.s, sys.ncols)}, got {V.shape}")
    X = V.copy()
    keep = [cut is None or (i % cut) != 0 for i in range(1, sys.N + 1)]
    if transpose:
        for i in range(sys.N - 1, -1, -1):
            if keep[i]:
                X[:, i] += sys.models[i].T @ X[:, i + 1]
    else:
        for i in range(1, sys.N + 1):
            if keep[i - 1]:
                X[:, i] += sys.models[i - 1] @ X[:, i - 1]
    return X


def apply_H_chain(sys: SystemData, Z: np.ndarray, mode: str) -> np.ndarray:
    """Apply one of the Kronecker observation operators column-wise.

    mode: "H" (p x s times each column), "Ht", "Rinv", or "HtRinvH".
    """
    if mode == "H":
        if Z.shape[0] != sys.s:
            raise DimensionError(f"expected {sys.s} rows, got {Z.shape[0]}")
        return sys.H @ Z
    if mode == "Ht":
        if Z.shape[0] != sys.p:
            raise DimensionError(f"expected {sys.p} rows, got {Z.shape[0]}")
        return sys.H.T @ Z
    if mode == "Rinv":
        if Z.shape[0] != sys.p:
            raise DimensionError(f"expected {sys.p} rows, got {Z.shape[0]}")
        return sla.cho_solve(sys.R_cho, Z)
    if mode == "HtRinvH":
        if Z.shape[0] != sys.s:
            raise DimensionError(f"expected {sys.s} rows, got {Z.shape[0]}")
        return sys.H.T @ sla.cho_solve(sys.R_cho, sys.H @ Z)
    raise ValueError(f"unknown mode {mode!r}")


def apply_S(sys: SystemData, Z: np.ndarray) -> np.ndarray:
    """Apply the SPD Hessian S = L^T D^-1 L + H^T R^-1 H."""
    W = apply_D(sys, apply_L(sys, Z), inverse=True)
    return apply_L(sys, W, transpose=True) + apply_H_chain(sys, Z, "HtRinvH")


def apply_A(sys: SystemData, v: SaddleTriple) -> SaddleTriple:
    """Apply the saddle-point matrix [[D, 0, L], [0, R, H], [L^T, H^T, 0]]."""
    theta = apply_D(sys, v.theta) + apply_L(sys, v.x)
    lam = sys.R @ v.lam + apply_H_chain(sys, v.x, "H")
    x = apply_L(sys, v.theta, transpose=True) + apply_H_chain(sys, v.lam, "Ht")
    return SaddleTriple(theta, lam, x)


def spd_rhs(sys: SystemData) -> np.ndarray:
    """Right-hand side D^-1 b + L^T H^T R^-1 d of the Hessian system."""
    return apply_D(sys, sys.b, inverse=True) + apply_L(
        sys, apply_H_chain(sys, apply_H_chain(sys, sys.d, "Rinv"), "Ht"), transpose=True
    )


def saddle_rhs(sys: SystemData) -> SaddleTriple:
    """Right-hand side (b, d, 0) of the saddle-point system."""
    return SaddleTriple(sys.b.copy(), sys.d.copy(), np.zeros_like(sys.b))


# --- circulant shift machinery -------------------------------------------

@dataclass(frozen=True)
class CirculantShift:
    """Eigen-data of the circulant down-shift C of size n = N+1.

    pi holds the circulant eigenvalues diag(Pi) = F C e_1; f_e1 and
    finv_en are the vectors F e_1 and F^-1 e_n used by the rank-one
    correction of the Stein solves.  The DFT convention is the
    unnormalized forward transform with 1/n on the inverse, under which
    F is symmetric: F^T = F and F^-T = F^-1.
    """

    n: int
    pi: np.ndarray
    f_e1: np.ndarray
    finv_en: np.ndarray


def circulant_setup(n: int) -> CirculantShift:
    """Eigenvalues and helper vectors of the n x n circulant shift."""
    if n < 2:
        raise ValueError("need n >= 2")
    e1 = np.zeros(n)
    e1[0] = 1.0
    en = np.zeros(n)
    en[-1] = 1.0
    # C e_1 = e_2, so Pi is the DFT of the second coordinate vector
    ce1 = np.roll(e1, 1)
    return CirculantShift(n=n, pi=np.fft.fft(ce1), f_e1=np.fft.fft(e1), finv_en=np.fft.ifft(en))


def row_fft(V: np.ndarray) -> np.ndarray:
    """Right-multiply by F^T (= F): the DFT of every row."""
    return sfft.fft(V, axis=1)


def row_ifft(V: np.ndarray) -> np.ndarray:
    """Right-multiply by F^-T (= F^-1): the inverse DFT of every row."""
    return sfft.ifft(V, axis=1)


def shift_cols_right(Z: np.ndarray) -> np.ndarray:
    """Z Sigma^T: column j becomes column j-1 of Z, first column zero."""
    out = np.zeros_like(Z)
    out[:, 1:] = Z[:, :-1]
    return out


def shift_cols_left(Z: np.ndarray) -> np.ndarray:
    """Z Sigma: column j becomes column j+1 of Z, last column zero."""
    out = np.zeros_like(Z)
    out[:, :-1] = Z[:, 1:]
    return out


def dense_sigma(n: int) -> np.ndarray:
    """The nilpotent down-shift Sigma = C - e_1 e_n^T, assembled densely."""
    return np.diag(np.ones(n - 1), -1)


def dense_circulant(n: int) -> np.ndarray:
    C = np.diag(np.ones(n - 1), -1)
    C[0, -1] = 1.0
    return C

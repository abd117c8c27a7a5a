"""FFT-based inversion of the Stein operator I (x) I - Sigma (x) Mhat.

The approximate constraint operator keeps a single representative model
matrix Mhat on the whole subdiagonal, which turns its inversion into a
Stein matrix equation Z - Mhat Z Sigma^T = V.  Writing Sigma as the
circulant shift minus a rank-one term, the solve reduces to one
eigendecomposition of Mhat (done once), row FFTs, Hadamard products and a
diagonal rank-one correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .blocks import (
    CirculantShift,
    circulant_setup,
    row_fft,
    row_ifft,
    shift_cols_left,
    shift_cols_right,
)


class SteinSingularError(ValueError):
    """The Stein pencil is (numerically) singular for this Mhat."""


class SteinSolveError(RuntimeError):
    """A Stein solve produced an unacceptably large residual."""


@dataclass
class MhatStrategy:
    """How to pick the representative model matrix Mhat from M_1..M_N.

    kind is one of sym_first, sym_last, sym_index, karcher,
    min_norm_heuristic, exact_when_constant; index is used by sym_index.
    """

    kind: str = "sym_first"
    index: int | None = None

    _KINDS = (
        "sym_first",
        "sym_last",
        "sym_index",
        "karcher",
        "min_norm_heuristic",
        "exact_when_constant",
    )

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown Mhat strategy {self.kind!r}")
        if self.kind == "sym_index" and self.index is None:
            raise ValueError("sym_index needs an index")


def _sym(M):
    return 0.5 * (M + M.T)


def select_mhat(models, strategy: MhatStrategy) -> np.ndarray:
    """Return the representative Mhat for the given strategy."""
    models = np.asarray(models, dtype=float)
    if len(models) == 0:
        raise ValueError("empty model list")
    kind = strategy.kind
    if kind == "sym_first":
        return _sym(models[0])
    if kind == "sym_last":
        return _sym(models[-1])
    if kind == "sym_index":
        return _sym(models[strategy.index])
    if kind == "exact_when_constant":
        return models[0].copy()
    if kind == "karcher":
        return karcher_mean([_sym(M) for M in models])
    # min_norm_heuristic: smallest spectral norm, ties broken by the
    # smallest mean ||D_j D_j^T|| over the candidate differences
    norms = np.array([np.linalg.norm(M, 2) for M in models])
    best = norms.min()
    candidates = np.flatnonzero(norms <= best * (1 + 1e-8))
    if len(candidates) == 1:
        return models[candidates[0]].copy()

    def tie_score(i):
        diffs = models[i] - models
        return np.mean([np.linalg.norm(D @ D.T, 2) for D in diffs])

    return models[min(candidates, key=tie_score)].copy()


def _spd_power(A, power):
    w, U = np.linalg.eigh(A)
    if w.min() <= 0:
        raise ValueError("matrix is not positive definite")
    return (U * w**power) @ U.T


def _spd_log(A):
    w, U = np.linalg.eigh(A)
    if w.min() <= 0:
        raise ValueError("matrix is not positive definite")
    return (U * np.log(w)) @ U.T


def karcher_mean(mats, tol: float = 1e-10, max_iter: int = 200, step: float = 1.0) -> np.ndarray:
    """Riemannian (geometric) mean of SPD matrices by fixed-point iteration.

    Iterates X <- X^1/2 exp(step * mean_i log(X^-1/2 A_i X^-1/2)) X^1/2 and
    stops when the Riemannian gradient norm drops below tol.
    """
    mats = [np.asarray(A, dtype=float) for A in mats]
    for A in mats:
        _spd_power(A, 0.5)  # raises on non-SPD input
    if len(mats) == 1:
        return mats[0].copy()
    X = sum(mats) / len(mats)
    for _ in range(max_iter):
        Xh = _spd_power(X, 0.5)
        Xmh = _spd_power(X, -0.5)
        G = sum(_spd_log(Xmh @ A @ Xmh) for A in mats) / len(mats)
        if np.linalg.norm(G, "fro") <= tol:
            return 0.5 * (X + X.T)
        X = Xh @ sla.expm(step * G) @ Xh
        X = 0.5 * (X + X.T)
    raise RuntimeError(f"Karcher mean did not converge in {max_iter} iterations")


@dataclass
class SteinPrecomputation:
    """Everything needed to apply the inverse Stein operator repeatedly.

    T is None for the semi-diagonalized case (eigenvector matrix already
    factored out); then Mhat acts as the diagonal eigvals.  variant selects
    the recovery step of the forward solve: "eigvec" uses Z = T (Y - W) F^-T
    (the form the Woodbury derivation supports) while "alg1" uses T^-1 in
    its place, kept for comparison because the two printed sources disagree.
    """

    n: int
    eigvals: np.ndarray
    P: np.ndarray
    U_diag: np.ndarray
    shift: CirculantShift
    T: np.ndarray | None = None
    T_inv: np.ndarray | None = None
    mhat: np.ndarray | None = None
    variant: str = "eigvec"
    residual_tol: float = 1e-8

    @property
    def s(self):
        return len(self.eigvals)

    def apply_lhat(self, Z):
        """Forward action Z - Mhat Z Sigma^T, computed directly."""
        if self.T is None:
            return Z - self.eigvals[:, None] * shift_cols_right(Z)
        return Z - self.mhat @ shift_cols_right(Z)

    def apply_lhat_t(self, Z):
        """Forward action Z - Mhat^T Z Sigma, computed directly."""
        if self.T is None:
            return Z - self.eigvals[:, None] * shift_cols_left(Z)
        return Z - self.mhat.T @ shift_cols_left(Z)


def _build_tables(eigvals, n, singularity_floor):
    shift = circulant_setup(n)
    denom = 1.0 - np.outer(eigvals, shift.pi)
    bad = np.abs(denom) < singularity_floor
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise SteinSingularError(
            f"1 - lambda_{i} * pi_{j} = {denom[i, j]:.3e}: Mhat has an "
            f"eigenvalue too close to an {n}-th root of unity; pick another Mhat"
        )
    P = 1.0 / denom
    a = shift.f_e1 * shift.finv_en
    U_diag = 1.0 + eigvals * (P @ a)
    if (np.abs(U_diag) < singularity_floor).any():
        raise SteinSingularError("diagonal correction U is numerically singular")
    return shift, P, U_diag


def precompute(
    mhat: np.ndarray,
    n: int,
    singularity_floor: float = 1e-12,
    eigvec_cond_threshold: float = 1e8,
    variant: str = "eigvec",
) -> SteinPrecomputation:
    """Eigendecompose Mhat and tabulate the Stein-solve ingredients.

    Uses a symmetric eigensolver whenever Mhat is symmetric (orthogonal T);
    otherwise a general one, rejected if the eigenvector condition number
    exceeds eigvec_cond_threshold.
    """
    mhat = np.asarray(mhat, dtype=float)
    s = mhat.shape[0]
    symmetric = np.allclose(mhat, mhat.T, rtol=0, atol=1e-13 * max(1.0, np.abs(mhat).max()))
    if symmetric:
        w, T = np.linalg.eigh(mhat)
        eigvals = w.astype(complex)
        T = T.astype(complex)
        T_inv = T.T.copy()
    else:
        eigvals, T = np.linalg.eig(mhat)
        cond = np.linalg.cond(T)
        if cond > eigvec_cond_threshold:
            raise SteinSingularError(
                f"eigenvector matrix of Mhat has condition {cond:.2e} "
                f"(> {eigvec_cond_threshold:.1e}); Mhat too far from normal"
            )
        T_inv = np.linalg.inv(T)
    nrm = np.linalg.norm(mhat)
    recon = np.linalg.norm((T * eigvals) @ T_inv - mhat)
    if nrm > 0 and recon > 1e-10 * nrm:
        raise SteinSingularError(f"eigendecomposition of Mhat inaccurate ({recon / nrm:.2e})")
    shift, P, U_diag = _build_tables(eigvals, n, singularity_floor)
    return SteinPrecomputation(
        n=n, eigvals=eigvals, P=P, U_diag=U_diag, shift=shift,
        T=T, T_inv=T_inv, mhat=mhat, variant=variant,
    )


def precompute_diagonal(eigvals, n, singularity_floor: float = 1e-12) -> SteinPrecomputation:
    """Precomputation for the semi-diagonalized operator (T already removed)."""
    eigvals = np.asarray(eigvals, dtype=complex)
    shift, P, U_diag = _build_tables(eigvals, n, singularity_floor)
    return SteinPrecomputation(n=n, eigvals=eigvals, P=P, U_diag=U_diag, shift=shift)


def _realify(Z, what):
    zn = np.linalg.norm(Z)
    im = np.linalg.norm(Z.imag)
    if zn > 0 and im > 1e-8 * zn:
        raise SteinSolveError(f"{what} produced imaginary residue {im / zn:.2e}")
    return np.ascontiguousarray(Z.real)


def solve_stein(pc: SteinPrecomputation, V: np.ndarray, check_residual: bool = True) -> np.ndarray:
    """Solve Z - Mhat Z Sigma^T = V.

    Three steps: Y = P o (T^-1 V F^T), the rank-one correction
    W = P o (U^-1 Lambda (Y F^-1 e_n) e_1^T F^T), and the recovery
    Z = T (Y - W) F^-T.  e_1^T F^T is the all-ones row, so the correction
    is a rank-one outer product.
    """
    if V.shape != (pc.s, pc.n):
        raise ValueError(f"expected {(pc.s, pc.n)}, got {V.shape}")
    Vt = V if pc.T is None else pc.T_inv @ V
    Y = pc.P * row_fft(Vt)
    y = pc.eigvals * (Y @ pc.shift.finv_en) / pc.U_diag
    W = pc.P * y[:, None]  # P o outer(y, ones)
    core = row_ifft(Y - W)
    if pc.T is None:
        Z = core
    elif pc.variant == "eigvec":
        Z = pc.T @ core
    else:  # "alg1"
        Z = pc.T_inv @ core
    Z = _realify(Z, "solve_stein")
    if check_residual:
        vn = np.linalg.norm(V)
        if vn > 0:
            res = np.linalg.norm(pc.apply_lhat(Z) - V) / vn
            if res > pc.residual_tol:
                raise SteinSolveError(f"Stein solve residual {res:.2e} > {pc.residual_tol:.1e}")
    return Z


def solve_stein_transpose(pc: SteinPrecomputation, V: np.ndarray, check_residual: bool = True) -> np.ndarray:
    """Solve Z - Mhat^T Z Sigma = V (the transposed operator)."""
    if V.shape != (pc.s, pc.n):
        raise ValueError(f"expected {(pc.s, pc.n)}, got {V.shape}")
    Vt = V if pc.T is None else pc.T.T @ V
    G = pc.P * row_ifft(Vt)
    # G F^T e_1 is the row sum of G since F e_1 is all ones
    g = pc.eigvals * G.sum(axis=1) / pc.U_diag
    Hm = pc.P * np.outer(g, pc.shift.finv_en)
    core = row_fft(G - Hm)
    if pc.T is None:
        Z = core
    elif pc.variant == "eigvec":
        Z = pc.T_inv.T @ core
    else:  # "alg1"
        Z = pc.T.T @ core
    Z = _realify(Z, "solve_stein_transpose")
    if check_residual:
        vn = np.linalg.norm(V)
        if vn > 0:
            res = np.linalg.norm(pc.apply_lhat_t(Z) - V) / vn
            if res > pc.residual_tol:
                raise SteinSolveError(f"Stein solve residual {res:.2e} > {pc.residual_tol:.1e}")
    return Z


@dataclass(frozen=True)
class BoundReport:
    """Spectral upper bound for Lhat^-T L^T L Lhat^-1 and its ingredients."""

    mhat_norm: float
    max_D: float
    rho_N: float
    upper_bound: float


def prop31_bound(models, mhat: np.ndarray) -> BoundReport:
    """Evaluate the eigenvalue upper bound 1 + N/2 (rho + sqrt(rho^2 + 4 rho)).

    rho is max_m lambda_max(D_m^T D_m) times the geometric sum of powers of
    lambda_max(Mhat^T Mhat) (equal to N when that value is 1), with
    D_m = Mhat - M_m.
    """
    models = np.asarray(models, dtype=float)
    N = len(models)
    if N < 1:
        raise ValueError("need at least one model matrix")
    max_D = 0.0
    for M in models:
        D = mhat - M
        max_D = max(max_D, float(np.linalg.eigvalsh(D.T @ D).max()))
    lam = float(np.linalg.eigvalsh(mhat.T @ mhat).max())
    mhat_norm = np.sqrt(lam)
    if abs(lam - 1.0) <= 1e-12:
        geo = float(N)
    else:
        geo = (1.0 - lam**N) / (1.0 - lam)
    rho = geo * max_D
    upper = 1.0 + 0.5 * N * (rho + np.sqrt(rho * rho + 4.0 * rho))
    return BoundReport(mhat_norm=mhat_norm, max_D=max_D, rho_N=rho, upper_bound=upper)

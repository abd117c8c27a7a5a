"""Preconditioners built on the approximate constraint operator Lhat.

Four operators are provided: the inexact Schur complement Shat (alone for
the SPD system, with rank-0 or low-rank observation update), and the three
saddle-point preconditioners P_D (block diagonal), P_T (block triangular)
and P_C (constraint preconditioner).  For r > 0 the work is done in the
coordinates that diagonalize Mhat, where every Stein solve is linear in s.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import stein
from .blocks import (
    DimensionError,
    SaddleTriple,
    SystemData,
    apply_D,
    apply_H_chain,
    apply_L,
)
from .stein import MhatStrategy, SteinPrecomputation


@dataclass
class LowRankUpdate:
    """Leading eigenpairs of the observation normal matrix H^T R^-1 H.

    Vr has orthonormal columns, upsilon the matching nonnegative eigenvalues
    in descending order.  Gr = Vr diag(upsilon)^1/2 is the rank factor whose
    outer product Gr Gr^T truncates H^T R^-1 H.
    """

    Vr: np.ndarray
    upsilon: np.ndarray
    r: int

    def __post_init__(self):
        if self.Vr.shape[1] != self.r or len(self.upsilon) != self.r:
            raise DimensionError("low-rank factor shapes do not match r")
        if self.r and (np.diff(self.upsilon) > 1e-12).any():
            raise ValueError("eigenvalues must be sorted descending")

    @property
    def Gr(self):
        return self.Vr * np.sqrt(np.maximum(self.upsilon, 0.0))


def build_lowrank(sys: SystemData, r: int, T: np.ndarray | None = None) -> LowRankUpdate:
    """Truncated eigendecomposition of H^T R^-1 H, or of its congruence by T.

    With T given the observation operator is first transformed to HT, which
    is the form needed in the diagonalized coordinates.
    """
    if not 0 <= r <= sys.p:
        raise ValueError(f"rank must be in [0, {sys.p}], got {r}")
    H = sys.H if T is None else sys.H @ T
    G = H.T @ sla.cho_solve(sys.R_cho, H)
    w, V = np.linalg.eigh(G)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    return LowRankUpdate(Vr=V[:, :r].copy(), upsilon=np.maximum(w[:r], 0.0), r=r)


@dataclass
class TransformedSystem:
    """The inner problem congruence-transformed by the eigenvectors of Mhat.

    B_t = T^-1 B T^-T, Q_t likewise, H_t = H T; the constraint operator
    becomes I (x) I - Sigma (x) Lambda with diagonal Lambda, held as a
    semi-diagonalized Stein precomputation.  Only real T is supported, which
    covers every symmetric Mhat (orthogonal eigenvectors).
    """

    T: np.ndarray
    T_inv: np.ndarray
    B_t: np.ndarray
    Q_t: np.ndarray
    H_t: np.ndarray
    eigvals: np.ndarray
    stein_pc: SteinPrecomputation
    _bq_cho: tuple | None = None

    def bq_solve(self, Z):
        """Solve with the transformed block-diagonal D, factored on first use."""
        if self._bq_cho is None:
            self._bq_cho = (sla.cho_factor(self.B_t), sla.cho_factor(self.Q_t))
        cB, cQ = self._bq_cho
        out = np.empty_like(Z)
        out[:, :1] = sla.cho_solve(cB, Z[:, :1])
        out[:, 1:] = sla.cho_solve(cQ, Z[:, 1:])
        return out


def build_transform(sys: SystemData, pc: SteinPrecomputation) -> TransformedSystem:
    """Transformed matrices for the semi-diagonalized coordinates."""
    if np.abs(pc.T.imag).max() > 1e-12 or np.abs(pc.eigvals.imag).max() > 1e-12:
        raise ValueError(
            "transformed path needs a real eigendecomposition of Mhat; "
            "use a symmetric Mhat strategy"
        )
    T = pc.T.real.copy()
    T_inv = pc.T_inv.real.copy()
    eigvals = pc.eigvals.real.copy()
    B_t = T_inv @ sys.B @ T_inv.T
    Q_t = T_inv @ sys.Q @ T_inv.T
    H_t = sys.H @ T
    diag_pc = stein.precompute_diagonal(eigvals, sys.ncols)
    return TransformedSystem(
        T=T, T_inv=T_inv, B_t=B_t, Q_t=Q_t, H_t=H_t, eigvals=eigvals, stein_pc=diag_pc
    )


def _apply_bq(B, Q, Z):
    # column 0 carries the background block, the rest the model-error blocks
    out = np.empty_like(Z)
    out[:, :1] = B @ Z[:, :1]
    out[:, 1:] = Q @ Z[:, 1:]
    return out


def apply_E(ts_or_pc, sys: SystemData, V: np.ndarray, counters=None) -> np.ndarray:
    """Apply E = Lhat^-1 D Lhat^-T, the rank-0 inexact Schur inverse.

    Accepts either the untransformed Stein precomputation (D applied through
    sys) or a TransformedSystem (D applied through B_t, Q_t).
    """
    if isinstance(ts_or_pc, TransformedSystem):
        pc = ts_or_pc.stein_pc
        W = stein.solve_stein_transpose(pc, V)
        W = _apply_bq(ts_or_pc.B_t, ts_or_pc.Q_t, W)
        out = stein.solve_stein(pc, W)
    else:
        pc = ts_or_pc
        W = stein.solve_stein_transpose(pc, V)
        W = apply_D(sys, W)
        out = stein.solve_stein(pc, W)
    if counters is not None:
        counters["stein_solves"] = counters.get("stein_solves", 0) + 2
    return out


def apply_shat_inv_r0(pc: SteinPrecomputation, sys: SystemData, V: np.ndarray) -> np.ndarray:
    """Rank-0 approximate Schur inverse Shat^-1 = Lhat^-1 D Lhat^-T."""
    return apply_E(pc, sys, V)


def inner_action(ts: TransformedSystem, lr: LowRankUpdate, Z: np.ndarray) -> np.ndarray:
    """Action of I + K^T E K on an r x (N+1) block, all in diagonal coordinates.

    K stacks the rank factor Gr on every time block, so the product needs one
    transposed and one forward Stein solve plus the block-diagonal D.
    """
    G = lr.Gr
    Y = stein.solve_stein_transpose(ts.stein_pc, G @ Z)
    W = _apply_bq(ts.B_t, ts.Q_t, Y)
    U = stein.solve_stein(ts.stein_pc, W)
    return Z + G.T @ U


def _shat_fwd(ts: TransformedSystem, lr: LowRankUpdate, Y: np.ndarray) -> np.ndarray:
    """Exact forward action of the low-rank-updated Schur approximation,
    Lhat^T D^-1 Lhat + K K^T, in the semi-diagonalized coordinates."""
    W = ts.stein_pc.apply_lhat(Y)
    W = ts.bq_solve(W)
    W = ts.stein_pc.apply_lhat_t(W)
    return W + lr.Gr @ (lr.Gr.T @ Y)


def apply_shat_inv_lowrank(
    ts: TransformedSystem,
    lr: LowRankUpdate,
    sys: SystemData,
    V: np.ndarray,
    inner_tol: float = 1e-10,
    inner_max_iter: int = 2000,
    counters=None,
) -> np.ndarray:
    """Low-rank-updated Schur inverse via the Woodbury identity.

    Solves with Shat = Lhat^T D^-1 Lhat + K K^T by two applications of
    E = Lhat^-1 D Lhat^-T around an r(N+1)-dimensional correction system,
    which is itself solved iteratively by an unpreconditioned matrix CG.
    One sweep of iterative refinement follows: the inner CG tolerance is
    relative to its own residual, and the outer Krylov method needs the
    Schur solve a few orders tighter than that, which the correction step
    delivers by roughly squaring the effective accuracy.  Input and output
    live in the original coordinates; the transform is applied on entry
    and undone on exit.
    """
    from .krylov import inner_matcg

    if lr.r < 1:
        raise ValueError("low-rank path needs r >= 1")
    G = lr.Gr

    def woodbury(W):
        Ev = apply_E(ts, sys, W, counters)
        rhs = G.T @ Ev
        Zin, inner_iters = inner_matcg(
            lambda Z: inner_action(ts, lr, Z), rhs, tol=inner_tol, max_iter=inner_max_iter
        )
        if counters is not None:
            counters.setdefault("inner_iterations", []).append(inner_iters)
        corr = apply_E(ts, sys, G @ Zin, counters)
        return Ev - corr

    Vt = ts.T.T @ V
    Y = woodbury(Vt)
    res = Vt - _shat_fwd(ts, lr, Y)
    Y = Y + woodbury(res)
    return ts.T @ Y


@dataclass
class PrecondConfig:
    """Which preconditioner to build and with what approximations."""

    kind: str = "Shat"  # Shat, P_D, P_T, P_C
    r: int = 0
    # two orders below the usual outer tolerance; the preconditioner must be
    # applied more accurately than the residual level the outer solver targets
    inner_tol: float = 1e-10
    inner_max_iter: int = 2000
    mhat_strategy: MhatStrategy = field(default_factory=MhatStrategy)
    use_transform: bool | None = None  # None: transform exactly when r > 0

    _KINDS = ("Shat", "P_D", "P_T", "P_C")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown preconditioner kind {self.kind!r}")
        if self.r < 0:
            raise ValueError("rank must be nonnegative")


class Preconditioner:
    """Bundles the precomputed state of one preconditioner and counts its work.

    counters tracks stein_solves, shat_applies and the per-call inner CG
    iteration counts so that tests and reports can observe skipped work.
    """

    def __init__(self, sys: SystemData, cfg: PrecondConfig, mhat: np.ndarray | None = None):
        self.sys = sys
        self.cfg = cfg
        if mhat is None:
            mhat = stein.select_mhat(sys.models, cfg.mhat_strategy)
        self.mhat = mhat
        self.pc = stein.precompute(mhat, sys.ncols)
        use_transform = cfg.use_transform
        if use_transform is None:
            use_transform = cfg.r > 0 and cfg.kind != "P_C"
        self.ts = build_transform(sys, self.pc) if use_transform else None
        if cfg.r > 0 and cfg.kind != "P_C":
            self.lr = build_lowrank(sys, cfg.r, T=self.ts.T)
        else:
            self.lr = None
        self.counters: dict = {"stein_solves": 0, "shat_applies": 0, "inner_iterations": []}

    def apply_shat_inv(self, V: np.ndarray) -> np.ndarray:
        self.counters["shat_applies"] += 1
        if self.lr is not None:
            return apply_shat_inv_lowrank(
                self.ts, self.lr, self.sys, V,
                inner_tol=self.cfg.inner_tol,
                inner_max_iter=self.cfg.inner_max_iter,
                counters=self.counters,
            )
        return apply_E(self.pc, self.sys, V, self.counters)

    def apply_saddle_inv(self, v: SaddleTriple, hint: str | None = None) -> SaddleTriple:
        if self.cfg.kind == "P_D":
            return self._apply_P_D_inv(v, hint)
        if self.cfg.kind == "P_T":
            return self._apply_P_T_inv(v)
        if self.cfg.kind == "P_C":
            return self._apply_P_C_inv(v)
        raise ValueError(f"{self.cfg.kind} is not a saddle-point preconditioner")

    def _apply_P_D_inv(self, v: SaddleTriple, hint: str | None) -> SaddleTriple:
        # hints encode the exact alternating zero blocks of the P_D basis;
        # the corresponding inverse applications are skipped outright
        if hint == "third_zero":
            theta = apply_D(self.sys, v.theta, inverse=True)
            lam = apply_H_chain(self.sys, v.lam, "Rinv")
            x = np.zeros_like(v.x)
        elif hint == "first_two_zero":
            theta = np.zeros_like(v.theta)
            lam = np.zeros_like(v.lam)
            x = self.apply_shat_inv(v.x)
        else:
            theta = apply_D(self.sys, v.theta, inverse=True)
            lam = apply_H_chain(self.sys, v.lam, "Rinv")
            x = self.apply_shat_inv(v.x)
        return SaddleTriple(theta, lam, x)

    def _apply_P_T_inv(self, v: SaddleTriple) -> SaddleTriple:
        # the negated Schur block is what makes the preconditioned
        # spectrum collapse to 1 when Shat is exact
        x = -self.apply_shat_inv(v.x)
        lam = apply_H_chain(self.sys, v.lam - apply_H_chain(self.sys, x, "H"), "Rinv")
        theta = apply_D(self.sys, v.theta - apply_L(self.sys, x), inverse=True)
        return SaddleTriple(theta, lam, x)

    def _apply_P_C_inv(self, v: SaddleTriple) -> SaddleTriple:
        # exact solve of [[D, 0, Lhat], [0, R, 0], [Lhat^T, 0, 0]] w = v
        # in the order lambda, theta, x; no D^-1 application is needed
        lam = apply_H_chain(self.sys, v.lam, "Rinv")
        theta = stein.solve_stein_transpose(self.pc, v.x)
        x = stein.solve_stein(self.pc, v.theta - apply_D(self.sys, theta))
        self.counters["stein_solves"] += 2
        return SaddleTriple(theta, lam, x)

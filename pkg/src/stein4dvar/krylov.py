"""Matrix-oriented Krylov solvers and their vectorized reference twins.

GMRES runs on SaddleTriple blocks and CG on state block matrices, both with
Frobenius inner products, which makes them equivalent to the standard
vectorized methods in exact arithmetic.  The vectorized versions are kept
as independent reference implementations (and as the driver for the
chain-cut k-block baseline) so the equivalence can be tested per iteration.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .blocks import (
    SaddleTriple,
    SystemData,
    apply_A,
    apply_D,
    apply_H_chain,
    apply_L,
    apply_S,
    saddle_rhs,
    solve_L,
    spd_rhs,
    triple_inner,
)


class NotSPDError(RuntimeError):
    """CG observed a nonpositive curvature; the operator is not SPD."""


class InnerSolveError(RuntimeError):
    """The inner correction solve did not reach its tolerance."""


@dataclass
class SolveConfig:
    tol: float = 1e-8
    max_iter: int = 1000
    flexible: bool = False
    record_history: bool = True
    record_basis: bool = False
    theorem21_optimization: bool = False


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    wall_time: float = 0.0
    inner_iterations: list = field(default_factory=list)
    converged: bool = False
    basis: list | None = None


_BREAKDOWN = 1e-14


def _fdot(A, B):
    # vec-order inner product: summation order matches the vectorized
    # reference exactly, so the two CG variants stay bit-compatible
    return float(np.dot(A.ravel(order="F"), B.ravel(order="F")))


def _fnorm(A):
    return np.sqrt(_fdot(A, A))


def _parity_hint(index):
    # basis vectors with a zero third block sit at even indices when the
    # rhs third block vanishes; the complement holds at odd indices
    return "third_zero" if index % 2 == 0 else "first_two_zero"


def _impose_parity(v: SaddleTriple, index):
    if index % 2 == 0:
        v.x[:] = 0.0
    else:
        v.theta[:] = 0.0
        v.lam[:] = 0.0


def matgmres(apply_op, apply_P_inv, rhs: SaddleTriple, cfg: SolveConfig):
    """Right-preconditioned full GMRES on saddle-point block triples.

    apply_P_inv(v, hint) may be None for the unpreconditioned method; the
    preconditioned basis vectors are stored and used for the solution
    recovery, so flexible (iteration-dependent) preconditioners are handled
    by the same code path.  With cfg.theorem21_optimization and a zero
    third rhs block, the alternating zero-block structure of the basis is
    imposed exactly and the parity hint lets the preconditioner skip the
    inverse applications that would act on zero blocks.
    """
    t0 = time.perf_counter()
    beta = rhs.norm()
    if beta == 0.0:
        return rhs.copy(), SolveReport(converged=True, wall_time=time.perf_counter() - t0)
    use_parity = cfg.theorem21_optimization and np.linalg.norm(rhs.x) == 0.0
    m = cfg.max_iter
    V = [rhs.scaled(1.0 / beta)]
    Z = []
    Hm = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    history = []
    converged = False
    niter = 0
    for j in range(m):
        niter = j + 1
        hint = _parity_hint(j) if use_parity else None
        z = V[j].copy() if apply_P_inv is None else apply_P_inv(V[j], hint)
        Z.append(z)
        w = apply_op(z)
        # modified Gram-Schmidt, executed twice
        for _ in range(2):
            for i in range(j + 1):
                h = triple_inner(V[i], w)
                Hm[i, j] += h
                w.axpy(-h, V[i])
        hj1 = w.norm()
        Hm[j + 1, j] = hj1
        lucky = hj1 <= _BREAKDOWN * beta
        if not lucky:
            V.append(w.scaled(1.0 / hj1))
            if use_parity:
                _impose_parity(V[-1], j + 1)
        # apply accumulated Givens rotations to the new column
        for i in range(j):
            t = cs[i] * Hm[i, j] + sn[i] * Hm[i + 1, j]
            Hm[i + 1, j] = -sn[i] * Hm[i, j] + cs[i] * Hm[i + 1, j]
            Hm[i, j] = t
        denom = np.hypot(Hm[j, j], Hm[j + 1, j])
        cs[j], sn[j] = Hm[j, j] / denom, Hm[j + 1, j] / denom
        Hm[j, j] = denom
        Hm[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        rel = abs(g[j + 1]) / beta
        if cfg.record_history:
            history.append(rel)
        if rel <= cfg.tol or lucky:
            converged = True
            break
    k = niter
    y = np.linalg.solve(np.triu(Hm[:k, :k]), g[:k])
    x = Z[0].scaled(y[0])
    for i in range(1, k):
        x.axpy(y[i], Z[i])
    return x, SolveReport(
        iterations=k,
        residual_history=history,
        wall_time=time.perf_counter() - t0,
        converged=converged,
        basis=V if cfg.record_basis else None,
    )


def matcg(apply_op, apply_P_inv, rhs: np.ndarray, cfg: SolveConfig):
    """Preconditioned CG on state block matrices with trace inner products.

    With cfg.flexible the direction update uses the Polak-Ribiere style
    beta built from r_m - r_{m-1}, which stays valid when the
    preconditioner changes between iterations (inner iterative solves).
    """
    t0 = time.perf_counter()
    nrhs = _fnorm(rhs)
    if nrhs == 0.0:
        return np.zeros_like(rhs), SolveReport(converged=True, wall_time=time.perf_counter() - t0)
    X = np.zeros_like(rhs)
    R = rhs.copy()
    Zm = R.copy() if apply_P_inv is None else apply_P_inv(R)
    Pm = Zm.copy()
    rz = _fdot(R, Zm)
    history = []
    converged = False
    niter = 0
    for _ in range(cfg.max_iter):
        Q = apply_op(Pm)
        pq = _fdot(Pm, Q)
        if pq <= 0.0:
            raise NotSPDError(f"nonpositive curvature {pq:.3e} in CG")
        alpha = rz / pq
        X += alpha * Pm
        R_new = R - alpha * Q
        niter += 1
        rel = _fnorm(R_new) / nrhs
        if cfg.record_history:
            history.append(rel)
        if rel <= cfg.tol:
            converged = True
            break
        Z_new = R_new.copy() if apply_P_inv is None else apply_P_inv(R_new)
        if cfg.flexible:
            beta = _fdot(Z_new, R_new - R) / rz
        else:
            beta = _fdot(R_new, Z_new) / rz
        rz = _fdot(R_new, Z_new)
        Pm = Z_new + beta * Pm
        R = R_new
    return X, SolveReport(
        iterations=niter,
        residual_history=history,
        wall_time=time.perf_counter() - t0,
        converged=converged,
    )


def inner_matcg(action, rhs: np.ndarray, tol: float = 1e-8, max_iter: int = 500):
    """Unpreconditioned CG on small r x (N+1) correction blocks.

    Returns the solution and the iteration count; raises when the relative
    residual does not reach tol within max_iter iterations.
    """
    nrhs = np.linalg.norm(rhs)
    if nrhs == 0.0:
        return np.zeros_like(rhs), 0
    X = np.zeros_like(rhs)
    R = rhs.copy()
    P = R.copy()
    rr = float(np.vdot(R, R))
    for it in range(1, max_iter + 1):
        Q = action(P)
        pq = float(np.vdot(P, Q))
        if pq <= 0.0:
            raise NotSPDError(f"nonpositive curvature {pq:.3e} in inner CG")
        alpha = rr / pq
        X += alpha * P
        R -= alpha * Q
        rr_new = float(np.vdot(R, R))
        if np.sqrt(rr_new) <= tol * nrhs:
            return X, it
        P = R + (rr_new / rr) * P
        rr = rr_new
    raise InnerSolveError(
        f"inner CG: residual {np.sqrt(rr) / nrhs:.3e} after {max_iter} iterations"
    )


# --- vectorized references -------------------------------------------------

def vecgmres(matvec, psolve, b: np.ndarray, cfg: SolveConfig):
    """Plain right-preconditioned GMRES on vectors, mirroring matgmres.

    Kept deliberately close to the block version (double Gram-Schmidt,
    Givens rotations, stored preconditioned vectors) so the two produce
    matching residual histories down to roundoff.
    """
    t0 = time.perf_counter()
    beta = np.linalg.norm(b)
    if beta == 0.0:
        return np.zeros_like(b), SolveReport(converged=True, wall_time=time.perf_counter() - t0)
    m = cfg.max_iter
    V = [b / beta]
    Z = []
    Hm = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    history = []
    converged = False
    niter = 0
    for j in range(m):
        niter = j + 1
        z = V[j].copy() if psolve is None else psolve(V[j])
        Z.append(z)
        w = matvec(z)
        for _ in range(2):
            for i in range(j + 1):
                h = float(np.dot(V[i], w))
                Hm[i, j] += h
                w = w - h * V[i]
        hj1 = np.linalg.norm(w)
        Hm[j + 1, j] = hj1
        lucky = hj1 <= _BREAKDOWN * beta
        if not lucky:
            V.append(w / hj1)
        for i in range(j):
            t = cs[i] * Hm[i, j] + sn[i] * Hm[i + 1, j]
            Hm[i + 1, j] = -sn[i] * Hm[i, j] + cs[i] * Hm[i + 1, j]
            Hm[i, j] = t
        denom = np.hypot(Hm[j, j], Hm[j + 1, j])
        cs[j], sn[j] = Hm[j, j] / denom, Hm[j + 1, j] / denom
        Hm[j, j] = denom
        Hm[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        rel = abs(g[j + 1]) / beta
        if cfg.record_history:
            history.append(rel)
        if rel <= cfg.tol or lucky:
            converged = True
            break
    k = niter
    y = np.linalg.solve(np.triu(Hm[:k, :k]), g[:k])
    x = sum(y[i] * Z[i] for i in range(k))
    return x, SolveReport(
        iterations=k,
        residual_history=history,
        wall_time=time.perf_counter() - t0,
        converged=converged,
    )


def veccg(matvec, psolve, b: np.ndarray, cfg: SolveConfig):
    """Plain preconditioned CG on vectors, mirroring matcg."""
    t0 = time.perf_counter()
    nrhs = np.sqrt(float(np.dot(b, b)))
    if nrhs == 0.0:
        return np.zeros_like(b), SolveReport(converged=True, wall_time=time.perf_counter() - t0)
    x = np.zeros_like(b)
    r = b.copy()
    z = r.copy() if psolve is None else psolve(r)
    p = z.copy()
    rz = float(np.dot(r, z))
    history = []
    converged = False
    niter = 0
    for _ in range(cfg.max_iter):
        q = matvec(p)
        pq = float(np.dot(p, q))
        if pq <= 0.0:
            raise NotSPDError(f"nonpositive curvature {pq:.3e} in CG")
        alpha = rz / pq
        x += alpha * p
        r_new = r - alpha * q
        niter += 1
        rel = np.sqrt(float(np.dot(r_new, r_new))) / nrhs
        if cfg.record_history:
            history.append(rel)
        if rel <= cfg.tol:
            converged = True
            break
        z_new = r_new.copy() if psolve is None else psolve(r_new)
        if cfg.flexible:
            beta = float(np.dot(z_new, r_new - r)) / rz
        else:
            beta = float(np.dot(r_new, z_new)) / rz
        rz = float(np.dot(r_new, z_new))
        p = z_new + beta * p
        r = r_new
    return x, SolveReport(
        iterations=niter,
        residual_history=history,
        wall_time=time.perf_counter() - t0,
        converged=converged,
    )


# --- chain-cut k-block baseline --------------------------------------------

def _shat_inv_cut(sys: SystemData, V, k):
    W = solve_L(sys, V, transpose=True, cut=k)
    return solve_L(sys, apply_D(sys, W), cut=k)


def vec_baseline_solve(sys: SystemData, k: int, cfg: SolveConfig, kind: str = "Shat"):
    """Vectorized solve with the k-block chain-cut approximation of L.

    Every k-th subdiagonal model block of L is dropped, so triangular
    solves with the approximation need at most k-1 serial products;
    k = N+1 keeps the exact L.  kind Shat runs CG on the SPD system, the
    saddle kinds (P_D, P_T, P_C) run GMRES.
    """
    if not 1 <= k <= sys.ncols:
        raise ValueError(f"k must be in [1, {sys.ncols}], got {k}")
    s, p, n = sys.s, sys.p, sys.ncols
    cut = None if k == n else k

    if kind == "Shat":
        def matvec(v):
            Z = v.reshape((s, n), order="F")
            return apply_S(sys, Z).ravel(order="F")

        def psolve(v):
            Z = v.reshape((s, n), order="F")
            return _shat_inv_cut(sys, Z, cut).ravel(order="F")

        b = spd_rhs(sys).ravel(order="F")
        x, rep = veccg(matvec, psolve, b, cfg)
        return x, rep

    def matvec(v):
        t = SaddleTriple.from_vector(v, s, p, n)
        return apply_A(sys, t).to_vector()

    def psolve(v):
        t = SaddleTriple.from_vector(v, s, p, n)
        if kind == "P_D":
            out = SaddleTriple(
                apply_D(sys, t.theta, inverse=True),
                apply_H_chain(sys, t.lam, "Rinv"),
                _shat_inv_cut(sys, t.x, cut),
            )
        elif kind == "P_T":
            # negated Schur block, matching the matrix-oriented form
            x = -_shat_inv_cut(sys, t.x, cut)
            lam = apply_H_chain(sys, t.lam - apply_H_chain(sys, x, "H"), "Rinv")
            theta = apply_D(sys, t.theta - apply_L(sys, x), inverse=True)
            out = SaddleTriple(theta, lam, x)
        elif kind == "P_C":
            lam = apply_H_chain(sys, t.lam, "Rinv")
            theta = solve_L(sys, t.x, transpose=True, cut=cut)
            x = solve_L(sys, t.theta - apply_D(sys, theta), cut=cut)
            out = SaddleTriple(theta, lam, x)
        else:
            raise ValueError(f"unknown preconditioner kind {kind!r}")
        return out.to_vector()

    b = saddle_rhs(sys).to_vector()
    x, rep = vecgmres(matvec, psolve, b, cfg)
    return x, rep

import numpy as np
import pytest

from stein4dvar.blocks import (
    DimensionError,
    FactorizationError,
    SaddleTriple,
    SystemData,
    apply_A,
    apply_D,
    apply_H_chain,
    apply_L,
    apply_S,
    circulant_setup,
    dense_circulant,
    dense_sigma,
    row_fft,
    row_ifft,
    saddle_rhs,
    shift_cols_left,
    shift_cols_right,
    solve_L,
    spd_rhs,
    triple_inner,
)


def random_system(seed, s=5, p=3, N=4, model_scale=0.5):
    rng = np.random.default_rng(seed)

    def spd(m):
        A = rng.standard_normal((m, m))
        return A @ A.T + m * np.eye(m)

    return SystemData(
        B=spd(s), Q=spd(s), R=spd(p), H=rng.standard_normal((p, s)),
        models=model_scale * rng.standard_normal((N, s, s)),
        b=rng.standard_normal((s, N + 1)), d=rng.standard_normal((p, N + 1)),
    )


def dense_D(sys):
    n = sys.ncols
    D = np.kron(np.eye(n), sys.Q)
    D[: sys.s, : sys.s] = sys.B
    return D


def dense_L_mat(sys, cut=None):
    s, n = sys.s, sys.ncols
    L = np.eye(s * n)
    for i in range(1, n):
        if cut is not None and i % cut == 0:
            continue
        L[i * s : (i + 1) * s, (i - 1) * s : i * s] = -sys.models[i - 1]
    return L


class TestApplyD:
    def test_zero(self):
        sys = random_system(0)
        assert np.all(apply_D(sys, np.zeros((sys.s, sys.ncols))) == 0)

    def test_diagonal_case(self):
        s, N = 2, 2
        sys = SystemData(
            B=2 * np.eye(s), Q=3 * np.eye(s), R=np.eye(1), H=np.zeros((1, s)),
            models=np.zeros((N, s, s)), b=np.zeros((s, N + 1)), d=np.zeros((1, N + 1)),
        )
        out = apply_D(sys, np.ones((s, N + 1)))
        assert np.allclose(out[:, 0], 2.0)
        assert np.allclose(out[:, 1:], 3.0)

    def test_dense_oracle(self):
        sys = random_system(1)
        Z = np.random.default_rng(2).standard_normal((sys.s, sys.ncols))
        got = apply_D(sys, Z).ravel(order="F")
        want = dense_D(sys) @ Z.ravel(order="F")
        assert np.linalg.norm(got - want) <= 1e-13 * np.linalg.norm(want)

    def test_inverse_roundtrip(self):
        sys = random_system(3)
        Z = np.random.default_rng(4).standard_normal((sys.s, sys.ncols))
        back = apply_D(sys, apply_D(sys, Z), inverse=True)
        assert np.linalg.norm(back - Z) <= 1e-10 * np.linalg.norm(Z)

    def test_dimension_error(self):
        sys = random_system(5)
        with pytest.raises(DimensionError):
            apply_D(sys, np.zeros((sys.s + 1, sys.ncols)))

    def test_non_spd_rejected(self):
        s = 3
        bad = np.diag([1.0, -1.0, 1.0])
        with pytest.raises(FactorizationError):
            SystemData(
                B=bad, Q=np.eye(s), R=np.eye(2), H=np.zeros((2, s)),
                models=np.zeros((1, s, s)), b=np.zeros((s, 2)), d=np.zeros((2, 2)),
            )


class TestApplyL:
    def test_zero_models_identity(self):
        sys = random_system(0, model_scale=0.0)
        Z = np.random.default_rng(1).standard_normal((sys.s, sys.ncols))
        assert np.allclose(apply_L(sys, Z), Z)
        assert np.allclose(apply_L(sys, Z, transpose=True), Z)

    @pytest.mark.parametrize("seed", range(5))
    def test_dense_oracle(self, seed):
        sys = random_system(seed, s=3, N=3)
        Z = np.random.default_rng(seed + 50).standard_normal((sys.s, sys.ncols))
        Ld = dense_L_mat(sys)
        got = apply_L(sys, Z).ravel(order="F")
        want = Ld @ Z.ravel(order="F")
        assert np.linalg.norm(got - want) <= 1e-12 * np.linalg.norm(want)
        gt = apply_L(sys, Z, transpose=True).ravel(order="F")
        wt = Ld.T @ Z.ravel(order="F")
        assert np.linalg.norm(gt - wt) <= 1e-12 * np.linalg.norm(wt)

    def test_adjoint_identity(self):
        sys = random_system(7, s=8, N=6)
        rng = np.random.default_rng(8)
        Z = rng.standard_normal((sys.s, sys.ncols))
        W = rng.standard_normal((sys.s, sys.ncols))
        lhs = np.vdot(apply_L(sys, Z), W)
        rhs = np.vdot(Z, apply_L(sys, W, transpose=True))
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)

    @pytest.mark.parametrize("transpose", [False, True])
    def test_solve_roundtrip(self, transpose):
        sys = random_system(9)
        V = np.random.default_rng(10).standard_normal((sys.s, sys.ncols))
        X = solve_L(sys, V, transpose=transpose)
        assert np.allclose(apply_L(sys, X, transpose=transpose), V, atol=1e-10)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_solve_cut_matches_dense(self, k):
        sys = random_system(11, N=6)
        V = np.random.default_rng(12).standard_normal((sys.s, sys.ncols))
        Ld = dense_L_mat(sys, cut=k)
        want = np.linalg.solve(Ld, V.ravel(order="F"))
        got = solve_L(sys, V, cut=k).ravel(order="F")
        assert np.linalg.norm(got - want) <= 1e-11 * np.linalg.norm(want)
        wantT = np.linalg.solve(Ld.T, V.ravel(order="F"))
        gotT = solve_L(sys, V, transpose=True, cut=k).ravel(order="F")
        assert np.linalg.norm(gotT - wantT) <= 1e-11 * np.linalg.norm(wantT)

    def test_cut_full_equals_exact(self):
        sys = random_system(13)
        V = np.random.default_rng(14).standard_normal((sys.s, sys.ncols))
        assert np.allclose(solve_L(sys, V, cut=sys.ncols), solve_L(sys, V))


class TestHChain:
    def test_selection(self):
        s, p, N = 5, 2, 2
        H = np.zeros((p, s))
        H[np.arange(p), np.arange(p)] = 1.0
        sys = SystemData(
            B=np.eye(s), Q=np.eye(s), R=np.eye(p), H=H,
            models=np.zeros((N, s, s)), b=np.zeros((s, N + 1)), d=np.zeros((p, N + 1)),
        )
        Z = np.random.default_rng(0).standard_normal((s, N + 1))
        assert np.allclose(apply_H_chain(sys, Z, "H"), Z[:p])
        assert np.allclose(apply_H_chain(sys, Z, "HtRinvH")[:p], Z[:p])
        assert np.allclose(apply_H_chain(sys, Z, "HtRinvH")[p:], 0.0)

    def test_dense_oracle(self):
        sys = random_system(1, s=7, p=4, N=3)
        rng = np.random.default_rng(2)
        n = sys.ncols
        Z = rng.standard_normal((sys.s, n))
        W = rng.standard_normal((sys.p, n))
        Hd = np.kron(np.eye(n), sys.H)
        Rd = np.kron(np.eye(n), sys.R)
        checks = [
            (apply_H_chain(sys, Z, "H"), Hd @ Z.ravel(order="F")),
            (apply_H_chain(sys, W, "Ht"), Hd.T @ W.ravel(order="F")),
            (apply_H_chain(sys, W, "Rinv"), np.linalg.solve(Rd, W.ravel(order="F"))),
            (apply_H_chain(sys, Z, "HtRinvH"), Hd.T @ np.linalg.solve(Rd, Hd @ Z.ravel(order="F"))),
        ]
        for got, want in checks:
            assert np.linalg.norm(got.ravel(order="F") - want) <= 1e-12 * max(1, np.linalg.norm(want))


class TestCirculant:
    def test_n2(self):
        cs = circulant_setup(2)
        assert np.allclose(cs.pi, [1.0, -1.0])

    def test_n4(self):
        cs = circulant_setup(4)
        want = np.exp(-2j * np.pi * np.arange(4) / 4)
        assert np.allclose(cs.pi, want)

    def test_reconstruct_C(self):
        n = 8
        cs = circulant_setup(n)
        F = np.fft.fft(np.eye(n))
        C = np.linalg.solve(F, np.diag(cs.pi) @ F)
        assert np.linalg.norm(C - dense_circulant(n)) <= 1e-13

    def test_unit_modulus(self):
        cs = circulant_setup(9)
        assert np.allclose(np.abs(cs.pi), 1.0)

    def test_row_ffts_are_F_actions(self):
        n, s = 6, 4
        F = np.fft.fft(np.eye(n))
        Z = np.random.default_rng(3).standard_normal((s, n))
        assert np.allclose(row_fft(Z), Z @ F.T)
        assert np.allclose(row_fft(Z), Z @ F)  # F symmetric
        assert np.allclose(row_ifft(row_fft(Z)), Z)

    def test_shifts_match_sigma(self):
        n, s = 5, 3
        Z = np.random.default_rng(4).standard_normal((s, n))
        Sig = dense_sigma(n)
        assert np.allclose(shift_cols_right(Z), Z @ Sig.T)
        assert np.allclose(shift_cols_left(Z), Z @ Sig)


class TestTriple:
    def test_zero(self):
        u = SaddleTriple.zeros(3, 2, 4)
        assert triple_inner(u, u) == 0.0

    def test_unit_entry(self):
        u = SaddleTriple.zeros(3, 2, 4)
        u.lam[1, 2] = 1.0
        assert triple_inner(u, u) == 1.0

    def test_vectorization_oracle(self):
        rng = np.random.default_rng(5)
        s, p, n = 5, 3, 5

        def rand():
            return SaddleTriple(
                rng.standard_normal((s, n)), rng.standard_normal((p, n)),
                rng.standard_normal((s, n)),
            )

        u, v = rand(), rand()
        want = float(np.dot(u.to_vector(), v.to_vector()))
        assert abs(triple_inner(u, v) - want) <= 1e-15 * abs(want)

    def test_vector_roundtrip(self):
        rng = np.random.default_rng(6)
        u = SaddleTriple(
            rng.standard_normal((4, 3)), rng.standard_normal((2, 3)),
            rng.standard_normal((4, 3)),
        )
        v = SaddleTriple.from_vector(u.to_vector(), 4, 2, 3)
        assert np.allclose(v.theta, u.theta)
        assert np.allclose(v.lam, u.lam)
        assert np.allclose(v.x, u.x)


class TestOperators:
    def test_apply_S_dense(self):
        sys = random_system(20)
        Z = np.random.default_rng(21).standard_normal((sys.s, sys.ncols))
        Ld = dense_L_mat(sys)
        Dd = dense_D(sys)
        n = sys.ncols
        Hd = np.kron(np.eye(n), sys.H)
        Rd = np.kron(np.eye(n), sys.R)
        Sd = Ld.T @ np.linalg.solve(Dd, Ld) + Hd.T @ np.linalg.solve(Rd, Hd)
        got = apply_S(sys, Z).ravel(order="F")
        want = Sd @ Z.ravel(order="F")
        assert np.linalg.norm(got - want) <= 1e-11 * np.linalg.norm(want)

    def test_apply_A_symmetric(self):
        sys = random_system(22)
        rng = np.random.default_rng(23)
        n = sys.ncols

        def rand():
            return SaddleTriple(
                rng.standard_normal((sys.s, n)), rng.standard_normal((sys.p, n)),
                rng.standard_normal((sys.s, n)),
            )

        u, v = rand(), rand()
        lhs = triple_inner(apply_A(sys, u), v)
        rhs = triple_inner(u, apply_A(sys, v))
        assert abs(lhs - rhs) <= 1e-10 * abs(lhs)

    def test_rhs_shapes(self):
        sys = random_system(24)
        assert spd_rhs(sys).shape == (sys.s, sys.ncols)
        r = saddle_rhs(sys)
        assert np.allclose(r.theta, sys.b)
        assert np.allclose(r.lam, sys.d)
        assert np.all(r.x == 0)

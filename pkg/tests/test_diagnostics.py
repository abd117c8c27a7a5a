import numpy as np
import pytest

from stein4dvar.blocks import (
    SaddleTriple,
    apply_A,
    apply_D,
    apply_L,
    apply_S,
)
from stein4dvar.diagnostics import (
    ALL_CASES,
    SIZE_CAP,
    assemble_dense,
    dense_L,
    dense_saddle_precond,
    dense_shat,
    random_small_system,
    verify_spectrum,
    write_reports_csv,
)


class TestDenseAssembly:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_structured_operators(self, seed):
        sys = random_small_system(seed, s=5, p=2, N=3)
        da = assemble_dense(sys)
        s, n = sys.s, sys.ncols
        rng = np.random.default_rng(seed + 999)
        Z = rng.standard_normal((s, n))
        z = Z.ravel(order="F")
        assert np.allclose(da.D @ z, apply_D(sys, Z).ravel(order="F"))
        assert np.allclose(da.L @ z, apply_L(sys, Z).ravel(order="F"))
        assert np.allclose(da.L.T @ z, apply_L(sys, Z, transpose=True).ravel(order="F"))
        assert np.allclose(da.S @ z, apply_S(sys, Z).ravel(order="F"))
        v = SaddleTriple(
            rng.standard_normal((s, n)), rng.standard_normal((sys.p, n)),
            rng.standard_normal((s, n)),
        )
        assert np.allclose(da.A @ v.to_vector(), apply_A(sys, v).to_vector())

    def test_dense_L_cut(self):
        sys = random_small_system(0, s=3, p=2, N=4)
        L = dense_L(sys.models, cut=2)
        s = sys.s
        for i in range(1, sys.ncols):
            block = L[i * s : (i + 1) * s, (i - 1) * s : i * s]
            if i % 2 == 0:
                assert np.all(block == 0)
            else:
                assert np.allclose(block, -sys.models[i - 1])

    def test_size_cap(self):
        sys = random_small_system(0, s=SIZE_CAP, p=2, N=1)
        with pytest.raises(ValueError):
            assemble_dense(sys)

    def test_shat_exact_when_cut_none(self):
        sys = random_small_system(1)
        da = assemble_dense(sys)
        Sh = dense_shat(da)
        want = da.L.T @ np.linalg.solve(da.D, da.L)
        assert np.allclose(Sh, want)

    def test_unknown_precond_kind(self):
        da = assemble_dense(random_small_system(0))
        with pytest.raises(ValueError):
            dense_saddle_precond(da, "P_X")


class TestSpectralClaims:
    @pytest.mark.parametrize("case", ALL_CASES)
    @pytest.mark.parametrize("seed", range(20))
    def test_claim(self, case, seed):
        rep = verify_spectrum(case, seed=seed)
        assert rep.passed, f"{case} seed {seed}: {rep.detail}"

    def test_unknown_case(self):
        with pytest.raises(ValueError):
            verify_spectrum("nope")

    def test_csv_roundtrip(self, tmp_path):
        reps = [verify_spectrum("cor_diag", seed=0), verify_spectrum("prop31", seed=1)]
        path = tmp_path / "reports.csv"
        write_reports_csv(reps, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("case,seed,passed")
        assert len(lines) == 3
        assert lines[1].split(",")[0] == "cor_diag"

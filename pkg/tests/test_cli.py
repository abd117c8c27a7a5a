import csv

import numpy as np
import pytest

from stein4dvar import cli, mmio
from stein4dvar.cli import (
    CSV_COLUMNS,
    ConfigError,
    _parse_strategy,
    _resolve_r,
    load_config,
    run_experiment,
)
from stein4dvar.problems import ProblemSpec, make_realization

TINY = """
[problem]
family = heat
s = 12
p = 6
N = 2,3
dt = 4e-7
dx = 1e-3
seed = 3
realizations = 2

[desk]
s = 12

[paper]
s = 24
p = 12

[solver.cg]
formulation = spd
preconditioner = Shat
r = 0

[solver.cg_lowrank]
formulation = spd
preconditioner = Shat
r = p

[solver.gmres_pd]
formulation = saddle
preconditioner = P_D
theorem21 = true

[solver.vec_k2]
formulation = saddle
preconditioner = P_C
k = 2
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return str(path)


class TestConfig:
    def test_parse(self, tiny_cfg):
        cfg = load_config(tiny_cfg)
        assert cfg.family == "heat"
        assert (cfg.s, cfg.p) == (12, 6)
        assert cfg.N_list == [2, 3]
        assert cfg.dt_list == [4e-7]
        assert cfg.realizations == 2
        assert [sv.name for sv in cfg.solvers] == ["cg", "cg_lowrank", "gmres_pd", "vec_k2"]
        assert cfg.solvers[3].k == 2
        assert cfg.solvers[2].theorem21

    def test_scale_override(self, tiny_cfg):
        cfg = load_config(tiny_cfg, scale="paper")
        assert (cfg.s, cfg.p) == (24, 12)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.cfg"))

    def test_missing_problem_section(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[solver.x]\nformulation = spd\n")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_bad_value(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[problem]\ns = twelve\n")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_strategy_parse(self):
        st = _parse_strategy("sym_index:3")
        assert st.kind == "sym_index" and st.index == 3
        assert _parse_strategy("karcher").kind == "karcher"

    def test_resolve_r(self):
        assert _resolve_r("p", 7) == 7
        assert _resolve_r("4", 7) == 4


class TestRun:
    def test_grid_rows(self, tiny_cfg):
        cfg = load_config(tiny_cfg)
        rows = run_experiment(cfg, timing=False)
        assert len(rows) == 4 * 2  # solvers x N values
        for row in rows:
            assert set(row) == set(CSV_COLUMNS)
            assert row["converged_fraction"] == "1.0000"
            assert float(row["iterations_mean"]) >= 1
            assert row["wall_time_mean"] == "0.000000"
        vec_rows = [r for r in rows if r["k"] != ""]
        assert len(vec_rows) == 2
        assert vec_rows[0]["preconditioner"] == "P_C"

    def test_cli_run_deterministic(self, tiny_cfg, tmp_path, capsys):
        out1, out2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        assert cli.main(["run", "--config", tiny_cfg, "--output", out1, "--no-timing"]) == 0
        assert cli.main(["run", "--config", tiny_cfg, "--output", out2, "--no-timing"]) == 0
        with open(out1, "rb") as f1, open(out2, "rb") as f2:
            assert f1.read() == f2.read()
        assert "wrote 8 rows" in capsys.readouterr().out

    def test_csv_columns(self, tiny_cfg, tmp_path):
        out = str(tmp_path / "r.csv")
        cli.main(["run", "--config", tiny_cfg, "--output", out, "--no-timing"])
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows and list(rows[0]) == CSV_COLUMNS
        assert rows[0]["seeds"] == "3;4"

    def test_malformed_config_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[problem]\ns = twelve\n")
        assert cli.main(["run", "--config", str(bad), "--output", str(tmp_path / "o.csv")]) == 2
        assert "config error" in capsys.readouterr().err

    def test_threaded_matches_serial(self, tiny_cfg, monkeypatch):
        cfg = load_config(tiny_cfg)
        serial = run_experiment(cfg, timing=False)
        monkeypatch.setenv("STEIN4DVAR_THREADS", "4")
        threaded = run_experiment(cfg, timing=False)
        assert serial == threaded


class TestMMIO:
    def spec(self):
        return ProblemSpec(family="heat", s=10, p=5, N=3, dt=4e-7, dx=1e-3, seed=5)

    def test_roundtrip(self, tmp_path):
        sysd = make_realization(self.spec())
        d = str(tmp_path / "sys")
        mmio.save_system(d, sysd)
        back = mmio.load_system(d)
        for a, b in zip(
            (sysd.B, sysd.Q, sysd.R, sysd.H, sysd.models, sysd.b, sysd.d),
            (back.B, back.Q, back.R, back.H, back.models, back.b, back.d),
        ):
            assert np.allclose(a, b, rtol=0, atol=1e-15)
        assert back.s == 10 and back.p == 5 and back.N == 3

    def test_missing_models(self, tmp_path):
        sysd = make_realization(self.spec())
        d = str(tmp_path / "sys")
        mmio.save_system(d, sysd)
        import os
        for f in os.listdir(d):
            if f.startswith("M_"):
                os.remove(os.path.join(d, f))
        with pytest.raises(FileNotFoundError):
            mmio.load_system(d)

    def test_solve_command(self, tmp_path, capsys):
        sysd = make_realization(self.spec())
        d = str(tmp_path / "sys")
        mmio.save_system(d, sysd)
        rc = cli.main(["solve", "--system", d, "--precond", "Shat", "--formulation", "spd"])
        assert rc == 0
        assert "converged" in capsys.readouterr().out


class TestSpectrumCommand:
    def test_pass_exit_0(self, tmp_path, capsys):
        out = str(tmp_path / "rep.csv")
        rc = cli.main(["spectrum", "--case", "cor_diag", "--seed", "1", "--output", out])
        assert rc == 0
        assert "PASS" in capsys.readouterr().out
        assert (tmp_path / "rep.csv").read_text().count("\n") == 2

    def test_fail_exit_1(self, monkeypatch, capsys):
        from stein4dvar.diagnostics import VerificationReport

        def fake(case, seed=0):
            return VerificationReport(case=case, seed=seed, passed=False,
                                      measured_min=0.0, measured_max=0.0)

        monkeypatch.setattr(cli.diagnostics, "verify_spectrum", fake)
        assert cli.main(["spectrum", "--case", "cor_diag"]) == 1
        assert "FAIL" in capsys.readouterr().out

    def test_unknown_case_argparse_error(self):
        with pytest.raises(SystemExit):
            cli.main(["spectrum", "--case", "nope"])


class TestBoundCommand:
    def test_table(self, tiny_cfg, capsys):
        rc = cli.main(["bound", "--problem", tiny_cfg])
        assert rc == 0
        out = capsys.readouterr().out
        assert "strategy" in out and "bound" in out
        assert "sym_first" in out and "karcher" in out

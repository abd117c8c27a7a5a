import pytest

from plots.cli import main

HEADER = (
    "formulation,preconditioner,mhat_strategy,r,k,N,dt,"
    "iterations_mean,wall_time_mean,inner_iter_mean,converged_fraction,seeds"
)

SPEC = "[figure]\nkind = vs_N\nseries = preconditioner, r\n"


def good_inputs(tmp_path):
    spec = tmp_path / "f.spec"
    spec.write_text(SPEC)
    csv = tmp_path / "rows.csv"
    csv.write_text(
        HEADER
        + "\nspd,Shat,exact,0,,10,4e-07,5.0,0.01,30.0,1.0,0"
        + "\nspd,Shat,exact,0,,20,4e-07,5.0,0.02,40.0,1.0,0\n"
    )
    return spec, csv


def test_render_exit_zero_and_writes(tmp_path):
    spec, csv = good_inputs(tmp_path)
    out = tmp_path / "fig.png"
    assert main(["render", "--spec", str(spec), "--csv", str(csv), "--out", str(out)]) == 0
    assert out.exists()


def test_malformed_csv_exit_nonzero_with_location(tmp_path, capsys):
    spec, csv = good_inputs(tmp_path)
    csv.write_text(HEADER + "\nspd,Shat,exact,0,,ten,4e-07,5.0,0.01,30.0,1.0,0\n")
    rc = main(["render", "--spec", str(spec), "--csv", str(csv)])
    err = capsys.readouterr().err
    assert rc != 0
    assert "rows.csv" in err and "line 2" in err


def test_missing_column_named(tmp_path, capsys):
    spec, _ = good_inputs(tmp_path)
    csv = tmp_path / "thin.csv"
    csv.write_text("a,b\n1,2\n")
    rc = main(["render", "--spec", str(spec), "--csv", str(csv)])
    err = capsys.readouterr().err
    assert rc != 0
    assert "iterations_mean" in err


def test_bad_spec(tmp_path, capsys):
    _, csv = good_inputs(tmp_path)
    spec = tmp_path / "bad.spec"
    spec.write_text("[figure]\nkind = scatter3d\n")
    rc = main(["render", "--spec", str(spec), "--csv", str(csv)])
    assert rc != 0
    assert "kind" in capsys.readouterr().err


def test_no_csv_anywhere(tmp_path, capsys):
    spec = tmp_path / "f.spec"
    spec.write_text(SPEC)
    rc = main(["render", "--spec", str(spec)])
    assert rc != 0
    assert "--csv" in capsys.readouterr().err


def test_unknown_flag_exits_with_usage():
    with pytest.raises(SystemExit) as exc:
        main(["render", "--nope"])
    assert exc.value.code == 2

import json

import pytest

from plots.figdata import (
    SCHEMAS,
    FigureData,
    SchemaError,
    Series,
    dstar_data,
    dynamics_data,
    extrapolation_data,
    load_figure_data,
    load_table,
    read_snapshot,
    slackness_data,
    snapshot,
    write_snapshot,
)

EXTRAP = """\
# spec=0123456789ab seed=0 version=0.1.0 experiment=fig1 policy: optimizer=adam
model,regime,length,mse,stderr
linear,honest,1,0.5,0
linear,honest,2,0.25,0
linear,adversarial,1,1.5,0
linear,adversarial,2,2.5,0
gru,honest,1,0.125,0.001
gru,honest,2,0.0625,0.002
"""

SLACK = """\
index,lambda,u,product
0,-0.5,0.001,0.0005
1,0.25,-0.04,0.01
2,0.0,1.0,0.0
"""

DYN = """\
step,loss,norm_A,norm_B,norm_C,asym_A,asym_BC
0,0.5,1.0,0.01,0.01,0.0,0.0
1,0.25,1.1,0.5,0.5,0.001,0.002
2,0.125,1.2,0.9,0.9,0.002,0.004
"""

DSTAR = """\
dstar,model,mean_extrap_mse
1,linear,0.001
2,linear,0.002
4,linear,0.02
8,linear,0.05
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_table_skips_provenance_comments(tmp_path):
    header, rows = load_table(write(tmp_path, "e.csv", EXTRAP))
    assert header == ["model", "regime", "length", "mse", "stderr"]
    assert len(rows) == 6


def test_missing_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_table(tmp_path / "nope.csv")


def test_extrapolation_groups_by_model_and_regime(tmp_path):
    data = extrapolation_data(write(tmp_path, "e.csv", EXTRAP))
    assert data.kind == "extrapolation"
    assert [s.label for s in data.series] == [
        "linear (honest)",
        "linear (adversarial)",
        "gru (honest)",
    ]
    assert data.series[0].x == [1.0, 2.0]
    assert data.series[0].y == [0.5, 0.25]
    assert data.log_y and not data.bar
    assert data.x_label == "length" and data.y_label == "mse"


def test_slackness_takes_absolute_values_and_bars(tmp_path):
    data = slackness_data(write(tmp_path, "s.csv", SLACK))
    assert data.bar
    assert [s.label for s in data.series] == ["|lambda|", "|u|"]
    assert data.series[0].y == [0.5, 0.25, 0.0]
    assert data.series[1].y == [0.001, 0.04, 1.0]
    assert data.series[0].x == data.series[1].x == [0.0, 1.0, 2.0]


def test_dynamics_has_one_series_per_trajectory_column(tmp_path):
    data = dynamics_data(write(tmp_path, "d.csv", DYN))
    assert [s.label for s in data.series] == SCHEMAS["dynamics"][1:]
    assert all(s.x == [0.0, 1.0, 2.0] for s in data.series)
    assert data.series[0].y == [0.5, 0.25, 0.125]
    assert not data.log_y


def test_dstar_groups_by_model(tmp_path):
    data = dstar_data(write(tmp_path, "w.csv", DSTAR))
    assert [s.label for s in data.series] == ["linear"]
    assert data.series[0].x == [1.0, 2.0, 4.0, 8.0]
    assert data.log_y


def test_missing_column_named_in_error(tmp_path):
    broken = EXTRAP.replace("model,regime,length,mse,stderr", "model,regime,length,stderr")
    broken = "\n".join(line.rsplit(",", 1)[0] for line in broken.splitlines()) + "\n"
    p = write(tmp_path, "e.csv", broken)
    with pytest.raises(SchemaError) as err:
        extrapolation_data(p)
    assert "mse" in str(err.value)
    assert "stderr" in str(err.value)


def test_wrong_kind_header_mismatch_names_all_missing(tmp_path):
    p = write(tmp_path, "s.csv", SLACK)
    with pytest.raises(SchemaError) as err:
        dynamics_data(p)
    msg = str(err.value)
    for col in SCHEMAS["dynamics"]:
        assert col in msg


def test_non_numeric_cell_names_column(tmp_path):
    p = write(tmp_path, "e.csv", EXTRAP.replace("0.25,0", "oops,0", 1))
    with pytest.raises(SchemaError) as err:
        extrapolation_data(p)
    assert "'mse'" in str(err.value)


def test_ragged_row_reports_line_number(tmp_path):
    p = write(tmp_path, "s.csv", SLACK + "3,0.1\n")
    with pytest.raises(SchemaError) as err:
        slackness_data(p)
    assert "row 5" in str(err.value)


def test_empty_but_headered_gives_empty_series(tmp_path):
    p = write(tmp_path, "e.csv", "model,regime,length,mse,stderr\n")
    data = extrapolation_data(p)
    assert data.series == []
    p = write(tmp_path, "d.csv", "step,loss,norm_A,norm_B,norm_C,asym_A,asym_BC\n")
    data = dynamics_data(p)
    assert len(data.series) == 6
    assert all(s.x == [] and s.y == [] for s in data.series)


def test_header_only_comments_rejected(tmp_path):
    p = write(tmp_path, "e.csv", "# just provenance\n")
    with pytest.raises(SchemaError):
        load_table(p)


def test_load_figure_data_dispatch_and_unknown_kind(tmp_path):
    p = write(tmp_path, "w.csv", DSTAR)
    assert load_figure_data("dstar", p).kind == "dstar"
    with pytest.raises(ValueError) as err:
        load_figure_data("pie", p)
    assert "pie" in str(err.value)


def test_snapshot_roundtrip_and_formatting(tmp_path):
    data = FigureData(
        kind="extrapolation",
        series=[Series("a", [1.0], [1.0 / 3.0])],
        x_label="length",
        y_label="mse",
        log_y=True,
    )
    snap = snapshot(data)
    assert snap["series"][0]["y"] == ["0.33333333333333331"]
    out = tmp_path / "snap.json"
    write_snapshot(data, out)
    assert read_snapshot(out) == snap
    text = out.read_text(encoding="utf-8")
    assert json.loads(text) == snap
    assert "\r" not in text

import json
from importlib import resources

import numpy as np
import pytest

from epe.errors import ConfigError, DataError
from epe.io import (
    building_from_dict, building_to_dict, load_building, load_measured, load_weather, read_json, read_table,
    save_building, save_measured, save_weather, write_json, write_rows_csv,
)
from epe.synthetic import massless_box, medium_office_analog, real_audit_pair, synthesize_measurements, synthetic_weather

from conftest import T0


def _write(path, text):
    path.write_text(text)
    return path


def test_building_round_trip(tmp_path):
    for model in (medium_office_analog(), massless_box(), *real_audit_pair()):
        save_building(model, tmp_path / "b.json")
        assert load_building(tmp_path / "b.json") == model


def test_shipped_buildings_load():
    names = {"medium_office_analog.json": medium_office_analog(), "massless_box.json": massless_box()}
    for name, model in names.items():
        path = resources.files("epe") / "data" / name
        assert load_building(path) == model


def test_building_errors_are_path_qualified():
    d = building_to_dict(medium_office_analog())
    bad = json.loads(json.dumps(d))
    bad["zones"][0]["surfaces"][0]["layers"][0]["conductivity"] = "x"
    with pytest.raises(ConfigError, match=r"zone\[office\]\.surface\[wall_south\]\.layers\[0\]\.conductivity"):
        building_from_dict(bad)
    bad = json.loads(json.dumps(d))
    bad["zones"][0]["colour"] = "red"
    with pytest.raises(ConfigError, match="unknown field"):
        building_from_dict(bad)
    bad = json.loads(json.dumps(d))
    bad["schema_version"] = 2
    with pytest.raises(ConfigError, match="schema_version"):
        building_from_dict(bad)
    bad = json.loads(json.dumps(d))
    del bad["zones"][0]["surfaces"][0]["area"]
    with pytest.raises(ConfigError, match="missing field 'area'"):
        building_from_dict(bad)


def test_json_helpers(tmp_path):
    write_json({"b": np.float64(1.5), "a": [np.int64(2), float("nan")], "c": np.arange(2)}, tmp_path / "x.json")
    text = (tmp_path / "x.json").read_text()
    assert text.index('"a"') < text.index('"b"')
    assert read_json(tmp_path / "x.json") == {"a": [2, None], "b": 1.5, "c": [0, 1]}
    with pytest.raises(ConfigError):
        read_json(tmp_path / "nope.json")
    _write(tmp_path / "bad.json", "{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        read_json(tmp_path / "bad.json")


def test_weather_and_measured_round_trip(tmp_path):
    wx = synthetic_weather(T0, 72, seed=3)
    d = synthesize_measurements(medium_office_analog(), wx)
    save_weather(wx, tmp_path / "w.csv")
    save_measured(d, tmp_path / "m.csv")
    w2 = load_weather(tmp_path / "w.csv")
    assert w2.start == wx.start and np.allclose(w2.t_out.values, wx.t_out.values, rtol=1e-9)
    d2 = load_measured(tmp_path / "m.csv", w2)
    assert np.allclose(d2.q_hc_measured.values, d.q_hc_measured.values, rtol=1e-9)
    assert np.allclose(d2.t_in["office"].values, d.t_in["office"].values, rtol=1e-9)


def test_measured_cut_to_weather_overlap(tmp_path):
    wx = synthetic_weather(T0, 72, seed=3)
    d = synthesize_measurements(medium_office_analog(), wx)
    save_measured(d, tmp_path / "m.csv")
    short = wx.slice(wx.start, wx.t_out.timestamps[48])
    d2 = load_measured(tmp_path / "m.csv", short)
    assert len(d2.weather) == 48 and len(d2.t_in["office"]) == 48


TABLE = "timestamp,a\n2021-05-01T00:00:00,1\n2021-05-01T01:00:00,2\n"


def test_read_table_gaps(tmp_path):
    p = _write(tmp_path / "t.csv", TABLE + "2021-05-01T02:00:00,\n2021-05-01T04:00:00,5\n")
    start, step, cols = read_table(p)
    assert step == 3600 and np.allclose(cols["a"], [1, 2, 3, 4, 5])
    p = _write(tmp_path / "t.csv", TABLE + "2021-05-01T05:00:00,5\n")
    with pytest.raises(DataError, match="gap longer"):
        read_table(p)


@pytest.mark.parametrize("extra, match", [
    ("2021-05-01T01:00:00,3\n", "row 3: duplicate timestamp"),
    ("2021-05-01T00:30:00,3\n", "row 3: timestamps not increasing"),
    ("2021-05-01T02:00:00,x\n", "row 3: non-numeric"),
    ("nonsense,3\n", "row 3: bad timestamp"),
    ("2021-05-01T02:00:00,3,4\n", "row 3: expected 2 fields"),
])
def test_read_table_row_errors(tmp_path, extra, match):
    with pytest.raises(DataError, match=match):
        read_table(_write(tmp_path / "t.csv", TABLE + extra))


def test_read_table_header_errors(tmp_path):
    with pytest.raises(DataError, match="first column"):
        read_table(_write(tmp_path / "t.csv", "time,a\n"))
    with pytest.raises(DataError, match="missing column"):
        read_table(_write(tmp_path / "t.csv", TABLE), required=("b",))
    with pytest.raises(DataError, match="empty"):
        read_table(_write(tmp_path / "t.csv", ""))
    with pytest.raises(DataError, match="off the"):
        read_table(_write(tmp_path / "t.csv", TABLE + "2021-05-01T02:30:00,3\n"))
    with pytest.raises(DataError, match="not found"):
        read_table(tmp_path / "missing.csv")


def test_measured_needs_lep_for_every_zone(tmp_path):
    wx = synthetic_weather(T0, 24, seed=3)
    save_weather(wx, tmp_path / "w.csv")
    rows = "\n".join(f"{t.isoformat()},21" for t in wx.t_out.timestamps)
    _write(tmp_path / "m.csv", "timestamp,t_in.office\n" + rows + "\n")
    with pytest.raises(DataError, match="no lep column"):
        load_measured(tmp_path / "m.csv", wx)


def test_rows_csv(tmp_path):
    info = write_rows_csv(tmp_path / "c.csv", ("cop", "rmse"), [(2.0, 1.5), (2.025, 1.25)])
    assert info["rows"] == 2
    assert (tmp_path / "c.csv").read_text() == "cop,rmse\n2,1.5\n2.025,1.25\n"

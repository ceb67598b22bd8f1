import json
from math import pi

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pkslab.density import gaussian_profile
from pkslab.grid import graded_grid
from pkslab.io import (DENSITY_COLUMNS, append_json_lines, read_density_csv, to_json, write_density_csv,
                       write_rows_csv, write_series_csv)


@given(d=st.integers(2, 4), n=st.integers(2, 60), M=st.floats(1e-3, 1e3))
def test_density_roundtrip_exact(tmp_path_factory, d, n, M):
    path = tmp_path_factory.mktemp("io") / "rho.csv"
    rho = gaussian_profile(M, 1.0, graded_grid(n, 8.0, 0.5, d))
    write_density_csv(path, rho)
    back = read_density_csv(path)
    assert back.d == d
    assert np.array_equal(back.grid.nodes, rho.grid.nodes)
    assert np.array_equal(back.rho, rho.rho)


def test_density_layout(tmp_path):
    rho = gaussian_profile(4 * pi, 1.0, graded_grid(5, 5.0))
    path, head = write_density_csv(tmp_path / "a.csv", rho, m=1.0)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(DENSITY_COLUMNS)
    assert len(lines) == 7 and lines[-1].split(",")[1] == "0.0"
    meta = json.loads(head.read_text())
    assert meta["M"] == pytest.approx(4 * pi) and meta["d"] == 2


def test_missing_columns(tmp_path):
    (tmp_path / "bad.csv").write_text("r,rho\n0,1\n")
    with pytest.raises(ValueError):
        read_density_csv(tmp_path / "bad.csv")


def test_writers_are_byte_deterministic(tmp_path):
    series = {"t": np.linspace(0, 1, 4), "x": np.array([1 / 3, np.inf, -0.0, 1e-300])}
    a = write_series_csv(tmp_path / "a.csv", series).read_bytes()
    b = write_series_csv(tmp_path / "b.csv", series).read_bytes()
    assert a == b
    rows = [{"k": 1, "flag": True, "v": None, "s": "x"}]
    assert write_rows_csv(tmp_path / "r.csv", rows).read_text() == "k,flag,v,s\n1,1,,x\n"


def test_json_non_finite_and_numpy():
    out = json.loads(to_json({"a": np.float64(np.inf), "b": np.arange(3), "c": np.bool_(True), "d": float("nan")}))
    assert out == {"a": "inf", "b": [0, 1, 2], "c": True, "d": "nan"}


def test_json_lines_append(tmp_path):
    p = tmp_path / "x.jsonl"
    append_json_lines(p, [{"a": 1}])
    append_json_lines(p, [{"a": 2}, {"a": -np.inf}])
    assert [json.loads(l)["a"] for l in p.read_text().splitlines()] == [1, 2, "-inf"]

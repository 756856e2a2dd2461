import math

import numpy as np
import pytest

from knnim import io
from knnim.estimators import EffectEstimate


def write(path, text):
    path.write_text(text)
    return path


def test_read_units(tmp_path):
    p = write(tmp_path / "u.csv", "id,treatment,response\na,1,2.5\nb,0,-1\n\n")
    units = io.read_units(p)
    assert units.ids == ["a", "b"]
    assert units.w.tolist() == [1, 0]
    assert units.y.tolist() == [2.5, -1.0]


@pytest.mark.parametrize(
    "body, msg",
    [
        ("id,w,y\n1,1,1\n2,0,1\n", "header"),
        ("id,treatment,response\n1,2,1\n2,0,1\n", "treatment"),
        ("id,treatment,response\n1,1,x\n2,0,1\n", "not a number"),
        ("id,treatment,response\n1,1,inf\n2,0,1\n", "finite"),
        ("id,treatment,response\n1,1,1\n1,0,1\n", "duplicate"),
        ("id,treatment,response\n1,1,1\n", "at least 2"),
        ("id,treatment,response\n1,1\n2,0,1\n", "3 fields"),
        ("", "empty"),
    ],
)
def test_read_units_errors(tmp_path, body, msg):
    with pytest.raises(io.InputError, match=msg):
        io.read_units(write(tmp_path / "u.csv", body))


def test_read_distances_missing_pairs_never_interact(tmp_path):
    p = write(tmp_path / "d.csv", "src,dst,distance\n1,2,0.5\n2,1,0.7\n3,1,2\n")
    d = io.read_distances(p, ["1", "2", "3"])
    assert d.d[0, 1] == 0.5 and d.d[1, 0] == 0.7 and d.d[2, 0] == 2.0
    assert math.isinf(d.d[0, 2]) and d.d[2, 2] == 0.0


def test_read_distances_rank_header(tmp_path):
    p = write(tmp_path / "d.csv", "src,dst,rank\n1,2,1\n2,1,1\n")
    assert io.read_distances(p, ["1", "2"]).d[0, 1] == 1.0


@pytest.mark.parametrize(
    "body, msg",
    [
        ("a,b,c\n", "header"),
        ("src,dst,distance\n1,9,1\n", "unknown unit"),
        ("src,dst,distance\n1,2,1\n1,2,2\n", "duplicate pair"),
        ("src,dst,distance\n1,2,-1\n", "nonnegative"),
        ("src,dst,distance\n1,2,nan\n", "nonnegative"),
    ],
)
def test_read_distances_errors(tmp_path, body, msg):
    with pytest.raises(io.InputError, match=msg):
        io.read_distances(write(tmp_path / "d.csv", body), ["1", "2"])


def test_distance_ids_in_order(tmp_path):
    p = write(tmp_path / "d.csv", "src,dst,distance\nb,a,1\na,c,1\n")
    assert io.read_distance_ids(p) == ["b", "a", "c"]


def test_estimates_roundtrip(tmp_path):
    ests = [EffectEstimate("direct", "A1", -1e-9, 0.04), EffectEstimate("nn", "A2", 0.12345, 0.01, ell=1)]
    rows = io.estimate_rows(ests, 1.96)
    out = tmp_path / "e.csv"
    io.write_estimates_csv(out, rows)
    text = out.read_text().splitlines()
    assert text[0] == "estimator,assumption,estimate,se,ci_lower,ci_upper"
    assert text[1] == "dir,A1,0.0000,0.2000,-0.3920,0.3920"
    back = io.read_estimates_csv(out)
    assert back[1]["estimator"] == "nn1*"
    assert back[1]["estimate"] == pytest.approx(0.1235)
    assert back[1]["ci_upper"] == pytest.approx(0.12345 + 0.196, abs=1e-4)


def test_json_roundtrip(tmp_path):
    payload = {"a": [1, 2.5], "b": {"c": None}}
    io.write_json(tmp_path / "x.json", payload)
    assert io.read_json(tmp_path / "x.json") == payload


def test_sim_csv_roundtrip(tmp_path):
    from knnim.sim import run_simulation

    s = run_simulation(4, "bernoulli", n=30, reps=5, seed=0)
    io.write_sim_csv(tmp_path / "s.csv", s)
    rows = io.read_sim_csv(tmp_path / "s.csv")
    assert [r["estimator"] for r in rows] == [r.label for r in s.rows]
    assert rows[0]["emp_ev"] == pytest.approx(s.rows[0].emp_ev, abs=5e-5)
    assert np.all([isinstance(r["n_floored"], int) for r in rows])

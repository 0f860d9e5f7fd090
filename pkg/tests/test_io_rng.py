from __future__ import annotations

import json
import math

import numpy as np
import pytest

from hybridsde.integrator import IntegratorConfig, simulate_hybrid
from hybridsde.io import dumps, fmt, path_csv_text, write_csv, write_path_record
from hybridsde.model import example1_model
from hybridsde.rng import Streams, as_streams, chunk_sizes, substream


@pytest.mark.parametrize("v", [0.1, 1 / 3, -2.5e-300, 1e308, 123456789.123456789, 0.0])
def test_fmt_round_trips(v):
    assert float(fmt(v)) == v


def test_fmt_integers():
    assert fmt(np.int64(7)) == "7"


def test_csv_uses_dot_and_newline(tmp_path):
    p = tmp_path / "a.csv"
    write_csv(p, ["a", "b"], [[1, 0.5], [2, 0.25]])
    raw = p.read_bytes()
    assert b"\r" not in raw and raw.decode().splitlines() == ["a,b", "1,0.5", "2,0.25"]


def test_json_non_finite_as_strings():
    doc = json.loads(dumps({"a": math.inf, "b": np.float64(-math.inf), "c": np.nan,
                            "d": np.arange(3)}))
    assert doc == {"a": "inf", "b": "-inf", "c": "nan", "d": [0, 1, 2]}


def test_path_record_files(tmp_path):
    rec = simulate_hybrid(example1_model(), [1.0, 0.5, -0.5], 2, IntegratorConfig(dt=0.01, T=1.0),
                          Streams.from_seed(4))
    csv_p, json_p = write_path_record(rec, tmp_path / "p")
    lines = csv_p.read_text().splitlines()
    assert lines[0] == "t,x_1,x_2,x_3,k" and len(lines) == len(rec.times) + 1
    side = json.loads(json_p.read_text())
    assert side["termination"] == "completed"
    assert side["seed_lineage"]["seed"] == 4
    assert len(side["switches"]) == len(rec.switches)
    assert path_csv_text(rec) == csv_p.read_text()


def test_substreams_are_reproducible_and_distinct():
    a = substream(1, 0, 0).random(5)
    assert np.array_equal(a, substream(1, 0, 0).random(5))
    assert not np.array_equal(a, substream(1, 0, 1).random(5))
    assert not np.array_equal(a, substream(2, 0, 0).random(5))


def test_streams_split_by_role():
    s = Streams.from_seed(3, 2)
    w, n, xi = s.w.random(3), s.n.random(3), s.xi.random(3)
    assert len({tuple(w), tuple(n), tuple(xi)}) == 3
    assert s.lineage["chunk"] == 2


def test_as_streams_inputs():
    assert as_streams(5).lineage["seed"] == 5
    assert as_streams(None, 6).lineage["seed"] == 6
    g = as_streams(np.random.default_rng(0))
    assert "child_seeds" in g.lineage
    with pytest.raises(TypeError):
        as_streams("seed")


@pytest.mark.parametrize("n,c,expected", [(10, 4, [4, 4, 2]), (8, 4, [4, 4]), (3, 8, [3])])
def test_chunk_sizes(n, c, expected):
    assert chunk_sizes(n, c) == expected

"""Tests for the error metric and metric-record CSV handling."""

import numpy as np
import pytest

from gptomo.geometry import build_grid
from gptomo.metrics import CSV_HEADER, MetricRecord, e_norm, parse_metrics_csv, summarize
from gptomo.phantoms import ObjectField


# -- e_norm -----------------------------------------------------------------------

def test_e_norm_exact_reconstruction_is_zero():
    rng = np.random.default_rng(0)
    f = rng.normal(size=25)
    assert e_norm(f, f) == 0.0


def test_e_norm_pinned_value():
    truth = np.array([3.0, 4.0])
    assert e_norm(np.array([3.0, 5.0]), truth) == pytest.approx(0.2, abs=1e-15)


def test_e_norm_scale_invariance():
    rng = np.random.default_rng(1)
    a = rng.normal(size=30)
    b = rng.normal(size=30)
    assert e_norm(3.0 * a, 3.0 * b) == pytest.approx(e_norm(a, b), rel=1e-12)


def test_e_norm_accepts_object_fields_and_shapes():
    grid = build_grid(3, 1.0)
    truth = ObjectField(grid, np.arange(9.0) + 1.0)
    flat = e_norm(np.zeros(9), truth)
    square = e_norm(np.zeros((3, 3)), truth.values)
    assert flat == square == pytest.approx(1.0)


def test_e_norm_rejects_zero_truth_and_mismatch():
    with pytest.raises(ValueError, match="zero"):
        e_norm(np.ones(4), np.zeros(4))
    with pytest.raises(ValueError, match="mismatch"):
        e_norm(np.ones(4), np.ones(5))


# -- records and CSV --------------------------------------------------------------

def make_record(**overrides):
    base = dict(method="gp", case="II", n=64, n_theta=40, n_k=1, family="mk32",
                seed=3, e_norm=0.123456789)
    base.update(overrides)
    return MetricRecord(**base)


def test_record_row_format():
    row = make_record().to_row()
    assert row == "gp,II,64,40,1,mk32,3,0.123456789,"


def test_record_row_with_seconds():
    row = make_record(seconds=1.23456).to_row()
    assert row.endswith(",1.235")


def test_summarize_is_sorted_and_deterministic():
    records = [
        make_record(method="tv", e_norm=0.5),
        make_record(method="gp", case="I"),
        make_record(method="l2", n_theta=20),
    ]
    text = summarize(records)
    assert text == summarize(list(reversed(records)))
    lines = text.strip().splitlines()
    assert lines[0] == CSV_HEADER
    methods = [ln.split(",")[0] for ln in lines[1:]]
    assert methods == sorted(methods)
    assert text.endswith("\n")


def test_csv_round_trip():
    records = [make_record(), make_record(method="l2", seconds=2.5),
               make_record(case="IV", seed=11)]
    parsed = parse_metrics_csv(summarize(records))
    assert len(parsed) == 3
    assert sorted(r.method for r in parsed) == ["gp", "gp", "l2"]
    by_method = {(r.method, r.case): r for r in parsed}
    assert by_method[("l2", "II")].seconds == pytest.approx(2.5)
    assert by_method[("gp", "II")].seconds is None
    assert by_method[("gp", "IV")].e_norm == pytest.approx(0.123456789)


def test_parse_rejects_bad_header_and_rows():
    with pytest.raises(ValueError, match="header"):
        parse_metrics_csv("method,case\n")
    with pytest.raises(ValueError, match="malformed"):
        parse_metrics_csv(CSV_HEADER + "\ngp,II,64\n")

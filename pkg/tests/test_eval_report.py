"""
Tests for per-action tables, comparisons and table rendering
"""

import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core import eval_report
from core.errors import ConfigError, DatasetError
from core.eval_report import (
    EvalTable,
    compare,
    format_value,
    load_tables_csv,
    relative_change_pct,
    render_table,
    save_comparisons_csv,
    save_tables_csv,
)
from core.metrics import JointWeights, default_joint_weights
from core.nncore import new_rng
from core.pose_data import ACTIONS, stack_3d


def perfect_predictor(monkeypatch, offset=None):
    def install(test_data):
        gt = stack_3d(test_data)
        pred = gt if offset is None else gt + offset
        monkeypatch.setattr(eval_report, "predict_mm", lambda model, poses2d, stats: pred)

    return install


def test_perfect_predictor_gives_zero_table(synthetic_data, monkeypatch):
    """Exact predictions give zero in every action row"""
    perfect_predictor(monkeypatch)(synthetic_data)
    table, weighted = eval_report.evaluate(None, synthetic_data, None, default_joint_weights(), label="exact")
    assert table.actions == list(ACTIONS)
    assert all(v == 0.0 for v in table.rows.values())
    assert weighted.label == "exact (weighted)"
    assert weighted.average == 0.0


def test_single_sample_joint_offset(synthetic_data, monkeypatch):
    """One joint off by (3, 4, 0) gives 0.3125 for that action"""
    sample = synthetic_data[:1]
    offset = np.zeros((1, 48))
    offset[0, 6:9] = [3.0, 4.0, 0.0]
    perfect_predictor(monkeypatch, offset)(sample)
    table, weighted = eval_report.evaluate(None, sample, None, label="one")
    assert table.rows == {sample[0].action: pytest.approx(0.3125, abs=1e-12)}
    assert weighted is None


def test_uniform_weighted_table_equals_plain(synthetic_data, monkeypatch):
    """Uniform weights reproduce the unweighted table"""
    offset = new_rng(0).normal(size=(len(synthetic_data), 48))
    perfect_predictor(monkeypatch, offset)(synthetic_data)
    table, weighted = eval_report.evaluate(None, synthetic_data, None, JointWeights.uniform(), label="u")
    for action in table.rows:
        assert weighted.rows[action] == table.rows[action]


def test_evaluate_empty_data():
    """Evaluation needs samples"""
    with pytest.raises(DatasetError):
        eval_report.evaluate(None, [], None, label="x")


def test_compare_reported_deltas():
    """Per-action changes reported for the improved versions"""
    original = EvalTable("original", {"SittingDown": 58.0, "Eating": 40.3, "Phoning": 48.2, "Posing": 44.4})
    v1 = EvalTable("v1", {"SittingDown": 53.9, "Eating": 40.4, "Phoning": 45.0, "Posing": 44.4})
    v2 = EvalTable("v2", {"SittingDown": 53.0, "Eating": 40.0, "Phoning": 43.8, "Posing": 41.7})

    c1 = compare(original, v1)
    assert c1.delta["SittingDown"] == pytest.approx(-4.1, abs=1e-9)
    assert c1.delta["Eating"] == pytest.approx(0.1, abs=1e-9)

    c2 = compare(original, v2)
    assert c2.delta["Phoning"] == pytest.approx(-4.4, abs=1e-9)
    assert c2.relative_pct["Phoning"] == pytest.approx(-9.13, abs=0.005)

    c3 = compare(v1, v2)
    assert c3.delta["Posing"] == pytest.approx(-2.7, abs=1e-9)


def test_compare_identity_and_antisymmetry():
    """compare(T, T) is zero and swapping the arguments negates deltas"""
    a = EvalTable("a", {"Walking": 30.0, "Eating": 45.5, "Smoking": 52.25})
    b = EvalTable("b", {"Walking": 28.0, "Eating": 47.0, "Smoking": 50.0})
    same = compare(a, a)
    assert all(d == 0.0 for d in same.delta.values())
    assert same.mean_relative_improvement_pct == 0.0
    ab, ba = compare(a, b), compare(b, a)
    for action in a.rows:
        assert ab.delta[action] == -ba.delta[action]


def test_mean_improvement_ignores_action_order():
    """Listing actions in another order gives the same improvement"""
    base = {"Walking": 30.0, "Eating": 45.5, "Smoking": 52.25}
    cand = {"Walking": 28.0, "Eating": 47.0, "Smoking": 50.0}
    forward = compare(EvalTable("a", base), EvalTable("b", cand))
    reverse = compare(
        EvalTable("a", dict(reversed(list(base.items())))), EvalTable("b", dict(reversed(list(cand.items()))))
    )
    assert forward.mean_relative_improvement_pct == reverse.mean_relative_improvement_pct
    assert "mean relative improvement" in forward.summary()


def test_compare_mismatched_actions():
    """Tables over different actions cannot be compared"""
    with pytest.raises(DatasetError, match="action sets differ"):
        compare(EvalTable("a", {"Walking": 1.0}), EvalTable("b", {"Eating": 1.0}))


def test_unknown_action_in_table():
    """Rows must use canonical action names"""
    with pytest.raises(DatasetError):
        EvalTable("a", {"Dancing": 1.0})


def test_format_value_half_even():
    """One decimal with half-even rounding on the shortest decimal form"""
    assert format_value(53.94999) == "53.9"
    assert format_value(48.75) == "48.8"
    assert format_value(48.65) == "48.6"
    assert format_value(-0.04) == "0.0"
    assert format_value(float("nan")) == "-"


def test_render_text_golden():
    """Text layout is stable for a fixed input"""
    tables = [
        EvalTable("original", {"SittingDown": 58.0, "Phoning": 48.0}),
        EvalTable("v2", {"SittingDown": 53.5, "Phoning": 44.0}),
    ]
    expected = (
        "version   Phoning  SittingDown  Average\n"
        "original     48.0         58.0     53.0\n"
        "v2           44.0         53.5     48.8\n"
    )
    assert render_table(tables) == expected


def test_render_structure_and_csv_precision():
    """One table with two actions gives a header and one row; CSV keeps full precision"""
    table = EvalTable("v1", {"Walking": 53.94999, "Eating": 40.0})
    lines = render_table([table]).splitlines()
    assert len(lines) == 2
    assert len(lines[1].split()) == 4
    assert "53.9" in lines[1]
    csv_row = render_table([table], "csv").splitlines()[1].split(",")
    assert 53.94999 in [float(v) for v in csv_row[1:]]
    with pytest.raises(ConfigError):
        render_table([table], "html")


def test_csv_reparses_to_same_tables(tmp_path):
    """Saved tables reload within 1e-9"""
    tables = [
        EvalTable("original", {a: 40.0 + i * 1.37 for i, a in enumerate(ACTIONS)}),
        EvalTable("v3", {a: 38.0 + i * 1.11 for i, a in enumerate(ACTIONS)}),
    ]
    loaded = load_tables_csv(save_tables_csv(tables, tmp_path / "tables.csv"))
    assert [t.label for t in loaded] == ["original", "v3"]
    for a, b in zip(tables, loaded):
        for action in a.rows:
            assert abs(a.rows[action] - b.rows[action]) < 1e-9


def test_comparison_csv_columns(tmp_path):
    """Comparison CSV holds values, deltas and relative changes"""
    a = EvalTable("original", {"Walking": 30.0, "Eating": 45.0})
    b = EvalTable("v1", {"Walking": 27.0, "Eating": 45.0})
    path = save_comparisons_csv([compare(a, b)], tmp_path / "cmp.csv")
    header = path.read_text(encoding="utf-8").splitlines()[0].split(",")
    assert header[:2] == ["version", "baseline"]
    assert "delta_Walking" in header and "relpct_Eating" in header
    assert "mean_relative_improvement_pct" in header


def test_compare_with_zero_baseline_rows():
    """A zero-error baseline row compares as 0 when unchanged and as signed inf otherwise"""
    perfect = EvalTable("perfect", {"Walking": 0.0, "Eating": 1.0})
    same = compare(perfect, perfect)
    assert same.relative_pct == {"Eating": 0.0, "Walking": 0.0}
    assert same.mean_relative_improvement_pct == 0.0
    assert same.average_improvement_pct == 0.0

    worse = compare(perfect, EvalTable("worse", {"Walking": 2.0, "Eating": 1.0}))
    assert worse.relative_pct["Walking"] == float("inf")
    assert worse.mean_relative_improvement_pct == float("-inf")
    assert relative_change_pct(-1.0, 0.0) == float("-inf")
    assert relative_change_pct(0.0, 0.0) == 0.0
    assert relative_change_pct(-4.4, 48.2) == pytest.approx(-9.1286, abs=1e-4)

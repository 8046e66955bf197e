"""
Tests for the dataset CSV reader and writer
"""

import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.errors import DatasetError
from ingestion.dataset_csv import dataset_columns, load_dataset, save_dataset
from ingestion.synth_poses import synth_generate


def write_rows(tmp_path, rows, header=None):
    path = tmp_path / "data.csv"
    lines = [",".join(header or dataset_columns())] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def good_row(action="Eating"):
    return ["S1", action, 0] + [float(i) for i in range(32)] + [0.0, 0.0, 0.0] + [float(i) for i in range(45)]


def test_header_has_83_columns():
    """Three metadata columns plus 32 pixel and 48 millimeter coordinates"""
    columns = dataset_columns()
    assert len(columns) == 83
    assert columns[:3] == ["subject", "action", "frame"]


def test_single_row_file(tmp_path):
    """A well-formed one-row file gives one matching sample"""
    data = load_dataset(write_rows(tmp_path, [good_row()]))
    assert len(data) == 1
    pair = data[0]
    assert (pair.subject, pair.action, pair.frame) == ("S1", "Eating", 0)
    assert np.array_equal(pair.pose2d.reshape(-1), np.arange(32.0))
    assert np.array_equal(pair.pose3d.reshape(-1)[3:], np.arange(45.0))


def test_save_then_load_is_bit_identical(tmp_path):
    """Synthetic samples survive a CSV round trip exactly"""
    data = synth_generate(30, seed=1, noise_std=0.5)
    loaded = load_dataset(save_dataset(data, tmp_path / "synth.csv"))
    assert len(loaded) == len(data)
    for a, b in zip(data, loaded):
        assert (a.subject, a.action, a.frame) == (b.subject, b.action, b.frame)
        assert np.array_equal(a.pose2d, b.pose2d)
        assert np.array_equal(a.pose3d, b.pose3d)


def test_short_row_names_row_one(tmp_path):
    """A row with 79 of 83 columns is reported as row 1"""
    with pytest.raises(DatasetError, match="row 1: expected 83 columns, found 79"):
        load_dataset(write_rows(tmp_path, [good_row()[:79]]))


def test_long_row_names_row(tmp_path):
    """Extra cells are reported with their row number"""
    with pytest.raises(DatasetError, match="row 2"):
        load_dataset(write_rows(tmp_path, [good_row(), good_row() + [1.0]]))


def test_non_finite_value(tmp_path):
    """nan in a coordinate names the row and column"""
    row = good_row()
    row[10] = "nan"
    with pytest.raises(DatasetError, match="row 1: non-finite value"):
        load_dataset(write_rows(tmp_path, [row]))


def test_non_numeric_value(tmp_path):
    """Text in a coordinate column names the cell"""
    row = good_row()
    row[4] = "abc"
    with pytest.raises(DatasetError, match="row 2: column .* is not a number"):
        load_dataset(write_rows(tmp_path, [good_row(), row]))


def test_unknown_action(tmp_path):
    """Action names outside the canonical list are rejected"""
    with pytest.raises(DatasetError, match="row 1: unknown action 'Dancing'"):
        load_dataset(write_rows(tmp_path, [good_row("Dancing")]))


def test_bad_header(tmp_path):
    """A renamed column is reported by name"""
    header = dataset_columns()
    header[5] = "bogus"
    with pytest.raises(DatasetError, match="bogus"):
        load_dataset(write_rows(tmp_path, [good_row()], header=header))


def test_missing_file(tmp_path):
    """A missing dataset path is a DatasetError"""
    with pytest.raises(DatasetError, match="not found"):
        load_dataset(tmp_path / "absent.csv")


def test_recentres_on_root(tmp_path):
    """3D poses with a non-zero root are made root-relative"""
    row = good_row()
    offset = 3 + 32
    row[offset:offset + 3] = [100.0, -50.0, 4000.0]
    pair = load_dataset(write_rows(tmp_path, [row]))[0]
    assert np.array_equal(pair.pose3d[0], [0.0, 0.0, 0.0])
    assert np.array_equal(pair.pose3d[1], np.array([0.0, 1.0, 2.0]) - [100.0, -50.0, 4000.0])

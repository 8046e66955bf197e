"""
Evaluation report module for PoseLift
Per-action MPJPE tables, version-versus-version comparisons, and their text/CSV renderings
"""

import io
import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import ConfigError, DatasetError
from .lifter_model import Lifter
from .metrics import JointWeights, per_joint_errors
from .pose_data import ACTIONS, NormStats, PosePair, stack_2d, stack_3d
from .trainer import predict_mm

logger = logging.getLogger(__name__)

AVERAGE = "Average"
VERSION = "version"


@dataclass
class EvalTable:
    """MPJPE in millimeters per action, held in canonical action order"""
    label: str
    rows: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        unknown = [a for a in self.rows if a not in ACTIONS]
        if unknown:
            raise DatasetError(f"table {self.label}: unknown actions {unknown}")
        self.rows = {a: float(self.rows[a]) for a in ACTIONS if a in self.rows}

    @property
    def actions(self) -> List[str]:
        return list(self.rows)

    @property
    def average(self) -> float:
        """Arithmetic mean over the actions present"""
        if not self.rows:
            return float("nan")
        return float(np.mean(list(self.rows.values())))


@dataclass
class Comparison:
    baseline: EvalTable
    candidate: EvalTable
    delta: Dict[str, float]
    relative_pct: Dict[str, float]
    mean_relative_improvement_pct: float
    average_improvement_pct: float

    def summary(self) -> str:
        return (
            f"{self.candidate.label} vs {self.baseline.label}: mean relative improvement "
            f"{self.mean_relative_improvement_pct:.2f}% (change of averages {self.average_improvement_pct:.2f}%)"
        )


def _table_from_errors(label: str, actions: Sequence[str], errors: np.ndarray) -> EvalTable:
    frame = pd.DataFrame({"action": list(actions), "error": errors})
    per_action = frame.groupby("action", sort=False)["error"].mean()
    return EvalTable(label, per_action.to_dict())


def evaluate(
    model: Lifter,
    test_data: Sequence[PosePair],
    stats: NormStats,
    weights: Optional[JointWeights] = None,
    label: Optional[str] = None,
) -> Tuple[EvalTable, Optional[EvalTable]]:
    """Per-action MPJPE in millimeters, plus the weighted table when weights are given"""
    if not test_data:
        raise DatasetError("evaluation data is empty")
    label = label or model.config.variant_label.value
    pred = predict_mm(model, stack_2d(test_data), stats)
    dist = per_joint_errors(pred, stack_3d(test_data))
    actions = [p.action for p in test_data]

    table = _table_from_errors(label, actions, dist.mean(axis=1))
    missing = [a for a in ACTIONS if a not in table.rows]
    if missing:
        logger.warning(f"No samples for {len(missing)} actions, omitted from the table: {', '.join(missing)}")

    weighted = None
    if weights is not None:
        if weights.num_joints != dist.shape[1]:
            raise ConfigError(f"{weights.num_joints} joint weights for {dist.shape[1]}-joint poses")
        per_sample = dist.mean(axis=1) if weights.is_uniform else dist @ weights.weights / weights.weights.sum()
        weighted = _table_from_errors(f"{label} (weighted)", actions, per_sample)

    logger.info(f"Evaluated {label} on {len(test_data)} samples: average MPJPE {table.average:.2f} mm")
    return table, weighted


def relative_change_pct(delta: float, base: float) -> float:
    """delta / base in percent; a zero base gives 0 for no change and signed inf otherwise"""
    if base == 0.0:
        return 0.0 if delta == 0.0 else float(np.copysign(np.inf, delta))
    return delta / base * 100.0


def compare(baseline: EvalTable, candidate: EvalTable) -> Comparison:
    """Deltas are candidate minus baseline; improvements are positive when the candidate is lower"""
    if set(baseline.rows) != set(candidate.rows):
        only_b = sorted(set(baseline.rows) - set(candidate.rows))
        only_c = sorted(set(candidate.rows) - set(baseline.rows))
        raise DatasetError(
            f"cannot compare {candidate.label} with {baseline.label}: action sets differ "
            f"(only in baseline: {only_b}, only in candidate: {only_c})"
        )
    delta = {a: candidate.rows[a] - baseline.rows[a] for a in baseline.rows}
    relative = {a: relative_change_pct(delta[a], baseline.rows[a]) for a in baseline.rows}
    improvements = [0.0 - relative[a] for a in baseline.rows]
    mean_improvement = float(np.mean(improvements)) if improvements else 0.0
    avg_b, avg_c = baseline.average, candidate.average
    average_improvement = 0.0 - relative_change_pct(avg_c - avg_b, avg_b) if baseline.rows else 0.0
    if any(v == 0.0 for v in baseline.rows.values()):
        logger.warning(f"{baseline.label} has zero error rows; relative changes against them are 0 or +/-inf")
    return Comparison(baseline, candidate, delta, relative, mean_improvement, average_improvement)


def format_value(value: Optional[float]) -> str:
    """One decimal, half-even on the shortest decimal form of the float"""
    if value is None or not np.isfinite(value):
        return "-"
    rounded = Decimal(repr(float(value))).quantize(Decimal("0.1"), rounding=ROUND_HALF_EVEN)
    if rounded == 0:
        rounded = abs(rounded)
    return str(rounded)


def _columns(tables: Sequence[EvalTable]) -> List[str]:
    present = {a for t in tables for a in t.rows}
    return [a for a in ACTIONS if a in present]


def tables_frame(tables: Sequence[EvalTable]) -> pd.DataFrame:
    actions = _columns(tables)
    records = []
    for t in tables:
        record = {VERSION: t.label}
        record.update({a: t.rows.get(a, np.nan) for a in actions})
        record[AVERAGE] = t.average
        records.append(record)
    return pd.DataFrame(records, columns=[VERSION] + actions + [AVERAGE])


def render_table(tables: Sequence[EvalTable], fmt: str = "text") -> str:
    """One row per table, one column per action plus Average"""
    if not tables:
        raise ConfigError("render_table needs at least one table")
    if fmt == "csv":
        buf = io.StringIO()
        tables_frame(tables).to_csv(buf, index=False, float_format="%.17g", lineterminator="\n")
        return buf.getvalue()
    if fmt != "text":
        raise ConfigError(f"unknown table format '{fmt}', expected text or csv")

    actions = _columns(tables)
    header = [VERSION] + actions + [AVERAGE]
    body = [[t.label] + [format_value(t.rows.get(a)) for a in actions] + [format_value(t.average)] for t in tables]
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]

    def line(cells: List[str]) -> str:
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join([first] + rest).rstrip()

    return "\n".join([line(header)] + [line(row) for row in body]) + "\n"


def save_tables_csv(tables: Sequence[EvalTable], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_table(tables, "csv"), encoding="utf-8")
    logger.info(f"Wrote {len(tables)} table(s) to {path}")
    return path


def load_tables_csv(path) -> List[EvalTable]:
    """Read a table CSV; Average is recomputed from the rows"""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"table file not found: {path}")
    df = pd.read_csv(path, float_precision="round_trip")
    if list(df.columns[:1]) != [VERSION]:
        raise DatasetError(f"{path}: first column must be '{VERSION}'")
    actions = [c for c in df.columns[1:] if c != AVERAGE]
    unknown = [a for a in actions if a not in ACTIONS]
    if unknown:
        raise DatasetError(f"{path}: unknown action columns {unknown}")
    tables = []
    for _, row in df.iterrows():
        rows = {a: float(row[a]) for a in actions if pd.notna(row[a])}
        table = EvalTable(str(row[VERSION]), rows)
        if AVERAGE in df.columns and pd.notna(row[AVERAGE]) and abs(float(row[AVERAGE]) - table.average) > 0.05:
            logger.warning(f"{path}: {table.label} Average {row[AVERAGE]} differs from the mean of its rows {table.average:.4f}")
        tables.append(table)
    return tables


def comparisons_frame(comparisons: Sequence[Comparison]) -> pd.DataFrame:
    records = []
    for c in comparisons:
        actions = c.baseline.actions
        record = {VERSION: c.candidate.label, "baseline": c.baseline.label}
        record.update({a: c.candidate.rows[a] for a in actions})
        record[AVERAGE] = c.candidate.average
        record.update({f"delta_{a}": c.delta[a] for a in actions})
        record[f"delta_{AVERAGE}"] = c.candidate.average - c.baseline.average
        record.update({f"relpct_{a}": c.relative_pct[a] for a in actions})
        record["mean_relative_improvement_pct"] = c.mean_relative_improvement_pct
        record["average_improvement_pct"] = c.average_improvement_pct
        records.append(record)
    return pd.DataFrame(records)


def save_comparisons_csv(comparisons: Sequence[Comparison], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    comparisons_frame(comparisons).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    logger.info(f"Wrote {len(comparisons)} comparison(s) to {path}")
    return path

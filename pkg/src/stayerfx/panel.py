"""Balanced two-period panel container, CSV ingestion and summaries.

The long CSV layout is one row per unit-period with columns
``id, t, y, x`` (names remappable).  Period labels must be 1 and 2; a unit
enters the dataset only when both of its periods are present with finite
values.  Everything downstream consumes the wide, validated
:class:`PanelDataset`.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import DataError

CANONICAL_COLUMNS = ("id", "t", "y", "x")


@dataclass(frozen=True)
class PanelDataset:
    """Balanced T=2 panel, one row per unit, read-only after construction.

    Attributes
    ----------
    unit_id : ndarray
        Unit identifiers (any dtype; order is first appearance in the source).
    y1, y2 : ndarray
        Outcomes in periods 1 and 2.
    x1, x2 : ndarray
        Regressors in periods 1 and 2.
    """

    unit_id: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    x1: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        for name in ("y1", "y2", "x1", "x2"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "unit_id", np.asarray(self.unit_id))
        n = self.unit_id.shape[0]
        for name in ("y1", "y2", "x1", "x2"):
            arr = getattr(self, name)
            if arr.ndim != 1 or arr.shape[0] != n:
                raise DataError(f"column {name!r} must be 1-d with length {n}")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"column {name!r} contains non-finite values")
        if n < 2:
            raise DataError("a panel needs at least 2 complete units")
        if len(np.unique(self.unit_id)) != n:
            raise DataError("unit identifiers must be unique")
        for name in ("unit_id", "y1", "y2", "x1", "x2"):
            getattr(self, name).flags.writeable = False

    @property
    def n(self) -> int:
        """Number of units."""
        return int(self.unit_id.shape[0])

    @property
    def stayer_mask(self) -> np.ndarray:
        """Units with exactly equal regressor values in both periods."""
        return self.x1 == self.x2

    def pooled_x(self) -> np.ndarray:
        """Both periods' regressor values stacked, period 1 first."""
        return np.concatenate([self.x1, self.x2])


@dataclass(frozen=True)
class IngestLog:
    """What happened to each unit while reading a long CSV."""

    n_rows: int
    n_units_seen: int
    n_units_kept: int
    dropped: Dict[str, str] = field(default_factory=dict)  # unit id -> reason

    @property
    def n_units_dropped(self) -> int:
        return len(self.dropped)

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_units_seen": self.n_units_seen,
            "n_units_kept": self.n_units_kept,
            "n_units_dropped": self.n_units_dropped,
            "dropped": dict(self.dropped),
        }


def _parse_value(text: str) -> Optional[float]:
    """Parse a cell; None signals a missing/unusable value."""
    s = text.strip()
    if s == "" or s.upper() in {"NA", "NAN", "NULL", "NONE", "."}:
        return None
    try:
        v = float(s)
    except ValueError:
        return None
    if not math.isfinite(v):
        return None
    return v


def load_csv(path, column_map: Optional[Dict[str, str]] = None) -> Tuple[PanelDataset, IngestLog]:
    """Read a long CSV into a balanced panel.

    Parameters
    ----------
    path : str or Path
        CSV file with a header row.
    column_map : dict, optional
        Maps canonical names (``id``, ``t``, ``y``, ``x``) to the actual
        column names in the file.

    Returns
    -------
    (PanelDataset, IngestLog)
        The balanced dataset and a log of dropped units.

    Raises
    ------
    DataError
        On missing columns, duplicate (unit, period) rows, period labels
        outside {1, 2}, or fewer than 2 complete units.
    """
    colmap = {k: k for k in CANONICAL_COLUMNS}
    if column_map:
        unknown = set(column_map) - set(CANONICAL_COLUMNS)
        if unknown:
            raise DataError(f"column_map keys must be among {CANONICAL_COLUMNS}, got {sorted(unknown)}")
        colmap.update(column_map)

    units: Dict[str, dict] = {}
    order = []
    dropped: Dict[str, str] = {}
    n_rows = 0

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [colmap[k] for k in CANONICAL_COLUMNS if colmap[k] not in header]
        if missing:
            raise DataError(f"missing columns in {path}: {missing}")
        for row in reader:
            n_rows += 1
            uid = (row[colmap["id"]] or "").strip()
            if uid == "":
                raise DataError(f"row {n_rows}: empty unit id")
            t_raw = _parse_value(row[colmap["t"]] or "")
            if t_raw is None or t_raw not in (1.0, 2.0):
                raise DataError(f"row {n_rows}: period label must be 1 or 2, got {row[colmap['t']]!r}")
            t = int(t_raw)
            if uid not in units:
                units[uid] = {}
                order.append(uid)
            if t in units[uid]:
                raise DataError(f"duplicate observation for unit {uid!r}, period {t}")
            y = _parse_value(row[colmap["y"]] or "")
            x = _parse_value(row[colmap["x"]] or "")
            units[uid][t] = (y, x)

    ids, y1, y2, x1, x2 = [], [], [], [], []
    for uid in order:
        obs = units[uid]
        if len(obs) < 2:
            dropped[uid] = f"missing period {1 if 1 not in obs else 2}"
            continue
        vals = [obs[1][0], obs[1][1], obs[2][0], obs[2][1]]
        if any(v is None for v in vals):
            dropped[uid] = "missing or non-numeric value"
            continue
        ids.append(uid)
        y1.append(obs[1][0])
        x1.append(obs[1][1])
        y2.append(obs[2][0])
        x2.append(obs[2][1])

    if len(ids) < 2:
        raise DataError(f"fewer than 2 complete units after ingestion (kept {len(ids)})")

    data = PanelDataset(
        unit_id=np.array(ids),
        y1=np.array(y1),
        y2=np.array(y2),
        x1=np.array(x1),
        x2=np.array(x2),
    )
    log = IngestLog(
        n_rows=n_rows,
        n_units_seen=len(order),
        n_units_kept=len(ids),
        dropped=dropped,
    )
    return data, log


def write_csv(data: PanelDataset, path) -> None:
    """Write the long CSV form; ``load_csv`` reproduces the dataset exactly.

    Values are written with ``repr`` so float round-trips are bit-exact.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CANONICAL_COLUMNS)
        for i in range(data.n):
            uid = data.unit_id[i]
            writer.writerow([uid, 1, repr(float(data.y1[i])), repr(float(data.x1[i]))])
            writer.writerow([uid, 2, repr(float(data.y2[i])), repr(float(data.x2[i]))])


@dataclass(frozen=True)
class VariableSummary:
    """Pooled and per-period moments plus the within-unit variation share."""

    pooled_mean: float
    pooled_sd: float
    mean_by_period: Tuple[float, float]
    sd_by_period: Tuple[float, float]
    within_pct: float

    def to_dict(self) -> dict:
        return {
            "pooled_mean": self.pooled_mean,
            "pooled_sd": self.pooled_sd,
            "mean_by_period": list(self.mean_by_period),
            "sd_by_period": list(self.sd_by_period),
            "within_pct": self.within_pct,
        }


@dataclass(frozen=True)
class SummaryReport:
    """Dataset description used by the ``summarize`` command."""

    n: int
    y: VariableSummary
    x: VariableSummary
    dx_zero_count: int
    dx_bin_edges: np.ndarray
    dx_bin_counts: np.ndarray

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "y": self.y.to_dict(),
            "x": self.x.to_dict(),
            "dx_zero_count": self.dx_zero_count,
            "dx_bin_edges": [float(v) for v in self.dx_bin_edges],
            "dx_bin_counts": [int(v) for v in self.dx_bin_counts],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def within_variation_pct(z1: np.ndarray, z2: np.ndarray) -> float:
    """Share (in percent) of total variation that is within units.

    ``100 * sum_it (z_it - zbar_i)^2 / sum_it (z_it - zbar)^2`` with no
    degrees-of-freedom correction.  A constant variable reports 0.
    """
    z = np.concatenate([z1, z2])
    zbar_i = 0.5 * (z1 + z2)
    within = np.sum((z1 - zbar_i) ** 2) + np.sum((z2 - zbar_i) ** 2)
    total = np.sum((z - z.mean()) ** 2)
    if total == 0.0:
        return 0.0
    return float(100.0 * within / total)


def _variable_summary(z1: np.ndarray, z2: np.ndarray) -> VariableSummary:
    z = np.concatenate([z1, z2])
    return VariableSummary(
        pooled_mean=float(z.mean()),
        pooled_sd=float(z.std()),
        mean_by_period=(float(z1.mean()), float(z2.mean())),
        sd_by_period=(float(z1.std()), float(z2.std())),
        within_pct=within_variation_pct(z1, z2),
    )


def summarize(data: PanelDataset) -> SummaryReport:
    """Describe the panel: moments, within shares, and the regressor-change
    histogram.

    The histogram of ``x2 - x1`` keeps exact zeros in a dedicated atom (the
    count of stayers) and bins only the nonzero changes with the
    Freedman-Diaconis rule, so a point mass at zero is never smeared across
    bins.
    """
    dx = data.x2 - data.x1
    zero_count = int(np.sum(dx == 0.0))
    nonzero = dx[dx != 0.0]
    if nonzero.size == 0:
        edges = np.array([])
        counts = np.array([], dtype=int)
    elif nonzero.size == 1:
        edges = np.array([nonzero[0] - 0.5, nonzero[0] + 0.5])
        counts = np.array([1])
    else:
        edges = np.histogram_bin_edges(nonzero, bins="fd")
        counts, edges = np.histogram(nonzero, bins=edges)
    return SummaryReport(
        n=data.n,
        y=_variable_summary(data.y1, data.y2),
        x=_variable_summary(data.x1, data.x2),
        dx_zero_count=zero_count,
        dx_bin_edges=edges,
        dx_bin_counts=counts,
    )

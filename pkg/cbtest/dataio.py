"""CSV ingestion of unordered pairs, run manifests and artifact writers."""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pendulum

from . import __version__
from .errors import DataError

logger = logging.getLogger(__name__)


def _parse_float(text: str) -> Optional[float]:
    try:
        value = float(text)
    except ValueError:
        return None
    return value


def read_pairs(path) -> Tuple[np.ndarray, np.ndarray]:
    """Two numeric columns per row; a non-numeric first row is a header."""
    path = Path(path)
    try:
        with path.open(newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as e:
        raise DataError(f"Cannot read {path}: {e}")

    a, b = [], []
    for line_no, row in enumerate(rows, start=1):
        fields = [f.strip() for f in row]
        if not any(fields):
            continue
        if len(fields) != 2 or not all(fields):
            raise DataError(f"{path}, line {line_no}: expected 2 values, got {len(fields)} field(s)")
        x, y = _parse_float(fields[0]), _parse_float(fields[1])
        if x is None or y is None:
            if line_no == 1:
                logger.debug("Treating first row of %s as a header: %s", path, fields)
                continue
            raise DataError(f"{path}, line {line_no}: cannot parse {fields!r} as numbers")
        if not (np.isfinite(x) and np.isfinite(y)):
            raise DataError(f"{path}, line {line_no}: non-finite value")
        a.append(x)
        b.append(y)

    if not a:
        raise DataError(f"{path}: no data rows")
    return np.asarray(a), np.asarray(b)


@dataclass(frozen=True)
class Rescaling:
    offset: float
    scale: float

    @property
    def identity(self) -> bool:
        return self.offset == 0.0 and self.scale == 1.0

    def describe(self) -> str:
        if self.identity:
            return "data already in [0, 1]; not rescaled"
        return f"data rescaled to [0, 1] by (x - {self.offset!r}) / {self.scale!r}"


def rescale_unit(a, b) -> Tuple[np.ndarray, np.ndarray, Rescaling]:
    """Affinely map the pooled range onto [0, 1] when data leaves [0, 1].

    Rank statistics are unaffected; directions given on [0, 1] apply to data
    already inside the unit interval unchanged.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lo = float(min(a.min(), b.min()))
    hi = float(max(a.max(), b.max()))
    if lo >= 0.0 and hi <= 1.0:
        return a, b, Rescaling(0.0, 1.0)
    if hi == lo:
        return np.full_like(a, 0.5), np.full_like(b, 0.5), Rescaling(lo - 0.5, 1.0)
    scaling = Rescaling(lo, hi - lo)
    return (a - lo) / scaling.scale, (b - lo) / scaling.scale, scaling


# --- Artifacts ------------------------------------------------------------


def utc_timestamp() -> str:
    return pendulum.now("UTC").to_iso8601_string()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    version: str = __version__
    timestamp: str = field(default_factory=utc_timestamp)

    def to_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "config": self.config,
            "seed": self.seed,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "version": self.version,
            "timestamp": self.timestamp,
        }

    def write(self, path) -> Path:
        return write_json(self.to_dict(), path)


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """CSV with floats written by repr, which round-trips exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def write_ecdf(table, path, manifest_name: Optional[str] = None) -> Tuple[Path, Path]:
    """``value,probability`` CSV plus a JSON sidecar with the config."""
    path = Path(path)
    csv_path = write_rows(path, ("value", "probability"), zip(table.values, table.probabilities))
    sidecar = {"config": table.config.to_dict(), "csv": path.name}
    if manifest_name:
        sidecar["manifest"] = manifest_name
    json_path = write_json(sidecar, path.with_suffix(".json"))
    return csv_path, json_path

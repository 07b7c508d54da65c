"""Comma-separated logs with fixed column sets (metrics, trajectories, ablation)."""
import csv
from pathlib import Path
from typing import Iterable, Mapping, Sequence

METRICS_FIELDS = ("episode", "r_ac", "h_total", "pen_distance", "pen_area", "wall_time")
ABLATION_FIELDS = ("variant", "seed", "r_ac", "h_total", "pen_distance", "pen_area")


class CsvLog:
    """Append-only CSV; the header goes in when the file is created."""

    def __init__(self, path: Path | str, fields: Sequence[str], truncate: bool = False):
        self.path = Path(path)
        self.fields = tuple(fields)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if truncate or not self.path.exists() or self.path.stat().st_size == 0:
            with self.path.open("w", newline="") as fh:
                csv.writer(fh).writerow(self.fields)

    def append(self, row: Mapping | Sequence) -> None:
        if isinstance(row, Mapping):
            missing = set(self.fields) - set(row)
            if missing:
                raise KeyError(f"row lacks columns {sorted(missing)}")
            row = [row[f] for f in self.fields]
        elif len(row) != len(self.fields):
            raise ValueError(f"{len(row)} values for {len(self.fields)} columns")
        with self.path.open("a", newline="") as fh:
            csv.writer(fh).writerow(row)

    def extend(self, rows: Iterable[Mapping | Sequence]) -> None:
        for row in rows:
            self.append(row)


def read_rows(path: Path | str, fields: Sequence[str]) -> list[dict[str, float]]:
    """Read a log back; every column must parse as a number except `variant`."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != tuple(fields):
            raise ValueError(f"{path}: columns {reader.fieldnames}, expected {list(fields)}")
        return [{k: (v if k == "variant" else float(v)) for k, v in row.items()} for row in reader]

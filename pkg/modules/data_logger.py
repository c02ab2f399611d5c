"""
Data Logger Module
CSV and JSON writers for flow trajectories, experiment records, grids and
run summaries

Floats are written with repr(), which is the shortest string that reads back
to the same float64, so identical runs give byte-identical files.
"""

import csv
import json
import logging
import os

import numpy as np

logger = logging.getLogger(__name__)


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def write_rows_csv(path, header, rows):
    """Write a header plus rows, formatting every cell with _cell()"""
    _ensure_parent(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    logger.debug("wrote %s", path)


def write_trajectory_csv(trajectory, path):
    """
    Trajectory CSV: iter, energy, grad_norm, frob_norm, s_value

    Args:
        trajectory: sequence of TrajectorySample
    """
    write_rows_csv(path, ["iter", "energy", "grad_norm", "frob_norm", "s_value"], trajectory)


def write_records_csv(records, path):
    """
    One row per dataclass record, columns in field order

    Args:
        records: non-empty sequence of dataclass instances of one type
    """
    if not records:
        write_rows_csv(path, [], [])
        return
    header = list(records[0].__dataclass_fields__)
    write_rows_csv(path, header, ([getattr(r, name) for name in header] for r in records))


def write_grid_csv(points, path):
    """Grid CSV: x, y, E"""
    write_rows_csv(path, ["x", "y", "E"], points)


def write_summary_json(summary, path):
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.debug("wrote %s", path)


def summary_path_for(path):
    """out.csv -> out.summary.json"""
    stem, _ = os.path.splitext(path)
    return f"{stem}.summary.json"


class DataLogger:
    """
    Collects the outputs of one command and writes them on finalize()

    Usage:
        data_log = DataLogger("runs/ratio.csv")
        data_log.log_records(result.records)
        data_log.log_summary(result.summary)
        data_log.finalize()
    """

    def __init__(self, output_path):
        self.output_path = output_path
        self.records = []
        self.table = None
        self.grid = None
        self.trajectory = []
        self.summary = {}
        self.written = []

    def log_records(self, records):
        self.records.extend(records)

    def log_table(self, header, rows):
        self.table = (list(header), list(rows))

    def log_grid(self, points):
        """(x, y, E) rows of an energy surface"""
        self.grid = list(points)

    def log_trajectory(self, trajectory, path):
        self.trajectory = list(trajectory)
        self.trajectory_path = path

    def log_summary(self, summary):
        self.summary.update(summary)

    def finalize(self):
        """
        Write everything collected so far

        Returns:
            list of paths written
        """
        if self.records:
            write_records_csv(self.records, self.output_path)
            self.written.append(self.output_path)
        elif self.table is not None:
            write_rows_csv(self.output_path, *self.table)
            self.written.append(self.output_path)
        elif self.grid is not None:
            write_grid_csv(self.grid, self.output_path)
            self.written.append(self.output_path)

        if self.trajectory:
            write_trajectory_csv(self.trajectory, self.trajectory_path)
            self.written.append(self.trajectory_path)

        if self.summary:
            target = summary_path_for(self.output_path) if self.written else self.output_path
            write_summary_json(self.summary, target)
            self.written.append(target)

        for path in self.written:
            print(f"✅ Written: {path}")
        return list(self.written)

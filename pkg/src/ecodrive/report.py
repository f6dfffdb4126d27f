"""CSV output for solved profiles, summaries and sweeps.

Floats in profile files are written with ``repr`` so that re-reading a file
and re-evaluating it reproduces the reported totals bit for bit.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

BREAKDOWN_HEADER = ("t_s", "v_mps", "e_wheel_J", "e_bat_J", "eta", "cum_e_bat_J")
SUMMARY_HEADER = ("vehicle", "map", "v_avg_mps", "distance_m", "n_samples",
                  "typical_kWs", "optimal_kWs", "savings_pct", "converged", "status")
PENALTY_HEADER = ("penalty_pct",) + SUMMARY_HEADER


def atomic_write_text(path, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def breakdown_csv(breakdown, e_bat=None) -> str:
    """One row per step, starting with the launch step at ``t = 0``.

    ``e_bat`` overrides the battery column (e.g. with the surcharged samples).
    """
    e_bat = breakdown.e_bat if e_bat is None else np.asarray(e_bat, dtype=float)
    cum = np.cumsum(e_bat)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BREAKDOWN_HEADER)
    for row in zip(breakdown.times, breakdown.speeds, breakdown.e_wheel, e_bat,
                   breakdown.eta, cum):
        writer.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def _format(key, value):
    if value is None:
        return ""
    if key in ("typical_kWs", "optimal_kWs", "savings_pct"):
        return f"{value:.2f}"
    if key == "penalty_pct":
        return f"{value:g}"
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def rows_csv(rows, header=SUMMARY_HEADER) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format(k, row.get(k)) for k in header])
    return buf.getvalue()


def rows_table(rows, header=SUMMARY_HEADER) -> str:
    """Fixed-width text table for the terminal."""
    cells = [list(header)] + [[_format(k, r.get(k)) for k in header] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(line, widths)) for line in cells)

"""Delimited text formats: pulse tables, trajectories and (time, value) datasets."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .engine import BBSequence, TrajectoryRecord
from .spins import SpinSystem


class TableError(ValueError):
    """A table does not match the expected layout or spin system."""


def pulse_table_header(channels) -> list[str]:
    cols = ["index", "duration_ms"]
    for c in channels:
        cols += [f"{c}_amp_hz", f"{c}_phase_deg"]
    return cols


def format_pulse_table(seq: BBSequence, sys: SpinSystem) -> str:
    """One row per segment; amplitude is the channel's RF amplitude when the bang is on, else 0."""
    amps = [sys.channel(c).rf_amplitude for c in seq.channels]
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(pulse_table_header(seq.channels))
    dur = f"{seq.dt * 1e3:.6f}"
    deg = np.rad2deg(seq.phases)
    for n in range(seq.n_segments):
        row = [n, dur]
        for k, a in enumerate(amps):
            row += [f"{a if seq.active[n, k] else 0.0:.6f}", f"{deg[n, k]:.6f}"]
        w.writerow(row)
    return out.getvalue()


def write_pulse_table(path, seq: BBSequence, sys: SpinSystem) -> None:
    Path(path).write_text(format_pulse_table(seq, sys))


def read_pulse_table(path, sys: SpinSystem, dt: float | None = None) -> BBSequence:
    """Parse a pulse table and check it against the spin system's channels and ``dt``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TableError(f"{path}: empty pulse table")
    header = [h.strip() for h in rows[0]]
    channels = [c.label for c in sys.channels]
    expected = pulse_table_header(channels)
    if header != expected:
        raise TableError(f"{path}: header {header} does not match channels {channels} (expected {expected})")
    body = [r for r in rows[1:] if r]
    if not body:
        raise TableError(f"{path}: no segments")
    durations = {float(r[1]) for r in body}
    if len(durations) != 1:
        raise TableError(f"{path}: duration_ms must be the same on every row")
    table_dt = durations.pop() / 1e3
    if dt is not None and abs(table_dt - dt) > 1e-12:
        raise TableError(f"{path}: duration_ms {table_dt * 1e3:g} does not match dt {dt * 1e3:g} ms")
    active = np.zeros((len(body), len(channels)), dtype=bool)
    phases = np.zeros((len(body), len(channels)))
    for n, r in enumerate(body):
        for k, c in enumerate(channels):
            amp = float(r[2 + 2 * k])
            full = sys.channel(c).rf_amplitude
            if amp != 0.0 and abs(amp - full) > 1e-6:
                raise TableError(f"{path}: row {n} field {c}_amp_hz = {amp:g}, expected 0 or {full:g}")
            active[n, k] = amp != 0.0
            phases[n, k] = np.deg2rad(float(r[3 + 2 * k]))
    return BBSequence(dt if dt is not None else table_dt, channels, active, phases)


def write_trajectory(path, rec: TrajectoryRecord) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_ms", "Q", "enhancement"])
        for t, q, e in zip(rec.times, rec.q_values, rec.enhancement):
            w.writerow([f"{t * 1e3:.6f}", repr(float(q)), repr(float(e))])


def read_trajectory(path) -> dict[str, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {"time_ms": data[:, 0], "Q": data[:, 1], "enhancement": data[:, 2]}


def write_history(path, history) -> None:
    with open(path, "w") as fh:
        for rec in history:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def read_history(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def read_xy(path) -> tuple[np.ndarray, np.ndarray]:
    """Two-column (time_s, value) data; a non-numeric first row is treated as a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    try:
        float(rows[0][0])
    except (ValueError, IndexError):
        rows = rows[1:]
    try:
        t = np.array([float(r[0]) for r in rows])
        y = np.array([float(r[1]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise TableError(f"{path}: expected two numeric columns (time_s, value)") from exc
    return t, y


def write_xy(path, t, y, header=("time_s", "value")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for a, b in zip(t, y):
            w.writerow([repr(float(a)), repr(float(b))])

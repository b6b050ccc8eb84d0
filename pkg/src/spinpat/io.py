"""CSV and sidecar I/O with a fixed, byte-stable text format."""

from __future__ import annotations

import csv
import json
import math
from collections import OrderedDict

import numpy as np

from .calibration import CalibratedScan, RawRow, RawScan
from .errors import ValidationError
from .fitting import PeakSeries


def fmt(value):
    """Shortest round-trip text for numbers; 'nan' for missing values."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "nan" if math.isnan(v) else repr(v)
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_json(path, data):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_csv(path, required):
    """Rows as dicts; checks the header holds every ``required`` column."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in required if c not in header]
            if missing:
                raise ValidationError(f"{path}: missing column(s) {', '.join(missing)}")
            rows = list(reader)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    return rows, header


def _float(row, key, path):
    try:
        return float(row[key])
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: bad number in column {key}: {row[key]!r}") from exc


def read_peak_series(path, default_nu):
    """Peak-series CSV (B_T, delta_eps_ueV, kind[, sigma_ueV][, nu_GHz]) grouped by (kind, nu)."""
    rows, header = read_csv(path, ("B_T", "delta_eps_ueV", "kind"))
    groups = OrderedDict()
    for r in rows:
        nu = _float(r, "nu_GHz", path) if "nu_GHz" in header and r["nu_GHz"] else default_nu
        key = (r["kind"].strip(), nu)
        sigma = _float(r, "sigma_ueV", path) if "sigma_ueV" in header and r["sigma_ueV"] else None
        groups.setdefault(key, []).append((_float(r, "B_T", path), _float(r, "delta_eps_ueV", path), sigma))
    out = []
    for (kind, nu), pts in groups.items():
        sig = [p[2] for p in pts]
        sigma = None if any(s is None for s in sig) else np.array(sig)
        out.append(PeakSeries(np.array([p[0] for p in pts]), np.array([p[1] for p in pts]), kind, nu, sigma))
    return out


def write_peak_series(path, series_list):
    rows = []
    for s in series_list:
        for i in range(len(s)):
            sigma = s.sigma[i] if s.sigma is not None else ""
            rows.append((s.B[i], s.delta_eps[i], s.kind, sigma, s.nu))
    write_csv(path, ("B_T", "delta_eps_ueV", "kind", "sigma_ueV", "nu_GHz"), rows)


def read_raw_scan(path, pulse_mV):
    rows, _ = read_csv(path, ("B_T", "gate_mV", "signal"))
    by_b = OrderedDict()
    for r in rows:
        by_b.setdefault(_float(r, "B_T", path), []).append((_float(r, "gate_mV", path), _float(r, "signal", path)))
    raw_rows = []
    for b, pts in by_b.items():
        pts.sort()
        raw_rows.append(RawRow(b, np.array([p[0] for p in pts]), np.array([p[1] for p in pts])))
    return RawScan(tuple(raw_rows), pulse_mV)


def write_raw_scan(path, raw: RawScan):
    rows = []
    for r in raw.rows:
        rows.extend((r.B, g, s) for g, s in zip(r.gate_mV, r.signal))
    write_csv(path, ("B_T", "gate_mV", "signal"), rows)


def write_calibrated(path, cal: CalibratedScan):
    col = "epsilon_ueV" if cal.scale_tag == "epsilon" else "epsilon_star_ueV"
    rows = []
    for i, b in enumerate(cal.B):
        for e, s in zip(cal.axis, cal.signal[i]):
            if np.isfinite(s):
                rows.append((b, e, s))
    write_csv(path, ("B_T", col, "signal"), rows)


def read_relaxation(path):
    rows, header = read_csv(path, ("tau_ns", "signal"))
    tau = np.array([_float(r, "tau_ns", path) for r in rows])
    sig = np.array([_float(r, "signal", path) for r in rows])
    sigma = None
    if "sigma" in header and all(r["sigma"] for r in rows):
        sigma = np.array([_float(r, "sigma", path) for r in rows])
    return tau, sig, sigma

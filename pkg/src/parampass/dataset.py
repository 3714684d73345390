"""Tabulated scattering data on a frequency x parameter grid, and report export.

On disk a dataset is a JSON manifest::

    {"parameter_name": "r", "parameter_unit": "um", "ports": 2,
     "parameter_values": [400, 425, ...], "files": ["r400.csv", ...]}

plus one CSV per parameter value with header
``freq_hz,ReS11,ImS11,ReS12,ImS12,...`` (row-major port order).  File paths
are resolved relative to the manifest.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .model import ParamModel

__all__ = [
    "DatasetError",
    "SampledDataset",
    "FitSplit",
    "RmsResult",
    "load_dataset",
    "save_dataset",
    "rms_error",
    "export_report",
    "load_report_json",
    "write_csv",
    "fmt",
]

REPORT_FORMAT_VERSION = 1


class DatasetError(ValueError):
    pass


def fmt(x: float) -> str:
    """Float with 17 significant digits (lossless for doubles)."""
    return format(float(x), ".17g")


def entry_columns(P: int) -> list[str]:
    cols = []
    for i in range(1, P + 1):
        for j in range(1, P + 1):
            cols += [f"ReS{i}{j}", f"ImS{i}{j}"] if P < 10 else [f"ReS{i}_{j}", f"ImS{i}_{j}"]
    return cols


@dataclass(frozen=True)
class SampledDataset:
    """Samples ``H[k, m] = H(j 2 pi f_k; theta_m)``, shape ``(K, M, P, P)``."""

    freqs: np.ndarray
    params: np.ndarray
    samples: np.ndarray
    parameter_name: str = "theta"
    parameter_unit: str = ""

    def __post_init__(self):
        f = np.array(self.freqs, dtype=float).reshape(-1)
        t = np.array(self.params, dtype=float).reshape(-1)
        h = np.array(self.samples, dtype=complex)
        if h.ndim != 4 or h.shape[:2] != (f.size, t.size) or h.shape[2] != h.shape[3]:
            raise DatasetError(f"samples shape {h.shape} does not match ({f.size}, {t.size}, P, P)")
        if np.any(np.diff(f) <= 0):
            raise DatasetError("frequencies must be strictly ascending")
        if np.any(np.diff(t) <= 0):
            raise DatasetError("parameter values must be strictly ascending")
        if not np.all(np.isfinite(h)):
            k, m, i, j = np.argwhere(~np.isfinite(h))[0]
            raise DatasetError(f"non-finite sample at freq index {k}, param index {m}, entry ({i+1},{j+1})")
        for a in (f, t, h):
            a.setflags(write=False)
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "params", t)
        object.__setattr__(self, "samples", h)

    @property
    def ports(self) -> int:
        return self.samples.shape[2]

    @property
    def n_freqs(self) -> int:
        return self.freqs.size

    @property
    def n_params(self) -> int:
        return self.params.size

    @property
    def f_min(self) -> float:
        return float(self.freqs[0])

    @property
    def f_max(self) -> float:
        return float(self.freqs[-1])


@dataclass(frozen=True)
class FitSplit:
    """Disjoint fit / validation parameter columns (0-based indices)."""

    fit_indices: tuple[int, ...]
    validation_indices: tuple[int, ...] = ()

    def __post_init__(self):
        fit = tuple(int(i) for i in self.fit_indices)
        val = tuple(int(i) for i in self.validation_indices)
        if not fit:
            raise ValueError("fit_indices must not be empty")
        if set(fit) & set(val):
            raise ValueError("fit and validation indices overlap")
        object.__setattr__(self, "fit_indices", fit)
        object.__setattr__(self, "validation_indices", val)

    @classmethod
    def alternating(cls, n_params: int) -> "FitSplit":
        """Odd-numbered columns (1st, 3rd, ...) fit, the others validate."""
        idx = range(n_params)
        return cls(tuple(i for i in idx if i % 2 == 0), tuple(i for i in idx if i % 2 == 1))

    @classmethod
    def all(cls, n_params: int) -> "FitSplit":
        return cls(tuple(range(n_params)))

    def check(self, n_params: int):
        if max(self.fit_indices + self.validation_indices) >= n_params or min(
            self.fit_indices + self.validation_indices
        ) < 0:
            raise ValueError(f"split indices out of range for {n_params} parameter values")


# -- manifest + CSV -----------------------------------------------------------


def _read_param_csv(path: Path, P: int):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    expected = ["freq_hz"] + entry_columns(P)
    if header != expected:
        raise DatasetError(f"{path}: header {header} does not match {P}-port layout {expected}")
    data = np.empty((len(rows) - 1, 1 + 2 * P * P))
    for r, row in enumerate(rows[1:]):
        if len(row) != data.shape[1]:
            raise DatasetError(f"{path}: row {r + 1} has {len(row)} columns, expected {data.shape[1]}")
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DatasetError(f"{path}: row {r + 1}, column {header[c]}: cannot parse {cell!r}") from None
            if not math.isfinite(v):
                raise DatasetError(f"{path}: row {r + 1}, column {header[c]}: non-finite value {cell!r}")
            data[r, c] = v
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    f = data[:, 0]
    h = (data[:, 1::2] + 1j * data[:, 2::2]).reshape(-1, P, P)
    return f, h


def load_dataset(manifest_path) -> SampledDataset:
    """Load and validate a dataset manifest and its per-parameter CSV files."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    doc = json.loads(manifest_path.read_text())
    P = int(doc["ports"])
    values = [float(v) for v in doc["parameter_values"]]
    files = doc["files"]
    if len(values) != len(files):
        raise DatasetError("parameter_values and files differ in length")
    base = manifest_path.parent
    freqs = None
    cols = []
    for v, name in zip(values, files):
        path = base / name
        if not path.is_file():
            raise FileNotFoundError(f"data file not found: {path}")
        f, h = _read_param_csv(path, P)
        if freqs is None:
            freqs = f
        elif f.shape != freqs.shape or not np.allclose(f, freqs, rtol=1e-9, atol=0):
            raise DatasetError(f"{path}: frequency axis differs from {base / files[0]}")
        cols.append(h)
    order = np.argsort(values)
    samples = np.stack([cols[i] for i in order], axis=1)
    return SampledDataset(
        freqs,
        np.asarray(values)[order],
        samples,
        doc.get("parameter_name", "theta"),
        doc.get("parameter_unit", ""),
    )


def save_dataset(data: SampledDataset, manifest_path, stem: str = "param") -> Path:
    """Write the manifest and one CSV per parameter value next to it."""
    manifest_path = Path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    P = data.ports
    files = []
    for m in range(data.n_params):
        name = f"{stem}_{m:03d}.csv"
        rows = []
        for k in range(data.n_freqs):
            h = data.samples[k, m].reshape(-1)
            row = [fmt(data.freqs[k])]
            for z in h:
                row += [fmt(z.real), fmt(z.imag)]
            rows.append(row)
        write_csv(manifest_path.parent / name, ["freq_hz"] + entry_columns(P), rows)
        files.append(name)
    doc = {
        "parameter_name": data.parameter_name,
        "parameter_unit": data.parameter_unit,
        "ports": P,
        "parameter_values": [float(v) for v in data.params],
        "files": files,
    }
    manifest_path.write_text(json.dumps(doc, indent=1) + "\n")
    return manifest_path


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- errors ------------------------------------------------------------------


@dataclass(frozen=True)
class RmsResult:
    per_entry: np.ndarray
    worst: float


def model_on_grid(model: ParamModel, data: SampledDataset, columns: Sequence[int]) -> np.ndarray:
    """Model responses at the data frequencies for the given parameter columns."""
    s = model.s_from_hz(data.freqs)
    return np.stack([model.transfer(s, data.params[m]) for m in columns], axis=1)


def rms_error(
    model: ParamModel,
    data: SampledDataset,
    columns: Sequence[int] | FitSplit,
    mode: Literal["absolute", "relative"] = "absolute",
) -> RmsResult:
    """Per-entry RMS of ``model - data`` over all frequencies and the chosen columns.

    In relative mode each entry's residual RMS is divided by the RMS of the
    data in that entry.
    """
    if isinstance(columns, FitSplit):
        columns = columns.fit_indices
    columns = list(columns)
    if not columns:
        raise ValueError("empty subset")
    if model.ports != data.ports:
        raise ValueError(f"model has {model.ports} ports, data has {data.ports}")
    h = data.samples[:, columns]
    res = model_on_grid(model, data, columns) - h
    rms = np.sqrt(np.mean(np.abs(res) ** 2, axis=(0, 1)))
    if mode == "relative":
        ref = np.sqrt(np.mean(np.abs(h) ** 2, axis=(0, 1)))
        rms = rms / ref
    elif mode != "absolute":
        raise ValueError(f"unknown mode {mode!r}")
    return RmsResult(rms, float(rms.max()))


# -- reports -----------------------------------------------------------------

PSI_HEADER = ["theta", "psi"]
VIOLATION_HEADER = ["theta", "omega_low", "omega_high", "omega_max", "sigma_max"]
GRID_HEADER_BASE = ["freq_hz", "theta"]


def _report_doc(report) -> dict:
    """JSON document of a ViolationReport; angular frequencies in rad/s."""
    scale = report.freq_scale
    samples = []
    for s in report.samples:
        samples.append(
            {
                "theta": s.theta,
                "psi": s.psi,
                "nu": s.nu,
                "crossings": [w * scale for w in s.spectrum.imag_freqs.tolist()],
                "bands": [
                    {
                        "omega_low": b.omega_low * scale,
                        "omega_high": b.omega_high * scale if math.isfinite(b.omega_high) else "inf",
                        "passive": b.passive,
                        "omega_max": None if b.omega_max is None else b.omega_max * scale,
                        "sigma_max": b.sigma_max,
                        "asymptotic": b.asymptotic,
                    }
                    for b in s.bands
                ],
            }
        )
    return {
        "version": REPORT_FORMAT_VERSION,
        "freq_scale_rad_s": scale,
        "passes_used": report.passes_used,
        "converged": report.converged,
        "psi": [[s.theta, s.psi] for s in report.samples],
        "violations": [
            [x if math.isfinite(x) else "inf" for x in _violation_row(v, scale)] for v in report.violations
        ],
        "samples": samples,
    }


def _violation_row(v, scale: float) -> list[float]:
    hi = v.omega_high * scale if math.isfinite(v.omega_high) else math.inf
    return [v.theta, v.omega_low * scale, hi, v.omega * scale, v.sigma]


def export_report(report, path, format: Literal["csv", "json"] = "csv", table: str = "violations") -> Path:
    """Write a ViolationReport (or an evaluation grid dict) to ``path``.

    ``format="json"`` writes the whole report.  For CSV, ``table`` selects
    ``"violations"`` (theta, omega_low, omega_high, omega_max, sigma_max) or
    ``"psi"`` (theta, psi).  Frequencies are in rad/s.
    """
    path = Path(path)
    if report is None:
        raise ValueError("report is None")
    if isinstance(report, dict):
        if format == "json":
            path.write_text(json.dumps(report, indent=1) + "\n")
        else:
            write_csv(path, report["header"], [[fmt(x) if isinstance(x, float) else x for x in r] for r in report["rows"]])
        return path
    if format == "json":
        path.write_text(json.dumps(_report_doc(report), indent=1) + "\n")
    elif format == "csv":
        if table == "psi":
            rows = [[fmt(s.theta), fmt(s.psi)] for s in report.samples]
            write_csv(path, PSI_HEADER, rows)
        elif table == "violations":
            rows = [[fmt(x) for x in _violation_row(v, report.freq_scale)] for v in report.violations]
            write_csv(path, VIOLATION_HEADER, rows)
        else:
            raise ValueError(f"unknown table {table!r}")
    else:
        raise ValueError(f"unknown format {format!r}")
    return path


def load_report_json(path) -> dict:
    return json.loads(Path(path).read_text())

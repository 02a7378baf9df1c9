"""CSV panel ingestion, standardization, and result import/export.

File formats (all plain CSV / flat key-value text, byte-deterministic given
identical inputs):

* panel:       header ``time,<series...>``; one row per time point.
* loadings:    columns ``t,j,k,value,gamma`` sorted by (t, j, k); t = 0 is
               the initial condition, j and k are 0-based.
* volatility:  header ``series,1..T``; one row of variances per series.
* moments:     columns ``kind,t,i,j,value`` with kind in {mean, cov, lagcov}.
* metrics:     per-time table ``t,active_factors,avg_active_per_series[,rmse]``.
* config:      ``key = value`` lines, snake_case keys.
* manifest:    flat key-value run metadata (config hash, seed, iterations).

Floats are written with repr-precision so re-importing reproduces values
exactly.
"""

from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import LoadingsPath, ModelConfig, Panel, SmoothedMoments, VolatilityPath

__all__ = [
    "load_panel",
    "write_panel",
    "standardize",
    "read_loadings",
    "write_loadings",
    "read_volatility",
    "write_volatility",
    "read_moments",
    "write_moments",
    "read_kv",
    "write_kv",
    "ExportBundle",
]


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) or isinstance(x, np.floating):
        return repr(float(x))
    return str(x)


# ---------------------------------------------------------------------------
# flat key-value config files


def write_kv(path: str, kv: dict) -> None:
    lines = [f"{key} = {_fmt(val)}\n" for key, val in kv.items()]
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(lines)


def read_kv(path: str) -> dict:
    kv = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            kv[key.strip()] = val.strip()
    return kv


# ---------------------------------------------------------------------------
# panels


def load_panel(path: str, groups_path: Optional[str] = None) -> Panel:
    """Parse a rectangular numeric CSV: first column time index, header row
    holds the series names.  Missing cells, ragged rows, and duplicate series
    names are rejected with the offending location named."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if len(header) < 2:
            raise ValueError(f"{path}: header must name a time column and series")
        names = [h.strip() for h in header[1:]]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise ValueError(f"{path}: duplicate series names {sorted(dupes)}")
        times = []
        rows = []
        for rownum, row in enumerate(reader, 2):
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {rownum} has {len(row)} cells, expected {len(header)}")
            times.append(row[0].strip())
            vals = []
            for colnum, cell in enumerate(row[1:], 2):
                cell = cell.strip()
                if cell == "":
                    raise ValueError(
                        f"{path}: empty cell at row {rownum}, column {colnum}")
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric cell at row {rownum}, column {colnum}") from None
            rows.append(vals)
    values = np.asarray(rows, dtype=float).T  # (P, T)
    groups = None
    if groups_path is not None:
        mapping = {}
        with open(groups_path, "r", encoding="utf-8", newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().lower() == "series":
                    continue
                if len(row) < 2:
                    raise ValueError(f"{groups_path}: rows need 'series,group'")
                mapping[row[0].strip()] = row[1].strip()
        groups = [mapping.get(n, "") for n in names]
    return Panel(values=values, series_names=names, time_index=times,
                 group_labels=groups)


def write_panel(path: str, panel: Panel) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time"] + list(panel.series_names))
        for i, t in enumerate(panel.time_index):
            writer.writerow([t] + [_fmt(v) for v in panel.values[:, i]])


def standardize(panel: Panel) -> Panel:
    """Center each series and scale to unit sample standard deviation
    (divisor T-1), recording the transform for inverse mapping."""
    means = panel.values.mean(axis=1)
    sds = panel.values.std(axis=1, ddof=1)
    flat = np.nonzero(sds == 0.0)[0]
    if flat.size:
        raise ValueError(
            f"constant series cannot be standardized: {panel.series_names[flat[0]]}")
    values = (panel.values - means[:, None]) / sds[:, None]
    meta = np.column_stack([means, sds])
    return Panel(values=values, series_names=list(panel.series_names),
                 time_index=list(panel.time_index),
                 group_labels=None if panel.group_labels is None else list(panel.group_labels),
                 standardization=meta)


# ---------------------------------------------------------------------------
# result artifacts


def write_loadings(path: str, lp: LoadingsPath) -> None:
    t_tot, p, k = lp.betas.shape
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,j,k,value,gamma\n")
        for t in range(t_tot):
            bt = lp.betas[t]
            gt = lp.gammas[t]
            for j in range(p):
                for kk in range(k):
                    fh.write(f"{t},{j},{kk},{_fmt(bt[j, kk])},{_fmt(gt[j, kk])}\n")


def read_loadings(path: str) -> LoadingsPath:
    ts, js, ks, vals, gams = [], [], [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            ts.append(int(row[0]))
            js.append(int(row[1]))
            ks.append(int(row[2]))
            vals.append(float(row[3]))
            gams.append(float(row[4]))
    t_tot, p, k = max(ts) + 1, max(js) + 1, max(ks) + 1
    betas = np.zeros((t_tot, p, k))
    gammas = np.zeros((t_tot, p, k))
    betas[ts, js, ks] = vals
    gammas[ts, js, ks] = gams
    return LoadingsPath(betas=betas, gammas=gammas)


def write_volatility(path: str, vol: VolatilityPath,
                     series_names: Sequence[str]) -> None:
    p, t_len = vol.sigma2.shape
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("series," + ",".join(str(t + 1) for t in range(t_len)) + "\n")
        for j in range(p):
            fh.write(str(series_names[j]) + ","
                     + ",".join(_fmt(v) for v in vol.sigma2[j]) + "\n")


def read_volatility(path: str):
    """Returns (sigma2 array, series names)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        names, rows = [], []
        for row in reader:
            names.append(row[0])
            rows.append([float(c) for c in row[1:]])
    return np.asarray(rows, dtype=float), names


def write_moments(path: str, m: SmoothedMoments) -> None:
    t_tot, k = m.means.shape
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("kind,t,i,j,value\n")
        for t in range(t_tot):
            for i in range(k):
                fh.write(f"mean,{t},{i},0,{_fmt(m.means[t, i])}\n")
        for t in range(t_tot):
            for i in range(k):
                for j in range(k):
                    fh.write(f"cov,{t},{i},{j},{_fmt(m.covs[t, i, j])}\n")
        for t in range(1, t_tot):
            for i in range(k):
                for j in range(k):
                    fh.write(f"lagcov,{t},{i},{j},{_fmt(m.lag_covs[t - 1, i, j])}\n")


def read_moments(path: str) -> SmoothedMoments:
    recs = {"mean": [], "cov": [], "lagcov": []}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for kind, t, i, j, val in reader:
            recs[kind].append((int(t), int(i), int(j), float(val)))
    t_tot = max(t for t, *_ in recs["mean"]) + 1
    k = max(i for _, i, *_ in recs["mean"]) + 1
    means = np.zeros((t_tot, k))
    covs = np.zeros((t_tot, k, k))
    lag_covs = np.zeros((t_tot - 1, k, k))
    for t, i, _, v in recs["mean"]:
        means[t, i] = v
    for t, i, j, v in recs["cov"]:
        covs[t, i, j] = v
    for t, i, j, v in recs["lagcov"]:
        lag_covs[t - 1, i, j] = v
    return SmoothedMoments(means=means, covs=covs, lag_covs=lag_covs)


def write_series(path: str, names: Sequence[str],
                 groups: Optional[Sequence[str]] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("j,series,group\n")
        for j, n in enumerate(names):
            g = "" if groups is None else groups[j]
            fh.write(f"{j},{n},{g}\n")


def read_series(path: str):
    names, groups = [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            names.append(row[1])
            groups.append(row[2] if len(row) > 2 else "")
    return names, groups


def config_hash(kv: dict) -> str:
    text = "".join(f"{k}={_fmt(v)};" for k, v in sorted(kv.items()))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


@dataclass
class ExportBundle:
    """Paths of one run's exported artifacts inside an output directory."""

    out_dir: str

    @property
    def loadings_file(self) -> str:
        return os.path.join(self.out_dir, "loadings.csv")

    @property
    def volatility_file(self) -> str:
        return os.path.join(self.out_dir, "volatility.csv")

    @property
    def moments_file(self) -> str:
        return os.path.join(self.out_dir, "moments.csv")

    @property
    def metrics_file(self) -> str:
        return os.path.join(self.out_dir, "metrics.csv")

    @property
    def series_file(self) -> str:
        return os.path.join(self.out_dir, "series.csv")

    @property
    def manifest_file(self) -> str:
        return os.path.join(self.out_dir, "manifest.txt")

    @property
    def config_file(self) -> str:
        return os.path.join(self.out_dir, "config.cfg")

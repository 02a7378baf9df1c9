"""Synthetic benchmark generator and loading-recovery metrics.

The benchmark plants ``k_true`` active factors in a block-diagonal layout
(``block`` loadings per factor, ``overlap`` shared with the neighbour) inside
``k_candidate`` columns, evolves the active loadings along an AR path started
at ``beta_init``, and switches whole factors off/on at the scheduled break
times.  Factors and idiosyncratic errors are standard normal.

Because loadings are only identified up to column permutation and sign,
comparisons first left-order both matrices by their thresholded support
pattern and sign-align the paired columns; RMSE is computed afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model import LoadingsPath, Panel

__all__ = [
    "SimScenario",
    "SimOutput",
    "simulate",
    "rmse",
    "left_order",
    "count_active_factors",
    "avg_active_per_series",
]

ACTIONS = ("deactivate", "activate")


@dataclass
class SimScenario:
    """Design of one synthetic dataset.

    ``break_times`` holds (time, factor, action) triples with 1-based factor
    indices and action in {"deactivate", "activate"}; breaks apply from their
    time onward.  ``train_len`` prepends that many extra columns generated
    under the t = 1 loading pattern (for rolling-window initializers).
    """

    p: int = 100
    k_true: int = 5
    k_candidate: int = 10
    t_total: int = 400
    break_times: List[Tuple[int, int, str]] = field(default_factory=list)
    ar_phi: float = 0.99
    ar_var: float = 0.0025
    beta_init: float = 2.0
    block: int = 28
    overlap: int = 10
    train_len: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.k_true > self.k_candidate:
            raise ValueError("k_true must not exceed k_candidate")
        span = self.block * self.k_true - self.overlap * (self.k_true - 1)
        if span > self.p:
            raise ValueError("block layout does not fit: "
                             f"needs {span} series, panel has {self.p}")
        for (when, k, action) in self.break_times:
            if not 1 < when <= self.t_total:
                raise ValueError(f"break time {when} not in (1, t_total]")
            if not 1 <= k <= self.k_true:
                raise ValueError(f"break factor {k} not in 1..k_true")
            if action not in ACTIONS:
                raise ValueError(f"unknown break action {action!r}")

    def to_kv(self) -> dict:
        kv = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name == "break_times":
                val = ",".join(f"{w}:{k}:{a}" for (w, k, a) in val)
            kv[f"sim.{f.name}"] = val
        return kv

    @classmethod
    def from_kv(cls, kv: dict) -> "SimScenario":
        args = {}
        for f in fields(cls):
            key = f"sim.{f.name}"
            if key not in kv:
                continue
            raw = kv[key]
            if f.name == "break_times":
                if isinstance(raw, str):
                    triples = []
                    for part in filter(None, [p.strip() for p in raw.split(",")]):
                        w, k, a = part.split(":")
                        triples.append((int(w), int(k), a))
                    args[f.name] = triples
                else:
                    args[f.name] = raw
            elif f.type in ("int", int):
                args[f.name] = int(raw)
            else:
                args[f.name] = float(raw)
        return cls(**args)


@dataclass
class SimOutput:
    """Generated panel plus the truth used to build it."""

    panel: Panel
    true_loadings: LoadingsPath   # gammas are the exact 0/1 activity pattern
    true_factors: np.ndarray      # (T, K)
    true_errors: np.ndarray       # (T, P)
    scenario: SimScenario


def _block_mask(sc: SimScenario) -> np.ndarray:
    """(P, k_true) bool mask of the block-diagonal support at t = 1."""
    mask = np.zeros((sc.p, sc.k_true), dtype=bool)
    stride = sc.block - sc.overlap
    for k in range(sc.k_true):
        start = k * stride
        mask[start:start + sc.block, k] = True
    return mask


def _activity_schedule(sc: SimScenario) -> np.ndarray:
    """(T+1, k_true) bool: factor activity at t = 1..T (row 0 mirrors t = 1)."""
    active = np.ones((sc.t_total + 1, sc.k_true), dtype=bool)
    for (when, k, action) in sorted(sc.break_times):
        active[when:, k - 1] = action == "activate"
    active[0] = active[1]
    return active


def simulate(sc: SimScenario) -> SimOutput:
    """Draw one dataset; deterministic per seed."""
    rng = np.random.default_rng(sc.seed)
    t_full = sc.train_len + sc.t_total
    kc = sc.k_candidate
    omega = rng.standard_normal((t_full, kc))
    eps = rng.standard_normal((t_full, sc.p))
    innov = rng.standard_normal((t_full + 1, sc.p, sc.k_true)) * np.sqrt(sc.ar_var)

    mask = _block_mask(sc)
    active = _activity_schedule(sc)
    reactivations = {(when, k - 1) for (when, k, action) in sc.break_times
                     if action == "activate"}

    # Main-span AR paths; zeros while inactive, re-initialized on activation.
    main = np.zeros((sc.t_total + 1, sc.p, sc.k_true))
    main[1][mask & active[1][None, :]] = sc.beta_init
    for t in range(2, sc.t_total + 1):
        for k in range(sc.k_true):
            if not active[t, k]:
                continue
            if (t, k) in reactivations or not active[t - 1, k]:
                main[t, mask[:, k], k] = sc.beta_init
            else:
                main[t, mask[:, k], k] = (sc.ar_phi * main[t - 1, mask[:, k], k]
                                          + innov[t, mask[:, k], k])
    main[0] = main[1]

    betas = np.zeros((t_full + 1, sc.p, kc))
    betas[sc.train_len:, :, :sc.k_true] = main
    if sc.train_len:
        betas[:sc.train_len, :, :sc.k_true] = main[1]

    y = np.einsum("tpk,tk->tp", betas[1:], omega) + eps
    sched_full = np.zeros((t_full + 1, sc.k_true), dtype=bool)
    sched_full[sc.train_len:] = active
    if sc.train_len:
        sched_full[:sc.train_len] = active[1]
    gammas = np.zeros_like(betas)
    gammas[:, :, :sc.k_true] = (mask[None, :, :]
                                & sched_full[:, None, :]).astype(float)

    names = [f"S{j + 1:03d}" for j in range(sc.p)]
    times = [str(i + 1) for i in range(t_full)]
    panel = Panel(values=y.T, series_names=names, time_index=times)
    return SimOutput(panel=panel,
                     true_loadings=LoadingsPath(betas=betas, gammas=gammas),
                     true_factors=omega, true_errors=eps, scenario=sc)


def left_order(b: np.ndarray, threshold: float = 0.1) -> np.ndarray:
    """Columns sorted by their thresholded support pattern.

    The support column, read top-to-bottom as a binary number, sorts in
    decreasing order (all-zero columns last); ties break by larger column
    norm, then by original index.  Stable for identical columns.
    """
    b = np.asarray(b, dtype=float)
    support = np.abs(b) > threshold
    norms = np.linalg.norm(b, axis=0)
    order = sorted(range(b.shape[1]),
                   key=lambda k: (tuple(support[:, k]), norms[k], -k),
                   reverse=True)
    return b[:, order]


def rmse(true_b: np.ndarray, est_b: np.ndarray, threshold: float = 0.1) -> float:
    """Root mean squared loading error after left-ordering and sign alignment.

    sqrt(trace((B0 - Bhat)'(B0 - Bhat)) / (P K)) on the canonicalized
    matrices; sign of each estimated column flips when that improves the
    match to its paired true column.
    """
    true_b = np.asarray(true_b, dtype=float)
    est_b = np.asarray(est_b, dtype=float)
    if true_b.shape != est_b.shape:
        raise ValueError("loading matrices must share dimensions")
    lt = left_order(true_b, threshold)
    le = left_order(est_b, threshold)
    dots = np.einsum("pk,pk->k", lt, le)
    le = le * np.where(dots < 0, -1.0, 1.0)[None, :]
    diff = lt - le
    return float(np.sqrt(np.sum(diff * diff) / diff.size))


def count_active_factors(b: np.ndarray, threshold: float = 0.1) -> int:
    """Number of columns with at least two entries above threshold in
    absolute value (a lone loading is not a factor)."""
    b = np.asarray(b, dtype=float)
    return int(np.sum(np.sum(np.abs(b) > threshold, axis=0) >= 2))


def avg_active_per_series(b: np.ndarray, threshold: float = 0.1) -> float:
    """Mean over series of the count of loadings exceeding threshold."""
    b = np.asarray(b, dtype=float)
    return float(np.mean(np.sum(np.abs(b) > threshold, axis=1)))

"""Idiosyncratic variance estimation by Forward Filtering Backward Smoothing.

Under the discount specification the precision 1/sigma^2_{jt} admits a Gamma
filter with degrees of freedom shared across series:

    eta_t = delta eta_{t-1} + 1
    d_{jt} = delta d_{j,t-1} + s_{j,t-1} e_{jt}^2 / q_{jt},   s_{jt} = d_{jt} / eta_t

where e_{jt} is the one-step forecast error and q_{jt} the j-th diagonal
element of B_t V_{t|t-1} B_t' + diag(s_{j,t-1}) (the matrix display read
elementwise: all SV matrices are diagonal).  The observational part of q uses
the filter's own running point estimate s_{j,t-1}, which keeps the squared
standardized error e^2/q centered at one and the recursion a convergent
variance tracker from any starting scale; a fixed external plug-in there
compounds any scale mismatch exponentially over T.  Backward smoothing mixes
filtered and smoothed quantities with weights (1-delta, delta) -- in levels
for eta, in inverses for s -- and the variance path is the posterior mode
sigma^2_{j,T-k} = d_T(-k) / (eta_T(-k) - 1).

Series are fully independent; every recursion is vectorized across j.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import InterceptSpec, LoadingsPath, ModelConfig, Panel, VolatilityPath
from .smoother import FilterState, effective_observations

__all__ = ["FfbsState", "ffbs_forward", "ffbs_backward", "extract_modes"]


@dataclass
class FfbsState:
    """Filtered and smoothed Gamma-approximation bookkeeping.

    Time axis 1 of ``d``/``s`` (and axis 0 of ``eta``) has length T+1 with
    index 0 holding the initial conditions; the smoothed arrays have length T
    with index t-1 holding the time-t quantity (eta_T(-k), s_T(-k) for
    k = T - t).
    """

    eta: np.ndarray                      # (T+1,)
    d: np.ndarray                        # (P, T+1)
    s: np.ndarray                        # (P, T+1)
    eta_smooth: Optional[np.ndarray] = None  # (T,)
    s_smooth: Optional[np.ndarray] = None    # (P, T)


def ffbs_forward(panel: Panel, loadings: LoadingsPath, filt: FilterState,
                 cfg: ModelConfig, intercept: Optional[InterceptSpec] = None,
                 eta0: Optional[float] = None,
                 floor: Optional[np.ndarray] = None) -> FfbsState:
    """Forward Gamma filtering of the per-series precisions.

    Uses the current filter pass for the predictive means/covariances.
    ``eta0`` defaults to cfg.n0; d_{j0} = cfg.d0.  When ``floor`` (a
    per-series lower bound) is given, the point estimates are clamped from
    below inside the recursion: because the loadings entering the forecast
    error were themselves fitted on the data, the raw recursion sits at an
    absorbing degenerate mode (variances drifting to zero as time-varying
    loadings soak up noise), and the floor pins the filter out of it.
    """
    y, b = effective_observations(panel, loadings, intercept)  # (T, P), (T, P, K)
    t_len, p = y.shape
    delta = cfg.delta
    if eta0 is None:
        eta0 = cfg.n0

    err2 = (y - np.einsum("tpk,tk->tp", b, filt.pred_means[1:])) ** 2  # (T, P)
    sig = np.einsum("tpk,tkl,tpl->tp", b, filt.pred_covs[1:], b)       # (T, P)

    eta = np.zeros(t_len + 1)
    d = np.zeros((p, t_len + 1))
    s = np.zeros((p, t_len + 1))
    eta[0] = eta0
    d[:, 0] = cfg.d0
    if floor is not None:
        d[:, 0] = np.maximum(d[:, 0], eta0 * floor)
    s[:, 0] = d[:, 0] / eta[0]
    for t in range(1, t_len + 1):
        q = sig[t - 1] + s[:, t - 1]
        if np.any(q <= 0):
            raise ValueError("non-positive predictive variance q_jt in FFBS forward step")
        eta[t] = delta * eta[t - 1] + 1.0
        d[:, t] = delta * d[:, t - 1] + s[:, t - 1] * err2[t - 1] / q
        s[:, t] = d[:, t] / eta[t]
        if floor is not None:
            s[:, t] = np.maximum(s[:, t], floor)
            d[:, t] = s[:, t] * eta[t]
    return FfbsState(eta=eta, d=d, s=s)


def ffbs_backward(fs: FfbsState, cfg: ModelConfig) -> FfbsState:
    """Backward smoothing recursions, initialized at s_T(0) = s_T.

    eta_T(-k)   = (1-delta) eta_{T-k} + delta eta_T(-k+1)
    s_T(-k)^-1  = (1-delta) s_{T-k}^-1 + delta s_T(-k+1)^-1
    """
    delta = cfg.delta
    t_len = fs.eta.shape[0] - 1
    p = fs.d.shape[0]
    eta_smooth = np.zeros(t_len)
    s_smooth = np.zeros((p, t_len))
    eta_smooth[t_len - 1] = fs.eta[t_len]
    s_smooth[:, t_len - 1] = fs.s[:, t_len]
    for k in range(1, t_len):
        t = t_len - k
        eta_smooth[t - 1] = (1.0 - delta) * fs.eta[t] + delta * eta_smooth[t]
        inv = (1.0 - delta) / fs.s[:, t] + delta / s_smooth[:, t]
        s_smooth[:, t - 1] = 1.0 / inv
    return FfbsState(eta=fs.eta, d=fs.d, s=fs.s,
                     eta_smooth=eta_smooth, s_smooth=s_smooth)


def extract_modes(fs: FfbsState) -> VolatilityPath:
    """Posterior-mode variance paths from the smoothed Gamma parameters.

    sigma^2_{j,T-k} = d_T(-k) / (eta_T(-k) - 1) with d_T(-k) = eta_T(-k) s_T(-k).

    Raises
    ------
    ValueError
        If any smoothed degrees of freedom are <= 1 (mode undefined).
    """
    if fs.eta_smooth is None or fs.s_smooth is None:
        raise ValueError("backward pass must run before mode extraction")
    if np.any(fs.eta_smooth <= 1.0):
        raise ValueError("smoothed degrees of freedom <= 1; posterior mode undefined")
    d_smooth = fs.eta_smooth[None, :] * fs.s_smooth
    sigma2 = d_smooth / (fs.eta_smooth[None, :] - 1.0)
    return VolatilityPath(sigma2=sigma2, eta_filter=fs.eta[1:].copy(),
                          d_filter=fs.d[:, 1:].copy(), s_filter=fs.s[:, 1:].copy())

"""Kalman filter, fixed-interval smoother, and lag-one covariance smoother.

The latent factors follow omega_t = phi_tilde * omega_{t-1} + e_t with
e_t ~ N(0, sigma2_omega I) and stationary initial condition
V_{0|0} = sigma2_omega / (1 - phi_tilde^2) I.  The correction step solves the
P x P innovation covariance by Cholesky; covariances are re-symmetrized every
step to control drift over long horizons.

When a dynamic intercept is attached, the deterministic unit component is
handled exactly by subtracting the intercept path from the observations, so
the stochastic state stays K-dimensional and all covariances remain positive
definite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import InterceptSpec, LoadingsPath, ModelConfig, Panel, SmoothedMoments, VolatilityPath

__all__ = ["FilterState", "kalman_filter", "kalman_smoother"]


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


@dataclass
class FilterState:
    """Forward-pass quantities, indexed by t on axis 0.

    Index 0 of the predicted sequences holds the initial condition (there is
    no prediction for t = 0); gains[0] is zero.
    """

    pred_means: np.ndarray  # (T+1, K) omega_{t|t-1}
    pred_covs: np.ndarray   # (T+1, K, K) V_{t|t-1}
    filt_means: np.ndarray  # (T+1, K) omega_{t|t}
    filt_covs: np.ndarray   # (T+1, K, K) V_{t|t}
    gains: np.ndarray       # (T+1, K, P) Kalman gain K_t

    @property
    def n_times(self) -> int:
        return self.filt_means.shape[0] - 1


def factor_columns(k_eff: int, intercept: Optional[InterceptSpec]):
    if intercept is None:
        return np.arange(k_eff)
    return np.array([k for k in range(k_eff) if k != intercept.column])


def effective_observations(panel: Panel, loadings: LoadingsPath,
                           intercept: Optional[InterceptSpec]):
    """(T, P) observations with any intercept path subtracted, plus the
    (T, P, K) factor-block loadings."""
    y = panel.values.T.copy()  # (T, P)
    cols = factor_columns(loadings.n_factors, intercept)
    b = loadings.betas[1:][:, :, cols]
    if intercept is not None:
        y -= loadings.betas[1:, :, intercept.column]
    return y, b


def kalman_filter(panel: Panel, loadings: LoadingsPath, vol: VolatilityPath,
                  cfg: ModelConfig, intercept: Optional[InterceptSpec] = None) -> FilterState:
    """Forward pass given the current loadings and idiosyncratic variances.

    Raises
    ------
    ValueError
        If an innovation covariance B_t V_{t|t-1} B_t' + Sigma_t fails its
        positive-definite factorization (degenerate inputs).
    """
    y, b_all = effective_observations(panel, loadings, intercept)
    t_len, p = y.shape
    k = b_all.shape[2]
    if vol.sigma2.shape != (p, t_len):
        raise ValueError("volatility dimensions do not match panel")
    if np.any(vol.sigma2 <= 0):
        raise ValueError("all idiosyncratic variances must be positive")

    phi = cfg.phi_tilde
    q = cfg.sigma2_omega
    eye = np.eye(k)

    pred_means = np.zeros((t_len + 1, k))
    pred_covs = np.zeros((t_len + 1, k, k))
    filt_means = np.zeros((t_len + 1, k))
    filt_covs = np.zeros((t_len + 1, k, k))
    gains = np.zeros((t_len + 1, k, p))

    filt_covs[0] = q / (1.0 - phi**2) * eye
    pred_covs[0] = filt_covs[0]

    for t in range(1, t_len + 1):
        m = phi * filt_means[t - 1]
        vp = _sym(phi**2 * filt_covs[t - 1] + q * eye)
        bt = b_all[t - 1]
        s = bt @ vp @ bt.T
        s[np.diag_indices_from(s)] += vol.sigma2[:, t - 1]
        try:
            cho = cho_factor(s, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise ValueError(
                f"innovation covariance not positive definite at t={t}") from exc
        gain = cho_solve(cho, bt @ vp, check_finite=False).T  # (K, P)
        innov = y[t - 1] - bt @ m
        filt_means[t] = m + gain @ innov
        filt_covs[t] = _sym(vp - gain @ (bt @ vp))
        pred_means[t] = m
        pred_covs[t] = vp
        gains[t] = gain

    return FilterState(pred_means, pred_covs, filt_means, filt_covs, gains)


def kalman_smoother(fs: FilterState, cfg: ModelConfig) -> SmoothedMoments:
    """Backward pass: smoothed means/covariances and lag-one covariances.

    The smoother gain is Z_{t-1} = phi_tilde V_{t-1|t-1} V_{t|t-1}^{-1}; the
    lag-one sequence starts from V_{T,T-1|T} = (I - K_T B_T) phi_tilde
    V_{T-1|T-1} and follows the standard fixed-interval recursion.
    """
    t_len = fs.n_times
    k = fs.filt_means.shape[1]
    phi = cfg.phi_tilde

    means = np.zeros_like(fs.filt_means)
    covs = np.zeros_like(fs.filt_covs)
    lag_covs = np.zeros((t_len, k, k))
    means[t_len] = fs.filt_means[t_len]
    covs[t_len] = fs.filt_covs[t_len]

    z = np.zeros((t_len, k, k))  # z[t-1] = Z_{t-1}
    for t in range(t_len, 0, -1):
        try:
            cho = cho_factor(fs.pred_covs[t], lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"singular predicted covariance at t={t}") from exc
        z[t - 1] = phi * cho_solve(cho, fs.filt_covs[t - 1], check_finite=False).T
        means[t - 1] = fs.filt_means[t - 1] + z[t - 1] @ (means[t] - fs.pred_means[t])
        covs[t - 1] = _sym(fs.filt_covs[t - 1]
                           + z[t - 1] @ (covs[t] - fs.pred_covs[t]) @ z[t - 1].T)

    if t_len >= 1:
        # (I - K_T B_T) phi V_{T-1|T-1} = V_{T|T} V_{T|T-1}^{-1} phi V_{T-1|T-1}
        # = V_{T|T} Z_{T-1}', so the initializer needs no loadings.
        lag_covs[t_len - 1] = fs.filt_covs[t_len] @ z[t_len - 1].T
    for t in range(t_len, 1, -1):
        lag_covs[t - 2] = (fs.filt_covs[t - 1] @ z[t - 2].T
                           + z[t - 1] @ (lag_covs[t - 1] - phi * fs.filt_covs[t - 1]) @ z[t - 2].T)

    return SmoothedMoments(means=means, covs=covs, lag_covs=lag_covs)

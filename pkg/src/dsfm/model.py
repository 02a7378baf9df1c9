"""Core domain types, hyperparameter validation, and the surrogate objective.

The model couples a linear-Gaussian state space for the latent factors with
dynamic spike-and-slab shrinkage on the time-varying loadings and a discount
stochastic-volatility law on the idiosyncratic variances:

    Y_t     = B_t omega_t + eps_t,      eps_t ~ N(0, Sigma_t) diagonal
    omega_t = phi_tilde * omega_{t-1} + e_t,  e_t ~ N(0, sigma2_omega * I)

All containers here are plain value objects; treat them as read-only after
construction.  The surrogate objective evaluated by :func:`eval_surrogate`
is the loadings-relevant portion of the expected complete-data log posterior
(negated loss, so larger is better), used for convergence monitoring.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "ModelConfig",
    "Panel",
    "LoadingsPath",
    "SmoothedMoments",
    "VolatilityPath",
    "FitResult",
    "InterceptSpec",
    "validate_config",
    "eval_surrogate",
]

# Intercept columns approximate a random walk; phi1 = 1 exactly would make the
# stationary-slab formulas blow up, so the boundary is nudged inward.
INTERCEPT_PHI = 1.0 - 1e-9


@dataclass
class ModelConfig:
    """All hyperparameters and run controls for one estimation.

    Defaults follow the simulation-study settings: phi0 = 0, phi1 = 0.98,
    lambda0 = 0.9, lambda1 = 10 * (1 - phi1^2) = 0.396, theta = 0.9,
    phi_tilde = 0.95, sigma2_omega = 1 - phi_tilde^2 = 0.0975, delta = 0.95,
    n0 = 20, d0 = 0.002.
    """

    k_max: int
    theta: float = 0.9
    lambda0: float = 0.9
    lambda1: float = 0.396
    phi0: float = 0.0
    phi1: float = 0.98
    phi_tilde: float = 0.95
    sigma2_omega: float = 0.0975
    delta: float = 0.95
    n0: float = 20.0
    d0: float = 0.002
    max_iter: int = 500
    tol: float = 1e-6
    seed: int = 0
    intercept: bool = False

    def to_kv(self) -> dict:
        """Flat snake_case key/value mapping with the exact field names."""
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_kv(cls, kv: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(kv) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        args = {}
        for f in fields(cls):
            if f.name not in kv:
                if f.name == "k_max":
                    raise ValueError("config missing required key 'k_max'")
                continue
            raw = kv[f.name]
            if f.type in ("int", int):
                args[f.name] = int(raw)
            elif f.type in ("bool", bool):
                if isinstance(raw, str):
                    args[f.name] = raw.strip().lower() in ("true", "1", "yes")
                else:
                    args[f.name] = bool(raw)
            else:
                args[f.name] = float(raw)
        return cls(**args)


def validate_config(cfg: ModelConfig) -> ModelConfig:
    """Return ``cfg`` unchanged iff every invariant holds.

    Raises
    ------
    ValueError
        Naming the first violated constraint, in field-declaration order.
    """
    if not (isinstance(cfg.k_max, (int, np.integer)) and cfg.k_max >= 1):
        raise ValueError("k_max not a positive integer")
    if not (0.0 < cfg.theta < 1.0):
        raise ValueError("theta not in (0, 1)")
    if not cfg.lambda0 > 0.0:
        raise ValueError("lambda0 not > 0")
    if not cfg.lambda1 > 0.0:
        raise ValueError("lambda1 not > 0")
    if not np.isfinite(cfg.phi0):
        raise ValueError("phi0 not finite")
    if not abs(cfg.phi1) < 1.0:
        raise ValueError("phi1 not in (-1, 1)")
    if not (0.0 < cfg.phi_tilde < 1.0):
        raise ValueError("phi_tilde not in (0, 1)")
    if not cfg.sigma2_omega > 0.0:
        raise ValueError("sigma2_omega not > 0")
    if not (0.0 < cfg.delta <= 1.0):
        raise ValueError("delta not in (0, 1]")
    if not cfg.n0 > 0.0:
        raise ValueError("n0 not > 0")
    if not cfg.d0 > 0.0:
        raise ValueError("d0 not > 0")
    if not (isinstance(cfg.max_iter, (int, np.integer)) and cfg.max_iter >= 1):
        raise ValueError("max_iter not a positive integer")
    if not cfg.tol > 0.0:
        raise ValueError("tol not > 0")
    if not (isinstance(cfg.seed, (int, np.integer)) and cfg.seed >= 0):
        raise ValueError("seed not a nonnegative integer")
    v_st = cfg.lambda1 / (1.0 - cfg.phi1**2)
    if not (np.isfinite(v_st) and v_st > 0.0):
        raise ValueError("stationary slab variance lambda1/(1-phi1^2) not finite positive")
    return cfg


@dataclass
class Panel:
    """A balanced P x T panel of observed series.

    ``values[j, i]`` is series ``j`` at the i-th time point (t = i + 1).
    ``standardization`` records per-series (mean, scale) of the applied
    transform, or ``None`` when the data are raw.
    """

    values: np.ndarray
    series_names: Sequence[str]
    time_index: Sequence[str]
    group_labels: Optional[Sequence[str]] = None
    standardization: Optional[np.ndarray] = None  # (P, 2) columns mean, scale

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("panel values must be a 2-d array")
        p, t = self.values.shape
        if p < 2 or t < 2:
            raise ValueError(f"panel needs P >= 2 and T >= 2, got P={p}, T={t}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("panel contains missing or non-finite entries")
        if len(self.series_names) != p:
            raise ValueError("series_names length does not match P")
        if len(self.time_index) != t:
            raise ValueError("time_index length does not match T")
        if self.group_labels is not None and len(self.group_labels) != p:
            raise ValueError("group_labels length does not match P")

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]


@dataclass
class LoadingsPath:
    """Loadings tensor B_0..B_T with paired indicator expectations.

    ``betas`` has shape (T+1, P, K); index 0 holds the initial condition B_0.
    ``gammas`` carries the E-step slab-membership expectations in [0, 1] on
    the same grid.
    """

    betas: np.ndarray
    gammas: np.ndarray

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=float)
        self.gammas = np.asarray(self.gammas, dtype=float)
        if self.betas.ndim != 3:
            raise ValueError("betas must have shape (T+1, P, K)")
        if self.betas.shape != self.gammas.shape:
            raise ValueError("betas and gammas shapes differ")
        if self.gammas.size and (self.gammas.min() < -1e-12 or self.gammas.max() > 1 + 1e-12):
            raise ValueError("gamma entries must lie in [0, 1]")

    @property
    def n_times(self) -> int:
        return self.betas.shape[0] - 1

    @property
    def n_series(self) -> int:
        return self.betas.shape[1]

    @property
    def n_factors(self) -> int:
        return self.betas.shape[2]

    def copy(self) -> "LoadingsPath":
        return LoadingsPath(self.betas.copy(), self.gammas.copy())


@dataclass
class SmoothedMoments:
    """Fixed-interval smoother output for the latent factors.

    ``means[t]`` is omega_{t|T}, ``covs[t]`` is V_{t|T} for t = 0..T, and
    ``lag_covs[t-1]`` is the lag-one covariance V_{t,t-1|T} for t = 1..T.
    """

    means: np.ndarray     # (T+1, K)
    covs: np.ndarray      # (T+1, K, K)
    lag_covs: np.ndarray  # (T, K, K)

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.covs = np.asarray(self.covs, dtype=float)
        self.lag_covs = np.asarray(self.lag_covs, dtype=float)
        if self.covs.shape[0] != self.means.shape[0]:
            raise ValueError("means/covs time-length mismatch")
        if self.lag_covs.shape[0] != self.means.shape[0] - 1:
            raise ValueError("lag_covs must have length T")

    @property
    def n_factors(self) -> int:
        return self.means.shape[1]


@dataclass
class VolatilityPath:
    """Idiosyncratic variance paths sigma^2_{jt} with the FFBS filter state."""

    sigma2: np.ndarray       # (P, T), strictly positive
    eta_filter: np.ndarray   # (T,) filtered degrees of freedom, shared across series
    d_filter: np.ndarray     # (P, T) filtered scale
    s_filter: np.ndarray     # (P, T) filtered point estimates

    def __post_init__(self):
        self.sigma2 = np.asarray(self.sigma2, dtype=float)
        if self.sigma2.size and self.sigma2.min() <= 0.0:
            raise ValueError("sigma2 entries must be strictly positive")


@dataclass
class FitResult:
    """Everything produced by one EM run."""

    loadings: LoadingsPath
    volatility: VolatilityPath
    moments: SmoothedMoments
    objective_trace: list
    iterations_run: int
    converged: bool
    intercept_col: Optional[int] = None

    def __post_init__(self):
        if len(self.objective_trace) != self.iterations_run:
            raise ValueError("objective_trace length must equal iterations_run")

    def factor_betas(self) -> np.ndarray:
        """Loadings tensor restricted to the factor columns (intercept dropped)."""
        if self.intercept_col is None:
            return self.loadings.betas
        keep = [k for k in range(self.loadings.n_factors) if k != self.intercept_col]
        return self.loadings.betas[:, :, keep]


@dataclass
class InterceptSpec:
    """Dynamic-intercept augmentation: a deterministic unit factor component.

    The intercept loading column follows a slab-only random walk (gamma fixed
    at 1; phi1 at the nudged boundary) with a standard-normal initial
    condition, and is exempt from spike terms and from active-factor counting.
    """

    column: int
    phi: float = INTERCEPT_PHI
    init_var: float = 1.0


def column_slab_params(phi1: float, lambda1: float, k_eff: int,
                       intercept: Optional[InterceptSpec] = None):
    """Per-column slab AR coefficient and t = 0 precision ratio q0 = lambda1 / var0.

    Regular columns use phi1 with the stationary initial variance
    lambda1 / (1 - phi1^2) (so q0 = 1 - phi1^2); an intercept column uses the
    random-walk boundary phi with initial variance ``init_var``.
    """
    phi_col = np.full(k_eff, phi1)
    q0_col = np.full(k_eff, 1.0 - phi1**2)
    if intercept is not None:
        phi_col[intercept.column] = intercept.phi
        q0_col[intercept.column] = lambda1 / intercept.init_var
    return phi_col, q0_col


def _dss_penalty(betas, gammas, cfg: ModelConfig,
                 intercept: Optional[InterceptSpec] = None) -> float:
    """Shrinkage-process penalty summed over (j, k, t); smaller is better.

    t = 0 terms weigh B_0 against the stationary slab (variance
    lambda1/(1-phi1^2)) and the spike; t >= 1 terms weigh the slab AR
    increment against the spike, at the current indicator expectations.
    """
    lam0, lam1, phi0 = cfg.lambda0, cfg.lambda1, cfg.phi0
    k_eff = betas.shape[2]
    phi_col, q0_col = column_slab_params(cfg.phi1, lam1, k_eff, intercept)
    b0 = betas[0]
    g0 = gammas[0]
    center0 = np.full(k_eff, phi0)
    if intercept is not None:
        center0[intercept.column] = 0.0
    pen = np.sum(g0 * (b0 - center0) ** 2 * q0_col / (2.0 * lam1)
                 + (1.0 - g0) * lam0 * np.abs(b0))
    # slab AR mean mu(b_prev) = phi0 + phi1 (b_prev - phi0), per column
    shift = center0 * (1.0 - phi_col)
    mu_prev = phi_col * betas[:-1] + shift
    bt = betas[1:]
    gt = gammas[1:]
    pen += np.sum(gt * (bt - mu_prev) ** 2 / (2.0 * lam1)
                  + (1.0 - gt) * lam0 * np.abs(bt))
    return float(pen)


def eval_surrogate(panel: Panel, loadings: LoadingsPath, vol: VolatilityPath,
                   moments: SmoothedMoments, cfg: ModelConfig,
                   intercept: Optional[InterceptSpec] = None) -> float:
    """Negated loadings-relevant surrogate objective; larger is better.

    The value is minus the Gaussian fit loss with the trace correction
    B_t V_{t|T} B_t' (plus the 0.5 * sum log sigma^2 normalizer), minus the
    shrinkage-process penalty at the current indicator expectations.
    Deterministic for fixed inputs.
    """
    y = panel.values
    p, t_len = y.shape
    betas = loadings.betas
    if betas.shape[0] != t_len + 1 or betas.shape[1] != p:
        raise ValueError("loadings dimensions do not match panel")
    if vol.sigma2.shape != (p, t_len):
        raise ValueError("volatility dimensions do not match panel")
    k_eff = betas.shape[2]
    if intercept is None:
        fac_cols = np.arange(k_eff)
        c_path = None
    else:
        fac_cols = np.array([k for k in range(k_eff) if k != intercept.column])
        c_path = betas[1:, :, intercept.column]  # (T, P)
    if moments.means.shape != (t_len + 1, len(fac_cols)):
        raise ValueError("moments dimensions do not match loadings/panel")

    bf = betas[1:][:, :, fac_cols]                      # (T, P, K)
    resid = y.T - np.einsum("tpk,tk->tp", bf, moments.means[1:])
    if c_path is not None:
        resid = resid - c_path
    quad = np.einsum("tpk,tkl,tpl->tp", bf, moments.covs[1:], bf)
    s2 = vol.sigma2.T                                   # (T, P)
    loss = 0.5 * float(np.sum(np.log(s2))) + 0.5 * float(np.sum((resid**2 + quad) / s2))
    loss += _dss_penalty(betas, loadings.gammas, cfg, intercept)
    return -loss

"""The parameter-expanded EM loop: E-steps, M-steps, rotation, convergence.

One iteration runs, in order:

  E1  Kalman filter + smoother at the reduced anchoring (identity-scaled
      factor innovations) given the previous iterate's loadings/variances.
  E2  Indicator expectations <gamma> and frozen mixing weights theta from the
      previous iterate's loadings (one-step-late).
  M1  Full coordinate sweep of the loadings in the expanded space.
  M2  Expansion covariances A_t from the smoothed moments.
  M3  FFBS update of the idiosyncratic variance paths.
  R   Rotation B_t = B*_t A_tL back toward the reduced space.

The run is fully deterministic given its inputs.  Convergence is declared
when the relative change of the surrogate objective falls below cfg.tol;
hitting max_iter is reported via ``converged=False``, never as an error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .loadings import sweep_loadings
from .model import (FitResult, InterceptSpec, LoadingsPath, ModelConfig, Panel,
                    SmoothedMoments, VolatilityPath, eval_surrogate, validate_config)
from .prior import (DssParams, indicator_expectation, initial_indicator_expectation,
                    mixing_weight)
from .rotation import update_rotation
from .smoother import kalman_filter, kalman_smoother
from .volatility import extract_modes, ffbs_backward, ffbs_forward

__all__ = ["InitStrategy", "init_loadings", "attach_intercept", "fit"]


@dataclass
class InitStrategy:
    """How to initialize the loadings path.

    kind = "svd_threshold": rolling-window truncated SVD with entries below
    ``threshold`` zeroed, each window's estimate assigned to all its times.
    kind = "warm_start_path": load a previously exported loadings file from
    ``path``.  kind = "zeros": all-zero tensor.
    """

    kind: str = "zeros"
    window: int = 100
    threshold: float = 0.0
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("svd_threshold", "warm_start_path", "zeros"):
            raise ValueError(f"unknown init strategy {self.kind!r}")
        if self.kind == "svd_threshold" and self.window < 1:
            raise ValueError("window must be a positive integer")
        if self.threshold < 0:
            raise ValueError("threshold must be nonnegative")


def attach_intercept(panel: Panel, cfg: ModelConfig) -> Optional[InterceptSpec]:
    """Dynamic-intercept augmentation descriptor, or None when disabled.

    The intercept rides as one extra loading column on a deterministic unit
    factor component (transition identity, innovation zero): slab-only
    random walk with a standard-normal initial condition.  It is exempt from
    active-factor counting downstream.
    """
    if not cfg.intercept:
        return None
    return InterceptSpec(column=cfg.k_max)


def _svd_window_loadings(x: np.ndarray, k: int, threshold: float) -> np.ndarray:
    """Rank-k SVD loadings of one data window, thresholded, sign-fixed."""
    p, w = x.shape
    u, sv, _ = np.linalg.svd(x, full_matrices=False)
    r = min(k, sv.shape[0])
    b = np.zeros((p, k))
    b[:, :r] = u[:, :r] * (sv[:r] / np.sqrt(w))
    for c in range(r):
        lead = np.argmax(np.abs(b[:, c]))
        if b[lead, c] < 0:
            b[:, c] = -b[:, c]
    if threshold > 0:
        b[np.abs(b) < threshold] = 0.0
    return b


def _align_columns(b: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Permute and sign-flip columns of ``b`` to best match ``ref``.

    Column order and sign are arbitrary within each window's SVD; aligning
    consecutive windows keeps each column's identity continuous in time so
    the slab chains of the shrinkage prior connect across window boundaries.
    Greedy assignment on absolute inner products.
    """
    k = b.shape[1]
    score = np.abs(ref.T @ b)  # (k_ref, k_new)
    out = np.zeros_like(b)
    used_new: set = set()
    order = np.dstack(np.unravel_index(np.argsort(score, axis=None)[::-1],
                                       score.shape))[0]
    assigned: dict = {}
    for i, j in order:
        if i in assigned or j in used_new:
            continue
        assigned[i] = j
        used_new.add(j)
        if len(assigned) == k:
            break
    for i, j in assigned.items():
        sign = 1.0 if ref[:, i] @ b[:, j] >= 0 else -1.0
        out[:, i] = sign * b[:, j]
    return out


def init_loadings(panel: Panel, cfg: ModelConfig, init: InitStrategy) -> LoadingsPath:
    """Initial loadings tensor (without any intercept column)."""
    t_len = panel.n_times
    p = panel.n_series
    k = cfg.k_max
    if init.kind == "zeros":
        return LoadingsPath(betas=np.zeros((t_len + 1, p, k)),
                            gammas=np.zeros((t_len + 1, p, k)))
    if init.kind == "warm_start_path":
        from .io import read_loadings
        if not init.path:
            raise ValueError("warm_start_path strategy requires a file path")
        lp = read_loadings(init.path)
        if lp.betas.shape != (t_len + 1, p, k):
            raise ValueError("warm-start loadings dimensions do not match")
        return lp
    if init.window > t_len:
        raise ValueError("window must not exceed the panel length")
    betas = np.zeros((t_len + 1, p, k))
    prev = None
    for start in range(0, t_len, init.window):
        stop = min(start + init.window, t_len)
        b = _svd_window_loadings(panel.values[:, start:stop], k, init.threshold)
        if prev is not None:
            b = _align_columns(b, prev)
        betas[start + 1:stop + 1] = b
        prev = b
    # Candidate columns that never show factor-like evidence -- at least two
    # entries clearing twice the entry threshold in some window -- are noise
    # directions of the SVD; zero them everywhere so the overshoot columns
    # start inactive (a lone strong loading is not a factor).
    if init.threshold > 0:
        evidence = (np.abs(betas[1:]) >= 2.0 * init.threshold).sum(axis=1)
        keep = (evidence >= 2).any(axis=0)
        betas[:, :, ~keep] = 0.0
    betas[0] = betas[1]
    return LoadingsPath(betas=betas, gammas=np.full((t_len + 1, p, k), 0.5))


def _with_intercept_column(lp: LoadingsPath, panel: Panel,
                           ispec: InterceptSpec) -> LoadingsPath:
    """Append the intercept column, initialized at the per-series sample mean."""
    t_tot, p, k = lp.betas.shape
    betas = np.zeros((t_tot, p, k + 1))
    gammas = np.zeros((t_tot, p, k + 1))
    cols = [c for c in range(k + 1) if c != ispec.column]
    betas[:, :, cols] = lp.betas
    gammas[:, :, cols] = lp.gammas
    betas[:, :, ispec.column] = panel.values.mean(axis=1)[None, :]
    gammas[:, :, ispec.column] = 1.0
    return LoadingsPath(betas=betas, gammas=gammas)


def _indicator_pass(betas: np.ndarray, p: DssParams,
                    ispec: Optional[InterceptSpec]):
    """E2: indicator expectations and frozen mixing weights from the loadings."""
    gam = np.empty_like(betas)
    th = np.empty_like(betas)
    gam[0] = initial_indicator_expectation(betas[0], p)
    th[0] = p.theta
    th[1:] = mixing_weight(betas[:-1], p)
    gam[1:] = indicator_expectation(betas[1:], betas[:-1], p)
    if ispec is not None:
        gam[:, :, ispec.column] = 1.0
        th[:, :, ispec.column] = 1.0
    return gam, th


def _initial_volatility(panel: Panel, cfg: ModelConfig) -> VolatilityPath:
    """Start Sigma at the per-series sample variance, constant over time."""
    t_len = panel.n_times
    var = panel.values.var(axis=1, ddof=1)
    var = np.maximum(var, 1e-12)
    sigma2 = np.repeat(var[:, None], t_len, axis=1)
    eta = np.full(t_len, cfg.n0)
    return VolatilityPath(sigma2=sigma2, eta_filter=eta,
                          d_filter=sigma2 * cfg.n0, s_filter=sigma2.copy())


def _effective_eta0(cfg: ModelConfig) -> float:
    """Keep the degrees of freedom at their fixed point (1 - delta)^-1 when the
    discount deviates from the default pairing; delta = 1 has no finite limit."""
    if cfg.delta == 0.95 or cfg.delta >= 1.0:
        return cfg.n0
    return 1.0 / (1.0 - cfg.delta)


def _variance_floor(panel: Panel, frac: float, window: int = 50) -> Optional[np.ndarray]:
    """Per-series idiosyncratic variance floor: ``frac`` of the rolling-window
    median sample variance (local, so early high-variance regimes do not
    inflate the floor for calmer stretches)."""
    if frac <= 0:
        return None
    t_len = panel.n_times
    window = min(window, t_len)
    pieces = [panel.values[:, s:min(s + window, t_len)].var(axis=1, ddof=1)
              for s in range(0, t_len, window)]
    return frac * np.median(np.stack(pieces), axis=0)


def _steering_rotation(moments: SmoothedMoments, cfg: ModelConfig) -> np.ndarray:
    """One shared lower-triangular steering factor from the expansion moments.

    The per-time expansion covariances are second moments of single factor
    increments, so individually they are noise (near rank-one under strong
    signal); their time average estimates the increment covariance stably.
    Normalizing that average to a correlation matrix makes the rotation
    scale-free with the identity as its consistency fixed point: the Cholesky
    factor then only mixes columns toward the orientation in which factor
    increments are uncorrelated, which is what steers iterates to sparsity.
    """
    rot = update_rotation(moments, cfg, phi_aware=True)
    a_bar = rot.a_mats[1:].mean(axis=0)
    scale = np.sqrt(np.diag(a_bar))
    corr = a_bar / np.outer(scale, scale)
    k = corr.shape[0]
    corr = 0.5 * (corr + corr.T) + 1e-8 * np.eye(k)
    return np.linalg.cholesky(corr)


def fit(panel: Panel, cfg: ModelConfig, init: Optional[InitStrategy] = None,
        variance_floor_frac: float = 0.1) -> FitResult:
    """Run the full EM loop until convergence or cfg.max_iter.

    The returned loadings carry the final rotated betas together with the
    indicator expectations of the last E-step; the objective trace holds one
    surrogate value per iteration, evaluated at the end-of-iteration state.
    The variance path is warmed up with one filtering pass before the loop,
    and the first two sweeps after initialization are treated as burn-in
    (their transient reflects the initializer, not the algorithm) and not
    recorded.  The rotation step is guarded: a rotation that would lower the
    monitored surrogate is skipped for that iteration.

    ``variance_floor_frac`` bounds each series' idiosyncratic variance from
    below at that fraction of its local sample variance (0 disables); see
    ffbs_forward for why the unfloored recursion degenerates.
    """
    cfg = validate_config(cfg)
    if init is None:
        # All-zero loadings are an absorbing state of the EM (empty factors
        # carry no signal to activate against), so default to the rolling SVD.
        init = InitStrategy(kind="svd_threshold",
                            window=min(100, panel.n_times), threshold=0.4)
    params = DssParams.from_config(cfg)
    ispec = attach_intercept(panel, cfg)

    loadings = init_loadings(panel, cfg, init)
    if ispec is not None:
        loadings = _with_intercept_column(loadings, panel, ispec)
    vol = _initial_volatility(panel, cfg)
    eta0 = _effective_eta0(cfg)
    floor = _variance_floor(panel, variance_floor_frac)

    # Warm up the variance paths so the first recorded iteration starts from
    # a self-consistent Sigma rather than the crude sample-variance guess.
    fs0 = kalman_filter(panel, loadings, vol, cfg, ispec)
    vol = extract_modes(ffbs_backward(
        ffbs_forward(panel, loadings, fs0, cfg, ispec, eta0=eta0, floor=floor), cfg))

    burn_in = 2
    trace: list[float] = []
    gam = loadings.gammas
    moments = None
    converged = False
    for sweep_index in range(cfg.max_iter + burn_in):
        fs = kalman_filter(panel, loadings, vol, cfg, ispec)
        moments = kalman_smoother(fs, cfg)
        gam, th = _indicator_pass(loadings.betas, params, ispec)
        current = LoadingsPath(loadings.betas, gam)
        star = sweep_loadings(current, moments, panel, vol, params, th, ispec)
        chol = _steering_rotation(moments, cfg)
        ffbs = ffbs_backward(
            ffbs_forward(panel, loadings, fs, cfg, ispec, eta0=eta0, floor=floor), cfg)
        vol_new = extract_modes(ffbs)
        betas = star.betas.copy()
        if ispec is None:
            betas = np.einsum("tpk,kl->tpl", betas, chol)
        else:
            cols = [c for c in range(betas.shape[2]) if c != ispec.column]
            betas[:, :, cols] = np.einsum("tpk,kl->tpl", betas[:, :, cols], chol)
        rotated = LoadingsPath(betas, gam.copy())
        value = eval_surrogate(panel, rotated, vol_new, moments, cfg, ispec)
        value_star = eval_surrogate(panel, star, vol_new, moments, cfg, ispec)
        if value >= value_star:
            loadings = rotated
        else:
            loadings = LoadingsPath(star.betas.copy(), gam.copy())
            value = value_star
        vol = vol_new
        if sweep_index < burn_in:
            continue  # burn-in sweeps: state advances, nothing recorded
        trace.append(value)
        if len(trace) >= 2:
            prev = trace[-2]
            if abs(value - prev) / max(1.0, abs(prev)) < cfg.tol:
                converged = True
                break

    return FitResult(
        loadings=LoadingsPath(loadings.betas, gam),
        volatility=vol,
        moments=moments,
        objective_trace=trace,
        iterations_run=len(trace),
        converged=converged,
        intercept_col=None if ispec is None else ispec.column,
    )

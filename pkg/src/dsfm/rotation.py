"""Expansion-parameter covariances and the rotation back to the reduced space.

The expanded model lets the factor innovations carry free covariances A_t,
which are identifiable from the complete data:

    A_t = M_1t - M_12t - M_12t' + M_2t,
    M_1t  = omega_{t-1|T} omega_{t-1|T}' + V_{t-1|T}
    M_12t = omega_{t-1|T} omega_{t|T}'   + V_{t,t-1|T}
    M_2t  = omega_{t|T} omega_{t|T}'     + V_{t|T}

(the second posterior moment of the factor increments).  Loadings found in
the expanded space are rotated back via the lower Cholesky factor,
B_t = B*_t A_tL, which steers iterates toward sparse orientations.  A_0 is
the identity and is never modified.

A variant replacing the plain increments with phi-discounted ones,
A_t = M_2t - phi M_12t - phi M_12t' + phi^2 M_1t, is available behind the
``phi_aware`` switch; the plain form is the default.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import InterceptSpec, LoadingsPath, ModelConfig, SmoothedMoments

__all__ = ["RotationSet", "update_rotation", "rotate_loadings"]

RIDGE = 1e-8


@dataclass
class RotationSet:
    """Symmetric PD matrices A_t (after the ridge) and their Cholesky factors."""

    a_mats: np.ndarray  # (T+1, K, K), a_mats[0] = I exactly
    chol: np.ndarray    # (T+1, K, K) lower factors


def update_rotation(moments: SmoothedMoments, cfg: ModelConfig,
                    phi_aware: bool = False) -> RotationSet:
    """Expansion covariances from the smoothed moments.

    Each A_t is symmetrized and gets a RIDGE * I bump before factorization
    (degenerate A_t arise when factors are fully determined).
    """
    mu = moments.means
    v = moments.covs
    lv = moments.lag_covs
    t_len = mu.shape[0] - 1
    k = mu.shape[1]
    phi = cfg.phi_tilde if phi_aware else 1.0

    a = np.empty((t_len + 1, k, k))
    a[0] = np.eye(k)
    m1 = mu[:-1, :, None] * mu[:-1, None, :] + v[:-1]
    m12 = mu[:-1, :, None] * mu[1:, None, :] + lv
    m2 = mu[1:, :, None] * mu[1:, None, :] + v[1:]
    raw = m2 - phi * m12 - phi * np.swapaxes(m12, 1, 2) + phi**2 * m1
    raw = 0.5 * (raw + np.swapaxes(raw, 1, 2))
    raw[:, np.arange(k), np.arange(k)] += RIDGE
    a[1:] = raw

    chol = np.empty_like(a)
    chol[0] = np.eye(k)
    try:
        chol[1:] = np.linalg.cholesky(a[1:])
    except np.linalg.LinAlgError as exc:
        raise ValueError("Cholesky of expansion covariance failed after "
                         "regularization") from exc
    return RotationSet(a_mats=a, chol=chol)


def rotate_loadings(loadings_star: LoadingsPath, rot: RotationSet,
                    intercept: Optional[InterceptSpec] = None) -> LoadingsPath:
    """Rotate B_t = B*_t A_tL for t = 0..T (A_0L = I).

    An intercept column is carried through unrotated; the rotation acts on
    the factor block only.
    """
    betas = loadings_star.betas
    t_tot = betas.shape[0]
    if rot.chol.shape[0] != t_tot:
        raise ValueError("rotation set length does not match loadings")
    if intercept is None:
        new = np.einsum("tpk,tkl->tpl", betas, rot.chol)
    else:
        cols = [k for k in range(betas.shape[2]) if k != intercept.column]
        new = betas.copy()
        new[:, :, cols] = np.einsum("tpk,tkl->tpl", betas[:, :, cols], rot.chol)
    return LoadingsPath(betas=new, gammas=loadings_star.gammas.copy())

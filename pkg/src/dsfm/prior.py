"""Spike/slab densities, dynamic mixing weights, and indicator expectations.

The prior on each loading path mixes a Laplace spike concentrated at zero
with a Gaussian slab whose mean follows a stationary AR(1):

    pi(b_t | g_t, b_{t-1}) = (1 - g_t) psi0(b_t | lambda0)
                             + g_t psi1(b_t | mu(b_{t-1}), lambda1),
    mu(b) = phi0 + phi1 (b - phi0).

Mixing weights and posterior memberships are mixture ratios of these
densities; everything here is evaluated in log space so huge |b| never
produces NaN or Inf.  All functions broadcast over numpy arrays and are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

__all__ = [
    "DssParams",
    "slab_ar_mean",
    "spike_density",
    "slab_density",
    "stationary_slab_density",
    "mixing_weight",
    "indicator_expectation",
    "initial_indicator_expectation",
]


@dataclass
class DssParams:
    """Hyperparameters of the dynamic spike-and-slab prior."""

    theta: float
    lambda0: float
    lambda1: float
    phi0: float
    phi1: float

    def __post_init__(self):
        if self.lambda0 <= 0 or self.lambda1 <= 0:
            raise ValueError("lambda0 and lambda1 must be positive")
        if not abs(self.phi1) < 1.0:
            raise ValueError("phi1 must lie in (-1, 1)")
        v = self.stationary_variance
        if not (np.isfinite(v) and v > 0):
            raise ValueError("stationary slab variance must be finite positive")

    @property
    def stationary_variance(self) -> float:
        return self.lambda1 / (1.0 - self.phi1**2)

    @classmethod
    def from_config(cls, cfg) -> "DssParams":
        return cls(theta=cfg.theta, lambda0=cfg.lambda0, lambda1=cfg.lambda1,
                   phi0=cfg.phi0, phi1=cfg.phi1)


def slab_ar_mean(beta_prev, p: DssParams):
    """Conditional slab mean mu(b) = phi0 + phi1 (b - phi0)."""
    return p.phi0 + p.phi1 * (np.asarray(beta_prev, dtype=float) - p.phi0)


def spike_logpdf(beta, lambda0):
    beta = np.asarray(beta, dtype=float)
    return np.log(lambda0 / 2.0) - lambda0 * np.abs(beta)


def spike_density(beta, lambda0):
    """Laplace spike density (lambda0 / 2) exp(-lambda0 |beta|)."""
    if lambda0 <= 0:
        raise ValueError("lambda0 must be positive")
    return np.exp(spike_logpdf(beta, lambda0))


def gaussian_logpdf(beta, mean, var):
    beta = np.asarray(beta, dtype=float)
    return -0.5 * np.log(2.0 * np.pi * var) - (beta - mean) ** 2 / (2.0 * var)


def slab_density(beta, mean, lambda1):
    """Gaussian slab density with variance lambda1; the caller supplies the
    conditional mean, normally ``slab_ar_mean(beta_prev, p)``."""
    if lambda1 <= 0:
        raise ValueError("lambda1 must be positive")
    return np.exp(gaussian_logpdf(beta, mean, lambda1))


def stationary_slab_density(beta, p: DssParams):
    """Stationary slab: Gaussian with mean phi0, variance lambda1/(1-phi1^2)."""
    return np.exp(gaussian_logpdf(beta, p.phi0, p.stationary_variance))


def _mixture_posterior(log_num_weight, log_num_dens, log_den_weight, log_den_dens,
                       fallback):
    """P(slab) from log weights/densities, guarded against double underflow."""
    a = log_num_weight + log_num_dens
    b = log_den_weight + log_den_dens
    out = expit(a - b)
    both_gone = np.isneginf(a) & np.isneginf(b)
    if np.any(both_gone):
        out = np.where(both_gone, fallback, out)
    return out if out.ndim else float(out)


def mixing_weight(beta_prev, p: DssParams):
    """Dynamic mixing weight theta(b): marginal inclusion probability of the
    lagged coefficient under the stationary slab vs. the spike, with prior
    weight Theta.  Computed in log space."""
    beta_prev = np.asarray(beta_prev, dtype=float)
    with np.errstate(divide="ignore"):
        lw1 = np.log(p.theta)
        lw0 = np.log1p(-p.theta)
    return _mixture_posterior(
        lw1, gaussian_logpdf(beta_prev, p.phi0, p.stationary_variance),
        lw0, spike_logpdf(beta_prev, p.lambda0),
        fallback=p.theta,
    )


def indicator_expectation(beta_t, beta_prev, p: DssParams):
    """E-step slab membership of beta_t given the lagged coefficient.

    The weight theta = mixing_weight(beta_prev) classifies beta_t between the
    conditional slab centered at mu(beta_prev) and the spike.
    """
    beta_t = np.asarray(beta_t, dtype=float)
    theta = np.asarray(mixing_weight(beta_prev, p), dtype=float)
    with np.errstate(divide="ignore"):
        lw1 = np.log(theta)
        lw0 = np.log1p(-theta)
    return _mixture_posterior(
        lw1, gaussian_logpdf(beta_t, slab_ar_mean(beta_prev, p), p.lambda1),
        lw0, spike_logpdf(beta_t, p.lambda0),
        fallback=p.theta,
    )


def initial_indicator_expectation(beta0, p: DssParams):
    """Slab membership of the initial condition B_0 under the stationary slab
    vs. the spike, with prior weight Theta."""
    beta0 = np.asarray(beta0, dtype=float)
    with np.errstate(divide="ignore"):
        lw1 = np.log(p.theta)
        lw0 = np.log1p(-p.theta)
    return _mixture_posterior(
        lw1, gaussian_logpdf(beta0, p.phi0, p.stationary_variance),
        lw0, spike_logpdf(beta0, p.lambda0),
        fallback=p.theta,
    )

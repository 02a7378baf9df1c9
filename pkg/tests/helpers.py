"""Independent oracles shared by the test modules.

These deliberately avoid the production code paths: densities come from
scipy.stats, the smoother oracle conditions an explicitly built joint
Gaussian, the coordinate-update oracle minimizes the univariate objective
numerically, and the surrogate oracle is a plain triple loop.
"""

import numpy as np
import scipy.stats

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, a, b, tol=1e-10, max_iter=200):
    """Golden-section minimizer of f on [a, b]."""
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)


def minimize_piecewise(f, lo=-10.0, hi=10.0, tol=1e-9):
    """Golden-section on [lo, 0] and [0, hi] separately (the objective can
    have a kink at the origin); returns the better minimizer."""
    cands = [golden_section(f, lo, 0.0, tol), golden_section(f, 0.0, hi, tol), 0.0]
    vals = [f(c) for c in cands]
    return cands[int(np.argmin(vals))]


def univariate_surrogate(responses, design_col, partial_fit, sigma2,
                         gamma_t, gamma_next, theta_next,
                         beta_prev, beta_next, lam0, lam1, phi1,
                         drop_prospective=False):
    """Build the local objective g(beta) for one coordinate, from scratch.

    ``partial_fit`` holds the residuals excluding this coordinate's
    contribution: c_r = ytilde_r - sum_{l != k} design_{rl} beta_l.
    The mixing-weight influence enters through the frozen
    M = gamma_next (1 - theta_next) - (1 - gamma_next) theta_next as the
    one-step-late quadratic/absolute correction.
    """
    if drop_prospective:
        m = 0.0
    else:
        m = gamma_next * (1.0 - theta_next) - (1.0 - gamma_next) * theta_next

    def g(beta):
        fit = 0.5 * np.sum((partial_fit - design_col * beta) ** 2) / sigma2
        pen = gamma_t * (beta - phi1 * beta_prev) ** 2 / (2.0 * lam1)
        pen += (1.0 - gamma_t) * lam0 * abs(beta)
        if not drop_prospective:
            pen += gamma_next * (beta_next - phi1 * beta) ** 2 / (2.0 * lam1)
        pen += m * ((1.0 - phi1**2) * beta**2 / (2.0 * lam1) - lam0 * abs(beta))
        return fit + pen

    return g


def initial_surrogate(beta1, gamma0, gamma1, lam0, lam1, phi1):
    """t = 0 objective: stationary-slab/spike weight on beta0 plus the t = 1
    slab increment."""
    q0 = 1.0 - phi1**2

    def g(beta0):
        return (gamma0 * beta0**2 * q0 / (2.0 * lam1)
                + (1.0 - gamma0) * lam0 * abs(beta0)
                + gamma1 * (beta1 - phi1 * beta0) ** 2 / (2.0 * lam1))

    return g


def joint_gaussian_moments(y, b_seq, sigma2_seq, phi, q):
    """Smoothed means/covs/lag-covs by conditioning the explicit joint Gaussian.

    y: (P, T); b_seq: (T, P, K); sigma2_seq: (P, T).  The prior over the
    stacked states (omega_0..omega_T) is stationary AR(1) with coefficient
    phi and innovation variance q, so cov(omega_s, omega_t) =
    q/(1-phi^2) phi^|s-t| I.
    """
    p, t_len = y.shape
    k = b_seq.shape[2]
    n = (t_len + 1) * k
    var0 = q / (1.0 - phi**2)
    prior = np.zeros((n, n))
    for s in range(t_len + 1):
        for t in range(t_len + 1):
            prior[s * k:(s + 1) * k, t * k:(t + 1) * k] = (
                var0 * phi ** abs(s - t) * np.eye(k))
    h = np.zeros((p * t_len, n))
    r = np.zeros(p * t_len)
    for t in range(1, t_len + 1):
        h[(t - 1) * p:t * p, t * k:(t + 1) * k] = b_seq[t - 1]
        r[(t - 1) * p:t * p] = sigma2_seq[:, t - 1]
    s_mat = h @ prior @ h.T + np.diag(r)
    gain = prior @ h.T @ np.linalg.inv(s_mat)
    mean = gain @ y.T.reshape(-1)
    cov = prior - gain @ h @ prior
    means = mean.reshape(t_len + 1, k)
    covs = np.stack([cov[t * k:(t + 1) * k, t * k:(t + 1) * k]
                     for t in range(t_len + 1)])
    lag = np.stack([cov[t * k:(t + 1) * k, (t - 1) * k:t * k]
                    for t in range(1, t_len + 1)])
    return means, covs, lag


def surrogate_by_loops(y, betas, gammas, sigma2, means, covs, lam0, lam1, phi1):
    """Term-by-term re-summation of the surrogate objective (negated loss)."""
    t_len = y.shape[1]
    p, k = betas.shape[1], betas.shape[2]
    loss = 0.0
    for t in range(1, t_len + 1):
        bt = betas[t]
        for j in range(p):
            s2 = sigma2[j, t - 1]
            loss += 0.5 * np.log(s2)
            resid = y[j, t - 1] - bt[j] @ means[t]
            loss += 0.5 * (resid**2 + bt[j] @ covs[t] @ bt[j]) / s2
    for j in range(p):
        for kk in range(k):
            g0 = gammas[0, j, kk]
            b0 = betas[0, j, kk]
            loss += (g0 * b0**2 * (1 - phi1**2) / (2 * lam1)
                     + (1 - g0) * lam0 * abs(b0))
            for t in range(1, t_len + 1):
                g = gammas[t, j, kk]
                b = betas[t, j, kk]
                bp = betas[t - 1, j, kk]
                loss += (g * (b - phi1 * bp) ** 2 / (2 * lam1)
                         + (1 - g) * lam0 * abs(b))
    return -loss


def laplace_pdf(x, rate):
    return scipy.stats.laplace(loc=0.0, scale=1.0 / rate).pdf(x)


def normal_pdf(x, mean, var):
    return scipy.stats.norm(loc=mean, scale=np.sqrt(var)).pdf(x)

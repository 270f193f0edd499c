"""Closed-form objectives for the exponential tilt mixture / SLR model.

The three samples carry fixed mixing weights rho_1 = 0, rho_2 = 1 and a free
rho_3 = rho.  ``kappa`` is the saddle function whose min over alpha is the
profile log-likelihood and whose value at alpha = alpha_tilde(rho) is the SLR
log-likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import EPS, PenaltyConfig, SemiDataset

H_CLIP = 700.0


def clamp_unit(v):
    return np.clip(v, EPS, 1 - EPS)


def logit(a: float) -> float:
    return math.log(a) - math.log1p(-a)


def linear_predictor(beta0: float, beta1, x) -> np.ndarray:
    """h = beta0 + x @ beta1, clipped to [-700, 700]."""
    h = beta0 + np.asarray(x, float) @ np.asarray(beta1, float)
    return np.clip(h, -H_CLIP, H_CLIP)


def log_mix(alpha, h):
    """Stable log(1 - alpha + alpha * exp(h))."""
    h = np.asarray(h, float)
    alpha = np.asarray(alpha, float)
    neg = h <= 0
    hn = np.where(neg, h, 0.0)
    hp = np.where(neg, 0.0, h)
    low = np.log1p(alpha * np.expm1(hn))
    high = hp + np.log(alpha + (1 - alpha) * np.exp(-hp))
    out = np.where(neg, low, high)
    return out if out.ndim else float(out)


def mix_weight(alpha, h):
    """alpha e^h / (1 - alpha + alpha e^h), i.e. sigmoid(h + logit(alpha))."""
    return expit(np.asarray(h, float) + logit(float(alpha)))


def tilde_alpha(counts, rho: float) -> float:
    """Pooled mixing weight (n2 + n3 rho) / N."""
    n2, n3, N = counts
    return (n2 + n3 * rho) / N


def _design(x: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((x.shape[0], 1)), x])


@dataclass
class _Pred:
    """Linear predictors of the three samples at one beta."""

    h1: np.ndarray
    h2: np.ndarray
    h3: np.ndarray

    @classmethod
    def at(cls, data: SemiDataset, beta) -> "_Pred":
        beta = np.asarray(beta, float)
        return cls(*(linear_predictor(beta[0], beta[1:], x) for x in (data.x1, data.x2, data.x3)))

    @property
    def all(self) -> np.ndarray:
        return np.concatenate([self.h1, self.h2, self.h3])


@dataclass(frozen=True)
class ObjectiveValue:
    value: float
    grad_rho: float
    grad_beta: np.ndarray
    grad_alpha: float = float("nan")


def kappa(data: SemiDataset, rho: float, beta, alpha: float) -> ObjectiveValue:
    """kappa(rho, beta, alpha) with analytic gradients in all three arguments."""
    if not (0 < rho < 1 and 0 < alpha < 1):
        raise ValueError("rho and alpha must lie in (0, 1)")
    N = data.N
    pr = _Pred.at(data, beta)
    h = pr.all
    denom = log_mix(alpha, h)
    value = (pr.h2.sum() + np.sum(log_mix(rho, pr.h3)) - np.sum(denom)) / N - math.log(N)
    if not math.isfinite(value):
        raise FloatingPointError("non-finite kappa value")

    w3 = mix_weight(rho, pr.h3)
    wa = mix_weight(alpha, h)
    # (e^h - 1) / (1 - a + a e^h) == (w - a) / (a (1 - a))
    grad_rho = np.sum(w3 - rho) / (rho * (1 - rho)) / N
    grad_alpha = -np.sum(wa - alpha) / (alpha * (1 - alpha)) / N
    z2, z3, za = _design(data.x2), _design(data.x3), _design(data.pooled())
    grad_beta = (z2.sum(axis=0) + z3.T @ w3 - za.T @ wa) / N
    return ObjectiveValue(float(value), float(grad_rho), grad_beta, float(grad_alpha))


def alpha_residual(h: np.ndarray, alpha: float) -> float:
    """(1/N) sum 1/(1 - alpha + alpha e^h) - 1; zero at the profile alpha."""
    # 1/(1 - a + a e^h) == (1 - w) / (1 - a)
    return float(np.mean(1 - mix_weight(alpha, h)) / (1 - alpha) - 1)


def _alpha_slope(h: np.ndarray, alpha: float) -> float:
    # d kappa / d alpha up to the positive factor 1/N; increasing in alpha
    return -float(np.sum(mix_weight(alpha, h) - alpha)) / (alpha * (1 - alpha))


@dataclass(frozen=True)
class AlphaSolution:
    alpha: float
    residual: float
    boundary: bool = False
    degenerate: bool = False


def solve_alpha(data: SemiDataset, beta, max_iter: int = 200) -> AlphaSolution:
    """Minimize kappa over alpha by bisection on its monotone derivative.

    When every h is zero kappa is flat in alpha and n2/n is returned.  When
    all e^h lie on one side of 1 there is no interior root and the nearer
    clamp boundary is returned with ``boundary=True``.
    """
    h = _Pred.at(data, beta).all
    if np.all(h == 0):
        return AlphaSolution(data.n2 / data.n, 0.0, degenerate=True)
    lo, hi = EPS, 1 - EPS
    g_lo, g_hi = _alpha_slope(h, lo), _alpha_slope(h, hi)
    if g_lo >= 0:
        return AlphaSolution(lo, alpha_residual(h, lo), boundary=True)
    if g_hi <= 0:
        return AlphaSolution(hi, alpha_residual(h, hi), boundary=True)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g = _alpha_slope(h, mid)
        if g == 0:
            lo = hi = mid
            break
        if g < 0:
            lo = mid
        else:
            hi = mid
    # pick the end with the smaller residual
    r_lo, r_hi = alpha_residual(h, lo), alpha_residual(h, hi)
    a, r = (lo, r_lo) if abs(r_lo) <= abs(r_hi) else (hi, r_hi)
    return AlphaSolution(a, r)


def solve_alpha_hat(data: SemiDataset, beta) -> float:
    return solve_alpha(data, beta).alpha


def rho_penalty(rho: float, penalty: PenaltyConfig, n3: int, N: int) -> tuple[float, float]:
    """Beta-prior term and its derivative in rho; zero when rho is frozen."""
    if penalty.frozen_rho or penalty.gamma == 0:
        return 0.0, 0.0
    t1, t2 = penalty.taus(n3, N)
    return t1 * math.log1p(-rho) + t2 * math.log(rho), -t1 / (1 - rho) + t2 / rho


def ridge_penalty(beta, lam: float) -> tuple[float, np.ndarray]:
    beta = np.asarray(beta, float)
    g = np.zeros_like(beta)
    g[1:] = -2 * lam * beta[1:]
    return -lam * float(beta[1:] @ beta[1:]), g


def profile_objective(
    data: SemiDataset, rho: float, beta, penalty: PenaltyConfig, with_grad: bool = False
):
    """Penalized profile objective: kappa at alpha-hat(beta) plus penalties.

    The gradient uses the envelope identity (d kappa / d alpha = 0 at alpha-hat).
    """
    alpha = solve_alpha_hat(data, beta)
    kv = kappa(data, rho, beta, alpha)
    rp, drp = rho_penalty(rho, penalty, data.n3, data.N)
    bp, dbp = ridge_penalty(beta, penalty.lam)
    value = kv.value + rp + bp
    if not with_grad:
        return value
    return ObjectiveValue(value, kv.grad_rho + drp, kv.grad_beta + dbp)


def direct_objective(
    data: SemiDataset, rho: float, beta, penalty: PenaltyConfig, with_grad: bool = False
):
    """Penalized SLR log-likelihood: kappa at alpha = alpha_tilde(rho) plus penalties."""
    frac = data.n3 / data.N
    alpha = float(clamp_unit(tilde_alpha((data.n2, data.n3, data.N), rho)))
    kv = kappa(data, rho, beta, alpha)
    rp, drp = rho_penalty(rho, penalty, data.n3, data.N)
    bp, dbp = ridge_penalty(beta, penalty.lam)
    value = kv.value + rp + bp
    if not with_grad:
        return value
    return ObjectiveValue(value, kv.grad_rho + frac * kv.grad_alpha + drp, kv.grad_beta + dbp)


def slr_probs(counts, rho: float, beta, x) -> np.ndarray:
    """Conditional probabilities of sample membership z = 1, 2, 3 given x.

    Returns an array of shape (m, 3) for m rows of ``x`` (or (3,) for one row).
    """
    n1, n2, n3, N = counts
    x = np.asarray(x, float)
    single = x.ndim == 1
    x2d = x.reshape(1, -1) if single else x
    beta = np.asarray(beta, float)
    h = linear_predictor(beta[0], beta[1:], x2d)
    at = tilde_alpha((n2, n3, N), rho)
    ld = log_mix(at, h)
    with np.errstate(divide="ignore"):
        logs = np.column_stack([
            np.full_like(h, math.log(n1 / N) if n1 else -np.inf) - ld,
            np.full_like(h, math.log(n2 / N) if n2 else -np.inf) + h - ld,
            np.full_like(h, math.log(n3 / N) if n3 else -np.inf) + log_mix(rho, h) - ld,
        ])
    out = np.exp(logs)
    return out[0] if single else out


def beta_objective(data: SemiDataset, u: np.ndarray, alpha: float, lam: float, beta):
    """M-step objective for beta with pseudo-responses ``u`` (stacked x1, x2, x3).

    Returns value, gradient and Hessian; concave in beta.
    """
    x = data.pooled()
    z = _design(x)
    beta = np.asarray(beta, float)
    h = np.clip(z @ beta, -H_CLIP, H_CLIP)
    N = data.N
    w = mix_weight(alpha, h)
    value = (u @ h - np.sum(log_mix(alpha, h))) / N
    grad = z.T @ (u - w) / N
    hess = -(z.T * (w * (1 - w))) @ z / N
    bp, dbp = ridge_penalty(beta, lam)
    hess[1:, 1:] -= 2 * lam * np.eye(len(beta) - 1)
    return value + bp, grad + dbp, hess

"""Reference classifiers: ridge logistic regression, entropy regularization and
classification EM with logistic regression."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .data import DataError, LabeledSample, SemiDataset
from .newton import ConvergenceError, newton_maximize
from .objectives import H_CLIP


@dataclass(frozen=True)
class ClassifierCoefficients:
    beta0c: float
    beta1: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        b1 = np.atleast_1d(np.asarray(self.beta1, float))
        if not (np.isfinite(self.beta0c) and np.all(np.isfinite(b1))):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "beta0c", float(self.beta0c))
        object.__setattr__(self, "beta1", b1)

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate([[self.beta0c], self.beta1])

    def decision(self, x) -> np.ndarray:
        return self.beta0c + np.asarray(x, float) @ self.beta1


def _design(x):
    return np.hstack([np.ones((x.shape[0], 1)), x])


def _log1pexp(t):
    return np.logaddexp(0.0, t)


def logistic_objective(z, y, beta, lam, scale):
    """scale * loglik(beta) - lam * ||beta1||^2 with gradient and Hessian."""
    t = np.clip(z @ beta, -H_CLIP, H_CLIP)
    p = expit(t)
    value = scale * float(y @ t - _log1pexp(t).sum()) - lam * float(beta[1:] @ beta[1:])
    grad = scale * (z.T @ (y - p))
    grad[1:] -= 2 * lam * beta[1:]
    hess = -scale * (z.T * (p * (1 - p))) @ z
    hess[1:, 1:] -= 2 * lam * np.eye(len(beta) - 1)
    return value, grad, hess


def _check_classes(y):
    if y.min() == y.max():
        raise DataError("both classes must be present")


def fit_ridge_logistic(labeled: LabeledSample, lam: float, tol: float = 1e-10,
                       max_iter: int = 200, beta_init=None) -> ClassifierCoefficients:
    """Maximize n^{-1} loglik - lam ||beta1||^2 (intercept unpenalized) by damped Newton."""
    y = labeled.labels.astype(float)
    _check_classes(y)
    z = _design(labeled.features)
    scale = 1.0 / labeled.n
    b0 = np.zeros(z.shape[1]) if beta_init is None else np.asarray(beta_init, float)
    res = newton_maximize(lambda b: logistic_objective(z, y, b, lam, scale), b0,
                          tol=tol, max_iter=max_iter)
    if not res.converged:
        raise ConvergenceError(
            f"ridge logistic did not converge (gradient norm {res.grad_norm:.3g}); "
            "labeled data may be separable"
        )
    if lam == 0:
        # a fit that classifies every row strictly correctly separates the data,
        # and then no finite maximizer exists
        t = z @ res.x
        if np.all(np.where(y == 1, t, -t) > 0):
            raise ConvergenceError("labeled data are separable; the unpenalized MLE does not exist")
    return ClassifierCoefficients(res.x[0], res.x[1:], {"grad_norm": res.grad_norm,
                                                       "iterations": res.iterations})


def binary_entropy(t):
    """Shannon entropy of Bernoulli(sigmoid(t)), stable in t."""
    t = np.asarray(t, float)
    p = expit(t)
    # -p log p - (1-p) log(1-p) == log(1 + e^t) - p t
    return _log1pexp(t) - p * t


def entropy_reg_objective(data: SemiDataset, beta, lam: float, lam_e: float):
    """N^{-1}{-loglik_labeled + lam_e * H_unlabeled} + lam ||beta1||^2 and its gradient (minimized)."""
    lab = data.labeled()
    beta = np.asarray(beta, float)
    zl, zu = _design(lab.features), _design(data.x3)
    y = lab.labels.astype(float)
    N = data.N
    tl = np.clip(zl @ beta, -H_CLIP, H_CLIP)
    tu = np.clip(zu @ beta, -H_CLIP, H_CLIP)
    nll = float(_log1pexp(tl).sum() - y @ tl)
    H = float(binary_entropy(tu).sum())
    value = (nll + lam_e * H) / N + lam * float(beta[1:] @ beta[1:])
    pu = expit(tu)
    g_nll = zl.T @ (expit(tl) - y)
    g_H = zu.T @ (-pu * (1 - pu) * tu)
    grad = (g_nll + lam_e * g_H) / N
    grad[1:] += 2 * lam * beta[1:]
    return value, grad


def fit_entropy_reg(data: SemiDataset, lam: float, lam_e: float, seed=0,
                    restarts: int = 5, gtol: float = 1e-10) -> ClassifierCoefficients:
    """Entropy-regularized logistic regression.

    The objective is not convex for lam_e > 0, so L-BFGS is started at the
    ridge solution and at ``restarts`` random perturbations of it; the best
    local minimum is returned.
    """
    data.require_labeled()
    if not 0 <= lam_e <= 1:
        raise ValueError("lambda_e must lie in [0, 1]")
    lab = data.labeled()
    warm = fit_ridge_logistic(lab, lam * data.N / lab.n, max_iter=500) if lam > 0 else None
    if warm is None:
        try:
            warm = fit_ridge_logistic(lab, 0.0)
        except ConvergenceError:
            warm = fit_ridge_logistic(lab, 1e-4)
    b_warm = warm.beta
    fun = lambda b: entropy_reg_objective(data, b, lam, lam_e)
    rng = np.random.default_rng(seed)
    starts = [b_warm]
    if lam_e > 0:
        spread = 0.5 * (1 + np.abs(b_warm))
        starts += [b_warm + spread * rng.standard_normal(b_warm.shape) for _ in range(restarts)]
    best = None
    for s in starts:
        r = minimize(fun, s, jac=True, method="L-BFGS-B",
                     options={"gtol": gtol, "ftol": 1e-15, "maxiter": 5000})
        if best is None or r.fun < best.fun - 1e-14:
            best = r
    if not np.all(np.isfinite(best.x)):
        raise ConvergenceError("entropy regularization produced non-finite coefficients")
    if lam_e == 0:
        # convex case: polish to the exact ridge optimum
        z = _design(lab.features)
        y = lab.labels.astype(float)
        res = newton_maximize(lambda b: logistic_objective(z, y, b, lam, 1.0 / data.N), best.x,
                              tol=1e-12, max_iter=100)
        x = res.x
    else:
        x = best.x
    value, grad = fun(x)
    return ClassifierCoefficients(x[0], x[1:], {"objective": value,
                                                "grad_norm": float(np.linalg.norm(grad))})


def cem_objective(z, u, beta):
    """sum[u t - log(1 + e^t)] with t = z beta, plus gradient and Hessian."""
    return logistic_objective(z, u, beta, 0.0, 1.0)


def fit_soft_cem(data: SemiDataset, max_iter: int = 10000, tol: float = 1e-10,
                 hard: bool = False, beta_init=None) -> ClassifierCoefficients:
    """Classification EM with logistic regression.

    Soft version (default): unlabeled pseudo-responses are the current fitted
    probabilities.  ``hard=True`` thresholds them at 1/2 (the original C-step).
    Starts from the ridge-logistic fit with a small ridge when ``beta_init`` is None.
    """
    data.require_labeled()
    lab = data.labeled()
    z = _design(data.pooled())
    zu = _design(data.x3)
    y_lab = lab.labels.astype(float)
    beta = (fit_ridge_logistic(lab, 1e-2).beta if beta_init is None
            else np.asarray(beta_init, float).copy())
    zl = _design(lab.features)
    trace, lab_trace = [], []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        u3 = expit(np.clip(zu @ beta, -H_CLIP, H_CLIP))
        if hard:
            u3 = (u3 >= 0.5).astype(float)
        u = np.concatenate([y_lab, u3])
        res = newton_maximize(lambda b: cem_objective(z, u, b), beta, tol=1e-11, max_iter=200)
        if not res.converged:
            raise ConvergenceError(f"CEM M-step failed at iteration {it}")
        trace.append(res.value)
        # soft CEM is EM for the labeled-only likelihood, which must not decrease
        lab_trace.append(cem_objective(zl, y_lab, res.x)[0])
        step = float(np.max(np.abs(res.x - beta)))
        beta = res.x
        if step < tol:
            converged = True
            break
    if not converged and not hard:
        raise ConvergenceError(f"soft CEM did not converge in {max_iter} iterations")
    return ClassifierCoefficients(beta[0], beta[1:], {"objective_trace": trace,
                                                      "labeled_loglik_trace": lab_trace,
                                                      "iterations": it,
                                                      "converged": converged})

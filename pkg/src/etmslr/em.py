"""EM algorithms for profile SLR (pSLR) and direct SLR (dSLR)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import EPS, FitResult, ModelParams, PenaltyConfig, Responsibilities, SemiDataset
from .newton import ConvergenceError, newton_maximize
from .objectives import (
    beta_objective,
    clamp_unit,
    direct_objective,
    linear_predictor,
    mix_weight,
    profile_objective,
    tilde_alpha,
)


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 500
    tol: float = 1e-8
    param_tol: float = 1e-6
    inner_newton_tol: float = 1e-10
    inner_max_iter: int = 100

    def __post_init__(self):
        if min(self.tol, self.param_tol, self.inner_newton_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.inner_max_iter < 1:
            raise ValueError("iteration budgets must be positive")


def e_step(data: SemiDataset, params: ModelParams) -> Responsibilities:
    """Posterior probability that each row came from G1."""
    h3 = linear_predictor(params.beta0, params.beta1, data.x3)
    u3 = mix_weight(params.rho, h3) if data.n3 else np.zeros(0)
    return Responsibilities(np.zeros(data.n1), np.ones(data.n2), u3)


def pslr_scalar_updates(resp: Responsibilities, penalty: PenaltyConfig, counts) -> tuple[float, float]:
    """Closed-form rho and alpha updates of the profile EM."""
    n1, n2, n3, N = counts
    if penalty.frozen_rho:
        rho = penalty.rho0
    else:
        if n3 < 1:
            raise ValueError("rho update needs at least one unlabeled row")
        rho = (resp.u3.mean() + penalty.gamma * penalty.rho0) / (1 + penalty.gamma)
    alpha = resp.total / N
    return float(clamp_unit(rho)), float(clamp_unit(alpha))


def beta_m_step(
    data: SemiDataset,
    resp: Responsibilities,
    alpha: float,
    lam: float,
    beta_init,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> np.ndarray:
    """Maximize the concave weighted-logistic M-step objective in beta."""
    u = resp.stacked()
    res = newton_maximize(
        lambda b: beta_objective(data, u, alpha, lam, b), beta_init, tol=tol, max_iter=max_iter
    )
    if not res.converged:
        raise ConvergenceError(
            f"beta M-step did not converge (gradient norm {res.grad_norm:.3g})"
        )
    return res.x


@dataclass(frozen=True)
class RhoSolution:
    rho: float
    residual: float
    psi: float


def _psi(rho: float, n3: int, N: int, n2: int) -> float:
    a = (n2 + n3 * rho) / N
    return 1 - n3 * rho * (1 - rho) / (N * a * (1 - a))


def dslr_rho_solve(resp: Responsibilities, penalty: PenaltyConfig, counts) -> RhoSolution:
    """Solve rho = m psi/(psi + gamma) + rho0 gamma/(psi + gamma) by bisection.

    ``m`` is the mean unlabeled responsibility.  gamma = 0 gives m and an
    infinite gamma gives rho0 directly.
    """
    n1, n2, n3, N = counts
    if n3 < 1:
        raise ValueError("rho update needs at least one unlabeled row")
    m = float(resp.u3.mean())
    rho0, gamma = penalty.rho0, penalty.gamma
    if penalty.frozen_rho:
        r = rho0
        return RhoSolution(r, 0.0, _psi(r, n3, N, n2))
    if gamma == 0:
        r = float(clamp_unit(m))
        return RhoSolution(r, r - m if 0 < m < 1 else 0.0, _psi(r, n3, N, n2))

    def g(r):
        psi = _psi(r, n3, N, n2)
        return r - (m * psi + rho0 * gamma) / (psi + gamma)

    lo, hi = EPS, 1 - EPS
    g_lo, g_hi = g(lo), g(hi)
    if g_lo > 0 or g_hi < 0:
        raise ConvergenceError(
            f"rho fixed-point equation has no sign change (g={g_lo:.3g}, {g_hi:.3g})"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        gm = g(mid)
        if gm == 0:
            lo = hi = mid
            break
        if gm < 0:
            lo = mid
        else:
            hi = mid
    r = lo if abs(g(lo)) <= abs(g(hi)) else hi
    psi = _psi(r, n3, N, n2)
    if not 0 < psi < 1:
        raise ConvergenceError(f"psi({r}) = {psi} outside (0, 1)")
    return RhoSolution(r, float(g(r)), psi)


def default_init(data: SemiDataset, lam: float = 0.0) -> ModelParams:
    """Labeled-only ridge logistic start, intercept shifted to the tilt scale."""
    from .baselines import fit_ridge_logistic

    coef = fit_ridge_logistic(data.labeled(), lam * data.N / data.n if lam else 1e-4)
    rho_l = data.rho_labeled
    return ModelParams(rho_l, coef.beta0c - math.log(data.n2 / data.n1), coef.beta1)


@dataclass
class _Trace:
    objective: list = field(default_factory=list)
    params: list = field(default_factory=list)
    rho_updates: list = field(default_factory=list)


def _run_em(data, penalty, init, cfg, objective, scalar_update, kind):
    data.require_labeled()
    if data.n3 < 1:
        raise ValueError("EM fits need at least one unlabeled row")
    if init is None:
        init = default_init(data, penalty.lam)
    rho = penalty.rho0 if penalty.frozen_rho else init.rho
    beta = init.beta.copy()
    trace = _Trace()
    obj = objective(data, rho, beta, penalty)
    trace.objective.append(obj)
    trace.params.append((rho, beta.copy()))
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        resp = e_step(data, ModelParams(rho, beta[0], beta[1:]))
        rho_new, alpha_new, extra = scalar_update(resp)
        if extra is not None:
            trace.rho_updates.append(extra)
        try:
            beta_new = beta_m_step(
                data, resp, alpha_new, penalty.lam, beta,
                tol=cfg.inner_newton_tol, max_iter=cfg.inner_max_iter,
            )
        except ConvergenceError as exc:
            raise ConvergenceError(f"{kind} iteration {it}: {exc}") from exc
        obj_new = objective(data, rho_new, beta_new, penalty)
        step = max(abs(rho_new - rho), float(np.max(np.abs(beta_new - beta))))
        rel = abs(obj_new - obj) / max(1.0, abs(obj))
        rho, beta, obj = rho_new, beta_new, obj_new
        trace.objective.append(obj)
        trace.params.append((rho, beta.copy()))
        if rel < cfg.tol and step < cfg.param_tol:
            converged = True
            break
    grad = objective(data, rho, beta, penalty, with_grad=True)
    gvec = grad.grad_beta if penalty.frozen_rho else np.concatenate([[grad.grad_rho], grad.grad_beta])
    params = ModelParams(rho, beta[0], beta[1:])
    return FitResult(
        params=params,
        objective_trace=trace.objective,
        iterations=it,
        converged=converged,
        final_gradient_norm=float(np.linalg.norm(gvec)),
        objective=obj,
        diagnostics={
            "method": kind,
            "param_trace": trace.params,
            "rho_updates": trace.rho_updates,
            "clamped": params.clamped,
        },
    )


def fit_pslr(data: SemiDataset, penalty: PenaltyConfig, init: ModelParams | None = None,
             cfg: EmConfig = EmConfig()) -> FitResult:
    """Profile SLR: EM ascent on the penalized profile objective."""
    counts = data.counts

    def update(resp):
        rho, alpha = pslr_scalar_updates(resp, penalty, counts)
        return rho, alpha, None

    return _run_em(data, penalty, init, cfg, profile_objective, update, "pslr")


def fit_dslr(data: SemiDataset, penalty: PenaltyConfig, init: ModelParams | None = None,
             cfg: EmConfig = EmConfig()) -> FitResult:
    """Direct SLR: EM ascent on the penalized SLR log-likelihood."""
    counts = data.counts

    def update(resp):
        sol = dslr_rho_solve(resp, penalty, counts)
        alpha = float(clamp_unit(tilde_alpha((data.n2, data.n3, data.N), sol.rho)))
        return sol.rho, alpha, sol

    return _run_em(data, penalty, init, cfg, direct_objective, update, "dslr")


def fit(method: str, data: SemiDataset, penalty: PenaltyConfig, init=None, cfg=EmConfig()) -> FitResult:
    if method == "pslr":
        return fit_pslr(data, penalty, init, cfg)
    if method == "dslr":
        return fit_dslr(data, penalty, init, cfg)
    raise ValueError(f"unknown method {method!r}")


__all__ = [
    "EmConfig",
    "RhoSolution",
    "beta_m_step",
    "default_init",
    "dslr_rho_solve",
    "e_step",
    "fit",
    "fit_dslr",
    "fit_pslr",
    "pslr_scalar_updates",
]

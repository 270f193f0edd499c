"""Scoring, metrics and cross-validated tuning."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .data import DataError, ModelParams, PenaltyConfig, SemiDataset
from .em import EmConfig, fit_dslr, fit_pslr

METHODS = ("pslr", "dslr", "rlr", "er", "cem")
SLR_METHODS = ("pslr", "dslr")
CV_SCHEMA = "etmslr.cv/1"

# tuning ranges (log10 scale for lambda and gamma), 8 points each
GRID_POINTS = 8
LAMBDA_RANGE = {"uci": (-5.0, -1.0), "ssl": (-4.0, 0.0)}
GAMMA_RANGE = (-2.0, 2.0)
LAMBDA_E_RANGE = (0.0, 1.0)
DEFAULT_FOLDS = 5


def predict_score(params: ModelParams, prior_log_odds: float, x) -> np.ndarray:
    """prior_log_odds + beta0 + x @ beta1; its sign classifies, its sigmoid is a probability."""
    return prior_log_odds + params.beta0 + np.asarray(x, float) @ params.beta1


def classify(scores) -> np.ndarray:
    """Score >= 0 is class 1."""
    return (np.asarray(scores) >= 0).astype(int)


def accuracy(scores, labels) -> float:
    scores, labels = np.asarray(scores, float), np.asarray(labels)
    if scores.size == 0:
        raise ValueError("empty input")
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    return float(np.mean(classify(scores) == labels))


def auc(scores, labels) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg); ties count 1/2."""
    scores, labels = np.asarray(scores, float), np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def binomial_deviance(scores, labels) -> float:
    scores, labels = np.asarray(scores, float), np.asarray(labels, float)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    p = np.clip(expit(scores), 1e-12, 1 - 1e-12)
    return float(-2 * np.mean(labels * np.log(p) + (1 - labels) * np.log1p(-p)))


@dataclass(frozen=True)
class CvGrid:
    lambdas: tuple = (0.0,)
    gammas: tuple = (0.0,)
    lambda_es: tuple = (0.0,)
    folds: int = DEFAULT_FOLDS

    def __post_init__(self):
        for name in ("lambdas", "gammas", "lambda_es"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ValueError(f"{name} grid is empty")
            if list(vals) != sorted(vals):
                raise ValueError(f"{name} grid must be sorted ascending")
            object.__setattr__(self, name, vals)
        if self.folds < 2:
            raise ValueError("folds must be at least 2")

    def cells(self, method: str) -> list[dict]:
        if method in SLR_METHODS:
            return [{"lambda": l, "gamma": g} for l in self.lambdas for g in self.gammas]
        if method == "er":
            return [{"lambda": l, "lambda_e": e} for l in self.lambdas for e in self.lambda_es]
        if method == "rlr":
            return [{"lambda": l} for l in self.lambdas]
        if method == "cem":
            return [{}]
        raise ValueError(f"unknown method {method!r}")


def default_grids(method: str, kind: str = "uci", folds: int = DEFAULT_FOLDS) -> CvGrid:
    """Eight-point grids: log10(lambda) on [-5,-1] (uci) or [-4,0] (ssl),
    log10(gamma) on [-2,2], lambda_e on [0,1]."""
    if kind not in LAMBDA_RANGE:
        raise ValueError(f"unknown dataset kind {kind!r}")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    lo, hi = LAMBDA_RANGE[kind]
    lambdas = tuple(10.0 ** np.linspace(lo, hi, GRID_POINTS))
    gammas = tuple(10.0 ** np.linspace(*GAMMA_RANGE, GRID_POINTS))
    lambda_es = tuple(np.linspace(*LAMBDA_E_RANGE, GRID_POINTS))
    if method == "rlr":
        return CvGrid(lambdas=lambdas, folds=folds)
    if method == "er":
        return CvGrid(lambdas=lambdas, lambda_es=lambda_es, folds=folds)
    if method in SLR_METHODS:
        return CvGrid(lambdas=lambdas, gammas=gammas, folds=folds)
    return CvGrid(folds=folds)


def stratified_folds(n1: int, n2: int, folds: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Fold ids for the negative and positive labeled rows.

    Rows are shuffled within class and dealt round-robin; the positive class
    continues the deal where the negatives stopped, so fold sizes differ by at
    most one.
    """
    if min(n1, n2) < folds:
        raise DataError(f"each class needs at least {folds} labeled rows for {folds}-fold CV")
    rng = np.random.default_rng(seed)
    f1 = np.empty(n1, int)
    f1[rng.permutation(n1)] = np.arange(n1) % folds
    f2 = np.empty(n2, int)
    f2[rng.permutation(n2)] = (np.arange(n2) + n1) % folds
    return f1, f2


@dataclass
class FittedModel:
    """A fitted classifier together with how to score it on labeled data."""

    method: str
    params: ModelParams
    shift: float  # added to beta0 when scoring held-out labeled data
    info: dict = field(default_factory=dict)

    def scores(self, x, prior_log_odds=None) -> np.ndarray:
        off = self.shift if prior_log_odds is None else prior_log_odds
        return predict_score(self.params, off, x)


def fit_method(method: str, data: SemiDataset, cell: dict, seed=0, rho0=None,
               em_cfg: EmConfig = EmConfig()) -> FittedModel:
    """Fit one method at one tuning cell.

    SLR methods return tilt-scale coefficients with shift log(n2/n1) for
    labeled-proportion scoring; the others return classification-scale
    coefficients with zero shift.
    """
    from .baselines import fit_entropy_reg, fit_ridge_logistic, fit_soft_cem

    data.require_labeled()
    lam = cell.get("lambda", 0.0)
    if method in SLR_METHODS:
        r0 = data.rho_labeled if rho0 is None else rho0
        pen = PenaltyConfig(lam=lam, gamma=cell.get("gamma", 0.0), rho0=r0)
        res = (fit_pslr if method == "pslr" else fit_dslr)(data, pen, cfg=em_cfg)
        return FittedModel(method, res.params, math.log(data.n2 / data.n1),
                           {"objective": res.objective, "iterations": res.iterations,
                            "converged": res.converged})
    if method == "rlr":
        coef = fit_ridge_logistic(data.labeled(), lam)
    elif method == "er":
        coef = fit_entropy_reg(data, lam, cell.get("lambda_e", 0.0), seed=seed)
    elif method == "cem":
        coef = fit_soft_cem(data)
    else:
        raise ValueError(f"unknown method {method!r}")
    params = ModelParams(0.5, coef.beta0c, coef.beta1)
    return FittedModel(method, params, 0.0, {"converged": True})


def cell_seed(seed: int, cell_index: int, fold: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(cell_index), int(fold)])


def _tie_key(method: str, cell: dict):
    # smaller lambda first, then larger gamma / lambda_e
    return (cell.get("lambda", 0.0), -cell.get("gamma", 0.0), -cell.get("lambda_e", 0.0))


@dataclass
class CvReport:
    method: str
    folds: int
    seed: int
    cells: list
    losses: list  # per cell: list of per-fold deviances
    mean_losses: list
    selected: int
    tie_trace: list
    schema: str = CV_SCHEMA

    @property
    def selected_cell(self) -> dict:
        return self.cells[self.selected]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def select_cell(method: str, cells: list, mean_losses, rtol: float = 1e-12) -> tuple[int, list]:
    """Index of the best cell after tie rules, and the list of tied indices."""
    losses = np.asarray(mean_losses, float)
    finite = np.isfinite(losses)
    if not finite.any():
        raise RuntimeError("every CV cell failed")
    best = losses[finite].min()
    tied = [i for i in range(len(cells))
            if finite[i] and losses[i] <= best + rtol * max(1.0, abs(best))]
    chosen = min(tied, key=lambda i: _tie_key(method, cells[i]))
    return chosen, tied


def cross_validate(data: SemiDataset, method: str, grid: CvGrid, seed: int,
                   em_cfg: EmConfig = EmConfig()) -> CvReport:
    """Stratified k-fold CV on the labeled rows; all unlabeled rows stay in training.

    The loss is the binomial deviance on the held-out fold.  SLR fits are
    scored with intercept shift log(n2_cv/n1_cv) and prior center fixed at the
    training-fold labeled proportion.
    """
    data.require_labeled()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    k = grid.folds
    f1, f2 = stratified_folds(data.n1, data.n2, k, seed)
    cells = grid.cells(method)
    losses = []
    for ci, cell in enumerate(cells):
        fold_losses = []
        for f in range(k):
            train = SemiDataset(data.x1[f1 != f], data.x2[f2 != f], data.x3)
            xt = np.vstack([data.x1[f1 == f], data.x2[f2 == f]])
            yt = np.concatenate([np.zeros(np.sum(f1 == f)), np.ones(np.sum(f2 == f))])
            rng_seed = int(cell_seed(seed, ci, f).generate_state(1)[0])
            try:
                model = fit_method(method, train, cell, seed=rng_seed, em_cfg=em_cfg)
                fold_losses.append(binomial_deviance(model.scores(xt), yt))
            except (RuntimeError, FloatingPointError, np.linalg.LinAlgError):
                fold_losses.append(float("inf"))
        losses.append(fold_losses)
    means = [float(np.mean(l)) for l in losses]
    sel, tied = select_cell(method, cells, means)
    return CvReport(method, k, int(seed), cells, losses, means, sel, tied)


def within_one_percent(means: dict) -> dict:
    """Methods whose mean accuracy is within 1 percentage point of the best."""
    best = max(means.values())
    return {m: bool(v >= best - 0.01) for m, v in means.items()}

"""Synthetic data from exponential tilt mixture models and Monte Carlo checks."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import fit_ridge_logistic
from .data import LabeledSample, PenaltyConfig, SemiDataset
from .em import EmConfig, fit_dslr, fit_pslr
from .newton import ConvergenceError

MC_SCHEMA = "etmslr.mc/1"
MAX_EXCLUDED_FRACTION = 0.05


@dataclass(frozen=True)
class EtmSpec:
    """Gaussian G0 = N(mu0, sigma) tilted by exp(beta0* + beta1*'x).

    The tilted distribution is N(mu0 + sigma beta1*, sigma); beta0* is the
    normalizing intercept.
    """

    mu0: np.ndarray
    sigma: np.ndarray
    beta1_star: np.ndarray
    rho_star: float
    sizes: tuple = (250, 250, 500)

    def __post_init__(self):
        mu0 = np.atleast_1d(np.asarray(self.mu0, float))
        sigma = np.atleast_2d(np.asarray(self.sigma, float))
        b1 = np.atleast_1d(np.asarray(self.beta1_star, float))
        p = mu0.size
        if sigma.shape != (p, p) or b1.size != p:
            raise ValueError("mu0, sigma and beta1_star disagree in dimension")
        if not np.allclose(sigma, sigma.T):
            raise ValueError("sigma must be symmetric")
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise ValueError("sigma must be positive definite") from None
        if not 0 < self.rho_star < 1:
            raise ValueError("rho_star must lie in (0, 1)")
        if len(self.sizes) != 3 or min(self.sizes) < 0:
            raise ValueError("sizes must be three nonnegative counts")
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "beta1_star", b1)
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    @property
    def p(self) -> int:
        return self.mu0.size

    @property
    def beta0_star(self) -> float:
        b = self.beta1_star
        return float(-(b @ self.mu0 + 0.5 * b @ self.sigma @ b))

    @property
    def mu1(self) -> np.ndarray:
        return self.mu0 + self.sigma @ self.beta1_star

    def scaled(self, s: int) -> "EtmSpec":
        return EtmSpec(self.mu0, self.sigma, self.beta1_star, self.rho_star,
                       tuple(s * n for n in self.sizes))

    def to_dict(self) -> dict:
        return {"mu0": self.mu0.tolist(), "sigma": self.sigma.tolist(),
                "beta1_star": self.beta1_star.tolist(), "rho_star": self.rho_star,
                "sizes": list(self.sizes), "beta0_star": self.beta0_star}


def sample_etm(spec: EtmSpec, seed, return_origin: bool = False):
    """Draw (S1, S2, S3); S3 rows come from G1 with probability rho*.

    With ``return_origin`` the 0/1 G1-membership of the S3 rows is returned too.
    """
    rng = np.random.default_rng(seed)
    n1, n2, n3 = spec.sizes
    L = np.linalg.cholesky(spec.sigma)

    def draw(mu, n):
        return mu + rng.standard_normal((n, spec.p)) @ L.T

    x1 = draw(spec.mu0, n1)
    x2 = draw(spec.mu1, n2)
    origin = (rng.random(n3) < spec.rho_star).astype(int)
    x3 = np.where(origin[:, None] == 1, draw(spec.mu1, n3), draw(spec.mu0, n3))
    data = SemiDataset(x1, x2, x3)
    return (data, origin) if return_origin else data


ILLUSTRATION_G0 = (np.array([-6.0, -6.0]), np.array([5.0, 15.0]))
ILLUSTRATION_G1 = (np.array([6.0, 6.0]), np.array([5.0, 10.0]))


def _illustration_draw(rng, comp, n):
    mu, sd = comp
    return mu + sd * rng.standard_normal((n, 2))


def _illustration_labeled(rng, sizes, scale) -> LabeledSample:
    t0 = _illustration_draw(rng, ILLUSTRATION_G0, sizes[0]) / scale
    t1 = _illustration_draw(rng, ILLUSTRATION_G1, sizes[1]) / scale
    return LabeledSample(np.vstack([t0, t1]),
                         np.concatenate([np.zeros(sizes[0], int), np.ones(sizes[1], int)]))


def sample_gaussian_illustration(seed, scaled: bool = True, test_sizes=(2000, 2000),
                                 return_scale: bool = False):
    """Bivariate Gaussian example with mismatched class proportions.

    Labeled: 20 from G0 = N((-6,-6), diag(5^2, 15^2)) and 80 from
    G1 = N((6,6), diag(5^2, 10^2)); unlabeled: 500 from each.  With ``scaled``
    every feature is divided by its root mean square over the training rows.
    Returns ``(train, test)`` where ``test`` is an independent labeled sample
    of ``test_sizes`` (negatives, positives) put on the same scale; with
    ``return_scale`` the per-feature divisor is returned as a third item.
    """
    rng = np.random.default_rng(seed)
    x1 = _illustration_draw(rng, ILLUSTRATION_G0, 20)
    x2 = _illustration_draw(rng, ILLUSTRATION_G1, 80)
    x3 = np.vstack([_illustration_draw(rng, ILLUSTRATION_G0, 500),
                    _illustration_draw(rng, ILLUSTRATION_G1, 500)])
    x3 = x3[rng.permutation(len(x3))]
    scale = np.sqrt(np.mean(np.vstack([x1, x2, x3]) ** 2, axis=0)) if scaled else np.ones(2)
    train = SemiDataset(x1 / scale, x2 / scale, x3 / scale)
    test = _illustration_labeled(rng, test_sizes, scale)
    return (train, test, scale) if return_scale else (train, test)


def illustration_oracle_sample(seed, sizes, scale) -> LabeledSample:
    """Independent labeled draw of ``sizes`` (negatives, positives) divided by ``scale``."""
    return _illustration_labeled(np.random.default_rng(seed), sizes, np.asarray(scale, float))


@dataclass
class McReport:
    kind: str
    reps: int
    seed: int
    spec: dict
    estimates: dict  # label -> list of per-replication estimate vectors
    truth: list
    summary: dict = field(default_factory=dict)
    excluded: dict = field(default_factory=dict)
    schema: str = MC_SCHEMA

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "replication", "component", "estimate"])
            for label, rows in self.estimates.items():
                for r, vec in enumerate(rows):
                    for c, v in enumerate(vec):
                        w.writerow([label, r, c, repr(float(v))])


def _rep_seeds(seed, reps):
    return np.random.SeedSequence(seed).spawn(reps)


def _check_exclusions(excluded: dict, reps: int):
    for label, n in excluded.items():
        if n > MAX_EXCLUDED_FRACTION * reps:
            raise ConvergenceError(
                f"{label}: {n} of {reps} replications failed to converge (limit 5%)"
            )


def mc_consistency(spec: EtmSpec, scales=(1, 4, 16), reps: int = 100, seed: int = 0,
                   methods=("pslr", "dslr"), cfg: EmConfig = EmConfig()) -> McReport:
    """Fit unpenalized pSLR/dSLR at growing sample sizes s * (n1, n2, n3).

    Estimates are stored as (rho, beta0, beta1...).  The summary gives, per
    method and scale, the mean absolute error of each component and the mean
    and Monte Carlo standard error of rho-hat.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    fitters = {"pslr": fit_pslr, "dslr": fit_dslr}
    truth = np.concatenate([[spec.rho_star, spec.beta0_star], spec.beta1_star])
    estimates, excluded, summary = {}, {}, {}
    for s in scales:
        sub = spec.scaled(int(s))
        seeds = _rep_seeds([seed, int(s)], reps)
        rows = {m: [] for m in methods}
        for ss in seeds:
            data = sample_etm(sub, ss)
            pen = PenaltyConfig(0.0, 0.0, data.rho_labeled)
            for m in methods:
                try:
                    res = fitters[m](data, pen, cfg=cfg)
                except (ConvergenceError, FloatingPointError):
                    res = None
                if res is None or not res.converged:
                    excluded[f"{m}@{s}"] = excluded.get(f"{m}@{s}", 0) + 1
                    continue
                rows[m].append(np.concatenate([[res.params.rho], res.params.beta]).tolist())
        for m in methods:
            label = f"{m}@{s}"
            est = np.array(rows[m])
            estimates[label] = rows[m]
            rho_hat = est[:, 0]
            summary[label] = {
                "scale": int(s),
                "method": m,
                "sizes": list(sub.sizes),
                "n_ok": len(rows[m]),
                "mae": np.mean(np.abs(est - truth), axis=0).tolist(),
                "mean": est.mean(axis=0).tolist(),
                "rho_mean": float(rho_hat.mean()),
                "rho_se": float(rho_hat.std(ddof=1) / math.sqrt(len(rho_hat))) if len(rho_hat) > 1 else float("nan"),
            }
    _check_exclusions(excluded, reps)
    return McReport("consistency", reps, int(seed), spec.to_dict(), estimates,
                    truth.tolist(), summary, excluded)


def mc_efficiency(spec: EtmSpec, reps: int = 500, seed: int = 0,
                  cfg: EmConfig = EmConfig()) -> McReport:
    """Compare the spread of unpenalized pSLR beta-hat with the labeled-only MLE.

    The labeled-only estimate is mapped to the tilt scale by subtracting
    log(n2/n1) from its intercept.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    truth = np.concatenate([[spec.beta0_star], spec.beta1_star])
    est_slr, est_lab = [], []
    excluded = {}
    for ss in _rep_seeds(seed, reps):
        data = sample_etm(spec, ss)
        try:
            res = fit_pslr(data, PenaltyConfig(0.0, 0.0, data.rho_labeled), cfg=cfg)
            lab = fit_ridge_logistic(data.labeled(), 0.0)
        except (ConvergenceError, FloatingPointError):
            excluded["pair"] = excluded.get("pair", 0) + 1
            continue
        if not res.converged:
            excluded["pair"] = excluded.get("pair", 0) + 1
            continue
        est_slr.append(res.params.beta.tolist())
        b = lab.beta
        b[0] -= math.log(data.n2 / data.n1)
        est_lab.append(b.tolist())
    _check_exclusions(excluded, reps)
    a, b = np.array(est_slr), np.array(est_lab)
    cov_slr = np.atleast_2d(np.cov(a, rowvar=False))
    cov_lab = np.atleast_2d(np.cov(b, rowvar=False))
    eig = np.linalg.eigvalsh(cov_lab - cov_slr)
    summary = {
        "n_ok": len(a),
        "cov_slr": cov_slr.tolist(),
        "cov_labeled": cov_lab.tolist(),
        "trace_slr": float(np.trace(cov_slr)),
        "trace_labeled": float(np.trace(cov_lab)),
        "eig_diff": eig.tolist(),
        "mean_slr": a.mean(axis=0).tolist(),
        "mean_labeled": b.mean(axis=0).tolist(),
    }
    return McReport("efficiency", reps, int(seed), spec.to_dict(),
                    {"slr": est_slr, "labeled": est_lab}, truth.tolist(), summary, excluded)


def line_angle(b1, b2) -> float:
    """Angle in radians between two decision-line normals (orientation-aware)."""
    b1, b2 = np.asarray(b1, float), np.asarray(b2, float)
    c = b1 @ b2 / (np.linalg.norm(b1) * np.linalg.norm(b2))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))

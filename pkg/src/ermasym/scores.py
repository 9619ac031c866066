"""Asymptotic test-score law and its Gaussian baseline.

The predicted score law is a Gaussian mixture: one component per sampled
test point, centered at mu_star^T x_j with common standard deviation
alpha_star. The Gaussian baseline collapses the mixture to a single normal
with the same first two moments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm


class DegenerateLawError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreLaw:
    """Equal-weight Gaussian mixture with common scale."""

    centers: np.ndarray
    scale: float
    labels: Optional[np.ndarray] = None  # per-center class label, optional

    def __post_init__(self):
        object.__setattr__(self, "centers", np.atleast_1d(np.asarray(self.centers, float)))
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")

    @property
    def mean(self) -> float:
        return float(self.centers.mean())

    @property
    def variance(self) -> float:
        return float(self.centers.var() + self.scale**2)

    def class_law(self, label) -> "ScoreLaw":
        if self.labels is None:
            raise ValueError("law carries no class labels")
        mask = self.labels == label
        if not mask.any():
            raise ValueError(f"no centers with label {label}")
        return ScoreLaw(centers=self.centers[mask], scale=self.scale)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        flat = np.atleast_1d(t).ravel()
        out = np.empty(flat.size)
        # block over query points to keep the (queries x centers) buffer small
        block = max(1, int(4e6) // max(self.centers.size, 1))
        if self.scale == 0.0:
            srt = np.sort(self.centers)
            out = np.searchsorted(srt, flat, side="right") / srt.size
        else:
            for i in range(0, flat.size, block):
                sl = flat[i:i + block]
                out[i:i + sl.size] = np.mean(
                    norm.cdf((sl[:, None] - self.centers[None, :]) / self.scale),
                    axis=1,
                )
        out = out.reshape(np.shape(t)) if t.ndim else out[0]
        return out if np.ndim(out) else float(out)

    def pdf_grid(self, grid):
        if self.scale == 0.0:
            raise DegenerateLawError("pdf undefined for a point-mass mixture")
        grid = np.asarray(grid, dtype=float)
        out = np.empty(grid.size)
        block = max(1, int(4e6) // max(self.centers.size, 1))
        for i in range(0, grid.size, block):
            sl = grid[i:i + block]
            z = (sl[:, None] - self.centers[None, :]) / self.scale
            out[i:i + sl.size] = norm.pdf(z).mean(axis=1) / self.scale
        return out

    def sample(self, m: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        c = rng.choice(self.centers, size=m, replace=True)
        return c + self.scale * rng.standard_normal(m)


def predict(model, sol, m: int, seed: int) -> ScoreLaw:
    """Mixture law of mu_star^T x + alpha_star z over m fresh test points."""
    if m < 1:
        raise ValueError("m must be >= 1")
    X, y = model.sample(m, seed)
    return ScoreLaw(
        centers=sol.mu_star @ X, scale=float(sol.alpha_star), labels=np.asarray(y)
    )


def gaussian_baseline(moments, sol) -> ScoreLaw:
    """Single Gaussian N(mu^T E[x], mu^T C_x mu + alpha^2) score surrogate."""
    mu_x, C_x = moments
    mu = np.asarray(sol.mu_star, float)
    var = float(mu @ C_x @ mu) + float(sol.alpha_star) ** 2
    return ScoreLaw(centers=np.array([float(mu @ mu_x)]), scale=float(np.sqrt(var)))


def classification_error(law_pair, priors, threshold: float) -> float:
    """gamma0 P(score > tau | class 0) + gamma1 P(score <= tau | class 1)."""
    law0, law1 = law_pair
    g0, g1 = priors
    return float(g0 * (1.0 - law0.cdf(threshold)) + g1 * law1.cdf(threshold))


def ks_distance(law: ScoreLaw, samples) -> float:
    """sup_t |empirical CDF - law CDF| over the sample points."""
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size == 0:
        raise ValueError("samples must be nonempty")
    cdf = law.cdf(s)
    n = s.size
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def confinement_residual(mu_star, F_basis, a) -> float:
    """||P_perp mu|| / ||mu|| for the complement of span(F_basis, a)."""
    mu = np.asarray(mu_star, float)
    nrm = np.linalg.norm(mu)
    if nrm == 0.0:
        return 0.0
    cols = [np.asarray(v, float) for v in F_basis]
    a = np.asarray(a, float)
    if np.linalg.norm(a) > 0:
        cols.append(a)
    B = np.column_stack(cols)
    Qb, _ = np.linalg.qr(B)
    perp = mu - Qb @ (Qb.T @ mu)
    return float(np.linalg.norm(perp) / nrm)

"""Generative data models: samplers, analytic moments, CSV ingestion.

All samplers are deterministic given a 64-bit seed; independent sub-streams
(for replications or panels) are derived via ``numpy.random.SeedSequence``
spawning, so parallel replications never share a stream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import null_space


class CsvFormatError(ValueError):
    pass


@dataclass(frozen=True)
class BimodalTag:
    """Standardized symmetric two-mode coordinate law.

    Raw law is 0.5 N(-c, s^2) + 0.5 N(+c, s^2); draws are divided by
    sqrt(c^2 + s^2) so the standardized coordinate has mean 0, variance 1.
    """

    c: float = 3.0
    s: float = 0.5

    @property
    def raw_std(self) -> float:
        return float(np.sqrt(self.c**2 + self.s**2))

    def sample_raw(self, size, rng) -> np.ndarray:
        signs = rng.integers(0, 2, size=size) * 2.0 - 1.0
        return signs * self.c + self.s * rng.standard_normal(size)

    def sample_standardized(self, size, rng) -> np.ndarray:
        return self.sample_raw(size, rng) / self.raw_std


CoordLaw = Union[str, BimodalTag]  # "gaussian" or a BimodalTag


def _sample_factors(laws: Optional[Sequence[CoordLaw]], p: int, n: int, rng):
    """(p, n) matrix of independent zero-mean unit-variance factors."""
    if laws is None:
        return rng.standard_normal((p, n))
    w = np.empty((p, n))
    for i, law in enumerate(laws):
        if isinstance(law, BimodalTag):
            w[i] = law.sample_standardized(n, rng)
        else:
            w[i] = rng.standard_normal(n)
    return w


def _spd_sqrt(C: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(C)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


@dataclass(frozen=True)
class GaussianLinear:
    """x ~ N(mu_x, C_x), y = theta_star^T x + eps with eps ~ N(0, sigma_eps^2)."""

    mu_x: np.ndarray
    C_x: np.ndarray
    theta_star: np.ndarray
    sigma_eps: float

    label_space = "real"

    def __post_init__(self):
        object.__setattr__(self, "mu_x", np.asarray(self.mu_x, float))
        object.__setattr__(self, "C_x", np.asarray(self.C_x, float))
        object.__setattr__(self, "theta_star", np.asarray(self.theta_star, float))

    @property
    def p(self) -> int:
        return self.mu_x.size

    def moments(self):
        return self.mu_x, self.C_x

    def sample_x(self, n: int, rng) -> np.ndarray:
        L = np.linalg.cholesky(self.C_x)
        return self.mu_x[:, None] + L @ rng.standard_normal((self.p, n))

    def sample(self, n: int, seed: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        X = self.sample_x(n, rng)
        eps = self.sigma_eps * rng.standard_normal(n)
        return X, self.theta_star @ X + eps


@dataclass(frozen=True)
class BimodalLinear:
    """GaussianLinear with one coordinate replaced by an independent bimodal law."""

    mu_x: np.ndarray
    C_x: np.ndarray
    theta_star: np.ndarray
    sigma_eps: float
    coord: int = 1
    c: float = 3.0
    s: float = 0.5

    label_space = "real"

    def __post_init__(self):
        object.__setattr__(self, "mu_x", np.asarray(self.mu_x, float))
        object.__setattr__(self, "C_x", np.asarray(self.C_x, float))
        object.__setattr__(self, "theta_star", np.asarray(self.theta_star, float))

    @property
    def p(self) -> int:
        return self.mu_x.size

    @property
    def tag(self) -> BimodalTag:
        return BimodalTag(self.c, self.s)

    def moments(self):
        k = self.coord
        mu = self.mu_x.copy()
        mu[k] = 0.0
        C = self.C_x.copy()
        C[k, :] = 0.0
        C[:, k] = 0.0
        C[k, k] = self.c**2 + self.s**2
        return mu, C

    def sample_x(self, n: int, rng) -> np.ndarray:
        k = self.coord
        C = self.C_x.copy()
        C[k, :] = 0.0
        C[:, k] = 0.0
        C[k, k] = 1.0
        mu = self.mu_x.copy()
        mu[k] = 0.0
        L = np.linalg.cholesky(C)
        X = mu[:, None] + L @ rng.standard_normal((self.p, n))
        X[k] = self.tag.sample_raw(n, rng)
        return X

    def sample(self, n: int, seed: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        X = self.sample_x(n, rng)
        eps = self.sigma_eps * rng.standard_normal(n)
        return X, self.theta_star @ X + eps


@dataclass(frozen=True)
class MixtureClasses:
    """Finite mixture with per-class moments and per-coordinate factor laws.

    Class ell draws x = mean_ell + C_ell^{1/2} w with w independent
    standardized factors (Gaussian by default, bimodal where tagged).
    Labels are {-1, +1} for two classes, {1..k} otherwise.
    """

    priors: np.ndarray
    means: np.ndarray  # (k, p)
    covs: np.ndarray  # (k, p, p)
    coord_laws: Optional[Sequence[CoordLaw]] = None

    label_space = "binary_pm1"

    def __post_init__(self):
        object.__setattr__(self, "priors", np.asarray(self.priors, float))
        object.__setattr__(self, "means", np.asarray(self.means, float))
        object.__setattr__(self, "covs", np.asarray(self.covs, float))
        if not np.isclose(self.priors.sum(), 1.0):
            raise ValueError("class priors must sum to 1")

    @property
    def k(self) -> int:
        return self.priors.size

    @property
    def p(self) -> int:
        return self.means.shape[1]

    @property
    def class_labels(self) -> np.ndarray:
        if self.k == 2:
            return np.array([-1.0, 1.0])
        return np.arange(1, self.k + 1, dtype=float)

    def class_moments(self, ell: int):
        return self.means[ell], self.covs[ell]

    def moments(self):
        mu = self.priors @ self.means
        C = -np.outer(mu, mu)
        for ell in range(self.k):
            C += self.priors[ell] * (
                self.covs[ell] + np.outer(self.means[ell], self.means[ell])
            )
        return mu, C

    def sample_class(self, ell: int, n: int, rng) -> np.ndarray:
        S = _spd_sqrt(self.covs[ell])
        w = _sample_factors(self.coord_laws, self.p, n, rng)
        return self.means[ell][:, None] + S @ w

    def sample(self, n: int, seed: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        idx = rng.choice(self.k, size=n, p=self.priors)
        X = np.empty((self.p, n))
        for ell in range(self.k):
            mask = idx == ell
            if mask.any():
                X[:, mask] = self.sample_class(ell, int(mask.sum()), rng)
        return X, self.class_labels[idx]


@dataclass(frozen=True)
class LFMM:
    """Linear factor mixture: x = sum_i (y s_i + e_i) v_i with s_i = 0 for i > q.

    ``directions`` holds the q orthonormal informative directions; the basis
    is completed to a full orthonormal frame and the remaining factors carry
    pure noise. Factors e_i are centered with unit variance (Gaussian unless
    tagged otherwise). Labels are +-1 with P(y = +1) = prior_plus.
    """

    directions: np.ndarray  # (p, q), orthonormal columns
    signal: np.ndarray  # (q,)
    prior_plus: float = 0.5
    noise_laws: Optional[Sequence[CoordLaw]] = None  # per factor, length p

    label_space = "binary_pm1"

    def __post_init__(self):
        V = np.asarray(self.directions, float)
        s = np.asarray(self.signal, float)
        if not np.allclose(V.T @ V, np.eye(V.shape[1]), atol=1e-10):
            raise ValueError("informative directions must be orthonormal")
        object.__setattr__(self, "directions", V)
        object.__setattr__(self, "signal", s)
        comp = null_space(V.T)
        object.__setattr__(self, "_basis", np.hstack([V, comp]))

    @property
    def p(self) -> int:
        return self.directions.shape[0]

    @property
    def q(self) -> int:
        return self.directions.shape[1]

    @property
    def signal_mean(self) -> np.ndarray:
        """Conditional mean of x given y = +1."""
        return self.directions @ self.signal

    @property
    def class_labels(self) -> np.ndarray:
        return np.array([-1.0, 1.0])

    @property
    def priors(self) -> np.ndarray:
        return np.array([1.0 - self.prior_plus, self.prior_plus])

    def class_moments(self, ell: int):
        m = self.signal_mean
        return self.class_labels[ell] * m, np.eye(self.p)

    def moments(self):
        m = self.signal_mean
        ybar = 2.0 * self.prior_plus - 1.0
        C = np.eye(self.p) + (1.0 - ybar**2) * np.outer(m, m)
        return ybar * m, C

    def sample_class(self, ell: int, n: int, rng) -> np.ndarray:
        V = self._basis
        e = _sample_factors(self.noise_laws, self.p, n, rng)
        coeffs = e
        coeffs[: self.q] += self.class_labels[ell] * self.signal[:, None]
        return V @ coeffs

    def sample(self, n: int, seed: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        y = np.where(rng.random(n) < self.prior_plus, 1.0, -1.0)
        V = self._basis
        e = _sample_factors(self.noise_laws, self.p, n, rng)
        e[: self.q] += y[None, :] * self.signal[:, None]
        return V @ e, y


@dataclass(frozen=True)
class Empirical:
    """Rows loaded from disk; sampling draws without replacement."""

    X: np.ndarray  # (p, N)
    y: np.ndarray  # (N,)
    label_mapping: Optional[dict] = None

    @property
    def p(self) -> int:
        return self.X.shape[0]

    @property
    def n_rows(self) -> int:
        return self.X.shape[1]

    @property
    def label_space(self) -> str:
        vals = np.unique(self.y)
        if vals.size <= 2 and np.all(np.isin(vals, (-1.0, 1.0))):
            return "binary_pm1"
        return "real"

    def moments(self):
        mu = self.X.mean(axis=1)
        C = np.cov(self.X)  # unbiased
        return mu, np.atleast_2d(C)

    def sample(self, n: int, seed: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        if n > self.n_rows:
            raise ValueError(
                f"requested {n} samples but only {self.n_rows} rows stored"
            )
        rng = np.random.default_rng(seed)
        idx = rng.permutation(self.n_rows)[:n]
        return self.X[:, idx].copy(), self.y[idx].copy()


def load_csv(path) -> Empirical:
    """Load an Empirical model from a "x1,...,xp,y" header CSV file."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header[-1] != "y" or not all(
            h == f"x{i + 1}" for i, h in enumerate(header[:-1])
        ):
            raise CsvFormatError(f"{path}: header must be x1,...,xp,y")
        p = len(header) - 1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p + 1:
                raise CsvFormatError(
                    f"{path}: line {lineno}: expected {p + 1} cells, got {len(row)}"
                )
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise CsvFormatError(
                    f"{path}: line {lineno}: non-numeric cell"
                ) from None
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    X = arr[:, :p].T
    y = arr[:, p]
    mapping = None
    uniq = set(np.unique(y).tolist())
    if uniq == {0.0, 1.0}:
        mapping = {0.0: -1.0, 1.0: 1.0}
        y = np.where(y == 0.0, -1.0, 1.0)
    return Empirical(X=X, y=y, label_mapping=mapping)


def projection_samples(model, u, m: int, seed: int):
    """m i.i.d. draws of (u^T x, y)."""
    u = np.asarray(u, dtype=float)
    if u.size != model.p:
        raise ValueError(f"direction has length {u.size}, model dimension {model.p}")
    X, y = model.sample(m, seed)
    return u @ X, y

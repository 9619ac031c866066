"""Convex C^2 penalties with gradients, Hessian-at-zero and quadratic surrogates.

Every regularizer exposes ``value``, ``grad``, ``hess`` (full analytic
Hessian, used by the Newton ERM solver), ``hess0`` (the Hessian at the
origin, dense) and ``strong_convexity`` (a lower bound on the smallest
Hessian eigenvalue over all of R^p).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DimensionMismatchError(ValueError):
    pass


def _check_dim(theta: np.ndarray, dim: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (dim,):
        raise DimensionMismatchError(
            f"expected vector of length {dim}, got shape {theta.shape}"
        )
    return theta


@dataclass(frozen=True)
class Quadratic:
    """rho(theta) = a^T theta + theta^T H theta / 2 with H symmetric PD."""

    a: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        H = np.asarray(self.H, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "H", H)
        if H.shape != (a.size, a.size):
            raise DimensionMismatchError("H must be square and match a")
        if not np.allclose(H, H.T):
            raise ValueError("H must be symmetric")

    @property
    def dim(self) -> int:
        return self.a.size

    def value(self, theta) -> float:
        theta = _check_dim(theta, self.dim)
        return float(self.a @ theta + 0.5 * theta @ self.H @ theta)

    def grad(self, theta) -> np.ndarray:
        theta = _check_dim(theta, self.dim)
        return self.a + self.H @ theta

    def hess(self, theta) -> np.ndarray:
        _check_dim(theta, self.dim)
        return self.H

    def hess0(self) -> np.ndarray:
        return self.H

    @property
    def strong_convexity(self) -> float:
        return float(np.linalg.eigvalsh(self.H)[0])


@dataclass(frozen=True)
class Ridge:
    """rho(theta) = lam * ||theta||^2, so the Hessian is 2 lam I."""

    lam: float
    dim: int

    def value(self, theta) -> float:
        theta = _check_dim(theta, self.dim)
        return float(self.lam * theta @ theta)

    def grad(self, theta) -> np.ndarray:
        theta = _check_dim(theta, self.dim)
        return 2.0 * self.lam * theta

    def hess(self, theta) -> np.ndarray:
        _check_dim(theta, self.dim)
        return 2.0 * self.lam * np.eye(self.dim)

    def hess0(self) -> np.ndarray:
        return 2.0 * self.lam * np.eye(self.dim)

    @property
    def strong_convexity(self) -> float:
        return 2.0 * self.lam


@dataclass(frozen=True)
class ShiftedRidge:
    """rho(theta) = a^T theta + lam * ||theta||^2."""

    a: np.ndarray
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))

    @property
    def dim(self) -> int:
        return self.a.size

    def value(self, theta) -> float:
        theta = _check_dim(theta, self.dim)
        return float(self.a @ theta + self.lam * theta @ theta)

    def grad(self, theta) -> np.ndarray:
        theta = _check_dim(theta, self.dim)
        return self.a + 2.0 * self.lam * theta

    def hess(self, theta) -> np.ndarray:
        _check_dim(theta, self.dim)
        return 2.0 * self.lam * np.eye(self.dim)

    def hess0(self) -> np.ndarray:
        return 2.0 * self.lam * np.eye(self.dim)

    @property
    def strong_convexity(self) -> float:
        return 2.0 * self.lam


@dataclass(frozen=True)
class SmoothSeparable:
    """Shifted ridge plus a separable pseudo-Huber bump.

    rho(theta) = base(theta) + eps * sum_i (sqrt(1 + theta_i^2) - 1).
    The bump is C-infinity with third derivative bounded by ~2, so the
    penalty stays within the smooth-regularizer class while being genuinely
    non-quadratic.
    """

    base: ShiftedRidge
    eps: float

    @property
    def dim(self) -> int:
        return self.base.dim

    def value(self, theta) -> float:
        theta = _check_dim(theta, self.dim)
        bump = np.sum(np.sqrt(1.0 + theta**2) - 1.0)
        return self.base.value(theta) + self.eps * float(bump)

    def grad(self, theta) -> np.ndarray:
        theta = _check_dim(theta, self.dim)
        return self.base.grad(theta) + self.eps * theta / np.sqrt(1.0 + theta**2)

    def hess(self, theta) -> np.ndarray:
        theta = _check_dim(theta, self.dim)
        d = self.eps * (1.0 + theta**2) ** (-1.5)
        return self.base.hess(theta) + np.diag(d)

    def hess0(self) -> np.ndarray:
        return self.base.hess0() + self.eps * np.eye(self.dim)

    @property
    def strong_convexity(self) -> float:
        # bump curvature is nonnegative, the ridge part carries the floor
        return self.base.strong_convexity


def reg_value(reg, theta) -> float:
    return reg.value(theta)


def reg_grad(reg, theta) -> np.ndarray:
    return reg.grad(theta)


def reg_hess0(reg) -> np.ndarray:
    return reg.hess0()


def quadratic_surrogate(reg, mu) -> Quadratic:
    """Quadratic penalty matching grad(reg) at mu and hess(reg) at zero."""
    mu = _check_dim(mu, reg.dim)
    H = reg.hess0()
    a = reg.grad(mu) - H @ mu
    return Quadratic(a=a, H=H)


def as_quadratic(reg) -> Quadratic:
    """Exact quadratic form of an already-quadratic penalty."""
    if isinstance(reg, Quadratic):
        return reg
    if isinstance(reg, (Ridge, ShiftedRidge)):
        return quadratic_surrogate(reg, np.zeros(reg.dim))
    raise TypeError(f"{type(reg).__name__} is not quadratic; build a surrogate")

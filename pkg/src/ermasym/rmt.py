"""Random-matrix deterministic equivalents.

Resolvent Q(nu) = (nu C_x + H)^{-1}, the trace functionals kappa(nu) and
A(nu) with 1/n normalization, the ridge self-consistent nu equation, and
the second-order equivalent Q2(B) for products R B R of empirical
resolvents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

NU_RESIDUAL_TOL = 1e-12


class ValidityBoundaryError(ValueError):
    """Raised when 1 - nu^2 A(nu) <= 0, outside the theory's validity region."""


@dataclass(frozen=True)
class ResolventContext:
    C_x: np.ndarray
    H: np.ndarray
    n: int

    def __post_init__(self):
        C = np.asarray(self.C_x, float)
        H = np.asarray(self.H, float)
        object.__setattr__(self, "C_x", C)
        object.__setattr__(self, "H", H)
        if C.shape != H.shape:
            raise ValueError("C_x and H must have matching shapes")
        if not (np.allclose(C, C.T) and np.allclose(H, H.T)):
            raise ValueError("C_x and H must be symmetric")

    @property
    def p(self) -> int:
        return self.C_x.shape[0]


def resolvent(ctx: ResolventContext, nu: float) -> np.ndarray:
    """Q(nu) = (nu C_x + H)^{-1} via a Cholesky factorization."""
    M = nu * ctx.C_x + ctx.H
    try:
        c, low = cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise ValueError("nu C_x + H is not positive definite") from exc
    return cho_solve((c, low), np.eye(ctx.p))


def kappa_of_nu(ctx: ResolventContext, nu: float) -> float:
    """(1/n) tr(C_x Q(nu))."""
    return float(np.trace(ctx.C_x @ resolvent(ctx, nu)) / ctx.n)


def a_of_nu(ctx: ResolventContext, nu: float) -> float:
    """(1/n) tr(C_x Q(nu) C_x Q(nu))."""
    CQ = ctx.C_x @ resolvent(ctx, nu)
    return float(np.sum(CQ * CQ.T) / ctx.n)


def solve_nu_ridge(ctx: ResolventContext, tol: float = NU_RESIDUAL_TOL) -> float:
    """Unique root of nu = 1 / (1 + kappa(nu)) on (0, 1].

    Bisection on g(nu) = nu (1 + kappa(nu)) - 1, which is strictly
    increasing on (0, 1] and brackets the root.
    """
    if ctx.p == 0:
        return 1.0
    lo, hi = 1e-14, 1.0
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        g = mid * (1.0 + kappa_of_nu(ctx, mid)) - 1.0
        if g < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    nu = 0.5 * (lo + hi)
    if abs(nu - 1.0 / (1.0 + kappa_of_nu(ctx, nu))) > tol:
        raise RuntimeError("ridge nu fixed point did not reach tolerance")
    return nu


def q2_equiv(ctx: ResolventContext, nu: float, B: np.ndarray) -> np.ndarray:
    """Second-order equivalent Q B Q + correction / (1 - nu^2 A(nu)) * Q C_x Q."""
    B = np.asarray(B, float)
    A = a_of_nu(ctx, nu)
    denom = 1.0 - nu**2 * A
    if denom <= 0:
        raise ValidityBoundaryError(
            f"1 - nu^2 A(nu) = {denom:.3e} <= 0: outside validity region"
        )
    Q = resolvent(ctx, nu)
    QBQ = Q @ B @ Q
    coef = (nu**2 / ctx.n) * np.trace(ctx.C_x @ QBQ) / denom
    return QBQ + coef * (Q @ ctx.C_x @ Q)


def empirical_resolvent(X: np.ndarray, lam: float) -> np.ndarray:
    """R = ((1/n) X X^T + lam I)^{-1} for a p x n sample matrix."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    p, n = X.shape
    M = X @ X.T / n + lam * np.eye(p)
    c, low = cho_factor(M)
    return cho_solve((c, low), np.eye(p))

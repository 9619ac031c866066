"""Finite-sample ERM: Newton solver, replication studies, stability probes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from . import losses

GRAD_TOL = 1e-9
ARMIJO_C = 1e-4


@dataclass(frozen=True)
class ErmFit:
    theta_hat: np.ndarray
    objective_value: float
    gradient_norm: float
    newton_iters: int


@dataclass(frozen=True)
class ReplicationSummary:
    R: int
    mu_hat: np.ndarray
    trace_cov: float
    mu_stderr: float  # estimate of E||mu_hat - E theta_hat||
    trace_cov_stderr: float


def _objective(X, Y, loss, reg, theta):
    v = theta @ X
    return float(np.mean(losses.loss_value(loss, Y, v)) + reg.value(theta))


def fit(X, Y, loss, reg, max_iters: int = 100, grad_tol: float = GRAD_TOL) -> ErmFit:
    """Newton's method with Armijo backtracking on the exact Hessian.

    The objective (1/n) sum L_y(x_i^T theta) + rho(theta) is strongly convex
    under the regularizer's curvature floor, so the minimizer is unique.
    Stops when ||grad|| <= grad_tol * max(1, ||grad at 0||).
    """
    p, n = X.shape
    theta = np.zeros(p)
    v = theta @ X
    g = X @ losses.loss_dv(loss, Y, v) / n + reg.grad(theta)
    tol = grad_tol * max(1.0, np.linalg.norm(g))
    obj = _objective(X, Y, loss, reg, theta)
    iters = 0
    while np.linalg.norm(g) > tol and iters < max_iters:
        d2 = losses.loss_dv2(loss, Y, v)
        Hm = (X * d2) @ X.T / n + reg.hess(theta)
        step = np.linalg.solve(Hm, -g)
        t = 1.0
        slope = float(g @ step)
        while True:
            cand = theta + t * step
            obj_cand = _objective(X, Y, loss, reg, cand)
            if obj_cand <= obj + ARMIJO_C * t * slope or t < 1e-12:
                break
            t *= 0.5
        theta = theta + t * step
        v = theta @ X
        g = X @ losses.loss_dv(loss, Y, v) / n + reg.grad(theta)
        obj = _objective(X, Y, loss, reg, theta)
        iters += 1
    return ErmFit(
        theta_hat=theta,
        objective_value=obj,
        gradient_norm=float(np.linalg.norm(g)),
        newton_iters=iters,
    )


def replicate(model, loss, reg, n: int, R: int, master_seed: int) -> ReplicationSummary:
    """R independent trainsets, R fits; mean and covariance-trace estimates.

    Sub-seeds are spawned deterministically from the master seed, so the
    result is independent of any execution order.
    """
    if R < 2:
        raise ValueError("replicate needs R >= 2")
    seeds = np.random.SeedSequence(master_seed).spawn(R)
    thetas = np.empty((R, reg.dim))
    for r in range(R):
        seed = int(seeds[r].generate_state(1)[0])
        X, Y = model.sample(n, seed)
        thetas[r] = fit(X, Y, loss, reg).theta_hat
    mu_hat = thetas.mean(axis=0)
    centered = thetas - mu_hat
    _, C_x = model.moments()
    quad = np.einsum("ri,ij,rj->r", centered, C_x, centered)
    trace_cov = float(quad.sum() / (R - 1))
    trace_stderr = float(np.std(quad * R / (R - 1), ddof=1) / np.sqrt(R))
    mu_stderr = float(np.sqrt(np.trace(np.cov(thetas.T)) / R))
    return ReplicationSummary(
        R=R,
        mu_hat=mu_hat,
        trace_cov=trace_cov,
        mu_stderr=mu_stderr,
        trace_cov_stderr=trace_stderr,
    )


def lipschitz_probe(
    model, loss, reg, n: int, seed: int, m_perturbations: int, scale: float = 1e-3
) -> float:
    """Max observed ||d theta|| sqrt(n) / ||d X||_op under small X perturbations.

    A diagnostic for the 1/sqrt(n) Lipschitz dependence of the minimizer on
    the data; returns 0 when no perturbation moved anything.
    """
    if m_perturbations < 1:
        raise ValueError("need at least one perturbation")
    X, Y = model.sample(n, seed)
    base = fit(X, Y, loss, reg).theta_hat
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    for _ in range(m_perturbations):
        D = scale * rng.standard_normal(X.shape)
        dn = np.linalg.norm(D, ord=2)
        if dn == 0.0:
            continue
        pert = fit(X + D, Y, loss, reg).theta_hat
        worst = max(worst, np.linalg.norm(pert - base) * np.sqrt(n) / dn)
    return worst


def normality_report(thetas: np.ndarray, directions: np.ndarray) -> dict:
    """Shapiro-Wilk p-values of u^T theta_hat across replications.

    Diagnostic only: probes the Gaussianity of the minimizer along fixed
    directions, with no pass/fail contract attached.
    """
    out = {}
    for i, u in enumerate(directions):
        proj = thetas @ u
        stat, pval = stats.shapiro(proj)
        out[f"direction_{i}"] = {"statistic": float(stat), "p_value": float(pval)}
    return out

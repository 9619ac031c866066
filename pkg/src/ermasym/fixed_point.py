"""Deterministic fixed-point system for regularized ERM asymptotics.

Solves the coupled system for (mu, alpha, kappa, nu) by damped Picard
iteration, with expectations over (x, y) taken on a fixed Monte Carlo panel
and expectations over the independent Gaussian z by Gauss-Hermite
quadrature. Includes the ridge/linear-model closed form and the
experimental multiclass variant.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh

from . import losses
from .data import LFMM, BimodalLinear, Empirical, GaussianLinear, MixtureClasses
from .regularizers import Quadratic, as_quadratic, quadratic_surrogate
from .rmt import ResolventContext, ValidityBoundaryError, solve_nu_ridge

_REL_FLOOR = 1e-12


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), _REL_FLOOR)


def gauss_hermite_nodes(order: int):
    """Nodes/weights for E[f(z)] with z ~ N(0, 1); weights sum to 1."""
    t, w = np.polynomial.hermite.hermgauss(order)
    return np.sqrt(2.0) * t, w / np.sqrt(np.pi)


@dataclass(frozen=True)
class ExpectationPanel:
    """Frozen sample panel plus z-quadrature rule (common random numbers)."""

    X: np.ndarray  # (p, M)
    y: np.ndarray  # (M,)
    z: np.ndarray  # (K,)
    w: np.ndarray  # (K,), sums to 1

    @property
    def size(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[0]


def _matched_affine(X: np.ndarray, mu_t: np.ndarray, C_t: np.ndarray) -> np.ndarray:
    """Affine-map columns of X so sample mean/covariance equal the targets."""
    M = X.shape[1]
    m = X.mean(axis=1)
    Xc = X - m[:, None]
    C_hat = Xc @ Xc.T / M
    vals_t, vecs_t = np.linalg.eigh(C_t)
    vals_h, vecs_h = np.linalg.eigh(C_hat)
    if vals_h.min() <= 0:
        raise ValueError("panel too small for exact covariance matching")
    sqrt_t = (vecs_t * np.sqrt(np.clip(vals_t, 0, None))) @ vecs_t.T
    isqrt_h = (vecs_h / np.sqrt(vals_h)) @ vecs_h.T
    return mu_t[:, None] + (sqrt_t @ isqrt_h) @ Xc


def _matched_noise(Xc: np.ndarray, C_t: np.ndarray, eps: np.ndarray, sigma: float):
    """Center eps, remove its sample correlation with Xc, fix its variance."""
    M = eps.size
    eps = eps - eps.mean()
    b = np.linalg.solve(C_t, Xc @ eps / M)
    eps = eps - Xc.T @ b
    if sigma == 0.0:
        return np.zeros_like(eps)
    sd = np.sqrt(np.mean(eps**2))
    return eps * (sigma / sd) if sd > 0 else eps


def _stratified_counts(priors: np.ndarray, M: int) -> np.ndarray:
    counts = np.floor(priors * M).astype(int)
    order = np.argsort(-(priors * M - counts))
    for i in range(M - counts.sum()):
        counts[order[i % priors.size]] += 1
    return counts


def make_panel(
    model,
    M: int,
    K: int = 41,
    seed: int = 0,
    match_moments: bool = True,
) -> ExpectationPanel:
    """Build the expectation panel for a data model.

    With ``match_moments`` (default) the panel is affinely corrected so its
    sample moments coincide exactly with the model's analytic moments
    (per class for classification models, jointly with the label noise for
    regression models). This removes the O(1/sqrt(M)) moment error of the
    raw panel without changing the estimator's consistency.
    """
    z, w = gauss_hermite_nodes(K)
    rng = np.random.default_rng(seed)
    if isinstance(model, (GaussianLinear, BimodalLinear)):
        X = model.sample_x(M, rng)
        eps = model.sigma_eps * rng.standard_normal(M)
        if match_moments:
            mu_t, C_t = model.moments()
            X = _matched_affine(X, mu_t, C_t)
            eps = _matched_noise(X - mu_t[:, None], C_t, eps, model.sigma_eps)
        y = model.theta_star @ X + eps
        return ExpectationPanel(X=X, y=y, z=z, w=w)
    if isinstance(model, (MixtureClasses, LFMM)):
        labels = model.class_labels
        counts = _stratified_counts(model.priors, M)
        blocks, ys = [], []
        for ell, cnt in enumerate(counts):
            Xc = model.sample_class(ell, int(cnt), rng)
            if match_moments:
                mu_t, C_t = model.class_moments(ell)
                Xc = _matched_affine(Xc, mu_t, C_t)
            blocks.append(Xc)
            ys.append(np.full(int(cnt), labels[ell]))
        return ExpectationPanel(
            X=np.hstack(blocks), y=np.concatenate(ys), z=z, w=w
        )
    if isinstance(model, Empirical):
        X, y = model.sample(min(M, model.n_rows), int(rng.integers(2**63)))
        return ExpectationPanel(X=X, y=y, z=z, w=w)
    raise TypeError(f"unsupported model type {type(model).__name__}")


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-8
    max_iters: int = 500
    damping: float = 0.5
    alpha_floor: float = 1e-10
    mu0: Optional[np.ndarray] = None
    alpha0: float = 1.0
    nu0: float = 0.5
    n_starts: int = 1
    start_seed: int = 0


@dataclass(frozen=True)
class FixedPointSolution:
    mu_star: np.ndarray
    alpha_star: float
    kappa_star: float
    nu_star: float
    beta_star: float
    residuals: np.ndarray  # 4-vector, one relative residual per equation
    iterations: int
    converged: bool
    degenerate: bool = False


class _Spectral:
    """Trace functionals of Q(nu) via generalized eigenvalues of (C_x, H)."""

    def __init__(self, C_x: np.ndarray, H: np.ndarray, n: int):
        self.d = eigh(C_x, H, eigvals_only=True)
        self.n = n

    def kappa(self, nu: float) -> float:
        return float(np.sum(self.d / (nu * self.d + 1.0)) / self.n)

    def a_func(self, nu: float) -> float:
        return float(np.sum(self.d**2 / (nu * self.d + 1.0) ** 2) / self.n)


def _panel_stats(loss, panel: ExpectationPanel, mu, alpha: float, kappa: float):
    """E[z xi], E[xi^2], E[x xi] over the panel at state (mu, alpha, kappa)."""
    c = mu @ panel.X  # (M,)
    U = c[:, None] + alpha * panel.z[None, :]  # (M, K)
    Xi = losses.xi(loss, panel.y[:, None], U, kappa)
    wz = panel.w * panel.z
    e_zxi = float(np.mean(Xi @ wz))
    e_xi2 = float(np.mean((Xi**2) @ panel.w))
    e_xxi = panel.X @ (Xi @ panel.w) / panel.size
    return e_zxi, e_xi2, e_xxi


def _panel_eval(loss, panel: ExpectationPanel, mu, alpha: float, kappa: float):
    """One prox sweep: E[z xi], E[xi^2], E[x xi] and mean envelope curvature.

    The curvature is the panel average of E_z[L''(prox)/(1 + kappa L''(prox))],
    the second derivative of the Moreau envelope in its argument.
    """
    c = mu @ panel.X  # (M,)
    U = c[:, None] + alpha * panel.z[None, :]  # (M, K)
    P = losses.prox(loss, panel.y[:, None], U, kappa)
    Xi = U - P
    wz = panel.w * panel.z
    e_zxi = float(np.mean(Xi @ wz))
    e_xi2 = float(np.mean((Xi**2) @ panel.w))
    e_xxi = panel.X @ (Xi @ panel.w) / panel.size
    d2 = losses.loss_dv2(loss, panel.y[:, None], P)
    curv = float(np.mean((d2 / (1.0 + kappa * d2)) @ panel.w))
    return e_zxi, e_xi2, e_xxi, curv


@dataclass(frozen=True)
class FixedPointState:
    """Bare solver state for residual evaluation, without diagnostics."""

    mu_star: np.ndarray
    alpha_star: float
    kappa_star: float
    nu_star: float


def residuals(state, model, loss, reg, n: int, panel: ExpectationPanel) -> np.ndarray:
    """Relative residual of each of the four fixed-point equations.

    ``state`` is any object with mu_star, alpha_star, kappa_star, nu_star.
    """
    q = as_quadratic(reg)
    _, C_x = model.moments()
    spec = _Spectral(C_x, q.H, n)
    mu = np.asarray(state.mu_star, float)
    alpha, kappa, nu = state.alpha_star, state.kappa_star, state.nu_star
    if kappa <= 0 or alpha <= 0:
        raise ValueError("residual evaluation needs kappa > 0 and alpha > 0")
    e_zxi, e_xi2, e_xxi = _panel_stats(loss, panel, mu, alpha, kappa)
    r1 = _rel(kappa, spec.kappa(nu))
    r2 = _rel(nu * alpha * kappa, e_zxi)
    r3 = _rel(alpha**2, spec.a_func(nu) / kappa**2 * e_xi2)
    g = q.a + q.H @ mu
    resid_vec = g + e_xxi / kappa
    r4 = np.linalg.norm(resid_vec) / max(
        np.linalg.norm(g), np.linalg.norm(e_xxi / kappa), _REL_FLOOR
    )
    return np.array([r1, r2, r3, r4])


def _solve_single(loss, q, spec, panel, opts, mu0, alpha0, nu0):
    mu = np.array(mu0, float)
    alpha, nu = float(alpha0), float(nu0)
    delta = opts.damping
    prev_worst = np.inf
    res = np.full(4, np.inf)
    degenerate = False
    second_moment = panel.X @ panel.X.T / panel.size
    for it in range(1, opts.max_iters + 1):
        kappa = spec.kappa(nu)
        e_zxi, e_xi2, e_xxi, curv = _panel_eval(loss, panel, mu, alpha, kappa)
        nu_cand = max(e_zxi / (alpha * kappa), _REL_FLOOR)
        alpha2_cand = spec.a_func(nu) / kappa**2 * e_xi2
        # the mu equation is the stationarity condition of the strongly
        # convex problem  min_mu rho_q(mu) + E[envelope(mu^T x + alpha z)],
        # so a (quasi-)Newton step is stable even when H^{-1}C_x has large
        # spectrum; the mean envelope curvature makes the step exact for the
        # squared loss and a positive-definite preconditioner otherwise
        grad = q.a + q.H @ mu + e_xxi / kappa
        hess = q.H + curv * second_moment
        mu_cand = mu - cho_solve(cho_factor(hess), grad)
        g = q.a + q.H @ mu
        res = np.array(
            [
                0.0,  # kappa is recomputed exactly from nu every iteration
                _rel(nu * alpha * kappa, e_zxi),
                _rel(alpha**2, alpha2_cand),
                np.linalg.norm(g + e_xxi / kappa)
                / max(np.linalg.norm(g), np.linalg.norm(e_xxi / kappa), _REL_FLOOR),
            ]
        )
        worst = res.max()
        if worst <= opts.tol:
            beta = np.sqrt(max(e_xi2, 0.0)) / kappa
            return FixedPointSolution(
                mu_star=mu,
                alpha_star=alpha,
                kappa_star=kappa,
                nu_star=nu,
                beta_star=beta,
                residuals=res,
                iterations=it,
                converged=True,
                degenerate=degenerate,
            )
        if worst > prev_worst * 1.01:
            delta = max(delta / 2.0, 0.05)
        prev_worst = worst
        nu = (1.0 - delta) * nu + delta * nu_cand
        alpha_new2 = (1.0 - delta) * alpha**2 + delta * alpha2_cand
        alpha = float(np.sqrt(max(alpha_new2, 0.0)))
        mu = (1.0 - delta) * mu + delta * mu_cand
        if alpha < opts.alpha_floor:
            degenerate = True
            alpha = opts.alpha_floor
    kappa = spec.kappa(nu)
    e_zxi, e_xi2, _ = _panel_stats(loss, panel, mu, alpha, kappa)
    beta = np.sqrt(max(e_xi2, 0.0)) / kappa
    return FixedPointSolution(
        mu_star=mu,
        alpha_star=alpha,
        kappa_star=kappa,
        nu_star=nu,
        beta_star=beta,
        residuals=res,
        iterations=opts.max_iters,
        converged=False,
        degenerate=degenerate,
    )


def solve(
    model,
    loss,
    reg,
    n: int,
    panel: ExpectationPanel,
    opts: SolveOptions = SolveOptions(),
) -> FixedPointSolution:
    """Damped Picard iteration on the four-equation system.

    ``reg`` must be quadratic (build a surrogate first for smooth
    non-quadratic penalties, or use :func:`solve_with_refit`). ``n`` sets
    the 1/n normalization of the trace functionals. Non-convergence is
    reported through the ``converged`` flag, not an exception.
    """
    q = as_quadratic(reg)
    _, C_x = model.moments()
    spec = _Spectral(C_x, q.H, n)
    p = q.dim
    mu0 = np.zeros(p) if opts.mu0 is None else np.asarray(opts.mu0, float)
    best = _solve_single(loss, q, spec, panel, opts, mu0, opts.alpha0, opts.nu0)
    if opts.n_starts > 1:
        rng = np.random.default_rng(opts.start_seed)
        for _ in range(opts.n_starts - 1):
            alt = _solve_single(
                loss, q, spec, panel, opts,
                rng.standard_normal(p), opts.alpha0, opts.nu0,
            )
            if (alt.converged, -alt.residuals.max()) > (
                best.converged, -best.residuals.max()
            ):
                best = alt
    return best


def solve_with_refit(
    model,
    loss,
    reg,
    n: int,
    panel: ExpectationPanel,
    opts: SolveOptions = SolveOptions(),
    max_refits: int = 5,
    refit_tol: float = 1e-6,
):
    """Alternate quadratic-surrogate construction and solve for smooth penalties.

    The surrogate shift depends on the unknown asymptotic mean, so it is
    recomputed at each solve's mu until successive means stabilize. Returns
    (solution, surrogate).
    """
    mu = np.zeros(reg.dim) if opts.mu0 is None else np.asarray(opts.mu0, float)
    sol, q = None, None
    for _ in range(max_refits):
        q = quadratic_surrogate(reg, mu)
        sol = solve(model, loss, q, n, panel, replace(opts, mu0=mu))
        if np.linalg.norm(sol.mu_star - mu) <= refit_tol * max(
            1.0, np.linalg.norm(sol.mu_star)
        ):
            return sol, q
        mu = sol.mu_star
    return sol, q


@dataclass(frozen=True)
class RidgeClosedForm:
    nu_star: float
    mu_of_nu: np.ndarray
    alpha_sq: float
    gen_error: float


def ridge_closed_form(
    moments, theta_star, sigma_eps: float, a, H, n: int
) -> RidgeClosedForm:
    """Closed-form linear-model asymptotics for squared loss + quadratic penalty.

    gen_error is the limiting squared prediction gap
    E[(x^T theta_hat - x^T theta_star)^2] plus the noise-driven term, namely
    (nu^2 A sigma^2 + Delta) / (1 - nu^2 A) = Delta + alpha^2.
    """
    mu_x, C_x = moments
    theta_star = np.asarray(theta_star, float)
    a = np.asarray(a, float)
    H = np.asarray(H, float)
    ctx = ResolventContext(C_x=C_x, H=H, n=n)
    nu = solve_nu_ridge(ctx)
    spec = _Spectral(C_x, H, n)
    A = spec.a_func(nu)
    denom = 1.0 - nu**2 * A
    if denom <= 0:
        raise ValidityBoundaryError(
            f"1 - nu^2 A(nu) = {denom:.3e} <= 0: outside validity region"
        )
    mu_nu = np.linalg.solve(nu * C_x + H, nu * C_x @ theta_star - a)
    Sigma = C_x + np.outer(mu_x, mu_x)
    diff = mu_nu - theta_star
    delta = float(diff @ Sigma @ diff)
    alpha_sq = nu**2 * A * (delta + sigma_eps**2) / denom
    gen_error = (nu**2 * A * sigma_eps**2 + delta) / denom
    return RidgeClosedForm(
        nu_star=nu, mu_of_nu=mu_nu, alpha_sq=alpha_sq, gen_error=gen_error
    )


@dataclass(frozen=True)
class MulticlassSolution:
    mu_star: np.ndarray
    alpha: np.ndarray  # (k,)
    kappa: np.ndarray  # (k,)
    nu: np.ndarray  # (k,)
    residuals: np.ndarray
    iterations: int
    converged: bool


def solve_multiclass(
    model,
    loss,
    reg,
    n: int,
    panel: ExpectationPanel,
    opts: SolveOptions = SolveOptions(),
) -> MulticlassSolution:
    """Per-class fixed-point system (experimental, stated as a claim only).

    Couples per-class (alpha_ell, kappa_ell, nu_ell) through the joint
    resolvent Q = (sum_h gamma_h nu_h C_h + H)^{-1}.
    """
    q = as_quadratic(reg)
    p = q.dim
    labels = model.class_labels
    k = labels.size
    gam = model.priors
    covs = np.stack([model.class_moments(ell)[1] for ell in range(k)])
    masks = [panel.y == labels[ell] for ell in range(k)]
    if any(not m.any() for m in masks):
        raise ValueError("panel is missing samples for at least one class")
    Hc = cho_factor(q.H)
    eye = np.eye(p)

    mu = np.zeros(p) if opts.mu0 is None else np.asarray(opts.mu0, float)
    alpha = np.full(k, opts.alpha0)
    nu = np.full(k, opts.nu0)
    delta = opts.damping
    prev_worst = np.inf
    res = np.full(4, np.inf)

    for it in range(1, opts.max_iters + 1):
        Qm = (gam * nu) @ covs.reshape(k, -1)
        Q = np.linalg.solve(Qm.reshape(p, p) + q.H, eye)
        CQ = covs @ Q  # (k, p, p)
        kappa = np.trace(CQ, axis1=1, axis2=2) / n
        # cross trace functionals tr(C_h Q C_ell Q) / n
        cross = np.einsum("hij,lji->hl", CQ, CQ) / n

        e_zxi = np.empty(k)
        e_xi2 = np.empty(k)
        e_xxi = np.zeros(p)
        c_all = mu @ panel.X
        for ell in range(k):
            m = masks[ell]
            U = c_all[m][:, None] + alpha[ell] * panel.z[None, :]
            Xi = losses.xi(loss, labels[ell], U, kappa[ell])
            e_zxi[ell] = np.mean(Xi @ (panel.w * panel.z))
            e_xi2[ell] = np.mean((Xi**2) @ panel.w)
            e_xxi += gam[ell] / kappa[ell] * (
                panel.X[:, m] @ (Xi @ panel.w) / m.sum()
            )

        nu_cand = np.maximum(e_zxi / (alpha * kappa), _REL_FLOOR)
        alpha2_cand = cross.T @ (gam * e_xi2 / kappa**2)
        mu_cand = -cho_solve(Hc, q.a + e_xxi)

        g = q.a + q.H @ mu
        res = np.array(
            [
                0.0,
                max(_rel(nu[i] * alpha[i] * kappa[i], e_zxi[i]) for i in range(k)),
                max(_rel(alpha[i] ** 2, alpha2_cand[i]) for i in range(k)),
                np.linalg.norm(g + e_xxi)
                / max(np.linalg.norm(g), np.linalg.norm(e_xxi), _REL_FLOOR),
            ]
        )
        worst = res.max()
        if worst <= opts.tol:
            return MulticlassSolution(
                mu_star=mu, alpha=alpha, kappa=kappa, nu=nu,
                residuals=res, iterations=it, converged=True,
            )
        if worst > prev_worst * 1.01:
            delta = max(delta / 2.0, 0.05)
        prev_worst = worst
        nu = (1.0 - delta) * nu + delta * nu_cand
        alpha = np.sqrt(np.maximum((1.0 - delta) * alpha**2 + delta * alpha2_cand, 0.0))
        mu = (1.0 - delta) * mu + delta * mu_cand

    Qm = (gam * nu) @ covs.reshape(k, -1)
    Q = np.linalg.solve(Qm.reshape(p, p) + q.H, eye)
    kappa = np.trace(covs @ Q, axis1=1, axis2=2) / n
    return MulticlassSolution(
        mu_star=mu, alpha=alpha, kappa=kappa, nu=nu,
        residuals=res, iterations=opts.max_iters, converged=False,
    )

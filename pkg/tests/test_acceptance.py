"""End-to-end acceptance suite.

Each test exercises one headline guarantee of the toolkit at desk scale and
prints a single PASS/FAIL line with the measured margins. Instances and seeds
are frozen so every run is bit-reproducible.
"""

import dataclasses
import time

import numpy as np

from ermasym import scores
from ermasym.data import (
    LFMM,
    BimodalLinear,
    BimodalTag,
    GaussianLinear,
    MixtureClasses,
)
from ermasym.erm import fit, replicate
from ermasym.fixed_point import (
    SolveOptions,
    make_panel,
    ridge_closed_form,
    solve,
    solve_multiclass,
    solve_with_refit,
)
from ermasym.losses import (
    LOGISTIC,
    SQUARED,
    moreau,
    moreau_dkappa,
    moreau_du,
    prox,
    xi,
)
from ermasym.regularizers import Quadratic, Ridge, ShiftedRidge, SmoothSeparable
from ermasym.rmt import (
    ResolventContext,
    empirical_resolvent,
    q2_equiv,
    resolvent,
    solve_nu_ridge,
)

GOLDEN_NU = (np.sqrt(5.0) - 1.0) / 2.0
GOLDEN_GEN_ERROR = 0.6180339887498949


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_criterion_01_ridge_analytic_point():
    # isotropic design, unit quadratic penalty, aspect ratio one: the scalar
    # self-consistency equation has the closed-form root (sqrt(5)-1)/2
    t0 = time.time()
    p = 30
    theta = np.zeros(p)
    theta[0] = 1.0
    cf = ridge_closed_form(
        (np.zeros(p), np.eye(p)), theta, 1.0, np.zeros(p), np.eye(p), p
    )
    nu_gap = abs(cf.nu_star - GOLDEN_NU)
    gen_gap = abs(cf.gen_error - GOLDEN_GEN_ERROR)
    elapsed = time.time() - t0
    ok = nu_gap <= 1e-10 and gen_gap <= 1e-6 and elapsed < 1.0
    _report(
        "criterion 01 ridge analytic point",
        ok,
        f"nu gap {nu_gap:.1e} (tol 1e-10), gen_error gap {gen_gap:.1e} "
        f"(tol 1e-6), {elapsed:.2f}s",
    )


def test_criterion_02_oracle_equivalence():
    # generic panel solver vs the linear-model closed form on an anisotropic
    # quadratic penalty with a nonzero shift
    p, n = 60, 150
    rng = np.random.default_rng(2)
    theta = rng.standard_normal(p)
    theta /= np.linalg.norm(theta)
    a = rng.standard_normal(p) * 0.3
    H = np.diag(rng.uniform(0.5, 1.5, p))
    model = GaussianLinear(
        mu_x=np.zeros(p), C_x=np.eye(p), theta_star=theta, sigma_eps=1.0
    )
    panel = make_panel(model, M=100_000, K=41, seed=3)
    sol = solve(model, SQUARED, Quadratic(a=a, H=H), n, panel, SolveOptions())
    cf = ridge_closed_form(model.moments(), theta, 1.0, a, H, n)
    nu_gap = abs(sol.nu_star - cf.nu_star) / cf.nu_star
    a2_gap = abs(sol.alpha_star**2 - cf.alpha_sq) / cf.alpha_sq
    mu_gap = np.linalg.norm(sol.mu_star - cf.mu_of_nu) / np.linalg.norm(cf.mu_of_nu)
    ok = sol.converged and max(nu_gap, a2_gap, mu_gap) <= 1e-3
    _report(
        "criterion 02 oracle equivalence",
        ok,
        f"rel gaps nu {nu_gap:.1e}, alpha^2 {a2_gap:.1e}, mu {mu_gap:.1e} "
        "(tol 1e-3)",
    )


def test_criterion_03_regression_theory_vs_monte_carlo():
    p, n, lam, R = 300, 1000, 0.5, 200
    rng = np.random.default_rng(42)
    theta = rng.standard_normal(p)
    theta /= np.linalg.norm(theta)
    model = GaussianLinear(
        mu_x=np.zeros(p), C_x=np.eye(p), theta_star=theta, sigma_eps=1.0
    )
    cf = ridge_closed_form(
        model.moments(), theta, 1.0, np.zeros(p), 2.0 * lam * np.eye(p), n
    )
    summ = replicate(model, SQUARED, Ridge(lam=lam, dim=p), n, R, master_seed=2)
    trace_gap = abs(summ.trace_cov - cf.alpha_sq) / cf.alpha_sq
    mu_gap = np.linalg.norm(summ.mu_hat - cf.mu_of_nu) / np.linalg.norm(cf.mu_of_nu)
    ok = trace_gap <= 0.05 and mu_gap <= 0.05
    _report(
        "criterion 03 regression theory vs Monte Carlo",
        ok,
        f"trace gap {trace_gap:.4f}, mu gap {mu_gap:.4f} (tol 0.05, R={R})",
    )


def test_criterion_04_classification_theory_vs_monte_carlo():
    p, n, m_test = 400, 2000, 100_000
    m = np.zeros(p)
    m[0] = 1.5
    model = MixtureClasses(
        priors=np.array([0.5, 0.5]),
        means=np.stack([-m, m]),
        covs=np.stack([np.eye(p), np.eye(p)]),
    )
    panel = make_panel(model, M=20_000, K=41, seed=5)
    lab = model.class_labels
    gaps = []
    for lam in (0.05, 0.1, 0.3, 1.0, 3.0):
        reg = Ridge(lam=lam, dim=p)
        sol = solve(model, LOGISTIC, reg, n, panel, SolveOptions())
        assert sol.converged
        law = scores.predict(model, sol, m_test, seed=6)
        pair = (law.class_law(lab[0]), law.class_law(lab[1]))
        th_err = scores.classification_error(pair, (0.5, 0.5), 0.0)
        X, Y = model.sample(n, seed=7)
        theta = fit(X, Y, LOGISTIC, reg).theta_hat
        Xt, Yt = model.sample(m_test, seed=8)
        emp = np.mean(np.where(theta @ Xt > 0, lab[1], lab[0]) != Yt)
        gaps.append(abs(th_err - emp) * 100.0)
    worst = max(gaps)
    ok = worst <= 1.0
    _report(
        "criterion 04 classification theory vs Monte Carlo",
        ok,
        f"worst error gap {worst:.3f}pp over 5 lambdas (tol 1pp)",
    )


def test_criterion_05_universality_breakdown():
    # one bimodal coordinate (c=3, s=0.5) and a penalty shift aligned to it:
    # the mixture score law fits, the Gaussian baseline does not
    p, n, m_test = 30, 600, 20_000
    m = np.zeros(p)
    m[0] = 1.0
    laws = ["gaussian"] * p
    laws[1] = BimodalTag(c=3.0, s=0.5)
    model = MixtureClasses(
        priors=np.array([0.5, 0.5]),
        means=np.stack([-m, m]),
        covs=np.stack([np.eye(p), np.eye(p)]),
        coord_laws=laws,
    )
    a = np.zeros(p)
    a[1] = 3.0
    reg = ShiftedRidge(a=a, lam=0.5)
    panel = make_panel(model, M=40_000, K=41, seed=20)
    sol = solve(model, LOGISTIC, reg, n, panel, SolveOptions())
    assert sol.converged
    law = scores.predict(model, sol, m_test, seed=21)
    X, Y = model.sample(n, seed=22)
    theta = fit(X, Y, LOGISTIC, reg).theta_hat
    Xt, Yt = model.sample(m_test, seed=23)
    emp = theta @ Xt
    details = []
    ok = True
    for ell, lab in enumerate(model.class_labels):
        e = emp[Yt == lab]
        ks_t = scores.ks_distance(law.class_law(lab), e)
        ks_g = scores.ks_distance(
            scores.gaussian_baseline(model.class_moments(ell), sol), e
        )
        ok = ok and ks_t <= 0.05 and ks_g >= 2.0 * ks_t
        details.append(f"class {lab:+.0f}: ks {ks_t:.4f}, gauss ks {ks_g:.4f}")
    _report(
        "criterion 05 universality breakdown",
        ok,
        "; ".join(details) + " (tol ks<=0.05, ratio>=2)",
    )


def test_criterion_06_direction_sweep():
    # rotating the penalty shift in the (signal, bimodal) plane: the Gaussian
    # baseline is adequate only at the two extremal angles
    p, n, m_test = 30, 2000, 40_000
    model = BimodalLinear(
        mu_x=np.zeros(p),
        C_x=np.eye(p),
        theta_star=np.eye(p)[:, 0],
        sigma_eps=0.5,
        coord=1,
        c=3.0,
        s=0.5,
    )
    panel = make_panel(model, M=40_000, K=41, seed=30)
    phis = [0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4, np.pi]
    ks = []
    for phi in phis:
        a = np.zeros(p)
        a[0] = -3.0 * np.cos(phi)
        a[1] = 3.0 * np.sin(phi)
        reg = ShiftedRidge(a=a, lam=2.0)
        # alpha is tiny at the extremal angles, so the relative residual on
        # the fluctuation equation stalls just above the default tolerance
        sol = solve(model, SQUARED, reg, n, panel, SolveOptions(tol=1e-7))
        assert sol.converged
        X, Y = model.sample(n, seed=31)
        theta = fit(X, Y, SQUARED, reg).theta_hat
        Xt, _ = model.sample(m_test, seed=32)
        base = scores.gaussian_baseline(model.moments(), sol)
        ks.append(scores.ks_distance(base, theta @ Xt))
    smallest_two = set(np.argsort(ks)[:2].tolist())
    ok = smallest_two == {0, len(phis) - 1}
    _report(
        "criterion 06 direction sweep",
        ok,
        "gaussian ks over phi grid "
        + str(["%.4f" % v for v in ks])
        + f"; minima at indices {sorted(smallest_two)} (need {{0, 4}})",
    )


def test_criterion_07_subspace_confinement():
    # two-factor latent design with squared loss: the solution mean stays in
    # the span of the factor directions and the penalty shift
    p, q, n = 40, 2, 300
    rng = np.random.default_rng(70)
    V = np.linalg.qr(rng.standard_normal((p, q)))[0]
    model = LFMM(directions=V, signal=np.array([1.2, -0.8]), prior_plus=0.6)
    a = rng.standard_normal(p) * 0.5
    reg = ShiftedRidge(a=a, lam=0.4)
    worst = 0.0
    for seed in range(5):
        panel = make_panel(model, M=20_000, K=41, seed=seed)
        sol = solve(model, SQUARED, reg, n, panel, SolveOptions())
        assert sol.converged
        worst = max(
            worst, scores.confinement_residual(sol.mu_star, [V[:, 0], V[:, 1]], a)
        )
    ok = worst <= 1e-6
    _report(
        "criterion 07 subspace confinement",
        ok,
        f"worst residual {worst:.1e} over 5 seeds (tol 1e-6)",
    )


def test_criterion_08_resolvent_deterministic_equivalents():
    n, p, lam = 2000, 600, 1.0
    model = GaussianLinear(
        mu_x=np.zeros(p), C_x=np.eye(p), theta_star=np.zeros(p), sigma_eps=1.0
    )
    ctx = ResolventContext(C_x=np.eye(p), H=lam * np.eye(p), n=n)
    nu = solve_nu_ridge(ctx)
    Q = resolvent(ctx, nu)
    rng = np.random.default_rng(80)
    B = rng.standard_normal((p, p))
    B = (B + B.T) / 2.0
    B /= np.linalg.norm(B, 2)
    Q2I = q2_equiv(ctx, nu, np.eye(p))
    Q2B = q2_equiv(ctx, nu, B)
    g1, g2i, g2b = [], [], []
    for seed in range(20):
        X, _ = model.sample(n, seed=seed)
        R = empirical_resolvent(X, lam)
        g1.append(abs(np.trace(R - Q)) / p)
        g2i.append(abs(np.trace(R @ R - Q2I)) / p)
        g2b.append(abs(np.trace(R @ B @ R - Q2B)) / p)
    b1, b2 = 3.0 / np.sqrt(n), 5.0 / np.sqrt(n)
    m1, m2i, m2b = np.mean(g1), np.mean(g2i), np.mean(g2b)
    ok = m1 <= b1 and m2i <= b2 and m2b <= b2
    _report(
        "criterion 08 resolvent deterministic equivalents",
        ok,
        f"trace gap {m1:.1e} (tol {b1:.1e}); second-order gaps "
        f"{m2i:.1e}, {m2b:.1e} (tol {b2:.1e}, 20 seeds)",
    )


def test_criterion_09_calculus_suite():
    t0 = time.time()
    h = 1e-6
    uu, kk = np.meshgrid(np.linspace(-5, 5, 21), np.linspace(0.1, 10, 21))
    worst_fd = 0.0
    for loss, y in ((SQUARED, 0.7), (LOGISTIC, 1.0), (LOGISTIC, -1.0)):
        du = (moreau(loss, y, uu + h, kk) - moreau(loss, y, uu - h, kk)) / (2 * h)
        dv = (moreau(loss, y, uu, kk + h) - moreau(loss, y, uu, kk - h)) / (2 * h)
        worst_fd = max(
            worst_fd,
            np.abs(du - moreau_du(loss, y, uu, kk)).max(),
            np.abs(dv - moreau_dkappa(loss, y, uu, kk)).max(),
        )
    rng = np.random.default_rng(90)
    u1, u2 = rng.standard_normal((2, 10_000)) * 4.0
    kap = rng.uniform(0.05, 20.0, 10_000)
    yy = np.where(rng.random(10_000) < 0.5, -1.0, 1.0)
    expansion = np.abs(
        prox(LOGISTIC, yy, u1, kap) - prox(LOGISTIC, yy, u2, kap)
    ) - np.abs(u1 - u2)
    nonexpansive = expansion.max() <= 1e-12
    u = rng.standard_normal(10_000) * 3.0
    yv = rng.standard_normal(10_000)
    closed = np.abs(
        xi(SQUARED, yv, u, kap) - kap / (1.0 + kap) * (u - yv)
    ).max()
    elapsed = time.time() - t0
    ok = worst_fd <= 1e-6 and nonexpansive and closed <= 1e-12 and elapsed < 10.0
    _report(
        "criterion 09 calculus suite",
        ok,
        f"fd gap {worst_fd:.1e} (tol 1e-6), nonexpansive {nonexpansive}, "
        f"closed-form gap {closed:.1e} (tol 1e-12), {elapsed:.1f}s",
    )


def test_criterion_10_quadratic_surrogate_universality():
    # smooth separable penalty vs its converged quadratic surrogate: linear
    # and quadratic score statistics of the two empirical fits agree, and the
    # gap shrinks with sample size
    p, R = 100, 100
    rng = np.random.default_rng(100)
    theta = rng.standard_normal(p)
    theta /= np.linalg.norm(theta)
    mu_x = rng.standard_normal(p) * 0.3
    model = GaussianLinear(mu_x=mu_x, C_x=np.eye(p), theta_star=theta, sigma_eps=1.0)
    a = rng.standard_normal(p) * 0.5
    reg = SmoothSeparable(base=ShiftedRidge(a=a, lam=0.5), eps=0.2)
    second = np.eye(p) + np.outer(mu_x, mu_x)
    panel = make_panel(model, M=40_000, K=41, seed=101)
    gaps = {"mean": [], "second": []}
    paired_se = {"mean": [], "second": []}
    obs_se = {"mean": [], "second": []}
    for n in (250, 500, 1000):
        _, q = solve_with_refit(model, SQUARED, reg, n, panel, SolveOptions())
        m1 = np.empty((2, R))
        m2 = np.empty((2, R))
        for r in range(R):
            X, Y = model.sample(n, seed=1000 * n + r)
            for j, pen in enumerate((reg, q)):
                th = fit(X, Y, SQUARED, pen).theta_hat
                m1[j, r] = mu_x @ th
                m2[j, r] = th @ second @ th
        for tag, m in (("mean", m1), ("second", m2)):
            d = m[0] - m[1]
            gaps[tag].append(abs(d.mean()))
            paired_se[tag].append(d.std(ddof=1) / np.sqrt(R))
            obs_se[tag].append(m.std(axis=1, ddof=1).max() / np.sqrt(R))
    ok = True
    details = []
    for tag in ("mean", "second"):
        g, pse, ose = gaps[tag], paired_se[tag], obs_se[tag]
        monotone = all(g[i + 1] <= g[i] + 3.0 * pse[i + 1] for i in range(2))
        final = g[-1] <= 3.0 * ose[-1]
        ok = ok and monotone and final
        details.append(
            f"{tag} gaps {['%.1e' % v for v in g]}, final stderr {ose[-1]:.1e}"
        )
    _report(
        "criterion 10 quadratic surrogate universality",
        ok,
        "; ".join(details) + " (monotone up to noise, final <= 3x stderr)",
    )


def test_criterion_11_multiclass_reduction():
    # one class: per-class system collapses to the scalar solver
    p, n = 10, 50
    m = np.zeros(p)
    m[0] = 0.8
    model = MixtureClasses(
        priors=np.array([1.0]), means=m[None, :], covs=np.eye(p)[None, :, :]
    )
    reg = Ridge(lam=0.6, dim=p)
    panel = make_panel(model, M=8000, K=31, seed=20)
    multi = solve_multiclass(model, LOGISTIC, reg, n, panel, SolveOptions())
    single = solve(model, LOGISTIC, reg, n, panel, SolveOptions())
    k1_gap = max(
        abs(multi.nu[0] - single.nu_star),
        abs(multi.kappa[0] - single.kappa_star),
        abs(multi.alpha[0] - single.alpha_star),
        np.abs(multi.mu_star - single.mu_star).max(),
    )
    # two balanced, mirrored classes: the per-class scalars must coincide
    m = np.zeros(p)
    m[0] = 1.0
    model2 = MixtureClasses(
        priors=np.array([0.5, 0.5]),
        means=np.stack([-m, m]),
        covs=np.stack([np.eye(p), np.eye(p)]),
    )
    panel2 = make_panel(model2, M=8000, K=31, seed=24)
    labs = model2.class_labels
    X = panel2.X.copy()
    X[:, panel2.y == labs[1]] = -X[:, panel2.y == labs[0]]
    panel2 = dataclasses.replace(panel2, X=X)
    sym = solve_multiclass(model2, LOGISTIC, Ridge(lam=0.5, dim=p), n, panel2,
                           SolveOptions())
    sym_gap = max(
        abs(sym.kappa[0] - sym.kappa[1]),
        abs(sym.nu[0] - sym.nu[1]),
        abs(sym.alpha[0] - sym.alpha[1]),
    )
    ok = (
        multi.converged
        and single.converged
        and sym.converged
        and k1_gap <= 1e-8
        and sym_gap <= 1e-6
    )
    _report(
        "criterion 11 multiclass reduction",
        ok,
        f"k=1 gap {k1_gap:.1e} (tol 1e-8), symmetric k=2 gap {sym_gap:.1e} "
        "(tol 1e-6)",
    )

"""Config-driven experiment runner.

Subcommands: solve | compare | sweep | score-hist. Each reads a YAML
config, writes CSV/JSON plot data into the output directory and is fully
deterministic given the config (seeds included).

Exit codes: 0 success, 1 config error, 2 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import csv
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import erm, fixed_point, scores
from .data import LFMM, BimodalLinear, BimodalTag, GaussianLinear, MixtureClasses, load_csv
from .losses import LOGISTIC, SQUARED
from .regularizers import Quadratic, Ridge, ShiftedRidge, SmoothSeparable


class ConfigError(ValueError):
    pass


def _require(cfg: dict, key: str, where: str = "config"):
    if key not in cfg:
        raise ConfigError(f"{where}: missing required field '{key}'")
    return cfg[key]


def _vector(spec, p: int, what: str) -> np.ndarray:
    if isinstance(spec, (int, float)):
        return np.full(p, float(spec))
    if isinstance(spec, list):
        v = np.asarray(spec, float)
        if v.size != p:
            raise ConfigError(f"{what}: expected length {p}, got {v.size}")
        return v
    if isinstance(spec, dict):
        if "unit" in spec:
            v = np.zeros(p)
            v[int(spec["unit"])] = float(spec.get("scale", 1.0))
            return v
        if "random_unit" in spec:
            rng = np.random.default_rng(int(spec["random_unit"]))
            v = rng.standard_normal(p)
            return v / np.linalg.norm(v)
        if "angle" in spec:
            phi = float(spec["angle"])
            scale = float(spec.get("scale", 1.0))
            v = np.zeros(p)
            v[0] = -scale * np.cos(phi)
            v[1] = scale * np.sin(phi)
            return v
    raise ConfigError(f"{what}: unsupported vector spec {spec!r}")


def _matrix(spec, p: int, what: str) -> np.ndarray:
    if spec in (None, "identity"):
        return np.eye(p)
    if isinstance(spec, (int, float)):
        return float(spec) * np.eye(p)
    arr = np.asarray(spec, float)
    if arr.ndim == 1:
        if arr.size != p:
            raise ConfigError(f"{what}: diagonal must have length {p}")
        return np.diag(arr)
    if arr.shape != (p, p):
        raise ConfigError(f"{what}: expected {p}x{p} matrix")
    return arr


def build_model(cfg: dict):
    kind = _require(cfg, "kind", "model")
    if kind == "csv":
        return load_csv(_require(cfg, "path", "model"))
    p = int(_require(cfg, "p", "model"))
    if kind in ("gaussian_linear", "bimodal_linear"):
        mu_x = _vector(cfg.get("mu_x", 0.0), p, "model.mu_x")
        C_x = _matrix(cfg.get("c_x"), p, "model.c_x")
        theta = _vector(_require(cfg, "theta_star", "model"), p, "model.theta_star")
        sigma = float(cfg.get("sigma_eps", 1.0))
        if kind == "gaussian_linear":
            return GaussianLinear(mu_x=mu_x, C_x=C_x, theta_star=theta, sigma_eps=sigma)
        return BimodalLinear(
            mu_x=mu_x, C_x=C_x, theta_star=theta, sigma_eps=sigma,
            coord=int(cfg.get("coord", 1)),
            c=float(cfg.get("c", 3.0)), s=float(cfg.get("s", 0.5)),
        )
    if kind == "mixture_classes":
        priors = np.asarray(_require(cfg, "priors", "model"), float)
        means = np.asarray(
            [_vector(m, p, "model.means") for m in _require(cfg, "means", "model")]
        )
        covs_spec = cfg.get("covs", "identity")
        if isinstance(covs_spec, list) and covs_spec and isinstance(
            covs_spec[0], (list, str, int, float)
        ) and len(covs_spec) == priors.size:
            covs = np.stack([_matrix(c, p, "model.covs") for c in covs_spec])
        else:
            covs = np.stack([_matrix(covs_spec, p, "model.covs")] * priors.size)
        laws = None
        if cfg.get("bimodal_coords"):
            laws = ["gaussian"] * p
            for item in cfg["bimodal_coords"]:
                laws[int(item["index"])] = BimodalTag(
                    c=float(item.get("c", 3.0)), s=float(item.get("s", 0.5))
                )
        return MixtureClasses(priors=priors, means=means, covs=covs, coord_laws=laws)
    if kind == "lfmm":
        q = int(_require(cfg, "q", "model"))
        signal = np.asarray(_require(cfg, "signal", "model"), float)
        dirs_spec = cfg.get("directions")
        if dirs_spec is None:
            directions = np.eye(p)[:, :q]
        else:
            directions = np.asarray(dirs_spec, float)
        return LFMM(
            directions=directions, signal=signal,
            prior_plus=float(cfg.get("prior_plus", 0.5)),
        )
    raise ConfigError(f"model: unknown kind '{kind}'")


def build_loss(cfg):
    kind = cfg if isinstance(cfg, str) else _require(cfg, "kind", "loss")
    if kind == "squared":
        return SQUARED
    if kind == "logistic":
        return LOGISTIC
    raise ConfigError(f"loss: unknown kind '{kind}'")


def build_regularizer(cfg: dict, p: int):
    kind = _require(cfg, "kind", "regularizer")
    if kind == "ridge":
        return Ridge(lam=float(_require(cfg, "lam", "regularizer")), dim=p)
    if kind == "shifted_ridge":
        a = _vector(_require(cfg, "a", "regularizer"), p, "regularizer.a")
        return ShiftedRidge(a=a, lam=float(_require(cfg, "lam", "regularizer")))
    if kind == "quadratic":
        a = _vector(cfg.get("a", 0.0), p, "regularizer.a")
        H = _matrix(_require(cfg, "H", "regularizer"), p, "regularizer.H")
        return Quadratic(a=a, H=H)
    if kind == "smooth_separable":
        a = _vector(cfg.get("a", 0.0), p, "regularizer.a")
        base = ShiftedRidge(a=a, lam=float(_require(cfg, "lam", "regularizer")))
        return SmoothSeparable(base=base, eps=float(cfg.get("eps", 0.1)))
    raise ConfigError(f"regularizer: unknown kind '{kind}'")


def build_solve_options(cfg: dict) -> fixed_point.SolveOptions:
    s = cfg.get("solver", {})
    return fixed_point.SolveOptions(
        tol=float(s.get("tol", 1e-8)),
        max_iters=int(s.get("max_iters", 500)),
        damping=float(s.get("damping", 0.5)),
        alpha_floor=float(s.get("alpha_floor", 1e-10)),
        n_starts=int(s.get("n_starts", 1)),
        start_seed=int(s.get("start_seed", 0)),
    )


def _solve_theory(cfg, model, loss, reg, n):
    s = cfg.get("solver", {})
    panel = fixed_point.make_panel(
        model,
        M=int(s.get("panel_m", 100_000)),
        K=int(s.get("quad_k", 41)),
        seed=int(cfg.get("seed", 0)),
        match_moments=bool(s.get("match_moments", True)),
    )
    opts = build_solve_options(cfg)
    if isinstance(reg, SmoothSeparable):
        sol, _ = fixed_point.solve_with_refit(model, loss, reg, n, panel, opts)
        return sol
    return fixed_point.solve(model, loss, reg, n, panel, opts)


def _is_classifier(model) -> bool:
    return getattr(model, "label_space", "real") == "binary_pm1" and hasattr(
        model, "class_labels"
    )


def _solution_dict(sol, cfg) -> dict:
    return {
        "config": cfg,
        "mu_star": np.asarray(sol.mu_star).tolist(),
        "alpha_star": float(sol.alpha_star),
        "kappa_star": float(sol.kappa_star),
        "nu_star": float(sol.nu_star),
        "beta_star": float(sol.beta_star),
        "residuals": np.asarray(sol.residuals).tolist(),
        "iterations": int(sol.iterations),
        "converged": bool(sol.converged),
        "degenerate": bool(sol.degenerate),
    }


def _write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _theory_errors(model, sol, m, seed, threshold):
    """(theory_error, gaussian_score_error) for a binary classifier."""
    law = scores.predict(model, sol, m, seed)
    lab = model.class_labels
    pair = (law.class_law(lab[0]), law.class_law(lab[1]))
    priors = (model.priors[0], model.priors[1])
    theory = scores.classification_error(pair, priors, threshold)
    base_pair = tuple(
        scores.gaussian_baseline(model.class_moments(ell), sol) for ell in (0, 1)
    )
    gauss = scores.classification_error(base_pair, priors, threshold)
    return theory, gauss


def _empirical_classifier_error(model, theta, m, seed, threshold):
    X, y = model.sample(m, seed)
    svals = theta @ X
    pred = np.where(svals > threshold, model.class_labels[1], model.class_labels[0])
    return float(np.mean(pred != y))


def _gaussianized(model):
    """Moment-matched Gaussian surrogate of a data model."""
    if _is_classifier(model):
        k = model.priors.size
        means = np.stack([model.class_moments(ell)[0] for ell in range(k)])
        covs = np.stack([model.class_moments(ell)[1] for ell in range(k)])
        return MixtureClasses(priors=model.priors, means=means, covs=covs)
    mu_x, C_x = model.moments()
    return GaussianLinear(
        mu_x=mu_x, C_x=C_x, theta_star=model.theta_star, sigma_eps=model.sigma_eps
    )


def cmd_solve(cfg: dict, out: Path) -> int:
    model = build_model(_require(cfg, "model"))
    loss = build_loss(_require(cfg, "loss"))
    reg = build_regularizer(_require(cfg, "regularizer"), model.p)
    n = int(_require(cfg, "n"))
    sol = _solve_theory(cfg, model, loss, reg, n)
    _write_json(out / "solution.json", _solution_dict(sol, cfg))
    return 0 if sol.converged else 2


def cmd_compare(cfg: dict, out: Path) -> int:
    model = build_model(_require(cfg, "model"))
    loss = build_loss(_require(cfg, "loss"))
    reg = build_regularizer(_require(cfg, "regularizer"), model.p)
    n = int(_require(cfg, "n"))
    R = int(_require(cfg, "replications"))
    if R < 2:
        raise ConfigError("compare: needs replications >= 2")
    seed = int(cfg.get("seed", 0))
    m_test = int(cfg.get("test_points", 100_000))
    sol = _solve_theory(cfg, model, loss, reg, n)
    summary = erm.replicate(model, loss, reg, n, R, seed)
    mu_t, mu_e = sol.mu_star, summary.mu_hat
    cos = float(mu_t @ mu_e / max(np.linalg.norm(mu_t) * np.linalg.norm(mu_e), 1e-300))
    rows = [
        ("mu_norm", np.linalg.norm(mu_t), np.linalg.norm(mu_e), summary.mu_stderr,
         _relgap(np.linalg.norm(mu_t), np.linalg.norm(mu_e))),
        ("mu_cosine", 1.0, cos, summary.mu_stderr, abs(1.0 - cos)),
        ("alpha_sq", sol.alpha_star**2, summary.trace_cov, summary.trace_cov_stderr,
         _relgap(sol.alpha_star**2, summary.trace_cov)),
    ]
    if _is_classifier(model):
        thr = float(cfg.get("threshold", 0.0))
        theory_err, _ = _theory_errors(model, sol, m_test, seed + 1, thr)
        X, Y = model.sample(n, seed + 2)
        fit = erm.fit(X, Y, loss, reg)
        emp_err = _empirical_classifier_error(model, fit.theta_hat, m_test, seed + 3, thr)
        rows.append(("class_error", theory_err, emp_err, np.nan,
                     abs(theory_err - emp_err)))
    elif hasattr(model, "theta_star"):
        cf_ok = loss is SQUARED
        if cf_ok:
            from .regularizers import as_quadratic

            q = as_quadratic(reg)
            cf = fixed_point.ridge_closed_form(
                model.moments(), model.theta_star, model.sigma_eps, q.a, q.H, n
            )
            X, Y = model.sample(n, seed + 2)
            fit = erm.fit(X, Y, loss, reg)
            mu_x, C_x = model.moments()
            Sigma = C_x + np.outer(mu_x, mu_x)
            d = fit.theta_hat - model.theta_star
            emp_gen = float(d @ Sigma @ d)
            rows.append(("gen_error", cf.gen_error, emp_gen, np.nan,
                         _relgap(cf.gen_error, emp_gen)))
    header = ["quantity", "theory", "empirical", "stderr", "relative_gap"]
    _write_csv(out / "comparison.csv", header, rows)
    _write_json(out / "comparison.json", {
        "config": cfg,
        "rows": [dict(zip(header, [r[0]] + [_f(v) for v in r[1:]])) for r in rows],
        "converged": bool(sol.converged),
    })
    return 0 if sol.converged else 2


def _relgap(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _f(v):
    return None if (isinstance(v, float) and np.isnan(v)) else float(v)


def _sweep_point(cfg, param, value, seed):
    point_cfg = copy.deepcopy(cfg)
    point_cfg["seed"] = seed
    if param == "lam":
        point_cfg["regularizer"]["lam"] = float(value)
    elif param == "phi":
        scale = float(point_cfg.get("sweep", {}).get("a_scale", 1.0))
        point_cfg["regularizer"]["a"] = {"angle": float(value), "scale": scale}
    else:
        raise ConfigError(f"sweep: unknown parameter '{param}'")
    model = build_model(point_cfg["model"])
    loss = build_loss(point_cfg["loss"])
    reg = build_regularizer(point_cfg["regularizer"], model.p)
    n = int(point_cfg["n"])
    m_test = int(point_cfg.get("test_points", 100_000))
    thr = float(point_cfg.get("threshold", 0.0))
    try:
        sol = _solve_theory(point_cfg, model, loss, reg, n)
        gmodel = _gaussianized(model)
        gcfg = copy.deepcopy(point_cfg)
        gsol = _solve_theory(gcfg, gmodel, loss, reg, n)
        X, Y = model.sample(n, seed + 2)
        theta = erm.fit(X, Y, loss, reg).theta_hat
        Xt, Yt = model.sample(m_test, seed + 3)
        emp_scores = theta @ Xt
        law = scores.predict(model, sol, m_test, seed + 4)
        base = scores.gaussian_baseline(model.moments(), sol)
        ks_theory = scores.ks_distance(law, emp_scores)
        ks_gauss = scores.ks_distance(base, emp_scores)
        if _is_classifier(model):
            theory_err, gscore_err = _theory_errors(model, sol, m_test, seed + 4, thr)
            gdata_err, _ = _theory_errors(gmodel, gsol, m_test, seed + 5, thr)
            pred = np.where(emp_scores > thr, model.class_labels[1], model.class_labels[0])
            emp_err = float(np.mean(pred != Yt))
        else:
            mu_x, C_x = model.moments()
            Sigma = C_x + np.outer(mu_x, mu_x)
            d_t = sol.mu_star - model.theta_star
            theory_err = float(d_t @ Sigma @ d_t) + sol.alpha_star**2
            gscore_err = theory_err  # squared error depends on two moments only
            d_g = gsol.mu_star - model.theta_star
            gdata_err = float(d_g @ Sigma @ d_g) + gsol.alpha_star**2
            d_e = theta - model.theta_star
            emp_err = float(d_e @ Sigma @ d_e)
        return [value, theory_err, gscore_err, gdata_err, emp_err,
                ks_theory, ks_gauss, ""]
    except Exception as exc:  # per-point failures recorded, sweep continues
        return [value, "", "", "", "", "", "", f"{type(exc).__name__}: {exc}"]


def cmd_sweep(cfg: dict, out: Path, threads: int = 1) -> int:
    sweep = _require(cfg, "sweep")
    param = _require(sweep, "parameter", "sweep")
    grid = _require(sweep, "grid", "sweep")
    if not grid:
        raise ConfigError("sweep: empty grid")
    base_seed = int(cfg.get("seed", 0))
    seeds = [base_seed + 1000 * i for i in range(len(grid))]
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(lambda gv: _sweep_point(cfg, param, gv[0], gv[1]),
                               zip(grid, seeds)))
    else:
        rows = [_sweep_point(cfg, param, g, s) for g, s in zip(grid, seeds)]
    header = [param, "theory_error", "gaussian_score_error", "gaussian_data_error",
              "empirical_error", "ks_theory", "ks_gaussian", "failure"]
    _write_csv(out / "sweep.csv", header, rows)
    return 0


def cmd_score_hist(cfg: dict, out: Path) -> int:
    model = build_model(_require(cfg, "model"))
    loss = build_loss(_require(cfg, "loss"))
    reg = build_regularizer(_require(cfg, "regularizer"), model.p)
    n = int(_require(cfg, "n"))
    seed = int(cfg.get("seed", 0))
    m_test = int(cfg.get("test_points", 100_000))
    bins = int(cfg.get("bins", 80))
    sol = _solve_theory(cfg, model, loss, reg, n)
    X, Y = model.sample(n, seed + 2)
    theta = erm.fit(X, Y, loss, reg).theta_hat
    Xt, Yt = model.sample(m_test, seed + 3)
    emp_scores = theta @ Xt
    law = scores.predict(model, sol, m_test, seed + 4)
    base = scores.gaussian_baseline(model.moments(), sol)
    lo, hi = emp_scores.min(), emp_scores.max()
    grid = np.linspace(lo, hi, bins)
    theory_pdf = law.pdf_grid(grid)
    base_pdf = base.pdf_grid(grid)
    edges = np.linspace(lo, hi, bins + 1)
    total, _ = np.histogram(emp_scores, bins=edges)
    class_labels = (
        model.class_labels if _is_classifier(model) else np.unique(Yt)[:0]
    )
    per_class = [
        np.histogram(emp_scores[Yt == lab], bins=edges)[0] for lab in class_labels
    ]
    header = ["grid", "theory_pdf", "gaussian_pdf", "empirical_count"] + [
        f"count_class_{lab:g}" for lab in class_labels
    ]
    rows = []
    for i in range(bins):
        row = [grid[i], theory_pdf[i], base_pdf[i], total[i]]
        row += [pc[i] for pc in per_class]
        rows.append(row)
    _write_csv(out / "score_hist.csv", header, rows)
    return 0 if sol.converged else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ermasym",
        description="High-dimensional ERM asymptotics: theory vs Monte Carlo.",
    )
    parser.add_argument("command", choices=["solve", "compare", "sweep", "score-hist"])
    parser.add_argument("--config", required=True, help="YAML experiment config")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = yaml.safe_load(fh)
        if not isinstance(cfg, dict):
            raise ConfigError("config root must be a mapping")
        if args.seed is not None:
            cfg["seed"] = args.seed
        out = Path(args.out or cfg.get("out", "."))
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "compare":
            return cmd_compare(cfg, out)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, threads=args.threads)
        return cmd_score_hist(cfg, out)
    except (ConfigError, OSError, yaml.YAMLError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

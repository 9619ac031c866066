import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from ermasym import cli


def _write(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def _ridge_cfg(out, p=20, n=60, lam=0.5, seed=7):
    return {
        "model": {
            "kind": "gaussian_linear", "p": p,
            "theta_star": {"random_unit": 3}, "sigma_eps": 1.0,
        },
        "loss": "squared",
        "regularizer": {"kind": "ridge", "lam": lam},
        "n": n,
        "solver": {"panel_m": 20_000, "quad_k": 31},
        "seed": seed,
        "out": str(out),
    }


def test_solve_matches_closed_form(tmp_path):
    cfg = _ridge_cfg(tmp_path)
    rc = cli.main(["solve", "--config", _write(tmp_path, cfg)])
    assert rc == 0
    sol = json.loads((tmp_path / "solution.json").read_text())
    assert sol["converged"]
    from ermasym.data import GaussianLinear
    from ermasym.fixed_point import ridge_closed_form

    model = cli.build_model(cfg["model"])
    cf = ridge_closed_form(
        model.moments(), model.theta_star, model.sigma_eps,
        np.zeros(20), np.eye(20), 60,
    )
    assert abs(sol["nu_star"] - cf.nu_star) <= 1e-6 * cf.nu_star
    assert isinstance(model, GaussianLinear)


def test_solve_missing_field_exits_1(tmp_path, capsys):
    cfg = _ridge_cfg(tmp_path)
    del cfg["loss"]
    rc = cli.main(["solve", "--config", _write(tmp_path, cfg)])
    assert rc == 1
    assert "loss" in capsys.readouterr().err


def test_solve_degenerate_flagged(tmp_path):
    cfg = _ridge_cfg(tmp_path)
    cfg["model"]["theta_star"] = 0.0
    cfg["model"]["sigma_eps"] = 0.0
    rc = cli.main(["solve", "--config", _write(tmp_path, cfg)])
    sol = json.loads((tmp_path / "solution.json").read_text())
    assert rc == 0 and sol["degenerate"]


def test_solve_deterministic_rerun(tmp_path):
    cfg = _ridge_cfg(tmp_path)
    path = _write(tmp_path, cfg)
    cli.main(["solve", "--config", path])
    first = (tmp_path / "solution.json").read_bytes()
    cli.main(["solve", "--config", path])
    assert (tmp_path / "solution.json").read_bytes() == first


def test_compare_outputs(tmp_path):
    cfg = _ridge_cfg(tmp_path, p=10, n=40)
    cfg["replications"] = 8
    rc = cli.main(["compare", "--config", _write(tmp_path, cfg)])
    assert rc == 0
    rows = list(csv.DictReader(open(tmp_path / "comparison.csv")))
    names = [r["quantity"] for r in rows]
    assert names[:3] == ["mu_norm", "mu_cosine", "alpha_sq"]
    assert "gen_error" in names
    payload = json.loads((tmp_path / "comparison.json").read_text())
    assert payload["config"]["n"] == 40


def test_compare_needs_replications(tmp_path):
    cfg = _ridge_cfg(tmp_path)
    cfg["replications"] = 1
    rc = cli.main(["compare", "--config", _write(tmp_path, cfg)])
    assert rc == 1


def test_sweep_lam_grid(tmp_path):
    cfg = {
        "model": {
            "kind": "mixture_classes", "p": 8, "priors": [0.5, 0.5],
            "means": [{"unit": 0, "scale": -1.0}, {"unit": 0, "scale": 1.0}],
            "covs": "identity",
        },
        "loss": "logistic",
        "regularizer": {"kind": "ridge", "lam": 0.3},
        "n": 50,
        "solver": {"panel_m": 4000, "quad_k": 21},
        "seed": 11,
        "test_points": 4000,
        "sweep": {"parameter": "lam", "grid": [0.1, 0.5]},
    }
    rc = cli.main(["sweep", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)])
    assert rc == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert [r["lam"] for r in rows] == ["0.1", "0.5"]
    for r in rows:
        assert r["failure"] == ""
        assert 0.0 <= float(r["theory_error"]) <= 0.5
        # Gaussian mixture data: the two theory curves coincide closely
        assert abs(float(r["theory_error"]) - float(r["gaussian_score_error"])) < 0.02
        assert abs(float(r["theory_error"]) - float(r["empirical_error"])) < 0.05


def test_score_hist_format(tmp_path):
    cfg = {
        "model": {
            "kind": "mixture_classes", "p": 8, "priors": [0.5, 0.5],
            "means": [{"unit": 0, "scale": -1.0}, {"unit": 0, "scale": 1.0}],
            "covs": "identity",
        },
        "loss": "logistic",
        "regularizer": {"kind": "ridge", "lam": 0.3},
        "n": 50,
        "solver": {"panel_m": 4000, "quad_k": 21},
        "seed": 11,
        "test_points": 4000,
        "bins": 40,
    }
    rc = cli.main(["score-hist", "--config", _write(tmp_path, cfg),
                   "--out", str(tmp_path)])
    assert rc == 0
    with open(tmp_path / "score_hist.csv") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    # grid, theory pdf, baseline pdf, total counts + one column per class
    assert len(header) == 4 + 2
    assert len(data) == 40
    total = sum(int(float(r[3])) for r in data)
    per_class = sum(int(float(r[4])) + int(float(r[5])) for r in data)
    assert total == per_class


def test_score_hist_gaussian_pdfs_agree(tmp_path):
    cfg = _ridge_cfg(tmp_path, p=10, n=40)
    cfg["test_points"] = 20_000
    cfg["bins"] = 50
    rc = cli.main(["score-hist", "--config", _write(tmp_path, cfg)])
    assert rc == 0
    rows = list(csv.DictReader(open(tmp_path / "score_hist.csv")))
    gaps = [abs(float(r["theory_pdf"]) - float(r["gaussian_pdf"])) for r in rows]
    assert max(gaps) < 1e-2


def test_seed_override(tmp_path):
    cfg = _ridge_cfg(tmp_path, p=6, n=30)
    path = _write(tmp_path, cfg)
    cli.main(["solve", "--config", path, "--seed", "99"])
    sol = json.loads((tmp_path / "solution.json").read_text())
    assert sol["config"]["seed"] == 99


def test_bad_yaml_exits_1(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("model: [unclosed")
    assert cli.main(["solve", "--config", str(path)]) == 1


def test_missing_file_exits_1(tmp_path):
    assert cli.main(["solve", "--config", str(tmp_path / "nope.yaml")]) == 1

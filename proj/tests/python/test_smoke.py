import json
import math

import numpy as np
import pytest

import eotlab


def uniform(n=24, lo=-1.0, hi=1.0, dim=1, mass=1.0):
    return eotlab.sample_density(dim, n, lo, hi, {"kind": "uniform"}, mass=mass)


def test_version():
    assert eotlab.__version__ == "0.1.0"


def test_sinkhorn_marginals():
    lam = uniform()
    mu = eotlab.sample_density(1, 24, -1.0, 1.0, {"kind": "affine", "slope": [0.3]}, mass=1.0)
    res = eotlab.sinkhorn(lam, mu, epsilon=0.3, tol=1e-10)
    assert res.converged
    rep = eotlab.check_marginals(res.plan, 1e-8)
    assert rep.passed
    assert np.allclose(res.plan.row_sums(), np.asarray(lam.weights), atol=1e-8)


def test_exact_ot_matches_quantile_coupling_for_shift():
    w = np.full(8, 1.0 / 8)
    src = eotlab.AtomicMeasure(np.arange(8.0).reshape(1, 8), w)
    tgt = eotlab.AtomicMeasure((np.arange(8.0) + 0.5).reshape(1, 8), w)
    res = eotlab.exact_ot_atoms(src, tgt)
    assert res.certified
    assert math.isclose(res.cost, 0.25, rel_tol=1e-12)


def test_compose_with_identity():
    s = eotlab.Scaling(np.array([[2.0, 0.5], [0.5, 1.0]]), np.array([0.1, -0.2]), 1.2, 0.9)
    ident = eotlab.Scaling(np.eye(2), np.zeros(2), 1.0, 1.0)
    t = eotlab.compose(s, ident)
    assert np.allclose(t.A, s.A) and np.allclose(t.b, s.b)
    assert math.isclose(t.gamma, 1.2) and math.isclose(t.kappa, 0.9)


def test_inadmissible_scaling_raises():
    bad = eotlab.Scaling(np.eye(2), np.zeros(2), 10.0, 1.0)
    ident = eotlab.Scaling(np.eye(2), np.zeros(2), 1.0, 1.0)
    with pytest.raises(eotlab.AdmissibilityError):
        eotlab.compose(bad, ident)


def test_diagonal_plan_has_no_defect():
    lam = uniform(n=16)
    pi = eotlab.Coupling.diagonal(lam.atoms())
    assert eotlab.local_energy(pi, 0.5) == 0.0
    fit = eotlab.affine_fit(pi, 0.5)
    assert fit.defect < 1e-20


def test_cli_roundtrip(tmp_path):
    cfg = {
        "source": {"grid": {"dim": 1, "n": 32, "lo": -1, "hi": 1}, "density": {"kind": "uniform"}, "mass": 1},
        "plan": "sinkhorn",
        "epsilon": 0.2,
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert eotlab.run("solve", config=str(path), out=str(out)) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"]
    assert eotlab.run("experiment", experiment="nope", config=str(path), out=str(tmp_path / "x")) == 2

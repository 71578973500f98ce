import hashlib

import numpy as np
import pytest
from oracles import penalized_loglik
from scipy.special import expit

from gaitprint._irls import score
from gaitprint.exceptions import ConfigError, DataError
from gaitprint.funreg import (FunctionalRegressionIdentifier, PenaltyBlocks, TensorBases, TensorSplineFeaturizer,
                              default_lambda_grid, design_from_series, evaluate_surface, fit_penalized_irls,
                              full_penalty, funreg_one_vs_rest, linear_predictor_raw, select_lambda,
                              tensor_design_frames, write_surface_csv)
from gaitprint.funreg.fit import bernoulli_deviance, cv_deviance, lambda_scales, pick_lambda, stratified_folds
from gaitprint.glm import FitConfig
from gaitprint.ingest import series_from_signal
from gaitprint.synthetic import simulate_series

CFG = FitConfig(standardize=False)


@pytest.fixture(scope="module")
def small():
    series = simulate_series(n_subjects=3, seconds=24, S=40, seed=1)
    bases = TensorBases.default(40, K=4)
    td = design_from_series(series, bases)
    return series, bases, td, PenaltyBlocks.from_bases(bases)


def test_penalty_blocks_kron_order(small):
    _, bases, _, pen = small
    Md, Mv, Mu = pen.margins()
    # (a, b, c) -> a*16 + b*4 + c; the d-penalty couples a only
    e = lambda a, b, c: a * 16 + b * 4 + c
    assert Md[e(0, 1, 2), e(1, 1, 2)] == pen.P_d[0, 1]
    assert Md[e(0, 1, 2), e(1, 2, 2)] == 0
    assert Mu[e(3, 1, 0), e(3, 1, 1)] == pen.P_u[0, 1]
    with pytest.raises(ConfigError):
        pen.assemble((-1.0, 0.0, 0.0))


def test_full_penalty_leaves_intercept_free(small):
    *_, pen = small
    P = full_penalty(pen, (1.0, 2.0, 3.0), 1e-6)
    assert np.all(P[0] == 0) and np.all(P[:, 0] == 0)


def test_gradient_matches_central_differences(small):
    _, _, td, pen = small
    y = (np.array([s for s, _ in td.index]) == "2").astype(float)
    X = np.column_stack([np.ones(len(y)), td.C])
    rng = np.random.default_rng(0)
    for _ in range(10):
        lam = tuple(rng.uniform(0.01, 10, 3))
        P = full_penalty(pen, lam, 1e-6)
        beta = rng.normal(scale=2.0, size=X.shape[1])
        g = score(X, y, beta, P)
        fd = np.empty_like(beta)
        for k in range(len(beta)):
            h = 1e-5 * max(1.0, abs(beta[k]))
            e = np.zeros_like(beta)
            e[k] = h
            fd[k] = (penalized_loglik(X, y, beta + e, P) - penalized_loglik(X, y, beta - e, P)) / (2 * h)
        assert np.linalg.norm(fd - g) / np.linalg.norm(g) < 1e-5


def test_fit_converges_and_history_decreases(small):
    _, _, td, pen = small
    y = (np.array([s for s, _ in td.index]) == "1").astype(float)
    fit = fit_penalized_irls(td.C, y, pen, (1.0, 1.0, 1.0), CFG, target="1")
    assert fit.converged
    assert np.all(np.diff(fit.history) <= 0)


def test_huge_penalty_collapses_to_null_space(small):
    _, bases, td, pen = small
    y = (np.array([s for s, _ in td.index]) == "3").astype(float)
    s = lambda_scales(td.C, pen)
    rough = lambda f: sum(float(f.beta @ M @ f.beta) for M in pen.margins())
    loose = fit_penalized_irls(td.C, y, pen, tuple(1e-4 * s), CFG)
    stiff = fit_penalized_irls(td.C, y, pen, (1e8, 1e8, 1e8), CFG)
    assert rough(stiff) < 1e-6 * rough(loose)
    # multilinear surfaces (null space of all three margins) are unpenalized
    g = [b.greville() for b in (bases.d, bases.v, bases.u)]
    c = np.einsum("a,b,c->abc", 1 + g[0], 2 - g[1], g[2]).ravel()
    assert sum(c @ M @ c for M in pen.margins()) < 1e-9 * (c @ c)


def test_selected_lambda_beats_unpenalized_on_held_out_data():
    rng = np.random.default_rng(5)
    V = rng.uniform(0.2, 2.8, size=(400, 30))
    bases = TensorBases.default(30, K=5)
    pen = PenaltyBlocks.from_bases(bases)
    C = tensor_design_frames(V, bases)
    d, v = V[:, :-1], V[:, 1:]
    eta = 4.0 * ((d - 1.5) * (v - 1.5)).mean(axis=1) * 3 - 0.2
    y = (rng.uniform(size=400) < expit(eta)).astype(float)
    tr, te = slice(0, 250), slice(250, 400)
    grid = default_lambda_grid(C[tr], pen, (1e-4, 1e-2, 1.0))
    lam = select_lambda(C[tr], y[tr], pen, grid, folds=5, seed=0, cfg=CFG)
    chosen = fit_penalized_irls(C[tr], y[tr], pen, lam, CFG)
    raw = fit_penalized_irls(C[tr], y[tr], pen, (0.0, 0.0, 0.0), CFG)
    dev = lambda f: bernoulli_deviance(y[te], f.linear_predictor(C[te]))
    assert dev(chosen) <= dev(raw)


def test_lambda_selection_rules(small):
    _, _, td, pen = small
    y = (np.array([s for s, _ in td.index]) == "1").astype(float)
    assert select_lambda(td.C, y, pen, [(1.0, 2.0, 3.0)]) == (1.0, 2.0, 3.0)
    assert pick_lambda([(1.0,) * 3, (1.0,) * 3], [5.0, 5.0]) == (1.0, 1.0, 1.0)
    assert pick_lambda([(1.0,) * 3, (10.0,) * 3], [5.0, 5.0]) == (10.0, 10.0, 10.0)
    assert pick_lambda([(1.0,) * 3, (10.0,) * 3], [4.0, 5.0]) == (1.0, 1.0, 1.0)
    with pytest.raises(ConfigError):
        select_lambda(td.C, y, pen, [])


def test_stratified_folds_balance():
    y = np.r_[np.ones(10), np.zeros(40)]
    f = stratified_folds(y, 5, seed=0)
    for k in range(5):
        assert (y[f == k] == 1).sum() == 2 and (f == k).sum() == 10


def test_cv_deviance_shape(small):
    _, _, td, pen = small
    y = (np.array([s for s, _ in td.index]) == "1").astype(float)
    scores = cv_deviance(td.C, y, pen, [(0.1,) * 3, (1.0,) * 3], folds=3)
    assert scores.shape == (2,) and np.all(scores > 0)


def test_one_vs_rest_counts_and_order_invariance(small):
    _, _, td, pen = small
    subjects = [s for s, _ in td.index]
    grid = default_lambda_grid(td.C, pen, (1e-2,))
    digest = hashlib.sha256(td.C.tobytes()).hexdigest()
    fits, failures = funreg_one_vs_rest(td.C, subjects, pen, grid, CFG)
    assert list(fits) == ["1", "2", "3"] and failures == {}
    assert hashlib.sha256(td.C.tobytes()).hexdigest() == digest
    perm = np.random.default_rng(0).permutation(len(subjects))
    fits2, _ = funreg_one_vs_rest(td.C[perm], [subjects[i] for i in perm], pen, grid, CFG)
    for s in fits:
        np.testing.assert_allclose(fits2[s].beta, fits[s].beta, atol=1e-8)


def test_one_vs_rest_shared_selection_runs(small):
    _, _, td, pen = small
    subjects = [s for s, _ in td.index]
    grid = default_lambda_grid(td.C, pen, (1e-3, 1e-1))
    fits, _ = funreg_one_vs_rest(td.C, subjects, pen, grid, CFG, folds=3, n_select=2)
    assert len({f.lam for f in fits.values()}) == 1
    fits, _ = funreg_one_vs_rest(td.C, subjects, pen, grid, CFG, folds=3, selection="per-subject")
    assert all(f.lam in grid for f in fits.values())
    with pytest.raises(ConfigError):
        funreg_one_vs_rest(td.C, subjects, pen, grid, CFG, selection="bogus")
    with pytest.raises(DataError):
        funreg_one_vs_rest(td.C, ["1"] * len(subjects), pen, grid, CFG)


def test_raw_route_matches_cached_design(small):
    series, bases, td, pen = small
    y = (np.array([s for s, _ in td.index]) == "2").astype(float)
    fit = fit_penalized_irls(td.C, y, pen, (0.5, 0.5, 0.5), CFG)
    eta = fit.linear_predictor(td.C)
    frames = [f for s in series for f in s.frames]
    for i in (0, 30, 71):
        assert linear_predictor_raw(fit, bases, frames[i]) == pytest.approx(eta[i], abs=1e-10)


def test_surface_csv(tmp_path, small):
    _, bases, td, pen = small
    y = (np.array([s for s, _ in td.index]) == "2").astype(float)
    fit = fit_penalized_irls(td.C, y, pen, (0.5, 0.5, 0.5), CFG)
    write_surface_csv(tmp_path / "F.csv", fit, bases, n_grid=3, lags=[1, 20])
    lines = (tmp_path / "F.csv").read_text().splitlines()
    assert lines[0] == "d,v,u,F" and len(lines) == 1 + 18
    d, v, u, F = map(float, lines[5].split(","))
    assert F == pytest.approx(evaluate_surface(fit, bases, [d], [v], [u])[0], rel=1e-12)


def test_shifted_sinusoid_identified():
    t = np.arange(60 * 50) / 100
    rng = np.random.default_rng(2)
    a = 1.3 + 0.4 * np.sin(2 * np.pi * 1.0 * t) + 0.05 * rng.standard_normal(t.size)
    b = 1.0 + 0.4 * np.sin(2 * np.pi * 1.0 * t) + 0.05 * rng.standard_normal(t.size)
    sa, sb = series_from_signal("A", a, 50), series_from_signal("B", b, 50)
    X = np.vstack([sa.matrix(), sb.matrix()])
    y = np.array(["A"] * sa.J + ["B"] * sb.J)
    tr = np.r_[0:45, 60:105]
    te = np.r_[45:60, 105:120]
    model = FunctionalRegressionIdentifier(n_basis=5, relative_lambdas=(1e-2, 1.0), folds=3).fit(X[tr], y[tr])
    P = model.predict_proba(X[te])
    mean_a = P[y[te] == "A"].mean(axis=0)
    assert model.classes_[np.argmax(mean_a)] == "A"
    assert (model.predict(X[te]) == y[te]).mean() > 0.9


def test_featurizer_params():
    f = TensorSplineFeaturizer(n_basis=4)
    assert f.get_params()["n_basis"] == 4
    out = f.fit_transform(np.full((2, 20), 1.0))
    assert out.shape == (2, 64)

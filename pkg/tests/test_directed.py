import numpy as np
import pytest
from conftest import assert_monotone, make_views, orthonormal_columns

from scca import (AccessoryVector, ConvergenceSpec, DirectedParams,
                  EmptySupportError, GammaMatrix, SingularityError,
                  StackedProblem, ViewMatrix, center_scale, compute_beta,
                  directed_fit, directed_pattern_dot, directed_pattern_reg,
                  directed_stacked, directed_two_stage, gen_rank_one,
                  multiview_scca, pattern_l1)
from scca.directed import UnivariateSelector
from scca.simulate import RankOneSpec


def _directed_inputs(n=20, p1=6, p2=8, seed=0):
    rng = np.random.default_rng(seed)
    x1, x2 = make_views(n, p1, p2, seed=seed)
    y = AccessoryVector(rng.standard_normal(n)).center()
    block = x1.data.T @ x2.data / n
    a1 = x1.data.T @ y.values / n
    a2 = x2.data.T @ y.values / n
    return x1, x2, y, block, a1, a2


def test_eps_zero_reduces_to_pattern_l1_bitwise():
    x1, x2, _y, block, a1, a2 = _directed_inputs(seed=1)
    gamma2 = 0.3 * np.linalg.norm(block, axis=0).max()
    params = DirectedParams(0.0, gamma2, eps1=0.0, eps2=0.0)
    directed = directed_pattern_dot(block, a1, a2, params)
    plain = pattern_l1(block, gamma2)
    assert directed.pattern.bits.tolist() == plain.pattern.bits.tolist()
    np.testing.assert_array_equal(directed.z_lead.values, plain.z_lead.values)


def test_zero_block_follows_alignment():
    x1, _x2, _y, _block, a1, a2 = _directed_inputs(seed=2)
    block = np.zeros((a1.size, a2.size))
    params = DirectedParams(0.0, 0.0, eps1=1.0, eps2=1.0)
    res = directed_pattern_dot(block, a1, a2, params)
    expected = a1 / np.linalg.norm(a1)
    np.testing.assert_allclose(res.z_lead.values, expected, atol=1e-12)


def test_directed_screening_bound(rng):
    # coordinates with ||c_i|| + eps2 ||x2ty_i|| <= gamma2 are always inactive
    for seed in range(10):
        x1, x2, _y, block, a1, a2 = _directed_inputs(seed=seed)
        bound = np.linalg.norm(block, axis=0) + 1.3 * np.abs(a2)
        gamma2 = float(np.quantile(bound, 0.5))
        params = DirectedParams(0.0, gamma2, eps1=0.7, eps2=1.3)
        try:
            res = directed_pattern_dot(block, a1, a2, params, restarts=4, seed=seed)
        except EmptySupportError:
            continue
        screened_out = bound <= gamma2
        assert not np.any(res.pattern.bits & screened_out)


def test_directed_objective_trace_monotone():
    x1, x2, _y, block, a1, a2 = _directed_inputs(seed=3)
    gamma2 = 0.25 * np.linalg.norm(block, axis=0).max()
    params = DirectedParams(0.0, gamma2, eps1=0.8, eps2=0.6)
    res = directed_pattern_dot(block, a1, a2, params,
                               conv=ConvergenceSpec(objective_track=True))
    assert_monotone(res.objective_trace)


def test_directed_recovers_support_better_under_noise():
    # paired runs on the planted generator at a threshold where the
    # undirected solver misses part of the support
    improvements = []
    for seed in range(6):
        spec = RankOneSpec(p=(120, 100), n=40, sigma=(0.45, 0.45), seed=seed,
                           supports=((10, 10), (10, 10)))
        x1, x2, truths = gen_rank_one(spec)
        x1c, x2c = center_scale(x1), center_scale(x2)
        y = AccessoryVector(x1c.data @ truths[0]).center()
        block = x1c.data.T @ x2c.data / x1c.n
        a2 = x2c.data.T @ y.values / x1c.n
        a1 = x1c.data.T @ y.values / x1c.n
        gamma2 = 0.62 * np.linalg.norm(block, axis=0).max()
        plain = pattern_l1(block, gamma2)
        directed = directed_pattern_dot(
            block, a1, a2, DirectedParams(0.0, gamma2, eps1=0.3, eps2=0.3))
        support = truths[1] != 0
        eta_plain = (plain.pattern.bits & support).sum() / support.sum()
        eta_dir = (directed.pattern.bits & support).sum() / support.sum()
        improvements.append(eta_dir - eta_plain)
    assert np.mean(improvements) > 0
    assert min(improvements) >= 0


# ---------------------------------------------------------------- regression variant

def test_reg_equals_dot_on_orthonormal_design(rng):
    n, p1, p2 = 24, 5, 6
    x1 = ViewMatrix(orthonormal_columns(n, p1, rng), [f"A{j}" for j in range(p1)],
                    centered=True)
    x2 = ViewMatrix(orthonormal_columns(n, p2, rng), [f"B{j}" for j in range(p2)],
                    centered=True)
    y = AccessoryVector(rng.standard_normal(n)).center()
    block = x1.data.T @ x2.data / n
    raw1 = x1.data.T @ y.values
    raw2 = x2.data.T @ y.values
    beta1 = compute_beta(x1, y)
    beta2 = compute_beta(x2, y)
    gamma2 = 0.25 * (np.linalg.norm(block, axis=0) + np.abs(raw2)).max()
    params = DirectedParams(0.0, gamma2, eps1=1.0, eps2=1.0)
    dot = directed_pattern_dot(block, raw1, raw2, params)
    reg = directed_pattern_reg(block, beta1, beta2, params)
    assert dot.pattern.bits.tolist() == reg.pattern.bits.tolist()
    assert np.abs(dot.z_lead.values - reg.z_lead.values).max() < 1e-10
    assert np.abs(dot.z_partner.values - reg.z_partner.values).max() < 1e-10


def test_reg_with_zero_beta_reduces_to_plain():
    _x1, _x2, _y, block, a1, a2 = _directed_inputs(seed=4)
    gamma2 = 0.3 * np.linalg.norm(block, axis=0).max()
    params = DirectedParams(0.0, gamma2, eps1=1.0, eps2=1.0)
    reg = directed_pattern_reg(block, np.zeros_like(a1), np.zeros_like(a2), params)
    plain = pattern_l1(block, gamma2)
    assert reg.pattern.bits.tolist() == plain.pattern.bits.tolist()


def test_compute_beta_contracts(rng):
    n, p = 24, 3
    q = orthonormal_columns(n, p, rng)
    x = ViewMatrix(q, ["a", "b", "c"], centered=True)
    y = AccessoryVector(q[:, 0].copy()).center()
    np.testing.assert_allclose(compute_beta(x, y), [1.0, 0.0, 0.0], atol=1e-10)
    # orthogonal accessory -> zero coefficients
    resid = rng.standard_normal(n)
    resid -= q @ (q.T @ resid)
    resid -= resid.mean()
    resid -= q @ (q.T @ resid)
    np.testing.assert_allclose(compute_beta(x, AccessoryVector(resid, centered=False).center()),
                               np.zeros(3), atol=1e-10)


def test_compute_beta_matches_normal_equations(rng):
    x1, _ = make_views(10, 3, 2, seed=7)
    y = AccessoryVector(rng.standard_normal(10)).center()
    ridge = 0.3
    beta = compute_beta(x1, y, ridge=ridge)
    oracle = np.linalg.solve(x1.data.T @ x1.data + ridge * np.eye(3),
                             x1.data.T @ y.values)
    assert np.abs(beta - oracle).max() < 1e-10


def test_compute_beta_singular_and_univariate(rng):
    data = rng.standard_normal((10, 3))
    data[:, 2] = data[:, 0]  # collinear
    data -= data.mean(axis=0)
    x = ViewMatrix(data, ["a", "b", "c"], centered=True)
    y = AccessoryVector(rng.standard_normal(10)).center()
    with pytest.raises(SingularityError):
        compute_beta(x, y)
    uni = compute_beta(x, y, ridge=0.1, univariate=True)
    oracle = [data[:, j] @ y.values / (data[:, j] @ data[:, j] + 0.1) for j in range(3)]
    np.testing.assert_allclose(uni, oracle, atol=1e-12)


# ---------------------------------------------------------------- stacked form

def test_stacked_matches_grid_oracle(rng):
    x1, x2 = make_views(25, 2, 2, seed=9)
    y = AccessoryVector(rng.standard_normal(25)).center()
    sp = StackedProblem.build(x1, x2, eps1=0.8, eps2=1.2)
    root_vals = np.linalg.eigvalsh(sp.tilde_c)
    assert root_vals.min() > -1e-10
    gamma1 = gamma2 = 0.05
    pattern, v_star, z_star = directed_stacked(sp, y, gamma1, gamma2, restarts=8)
    # dense grid oracle on the stacked objective
    grid = np.random.default_rng(1).normal(size=(40000, 4))
    grid /= np.linalg.norm(grid, axis=1, keepdims=True)
    root = np.linalg.cholesky(sp.tilde_c + 1e-12 * np.eye(4))  # PSD check only
    from scca.directed import _symmetric_sqrt
    root = _symmetric_sqrt(sp.tilde_c)
    offsets = 2.0 * (sp.tilde_x.T @ y.values)
    gvec = np.array([gamma1, gamma1, gamma2, gamma2])
    scores = (np.maximum(np.abs(grid @ root + offsets) - gvec, 0.0) ** 2).sum(axis=1)
    proj = root @ v_star.values + offsets
    solver_score = float((np.maximum(np.abs(proj) - gvec, 0.0) ** 2).sum())
    assert solver_score >= scores.max() * (1 - 1e-6)
    # the grid maximizer induces the same stacked pattern
    v_best = grid[np.argmax(scores)]
    oracle_bits = np.abs(root @ v_best + offsets) > gvec
    assert pattern.bits.tolist() == oracle_bits.tolist()
    # closed-form z  matches the partner formula at v*
    w = np.maximum(np.abs(proj) - gvec, 0.0)
    np.testing.assert_allclose(z_star.values,
                               np.sign(proj) * w / np.linalg.norm(w), atol=1e-12)


def test_stacked_side_threshold_silences_view_one(rng):
    x1, x2 = make_views(25, 3, 3, seed=10)
    y = AccessoryVector(rng.standard_normal(25)).center()
    sp = StackedProblem.build(x1, x2, eps1=1.0, eps2=1.0)
    from scca.directed import _symmetric_sqrt
    root = _symmetric_sqrt(sp.tilde_c)
    offsets = 2.0 * (sp.tilde_x.T @ y.values)
    bound1 = (np.linalg.norm(root, axis=0) + np.abs(offsets))[:3].max() * 1.01
    pattern, _v, _z = directed_stacked(sp, y, bound1, 1e-6)
    assert not pattern.bits[:3].any()
    assert pattern.bits[3:].any()


def test_stacked_rejects_indefinite():
    from scca.directed import _symmetric_sqrt
    from scca import IndefiniteMatrixError
    with pytest.raises(IndefiniteMatrixError):
        _symmetric_sqrt(np.diag([1.0, -0.5]))


# ---------------------------------------------------------------- two-stage

def test_two_stage_keep_all_matches_undirected(rng):
    x1, x2 = make_views(20, 6, 5, seed=12)
    y = AccessoryVector(rng.standard_normal(20)).center()
    block = x1.data.T @ x2.data / 20
    g1 = 0.2 * np.linalg.norm(block, axis=1).max()
    g2 = 0.2 * np.linalg.norm(block, axis=0).max()
    from scca.solve import fit_pair
    undirected = fit_pair(x1, x2, g1, g2)
    two = directed_two_stage(x1, x2, y, UnivariateSelector(keep_fraction=1.0),
                             g1, g2)
    np.testing.assert_allclose(two.directions[0], undirected.directions[0], atol=1e-12)
    np.testing.assert_allclose(two.correlations, undirected.correlations, atol=1e-12)


def test_two_stage_keeps_matching_column(rng):
    x1, x2 = make_views(20, 6, 5, seed=13)
    y = AccessoryVector(x1.data[:, 2].copy()).center()
    selector = UnivariateSelector(keep_fraction=0.34)
    q1 = selector.select(x1, y)
    assert 2 in q1.tolist()


def test_two_stage_support_contained_in_selection():
    spec = RankOneSpec(p=(60, 50), n=30, sigma=(0.15, 0.15), seed=5,
                       supports=((6, 6), (6, 6)))
    x1, x2, truths = gen_rank_one(spec)
    x1c, x2c = center_scale(x1), center_scale(x2)
    y = AccessoryVector(x1c.data @ truths[0]).center()
    selector = UnivariateSelector(keep_fraction=0.5)
    q1, q2 = selector.select(x1c, y), selector.select(x2c, y)
    block = x1c.data.T @ x2c.data / 30
    g1 = 0.3 * np.linalg.norm(block, axis=1).max()
    g2 = 0.3 * np.linalg.norm(block, axis=0).max()
    sol = directed_two_stage(x1c, x2c, y, selector, g1, g2)
    assert set(np.flatnonzero(sol.patterns[0][0].bits)) <= set(q1.tolist())
    assert set(np.flatnonzero(sol.patterns[1][0].bits)) <= set(q2.tolist())


def test_two_stage_empty_selection_errors(rng):
    x1, x2 = make_views(12, 4, 4, seed=14)
    y = AccessoryVector(rng.standard_normal(12)).center()
    with pytest.raises(EmptySupportError):
        directed_two_stage(x1, x2, y, UnivariateSelector(keep_fraction=0.0, min_keep=0),
                           0.0, 0.0)


# ---------------------------------------------------------------- equivalences

def test_multiview_with_accessory_view_matches_dot():
    spec = RankOneSpec(p=(40, 30), n=25, sigma=(0.2, 0.2), seed=17,
                       supports=((5, 5), (5, 5)))
    x1, x2, truths = gen_rank_one(spec)
    x1c, x2c = center_scale(x1), center_scale(x2)
    rng = np.random.default_rng(17)
    y_raw = x1c.data @ truths[0] + 0.1 * rng.standard_normal(25)
    y = AccessoryVector(y_raw).center()
    block = x1c.data.T @ x2c.data / 25
    g1 = 0.35 * np.linalg.norm(block, axis=1).max()
    g2 = 0.35 * np.linalg.norm(block, axis=0).max()
    params = DirectedParams(g1, g2, eps1=1.0, eps2=1.0)
    dot = directed_fit(x1c, x2c, y, params, mode="dot",
                       conv=ConvergenceSpec(tol=1e-12))
    yview = ViewMatrix(y.values[:, None], ["y"], centered=True)
    gam = GammaMatrix(np.array([[0.0, g1, 0.0], [g2, 0.0, 0.0], [0.0, 0.0, 0.0]]))
    mv = multiview_scca([x1c, x2c, yview], gam, conv=ConvergenceSpec(tol=1e-12))
    assert mv.patterns[0][0].bits.tolist() == dot.patterns[0][0].bits.tolist()
    assert mv.patterns[1][0].bits.tolist() == dot.patterns[1][0].bits.tolist()

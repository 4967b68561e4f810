"""Fixed-point ascent, Newton refinement, classification and the k=2 oracle."""

import numpy as np
import pytest

from gmmodes.constructions import (
    cross_example,
    duistermaat_triangle,
    generic_arrangement,
    arrangement_scenario,
    univariate_pair,
)
from gmmodes.errors import TooFewSamples
from gmmodes.mixture import affine_transform, make_mixture
from gmmodes.modefinder import (
    AscentOptions,
    ascend,
    default_starts,
    find_critical_points,
    fixed_point_step,
    ridgeline_oracle_k2,
    ridgeline_point,
    verify_ridgeline_membership,
)


def random_two_component(rng, d):
    covs = []
    for _ in range(2):
        A = rng.normal(size=(d, d))
        covs.append(A @ A.T + 0.3 * np.eye(d))
    alpha = rng.uniform(0.15, 0.85)
    means = rng.normal(scale=1.5, size=(2, d))
    return make_mixture([alpha, 1 - alpha], means, covs)


def run_multistart(mix, budget=200, seed=0):
    rng = np.random.default_rng(seed)
    sigma = np.sqrt(max(np.max(np.linalg.eigvalsh(c.cov)) for c in mix.components))
    lo = mix._means.min(axis=0) - 3 * sigma
    hi = mix._means.max(axis=0) + 3 * sigma
    starts = [c.mean for c in mix.components]
    for i in range(mix.k):
        for j in range(i + 1, mix.k):
            starts.append(0.5 * (mix._means[i] + mix._means[j]))
    fill = rng.uniform(lo, hi, size=(max(0, budget - len(starts)), mix.dim))
    starts = np.vstack([starts, fill])
    return find_critical_points(mix, starts, search_box=(lo, hi))


# ----------------------------------------------------------------------
# Options
# ----------------------------------------------------------------------

def test_options_validation():
    with pytest.raises(ValueError):
        AscentOptions(max_fixed_point_iters=0)
    with pytest.raises(ValueError):
        AscentOptions(gradient_tolerance=0.0)
    with pytest.raises(ValueError):
        AscentOptions(dedup_radius=-1.0)


# ----------------------------------------------------------------------
# Fixed-point step
# ----------------------------------------------------------------------

def test_single_gaussian_one_step():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(3, 3))
    mu = np.array([1.0, -2.0, 0.5])
    mix = make_mixture([1.0], [mu], [A @ A.T + np.eye(3)])
    x1 = fixed_point_step(mix, rng.normal(size=3))
    assert np.allclose(x1, mu, atol=1e-12)


def test_homoscedastic_step_is_convex_combination():
    cov = np.array([[1.0, 0.3], [0.3, 2.0]])
    mix = make_mixture([0.3, 0.7], [[0.0, 0.0], [2.0, 1.0]], [cov, cov])
    x = np.array([0.7, 0.4])
    r = mix.responsibilities(x[None, :])[:, 0]
    expect = r[0] * mix._means[0] + r[1] * mix._means[1]
    assert np.allclose(fixed_point_step(mix, x), expect, atol=1e-12)


def test_critical_point_is_fixed():
    mix = cross_example().mixture
    rep = run_multistart(mix, budget=60)
    for cp in rep.critical_points:
        x1 = fixed_point_step(mix, cp.location)
        assert np.linalg.norm(x1 - cp.location) <= 1e-10


# ----------------------------------------------------------------------
# Ascend
# ----------------------------------------------------------------------

def test_ascend_cross_basins():
    mix = cross_example().mixture
    near_mean = ascend(mix, [0.9, 0.1])
    assert near_mean.kind == "mode"
    assert np.linalg.norm(near_mean.location - [1, 0]) < 0.2
    central = ascend(mix, [0.05, 0.05])
    assert central.kind == "mode"
    assert np.linalg.norm(central.location) < 0.2


def test_ascend_duistermaat_origin():
    mix = duistermaat_triangle(0.72).mixture
    cp = ascend(mix, [0.0, 0.0])
    assert cp.kind == "mode"
    assert np.linalg.norm(cp.location) < 1e-8


def test_ascent_monotone_log_density():
    # the damped iteration may not lose more than 1e-12 per accepted step
    mix = duistermaat_triangle(0.6).mixture
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.uniform(-2, 2, size=2)
        logf = mix.log_density(x[None, :])[0]
        for _ in range(50):
            x_new = fixed_point_step(mix, x)
            logf_new = mix.log_density(x_new[None, :])[0]
            assert logf_new >= logf - 1e-12
            if np.linalg.norm(x_new - x) < 1e-14:
                break
            x, logf = x_new, logf_new


# ----------------------------------------------------------------------
# Starts
# ----------------------------------------------------------------------

def test_default_starts_structure():
    scen = cross_example()
    starts = default_starts(scen, budget=50, seed=1)
    assert len(starts) == 50
    assert any(np.allclose(s, [1, 0]) for s in starts)
    assert any(np.allclose(s, [0, 1]) for s in starts)
    assert any(np.allclose(s, [0.5, 0.5]) for s in starts)


def test_default_starts_include_vertices():
    arr = generic_arrangement(2, 3, seed=1)
    scen = arrangement_scenario(arr, 0.05)
    starts = default_starts(scen, budget=60, seed=1)
    for v in arr.vertices:
        assert any(np.allclose(s, v) for s in starts)


def test_default_starts_deterministic():
    scen = duistermaat_triangle(0.72)
    a = default_starts(scen, budget=100, seed=9)
    b = default_starts(scen, budget=100, seed=9)
    assert np.array_equal(a, b)


# ----------------------------------------------------------------------
# Multistart reports
# ----------------------------------------------------------------------

def test_single_gaussian_report():
    mu = np.array([0.3, -1.2])
    mix = make_mixture([1.0], [mu], [np.diag([1.0, 2.0])])
    rep = run_multistart(mix, budget=20)
    assert rep.mode_count == 1
    assert np.linalg.norm(rep.modes[0].location - mu) < 1e-9
    assert rep.bound_check.lower == 1 and rep.bound_check.upper == 44


def test_univariate_pair_critical_points():
    mix = univariate_pair(0, 1, 2.1, 1, 0.5).mixture
    rep = run_multistart(mix, budget=40)
    assert rep.mode_count == 2
    assert rep.count("antimode") == 1
    assert len(rep.critical_points) == 3


def test_duistermaat_four_modes():
    scen = duistermaat_triangle(0.72)
    starts = default_starts(scen, budget=150, seed=1)
    rep = find_critical_points(scen.mixture, starts, search_box=scen.search_box)
    assert rep.mode_count == 4


def test_report_classification_invariants():
    scen = duistermaat_triangle(0.72)
    starts = default_starts(scen, budget=150, seed=1)
    rep = find_critical_points(scen.mixture, starts, search_box=scen.search_box)
    opts = AscentOptions()
    for cp in rep.critical_points:
        assert cp.gradient_norm <= opts.gradient_tolerance
        if cp.kind == "mode" and not cp.degenerate_hessian:
            tol = opts.degenerate_eigen_tolerance * np.max(np.abs(cp.hessian_eigenvalues))
            assert np.all(cp.hessian_eigenvalues < -tol)


def test_report_serialization():
    rep = run_multistart(cross_example().mixture, budget=60)
    doc = rep.to_dict()
    assert doc["mode_count"] == 3
    csv_text = rep.to_csv()
    assert csv_text.splitlines()[0] == "x_1,x_2,log_density,kind,min_eigenvalue,converged_from"
    assert len(csv_text.splitlines()) == 1 + len(rep.critical_points)


def test_mode_count_respects_upper_bound():
    rng = np.random.default_rng(4)
    for _ in range(10):
        d = int(rng.integers(1, 4))
        k = int(rng.integers(1, 5))
        weights = rng.dirichlet(np.ones(k))
        means = rng.normal(scale=2, size=(k, d))
        covs = []
        for _ in range(k):
            A = rng.normal(size=(d, d))
            covs.append(A @ A.T + 0.3 * np.eye(d))
        mix = make_mixture(weights, means, covs)
        rep = run_multistart(mix, budget=80, seed=5)
        assert rep.bound_check.mode_count_within_upper


# ----------------------------------------------------------------------
# Ridgeline
# ----------------------------------------------------------------------

def test_ridgeline_point_vertex_of_simplex():
    mix = cross_example().mixture
    means = [c.mean for c in mix.components]
    covs = [c.cov for c in mix.components]
    x = ridgeline_point(means, covs, [1.0, 0.0])
    assert np.allclose(x, means[0], atol=1e-12)


def test_ridgeline_point_homoscedastic():
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    means = [np.array([0.0, 0.0]), np.array([1.0, 2.0]), np.array([-1.0, 1.0])]
    alpha = np.array([0.2, 0.5, 0.3])
    x = ridgeline_point(means, [cov] * 3, alpha)
    assert np.allclose(x, sum(a * m for a, m in zip(alpha, means)), atol=1e-12)


def test_ridgeline_point_direct_solve():
    mix = cross_example().mixture
    P1 = np.linalg.inv(mix.components[0].cov)
    P2 = np.linalg.inv(mix.components[1].cov)
    expect = np.linalg.solve(P1 + P2, P1 @ mix._means[0] + P2 @ mix._means[1])
    x = ridgeline_point(mix.means, [c.cov for c in mix.components], [0.5, 0.5])
    assert np.allclose(x, expect, atol=1e-10)


def test_oracle_cross_five_critical_points():
    mix = cross_example().mixture
    pts = ridgeline_oracle_k2(mix, samples=4000)
    kinds = sorted(p.kind for p in pts)
    assert len(pts) == 5
    assert kinds.count("mode") == 3
    assert kinds.count("saddle") == 2


def test_oracle_univariate_three():
    mix = univariate_pair(0, 1, 2.1, 1, 0.5).mixture
    pts = ridgeline_oracle_k2(mix, samples=2000)
    assert len(pts) == 3
    assert sum(p.kind == "mode" for p in pts) == 2


def test_oracle_identical_components():
    mix = make_mixture([0.5, 0.5], [[1.0], [1.0]], [[[1.0]], [[1.0]]])
    pts = ridgeline_oracle_k2(mix, samples=2000)
    assert len(pts) == 1
    assert np.allclose(pts[0].location, [1.0], atol=1e-10)


def test_oracle_sample_floor():
    with pytest.raises(TooFewSamples):
        ridgeline_oracle_k2(cross_example().mixture, samples=100)


def test_oracle_requires_two_components():
    with pytest.raises(ValueError):
        ridgeline_oracle_k2(duistermaat_triangle(0.72).mixture)


def test_oracle_matches_multistart_sample():
    rng = np.random.default_rng(10)
    for _ in range(25):
        d = int(rng.integers(1, 4))
        mix = random_two_component(rng, d)
        rep = run_multistart(mix, budget=200, seed=3)
        oracle = ridgeline_oracle_k2(mix, samples=4000)
        o_modes = [p for p in oracle if p.kind == "mode"]
        assert rep.mode_count == len(o_modes)
        for m in rep.modes:
            assert min(np.linalg.norm(m.location - p.location) for p in o_modes) <= rep.dedup_radius


def test_ridgeline_membership():
    mix = cross_example().mixture
    rep = run_multistart(mix, budget=60)
    diam = np.linalg.norm(np.ptp(mix._means, axis=0)) + 6.0
    for cp in rep.critical_points:
        assert verify_ridgeline_membership(mix, cp) <= 1e-8 * diam
    # a non-critical point has a visible residual
    from gmmodes.modefinder import CriticalPoint

    fake = CriticalPoint(
        location=0.5 * (mix._means[0] + mix._means[1]),
        log_density=0.0,
        gradient_norm=1.0,
        hessian_eigenvalues=np.array([0.0, 0.0]),
        kind="degenerate",
    )
    assert verify_ridgeline_membership(mix, fake) > 1e-3


def test_ridgeline_membership_single_gaussian():
    mix = make_mixture([1.0], [[0.5, -0.5]], [np.eye(2)])
    rep = run_multistart(mix, budget=10)
    assert verify_ridgeline_membership(mix, rep.modes[0]) <= 1e-12


# ----------------------------------------------------------------------
# Structural properties (small-scale versions; full runs in acceptance)
# ----------------------------------------------------------------------

def test_univariate_mode_ceiling_small():
    rng = np.random.default_rng(20)
    for _ in range(40):
        k = int(rng.integers(1, 7))
        weights = rng.dirichlet(np.ones(k))
        means = rng.uniform(-5, 5, size=(k, 1))
        covs = [[[float(rng.uniform(0.1, 2.0)) ** 2]] for _ in range(k)]
        mix = make_mixture(weights, means, covs)
        rep = run_multistart(mix, budget=80, seed=21)
        assert rep.mode_count <= k


def test_affine_invariance_small():
    rng = np.random.default_rng(22)
    scen = cross_example()
    starts = default_starts(scen, budget=80, seed=1)
    base = find_critical_points(scen.mixture, starts, search_box=scen.search_box)
    for _ in range(5):
        A = rng.normal(size=(2, 2)) + 2 * np.eye(2)
        b = rng.normal(size=2)
        moved = affine_transform(scen.mixture, A, b)
        rep = find_critical_points(moved, starts @ A.T + b)
        assert rep.mode_count == base.mode_count


def test_homoscedastic_hull_small():
    rng = np.random.default_rng(23)
    for _ in range(10):
        d = int(rng.integers(1, 4))
        k = int(rng.integers(2, 6))
        A = rng.normal(size=(d, d))
        cov = A @ A.T + 0.3 * np.eye(d)
        means = rng.normal(scale=1.5, size=(k, d))
        mix = make_mixture(rng.dirichlet(np.ones(k)), means, [cov] * k)
        rep = run_multistart(mix, budget=80, seed=24)
        for cp in rep.critical_points:
            assert _hull_distance(means, cp.location) <= 1e-6


def _hull_distance(points, x):
    """Exact distance to the convex hull by face enumeration (small k)."""
    import itertools

    k = len(points)
    best = np.inf
    for r in range(1, k + 1):
        for subset in itertools.combinations(range(k), r):
            M = np.asarray(points)[list(subset)]
            # minimize ||M^T w - x|| subject to sum w = 1 via KKT system
            G = M @ M.T
            n = len(subset)
            KKT = np.block([[G, np.ones((n, 1))], [np.ones((1, n)), np.zeros((1, 1))]])
            rhs = np.concatenate([M @ x, [1.0]])
            try:
                sol = np.linalg.solve(KKT, rhs)
            except np.linalg.LinAlgError:
                continue
            w = sol[:n]
            if np.all(w >= -1e-9):
                best = min(best, np.linalg.norm(M.T @ w - x))
    return best

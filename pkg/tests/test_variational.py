import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from tonelli_flows import (ConnectOptions, DegenerateEndpoints, DiscretizedPath, FlowState,
                           InertiaOperator, LagrangianSpec, action, action_gradient, connect,
                           el_residual, integrate, make_group)
from tonelli_flows.scenarios import stock_specs

U1, SO3 = make_group("U1"), make_group("SO3")
KIN_U1 = LagrangianSpec(InertiaOperator(U1))


def perturbed_so3():
    return LagrangianSpec(InertiaOperator(SO3, inertia=[1.0, 2.0, 3.0]), theta=[0.1, 0.0, -0.3],
                          V0=0.4, perturbation=0.7)


# -- DiscretizedPath -----------------------------------------------------------
def test_path_validation():
    with pytest.raises(ValueError):
        DiscretizedPath(np.zeros((7, 1)), 1.0)
    with pytest.raises(ValueError):
        DiscretizedPath(np.zeros((9, 1)), 0.0)
    with pytest.raises(ValueError):
        DiscretizedPath(np.full((9, 1), np.nan), 1.0)


# -- action ----------------------------------------------------------------------
@given(st.floats(0.01, 10), st.floats(0.01, 5))
def test_zero_path_action(T, kappa):
    spec = stock_specs()["so3-kinetic"]
    assert np.isclose(action(spec, DiscretizedPath.constant(np.zeros(3), T), kappa), T * kappa,
                      rtol=1e-14)


@given(st.floats(-5, 5), st.floats(0.05, 10), st.floats(0.01, 5))
def test_constant_speed_action(c, T, kappa):
    S = action(KIN_U1, DiscretizedPath.constant([c], T), kappa)
    assert np.isclose(S, c * c / (2 * T) + kappa * T, rtol=1e-13)


@pytest.mark.parametrize("c,kappa", [(1.0, 0.5), (2.5, 0.1), (-0.7, 2.0)])
def test_free_period_optimum(c, kappa):
    res = minimize_scalar(lambda T: action(KIN_U1, DiscretizedPath.constant([c], T), kappa),
                          bounds=(1e-3, 1e3), method="bounded", options={"xatol": 1e-12})
    T_star = abs(c) / np.sqrt(2 * kappa)
    assert abs(res.x - T_star) <= 1e-6
    assert abs(res.fun - abs(c) * np.sqrt(2 * kappa)) <= 1e-10
    _, dT = action_gradient(KIN_U1, DiscretizedPath.constant([c], T_star), kappa)
    assert abs(dT) <= 1e-8


def test_zero_path_gradient_kinetic():
    spec = stock_specs()["diffs1-kinetic"]
    g, _ = action_gradient(spec, DiscretizedPath.constant(np.zeros(spec.dim), 1.3), 0.5)
    assert np.all(g == 0.0)


def test_zero_path_gradient_is_propagated_theta():
    spec = stock_specs()["so3-magnetic"]
    g, _ = action_gradient(spec, DiscretizedPath.constant(np.zeros(3), 1.3), 0.5)
    assert np.allclose(g, -spec.theta)


def _random_triple(rng):
    specs = stock_specs()
    names = sorted(specs) + ["perturbed"]
    name = names[rng.integers(len(names))]
    spec = perturbed_so3() if name == "perturbed" else specs[name]
    n = int(rng.integers(8, 20))
    xi = np.stack([spec.group.random_algebra(rng) for _ in range(n)])
    return spec, DiscretizedPath(xi, float(rng.uniform(0.3, 3.0))), float(rng.uniform(0.05, 2.0))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(50):
        spec, path, kappa = _random_triple(rng)
        gxi, dT = action_gradient(spec, path, kappa, riesz=False)
        # directions of unit size in the metric, so the FD oracle stays well conditioned
        eta = rng.standard_normal(path.xi.shape) / np.sqrt(spec.inertia.symbol)
        r = float(rng.standard_normal())
        h = 1e-5
        Sp = action(spec, DiscretizedPath(path.xi + h * eta, path.T + h * r), kappa)
        Sm = action(spec, DiscretizedPath(path.xi - h * eta, path.T - h * r), kappa)
        fd = (Sp - Sm) / (2 * h)
        an = float(np.sum(gxi * eta)) + dT * r
        assert abs(fd - an) <= 1e-6 * max(1.0, abs(an))


def test_riesz_representative():
    rng = np.random.default_rng(1)
    spec, path, kappa = _random_triple(rng)
    plain, _ = action_gradient(spec, path, kappa, riesz=False)
    riesz, _ = action_gradient(spec, path, kappa)
    n = path.n_nodes
    w = np.full(n, 1.0 / (n - 1))
    w[[0, -1]] *= 0.5
    assert np.allclose(riesz * w[:, None], plain, rtol=1e-14, atol=1e-15)


def test_refinement_is_second_order():
    spec = stock_specs()["so3-magnetic"]
    f = lambda s: np.stack([np.sin(2 * s), np.cos(3 * s), s**2], axis=1)
    ref = action(spec, DiscretizedPath(f(np.linspace(0, 1, 4097)), 1.7), 0.5)
    errs = [abs(action(spec, DiscretizedPath(f(np.linspace(0, 1, n)), 1.7), 0.5) - ref)
            for n in (17, 33, 65)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 3.5) and np.all(ratios < 4.5)


@given(st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_action_is_jointly_convex(seed):
    rng = np.random.default_rng(seed)
    spec = perturbed_so3() if seed % 2 else stock_specs()["diffs1-magnetic"]
    n = 9
    a = np.stack([spec.group.random_algebra(rng) for _ in range(n)])
    b = np.stack([spec.group.random_algebra(rng) for _ in range(n)])
    Ta, Tb = rng.uniform(0.1, 3.0, 2)
    kappa = 0.3
    Sa = action(spec, DiscretizedPath(a, Ta), kappa)
    Sb = action(spec, DiscretizedPath(b, Tb), kappa)
    Sm = action(spec, DiscretizedPath(0.5 * (a + b), 0.5 * (Ta + Tb)), kappa)
    assert Sm <= 0.5 * (Sa + Sb) + 1e-12 * (abs(Sa) + abs(Sb))


def test_action_bounded_below_above_critical_value():
    # U1, theta = 0.7 has c = 0.245 <= kappa = 0.5; paths 0 -> pi/2 closed by a fixed return path
    spec = stock_specs()["u1-magnetic"]
    kappa = 0.5
    C = action(spec, DiscretizedPath.constant([-np.pi / 2], 1.0), kappa)
    rng = np.random.default_rng(2)
    for _ in range(200):
        n_wind = int(rng.integers(-3, 4))
        total = np.pi / 2 + 2 * np.pi * n_wind
        wiggle = rng.standard_normal(17) * rng.uniform(0, 5)
        wiggle -= wiggle.mean()
        xi = (total + wiggle)[:, None]
        S = action(spec, DiscretizedPath(xi, float(rng.uniform(0.05, 20))), kappa)
        assert S >= -C


# -- EL residual -------------------------------------------------------------------
def test_el_residual_zero_for_constant_u1():
    assert el_residual(KIN_U1, DiscretizedPath.constant([1.3], 2.0)) == 0.0


def test_el_residual_large_for_random_path():
    spec = stock_specs()["so3-kinetic"]
    xi = np.random.default_rng(3).standard_normal((17, 3))
    assert el_residual(spec, DiscretizedPath(xi, 1.0)) > 0.01


@pytest.mark.parametrize("name", ["so3-magnetic", "diffs1-magnetic"])
def test_el_residual_small_on_integrated_flow(name):
    spec = stock_specs()[name]
    g = spec.group
    if g.kind == "DiffS1":
        u0 = g.basis.mode(1, sin=0.3) + g.basis.mode(2, cos=0.1)
    else:
        u0 = g.random_algebra(np.random.default_rng(4), scale=0.5)
    T = 2.0
    states, _ = integrate(spec, FlowState.initial(spec, u0), T, 1e-3, max_records=201)
    path = DiscretizedPath(T * np.stack([s.u for s in states]), T)
    assert el_residual(spec, path) <= 1e-5


# -- connect ---------------------------------------------------------------------------
def test_degenerate_endpoints():
    with pytest.raises(DegenerateEndpoints):
        connect(KIN_U1, U1.element(0.3), U1.element(0.3), 0.5)


def test_kappa_must_be_positive():
    with pytest.raises(ValueError):
        connect(KIN_U1, U1.identity(), U1.element(1.0), 0.0)


@pytest.mark.parametrize("q", [np.pi / 2, -np.pi / 2])
def test_u1_magnetic_connect_both_orientations(q):
    spec = stock_specs()["u1-magnetic"]
    rep = connect(spec, U1.identity(), U1.element(q), 0.5)
    assert rep.converged and rep.el_residual <= 1e-6
    # the solution runs at constant speed u with 1/2 u^2 = kappa and covers the lifted angle
    u = rep.path.velocities[:, 0]
    assert np.allclose(np.abs(u), 1.0, atol=1e-8)
    lifted = u.mean() * rep.T
    assert abs(np.angle(np.exp(1j * (lifted - q)))) <= 1e-8


def test_connect_report_contract_so3_magnetic():
    spec = stock_specs()["so3-magnetic"]
    q = SO3.exp([0.4, -0.9, 0.6])
    rep = connect(spec, SO3.identity(), q, 0.5)
    assert rep.converged
    assert rep.constraint_defect <= 1e-8 and rep.el_residual <= 1e-6 and rep.energy_defect <= 1e-4
    # replaying the velocity path reaches q
    res = SO3.evolve(rep.path.xi, 1.0, dt=1e-3)
    assert SO3.distance(res.terminal, q) <= 1e-6


def test_connect_shifted_endpoints():
    spec = stock_specs()["u1-kinetic"]
    rep = connect(spec, U1.element(1.0), U1.element(1.0 + np.pi / 2), 0.5)
    assert abs(rep.T - np.pi / 2) <= 1e-4 and abs(rep.action - np.pi / 2) <= 1e-4


def test_connect_diffs1_small_truncation():
    group = make_group("DiffS1", 6)
    spec = LagrangianSpec(InertiaOperator(group, s=2.0))
    q = group.random_element(np.random.default_rng(3), 0.2)
    rep = connect(spec, group.identity(), q, 0.5,
                  ConnectOptions(n_nodes=9, starts=1, dt=1e-2))
    assert rep.converged and rep.polished

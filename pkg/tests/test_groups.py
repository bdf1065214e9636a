import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.spatial.transform import Rotation

from tonelli_flows import GroupError, make_group

U1, SO3, DIFF = make_group("U1"), make_group("SO3"), make_group("DiffS1", 64)
GROUPS = [U1, SO3, DIFF]


def hat(w):
    x, y, z = w
    return np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]], dtype=float)


# -- compose -------------------------------------------------------------------
def test_u1_compose_adds_angles():
    assert np.isclose(U1.compose(U1.element(0.3), U1.element(0.4)).data[0], 0.7, atol=1e-15)


def test_u1_angle_reduced():
    a = U1.element(-0.5).data[0]
    assert 0.0 <= a < 2 * np.pi and np.isclose(a, 2 * np.pi - 0.5)


def test_so3_identity_law():
    q = SO3.random_element(np.random.default_rng(3))
    r = SO3.compose(q, SO3.identity())
    assert np.allclose(r.data, q.data, atol=1e-15)


def test_so3_compose_matches_rotation_product():
    rng = np.random.default_rng(4)
    a, b = SO3.random_element(rng), SO3.random_element(rng)
    assert np.allclose(SO3.matrix(SO3.compose(a, b)), SO3.matrix(a) @ SO3.matrix(b), atol=1e-13)


def test_so3_quaternion_normalized():
    rng = np.random.default_rng(5)
    x = SO3.identity()
    for _ in range(200):
        x = SO3.compose(x, SO3.random_element(rng))
    assert abs(np.linalg.norm(x.data) - 1.0) <= 1e-12


def test_diffs1_identity_law():
    a = DIFF.from_map(lambda x: x + 0.1 * np.sin(x))
    assert np.allclose(DIFF.compose(a, DIFF.identity()).data, a.data, atol=1e-12)
    assert np.allclose(DIFF.compose(DIFF.identity(), a).data, a.data, atol=1e-12)


def test_diffs1_compose_matches_pointwise_composition():
    f = lambda x: x + 0.1 * np.sin(x)
    g = lambda x: x + 0.05 * np.cos(2 * x) + 0.3
    fg = DIFF.compose(DIFF.from_map(f), DIFF.from_map(g))
    ref = DIFF.from_map(lambda x: f(g(x)))
    assert DIFF.distance(fg, ref) <= 1e-10


def test_variant_mismatch_rejected():
    with pytest.raises(GroupError):
        U1.compose(U1.identity(), SO3.identity())


def test_diffs1_orientation_violation_rejected():
    with pytest.raises(GroupError):
        DIFF.from_map(lambda x: x + 1.5 * np.sin(x))


@pytest.mark.parametrize("g", GROUPS, ids=lambda g: g.kind)
def test_inverse_law(g):
    rng = np.random.default_rng(11)
    for _ in range(100):
        a = g.random_element(rng)
        assert g.distance(g.compose(a, g.inverse(a)), g.identity()) <= 1e-10
        assert g.distance(g.compose(g.inverse(a), a), g.identity()) <= 1e-10


def test_diffs1_associativity():
    rng = np.random.default_rng(12)
    for _ in range(10):
        a, b, c = (DIFF.random_element(rng, scale=0.1) for _ in range(3))
        left = DIFF.compose(DIFF.compose(a, b), c)
        right = DIFF.compose(a, DIFF.compose(b, c))
        assert DIFF.distance(left, right) <= 1e-8


# -- right_trivialize ----------------------------------------------------------
@pytest.mark.parametrize("g", GROUPS, ids=lambda g: g.kind)
def test_trivialization_at_identity(g):
    v = g.random_algebra(np.random.default_rng(1))
    if g.kind == "SO3":
        xdot = g.right_translate(g.identity(), v)
        assert np.allclose(g.right_trivialize(g.identity(), xdot), v, atol=1e-15)
    else:
        assert np.allclose(g.right_trivialize(g.identity(), v), v, atol=1e-12)


@given(st.floats(0, 6.28), st.floats(-10, 10))
def test_u1_trivialization_identity_map(angle, v):
    assert U1.right_trivialize(U1.element(angle), np.array([v]))[0] == v


def test_diffs1_right_trivialize_recovers_field():
    x = DIFF.from_map(lambda y: y + 0.2 * np.sin(y))
    # xdot = u o phi sampled directly from the closed form
    xdot = DIFF.basis.from_function(lambda y: np.cos(y + 0.2 * np.sin(y)))
    u = DIFF.right_trivialize(x, xdot)
    assert np.max(np.abs(u - DIFF.basis.mode(1, cos=1.0))) <= 1e-8


def test_so3_right_trivialize_spatial_velocity():
    rng = np.random.default_rng(2)
    x = SO3.random_element(rng)
    w = rng.standard_normal(3)
    R = SO3.matrix(x)
    # dR/dt = hat(w) R  <=>  right-trivialized velocity w
    h = 1e-6
    Rp = expm(h * hat(w)) @ R
    Rm = expm(-h * hat(w)) @ R
    qp = Rotation.from_matrix(Rp).as_quat(canonical=False)
    qm = Rotation.from_matrix(Rm).as_quat(canonical=False)
    qp = np.roll(qp, 1) * np.sign(np.dot(np.roll(qp, 1), x.data))
    qm = np.roll(qm, 1) * np.sign(np.dot(np.roll(qm, 1), x.data))
    xdot = (qp - qm) / (2 * h)
    assert np.allclose(SO3.right_trivialize(x, xdot), w, atol=1e-8)


# -- evolve --------------------------------------------------------------------
@pytest.mark.parametrize("g", GROUPS, ids=lambda g: g.kind)
def test_zero_velocity_constant_path(g):
    res = g.evolve(np.zeros((5, g.dim)), 2.0, dt=1e-2)
    assert all(g.distance(x, g.identity()) == 0.0 for x in res.path)
    assert np.all(res.defects >= 0)


@given(st.floats(-5, 5), st.floats(0.1, 20))
@settings(max_examples=25, deadline=None)
def test_u1_constant_velocity(c, horizon):
    res = U1.evolve(np.full((3, 1), c), horizon, dt=1e-2)
    assert abs(np.angle(np.exp(1j * (res.terminal.data[0] - c * horizon)))) <= 1e-10


def test_so3_constant_velocity_matches_expm():
    rng = np.random.default_rng(8)
    for _ in range(5):
        w = rng.standard_normal(3)
        horizon = 2.5
        res = SO3.evolve(np.tile(w, (4, 1)), horizon, dt=1e-3)
        assert np.max(np.abs(SO3.matrix(res.terminal) - expm(horizon * hat(w)))) <= 1e-8


def test_so3_time_dependent_velocity_matches_ode_oracle():
    from scipy.integrate import solve_ivp

    n = 9
    s = np.linspace(0, 1, n)
    xi = np.stack([np.sin(3 * s), np.cos(2 * s), s**2], axis=1)
    horizon = 2.0
    res = SO3.evolve(xi, horizon, dt=1e-3)

    def rhs(t, y):
        w = np.array([np.interp(t / horizon, s, xi[:, k]) for k in range(3)])
        return (hat(w) @ y.reshape(3, 3)).ravel()

    # the oracle integrates between the interpolation kinks so it sees smooth pieces
    y = np.eye(3).ravel()
    for a, b in zip(s[:-1], s[1:]):
        y = solve_ivp(rhs, (a * horizon, b * horizon), y, method="DOP853",
                      rtol=1e-12, atol=1e-13).y[:, -1]
    assert np.max(np.abs(SO3.matrix(res.terminal) - y.reshape(3, 3))) <= 1e-8


@pytest.mark.parametrize("g", GROUPS, ids=lambda g: g.kind)
def test_flow_property(g):
    rng = np.random.default_rng(9)
    v = g.random_algebra(rng, scale=0.2)
    path = np.stack([v, v])
    t, s = 0.7, 1.1
    a = g.evolve(path, t, dt=1e-3).terminal
    b = g.evolve(path, s, dt=1e-3).terminal
    ab = g.evolve(path, t + s, dt=1e-3).terminal
    # constant velocity: evolving for t then s is right-composition of the two flows
    assert g.distance(g.compose(b, a), ab) <= 1e-8


def test_diffs1_constant_mode_is_rotation():
    c = 0.8
    res = DIFF.evolve(np.stack([DIFF.basis.constant(c)] * 2), 1.5, dt=1e-2)
    assert np.allclose(res.terminal.data, DIFF.basis.constant(c * 1.5), atol=1e-12)


def test_diffs1_evolve_matches_characteristic_ode():
    from scipy.integrate import solve_ivp

    u = DIFF.basis.mode(1, sin=0.4) + DIFF.basis.mode(2, cos=0.2)
    res = DIFF.evolve(np.stack([u, u]), 1.0, dt=1e-3)
    x0 = DIFF.basis.grid
    f = lambda t, y: 0.4 * np.sin(y) + 0.2 * np.cos(2 * y)
    y = solve_ivp(f, (0, 1), x0, method="DOP853", rtol=1e-12, atol=1e-13).y[:, -1]
    assert np.max(np.abs(DIFF.to_lift(res.terminal) - y)) <= 1e-9


@pytest.mark.parametrize("g", GROUPS, ids=lambda g: g.kind)
def test_evolve_state_trivializes_to_driving_velocity(g):
    rng = np.random.default_rng(10)
    # dense nodes so the recorded lifts resolve the velocity by central differences
    n = 2001
    s = np.linspace(0, 1, n)
    a, b = g.random_algebra(rng, scale=0.5), g.random_algebra(rng, scale=0.5)
    xi = (1 - s)[:, None] * a + s[:, None] * b
    horizon = 1.0
    res = g.evolve(xi, horizon, dt=1e-3)
    lifts = res.lifts
    h = horizon / (n - 1)
    k = (n - 1) // 2 + 1
    xdot = (lifts[k + 1] - lifts[k - 1]) / (2 * h)
    x = g.from_lift(lifts[k])
    if g.kind == "DiffS1":
        # lift velocity at the nodes is u o phi on the reference grid
        xdot = g.basis.from_grid(xdot)
    expected = np.array([np.interp(k * h / horizon, s, col) for col in xi.T])
    assert np.max(np.abs(g.right_trivialize(x, xdot) - expected)) <= 1e-6

import numpy as np
import pytest

from tonelli_flows import (ChainViolation, InertiaOperator, LagrangianSpec, ManeOptions, e0,
                           estimate_all, estimate_c, make_group, verify_chain)
from tonelli_flows.mane import min_energy
from tonelli_flows.scenarios import stock_specs

U1, SO3 = make_group("U1"), make_group("SO3")
SPECS = stock_specs()


def u1(theta=0.0, V0=0.0):
    return LagrangianSpec(InertiaOperator(U1), theta=[theta], V0=V0)


# -- e0 ------------------------------------------------------------------------------
def test_e0_values():
    assert e0(SPECS["so3-kinetic"]) == 0.0
    assert e0(u1(V0=2.0)) == 2.0
    assert e0(SPECS["so3-magnetic"]) == 0.0
    assert min_energy(u1(V0=-1.5)) == e0(u1(V0=-1.5))


# -- estimates -------------------------------------------------------------------
@pytest.mark.parametrize("name", ["u1-kinetic", "so3-kinetic"])
def test_kinetic_any_class_is_zero(name):
    est = estimate_c(SPECS[name], "any")
    assert est.converged and abs(est.value) <= 1e-10


def test_u1_magnetic_closed_form():
    est = estimate_c(u1(0.7), "any")
    assert abs(est.value - 0.245) <= 1e-6 and est.winding > 0
    # every positive winding attains the optimum with the constant velocity 0.7
    assert all(abs(est.per_class[n] - 0.245) <= 1e-6 for n in range(1, 6))
    assert est.converged and est.closure_defect <= 1e-8
    cu = estimate_c(u1(0.7), "contractible")
    assert abs(cu.value) <= 1e-10


def test_u1_opposite_winding_only_approaches_zero():
    est = estimate_c(u1(0.7), "any")
    # against the field the mean action is 1/2 u^2 + 0.7 |u| > 0, pushed to T_max
    assert -1e-3 <= est.per_class[-1] < 0.0


def test_so3_magnetic_closed_form():
    spec = SPECS["so3-magnetic"]
    theta, inertia = spec.theta, spec.inertia.symbol
    expected = 0.5 * float(np.sum(theta**2 / inertia))
    est = estimate_c(spec, "contractible")
    assert abs(est.value - expected) <= 1e-6
    assert est.converged and est.closure_defect <= 1e-8


@pytest.mark.parametrize("delta", [0.5, -1.25])
def test_potential_shift(delta):
    base = estimate_c(u1(0.7), "any").value
    shifted = estimate_c(u1(0.7, V0=delta), "any").value
    assert abs(shifted - (base + delta)) <= 1e-6


def test_constant_theta_shifts_only_winding_classes():
    plain = estimate_c(u1(0.0), "any").per_class
    charged = estimate_c(u1(0.7), "any").per_class
    assert abs(plain[0] - charged[0]) <= 1e-10
    assert charged[1] - plain[1] > 0.2


def test_class_monotonicity_exact():
    for name in ("u1-magnetic", "so3-magnetic"):
        est = estimate_all(SPECS[name])
        assert est["c_u"].value <= est["c_0"].value <= est["c"].value


def test_doubled_nodes_stable():
    spec = SPECS["so3-magnetic"]
    a = estimate_c(spec, "contractible", ManeOptions(n_nodes=9)).value
    b = estimate_c(spec, "contractible", ManeOptions(n_nodes=17)).value
    assert abs(a - b) <= 1e-6


def test_invalid_class():
    with pytest.raises(ValueError):
        estimate_c(SPECS["u1-kinetic"], "torsion")


# -- chain --------------------------------------------------------------------------
def test_chain_examples():
    rep = verify_chain(u1(), {"c_u": 0.0, "c_0": 0.0, "c": 0.0})
    assert rep.ok and rep.values["min_E"] == 0.0
    rep = verify_chain(u1(0.7), {"c_u": 0.0, "c_0": 0.0, "c": 0.245})
    assert rep.ok
    rep = verify_chain(u1(V0=2.0), {"c_u": 2.0, "c_0": 2.0, "c": 2.0})
    assert rep.ok and set(rep.values.values()) == {2.0}


def test_chain_from_estimates_v0_shift():
    est = estimate_all(u1(V0=2.0))
    rep = verify_chain(u1(V0=2.0), est)
    assert rep.ok
    assert all(abs(v - 2.0) <= 1e-6 for v in rep.values.values())


def test_chain_violation_raised_and_reported():
    with pytest.raises(ChainViolation) as info:
        verify_chain(u1(), {"c_u": 0.5, "c_0": 0.0, "c": 0.0})
    assert not info.value.report.ok and info.value.report.violations
    rep = verify_chain(u1(), {"c_u": 0.5, "c_0": 0.0, "c": 0.0}, raise_on_violation=False)
    assert not rep.ok
    # within slack is not a violation
    assert verify_chain(u1(), {"c_u": -5e-4, "c_0": -5e-4, "c": -5e-4}).ok


def test_chain_missing_estimate():
    with pytest.raises(ValueError):
        verify_chain(u1(), {"c": 0.0})

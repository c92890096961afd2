import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridcurate.matpower import read_network
from gridcurate.network import Branch, Bus, BusKind, Generator, Network
from gridcurate.powerflow import (PowerFlowError, branch_flows, check_operational, dsbus_dv, index_network,
                                  make_ybus, solve_pf)

from conftest import FIXTURES
from randnet import random_network


@pytest.fixture(scope="module")
def case3():
    return read_network(FIXTURES / "case3.m")


@pytest.fixture(scope="module")
def case3_pf(case3):
    return solve_pf(case3)


def two_bus(pd=0.5, r=0.0, x=0.1):
    return Network(100.0, (Bus(1, BusKind.SLACK), Bus(2, pd=pd)), (Branch(1, 2, r, x),), (Generator(1),))


def test_three_bus_voltages(case3_pf):
    sol = case3_pf
    assert sol.converged and sol.mismatch_inf <= 1e-8
    assert sol.v == pytest.approx([1.100, 1.090, 1.080], abs=1e-3)
    assert np.degrees(sol.theta) == pytest.approx([0.0, -1.434, -2.895], abs=0.01)


def test_three_bus_line_1_2_flow(case3_pf):
    assert case3_pf.s_from[0] == pytest.approx(0.64, abs=0.01)


def test_flat_start_trivial():
    net = Network(100.0, (Bus(1, BusKind.SLACK), Bus(2), Bus(3)), (Branch(1, 2, 0.01, 0.1), Branch(2, 3, 0.01, 0.1)),
                  (Generator(1),))
    sol = solve_pf(net)
    assert sol.iterations <= 1
    assert sol.v == pytest.approx(1.0) and sol.theta == pytest.approx(0.0)


def test_two_bus_closed_form():
    # lossless, unit slack, Q2 = 0: v2 = cos(d), sin(2d) = 2 x p
    sol = solve_pf(two_bus(), tolerance=1e-12)
    delta = 0.5 * math.asin(2 * 0.1 * 0.5)
    assert sol.theta[1] == pytest.approx(-delta, abs=1e-8)
    assert sol.v[1] == pytest.approx(math.cos(delta), abs=1e-8)


def test_lossless_line_flows_antisymmetric():
    sol = solve_pf(two_bus())
    assert sol.flows.p_from[0] == pytest.approx(-sol.flows.p_to[0], abs=1e-12)
    assert sol.losses == pytest.approx(0.0, abs=1e-12)


def test_open_branch_carries_nothing(case3):
    net = case3.with_branches([replace(case3.branches[2], status=False)] + list(case3.branches[:2]))
    flows = branch_flows(net, [1.1, 1.0, 1.0], [0.0, -0.1, -0.2])
    assert (flows.p_from[0], flows.q_from[0], flows.s_from[0]) == (0.0, 0.0, 0.0)
    assert (flows.p_to[0], flows.q_to[0], flows.s_to[0]) == (0.0, 0.0, 0.0)


def test_errors():
    no_slack = Network(100.0, (Bus(1, BusKind.PV), Bus(2, pd=0.5)), (Branch(1, 2, 0, 0.1),), (Generator(1),))
    with pytest.raises(PowerFlowError, match="slack"):
        solve_pf(no_slack)
    pv_without_gen = Network(100.0, (Bus(1, BusKind.SLACK), Bus(2, BusKind.PV)), (Branch(1, 2, 0, 0.1),),
                             (Generator(1),))
    with pytest.raises(PowerFlowError, match="PV bus"):
        solve_pf(pv_without_gen)
    with pytest.raises(PowerFlowError, match="converge"):
        solve_pf(two_bus(pd=20.0))  # beyond the nose of the PV curve
    with pytest.raises(PowerFlowError, match="converge"):
        solve_pf(two_bus(), max_iter=1, tolerance=1e-14)


def test_check_operational(case3, case3_pf):
    assert check_operational(case3, case3_pf) == []
    tight = case3.with_branches([case3.branches[0], replace(case3.branches[1], rate_a=0.01), case3.branches[2]])
    viol = check_operational(tight, case3_pf)
    assert [(v.kind, v.index) for v in viol] == [("thermal", 1)]
    narrow = case3.with_buses([replace(b, v_min=0.98, v_max=1.02) for b in case3.buses])
    assert ("voltage", 0) in [(v.kind, v.index) for v in check_operational(narrow, case3_pf)]


@pytest.mark.parametrize("seed", range(20))
def test_power_conservation(seed):
    net = random_network(seed)
    net = net.with_generators([replace(g, pg=0.2) for g in net.generators])
    sol = solve_pf(net)
    gen = float(np.sum(sol.pg))
    load = sum(b.pd for b in net.buses)
    assert gen - load - sol.losses - sol.shunt_p == pytest.approx(0.0, abs=10 * 1e-8 * len(net.buses))


def test_series_loss_identity():
    # on a plain line the active loss equals r * |I|^2
    net = two_bus(r=0.02)
    sol = solve_pf(net)
    V = sol.v * np.exp(1j * sol.theta)
    current = abs((V[0] - V[1]) / complex(0.02, 0.1))
    assert sol.losses == pytest.approx(0.02 * current ** 2, rel=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_jacobian_matches_finite_differences(seed):
    net = random_network(seed)
    idx = index_network(net)
    Y = make_ybus(net, idx)
    rng = np.random.default_rng(seed)
    vm = rng.uniform(0.9, 1.1, idx.nb)
    va = rng.uniform(-0.3, 0.3, idx.nb)

    def sbus(vm, va):
        V = vm * np.exp(1j * va)
        return V * np.conj(Y @ V)

    dva, dvm = dsbus_dv(Y, vm * np.exp(1j * va))
    h = 1e-6
    for k in range(idx.nb):
        e = np.zeros(idx.nb)
        e[k] = h
        fd_a = (sbus(vm, va + e) - sbus(vm, va - e)) / (2 * h)
        fd_m = (sbus(vm + e, va) - sbus(vm - e, va)) / (2 * h)
        assert dva.toarray()[:, k] == pytest.approx(fd_a, rel=1e-6, abs=1e-6)
        assert dvm.toarray()[:, k] == pytest.approx(fd_m, rel=1e-6, abs=1e-6)


def test_ybus_shape_and_pattern():
    net = random_network(3)
    Y = make_ybus(net).toarray()
    assert Y.shape == (len(net.buses), len(net.buses))
    assert np.array_equal(Y != 0, (Y != 0).T)


@settings(max_examples=25, deadline=None)
@given(st.floats(-math.pi, math.pi))
def test_angle_shift_invariance(shift):
    net = random_network(7)
    base = solve_pf(net, tolerance=1e-10)
    shifted = net.with_buses([replace(b, theta_init=b.theta_init + shift) for b in net.buses])
    sol = solve_pf(shifted, tolerance=1e-10)
    assert sol.v == pytest.approx(base.v, abs=1e-8)
    assert sol.theta == pytest.approx(base.theta, abs=1e-8)

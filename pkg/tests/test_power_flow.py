import dataclasses
import time

import numpy as np
import pytest

from utils import gauss_seidel, random_feasible_injections

from voltage_control_bench.grid.grid_model import UnknownBus
from voltage_control_bench.grid.power_flow import (
    CollapseDetected,
    InjectionProfile,
    NonConvergence,
    SolverOptions,
    branch_currents,
    line_loss,
    residuals,
    solve,
)


def loaded_two_bus(n_bus=2):
    p = np.zeros(n_bus)
    q = np.zeros(n_bus)
    p[1], q[1] = -0.1, -0.05
    return InjectionProfile(p, q)


@pytest.mark.parametrize("name", ["net2", "net6", "net12"])
def test_zero_injections_flat_profile(name, request):
    network = request.getfixturevalue(name)
    sol = solve(network, InjectionProfile.zeros(network.n_bus))
    assert np.all(sol.v == network.v0)
    assert np.all(sol.theta == 0.0)
    assert sol.p_loss == 0.0
    assert sol.iterations == 0
    assert line_loss(network, sol) == 0.0


def test_two_bus_matches_oracle(net2):
    inj = loaded_two_bus()
    sol = solve(net2, inj)
    v_ref, theta_ref = gauss_seidel(net2, inj.p, inj.q)
    np.testing.assert_allclose(sol.v, v_ref, atol=1e-8)
    np.testing.assert_allclose(sol.theta, theta_ref, atol=1e-8)
    assert sol.residual_norm <= 1e-8
    assert sol.v[1] < 1.0


@pytest.mark.parametrize("seed", range(5))
def test_six_bus_matches_oracle(net6, seed):
    p, q = random_feasible_injections(net6, np.random.default_rng(seed))
    sol = solve(net6, InjectionProfile(p, q))
    v_ref, theta_ref = gauss_seidel(net6, p, q)
    np.testing.assert_allclose(sol.v, v_ref, atol=1e-8)
    np.testing.assert_allclose(sol.theta, theta_ref, atol=1e-8)


def test_slack_fixed(net6):
    p, q = random_feasible_injections(net6, np.random.default_rng(1))
    sol = solve(net6, InjectionProfile(p, q))
    assert sol.v[0] == net6.v0
    assert sol.theta[0] == 0.0
    assert np.all(np.abs(sol.theta) <= np.pi)


def test_symmetric_injections_give_symmetric_profile(star4):
    p = np.array([0.0, -0.1, -0.1, 0.02])
    q = np.array([0.0, -0.03, -0.03, 0.0])
    sol = solve(star4, InjectionProfile(p, q))
    assert sol.v[1] == pytest.approx(sol.v[2], abs=1e-12)
    assert sol.theta[1] == pytest.approx(sol.theta[2], abs=1e-12)


def test_physical_balances_on_random_profiles(net6):
    rng = np.random.default_rng(42)
    start = time.time()
    for _ in range(100):
        p, q = random_feasible_injections(net6, rng)
        sol = solve(net6, InjectionProfile(p, q))
        voltage = sol.voltage

        # Ohm's law
        currents = branch_currents(net6, voltage)
        for k, br in enumerate(net6.branches):
            drop = voltage[br.from_bus] - voltage[br.to_bus]
            assert abs(currents[k] * complex(br.r, br.x) - drop) <= 1e-6

        # current balance: injected current equals the net outflow over incident branches
        injected = np.conj((p + 1j * q) / voltage)
        for bus in net6.non_slack:
            outflow = sum(
                currents[k] if br.from_bus == bus else -currents[k]
                for k, br in enumerate(net6.branches)
                if bus in (br.from_bus, br.to_bus)
            )
            assert abs(injected[bus] - outflow) <= 1e-6

        # power balance
        assert np.max(np.abs(p[1:] - sol.p_injected[1:])) <= 1e-6
        assert np.max(np.abs(q[1:] - sol.q_injected[1:])) <= 1e-6
        assert abs(np.sum(sol.p_injected) - sol.p_loss) <= 1e-6
    assert time.time() - start < 10


def test_line_loss_energy_balance(net2):
    inj = loaded_two_bus()
    sol = solve(net2, inj)
    loss = line_loss(net2, sol)
    assert loss > 0
    # slack supplies the load plus the loss
    assert loss == pytest.approx(sol.p_injected[0] - 0.1, abs=1e-6)
    assert loss == pytest.approx(sol.p_loss)


def test_line_loss_linear_in_resistance(net2):
    sol = solve(net2, loaded_two_bus())
    doubled = dataclasses.replace(net2, branches=tuple(dataclasses.replace(br, r=2 * br.r) for br in net2.branches))
    assert line_loss(doubled, sol) == pytest.approx(2 * line_loss(net2, sol), rel=1e-12)


def test_residuals_at_solution(net6):
    p, q = random_feasible_injections(net6, np.random.default_rng(3))
    inj = InjectionProfile(p, q)
    sol = solve(net6, inj)
    res = residuals(net6, inj, sol.v, sol.theta)
    assert sorted(res) == net6.non_slack
    assert all(abs(dp) <= 1e-8 and abs(dq) <= 1e-8 for dp, dq in res.values())


def test_residuals_flat_profile_equal_minus_load(net2):
    res = residuals(net2, loaded_two_bus(), np.ones(2), np.zeros(2))
    assert res[1] == pytest.approx((-0.1, -0.05))


def test_residuals_grow_when_perturbed(net2):
    inj = loaded_two_bus()
    sol = solve(net2, inj)
    v = sol.v.copy()
    v[1] += 0.01
    at_solution = max(abs(x) for pair in residuals(net2, inj, sol.v, sol.theta).values() for x in pair)
    perturbed = max(abs(x) for pair in residuals(net2, inj, v, sol.theta).values() for x in pair)
    assert perturbed > at_solution


def test_residuals_unknown_bus(net2):
    with pytest.raises(UnknownBus):
        residuals(net2, loaded_two_bus(), np.ones(3), np.zeros(3))


def test_wrong_length_injection(net6):
    with pytest.raises(UnknownBus):
        solve(net6, InjectionProfile.zeros(3))


def test_non_finite_injection_rejected():
    with pytest.raises(ValueError):
        InjectionProfile(np.array([0.0, np.nan]), np.zeros(2))


def test_infeasible_load_collapses_or_diverges(net2):
    p = np.array([0.0, -50.0])
    q = np.array([0.0, -50.0])
    with pytest.raises((CollapseDetected, NonConvergence)):
        solve(net2, InjectionProfile(p, q))


def test_non_convergence_carries_trace(net2):
    with pytest.raises(NonConvergence) as e:
        solve(net2, loaded_two_bus(), SolverOptions(tolerance=1e-30, max_iter=2))
    assert len(e.value.trace) == 3


def test_deterministic(net12):
    p, q = random_feasible_injections(net12, np.random.default_rng(5))
    a = solve(net12, InjectionProfile(p, q))
    b = solve(net12, InjectionProfile(p, q))
    np.testing.assert_array_equal(a.v, b.v)
    np.testing.assert_array_equal(a.theta, b.theta)


@pytest.mark.parametrize("seed", range(5))
def test_warm_start_same_fixed_point(net12, seed):
    rng = np.random.default_rng(seed)
    previous = solve(net12, InjectionProfile(*random_feasible_injections(net12, rng)))
    inj = InjectionProfile(*random_feasible_injections(net12, rng))
    cold = solve(net12, inj)
    warm = solve(net12, inj, warm_start=previous)
    np.testing.assert_allclose(warm.v, cold.v, atol=1e-8)
    np.testing.assert_allclose(warm.theta, cold.theta, atol=1e-8)

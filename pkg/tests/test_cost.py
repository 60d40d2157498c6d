import numpy as np
import pytest

from riskctrl.cost import (
    ControlCost,
    CostMeasure,
    adjoint_solve,
    assemble_gradient,
    scenario_cost,
    stationarity_residual,
    tracking_gradient,
)
from riskctrl.dynamics import Stepper, propagate_scenario
from riskctrl.ensemble import (
    ConfigError,
    Control,
    ControlGrid,
    ParameterEnsemble,
    control_l2_norm_sq,
)
from riskctrl.qubit import QubitSystem, TerminalInfidelity

from .systems import FirstCoordinate, NonlinearDriftFree, QuadraticTracking, ScalarBilinear


class OnesIntegrand(FirstCoordinate):
    """a identically 1; zero gradient."""

    def value(self, t, x, theta):
        return 1.0

    def gradient(self, t, x, theta):
        return np.zeros_like(np.asarray(x, dtype=float))


def test_cost_measure_validation():
    with pytest.raises(ValueError):
        CostMeasure(atoms=(), lebesgue_weight=0.0)
    with pytest.raises(ValueError):
        CostMeasure(atoms=((1.0, -0.5),))
    with pytest.raises(ValueError):
        CostMeasure(atoms=((-1.0, 0.5),))
    m = CostMeasure.terminal(2.0, weight=3.0)
    assert m.atoms == ((2.0, 3.0),)


def test_scenario_cost_terminal_qubit_orthogonal_start():
    system = QubitSystem()
    grid = ControlGrid(2.0, 16)
    u = Control(grid, np.zeros(16))
    traj = propagate_scenario(system, 0.1, u, Stepper.EXACT_BILINEAR)
    integrand = TerminalInfidelity(system.target)
    one = scenario_cost(traj, integrand, CostMeasure.terminal(2.0), 0.1, grid)
    two = scenario_cost(traj, integrand, CostMeasure.terminal(2.0, weight=2.0), 0.1, grid)
    assert one == pytest.approx(1.0, abs=1e-12)
    assert two == pytest.approx(2.0, abs=1e-12)


def test_scenario_cost_lebesgue_constant_integrand():
    grid = ControlGrid(20.0, 64)
    u = Control(grid, np.zeros(64))
    sys = ScalarBilinear()
    traj = propagate_scenario(sys, 0.0, u, Stepper.EXACT_BILINEAR)
    measure = CostMeasure(lebesgue_weight=1.0)
    total = scenario_cost(traj, OnesIntegrand(), measure, 0.0, grid)
    assert total == pytest.approx(20.0, abs=1e-12)


def test_scenario_cost_linear_in_measure():
    grid = ControlGrid(1.0, 8)
    u = Control(grid, np.linspace(0.0, 1.0, 8))
    sys = ScalarBilinear()
    traj = propagate_scenario(sys, 0.0, u, Stepper.EXACT_BILINEAR)
    integrand = FirstCoordinate()
    m_atom = CostMeasure(atoms=((0.5, 0.7),))
    m_leb = CostMeasure(lebesgue_weight=0.3)
    m_sum = CostMeasure(atoms=((0.5, 0.7),), lebesgue_weight=0.3)
    a = scenario_cost(traj, integrand, m_atom, 0.0, grid)
    b = scenario_cost(traj, integrand, m_leb, 0.0, grid)
    c = scenario_cost(traj, integrand, m_sum, 0.0, grid)
    assert c == pytest.approx(a + b, rel=1e-14)
    double = CostMeasure(atoms=((0.5, 1.4),), lebesgue_weight=0.6)
    assert scenario_cost(traj, integrand, double, 0.0, grid) == pytest.approx(2 * c, rel=1e-14)


def test_atom_snapping_and_horizon_guard():
    grid = ControlGrid(1.0, 4)
    u = Control(grid, np.ones(4))
    sys = ScalarBilinear()
    traj = propagate_scenario(sys, 0.0, u, Stepper.EXACT_BILINEAR)
    integrand = FirstCoordinate()
    # 0.6 snaps to node 2 (t = 0.5) within dt/2
    snapped = scenario_cost(traj, integrand, CostMeasure(atoms=((0.6, 1.0),)), 0.0, grid)
    exact = scenario_cost(traj, integrand, CostMeasure(atoms=((0.5, 1.0),)), 0.0, grid)
    assert snapped == exact
    with pytest.raises(ConfigError):
        scenario_cost(traj, integrand, CostMeasure(atoms=((1.2, 1.0),)), 0.0, grid)


def test_adjoint_zero_integrand_is_zero():
    grid = ControlGrid(1.0, 16)
    u = Control(grid, np.linspace(0.1, 0.9, 16))
    sys = ScalarBilinear()
    traj = propagate_scenario(sys, 0.0, u, Stepper.EXACT_BILINEAR)

    class ZeroIntegrand(OnesIntegrand):
        def value(self, t, x, theta):
            return 0.0

    adj = adjoint_solve(sys, 0.0, u, traj, ZeroIntegrand(), CostMeasure.terminal(1.0), Stepper.EXACT_BILINEAR)
    assert np.all(adj.lam == 0.0)
    g = tracking_gradient(sys, 0.0, u, traj, adj, Stepper.EXACT_BILINEAR)
    assert np.all(g == 0.0)


def test_adjoint_scalar_analytic_costate_and_gradient():
    # xdot = u x, a = x(T), u = 1, T = 1: P(t) = e^{1-t}} and each control
    # coefficient contributes exactly dt * e with the exact stepper
    grid = ControlGrid(1.0, 64)
    u = Control(grid, np.ones(64))
    sys = ScalarBilinear()
    traj = propagate_scenario(sys, 0.0, u, Stepper.EXACT_BILINEAR)
    adj = adjoint_solve(sys, 0.0, u, traj, FirstCoordinate(), CostMeasure.terminal(1.0), Stepper.EXACT_BILINEAR)
    t = grid.nodes()
    assert np.max(np.abs(adj.lam[:, 0] - np.exp(1.0 - t))) <= 1e-12
    assert adj.p_plus[-1, 0] == 0.0
    assert 64 in adj.jumps and adj.jumps[64][0] == 1.0
    g = tracking_gradient(sys, 0.0, u, traj, adj, Stepper.EXACT_BILINEAR)
    assert np.max(np.abs(g - np.e * grid.dt)) <= 1e-13


def test_adjoint_jump_condition_at_interior_atoms():
    grid = ControlGrid(2.0, 32)
    rng = np.random.Generator(np.random.Philox(key=21))
    u = Control(grid, 0.4 * rng.normal(size=(32, 2)))
    sys = NonlinearDriftFree()
    traj = propagate_scenario(sys, 0.2, u, Stepper.RK4)
    integrand = QuadraticTracking(np.array([0.5, -0.5]))
    measure = CostMeasure(atoms=((0.5, 0.8), (1.25, 0.4), (2.0, 1.0)))
    adj = adjoint_solve(sys, 0.2, u, traj, integrand, measure, Stepper.RK4)
    times = grid.nodes()
    assert set(adj.jumps) == {8, 20, 32}
    for j, w in ((8, 0.8), (20, 0.4), (32, 1.0)):
        expected = w * integrand.gradient(times[j], traj[j], 0.2)
        assert np.max(np.abs(adj.jumps[j] - expected)) <= 1e-10
        # left limit minus right limit equals the atom jump (no lebesgue part)
        assert np.max(np.abs(adj.lam[j] - adj.p_plus[j] - expected)) <= 1e-10


def test_adjoint_converges_to_continuous_costate_under_rk4():
    # with the rk4 stepper the discrete adjoint approaches e^{1-t};
    # log2 error ratios across grid doublings stay at order >= 2
    sys = ScalarBilinear()
    errs = []
    for steps in (16, 32, 64, 128):
        grid = ControlGrid(1.0, steps)
        u = Control(grid, np.ones(steps))
        traj = propagate_scenario(sys, 0.0, u, Stepper.RK4)
        adj = adjoint_solve(sys, 0.0, u, traj, FirstCoordinate(), CostMeasure.terminal(1.0), Stepper.RK4)
        t = grid.nodes()
        errs.append(float(np.max(np.abs(adj.lam[:, 0] - np.exp(1.0 - t)))))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates >= 2.0)


def test_tracking_gradient_matches_fd_exact_and_rk4():
    rng = np.random.Generator(np.random.Philox(key=23))
    cases = [
        (QubitSystem(), Stepper.EXACT_BILINEAR, 1, TerminalInfidelity(QubitSystem().target),
         CostMeasure.terminal(2.0), 1e-8),
        (NonlinearDriftFree(), Stepper.RK4, 2, QuadraticTracking(np.array([0.4, -0.1])),
         CostMeasure(atoms=((2.0, 1.0),), lebesgue_weight=0.5), 1e-6),
    ]
    for sys, stepper, k, integrand, measure, tol in cases:
        grid = ControlGrid(2.0, 32)
        u = Control(grid, 0.4 * rng.normal(size=(32, k)))
        theta = 0.15

        def cost_of(vals):
            traj = propagate_scenario(sys, theta, Control(grid, vals), stepper)
            return scenario_cost(traj, integrand, measure, theta, grid)

        traj = propagate_scenario(sys, theta, u, stepper)
        adj = adjoint_solve(sys, theta, u, traj, integrand, measure, stepper)
        g = tracking_gradient(sys, theta, u, traj, adj, stepper)
        h = 1e-5
        for _ in range(10):
            j = int(rng.integers(0, 32))
            i = int(rng.integers(0, k))
            up = np.array(u.values)
            dn = np.array(u.values)
            up[j, i] += h
            dn[j, i] -= h
            fd = (cost_of(up) - cost_of(dn)) / (2 * h)
            assert abs(fd - g[j, i]) / max(1.0, abs(fd)) <= tol


def test_assemble_gradient_expectation_and_worst_case():
    grid = ControlGrid(1.0, 8)
    u = Control(grid, np.linspace(-1.0, 1.0, 8))
    ens = ParameterEnsemble(np.array([0.0, 1.0, 2.0]), np.array([0.2, 0.5, 0.3]))
    rng = np.random.Generator(np.random.Philox(key=25))
    g_track = rng.normal(size=(3, 8, 1))
    cc = ControlCost(0.25)

    ident = np.ones(3)
    got = assemble_gradient(ens, ident, g_track, u, cc)
    expected = np.einsum("s,sjk->jk", ens.weights, g_track) + 2 * 0.25 * u.values * grid.dt
    assert np.max(np.abs(got - expected)) == 0.0

    worst = np.array([0.0, 1.0 / 0.5, 0.0])
    got = assemble_gradient(ens, worst, g_track, u, ControlCost(0.0))
    assert np.max(np.abs(got - g_track[1])) <= 1e-15


def test_assemble_gradient_stationary_point_is_zero():
    grid = ControlGrid(1.0, 4)
    u = Control(grid, np.array([1.0, -2.0, 0.5, 0.0]))
    ens = ParameterEnsemble(np.array([0.0]), np.array([1.0]))
    cc = ControlCost(0.5)
    g_track = -(2 * 0.5 * u.values * grid.dt).reshape(1, 4, 1)
    got = assemble_gradient(ens, np.ones(1), g_track, u, cc)
    assert np.max(np.abs(got)) <= 1e-16


def test_control_cost_value_and_gradient():
    grid = ControlGrid(1.0, 2)
    u = Control(grid, np.array([1.0, -3.0]))
    cc = ControlCost(0.0625)
    assert cc.value(u) == pytest.approx(0.0625 * 5.0, rel=1e-15)
    assert np.allclose(cc.gradient(u), 2 * 0.0625 * u.values * 0.5)
    with pytest.raises(ValueError):
        ControlCost(-1.0)


def test_stationarity_residual_scalings_and_box():
    grid = ControlGrid(1.0, 4)
    u = Control(grid, np.array([0.5, -0.25, 0.75, 0.0]))
    cc = ControlCost(0.5)
    g = np.array([[0.3], [-0.1], [0.2], [0.4]])
    r = stationarity_residual(u, g, cc)
    assert r == pytest.approx(float(np.linalg.norm(g)) / np.sqrt(grid.dt), rel=1e-14)
    assert stationarity_residual(u, np.zeros((4, 1)), cc) == 0.0
    # interior point with zero gradient is box-stationary too
    assert stationarity_residual(u, np.zeros((4, 1)), cc, bounds=(-1.0, 1.0)) == 0.0
    # active upper bound with inward-pushing gradient is stationary
    u_hi = Control(grid, np.ones(4))
    g_in = -np.ones((4, 1))
    assert stationarity_residual(u_hi, g_in, cc, bounds=(-1.0, 1.0)) == 0.0

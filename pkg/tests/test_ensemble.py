import numpy as np
import pytest

from riskctrl.ensemble import (
    ConfigError,
    Control,
    ControlGrid,
    EnsembleTrajectory,
    ParameterEnsemble,
    control_l1_norm,
    control_l2_norm_sq,
    make_uniform_grid,
)


def test_ensemble_weights_normalized():
    ens = ParameterEnsemble(np.array([0.0, 1.0]), np.array([0.25, 0.75]))
    assert ens.size == 2
    assert abs(ens.weights.sum() - 1.0) <= 1e-12


def test_ensemble_rejects_bad_weights():
    with pytest.raises(ValueError):
        ParameterEnsemble(np.array([0.0, 1.0]), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        ParameterEnsemble(np.array([0.0, 1.0]), np.array([1.5, -0.5]))
    with pytest.raises(ValueError):
        ParameterEnsemble(np.array([0.0]), np.array([0.5, 0.5]))


def test_ensemble_arrays_immutable():
    ens = ParameterEnsemble(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        ens.thetas[0] = 3.0
    with pytest.raises(ValueError):
        ens.weights[0] = 0.9


def test_uniform_grid_atom_count_and_weights():
    ens = make_uniform_grid(-0.5, 0.5, 100)
    assert ens.size == 101
    assert np.allclose(ens.weights, 1.0 / 101.0)
    assert ens.thetas[0] == -0.5 and ens.thetas[-1] == 0.5
    assert np.allclose(np.diff(ens.thetas), 0.01)


def test_uniform_grid_single_interval():
    ens = make_uniform_grid(0.0, 1.0, 1)
    assert ens.size == 2
    assert np.allclose(ens.weights, 0.5)


def test_uniform_grid_duplicate_atoms_legal():
    ens = make_uniform_grid(0.3, 0.3, 1)
    assert ens.size == 2
    assert np.array_equal(ens.thetas, [0.3, 0.3])
    with pytest.raises(ValueError):
        make_uniform_grid(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        make_uniform_grid(1.0, 0.0, 4)


def test_control_grid_basics():
    grid = ControlGrid(2.0, 4)
    assert grid.dt == 0.5
    assert np.allclose(grid.nodes(), [0.0, 0.5, 1.0, 1.5, 2.0])
    assert np.allclose(grid.left_endpoints(), [0.0, 0.5, 1.0, 1.5])


def test_control_grid_rejects_bad_inputs():
    with pytest.raises(ValueError):
        ControlGrid(0.0, 4)
    with pytest.raises(ValueError):
        ControlGrid(1.0, 0)


def test_control_reshapes_one_dimensional_values():
    grid = ControlGrid(1.0, 4)
    u = Control(grid, np.array([1.0, 2.0, 3.0, 4.0]))
    assert u.values.shape == (4, 1)
    assert u.channels == 1
    assert np.array_equal(u.flat(), [1.0, 2.0, 3.0, 4.0])


def test_control_round_trips_through_flat():
    grid = ControlGrid(1.0, 3)
    vals = np.array([[1.0, -1.0], [0.5, 2.0], [0.0, 0.25]])
    u = Control(grid, vals)
    v = Control.from_flat(grid, u.flat(), channels=2)
    assert np.array_equal(u.values, v.values)


def test_control_rejects_wrong_shape_and_nonfinite():
    grid = ControlGrid(1.0, 4)
    with pytest.raises(ValueError):
        Control(grid, np.zeros(3))
    with pytest.raises(ValueError):
        Control(grid, np.array([1.0, np.nan, 0.0, 0.0]))


def test_control_norm_values():
    # |1|*0.5 + |-3|*0.5 = 2 and (1 + 9)*0.5 = 5
    grid = ControlGrid(1.0, 2)
    u = Control(grid, np.array([1.0, -3.0]))
    assert control_l1_norm(u) == pytest.approx(2.0, abs=1e-15)
    assert control_l2_norm_sq(u) == pytest.approx(5.0, abs=1e-15)


def test_control_norm_homogeneity():
    rng = np.random.Generator(np.random.Philox(key=3))
    grid = ControlGrid(2.0, 16)
    vals = rng.normal(size=(16, 2))
    u = Control(grid, vals)
    for c in (-2.5, 0.0, 0.75):
        cu = Control(grid, c * vals)
        assert control_l1_norm(cu) == pytest.approx(abs(c) * control_l1_norm(u), rel=1e-13)
        assert control_l2_norm_sq(cu) == pytest.approx(c * c * control_l2_norm_sq(u), rel=1e-13)


def test_multichannel_l1_uses_euclidean_channel_norm():
    grid = ControlGrid(1.0, 1)
    u = Control(grid, np.array([[3.0, 4.0]]))
    assert control_l1_norm(u) == pytest.approx(5.0, abs=1e-15)


def test_trajectory_shape_validation():
    ens = make_uniform_grid(0.0, 1.0, 1)
    grid = ControlGrid(1.0, 4)
    EnsembleTrajectory(ens, grid, np.zeros((2, 5, 3)))
    with pytest.raises(ValueError):
        EnsembleTrajectory(ens, grid, np.zeros((2, 4, 3)))
    with pytest.raises(ValueError):
        EnsembleTrajectory(ens, grid, np.zeros((3, 5, 3)))

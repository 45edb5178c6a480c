import numpy as np
import pytest

from ewdecay.config import ConfigError
from ewdecay.mms import (MMSConfig, build_mesh, build_solution, convergence_study, format_table,
                         is_monotone, traction_load)


def test_solution_linear_sigma():
    cfg = MMSConfig(case="linear")
    sol = build_solution(cfg)
    X = np.array([[1.2, 0.3], [-0.5, 1.4]])
    A = np.array([[1.0, 0.5], [0.3, -1.0]])
    eps = (A + A.T) / 2
    sig = np.trace(eps) * np.eye(2) + 2 * eps
    assert np.allclose(sol.w(X), X @ A.T)
    assert np.allclose(sol.sigma(X), sig) and np.allclose(sol.div_sigma(X), 0)


def test_radial_solution_vanishes_on_gamma0():
    cfg = MMSConfig()
    mesh = build_mesh(cfg, 0)
    w = build_solution(cfg).w(mesh.nodes)
    assert np.allclose(w[mesh.dirichlet_nodes], 0, atol=1e-14)


def test_traction_load_constant_stress():
    """For constant sigma the total load equals sigma integrated against nu over GAMMA1."""
    mesh = build_mesh(MMSConfig(n_r=2, n_theta=64), 0)
    S = np.array([[2.0, 0.5], [0.5, -1.0]])
    load = traction_load(mesh, np.broadcast_to(S, (mesh.n_nodes, 2, 2)))
    # closed polygon: sum of |F| nu_F vanishes, hence so does the load
    assert np.allclose(load.sum(0), 0, atol=1e-12)
    assert np.abs(load).sum() > 0


@pytest.mark.parametrize("case", ["linear", "radial"])
def test_second_order(case):
    rows = convergence_study(MMSConfig(case=case), 3)
    assert is_monotone(rows)
    assert all(r.order >= 1.8 for r in rows[1:])
    assert "L2_error" in format_table(rows)


def test_undamped_linear_variant():
    rows = convergence_study(MMSConfig(damping=False, nonlinear=False), 3)
    assert all(r.order >= 1.8 for r in rows[1:])


def test_levels_validation():
    with pytest.raises(ConfigError):
        convergence_study(MMSConfig(), 1)


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        MMSConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        MMSConfig.from_dict({"case": "cubic"})
    with pytest.raises(ConfigError):
        MMSConfig.load(tmp_path / "none.json")

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ewdecay.geometry import (GAMMA0, GAMMA1, DampingConfigError, MeshError, MeshFormatError,
                              bump_damping, check_boundary_signs, check_omega_cover,
                              distance_to_boundary, gen_annulus_mesh, gen_shell_mesh, load_mesh,
                              save_mesh, smoothstep_ramp, smoothstep_ramp_derivative, zero_damping)


def test_annulus_counts():
    m = gen_annulus_mesh(1, 2, 2, 8)
    assert m.n_nodes == 24 and m.n_elements == 32
    assert (m.facet_tags == GAMMA0).sum() == 8 and (m.facet_tags == GAMMA1).sum() == 8


@pytest.mark.parametrize("args", [(1, 1, 4, 16), (2, 1, 4, 16), (0, 1, 4, 16), (1, 2, 1, 16), (1, 2, 4, 7)])
def test_annulus_rejects_bad_input(args):
    with pytest.raises(MeshError):
        gen_annulus_mesh(*args)


def test_shell_counts_and_orientation():
    m = gen_shell_mesh(1, 2, 2, 4)
    assert m.n_nodes == 3 * (6 * 16 + 2) == 294
    assert np.all(m.signed_volumes() > 0)
    assert (m.facet_tags == GAMMA0).sum() == (m.facet_tags == GAMMA1).sum() == 6 * 16 * 2


def test_shell_rejects_bad_radii():
    with pytest.raises(MeshError):
        gen_shell_mesh(2, 1, 2, 2)


def test_shell_is_conforming():
    m = gen_shell_mesh(1, 2, 2, 3)
    faces = Counter()
    for tet in m.elements:
        for k in range(4):
            faces[tuple(sorted(np.delete(tet, k)))] += 1
    boundary = {f for f, c in faces.items() if c == 1}
    assert max(faces.values()) == 2
    assert boundary == {tuple(sorted(f)) for f in m.facets}


@pytest.mark.parametrize("mesh_fn", [lambda: gen_annulus_mesh(1, 2, 3, 24),
                                     lambda: gen_shell_mesh(1, 2, 2, 3)])
def test_nodes_on_radii_and_normals_outward(mesh_fn):
    m = mesh_fn()
    r = np.linalg.norm(m.nodes, axis=1)
    assert r.min() >= 1 - 1e-12 and r.max() <= 2 + 1e-12
    assert np.allclose(np.linalg.norm(m.facet_normals, axis=1), 1.0)
    owner_c = m.centroids[m.facet_owner]
    assert np.all(np.einsum("fj,fj->f", m.facet_centroids - owner_c, m.facet_normals) > 0)
    fr = np.linalg.norm(m.nodes[m.facets], axis=2)
    assert np.allclose(fr[m.facet_tags == GAMMA0], 1.0) and np.allclose(fr[m.facet_tags == GAMMA1], 2.0)


def test_volume_converges_2d():
    exact = math.pi * 3
    errs = [abs(gen_annulus_mesh(1, 2, 4 * k, 16 * k).total_volume() - exact) for k in (1, 2, 4)]
    assert errs[0] > errs[1] > errs[2]


def test_volume_converges_3d():
    exact = 4 * math.pi / 3 * 7
    errs = [abs(gen_shell_mesh(1, 2, 2, k).total_volume() - exact) for k in (2, 4, 8)]
    assert errs[0] > errs[1] > errs[2]


def _orders(errs):
    return np.log2(np.array(errs[:-1]) / np.array(errs[1:]))


def test_boundary_length_order_2d():
    errs = []
    for k in (16, 32, 64):
        m = gen_annulus_mesh(1, 2, 2, k)
        errs.append(abs(m.facet_measures[m.facet_tags == GAMMA1].sum() - 4 * math.pi))
    assert np.all(_orders(errs) >= 1.9)


def test_boundary_area_order_3d():
    errs = []
    for k in (4, 8, 16):
        m = gen_shell_mesh(1, 2, 1, k)
        errs.append(abs(m.facet_measures[m.facet_tags == GAMMA1].sum() - 16 * math.pi))
    assert np.all(_orders(errs) >= 1.9)


# ---------------------------------------------------------------- file format


def test_round_trip(tmp_path):
    m = gen_annulus_mesh(1, 2, 2, 8)
    p = tmp_path / "a.msh"
    save_mesh(m, p)
    m2 = load_mesh(p)
    assert np.array_equal(m.nodes, m2.nodes) and np.array_equal(m.elements, m2.elements)
    assert np.array_equal(m.facets, m2.facets) and np.array_equal(m.facet_tags, m2.facet_tags)
    assert open(p).readline().split() == ["2", "24", "32", "16"]


def test_round_trip_shell(tmp_path):
    m = gen_shell_mesh(1, 2, 1, 2)
    save_mesh(m, tmp_path / "s.msh")
    assert np.array_equal(load_mesh(tmp_path / "s.msh").nodes, m.nodes)


def test_bad_tag_is_validation_error(tmp_path):
    m = gen_annulus_mesh(1, 2, 2, 8)
    save_mesh(m, tmp_path / "a.msh")
    lines = open(tmp_path / "a.msh").read().splitlines()
    lines[-1] = lines[-1][:-1] + "2"
    (tmp_path / "b.msh").write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshError, match="tag"):
        load_mesh(tmp_path / "b.msh")


def test_empty_file_parse_error(tmp_path):
    (tmp_path / "e.msh").write_text("")
    with pytest.raises(MeshFormatError):
        load_mesh(tmp_path / "e.msh")


def test_malformed_line_reports_line_number(tmp_path):
    m = gen_annulus_mesh(1, 2, 2, 8)
    save_mesh(m, tmp_path / "a.msh")
    lines = open(tmp_path / "a.msh").read().splitlines()
    lines[3] = "1.0 oops"
    (tmp_path / "c.msh").write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshFormatError) as exc:
        load_mesh(tmp_path / "c.msh")
    assert exc.value.line == 4


def test_out_of_range_index(tmp_path):
    m = gen_annulus_mesh(1, 2, 2, 8)
    save_mesh(m, tmp_path / "a.msh")
    lines = open(tmp_path / "a.msh").read().splitlines()
    lines[1 + 24] = "0 1 99"
    (tmp_path / "d.msh").write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshError):
        load_mesh(tmp_path / "d.msh")


# ---------------------------------------------------------------- sign checks


def test_signs_pass_on_generated(annulus_small, shell_small):
    assert check_boundary_signs(annulus_small).passed
    assert check_boundary_signs(shell_small, tol=1e-8).passed


def test_signs_fail_everywhere_when_swapped(annulus_small, shell_small):
    for m in (annulus_small, shell_small):
        rep = check_boundary_signs(m.with_swapped_tags())
        assert not rep.passed and len(rep.violations) == len(m.facets)


# ---------------------------------------------------------------- damping


def test_ramp_values_and_c1():
    assert smoothstep_ramp(-0.3) == 0 and smoothstep_ramp(0.5) == 1 and smoothstep_ramp(0.9) == 1
    h = 1e-6
    for s0 in (0.0, 0.5):
        left = (smoothstep_ramp(s0) - smoothstep_ramp(s0 - h)) / h
        right = (smoothstep_ramp(s0 + h) - smoothstep_ramp(s0)) / h
        assert abs(left - right) < 1e-4
        assert abs(smoothstep_ramp_derivative(s0)) < 1e-12


@given(st.floats(-1, 2), st.floats(-1, 2))
def test_ramp_monotone(s1, s2):
    lo, hi = sorted((s1, s2))
    assert smoothstep_ramp(lo) <= smoothstep_ramp(hi)


def test_ramp_derivative_matches_fd():
    s = np.linspace(0.01, 0.49, 25)
    fd = (smoothstep_ramp(s + 1e-6) - smoothstep_ramp(s - 1e-6)) / 2e-6
    assert np.allclose(fd, smoothstep_ramp_derivative(s), atol=1e-6)


def test_bump_damping_values(annulus_small):
    d = bump_damping(annulus_small, 1.5, 5.0, 0.2)
    assert d(np.array([1.2, 0.0]))[0] == 0.0
    assert d(np.array([0.0, 2.0]))[0] == 5.0
    assert np.all(d.a >= 0)
    # collar inner edge r = 1.8 sits at s = 0.6 > 1/2: saturated
    assert d(np.array([1.8, 0.0]))[0] == 5.0


def test_damping_gradient_fd(annulus_small):
    d = bump_damping(annulus_small, 1.5, 5.0, 0.2)
    x = np.array([[1.6, 0.3]])
    g = d.gradient(x)[0]
    fd = [(d(x + h)[0] - d(x - h)[0]) / 2e-6 for h in (np.array([[1e-6, 0]]), np.array([[0, 1e-6]]))]
    assert np.allclose(g, fd, atol=1e-5)


@pytest.mark.parametrize("R_d,xi", [(0.9, 0.2), (1.85, 0.2), (1.5, 0.6)])
def test_bump_damping_collar_violation(annulus_small, R_d, xi):
    with pytest.raises(DampingConfigError):
        bump_damping(annulus_small, R_d, 5.0, xi)


def test_cover_default_passes(annulus_small, shell_small):
    for m in (annulus_small, shell_small):
        assert check_omega_cover(m, bump_damping(m, 1.5, 5.0, 0.2), 0.2, 0.5).passed


def test_cover_zero_damping_fails_on_collar(annulus_small):
    rep = check_omega_cover(annulus_small, zero_damping(annulus_small), 0.2, 0.5)
    r = np.linalg.norm(annulus_small.nodes, axis=1)
    assert not rep.passed
    assert {k for k, _ in rep.violations} == set(np.flatnonzero(r >= 1.8 - 1e-12))


def test_cover_xi_zero_only_boundary_nodes(annulus_small):
    a = np.where(np.linalg.norm(annulus_small.nodes, axis=1) > 1.99, 1.0, 0.0)
    rep = check_omega_cover(annulus_small, a, 0.0, 0.5)
    assert rep.passed and rep.details["collar_nodes"] == 32


def test_distance_to_boundary_exact_2d():
    m = gen_annulus_mesh(1, 2, 2, 64)
    pts = np.array([[1.9, 0.0], [0.0, 1.5]])
    d = distance_to_boundary(m, pts, GAMMA1, 1.0)
    # polygon inscribed in the circle: distance to chord is within the sagitta
    sag = 2 * (1 - math.cos(math.pi / 64))
    assert np.all(np.abs(d - np.array([0.1, 0.5])) <= sag + 1e-12)

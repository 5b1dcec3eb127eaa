"""Tests for virialab.jmgeom: Jacobi-Maupertuis lengths, geodesics and mountain passes."""

import json

import numpy as np
import pytest

from virialab import masssystem, energylevel
from virialab.exceptions import InputError, SingularityError, CollisionWarning
from virialab.nbodycore import kinetic_K, potential_U
from virialab.jmgeom import (jmpath, jm_length, jm_time, path_from_trajectory, geodesic_to_brake,
                             jm_distance, shell_points, diameterrecord, scaling_length_ratio,
                             scaling_family, mountain_pass_profile, variation_check, _node_params,
                             _nodes, _objective)


# radial two-body fall from separation 2 to 1 at h = 1/2:
# integral of sqrt(1/r - 1/2) dr over [1, 2]
RADIAL_LENGTH = np.sqrt(2)*(np.pi/4 - 0.5)

PAIR = [[-0.5, 0.0], [0.5, 0.0]]


@pytest.fixture(scope="module")
def radial_geodesic(two_body):
    return geodesic_to_brake(PAIR, energylevel(0.5), two_body, seed=1)


@pytest.fixture(scope="module")
def lagrange_loop(lagrange_run):
    level, s0, traj, period = lagrange_run
    return path_from_trajectory(traj, n=401)


# ---------------------------------------------------------------------------
# Length of on-shell paths
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("e", [0.0, 0.5, 0.9])
def test_length_of_solution_is_action(kepler_orbits, two_body, e):
    orbit, traj = kepler_orbits[e]
    path = path_from_trajectory(traj, n=20001)
    action = traj.integrate(lambda q, v: 2*kinetic_K(v, two_body))
    assert jm_length(path) == pytest.approx(action, rel=1e-5)

    # traversal time recovers the elapsed time
    assert jm_time(path)[-1] == pytest.approx(orbit.period, rel=1e-5)


def test_path_outside_hill_region(two_body):
    with pytest.raises(InputError):
        jmpath([[[-1.0, 0.0], [1.0, 0.0]], PAIR], two_body, energylevel(1.0))


def test_path_needs_two_nodes(two_body):
    with pytest.raises(InputError):
        jmpath([PAIR], two_body, energylevel(0.5))


def test_endpoint_tags(two_body):
    level = energylevel(0.5)
    collision = [[0.0, 0.0], [0.0, 0.0]]
    boundary = [[-1.0, 0.0], [1.0, 0.0]]
    assert jmpath([PAIR, boundary], two_body, level).tags == ("interior", "brake-point")
    assert jmpath([collision, PAIR], two_body, level).tags == ("collision-capped", "interior")


def test_path_on_boundary_band_has_zero_length(two_body):
    level = energylevel(0.5)
    angles = np.linspace(0, np.pi, 9)
    nodes = np.stack([[[-np.cos(a), -np.sin(a)], [np.cos(a), np.sin(a)]] for a in angles])
    assert jm_length(jmpath(nodes, two_body, level)) == 0.0

    # one interior node brings back the two segments touching it
    nodes[4] *= 0.5
    assert jm_length(jmpath(nodes, two_body, level)) > 0


def test_boundary_loop_has_zero_length(lagrange_loop, lagrange_run):
    level = lagrange_run[0]
    family = scaling_family(lagrange_loop, level)
    assert jm_length(jmpath(family(1.0), family.sys, level)) == 0.0


@pytest.mark.parametrize("angle", [0.3, 1.0, 2.5])
def test_length_invariant_under_rotation(lagrange_loop, angle):
    R = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    turned = jmpath(lagrange_loop.nodes @ R.T, lagrange_loop.sys, lagrange_loop.level)
    assert jm_length(turned) == pytest.approx(jm_length(lagrange_loop), rel=1e-12)


def test_path_dataframe_and_json(lagrange_loop, tmp_path):
    df = lagrange_loop.to_dataframe()
    assert list(df.columns) == ["segment", "length", "U_mid", "t"]
    assert len(df) == len(lagrange_loop) - 1
    assert df["length"].sum() == pytest.approx(lagrange_loop.length)

    lagrange_loop.to_json(tmp_path / "path.json", header={"seed": 0})
    doc = json.loads((tmp_path / "path.json").read_text())
    assert doc["provenance"]["schema_version"] == 1
    assert doc["path"]["length"] == pytest.approx(lagrange_loop.length)


# ---------------------------------------------------------------------------
# Scaling map
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("lam", [0.9, 0.5, 0.1])
def test_scaling_power_law_at_zero_energy(lagrange_loop, lam):
    assert scaling_length_ratio(lagrange_loop, lam, h=0.0) == pytest.approx(np.sqrt(lam), rel=1e-12)


def test_scaling_at_negative_energy_exceeds_power_law(lagrange_loop):
    assert scaling_length_ratio(lagrange_loop, 0.5) > np.sqrt(0.5)


def test_scaling_rejects_lambda(lagrange_loop):
    with pytest.raises(InputError):
        scaling_length_ratio(lagrange_loop, 1.5)


def test_scaled_path(lagrange_loop):
    assert np.allclose(lagrange_loop.scaled(0.5).nodes, 0.5*lagrange_loop.nodes)


def test_mountain_pass_meets_virial_surface(lagrange_loop, lagrange_run):
    level = lagrange_run[0]
    family = scaling_family(lagrange_loop, level)
    assert np.allclose(potential_U(family(1.0), family.sys), level.h)

    profile = mountain_pass_profile(family, level)
    # chord midpoints sit inside the circle, which moves the peak by about 1.5e-5
    assert profile.lam_star == pytest.approx(0.5, abs=1e-4)
    assert profile.crosses_virial
    assert profile.lengths[-1] == pytest.approx(0.0, abs=1e-6)
    assert len(profile.to_dataframe()) == 201


def test_mountain_pass_needs_valleys(lagrange_loop, lagrange_run):
    level = lagrange_run[0]

    def family(lam):
        return lam*lagrange_loop.nodes
    family.sys = lagrange_loop.sys

    with pytest.raises(InputError):
        mountain_pass_profile(family, level, lams=np.linspace(0.2, 1.0, 21))


def test_profile_csv(lagrange_loop, lagrange_run, tmp_path):
    level = lagrange_run[0]
    profile = mountain_pass_profile(scaling_family(lagrange_loop, level), level)
    profile.to_csv(tmp_path / "profile.csv", header={"h": level.h})
    lines = (tmp_path / "profile.csv").read_text().splitlines()
    assert lines[0] == "# h: 0.5"
    assert lines[1] == "# schema_version: 1"
    assert lines[2] == "lam,length,crosses_virial"


# ---------------------------------------------------------------------------
# Geodesic to the brake point
# ---------------------------------------------------------------------------

def test_radial_geodesic_length(radial_geodesic):
    assert radial_geodesic.length == pytest.approx(RADIAL_LENGTH, rel=1e-2)
    assert radial_geodesic.length <= radial_geodesic.upper_bound + 1e-12
    assert radial_geodesic.path.tags == ("interior", "brake-point")
    assert radial_geodesic.collision_free


def test_radial_geodesic_is_brake_orbit(radial_geodesic, two_body):
    # the brake endpoint sits at separation 2 on the line through q0
    q_b = radial_geodesic.q_brake
    assert np.linalg.norm(q_b[1] - q_b[0]) == pytest.approx(2.0, rel=1e-6)
    assert radial_geodesic.verify_distance < 1e-3

    # free fall from separation 2 to 1 takes sqrt(2) (pi/4 + 1/2)
    assert radial_geodesic.t_hit == pytest.approx(np.sqrt(2)*(np.pi/4 + 0.5), rel=1e-3)


def test_radial_geodesic_json(radial_geodesic, tmp_path):
    radial_geodesic.to_json(tmp_path / "geodesic.json")
    doc = json.loads((tmp_path / "geodesic.json").read_text())
    assert doc["geodesic"]["length"] == pytest.approx(radial_geodesic.length)
    assert len(doc["geodesic"]["path"]["nodes"]) == len(radial_geodesic.path)


def test_minimizer_has_no_descent_direction(radial_geodesic):
    # interior stretch away from the Hill boundary, ends held fixed
    path = radial_geodesic.path
    df = variation_check(jmpath(path.nodes[:int(0.8*len(path))], path.sys, path.level), seed=2)
    assert list(df["delta"]) == [1e-2, 1e-3]
    assert (df["min_dL"] > -1e-8).all()
    assert (df["mean_dL_over_delta2"] > 0).all()


def test_geodesic_from_boundary(two_body):
    with pytest.warns(CollisionWarning):
        res = geodesic_to_brake([[-1.0, 0.0], [1.0, 0.0]], energylevel(0.5), two_body)
    assert res.length == 0.0
    assert res.verify_distance == 0.0


def test_geodesic_rejects_start(two_body):
    with pytest.raises(InputError):
        geodesic_to_brake([[-2.0, 0.0], [2.0, 0.0]], energylevel(0.5), two_body)
    with pytest.raises(SingularityError):
        geodesic_to_brake([[0.0, 0.0], [0.0, 0.0]], energylevel(0.5), two_body)


def test_refinement_halves_spacing_in_last_decade():
    u = _node_params(48, True, U0=2.0, h=1.0, alpha=1.0)
    assert u[0] == 0.0
    assert u[-1] == pytest.approx(1.0, abs=1e-15)

    # radial ray q0 -> 2 q0 with U(q0) = 2h
    gap = 2/(1 + u) - 1
    du = np.diff(u)
    inside = gap[:-1] <= 0.1
    outside = gap[1:] >= 0.1
    assert inside.sum() > 0 and outside.sum() > 0
    assert np.allclose(du[outside], du[outside][0], rtol=1e-12)
    assert np.allclose(du[inside], 0.5*du[outside][0], rtol=1e-12)

    uniform = np.linspace(0, 1, 49)
    assert (gap <= 0.1).sum() > (2/(1 + uniform) - 1 <= 0.1).sum()


def test_node_params_without_refinement():
    assert np.allclose(_node_params(8, False), np.linspace(0, 1, 9))


def test_pulled_nodes_stay_in_hill_region(three_body):
    level = energylevel(1.0)
    q0 = shell_points(three_body, level, 1, U_factors=(2.0,), seed=11)[0]
    M = 8
    X = np.stack([(1 + k/M)*q0 for k in range(1, M)])
    X[5:] *= 1.3
    x = np.concatenate((X.ravel(), 1.1*q0.ravel()))

    nodes = _nodes(x, q0, None, three_body, 1.0, M)
    U = potential_U(nodes, three_body)
    assert U.min() >= 1.0*(1 - 1e-12)
    assert U[-3:] == pytest.approx(1.0, rel=1e-12)
    assert np.allclose(nodes[-1], 2*q0, rtol=1e-12)

    # analytic gradient through the pull agrees with central differences
    L, g = _objective(x, q0, None, three_body, 1.0, M, 0.0, 1e-3, 1e3)
    rng = np.random.default_rng(4)
    for i in rng.choice(len(x), 6, replace=False):
        e = np.zeros_like(x)
        e[i] = 1e-6
        fd = (_objective(x + e, q0, None, three_body, 1.0, M, 0.0, 1e-3, 1e3)[0] -
              _objective(x - e, q0, None, three_body, 1.0, M, 0.0, 1e-3, 1e3)[0])/2e-6
        assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)


@pytest.mark.slow
def test_three_body_geodesics_are_brake_orbits(three_body):
    level = energylevel(1.0)
    for q0 in shell_points(three_body, level, 10, U_factors=(2.0,), seed=11):
        res = geodesic_to_brake(q0, level, three_body, seed=5)
        assert res.converged
        assert res.collision_free
        assert res.length <= res.upper_bound + 1e-9
        assert potential_U(res.path.nodes, three_body).min() >= 1.0*(1 - 1e-8)
        assert potential_U(res.q_brake, three_body) == pytest.approx(1.0, rel=1e-8)
        assert res.verify_distance < 1e-3


# ---------------------------------------------------------------------------
# Distances and diameter
# ---------------------------------------------------------------------------

def test_direct_distance_between_near_points(two_body):
    qb = [[-0.55, 0.0], [0.55, 0.0]]
    d, route = jm_distance(PAIR, qb, energylevel(0.5), two_body, n_nodes=24)
    assert route == "direct"
    assert d == pytest.approx(0.1*np.sqrt(1/1.05 - 0.5), rel=1e-3)


def test_shell_points(three_body):
    level = energylevel(2.0)
    pts = shell_points(three_body, level, 12, U_factors=(1.5, 4.0), seed=0)
    ratios = np.array([potential_U(q, three_body)/level.h for q in pts])
    assert len(pts) == 12
    assert np.all(np.isclose(ratios, 1.5) | np.isclose(ratios, 4.0))


def test_diameter_record_drops_failures():
    rec = diameterrecord([1.0, np.nan, 3.0], 3)
    assert rec.diameter == 3.0
    assert rec.n_failed == 1
    assert rec.to_dict()["label"] == "empirical, non-certifying"
    assert rec.to_dict()["quantiles"][2] == 2.0

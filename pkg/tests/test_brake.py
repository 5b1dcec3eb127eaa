"""Tests for virialab.brake: brake starts, reflection symmetry and shooting."""

import json

import numpy as np
import pytest

from virialab import masssystem, energylevel
from virialab.brake import (kepler_free_fall_time, brake_start, verify_brake_symmetry,
                            _boundary_chart, _rest_velocity, _FAIL,
                            boundary_angle, brake_closure, shootresult, periodic_brake_shoot,
                            periodic_brake_search, boundary_seeds, write_catalog)
from virialab.exceptions import (InputError, SingularityError, SpanError, CollisionWarning,
                                 ConvergenceWarning)
from virialab.nbodycore import potential_U, kinetic_K, scale_to_level, state
from virialab.integrate import propagate


SCALENE = [[-1.0, 0.0], [1.0, 0.0], [0.0, 1.2]]
ISOSCELES = [[-1.0, 0.0], [1.0, 0.0], [0.0, 1.5]]


@pytest.fixture(scope="module")
def scalene_orbit(three_body):
    return brake_start(SCALENE, three_body, T=0.5)


# ---------------------------------------------------------------------------
# Free fall
# ---------------------------------------------------------------------------

def test_free_fall_time_closed_form():
    assert kepler_free_fall_time(1.0, masssystem([0.5, 0.5])) == pytest.approx(0.5*np.pi*np.sqrt(0.5))


def test_free_fall_time_needs_two_bodies(three_body):
    with pytest.raises(InputError):
        kepler_free_fall_time(1.0, three_body)


def test_two_body_brake_start_collides(two_body):
    with pytest.warns(CollisionWarning):
        orbit = brake_start([[-0.5, 0.0], [0.5, 0.0]], two_body)

    assert orbit.collision
    assert orbit.h == pytest.approx(1.0)
    assert orbit.traj.t1 == pytest.approx(kepler_free_fall_time(1.0, two_body), rel=1e-6)
    assert orbit.traj.t0 == pytest.approx(-orbit.traj.t1, rel=1e-9)
    assert orbit.closest_approach < 1e-6

    # U = 2h is reached at half the separation, well before the collision
    assert orbit.virial_before_closest


def test_brake_start_at_collision(two_body):
    with pytest.raises(SingularityError):
        brake_start([[0.0, 0.0], [0.0, 0.0]], two_body)


# ---------------------------------------------------------------------------
# Symmetry of a three-body brake orbit
# ---------------------------------------------------------------------------

def test_brake_orbit_energy(scalene_orbit, three_body):
    assert scalene_orbit.h == pytest.approx(potential_U(np.array(SCALENE), three_body))
    assert scalene_orbit.traj.E0 == pytest.approx(-scalene_orbit.h)
    assert kinetic_K(scalene_orbit.traj(0.0).v, three_body) == pytest.approx(0.0, abs=1e-20)
    assert not scalene_orbit.collision


def test_brake_orbit_is_reversible(scalene_orbit):
    assert verify_brake_symmetry(scalene_orbit) < 1e-9
    assert verify_brake_symmetry(scalene_orbit, T=0.25) < 1e-9


@pytest.mark.parametrize("rtol", [1e-4, 1e-6])
def test_one_sided_symmetry_tightens_with_tolerance(scalene_orbit, three_body, rtol):
    # integrate through the brake instant from t = -0.5 so the run is not mirrored by construction
    s0 = scalene_orbit.traj(-0.5)
    loose = propagate(s0, three_body, 0.5, events=(), rtol=rtol, atol=1e-3*rtol)
    tight = propagate(s0, three_body, 0.5, events=(), rtol=1e-12, atol=1e-14)

    a_loose = verify_brake_symmetry(loose, T=0.4, t_star=0.0)
    a_tight = verify_brake_symmetry(tight, T=0.4, t_star=0.0)
    assert a_tight < 1e-8
    assert a_tight < a_loose


def test_symmetry_about_other_time_fails(scalene_orbit):
    assert verify_brake_symmetry(scalene_orbit.traj, T=0.2, t_star=0.1) > 1e-3


def test_symmetry_span_too_short(scalene_orbit):
    with pytest.raises(SpanError):
        verify_brake_symmetry(scalene_orbit, T=1.0)


def test_brake_instant_event(scalene_orbit):
    brakes = scalene_orbit.traj.events_of("brake-instant")
    assert any(abs(e.t) < 1e-6 for e in brakes)


def test_leaves_boundary_along_normal(scalene_orbit):
    assert boundary_angle(scalene_orbit) < 1e-4
    assert boundary_angle(scalene_orbit, s=1e-4) < boundary_angle(scalene_orbit, s=1e-2)


def test_repr(scalene_orbit):
    assert repr(scalene_orbit).startswith("brakeorbit(h=")


# ---------------------------------------------------------------------------
# Periodic shooting
# ---------------------------------------------------------------------------

def test_closure_of_colliding_run(two_body):
    with pytest.warns(CollisionWarning):
        d, traj = brake_closure([[-0.5, 0.0], [0.5, 0.0]], two_body, 1.0)
    assert np.isinf(d)
    assert traj.status == "collision-proximity"


def test_boundary_seeds(three_body):
    level = energylevel(1.5)
    seeds = boundary_seeds(three_body, level, 5, seed=3)
    assert len(seeds) == 5
    for q in seeds:
        assert potential_U(q, three_body) == pytest.approx(1.5, rel=1e-12)
    again = boundary_seeds(three_body, level, 5, seed=3)
    assert all(np.array_equal(a, b) for a, b in zip(seeds, again))


def test_shoot_rejects_seed_off_boundary(three_body):
    with pytest.raises(InputError):
        periodic_brake_shoot(SCALENE, three_body, energylevel(1.0))


def test_two_body_shoot_reports_collision(two_body):
    level = energylevel(1.0)
    with pytest.warns(ConvergenceWarning):
        res = periodic_brake_shoot([[-0.5, 0.0], [0.5, 0.0]], two_body, level, maxiter=2)

    assert res.status == "collision"
    assert res.nfev == len(res.history)
    assert all(a >= b for a, b in zip(res.history, res.history[1:]))
    assert potential_U(res.q_star, two_body) == pytest.approx(1.0, rel=1e-12)
    assert res.traj is None


def test_search_keeps_seed_order(two_body):
    level = energylevel(1.0)
    seeds = [np.array([[-0.5, 0.0], [0.5, 0.0]]), np.array([[0.0, -0.5], [0.0, 0.5]])]
    with pytest.warns(ConvergenceWarning):
        results = periodic_brake_search(seeds, two_body, level, maxiter=2)
    assert len(results) == 2
    assert np.allclose(results[1].seed, seeds[1])
    assert list(results.status) == ["collision", "collision"]


def test_write_catalog(tmp_path, three_body):
    res = shootresult(status="converged", residual=1e-9, period=3.5, closure=2e-7,
                      avg_U_ratio=1.0, crossings=2, nfev=40, q_star=np.array(SCALENE))
    path = tmp_path / "catalog.jsonl"
    write_catalog([res, res], path, three_body, header={"seed": 4})

    lines = path.read_text().splitlines()
    assert len(lines) == 3
    head = json.loads(lines[0])["provenance"]
    assert head["seed"] == 4
    assert head["schema_version"] == 1
    orbit = json.loads(lines[1])
    assert orbit["masses"] == [1.0, 1.0, 1.0]
    assert orbit["period"] == 3.5
    assert orbit["crossings"] == 2
    assert orbit["q_star"] == SCALENE


# ---------------------------------------------------------------------------
# Shape chart and the isosceles seed
# ---------------------------------------------------------------------------

def test_chart_keeps_only_shape_directions(three_body):
    q = three_body.com_normalize(np.array(SCALENE))
    y, basis = _boundary_chart(q, three_body)

    assert basis.shape == (6, 2)
    assert np.allclose(basis.T @ basis, np.eye(2), atol=1e-12)
    assert np.allclose(y @ basis, 0.0, atol=1e-12)
    Y = y.reshape(3, 2)
    rotation = np.stack((-Y[:, 1], Y[:, 0]), axis=-1).ravel()
    assert np.allclose(rotation @ basis, 0.0, atol=1e-12)
    for col in basis.T:
        assert np.allclose(col.reshape(3, 2).sum(axis=0), 0.0, atol=1e-12)


def test_two_body_chart_is_a_point(two_body):
    _, basis = _boundary_chart(np.array([[-0.5, 0.0], [0.5, 0.0]]), two_body)
    assert basis.shape == (4, 0)


def test_rest_velocity_measures_kinetic_energy(scalene_orbit, three_body):
    q = three_body.com_normalize(np.array(SCALENE))
    level = energylevel(scalene_orbit.h)
    chart = _boundary_chart(q, three_body)
    r = _rest_velocity(np.array([0.0, 0.0, 0.3]), chart, three_body, level)

    K = kinetic_K(scalene_orbit.traj(0.3).v, three_body)
    assert np.linalg.norm(r) == pytest.approx(np.sqrt(K/scalene_orbit.h), rel=1e-7)


def test_isosceles_seed_stays_on_collision_set(three_body):
    # bodies 1 and 2 only feel forces toward the symmetry axis and meet head on
    q = scale_to_level(np.array(ISOSCELES), three_body, 1.0)
    with pytest.warns(CollisionWarning):
        orbit = brake_start(q, three_body)
    assert orbit.collision


@pytest.mark.slow
def test_isosceles_seed_shooting(three_body):
    level = energylevel(1.0)
    seed = scale_to_level(np.array(ISOSCELES), three_body, 1.0)
    res = periodic_brake_shoot(seed, three_body, level, maxiter=60, restarts=8)

    # the random starts off the isosceles line reach a second approach
    assert res.history[8] < _FAIL
    assert res.residual < res.history[8]
    assert all(a >= b for a, b in zip(res.history, res.history[1:]))
    assert res.status in ("converged", "not-converged")
    assert potential_U(res.q_star, three_body) == pytest.approx(1.0, rel=1e-12)
    assert res.period > 0

    if res.status == "converged":
        assert res.closure < 1e-6
        assert res.avg_U_ratio == pytest.approx(1.0, abs=1e-4)
        assert res.crossings >= 2

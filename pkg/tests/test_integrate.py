"""Tests for virialab.integrate: propagation, trajectories, events and the Hill collar."""

import json

import numpy as np
import pytest

import virialab
from virialab import masssystem, state, energylevel, trajectory, propagate, propagate_two_sided
from virialab.exceptions import (InputError, IntegrationError, SpanError, EventError,
                                 InconsistentEnergyError, CollisionWarning, ConvergenceWarning,
                                 DegeneracyWarning)
from virialab.integrate import (detect_events, hill_collar_exit_time, collar_starts,
                                collar_ensemble, collar_scaling)
from virialab.nbodycore import potential_U, kinetic_K, energy_E


def _circular(sys):
    # unit separation circular binary, E = -1/2
    w = np.sqrt(0.5)
    return state(0, [[-0.5, 0], [0.5, 0]], [[0, -w], [0, w]])


# ---------------------------------------------------------------------------
# propagate
# ---------------------------------------------------------------------------

def test_circular_binary_closes(two_body):
    s0 = _circular(two_body)
    period = 2*np.pi*0.5/np.sqrt(0.5)
    traj = propagate(s0, two_body, period, events=())
    assert traj.status == "completed"
    end = traj(period)
    assert np.allclose(end.q, s0.q, atol=1e-8)
    assert np.allclose(end.v, s0.v, atol=1e-8)
    assert traj.energy_drift < 1e-10
    assert traj.angmom_drift < 1e-10


def test_backward_propagation_is_time_ordered(two_body):
    s0 = _circular(two_body)
    traj = propagate(s0, two_body, -2.0, events=())
    assert traj.t0 == pytest.approx(-2.0)
    assert traj.t1 == pytest.approx(0.0)
    assert np.all(np.diff(traj.t) > 0)
    assert np.allclose(traj(0.0).q, s0.q, atol=1e-12)


def test_propagate_rejects_zero_span(two_body):
    with pytest.raises(InputError):
        propagate(_circular(two_body), two_body, 0.0)


def test_propagate_rejects_collision_start(two_body):
    s0 = state(0, [[0, 0], [1e-9, 0]], [[0, 0], [0, 0]])
    with pytest.raises(IntegrationError):
        propagate(s0, two_body, 1.0)


def test_propagate_shape_mismatch(three_body, two_body):
    with pytest.raises(InputError):
        propagate(_circular(two_body), three_body, 1.0)


def test_collision_proximity_stop(two_body):
    s0 = state(0, [[-0.5, 0], [0.5, 0]], [[0, 0], [0, 0]])
    with pytest.warns(CollisionWarning):
        traj = propagate(s0, two_body, 5.0, r_min=1e-4, events=())
    assert traj.status == "collision-proximity"
    assert traj.closest_approach == pytest.approx(1e-4, rel=1e-6)
    assert two_body.pair_distances(traj[-1].q)[0] == pytest.approx(1e-4, rel=1e-6)
    assert traj.stops[0].kind == "collision-proximity"
    # radial free fall from separation 1 with total mass 2
    assert traj.t1 == pytest.approx(np.pi/2*np.sqrt(1/(2*2)), rel=1e-3)


def test_max_steps(two_body):
    with pytest.warns(ConvergenceWarning):
        traj = propagate(_circular(two_body), two_body, 100.0, max_steps=5, events=())
    assert traj.status == "max-steps"
    assert traj.nsteps == 5


def test_sundman_agrees_with_physical_time(kepler_orbits):
    orbit, ref = kepler_orbits[0.9]
    traj = propagate(orbit.state, ref.sys, ref.t1, sundman=True, events=())
    assert traj.sundman
    assert traj.t1 == pytest.approx(ref.t1, rel=1e-12)
    assert np.allclose(traj(ref.t1).q, ref(ref.t1).q, atol=1e-6)
    mid = 0.37*ref.t1
    assert np.allclose(traj(mid).q, ref(mid).q, atol=1e-6)


@pytest.mark.parametrize("e", [0.0, 0.5, 0.9])
def test_sundman_end_of_truncated_step(kepler_orbits, e):
    orbit, ref = kepler_orbits[e]
    traj = propagate(orbit.state, ref.sys, ref.t1, sundman=True, events=())
    end = traj(traj.t1)
    assert np.allclose(end.q, traj[-1].q, atol=1e-12)
    assert np.allclose(end.v, traj[-1].v, atol=1e-12)
    assert np.allclose(end.q, ref(ref.t1).q, atol=1e-6)


def test_sundman_collision_proximity_stop(two_body):
    s0 = state(0, [[-0.5, 0], [0.5, 0]], [[0, 0], [0, 0]])
    with pytest.warns(CollisionWarning):
        traj = propagate(s0, two_body, 5.0, r_min=1e-3, sundman=True, events=())
    assert traj.status == "collision-proximity"
    assert two_body.pair_distances(traj(traj.t1).q)[0] == pytest.approx(1e-3, rel=1e-6)
    assert two_body.pair_distances(traj[-1].q)[0] == pytest.approx(1e-3, rel=1e-6)


def test_forward_then_backward_returns(three_body, figure_eight):
    s0 = figure_eight[0]
    out = propagate(s0, three_body, 3.0, events=())
    back = propagate(out[-1], three_body, 0.0, events=())
    assert back.t0 == pytest.approx(0.0)
    assert np.allclose(back[0].q, s0.q, atol=1e-6)
    assert np.allclose(back[0].v, s0.v, atol=1e-6)



def test_two_sided_span(three_body, figure_eight):
    s0 = figure_eight(1.0)
    traj = propagate_two_sided(s0, three_body, 1.5, events=())
    assert traj.t0 == pytest.approx(-0.5)
    assert traj.t1 == pytest.approx(2.5)
    assert np.allclose(traj(1.0).q, s0.q, atol=1e-12)
    assert np.allclose(traj(2.0).q, figure_eight(2.0).q, atol=1e-7)


def test_two_sided_rejects_nonpositive_T(three_body, figure_eight):
    with pytest.raises(InputError):
        propagate_two_sided(figure_eight[0], three_body, 0.0)


# ---------------------------------------------------------------------------
# trajectory object
# ---------------------------------------------------------------------------

def test_dense_output_matches_samples(figure_eight):
    k = len(figure_eight)//3
    s = figure_eight(figure_eight.t[k])
    assert np.allclose(s.q, figure_eight[k].q, atol=1e-12)
    assert np.allclose(s.v, figure_eight[k].v, atol=1e-12)


def test_window_slicing(figure_eight):
    win = figure_eight[1.0:2.0]
    assert win.t0 == 1.0
    assert win.t1 == 2.0
    assert np.allclose(win(1.5).q, figure_eight(1.5).q)
    with pytest.raises(SpanError):
        figure_eight[1.0:100.0]
    with pytest.raises(SpanError):
        figure_eight[1.0:2.0:0.1]
    with pytest.raises(SpanError):
        figure_eight.window(2.0, 1.0)


def test_figure_eight_is_periodic(figure_eight):
    from conftest import FIGURE_EIGHT_PERIOD
    start, end = figure_eight[0], figure_eight(FIGURE_EIGHT_PERIOD)
    assert np.allclose(end.q, start.q, atol=1e-4)


def test_quadrature(figure_eight):
    assert figure_eight.integrate(lambda q, v: np.ones(len(q))) == pytest.approx(figure_eight.span)
    assert figure_eight.integrate(lambda q, v: np.ones(len(q)), 2.0, 1.0) == pytest.approx(-1.0)
    # E is constant, so its average is E0
    sys = figure_eight.sys
    avg = figure_eight.average(lambda q, v: kinetic_K(v, sys) - potential_U(q, sys))
    assert avg == pytest.approx(figure_eight.E0, rel=1e-9)


def test_dataframe_columns(figure_eight, kepler_orbits):
    df = figure_eight.to_dataframe()
    for col in ("t", "q0_x", "q2_y", "v1_x", "E", "K", "U", "I", "Idot", "J"):
        assert col in df.columns
    assert len(df) == len(figure_eight)
    spatial = masssystem([1, 1], dim=3)
    s0 = state(0, [[-0.5, 0, 0], [0.5, 0, 0]], [[0, -0.5, 0.1], [0, 0.5, -0.1]])
    df3 = propagate(s0, spatial, 0.5, events=()).to_dataframe()
    assert {"J_x", "J_y", "J_z", "q1_z"} <= set(df3.columns)


def test_csv_roundtrip_rebuilds_dense_output(tmp_path, kepler_orbits):
    _, traj = kepler_orbits[0.3]
    path = tmp_path / "traj.csv"
    traj.to_csv(path, header={"scenario": "kepler"})
    text = path.read_text()
    assert text.startswith("# scenario: \"kepler\"")
    assert "# schema_version: 1" in text

    back = trajectory.from_csv(path, traj.sys)
    assert np.allclose(back.t, traj.t, rtol=1e-15, atol=1e-15)
    t = 0.5*(traj.t[3] + traj.t[4])
    assert np.allclose(back(t).q, traj(t).q, atol=1e-5)
    assert np.allclose(back(t).v, traj(t).v, atol=1e-4)


def test_from_csv_missing_columns(tmp_path, three_body, kepler_orbits):
    _, traj = kepler_orbits[0.3]
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    with pytest.raises(InputError):
        trajectory.from_csv(path, three_body)


def test_events_to_json(tmp_path, kepler_orbits):
    _, traj = kepler_orbits[0.5]
    path = tmp_path / "events.json"
    doc = traj.events_to_json(path, header={"seed": 3})
    on_disk = json.loads(path.read_text())
    assert on_disk == json.loads(json.dumps(doc))
    assert on_disk["provenance"]["seed"] == 3
    assert {e["kind"] for e in on_disk["events"]} <= set(virialab.integrate.EVENT_KINDS)


def test_join_rejects_gap(two_body):
    back = propagate(_circular(two_body), two_body, -1.0, events=())
    s1 = propagate(_circular(two_body), two_body, 0.5, events=())[-1]
    fwd = propagate(s1, two_body, 1.0, events=())
    with pytest.raises(SpanError):
        trajectory.join(back, fwd)


def test_repr(figure_eight):
    assert "trajectory" in repr(figure_eight)


# ---------------------------------------------------------------------------
# events
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("e", [0.3, 0.5, 0.9])
def test_kepler_virial_crossings(kepler_orbits, e):
    _, traj = kepler_orbits[e]
    crossings = traj.events_of("virial-crossing", transverse=True)
    assert len(crossings) == 2
    assert sorted(c.direction for c in crossings) == [-1, 1]
    h = traj.level.h
    for c in crossings:
        assert potential_U(c.state.q, traj.sys) == pytest.approx(2*h, rel=1e-9)


def test_kepler_pericenter_turnaround(kepler_orbits):
    orbit, traj = kepler_orbits[0.5]
    times = [ev.t for ev in traj.events_of("turn-around", transverse=True)]
    assert min(abs(t - orbit.period/2) for t in times) < 1e-8


def test_circular_virial_event_is_degenerate(kepler_orbits):
    _, traj = kepler_orbits[0.0]
    assert traj.events_of("virial-crossing", transverse=True) == []
    degenerate = [ev for ev in traj.events_of("virial-crossing") if ev.degenerate]
    assert len(degenerate) == 1
    assert degenerate[0].direction == 0


def test_detect_events_warns_on_degenerate(kepler_orbits):
    _, traj = kepler_orbits[0.0]
    with pytest.warns(DegeneracyWarning):
        detect_events(traj, ("virial-crossing",))


def test_detect_events_unknown_kind(kepler_orbits):
    _, traj = kepler_orbits[0.3]
    with pytest.raises(EventError):
        detect_events(traj, ("sneeze",))


def test_level_events_need_negative_energy(two_body):
    s0 = state(0, [[-0.5, 0], [0.5, 0]], [[0, -2.0], [0, 2.0]])
    traj = propagate(s0, two_body, 1.0, events=("virial-crossing", "turn-around"))
    assert traj.E0 > 0
    assert all(ev.kind == "turn-around" for ev in traj.events)
    with pytest.raises(EventError):
        detect_events(traj, ("virial-crossing",))


def test_brake_instant_at_rest(three_body):
    q = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, 1.2]])
    s0 = state(0, three_body.com_normalize(q), np.zeros((3, 2)))
    traj = propagate_two_sided(s0, three_body, 0.5, events=("brake-instant",),
                               level=energylevel(potential_U(s0.q, three_body)))
    brakes = traj.events_of("brake-instant")
    assert len(brakes) >= 1
    assert min(abs(ev.t) for ev in brakes) < 1e-8


# ---------------------------------------------------------------------------
# Hill collar
# ---------------------------------------------------------------------------

def test_collar_starts_lie_in_collar(three_body):
    level = energylevel(1.0)
    starts = collar_starts(three_body, level, 1e-3, 10, seed=1)
    assert len(starts) == 10
    for s in starts:
        U = potential_U(s.q, three_body)
        assert 1.0 < U <= 1.0 + 1e-3 + 1e-12
        assert energy_E(s, three_body) == pytest.approx(-1.0, abs=1e-12)


def test_collar_starts_share_directions_across_eps(three_body):
    level = energylevel(1.0)
    a = collar_starts(three_body, level, 1e-2, 4, seed=5)
    b = collar_starts(three_body, level, 1e-4, 4, seed=5)
    for sa, sb in zip(a, b):
        ua = sa.q/np.sqrt(three_body.mass_inner(sa.q, sa.q))
        ub = sb.q/np.sqrt(three_body.mass_inner(sb.q, sb.q))
        assert np.allclose(ua, ub)


def test_collar_exit(three_body):
    level = energylevel(1.0)
    s0 = collar_starts(three_body, level, 1e-3, 1, seed=2)[0]
    res = hill_collar_exit_time(s0, three_body, level, 1e-3)
    assert res.exited
    assert res.status == "hill-band-exit"
    assert 0 < res.t_exit < virialab.COLLAR_DEFAULTS["t_max"]
    assert potential_U(res.state.q, three_body) == pytest.approx(1.0 + 2e-3, rel=1e-9)
    assert res.dU_dt > 0


def test_collar_rejects_wrong_energy(three_body):
    level = energylevel(1.0)
    s0 = collar_starts(three_body, level, 1e-3, 1, seed=2)[0]
    with pytest.raises(InconsistentEnergyError):
        hill_collar_exit_time(s0, three_body, energylevel(2.0), 1e-3)


def test_collar_ensemble_order_independent_of_jobs(three_body):
    level = energylevel(1.0)
    serial = collar_ensemble(three_body, level, 1e-2, 4, seed=9, jobs=1)
    pooled = collar_ensemble(three_body, level, 1e-2, 4, seed=9, jobs=2)
    assert list(serial.t_exit) == list(pooled.t_exit)


@pytest.mark.slow
def test_collar_exit_time_scales_as_sqrt_eps(three_body):
    level = energylevel(1.0)
    df, fit = collar_scaling(three_body, level, [1e-2, 1e-3, 1e-4], 32, seed=11)
    assert (df["n_fail"] == 0).all()
    assert fit["exponent"] == pytest.approx(0.5, rel=0.2)
    assert df["ratio"].iloc[1:].to_numpy() == pytest.approx(df["sqrt_ratio"].iloc[1:].to_numpy(), rel=0.2)

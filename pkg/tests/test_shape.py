"""Tests for virialab.shape: Hopf projection, syzygy words and Hill region meshes."""

import json

import numpy as np
import pytest

from virialab import masssystem, energylevel, propagate
from virialab.exceptions import InputError, DegeneracyWarning
from virialab.nbodycore import potential_U, moment_I
from virialab.families import euler_collinear
from virialab.shape import (shape_coordinates, shape_project, shape_to_configuration, collision_rays,
                            syzygy_sequence, syzygyword, hill_mesh, write_obj, mesh_to_dataframe,
                            shape_curve)

from conftest import FIGURE_EIGHT_PERIOD


EQUILATERAL = [[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3)/2]]


def _rotate(q, phi):
    R = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    return np.asarray(q) @ R.T


# ---------------------------------------------------------------------------
# Hopf projection
# ---------------------------------------------------------------------------

def test_norm_is_moment_of_inertia(unequal_three_body):
    rng = np.random.default_rng(0)
    q = unequal_three_body.com_normalize(rng.normal(size=(50, 3, 2)))
    w = shape_coordinates(q, unequal_three_body)
    assert np.linalg.norm(w, axis=-1) == pytest.approx(moment_I(q, unequal_three_body), rel=1e-12)


def test_projection_is_invariant(unequal_three_body):
    q = np.array([[0.3, -1.0], [1.2, 0.4], [-0.7, 0.9]])
    w = shape_project(q, unequal_three_body).w
    moved = _rotate(q, 0.83) + [5.0, -2.0]
    assert shape_project(moved, unequal_three_body).w == pytest.approx(w, abs=1e-12)


def test_equilateral_at_pole(three_body):
    p = shape_project(EQUILATERAL, three_body)
    assert abs(p.latitude) == pytest.approx(np.pi/2)
    assert p.r == pytest.approx(1.0)

    # reflection sends it to the other pole
    mirrored = np.array(EQUILATERAL)*[1, -1]
    assert shape_project(mirrored, three_body).latitude == pytest.approx(-p.latitude)


def test_collinear_on_equator(unequal_three_body):
    p = shape_project([[0.0, 0.0], [1.0, 0.0], [3.5, 0.0]], unequal_three_body)
    assert p.w[2] == pytest.approx(0.0, abs=1e-15)
    assert p.latitude == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("w", [[0.3, -0.2, 0.9], [-1.0, 0.0, 0.0], [0.0, 0.0, -2.0], [2.0, 1.0, -0.5]])
def test_inverse_map(unequal_three_body, w):
    q = shape_to_configuration(w, unequal_three_body)
    assert np.allclose(unequal_three_body.center_of_mass(q), 0, atol=1e-14)
    assert shape_coordinates(q, unequal_three_body) == pytest.approx(w, abs=1e-12)


def test_inverse_places_every_body(unequal_three_body):
    # pair separation and third-body offset rebuilt from the Jacobi vectors
    q = np.array([[-1.0, 0.5], [0.7, -0.2], [0.4, 1.1]])
    q = unequal_three_body.com_normalize(q)
    back = shape_to_configuration(shape_coordinates(q, unequal_three_body), unequal_three_body)
    assert np.allclose(unequal_three_body.center_of_mass(back), 0, atol=1e-14)
    assert unequal_three_body.pair_distances(back) == pytest.approx(unequal_three_body.pair_distances(q),
                                                                    rel=1e-12)
    assert np.linalg.norm(back[2]) == pytest.approx(np.linalg.norm(q[2]), rel=1e-12)


def test_collision_rays_equal_masses(three_body):
    rays = collision_rays(three_body)
    assert set(rays) == {(0, 1), (1, 2), (0, 2)}
    d = np.array(list(rays.values()))
    assert np.allclose(np.linalg.norm(d, axis=-1), 1.0)
    assert np.allclose(d[:, 2], 0.0)
    assert d[0] @ d[1] == pytest.approx(-0.5)
    assert d[1] @ d[2] == pytest.approx(-0.5)


@pytest.mark.parametrize("sys", [masssystem([1, 1, 1], dim=3), masssystem([1, 1, 1, 1])])
def test_needs_planar_three_body(sys):
    with pytest.raises(InputError):
        shape_coordinates(np.zeros(sys.shape), sys)


def test_project_takes_one_configuration(three_body):
    with pytest.raises(InputError):
        shape_project(np.zeros((4, 3, 2)), three_body)


# ---------------------------------------------------------------------------
# Syzygies
# ---------------------------------------------------------------------------

def test_figure_eight_word(figure_eight):
    # syzygies sit at multiples of P/6; the window drops the two at the ends
    word = syzygy_sequence(figure_eight, 0.05, FIGURE_EIGHT_PERIOD - 0.05)
    assert len(word) == 5
    assert set(word.symbols) == {1, 2, 3}
    assert all(a != b for a, b in zip(word.symbols, word.symbols[1:]))
    assert all(b > a for a, b in zip(word.times, word.times[1:]))
    assert word.times[0] == pytest.approx(FIGURE_EIGHT_PERIOD/6, abs=1e-3)
    assert not word.degenerate
    assert not word.truncated

    # the middle body cycles with period three
    assert word.symbols[:2] == word.symbols[3:]


def test_two_period_word_is_squared(figure_eight, three_body):
    traj = propagate(figure_eight[0], three_body, 2*FIGURE_EIGHT_PERIOD + 0.1, events=())
    one = syzygy_sequence(traj, 0.05, FIGURE_EIGHT_PERIOD + 0.05)
    two = syzygy_sequence(traj, 0.05, 2*FIGURE_EIGHT_PERIOD + 0.05)
    assert len(one) == 6
    assert two.word == one.word*2
    assert two.times[6] == pytest.approx(one.times[0] + FIGURE_EIGHT_PERIOD, abs=1e-3)


def test_relative_equilibrium_has_no_syzygy(lagrange_run):
    word = syzygy_sequence(lagrange_run[2])
    assert word.word == ""
    assert not word.degenerate


def test_collinear_orbit_is_degenerate():
    level = energylevel(1.0)
    sys = masssystem([1, 2, 3])
    traj = propagate(euler_collinear([1, 2, 3], (0, 1, 2), level), sys, 1.0, events=())
    with pytest.warns(DegeneracyWarning):
        word = syzygy_sequence(traj)
    assert word.degenerate
    assert len(word) == 0


def test_word_json(tmp_path):
    word = syzygyword([3, 1, 2], [0.5, 1.0, 1.5], grazes=[0.7])
    assert word.word == "312"
    word.to_json(tmp_path / "syzygy.json", header={"seed": 0})
    doc = json.loads((tmp_path / "syzygy.json").read_text())
    assert doc["syzygy"]["word"] == "312"
    assert doc["syzygy"]["grazes"] == [0.7]
    assert doc["provenance"]["schema_version"] == 1
    assert repr(syzygyword([], [], degenerate=True)) == "syzygyword('', degenerate)"


# ---------------------------------------------------------------------------
# Hill region meshes
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def meshes(three_body):
    return hill_mesh(energylevel(1.0), three_body, resolution=9)


def test_mesh_labels_and_sizes(meshes):
    assert [m.label for m in meshes] == ["hill-boundary", "virial-surface"]
    for m in meshes:
        assert m.vertices.shape == (2*81 + 2, 3)
        assert m.faces.shape == (4*81, 3)
        assert m.faces.min() == 0
        assert m.faces.max() == len(m.vertices) - 1


def test_mesh_vertices_on_level(meshes, three_body):
    for m in meshes:
        keep = ~m.clipped
        q = shape_to_configuration(m.vertices[keep], three_body)
        assert shape_coordinates(q, three_body) == pytest.approx(m.vertices[keep], rel=1e-10, abs=1e-10)
        assert potential_U(q, three_body) == pytest.approx(m.c, rel=1e-10)


def test_mesh_pole_is_equilateral(meshes):
    # unit-mass equilateral triangle of side a has I = a^2 and U = 3/a,
    # so the pole of {U = c} sits at |w| = 9/c^2
    for m in meshes:
        assert m.vertices[-1] == pytest.approx([0.0, 0.0, 9/m.c**2], abs=1e-10)
        assert m.vertices[-2] == pytest.approx([0.0, 0.0, -9/m.c**2], abs=1e-10)


def test_unequal_mass_mesh_on_level(unequal_three_body):
    m = hill_mesh(energylevel(2.0), unequal_three_body, resolution=6)[0]
    keep = ~m.clipped
    q = shape_to_configuration(m.vertices[keep], unequal_three_body)
    assert np.allclose(unequal_three_body.center_of_mass(q), 0, atol=1e-12)
    assert shape_coordinates(q, unequal_three_body) == pytest.approx(m.vertices[keep], rel=1e-10, abs=1e-10)
    assert potential_U(q, unequal_three_body) == pytest.approx(2.0, rel=1e-10)


def test_mesh_clips_collision_rays(meshes):
    h_mesh = meshes[0]
    pole = np.linalg.norm(h_mesh.vertices[-1])
    assert h_mesh.r_max == pytest.approx(16*pole)
    for m in meshes:
        assert m.clipped.sum() >= 3
        assert m.radii[m.clipped] == pytest.approx(m.r_max)


def test_virial_surface_inside_boundary(meshes):
    boundary, virial = meshes
    free = ~(boundary.clipped | virial.clipped)
    # |w| scales as c^-2 for alpha = 1
    assert virial.radii[free] == pytest.approx(boundary.radii[free]/4, rel=1e-12)


def test_mesh_resolution_bounds(three_body):
    with pytest.raises(InputError):
        hill_mesh(energylevel(1.0), three_body, resolution=2)


def test_write_obj(meshes, tmp_path):
    m = meshes[1]
    path = tmp_path / "mesh.obj"
    write_obj(m, path, header={"seed": 0})
    lines = path.read_text().splitlines()
    comments = [l for l in lines if l.startswith("#")]
    verts = [l for l in lines if l.startswith("v ")]
    faces = [l for l in lines if l.startswith("f ")]
    assert "# label: \"virial-surface\"" in comments
    assert len(verts) == len(m.vertices)
    assert len(faces) == len(m.faces)
    assert min(int(i) for f in faces for i in f.split()[1:]) == 1
    assert float(verts[0].split()[1]) == m.vertices[0, 0]


def test_mesh_dataframe(meshes):
    df = mesh_to_dataframe(meshes[0])
    assert list(df.columns) == ["w1", "w2", "w3", "r", "clipped", "label"]
    assert df["r"].to_numpy() == pytest.approx(np.sqrt(meshes[0].radii))


def test_shape_curve(figure_eight):
    df = shape_curve(figure_eight, n=101)
    assert len(df) == 101
    q, _ = figure_eight.qv(df["t"].to_numpy())
    w = df[["w1", "w2", "w3"]].to_numpy()
    assert np.linalg.norm(w, axis=-1) == pytest.approx(moment_I(q, figure_eight.sys), rel=1e-12)

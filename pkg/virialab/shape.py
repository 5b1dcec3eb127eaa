# Three-body shape space: Hopf projection, syzygy words and Hill region meshes
# Oct 2026

from .exceptions import *
from .integrate import _event_grid, _zeros
import virialab
import virialab.constants as const
import warnings, json

import numpy as np
import pandas as pd

def _check_planar3(sys):
    if sys.n_bodies != 3 or sys.dim != 2:
        raise InputError(f'Shape space needs three planar bodies, got n={sys.n_bodies}, dim={sys.dim}')

def _jacobi(q, sys):
    # mass-weighted Jacobi vectors as complex numbers, |z1|^2 + |z2|^2 = I about the CoM
    m1, m2, m3 = sys.masses
    mu1 = m1*m2/(m1 + m2)
    mu2 = m3*(m1 + m2)/sys.total_mass
    q = np.asarray(q, dtype=float)
    c = q[..., 0] + 1j*q[..., 1]
    z1 = np.sqrt(mu1)*(c[..., 1] - c[..., 0])
    z2 = np.sqrt(mu2)*(c[..., 2] - (m1*c[..., 0] + m2*c[..., 1])/(m1 + m2))
    return (z1, z2)

def shape_coordinates(q, sys):
    """Hopf image w of planar three-body configurations, shape (..., 3).

    w1 = |z1|^2 - |z2|^2, w2 + i w3 = 2 z1 conj(z2) for the mass-weighted
    Jacobi vectors z1, z2; |w| equals I about the center of mass and w3 is
    proportional to the signed area of the triangle.
    """
    _check_planar3(sys)
    z1, z2 = _jacobi(q, sys)
    p = 2*z1*np.conj(z2)
    return np.stack((np.abs(z1)**2 - np.abs(z2)**2, p.real, p.imag), axis=-1)

class shapepoint(object):
    """Point of three-body shape space.

    Attributes:
        r (float): shell radius sqrt(I)
        w (np.ndarray): Hopf image, |w| = I
    """

    def __init__(self, w):
        self.w = np.asarray(w, dtype=float)
        self.r = float(np.sqrt(np.linalg.norm(self.w)))

    def __repr__(self):
        return f'shapepoint(w={self.w.tolist()}, r={self.r:.6g})'

    @property
    def direction(self):
        """np.ndarray: w / |w| on the shape sphere"""
        return self.w/np.linalg.norm(self.w)

    @property
    def latitude(self):
        """float: angle above the collinear equator"""
        return float(np.arcsin(np.clip(self.w[2]/np.linalg.norm(self.w), -1, 1)))

def shape_project(q, sys):
    """Project a planar three-body configuration to shape space.

    Invariant under translations and rotations of the plane. Collinear
    configurations land on the equator w3 = 0, equal-mass equilateral ones on a pole
    and binary collisions on one of three equatorial rays.

    Returns:
        shapepoint

    Example:
        >>> sys = masssystem([1, 1, 1])
        >>> p = shape_project([[0, 0], [1, 0], [0.5, np.sqrt(3)/2]], sys)
        >>> np.isclose(abs(p.latitude), np.pi/2)
        True
    """
    q = sys.check(q)
    if q.ndim != 2:
        raise InputError('shape_project takes one configuration; use shape_coordinates for batches')
    return shapepoint(shape_coordinates(q, sys))

def shape_to_configuration(w, sys):
    """CoM-normalized planar configuration(s) with Hopf image w (inverse map, rotation fixed).

    Args:
        w (array-like): shape coordinates, shape (..., 3)
        sys (masssystem): three planar bodies

    Returns:
        np.ndarray: configurations, shape (..., 3, 2)
    """
    _check_planar3(sys)
    w = np.asarray(w, dtype=float)
    m1, m2, m3 = sys.masses
    M = sys.total_mass
    mu1 = m1*m2/(m1 + m2)
    mu2 = m3*(m1 + m2)/M

    rho = np.linalg.norm(w, axis=-1)
    a = np.sqrt(np.clip((rho + w[..., 0])/2, 0, None))
    b = np.sqrt(np.clip((rho - w[..., 0])/2, 0, None))
    with np.errstate(divide='ignore', invalid='ignore'):
        z2 = np.where(a > 0, (w[..., 1] - 1j*w[..., 2])/(2*np.where(a > 0, a, 1)), b + 0j)
    z1 = a + 0j

    s = z1/np.sqrt(mu1)          # q2 - q1
    d = z2/np.sqrt(mu2)          # q3 - center of the pair
    c12 = -m3/M*d
    c = np.stack((c12 - m2/(m1 + m2)*s, c12 + m1/(m1 + m2)*s, c12 + d), axis=-1)
    return np.stack((c.real, c.imag), axis=-1)

def collision_rays(sys):
    """Unit directions in shape space of the three binary collision rays.

    Returns:
        dict: pair (a, b) -> unit 3-vector
    """
    _check_planar3(sys)
    out = {}
    for a, b in ((0, 1), (1, 2), (0, 2)):
        q = np.zeros((3, 2))
        other = 3 - a - b
        q[other, 0] = 1.0
        w = shape_coordinates(q, sys)
        out[(a, b)] = w/np.linalg.norm(w)
    return out

# ---------------------------------------------------------------------------
# syzygies
# ---------------------------------------------------------------------------

def _area(q):
    # signed area of the triangle, batched
    d1 = q[..., 1, :] - q[..., 0, :]
    d2 = q[..., 2, :] - q[..., 0, :]
    return 0.5*(d1[..., 0]*d2[..., 1] - d1[..., 1]*d2[..., 0])

def _area_rate(q, v):
    d1 = q[..., 1, :] - q[..., 0, :]
    d2 = q[..., 2, :] - q[..., 0, :]
    e1 = v[..., 1, :] - v[..., 0, :]
    e2 = v[..., 2, :] - v[..., 0, :]
    return 0.5*(e1[..., 0]*d2[..., 1] - e1[..., 1]*d2[..., 0] + d1[..., 0]*e2[..., 1] - d1[..., 1]*e2[..., 0])

def _middle(q):
    # label (1-based) of the body between the other two on their common line
    d = q[np.argmax(np.linalg.norm(q - q[0], axis=-1))] - q[0]
    if not np.any(d):
        d = np.array([1.0, 0.0])
    s = (q - q[0]) @ d
    return int(np.argsort(s)[1]) + 1

class syzygyword(object):
    """Ordered collinear instants of a planar three-body trajectory.

    Attributes:
        degenerate (bool): the trajectory stays collinear (word undefined)
        grazes (list): times of tangential contacts with the equator, excluded from the word
        symbols (list): middle-body labels in {1, 2, 3}
        times (list): syzygy times, strictly increasing
        truncated (bool): the trajectory ended at a collision proximity stop
    """

    def __init__(self, symbols, times, grazes=(), degenerate=False, truncated=False):
        self.symbols = list(symbols)
        self.times = [float(t) for t in times]
        self.grazes = [float(t) for t in grazes]
        self.degenerate = bool(degenerate)
        self.truncated = bool(truncated)

    def __repr__(self):
        flags = [f for f, on in (('degenerate', self.degenerate), ('truncated', self.truncated)) if on]
        return f'syzygyword({self.word!r}{", " + ", ".join(flags) if flags else ""})'

    def __len__(self):
        return len(self.symbols)

    @property
    def word(self):
        """str: symbols concatenated"""
        return ''.join(str(s) for s in self.symbols)

    def to_dict(self):
        return {'word': self.word, 'symbols': self.symbols, 'times': self.times,
                'grazes': self.grazes, 'degenerate': self.degenerate, 'truncated': self.truncated}

    def to_json(self, path=None, header=None):
        doc = {'provenance': dict(header or {}), 'syzygy': self.to_dict()}
        doc['provenance'].setdefault('schema_version', const.SCHEMA_VERSION)
        text = json.dumps(doc, sort_keys=True, indent=1) + '\n'
        if path is not None:
            with open(path, 'w') as fid:
                fid.write(text)
        return text

def syzygy_sequence(traj, t0=None, t1=None):
    """Syzygy word of a planar three-body trajectory.

    Zeros of the signed triangle area are located on the event grid and
    polished by Brent's method. A zero counts as a syzygy only if the area
    rate there exceeds `EVENT_DEFAULTS['degeneracy_floor']` times the local
    speed scale; tangential contacts are listed as grazes instead.

    Args:
        traj (trajectory): planar three-body trajectory
        t0, t1 (float|None): optional sub-window

    Returns:
        syzygyword
    """
    sys = traj.sys
    _check_planar3(sys)
    if t0 is not None or t1 is not None:
        traj = traj.window(traj.t0 if t0 is None else t0, traj.t1 if t1 is None else t1)

    floor_rel = virialab.EVENT_DEFAULTS['degeneracy_floor']
    grid = _event_grid(traj)
    q, v = traj.qv(grid)
    A = _area(q)

    # natural scales: area ~ r^2, area rate ~ r v
    r = sys.pair_distances(q)
    nat = max(float(np.max(r.max(axis=-1)**2)), np.finfo(float).tiny)
    floor = floor_rel*nat
    truncated = 'collision' in traj.status

    if np.all(np.abs(A) < floor):
        warnings.warn('Trajectory stays collinear; syzygy word is degenerate', DegeneracyWarning)
        return syzygyword([], [], degenerate=True, truncated=truncated)

    def fn_t(t):
        return float(_area(traj.qv(t)[0])[0])

    symbols, times, grazes = [], [], []
    for t, direction, degenerate in sorted(_zeros(fn_t, grid, A, floor, 1e-3*nat)):
        qq, vv = traj.qv(t)
        rate = abs(float(_area_rate(qq, vv)[0]))
        scale = float(np.max(sys.pair_distances(qq))*np.max(np.linalg.norm(vv[0][:, None] - vv[0][None], axis=-1)))
        if degenerate or direction == 0 or rate <= floor_rel*scale:
            grazes.append(t)
            continue
        if times and t - times[-1] <= 1e-12*max(1.0, abs(t)):
            continue
        symbols.append(_middle(qq[0]))
        times.append(t)

    if grazes:
        warnings.warn(f'{len(grazes)} tangential syzygy contact(s) excluded from the word', DegeneracyWarning)
    return syzygyword(symbols, times, grazes, truncated=truncated)

# ---------------------------------------------------------------------------
# Hill region meshes
# ---------------------------------------------------------------------------

class shapemesh(object):
    """Triangulated isosurface {U = c} in shape space.

    The surface is a radial graph over the shape sphere: along a unit
    direction omega it sits at |w| = (U(omega)/c)^(2/alpha), U(omega) being
    U of the configuration with I = 1 and shape omega.

    Attributes:
        c (float): level value
        clipped (np.ndarray): vertices cut at r_max (inside a collision tube)
        directions (np.ndarray): unit directions of the vertices
        faces (np.ndarray): vertex index triples, 0-based
        label (str): `hill-boundary`, `virial-surface` or `level`
        r_max (float): clipping radius in |w|
        vertices (np.ndarray): points in shape space
    """

    def __init__(self, vertices, faces, directions, clipped, c, r_max, label):
        self.vertices = vertices
        self.faces = faces
        self.directions = directions
        self.clipped = clipped
        self.c = float(c)
        self.r_max = float(r_max)
        self.label = label

    def __repr__(self):
        return (f'shapemesh({self.label}, c={self.c:.6g}, {len(self.vertices)} vertices, '
                f'{len(self.faces)} faces, {int(self.clipped.sum())} clipped)')

    @property
    def radii(self):
        """np.ndarray: |w| of the vertices"""
        return np.linalg.norm(self.vertices, axis=-1)

def _sphere_grid(resolution):
    # lat-long vertices with the two poles, and triangle faces
    n_lat, n_lon = resolution, 2*resolution
    lat = -np.pi/2 + np.pi*np.arange(1, n_lat + 1)/(n_lat + 1)
    lon = 2*np.pi*np.arange(n_lon)/n_lon
    LAT, LON = np.meshgrid(lat, lon, indexing='ij')
    d = np.stack((np.cos(LAT)*np.cos(LON), np.cos(LAT)*np.sin(LON), np.sin(LAT)), axis=-1).reshape(-1, 3)
    d = np.vstack((d, [[0, 0, -1], [0, 0, 1]]))
    south, north = n_lat*n_lon, n_lat*n_lon + 1

    def idx(i, j):
        return i*n_lon + j % n_lon

    faces = []
    for i in range(n_lat - 1):
        for j in range(n_lon):
            faces.append((idx(i, j), idx(i, j + 1), idx(i + 1, j + 1)))
            faces.append((idx(i, j), idx(i + 1, j + 1), idx(i + 1, j)))
    for j in range(n_lon):
        faces.append((south, idx(0, j + 1), idx(0, j)))
        faces.append((north, idx(n_lat - 1, j), idx(n_lat - 1, j + 1)))
    return (d, np.array(faces, dtype=int))

def _unit_U(directions, sys):
    # U on the unit-I configurations of the given shape directions
    q = shape_to_configuration(directions, sys)
    r = sys.pair_distances(q)
    with np.errstate(divide='ignore'):
        U = sys.G*np.sum(sys._mm*r**(-sys.alpha), axis=-1)
    return np.where(np.any(r == 0, axis=-1), const.U_COLLISION, U)

def hill_mesh(level, sys, resolution=48, values=None, r_max=None):
    """Meshes of {U = h} and {U = 2h} restricted to shape space.

    Args:
        level (energylevel): energy level
        sys (masssystem): three planar bodies
        resolution (int): latitude rows (longitudes are twice as many), 4..1024
        values (iterable|None): level values, default (h, 2h)
        r_max (float|None): clipping radius in |w|, default 16 times the
            largest unclipped radius at the Lagrange poles of the h mesh

    Returns:
        list: of shapemesh, one per value

    Raises:
        InputError: resolution out of bounds
    """
    _check_planar3(sys)
    if not 4 <= int(resolution) <= 1024:
        raise InputError(f'Mesh resolution must lie in [4, 1024], got {resolution}')
    values = (level.U_hill, level.U_virial) if values is None else tuple(values)

    d, faces = _sphere_grid(int(resolution))
    U1 = _unit_U(d, sys)
    if r_max is None:
        r_max = 16*float(np.max((U1[-2:]/min(values))**(2/sys.alpha)))

    out = []
    for c in values:
        with np.errstate(over='ignore'):
            R = (U1/c)**(2/sys.alpha)
        clipped = ~np.isfinite(R) | (R > r_max)
        R = np.where(clipped, r_max, R)
        if np.isclose(c, level.U_hill):
            label = 'hill-boundary'
        elif np.isclose(c, level.U_virial):
            label = 'virial-surface'
        else:
            label = 'level'
        out.append(shapemesh(d*R[:, None], faces, d, clipped, c, r_max, label))
    return out

def write_obj(mesh, path, header=None):
    """Write a mesh as OBJ text: comment header, `v x y z` lines, 1-based `f i j k` lines"""
    header = dict(header or {})
    header.setdefault('schema_version', const.SCHEMA_VERSION)
    header.update({'label': mesh.label, 'c': mesh.c, 'r_max': mesh.r_max})
    with open(path, 'w') as fid:
        for key in sorted(header):
            fid.write(f'# {key}: {json.dumps(header[key], sort_keys=True)}\n')
        for x, y, z in mesh.vertices.tolist():
            fid.write(f'v {x!r} {y!r} {z!r}\n')
        for i, j, k in (mesh.faces + 1).tolist():
            fid.write(f'f {i} {j} {k}\n')

def mesh_to_dataframe(mesh):
    """Vertex point cloud with radius and clipping flag"""
    return pd.DataFrame({'w1': mesh.vertices[:, 0], 'w2': mesh.vertices[:, 1], 'w3': mesh.vertices[:, 2],
                         'r': np.sqrt(mesh.radii), 'clipped': mesh.clipped, 'label': mesh.label})

def shape_curve(traj, n=2001):
    """Trajectory pushed to shape space as a point cloud (t, w1, w2, w3)"""
    t = np.linspace(traj.t0, traj.t1, n)
    w = shape_coordinates(traj.qv(t)[0], traj.sys)
    return pd.DataFrame({'t': t, 'w1': w[:, 0], 'w2': w[:, 1], 'w3': w[:, 2]})

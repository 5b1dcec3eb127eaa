# Brake orbits: zero-velocity starts, reflection symmetry and periodic shooting
# Oct 2026

from .exceptions import *
from .nbodycore import (state, energylevel, potential_U, grad_U, kinetic_K, moment_I,
                        scale_to_level)
from .integrate import propagate, propagate_two_sided, detect_events
from .ensemble import ensemble, parallel_map
import virialab
import virialab.constants as const
from itertools import combinations
import warnings, json

import numpy as np
from scipy.optimize import minimize, least_squares
from scipy.linalg import null_space

def kepler_free_fall_time(r, sys):
    """Time for two bodies released at rest at separation r to collide.

    Radial Kepler orbit: t_c = (pi/2) sqrt(r^3 / (2 G M)).

    Args:
        r (float): initial separation
        sys (masssystem): two-body Newtonian system

    Returns:
        float: collision time

    Example:
        >>> kepler_free_fall_time(1.0, masssystem([0.5, 0.5]))
        1.1107207345395915
    """
    if sys.n_bodies != 2 or sys.alpha != 1:
        raise InputError('Free-fall time is closed form only for two bodies with alpha = 1')
    return 0.5*np.pi*np.sqrt(r**3/(2*sys.G*sys.total_mass))

def _collapse_time(q, sys):
    # two-body free-fall time at the same I and U, a time scale for any brake start
    U = potential_U(q, sys)
    return 0.5*np.pi*np.sqrt(moment_I(q, sys)/(2*U))

class brakeorbit(object):
    """Solution with a brake instant at t = 0, integrated in both time directions.

    Args:
        q_star (np.ndarray): brake configuration
        sys (masssystem): system
        traj (trajectory): solution on [-T, T] (shorter if stopped at a collision)

    Attributes:
        closest_approach (float): smallest sampled mutual distance
        collision (bool): a run stopped at the collision proximity distance
        level (energylevel): energy level, h = U(q_star)
        q_star (np.ndarray): brake configuration
        sys (masssystem): system
        t_closest (float): sample time of the closest approach (t >= 0 side)
        t_star (float): brake instant
        traj (trajectory): two-sided solution
        virial_before_closest (bool): U = 2h is crossed between the brake
            instant and the closest approach
    """

    def __init__(self, q_star, sys, traj):
        self.q_star = np.asarray(q_star, dtype=float)
        self.sys = sys
        self.traj = traj
        self.level = energylevel(potential_U(q_star, sys))
        self.t_star = 0.0

        fwd = traj.t >= self.t_star
        rmin = np.min(sys.pair_distances(traj.q[fwd]), axis=-1)
        self.closest_approach = float(min(traj.closest_approach, rmin.min()))
        self.t_closest = float(traj.t[fwd][np.argmin(rmin)])
        self.collision = 'collision-proximity' in traj.status

        crossings = [e.t for e in traj.events_of('virial-crossing', transverse=True)
                     if self.t_star < e.t <= self.t_closest]
        self.virial_before_closest = len(crossings) > 0

    def __repr__(self):
        return (f'brakeorbit(h={self.level.h:.6g}, span=[{self.traj.t0:.6g}, {self.traj.t1:.6g}], '
                f'closest={self.closest_approach:.3g}, collision={self.collision})')

    @property
    def h(self):
        return self.level.h

def brake_start(q_star, sys, T=None, **kwargs):
    """Integrate from rest at q_star in both time directions.

    The energy is -U(q_star) by construction.

    Args:
        q_star (array-like): non-collision configuration
        sys (masssystem): system
        T (float|None): half-width of the run. Default is four times the
            two-body free-fall time at the same I and U
        **kwargs: passed to `propagate_two_sided`

    Returns:
        brakeorbit

    Example:
        >>> sys = masssystem([1, 1, 1])
        >>> orbit = brake_start([[0, 0], [1, 0], [0.5, 0.8]], sys)
        >>> orbit.collision
        True
    """
    q_star = sys.com_normalize(sys.check(q_star))
    if np.isinf(potential_U(q_star, sys)):
        raise SingularityError('Brake start at a collision')

    T = 4*_collapse_time(q_star, sys) if T is None else float(T)
    s0 = state(0.0, q_star, np.zeros(sys.shape))
    level = energylevel(potential_U(q_star, sys))
    kwargs.setdefault('events', ('brake-instant', 'virial-crossing', 'turn-around',
                                 'collision-proximity'))
    traj = propagate_two_sided(s0, sys, T, level=level, **kwargs)

    orbit = brakeorbit(q_star, sys, traj)
    if orbit.collision:
        warnings.warn(f'Brake orbit reaches the collision proximity stop, closest approach '
                      f'{orbit.closest_approach:.3g} at t={orbit.t_closest:.6g}', CollisionWarning)
    return orbit

def verify_brake_symmetry(orbit, T=None, t_star=None, n=401):
    """Largest mass-metric distance between q(t* + s) and q(t* - s) for 0 < s <= T.

    Args:
        orbit (brakeorbit|trajectory): solution spanning [t* - T, t* + T]
        T (float|None): half-width to test, default the largest available
        t_star (float|None): reflection time, default the brake instant (0)
        n (int): number of sampled s values

    Returns:
        float: max asymmetry

    Raises:
        SpanError: span too short for T
    """
    traj = orbit.traj if isinstance(orbit, brakeorbit) else orbit
    t_star = (orbit.t_star if isinstance(orbit, brakeorbit) else 0.0) if t_star is None else t_star

    avail = min(t_star - traj.t0, traj.t1 - t_star)
    if T is None:
        T = avail
    if not T > 0 or T > avail*(1 + 1e-12):
        raise SpanError(f'Need the span to cover [t* - {T}, t* + {T}], have [{traj.t0}, {traj.t1}]')

    s = np.linspace(0, min(T, avail), n)[1:]
    qp, _ = traj.qv(t_star + s)
    qm, _ = traj.qv(t_star - s)
    return float(np.max(traj.sys.mass_norm(qp - qm)))

def boundary_angle(orbit, s=None):
    """Angle between v and grad_U just after the brake instant.

    Brake orbits leave the Hill boundary along its normal, so the angle tends
    to zero as s -> 0.

    Args:
        orbit (brakeorbit): brake orbit
        s (float|None): time after the brake instant, default 1e-3 of the
            free-fall time scale

    Returns:
        float: angle in radians, mass metric
    """
    sys = orbit.sys
    s = 1e-3*_collapse_time(orbit.q_star, sys) if s is None else s
    st = orbit.traj(orbit.t_star + s)
    g = grad_U(st.q, sys)
    c = sys.mass_inner(st.v, g)/(sys.mass_norm(st.v)*sys.mass_norm(g))
    return float(np.arccos(np.clip(c, -1, 1)))

# ---------------------------------------------------------------------------
# periodic brake orbits
# ---------------------------------------------------------------------------

def brake_closure(q_star, sys, t_half, **kwargs):
    """Phase-space closure after one reflection-doubled period.

    A brake orbit with a second brake instant at t_half is periodic with
    period 2 t_half. Integrate from rest at q_star for 2 t_half and measure
    the mass-metric distance of (q, v) from (q_star, 0).

    Returns:
        tuple: (closure distance, trajectory over one period)
    """
    q_star = np.asarray(q_star, dtype=float)
    s0 = state(0.0, q_star, np.zeros(sys.shape))
    traj = propagate(s0, sys, 2*t_half, level=energylevel(potential_U(q_star, sys)), **kwargs)
    end = traj[-1]
    if traj.status != 'completed':
        return (np.inf, traj)
    d = np.sqrt(sys.mass_inner(end.q - q_star, end.q - q_star) + sys.mass_inner(end.v, end.v))
    return (float(d), traj)

class shootresult(object):
    """Outcome of a periodic brake orbit search from one boundary seed.

    Attributes:
        avg_U_ratio (float): one-period average of U over 2h (1 for a periodic orbit)
        closure (float): phase-space closure after one period
        crossings (int): transverse virial crossings over one period
        history (list): best residual after each evaluation, non-increasing
        nfev (int): residual evaluations
        period (float): 2 t_half
        q_star (np.ndarray): best brake configuration, on U = h
        residual (float): sqrt(K / h) at the next approach to the boundary
        seed (np.ndarray): starting configuration
        status (str): `converged`, `not-converged`, `collision` or `timeout`
        traj (trajectory|None): one period from q_star when a period was found
    """

    def __init__(self, **kwargs):
        self.avg_U_ratio = np.nan
        self.closure = np.inf
        self.crossings = 0
        self.traj = None
        for key, value in kwargs.items():
            setattr(self, key, value)

    def __repr__(self):
        return (f'shootresult(status={self.status}, residual={self.residual:.3g}, '
                f'period={self.period:.6g}, closure={self.closure:.3g})')

    def to_dict(self):
        return {'status': self.status,
                'residual': float(self.residual),
                'period': float(self.period),
                'closure': float(self.closure),
                'avg_U_ratio': float(self.avg_U_ratio),
                'crossings': int(self.crossings),
                'nfev': int(self.nfev),
                'q_star': np.asarray(self.q_star).tolist()}

_FAIL = 10.0    # residual assigned to runs with no second boundary approach

def _next_approach(q, sys, level, t_max, **kwargs):
    # residual sqrt(K/h) at the first local minimum of K after leaving rest at q
    s0 = state(0.0, q, np.zeros(sys.shape))
    try:
        traj = propagate(s0, sys, t_max, events=(), level=level, **kwargs)
    except (IntegrationError, SingularityError):
        return (_FAIL, np.nan, 'collision')

    minima = [e for e in detect_events(traj, ('brake-instant',), level=level, brake_threshold=np.inf)
              if e.t > 1e-9*t_max]
    if minima:
        e = minima[0]
        return (float(np.sqrt(kinetic_K(e.state.v, sys)/level.h)), e.t, 'found')
    if 'collision-proximity' in traj.status:
        return (_FAIL, np.nan, 'collision')
    return (_FAIL, np.nan, 'timeout')

def _boundary_chart(seed, sys):
    # unit mass-weighted direction of seed and an orthonormal basis of the
    # directions that change its shape: translations, scaling and rotations removed
    root_m = np.sqrt(sys.masses)[:, None]
    y = root_m*seed
    y = y/np.linalg.norm(y)
    rows = []
    for k in range(sys.dim):
        e = np.zeros(sys.shape)
        e[:, k] = root_m[:, 0]
        rows.append(e.ravel())
    rows.append(y.ravel())
    for i, j in combinations(range(sys.dim), 2):
        g = np.zeros(sys.shape)
        g[:, i] = -y[:, j]
        g[:, j] = y[:, i]
        rows.append(g.ravel())
    return (y.ravel(), null_space(np.array(rows)))

def _on_boundary(x, chart, sys, level):
    y, basis = chart
    q = np.reshape(y + basis @ x, sys.shape)/np.sqrt(sys.masses)[:, None]
    return scale_to_level(sys.com_normalize(q), sys, level.h)

def _rest_velocity(z, chart, sys, level, **kwargs):
    # mass-weighted velocity at time z[-1] after release from rest, scaled so its
    # norm is sqrt(K / h)
    try:
        q = _on_boundary(z[:-1], chart, sys, level)
        s0 = state(0.0, q, np.zeros(sys.shape))
        traj = propagate(s0, sys, z[-1], events=(), level=level, **kwargs)
    except (IntegrationError, SingularityError):
        return np.full(sys.n_bodies*sys.dim, _FAIL)
    if traj.status != 'completed':
        return np.full(sys.n_bodies*sys.dim, _FAIL)
    v = np.sqrt(sys.masses)[:, None]*traj[-1].v
    return v.ravel()/np.sqrt(2*level.h)

def periodic_brake_shoot(seed, sys, level, t_max=None, maxiter=None, tol=1e-6, **kwargs):
    """Search the Hill boundary near seed for a brake orbit with a second brake instant.

    The residual of a boundary point q is sqrt(K / h) at the next local
    minimum of K after releasing q from rest. A zero means a second
    orthogonal boundary hit, and the orbit is periodic by reflection with
    period twice that time.

    Boundary points are charted by shape: the mass-weighted direction of
    the seed plus a combination of the directions that change its shape
    (translations, rotations and scale removed), mapped onto U = h by the
    scaling map. The chart origin and a few random starts of size `step`
    are evaluated first, so a seed on a collision set (an isosceles or
    collinear start) does not pin the search to the collision plateau.
    Nelder-Mead runs from the best start with a simplex of size `step`,
    then a least-squares polish drives the velocity at the approach time
    to zero with the time as a free variable.

    Args:
        seed (array-like): configuration with U = h within band tolerance
        sys (masssystem): system
        level (energylevel): energy level
        t_max (float|None): horizon for the next approach, default eight
            free-fall time scales
        maxiter (int|None): Nelder-Mead iterations, default `SHOOT_DEFAULTS`
        tol (float): closure distance accepted as periodic
        **kwargs: `step`, `restarts`, `polish` and `seed_rng` override
            `SHOOT_DEFAULTS`; the rest are passed to `propagate`

    Returns:
        shootresult

    Raises:
        InputError: seed not on the Hill boundary band
    """
    opts = {**virialab.SHOOT_DEFAULTS}
    for key in ('step', 'restarts', 'polish', 'seed_rng'):
        if key in kwargs:
            opts[key] = kwargs.pop(key)
    if maxiter is not None:
        opts['maxiter'] = maxiter

    seed = sys.com_normalize(sys.check(seed))
    band = virialab.HILL_DEFAULTS['band']
    U = potential_U(seed, sys)
    if abs(U - level.h) > max(band, 1e-9)*level.h:
        raise InputError(f'Seed must lie on U = h = {level.h}, has U = {U}')

    t_max = 8*_collapse_time(seed, sys) if t_max is None else t_max
    chart = _boundary_chart(seed, sys)
    k = chart[1].shape[1]

    history = []
    best = {'r': np.inf, 'x': np.zeros(k), 't': np.nan, 'why': 'timeout'}

    def residual(x):
        q = _on_boundary(x, chart, sys, level)
        r, t, why = _next_approach(q, sys, level, t_max, **kwargs)
        if r < best['r'] or not history:
            best.update(r=r, x=np.array(x), t=t, why=why)
        history.append(best['r'])
        return r

    residual(np.zeros(k))
    if k:
        rng = np.random.default_rng(opts['seed_rng'])
        for _ in range(opts['restarts']):
            residual(opts['step']*rng.normal(size=k))

        x0 = best['x']
        simplex = np.vstack((x0, x0 + opts['step']*np.eye(k)))
        minimize(residual, x0, method='Nelder-Mead',
                 options={'maxiter': opts['maxiter'], 'initial_simplex': simplex,
                          'xatol': 1e-10, 'fatol': 1e-12})

    if k and opts['polish'] and best['why'] == 'found':
        z0 = np.append(best['x'], best['t'])
        lo = np.append(np.full(k, -np.inf), 0.5*best['t'])
        hi = np.append(np.full(k, np.inf), 2.0*best['t'])
        fit = least_squares(_rest_velocity, z0, bounds=(lo, hi), args=(chart, sys, level),
                            kwargs=kwargs, diff_step=1e-7, xtol=1e-14, ftol=1e-14, gtol=1e-14,
                            max_nfev=50*(k + 1))
        r = float(np.linalg.norm(fit.fun))
        if r < best['r']:
            best.update(r=r, x=fit.x[:-1], t=float(fit.x[-1]))
        history.append(best['r'])

    q_star = _on_boundary(best['x'], chart, sys, level)
    out = shootresult(seed=seed, q_star=q_star, residual=best['r'], history=history,
                      nfev=len(history), period=2*best['t'])

    if best['why'] != 'found':
        out.status = best['why']
        warnings.warn(f'No second boundary approach from seed ({best["why"]})', ConvergenceWarning)
        return out

    closure, traj = brake_closure(q_star, sys, best['t'], **kwargs)
    out.closure = closure
    if traj.status == 'completed':
        out.traj = traj
        out.avg_U_ratio = traj.average(lambda q, v: potential_U(q, sys))/(2*level.h)
        out.crossings = len(traj.events_of('virial-crossing', transverse=True))

    out.status = 'converged' if closure < tol else 'not-converged'
    if out.status != 'converged':
        warnings.warn(f'Shooting stopped at residual {out.residual:.3g}, closure {closure:.3g}',
                      ConvergenceWarning)
    return out

def _shoot_worker(args):
    seed, sys, level, kwargs = args
    return periodic_brake_shoot(seed, sys, level, **kwargs)

def periodic_brake_search(seeds, sys, level, jobs=1, **kwargs):
    """Run `periodic_brake_shoot` from every seed on a worker pool.

    Returns:
        ensemble: `shootresult` records in seed order
    """
    args = [(s, sys, level, kwargs) for s in seeds]
    return parallel_map(_shoot_worker, args, jobs=jobs, desc='brake search')

def boundary_seeds(sys, level, n, seed=None):
    """Random configurations placed on U = h by the scaling map"""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        q = sys.com_normalize(rng.normal(size=sys.shape))
        r = sys.pair_distances(q)
        if np.min(r) < 0.1*np.mean(r):
            continue
        out.append(scale_to_level(q, sys, level.h))
    return out

def write_catalog(results, path, sys, header=None):
    """Write shooting results as JSON lines, one orbit per line.

    Each line holds masses, q_star, period, residual, closure and virial
    statistics; a first line holds the provenance header.
    """
    head = dict(header or {})
    head.setdefault('schema_version', const.SCHEMA_VERSION)
    with open(path, 'w') as fid:
        fid.write(json.dumps({'provenance': head}, sort_keys=True) + '\n')
        for res in results:
            line = res.to_dict()
            line['masses'] = sys.masses.tolist()
            fid.write(json.dumps(line, sort_keys=True) + '\n')

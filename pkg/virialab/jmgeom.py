# Jacobi-Maupertuis geometry: path lengths, geodesics to the brake point, scaling and mountain passes
# Oct 2026

from .exceptions import *
from .nbodycore import state, energylevel, potential_U, grad_U, moment_I, scale_to_level
from .integrate import propagate
from .brake import brake_start
from .ensemble import ensemble, parallel_map
import virialab
import virialab.constants as const
import warnings, json

import numpy as np
import pandas as pd
from scipy.optimize import minimize, minimize_scalar

# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------

def _segments(nodes, sys, h):
    # per-segment midpoint lengths sqrt(2 (U(mid) - h)) |dq|; segments with both
    # ends in the Hill-boundary band lie on the collapsed brake point and cost nothing
    nodes = np.asarray(nodes, dtype=float)
    band = virialab.HILL_DEFAULTS['band']
    mid = 0.5*(nodes[1:] + nodes[:-1])
    U = potential_U(mid, sys)
    ds = sys.mass_norm(nodes[1:] - nodes[:-1])
    on_boundary = np.abs(potential_U(nodes, sys) - h) <= band*h
    with np.errstate(invalid='ignore'):
        out = np.sqrt(2*np.clip(U - h, 0, None))*ds
    # zero-length segments carry no length even at a collision midpoint
    return np.where((ds == 0) | (on_boundary[1:] & on_boundary[:-1]), 0.0, out)

def _tag(q, sys, h):
    band = virialab.HILL_DEFAULTS['band']
    if np.min(sys.pair_distances(q)) < virialab.HILL_DEFAULTS['r_min']:
        return 'collision-capped'
    if abs(potential_U(q, sys) - h) <= band*h:
        return 'brake-point'
    return 'interior'

class jmpath(object):
    """Discrete configuration chain measured in the Jacobi-Maupertuis metric 2(U - h) ds^2.

    Args:
        nodes (array-like): configurations q_0..q_M, shape (M + 1, n_bodies, dim)
        sys (masssystem): system
        level (energylevel): energy level

    Attributes:
        level (energylevel): energy level
        nodes (np.ndarray): configurations
        segment_lengths (np.ndarray): midpoint-rule length of each segment
        sys (masssystem): system
        tags (tuple): endpoint tags, each `interior`, `brake-point` or
            `collision-capped`

    Raises:
        InputError: a node lies outside the Hill region beyond the band tolerance

    Example:
        >>> path = jmpath(np.linspace(q0, q1, 50), sys, energylevel(0.5))
        >>> path.length
    """

    def __init__(self, nodes, sys, level):
        nodes = sys.check(nodes)
        if nodes.ndim != 3 or len(nodes) < 2:
            raise InputError(f'A path needs at least two nodes, got shape {nodes.shape}')

        band = virialab.HILL_DEFAULTS['band']
        U = potential_U(nodes, sys)
        outside = U < level.h*(1 - band)
        if np.any(outside):
            raise InputError(f'{int(outside.sum())} node(s) outside the Hill region U >= {level.h}')

        self.nodes = nodes
        self.sys = sys
        self.level = level
        self.segment_lengths = _segments(nodes, sys, level.h)
        self.tags = (_tag(nodes[0], sys, level.h), _tag(nodes[-1], sys, level.h))

    def __repr__(self):
        return f'jmpath({len(self.nodes)} nodes, length={self.length:.6g}, tags={self.tags})'

    def __len__(self):
        return len(self.nodes)

    @property
    def length(self):
        """float: total JM length"""
        return float(np.sum(self.segment_lengths))

    def scaled(self, lam):
        """Path with every node multiplied by lam (the scaling map)"""
        return jmpath(lam*self.nodes, self.sys, self.level)

    def to_dict(self):
        return {'h': self.level.h,
                'masses': self.sys.masses.tolist(),
                'G': self.sys.G,
                'alpha': self.sys.alpha,
                'nodes': self.nodes.tolist(),
                'tags': list(self.tags),
                'segment_lengths': self.segment_lengths.tolist(),
                'length': self.length}

    def to_json(self, path=None, header=None):
        """Path JSON document with provenance; written to path if given"""
        doc = {'provenance': dict(header or {}), 'path': self.to_dict()}
        doc['provenance'].setdefault('schema_version', const.SCHEMA_VERSION)
        text = json.dumps(doc, sort_keys=True, indent=1) + '\n'
        if path is not None:
            with open(path, 'w') as fid:
                fid.write(text)
        return text

    def to_dataframe(self):
        """One row per segment: index, length, U at the midpoint, cumulative time"""
        mid = 0.5*(self.nodes[1:] + self.nodes[:-1])
        return pd.DataFrame({'segment': np.arange(len(self.segment_lengths)),
                             'length': self.segment_lengths,
                             'U_mid': potential_U(mid, self.sys),
                             't': jm_time(self)[1:]})

def jm_length(path):
    """Total JM length of a path by the midpoint rule.

    Sum over segments of sqrt(2(U(midpoint) - h)) times the mass-metric
    segment length. Segments with both ends in the Hill-boundary band
    have zero length. Converges as O(M^-2) under refinement.

    Args:
        path (jmpath): path in the closed Hill region

    Returns:
        float: nonnegative length
    """
    return path.length

def jm_time(path):
    """Time along a path if it were traversed on shell, dt = ds / sqrt(2(U - h)).

    Returns:
        np.ndarray: cumulative times at the nodes, starting at 0 (inf after a
            segment whose midpoint lies on the Hill boundary)
    """
    sys = path.sys
    mid = 0.5*(path.nodes[1:] + path.nodes[:-1])
    ds = sys.mass_norm(path.nodes[1:] - path.nodes[:-1])
    speed = np.sqrt(2*np.clip(potential_U(mid, sys) - path.level.h, 0, None))
    with np.errstate(divide='ignore', invalid='ignore'):
        dt = np.where(ds == 0, 0.0, ds/speed)
    return np.concatenate(([0.0], np.cumsum(dt)))

def path_from_trajectory(traj, t0=None, t1=None, n=4001, level=None):
    """Configuration chain sampled uniformly in time from a trajectory.

    Returns:
        jmpath
    """
    t0 = traj.t0 if t0 is None else t0
    t1 = traj.t1 if t1 is None else t1
    level = traj.level if level is None else level
    q, _ = traj.qv(np.linspace(t0, t1, n))
    return jmpath(q, traj.sys, level)

# ---------------------------------------------------------------------------
# minimization
# ---------------------------------------------------------------------------

def _boundary_point(p, sys, h):
    # q = s(p) p on U = h, with the Euclidean gradient of s
    U = potential_U(p, sys)
    s = (U/h)**(1/sys.alpha)
    ds = (1/sys.alpha)*(U/h)**(1/sys.alpha - 1)/h*(sys.masses[:, None]*grad_U(p, sys))
    return (s*p, s, ds)

def _pull(X, sys, h):
    # nodes outside the Hill region are moved onto U = h by the scaling map;
    # returns the pulled nodes and the pieces needed for the chain rule
    U = potential_U(X, sys)
    out = U < h
    s = np.where(out, (U/h)**(1/sys.alpha), 1.0)
    ds = ((1/sys.alpha)*(U/h)**(1/sys.alpha - 1)/h)[:, None, None]*sys.masses[:, None]*grad_U(X, sys)
    return (s[:, None, None]*X, (out, s, ds))

def _pull_grad(G, X, pulled):
    out, s, ds = pulled
    GX = s[:, None, None]*G + np.sum(G*X, axis=(-2, -1))[:, None, None]*ds
    return np.where(out[:, None, None], GX, G)

def _objective(x, q0, q_end, sys, h, M, w_pen, r_pen, w_hill):
    # JM length + barrier penalties and its Euclidean gradient in the free variables
    n, d = sys.shape
    nd = n*d
    m = sys.masses[:, None]
    band = virialab.HILL_DEFAULTS['band']

    if q_end is None:
        X = x[:-nd].reshape(M - 1, n, d)
        p = x[-nd:].reshape(n, d)
        end, s, ds_dp = _boundary_point(p, sys, h)
    else:
        X = x.reshape(M - 1, n, d)
        end = q_end
    inner, pulled = _pull(X, sys, h)
    Q = np.concatenate((q0[None], inner, end[None]))

    r_all = sys.pair_distances(Q)
    if np.any(r_all == 0):
        return (1e300, np.zeros_like(x))

    D = Q[1:] - Q[:-1]
    mid = 0.5*(Q[1:] + Q[:-1])
    dist = sys.mass_norm(D)
    U = potential_U(mid, sys)
    on_boundary = np.abs(potential_U(Q, sys) - h) <= band*h
    free = on_boundary[1:] & on_boundary[:-1]
    c = np.where(free, 0.0, np.sqrt(2*np.clip(U - h, 0, None)))
    L = float(np.sum(c*dist))

    gmid = grad_U(mid, sys)
    with np.errstate(divide='ignore', invalid='ignore'):
        dd = np.where(dist[:, None, None] > 0, m*D/dist[:, None, None], 0.0)
        dc = np.where(c[:, None, None] > 0, m*gmid/c[:, None, None], 0.0)
    half = 0.5*dist[:, None, None]*dc
    G = np.zeros_like(Q)
    G[1:] += c[:, None, None]*dd + half
    G[:-1] += -c[:, None, None]*dd + half

    # chords stay inside the Hill region
    under = np.clip(h - U, 0, None)/h
    if np.any(under > 0):
        L += w_hill*float(np.sum(under**2))
        gh = (-w_hill*under/h)[:, None, None]*m*gmid
        G[1:] += gh
        G[:-1] += gh

    # collision barrier
    if w_pen > 0:
        r = r_all[1:]
        close = r < r_pen
        if np.any(close):
            rc = np.where(close, r, r_pen)
            L += w_pen*float(np.sum(np.where(close, (r_pen/rc - 1)**2, 0)))
            coef = np.where(close, 2*w_pen*(r_pen/rc - 1)*(-r_pen/rc**2)/rc, 0)
            diff = Q[1:, sys._i, :] - Q[1:, sys._j, :]
            f = coef[..., None]*diff
            Gp = np.zeros_like(Q[1:])
            np.add.at(Gp, (slice(None), sys._i), f)
            np.add.at(Gp, (slice(None), sys._j), -f)
            G[1:] += Gp

    g_inner = _pull_grad(G[1:M], X, pulled)
    if q_end is None:
        g_end = G[-1]
        g_p = s*g_end + np.sum(g_end*p)*ds_dp
        grad = np.concatenate((g_inner.ravel(), g_p.ravel()))
    else:
        grad = g_inner.ravel()
    return (L, grad)

def _node_params(M, refine, U0=None, h=None, alpha=1.0):
    # parameters in [0, 1] along the radial ray q0 -> s q0 (U(s q0) = h); with
    # refine the spacing halves where U - h is in its last decade
    v = np.linspace(0, 1, M + 1)
    if not refine:
        return v
    s = (U0/h)**(1/alpha)
    lam_d = (U0/(h + 0.1*(U0 - h)))**(1/alpha)
    u_d = (lam_d - 1)/(s - 1)
    w = v*(2 - u_d)
    return np.where(w < u_d, w, u_d + 0.5*(w - u_d))

def _minimize(x0, q0, q_end, sys, h, M, scale, opts):
    # barrier stage then a penalty-free polish
    w_hill = 1e3*max(1.0, np.sqrt(2*h))*scale
    r_pen = opts['r_pen']*scale
    args = (q0, q_end, sys, h, M, opts['penalty']*scale, r_pen, w_hill)
    res = minimize(_objective, x0, args=args, jac=True, method='L-BFGS-B',
                   options={'gtol': opts['gtol'], 'maxiter': opts['maxiter'], 'maxfun': 4*opts['maxiter']})
    args = (q0, q_end, sys, h, M, 0.0, r_pen, w_hill)
    res = minimize(_objective, res.x, args=args, jac=True, method='L-BFGS-B',
                   options={'gtol': opts['gtol'], 'maxiter': opts['maxiter'], 'maxfun': 4*opts['maxiter']})
    return res

def _nodes(x, q0, q_end, sys, h, M):
    n, d = sys.shape
    nd = n*d
    if q_end is None:
        inner = _pull(x[:-nd].reshape(M - 1, n, d), sys, h)[0]
        end = _boundary_point(x[-nd:].reshape(n, d), sys, h)[0]
    else:
        inner = _pull(x.reshape(M - 1, n, d), sys, h)[0]
        end = q_end
    return np.concatenate((q0[None], inner, end[None]))

def _first_boundary_node(nodes, sys, h):
    # the chain reaches the collapsed brake point at its first band node
    band = virialab.HILL_DEFAULTS['band']
    on_boundary = np.abs(potential_U(nodes, sys) - h) <= band*h
    return int(np.argmax(on_boundary[1:])) + 1

# ---------------------------------------------------------------------------
# geodesics to the brake point
# ---------------------------------------------------------------------------

class geodesicresult(object):
    """Discrete JM geodesic from q0 to the brake point and its brake orbit.

    Attributes:
        collision_free (bool): min mutual distance over the nodes above the barrier distance
        converged (bool): optimizer reported success, or stopped with a gradient
            below 1e-5 L / scale on the kept inner nodes
        length (float): JM length of the minimizer
        message (str): optimizer message
        min_r (float): smallest mutual distance over the nodes
        orbit (trajectory|None): re-integrated solution from rest at the brake endpoint
        path (jmpath): minimizing path
        polished (bool): the shooting polish moved the brake endpoint
        q0 (np.ndarray): target point
        q_brake (np.ndarray): brake endpoint, on U = h
        t_hit (float): time at which the orbit passes closest to q0
        upper_bound (float): length of the straight radial path
        verify_distance (float): closest mass-metric approach of the orbit to q0
    """

    def __init__(self, **kwargs):
        self.orbit = None
        self.polished = False
        for key, value in kwargs.items():
            setattr(self, key, value)

    def __repr__(self):
        return (f'geodesicresult(length={self.length:.6g}, verify={self.verify_distance:.3g}, '
                f'collision_free={self.collision_free})')

    def to_dict(self):
        return {'status': 'converged' if self.converged else 'not-converged',
                'length': float(self.length),
                'upper_bound': float(self.upper_bound),
                'converged': bool(self.converged),
                'collision_free': bool(self.collision_free),
                'min_r': float(self.min_r),
                'verify_distance': float(self.verify_distance),
                't_hit': float(self.t_hit),
                'polished': bool(self.polished),
                'message': str(self.message),
                'q0': np.asarray(self.q0).tolist(),
                'q_brake': np.asarray(self.q_brake).tolist(),
                'path': self.path.to_dict()}

    def to_json(self, path=None, header=None):
        doc = {'provenance': dict(header or {}), 'geodesic': self.to_dict()}
        doc['provenance'].setdefault('schema_version', const.SCHEMA_VERSION)
        text = json.dumps(doc, sort_keys=True, indent=1) + '\n'
        if path is not None:
            with open(path, 'w') as fid:
                fid.write(text)
        return text

def _closest_approach(q_brake, q0, sys, level, t_max, **kwargs):
    # release from rest at q_brake; closest mass-metric approach to q0 on [0, t_max]
    s = state(0.0, q_brake, np.zeros(sys.shape))
    traj = propagate(s, sys, t_max, events=(), level=level, **kwargs)
    t = np.linspace(traj.t0, traj.t1, 2001)
    q, _ = traj.qv(t)
    dist = sys.mass_norm(q - q0)
    k = int(np.argmin(dist))
    lo, hi = t[max(k - 1, 0)], t[min(k + 1, len(t) - 1)]
    res = minimize_scalar(lambda tt: float(sys.mass_norm(traj.qv(tt)[0][0] - q0)),
                          bounds=(lo, hi), method='bounded', options={'xatol': 1e-13})
    if res.fun < dist[k]:
        return (float(res.fun), float(res.x), traj)
    return (float(dist[k]), float(t[k]), traj)

def geodesic_to_brake(q0, level, sys, n_nodes=None, restarts=None, seed=None, polish=True, **kwargs):
    """Locally minimize JM length from q0 to the Hill boundary, then rebuild the brake orbit.

    The free endpoint is parametrized as s(p) p with U(s p) = h, so it slides
    on the boundary (the collapsed brake point). Inner nodes that leave the
    Hill region are pulled back onto U = h by the same scaling map, and
    segment midpoints below h are penalized. Node positions are optimized
    by L-BFGS-B with the analytic gradient, first with a collision barrier
    below `JM_DEFAULTS['r_pen']`, then without it. The path is cut at its
    first node in the boundary band, since travel along the boundary is
    free. Restarts perturb the straight radial initialization, whose node
    spacing halves in the last decade of U - h when
    `JM_DEFAULTS['refine_decade']` is set. The brake
    orbit released from the endpoint must pass within
    `JM_DEFAULTS['verify_tol']` of q0; otherwise a Nelder-Mead shooting
    polish on the endpoint closes the gap.

    Args:
        q0 (array-like): interior configuration, U(q0) > h
        level (energylevel): energy level
        sys (masssystem): system
        n_nodes (int|None): segments of the path
        restarts (int|None): perturbed restarts in addition to the radial start
        seed (int|None): random seed for the perturbations
        polish (bool): allow the shooting polish
        **kwargs: passed to `propagate`

    Returns:
        geodesicresult

    Example:
        >>> sys = masssystem([1, 1])
        >>> res = geodesic_to_brake([[-0.5, 0], [0.5, 0]], energylevel(0.5), sys)
        >>> res.verify_distance < 1e-4
        True
    """
    opts = virialab.JM_DEFAULTS
    M = opts['nodes'] if n_nodes is None else int(n_nodes)
    restarts = opts['restarts'] if restarts is None else int(restarts)
    h = level.h
    band = virialab.HILL_DEFAULTS['band']

    q0 = sys.com_normalize(sys.check(q0))
    U0 = potential_U(q0, sys)
    if np.isinf(U0):
        raise SingularityError('Geodesic start at a collision')
    if U0 < h*(1 - band):
        raise InputError(f'q0 lies outside the Hill region: U = {U0} < h = {h}')

    # already at the brake point
    if abs(U0 - h) <= band*h:
        orbit = brake_start(q0, sys, **kwargs)
        path = jmpath(np.stack((q0, q0)), sys, level)
        return geodesicresult(path=path, length=0.0, upper_bound=0.0, converged=True,
                              collision_free=True, min_r=float(np.min(sys.pair_distances(q0))),
                              orbit=orbit.traj, verify_distance=0.0, t_hit=0.0,
                              q0=q0, q_brake=q0, message='start on the Hill boundary')

    scale = np.sqrt(moment_I(q0, sys)/sys.total_mass)
    u = _node_params(M, opts['refine_decade'], U0, h, sys.alpha)
    rng = np.random.default_rng(seed)

    # straight radial start
    end0 = _boundary_point(q0, sys, h)[0]
    straight = q0[None] + u[:, None, None]*(end0 - q0)[None]
    upper = float(np.sum(_segments(straight, sys, h)))

    best = None
    for attempt in range(restarts + 1):
        if attempt == 0:
            p = q0.copy()
            inner = straight[1:M]
        else:
            p = q0 + 0.1*scale*sys.com_normalize(rng.normal(size=sys.shape))
            end = _boundary_point(p, sys, h)[0]
            bump = np.sin(np.pi*u[1:M])[:, None, None]
            noise = sys.com_normalize(rng.normal(size=(M - 1,) + sys.shape))
            inner = q0[None] + u[1:M, None, None]*(end - q0)[None] + 0.05*scale*bump*noise

        x0 = np.concatenate((inner.ravel(), p.ravel()))
        res = _minimize(x0, q0, None, sys, h, M, scale, opts)
        nodes = _nodes(res.x, q0, None, sys, h, M)
        k = _first_boundary_node(nodes, sys, h)
        nodes = nodes[:k + 1]
        if np.any(potential_U(nodes, sys) < h*(1 - band)):
            continue
        L = float(np.sum(_segments(nodes, sys, h)))
        if best is None or L < best[0]:
            best = (L, res, nodes)

    if best is None:
        raise OptimizationError('Every restart left the Hill region')

    L, res, nodes = best
    # a line-search stall counts when the kept inner nodes are stationary
    g = res.jac[:(M - 1)*sys.n_bodies*sys.dim].reshape((M - 1,) + sys.shape)[:len(nodes) - 2]
    converged = bool(res.success) or not len(g) or float(np.max(np.abs(g)))*scale <= 1e-5*max(L, 1e-12)
    if not converged:
        warnings.warn(f'Geodesic optimizer: {res.message}', ConvergenceWarning)

    path = jmpath(nodes, sys, level)
    min_r = float(np.min(sys.pair_distances(nodes)))
    collision_free = min_r > opts['r_pen']*scale
    if not collision_free:
        warnings.warn(f'Minimizing path reaches the collision band (min r = {min_r:.3g})', CollisionWarning)

    # brake orbit from the endpoint
    times = jm_time(path)
    t_path = times[-1] if np.isfinite(times[-1]) else 0.5*np.pi*np.sqrt(moment_I(q0, sys)/(2*U0))
    q_brake = nodes[-1]
    t_max = 1.5*t_path + 1e-3*scale
    dist, t_hit, orbit = _closest_approach(q_brake, q0, sys, level, t_max, **kwargs)

    out = geodesicresult(path=path, length=path.length, upper_bound=upper,
                         converged=converged, collision_free=collision_free, min_r=min_r,
                         orbit=orbit, verify_distance=dist, t_hit=t_hit,
                         q0=q0, q_brake=q_brake, message=str(res.message))

    if polish and dist > opts['verify_tol']:
        out = _shoot_polish(out, sys, level, t_max, **kwargs)

    if out.verify_distance > opts['verify_tol']:
        warnings.warn(f'Brake orbit misses q0 by {out.verify_distance:.3g}', ConvergenceWarning)
    return out

def _shoot_polish(result, sys, level, t_max, **kwargs):
    # Nelder-Mead on the brake endpoint direction to pass through q0
    h = level.h
    q0 = result.q0

    def miss(x):
        p = sys.com_normalize(x.reshape(sys.shape))
        q_b = _boundary_point(p, sys, h)[0]
        try:
            return _closest_approach(q_b, q0, sys, level, t_max, **kwargs)[0]
        except (IntegrationError, SingularityError):
            return np.inf

    res = minimize(miss, result.q_brake.ravel(), method='Nelder-Mead',
                   options={'maxiter': 400, 'xatol': 1e-12, 'fatol': 1e-12})
    if res.fun < result.verify_distance:
        p = sys.com_normalize(res.x.reshape(sys.shape))
        q_b = _boundary_point(p, sys, h)[0]
        dist, t_hit, orbit = _closest_approach(q_b, q0, sys, level, t_max, **kwargs)
        result.q_brake = q_b
        result.verify_distance = dist
        result.t_hit = t_hit
        result.orbit = orbit
        result.polished = True
    return result

# ---------------------------------------------------------------------------
# distances and diameter
# ---------------------------------------------------------------------------

def _straight_fixed(qa, qb, sys, h, M, opts):
    scale = np.sqrt(max(moment_I(qa, sys), moment_I(qb, sys))/sys.total_mass)
    u = np.linspace(0, 1, M + 1)
    x0 = (qa[None] + u[1:M, None, None]*(qb - qa)[None]).ravel()
    res = _minimize(x0, qa, qb, sys, h, M, scale, opts)
    return _nodes(res.x, qa, qb, sys, h, M)

def jm_distance(qa, qb, level, sys, n_nodes=None, seed=None):
    """Locally minimal JM distance between two points of the Hill region.

    The smaller of the directly minimized connecting path and the route
    through the brake point (the boundary collapses to one point, so that
    route costs the two distances to the boundary).

    Returns:
        tuple: (distance, route) where route is `direct` or `brake-point`
    """
    opts = virialab.JM_DEFAULTS
    M = opts['nodes'] if n_nodes is None else int(n_nodes)
    qa = sys.com_normalize(sys.check(qa))
    qb = sys.com_normalize(sys.check(qb))

    with warnings.catch_warnings():
        warnings.simplefilter('ignore', ConvergenceWarning)
        via = (geodesic_to_brake(qa, level, sys, n_nodes=M, restarts=0, seed=seed, polish=False).length +
               geodesic_to_brake(qb, level, sys, n_nodes=M, restarts=0, seed=seed, polish=False).length)

    try:
        direct = float(np.sum(_segments(_straight_fixed(qa, qb, sys, level.h, M, opts), sys, level.h)))
    except (InputError, SingularityError):
        direct = np.inf

    if direct <= via:
        return (direct, 'direct')
    return (via, 'brake-point')

def shell_points(sys, level, n, U_factors=(1.5, 2.0, 4.0, 10.0), seed=None):
    """Random interior configurations on shells U = f h, f drawn from U_factors"""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        q = sys.com_normalize(rng.normal(size=sys.shape))
        r = sys.pair_distances(q)
        f = U_factors[rng.integers(len(U_factors))]
        if np.min(r) < 0.1*np.mean(r):
            continue
        out.append(scale_to_level(q, sys, f*level.h))
    return out

def _distance_worker(args):
    qa, qb, level, sys, n_nodes = args
    try:
        return jm_distance(qa, qb, level, sys, n_nodes=n_nodes)[0]
    except (OptimizationError, SingularityError, InputError):
        return np.nan

class diameterrecord(object):
    """Empirical diameter of the completed Hill region (sampled evidence, not a bound).

    Attributes:
        diameter (float): largest sampled pairwise distance
        distances (np.ndarray): all successful pairwise distances
        label (str): `empirical, non-certifying`
        n_failed (int): minimizations excluded
        n_pairs (int): pairs attempted
    """

    def __init__(self, distances, n_pairs):
        distances = np.asarray(distances, dtype=float)
        ok = np.isfinite(distances)
        self.distances = distances[ok]
        self.n_pairs = int(n_pairs)
        self.n_failed = int((~ok).sum())
        self.diameter = float(self.distances.max()) if ok.any() else np.nan
        self.label = 'empirical, non-certifying'

    def __repr__(self):
        return f'diameterrecord(diameter={self.diameter:.6g}, n={len(self.distances)}, failed={self.n_failed})'

    def to_dict(self):
        return {'diameter': self.diameter, 'n_pairs': self.n_pairs, 'n_failed': self.n_failed,
                'label': self.label,
                'quantiles': np.quantile(self.distances, [0, 0.25, 0.5, 0.75, 1]).tolist()
                             if len(self.distances) else []}

def diameter_sample(level, sys, n_pairs, U_factors=(1.5, 2.0, 4.0, 10.0), seed=None,
                    n_nodes=None, jobs=1):
    """Max of locally minimized pairwise JM distances over random interior pairs.

    Args:
        level (energylevel): energy level
        sys (masssystem): system
        n_pairs (int): sample budget
        U_factors (tuple): shells U = f h the points are drawn on
        seed (int|None): random seed
        n_nodes (int|None): path segments
        jobs (int): worker processes

    Returns:
        diameterrecord
    """
    pts = shell_points(sys, level, 2*n_pairs, U_factors, seed)
    args = [(pts[2*i], pts[2*i + 1], level, sys, n_nodes) for i in range(n_pairs)]
    dist = parallel_map(_distance_worker, args, jobs=jobs, desc='diameter')
    return diameterrecord(list(dist), n_pairs)

# ---------------------------------------------------------------------------
# scaling and mountain passes
# ---------------------------------------------------------------------------

def scaling_length_ratio(loop, lam, h=None):
    """Length of the scaled loop lam * loop over the length of loop.

    Args:
        loop (jmpath): loop strictly inside the Hill region
        lam (float): scale in (0, 1]
        h (float|None): level used for both lengths, default the loop's; h = 0
            gives the pure power law

    Raises:
        SingularityError: scaled loop hits the collision band
    """
    if not 0 < lam <= 1:
        raise InputError(f'Scale must lie in (0, 1], got {lam}')
    h = loop.level.h if h is None else float(h)
    r_min = virialab.HILL_DEFAULTS['r_min']
    if np.min(loop.sys.pair_distances(lam*loop.nodes)) < r_min:
        raise SingularityError(f'Scaled loop at lam={lam} reaches the collision band')
    return float(np.sum(_segments(lam*loop.nodes, loop.sys, h))/np.sum(_segments(loop.nodes, loop.sys, h)))

def scaling_family(loop, level):
    """Family lam -> lam * loop_b where loop_b is loop pushed onto the Hill boundary.

    Every node of loop is scaled onto U = h; at lam = 1 the family lies on
    the boundary and as lam -> 0 it collapses to total collision, so both
    ends have zero length.

    Args:
        loop (jmpath): loop of non-collision configurations
        level (energylevel): energy level

    Returns:
        callable: lam -> node array, with the system attached as `.sys`
    """
    sys = loop.sys
    boundary = np.stack([scale_to_level(q, sys, level.h) for q in loop.nodes])

    def family(lam):
        return lam*boundary
    family.sys = sys
    return family

class profilerecord(object):
    """Mountain-pass profile of a one-parameter family of loops.

    Attributes:
        crosses_virial (bool): the argmax loop meets U = 2h
        lam_star (float): maximizing parameter
        lams (np.ndarray): scanned parameters
        lengths (np.ndarray): scanned lengths
        max_length (float): length at lam_star
    """

    def __init__(self, lams, lengths, crossing, lam_star, max_length, crosses_virial):
        self.lams = lams
        self.lengths = lengths
        self.crossing = crossing
        self.lam_star = float(lam_star)
        self.max_length = float(max_length)
        self.crosses_virial = bool(crosses_virial)

    def __repr__(self):
        return (f'profilerecord(lam*={self.lam_star:.6g}, max={self.max_length:.6g}, '
                f'crosses_virial={self.crosses_virial})')

    def to_dataframe(self):
        return pd.DataFrame({'lam': self.lams, 'length': self.lengths, 'crosses_virial': self.crossing})

    def to_csv(self, path, header=None):
        header = dict(header or {})
        header.setdefault('schema_version', const.SCHEMA_VERSION)
        with open(path, 'w') as fid:
            for key in sorted(header):
                fid.write(f'# {key}: {json.dumps(header[key], sort_keys=True)}\n')
            self.to_dataframe().to_csv(fid, index=False, lineterminator='\n')

def _loop_crosses(nodes, sys, h, band=1e-6):
    # U along the loop, nodes and midpoints, brackets 2h; the argmax of a
    # smooth profile is located to about sqrt(machine eps), hence the band
    mid = 0.5*(nodes[1:] + nodes[:-1])
    U = np.concatenate((potential_U(nodes, sys), potential_U(mid, sys)))
    return bool(U.min() <= 2*h*(1 + band) and U.max() >= 2*h*(1 - band))

def mountain_pass_profile(family, level, sys=None, lams=None, valley=1e-3):
    """Scan a family of loops for its maximal JM length.

    Args:
        family (callable): lam -> loop nodes, lam in [lams[0], lams[-1]]
        level (energylevel): energy level
        sys (masssystem|None): system, default `family.sys`
        lams (array-like|None): scan grid, default 201 points on [1e-8, 1]
        valley (float): both end lengths must be below valley * max

    Returns:
        profilerecord

    Raises:
        InputError: an end of the family is not a zero-length valley
    """
    sys = family.sys if sys is None else sys
    lams = np.linspace(1e-8, 1, 201) if lams is None else np.asarray(lams, dtype=float)
    h = level.h

    def length(lam):
        return float(np.sum(_segments(family(lam), sys, h)))

    L = np.array([length(lam) for lam in lams])
    crossing = np.array([_loop_crosses(family(lam), sys, h) for lam in lams])

    k = int(np.argmax(L))
    if L[k] <= 0:
        raise InputError('Family has zero length everywhere')
    if L[0] > valley*L[k] or L[-1] > valley*L[k]:
        raise InputError(f'Family ends are not zero-length valleys: '
                         f'L(start)/max = {L[0]/L[k]:.3g}, L(end)/max = {L[-1]/L[k]:.3g}')

    lo, hi = lams[max(k - 1, 0)], lams[min(k + 1, len(lams) - 1)]
    res = minimize_scalar(lambda lam: -length(lam), bounds=(lo, hi), method='bounded',
                          options={'xatol': 1e-12})
    lam_star, L_star = (res.x, -res.fun) if -res.fun > L[k] else (lams[k], L[k])
    return profilerecord(lams, L, crossing, lam_star, L_star, _loop_crosses(family(lam_star), sys, h))

def variation_check(path, deltas=(1e-2, 1e-3), trials=16, seed=None):
    """First-variation test of a minimizer: random interior displacements of size delta.

    Args:
        path (jmpath): converged minimizer
        deltas (tuple): displacement sizes (mass-metric norm over the moved nodes)
        trials (int): random directions per size
        seed (int|None): random seed

    Returns:
        pd.DataFrame: per delta, the smallest and mean length change and the
            mean change over delta^2; a minimizer shows no negative first-order change
    """
    rng = np.random.default_rng(seed)
    sys = path.sys
    h = path.level.h
    L0 = path.length
    rows = []
    dirs = []
    for _ in range(trials):
        w = np.zeros_like(path.nodes)
        w[1:-1] = rng.normal(size=w[1:-1].shape)
        w /= np.sqrt(np.sum(sys.mass_inner(w, w)))
        dirs.append(w)

    for delta in deltas:
        dL = np.array([np.sum(_segments(path.nodes + delta*w, sys, h)) - L0 for w in dirs])
        rows.append({'delta': float(delta), 'min_dL': float(dL.min()), 'mean_dL': float(dL.mean()),
                     'mean_dL_over_delta2': float(dL.mean()/delta**2)})
    return pd.DataFrame(rows)

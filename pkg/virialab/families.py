# Exact solution families: central configurations, homographic Kepler orbits, isosceles subsystem, escape checks
# Oct 2026

from .exceptions import *
from .nbodycore import (masssystem, state, energylevel, potential_U, grad_U, kinetic_K, moment_I,
                        moment_I_dot, lagrange_jacobi_rhs, angular_momentum_J, scale_to_level)
from .integrate import propagate
from .ensemble import parallel_map
from .virial import pollard_classify
import virialab
import warnings

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp
from scipy.optimize import bisect

# ---------------------------------------------------------------------------
# central configurations
# ---------------------------------------------------------------------------

def _spin(q):
    # rotation generator about the z axis applied to each body
    out = np.zeros_like(q)
    out[..., 0] = -q[..., 1]
    out[..., 1] = q[..., 0]
    return out

class centralconfiguration(object):
    """Configuration with grad_U(q) + lam q = 0 in the mass metric.

    Args:
        q (array-like): configuration, CoM-normalized on construction
        sys (masssystem): system

    Attributes:
        lam (float): multiplier, alpha U / I by Euler homogeneity
        planar (bool): all bodies in the xy plane
        q (np.ndarray): configuration
        residual (float): mass-metric norm of grad_U + lam q
        sys (masssystem): system
        U_hat (float): U of the configuration rescaled to I = 1

    Example:
        >>> cc = lagrange_cc([1, 1, 1])
        >>> cc.residual < 1e-12
        True
    """

    def __init__(self, q, sys):
        q = sys.com_normalize(sys.check(q))
        U = potential_U(q, sys)
        if np.isinf(U):
            raise FamilyError('Central configuration candidate is a collision')
        I = moment_I(q, sys)

        self.q = q
        self.sys = sys
        self.lam = sys.alpha*U/I
        self.residual = float(sys.mass_norm(grad_U(q, sys) + self.lam*q))
        self.planar = sys.dim == 2 or bool(np.all(q[:, 2] == 0))
        self.U_hat = U*I**(sys.alpha/2)

    def __repr__(self):
        return f'centralconfiguration(n={self.sys.n_bodies}, lam={self.lam:.6g}, residual={self.residual:.3g})'

    def normalized(self):
        """Configuration rescaled to I = 1"""
        return self.q/np.sqrt(moment_I(self.q, self.sys))

    def check(self, tol=1e-10):
        """Raise FamilyError if the relative residual exceeds tol"""
        scale = self.lam*np.sqrt(moment_I(self.q, self.sys))
        if self.residual > tol*scale:
            raise FamilyError(f'Not a central configuration: residual {self.residual:.3g}')
        return self

def lagrange_cc(masses, G=1.0, dim=2):
    """Equilateral central configuration of unit side for any three masses"""
    sys = masssystem(masses, G=G, dim=dim)
    if sys.n_bodies != 3:
        raise InputError(f'Lagrange configuration needs three bodies, got {sys.n_bodies}')
    q = np.zeros(sys.shape)
    q[1, 0] = 1.0
    q[2, :2] = (0.5, np.sqrt(3)/2)
    return centralconfiguration(q, sys)

def euler_quintic(masses):
    """Coefficients of the collinear quintic in rho = r_23/r_12, bodies in the given left-to-right order"""
    m1, m2, m3 = masses
    return np.array([m1 + m2, 3*m1 + 2*m2, 3*m1 + m2, -(m2 + 3*m3), -(2*m2 + 3*m3), -(m2 + m3)])

def euler_cc(masses, ordering=(0, 1, 2), G=1.0, dim=2):
    """Collinear central configuration for three masses placed left to right in `ordering`.

    The separation ratio is the unique positive root of the collinear quintic,
    isolated by bisection.

    Args:
        masses (array-like): three positive masses
        ordering (tuple): permutation of (0, 1, 2), body indices from left to right
        G (float): gravitational constant
        dim (int): 2 or 3

    Returns:
        centralconfiguration
    """
    sys = masssystem(masses, G=G, dim=dim)
    if sys.n_bodies != 3:
        raise InputError(f'Euler configuration needs three bodies, got {sys.n_bodies}')
    if sys.alpha != 1:
        raise FamilyError('The collinear quintic holds for the Newtonian potential only')
    if sorted(ordering) != [0, 1, 2]:
        raise InputError(f'Ordering must be a permutation of (0, 1, 2), got {ordering}')

    coef = euler_quintic(sys.masses[list(ordering)])
    p = np.poly1d(coef)
    hi = 1.0
    while p(hi) <= 0:
        hi *= 2
        if hi > 1e12:
            raise FamilyError('No root of the collinear quintic in bracket')
    rho = bisect(p, 0.0, hi, xtol=1e-15, rtol=4*np.finfo(float).eps, maxiter=400)

    q = np.zeros(sys.shape)
    for x, a in zip((0.0, 1.0, 1.0 + rho), ordering):
        q[a, 0] = x
    return centralconfiguration(q, sys)

def polygon_cc(n_bodies, mass=1.0, G=1.0, dim=2):
    """Regular n-gon of equal masses on the unit circle"""
    sys = masssystem(np.full(n_bodies, float(mass)), G=G, dim=dim)
    phi = 2*np.pi*np.arange(n_bodies)/n_bodies
    q = np.zeros(sys.shape)
    q[:, 0] = np.cos(phi)
    q[:, 1] = np.sin(phi)
    return centralconfiguration(q, sys)

def relative_equilibrium(cc, level):
    """Rigidly rotating solution through a planar central configuration at energy -h.

    The configuration is scaled to U = 2h and spun at omega = sqrt(lam) about
    the z axis, which gives K = h.

    Returns:
        state: at t = 0
    """
    if not cc.planar:
        raise FamilyError('Relative equilibria need a planar central configuration')
    if cc.sys.alpha != 1:
        raise FamilyError('Negative-energy relative equilibria need alpha = 1')
    q = scale_to_level(cc.q, cc.sys, level.U_virial)
    lam = cc.sys.alpha*level.U_virial/moment_I(q, cc.sys)
    return state(0.0, q, np.sqrt(lam)*_spin(q))

def lagrange_equilateral(masses, level, G=1.0, dim=2):
    """Lagrange relative equilibrium of three bodies at energy -h.

    Example:
        >>> s = lagrange_equilateral([1, 1, 1], energylevel(0.5))
        >>> np.isclose(potential_U(s.q, masssystem([1, 1, 1])), 1.0)
        True
    """
    return relative_equilibrium(lagrange_cc(masses, G=G, dim=dim), level)

def euler_collinear(masses, ordering=(0, 1, 2), level=None, G=1.0, dim=2):
    """Euler collinear relative equilibrium of three bodies at energy -h"""
    if level is None:
        raise InputError('Energy level required')
    return relative_equilibrium(euler_cc(masses, ordering, G=G, dim=dim), level)

# ---------------------------------------------------------------------------
# homographic Kepler family
# ---------------------------------------------------------------------------

def j_max(cc, level):
    """Largest |J| of an elliptic homographic orbit, reached by the relative equilibrium"""
    return cc.U_hat/np.sqrt(2*level.h)

def homographic_k(cc, J, level):
    """Thickness k(J) of the homographic member, the eccentricity of its scale-factor Kepler problem"""
    ratio = (J/j_max(cc, level))**2
    if ratio > 1 + 1e-12:
        raise FamilyError(f'|J| = {abs(J):.6g} exceeds J_max = {j_max(cc, level):.6g}')
    return float(np.sqrt(max(0.0, 1 - ratio)))

def kepler_period(cc, level):
    """Period of every homographic member at energy -h, 2 pi U_hat / (2h)^(3/2)"""
    return float(2*np.pi*cc.U_hat/(2*level.h)**1.5)

class homographicorbit(object):
    """Member of the homographic Kepler family through a planar central configuration.

    The configuration evolves as r(t) R(theta(t)) q_hat with I(q_hat) = 1 and
    (r, theta) a Kepler orbit of strength U_hat, reduced mass one.

    Attributes:
        a (float): semi-major axis of the scale factor, U_hat / 2h
        cc (centralconfiguration): shape
        e (float): eccentricity, equal to the thickness k
        h (float): energy level
        J (float): angular momentum
        J_max (float): angular momentum of the relative equilibrium
        k (float): thickness
        period (float): Kepler period
        state (state): initial state at the largest scale (apocenter)
        U_range (tuple): (2h/(1+k), 2h/(1-k)), inf for k = 1
    """

    def __init__(self, cc, J, level):
        if not cc.planar:
            raise FamilyError('Homographic orbits need a planar central configuration')
        if cc.sys.alpha != 1:
            raise FamilyError('The homographic Kepler reduction needs alpha = 1')

        self.cc = cc
        self.h = level.h
        self.J = float(J)
        self.J_max = float(j_max(cc, level))
        self.k = self.e = homographic_k(cc, J, level)
        self.a = cc.U_hat/(2*level.h)
        self.period = kepler_period(cc, level)
        h2 = 2*level.h
        self.U_range = (h2/(1 + self.k), h2/(1 - self.k) if self.k < 1 else np.inf)

        r0 = self.a*(1 + self.e)
        q = r0*cc.normalized()
        self.state = state(0.0, q, (self.J/r0**2)*_spin(q))

    def __repr__(self):
        return f'homographicorbit(J={self.J:.6g}, k={self.k:.6g}, period={self.period:.6g})'

    def to_dict(self):
        return {'h': self.h, 'J': self.J, 'J_max': self.J_max, 'k': self.k, 'e': self.e,
                'a': self.a, 'period': self.period,
                'U_range': [float(u) for u in self.U_range],
                'masses': self.cc.sys.masses.tolist(),
                'q0': self.state.q.tolist(), 'v0': self.state.v.tolist()}

def homographic_orbit(cc, J, level, periods=1.0, **kwargs):
    """Homographic member with angular momentum J, integrated over a number of periods.

    Args:
        cc (centralconfiguration): planar central configuration
        J (float): angular momentum, |J| <= J_max
        level (energylevel): energy level
        periods (float|None): integration length in periods; None skips integration
        **kwargs: passed to `propagate`

    Returns:
        tuple: (homographicorbit, trajectory or None)

    Raises:
        FamilyError: |J| > J_max or non-planar configuration

    Example:
        >>> cc = lagrange_cc([1, 1, 1])
        >>> orbit, traj = homographic_orbit(cc, 0.5*j_max(cc, energylevel(1)), energylevel(1))
        >>> orbit.k
        0.8660254037844386
    """
    orbit = homographicorbit(cc, J, level)
    if periods is None:
        return (orbit, None)
    traj = propagate(orbit.state, cc.sys, periods*orbit.period, level=level, **kwargs)
    return (orbit, traj)

def kepler_orbit(masses, level, e, periods=1.0, G=1.0, dim=2, **kwargs):
    """Two-body Kepler orbit of eccentricity e at energy -h, started at apocenter.

    Two bodies always form a central configuration, so this is the homographic
    member with J = J_max sqrt(1 - e^2).

    Returns:
        tuple: (homographicorbit, trajectory or None)
    """
    if not 0 <= e <= 1:
        raise InputError(f'Eccentricity must lie in [0, 1], got {e}')
    sys = masssystem(masses, G=G, dim=dim)
    if sys.n_bodies != 2:
        raise InputError(f'Kepler orbit needs two bodies, got {sys.n_bodies}')
    q = np.zeros(sys.shape)
    q[1, 0] = 1.0
    cc = centralconfiguration(q, sys)
    return homographic_orbit(cc, j_max(cc, level)*np.sqrt(1 - e**2), level, periods=periods, **kwargs)

# ---------------------------------------------------------------------------
# Birkhoff-Moeckel escape condition
# ---------------------------------------------------------------------------

NORMALIZATIONS = {'standard': 1.0,     # E = -h
                  'moeckel': 0.5,     # E = -2h
                 }

def birkhoff_moeckel_check(s, sys, normalization='standard', tol=1e-8):
    """Hypothesis I0 < J^2/2h and sign of I'' at a turn-around state.

    Args:
        s (state): state with I' = 0
        sys (masssystem): system
        normalization (str): `standard` reads h = -E, `moeckel` reads h = -E/2
        tol (float): relative tolerance on I' = 2<q, v>

    Returns:
        tuple: (condition, I_ddot) where condition is the hypothesis I0 < J^2/2h

    Raises:
        InputError: not a turn-around point, or E >= 0
    """
    if normalization not in NORMALIZATIONS:
        raise InputError(f'Unknown normalization {normalization!r}, expected one of {list(NORMALIZATIONS)}')
    q, v = sys.com_normalize(s.q, s.v)
    I = moment_I(q, sys)
    K = kinetic_K(v, sys)
    if abs(moment_I_dot((q, v), sys)) > tol*2*np.sqrt(2*I*K):
        raise InputError('Not a turn-around point: dI/dt is not zero')

    E = K - potential_U(q, sys)
    if not E < 0:
        raise InputError(f'Birkhoff-Moeckel check needs negative energy, got E = {E}')
    h = -E*NORMALIZATIONS[normalization]

    J = angular_momentum_J((q, v), sys)
    J2 = float(np.sum(np.square(J)))
    return (bool(I < J2/(2*h)), float(lagrange_jacobi_rhs((q, v), sys)))

def birkhoff_moeckel_table(states, sys, tol=1e-8):
    """Check a list of turn-around states under both normalizations.

    A state whose hypothesis holds but whose I'' is not positive is a
    discrepancy, flagged per state and warned with DiscrepancyWarning.

    Returns:
        pd.DataFrame: one row per state
    """
    rows = []
    for i, s in enumerate(states):
        row = {'member': i, 'I0': moment_I(s.q, sys),
               'J2': float(np.sum(np.square(angular_momentum_J(s, sys))))}
        for name in NORMALIZATIONS:
            cond, Idd = birkhoff_moeckel_check(s, sys, name, tol)
            row[f'condition_{name}'] = cond
            row[f'discrepancy_{name}'] = cond and not Idd > 0
            row['I_ddot'] = Idd
        rows.append(row)
    df = pd.DataFrame(rows).set_index('member')

    for name in NORMALIZATIONS:
        n = int(df[f'discrepancy_{name}'].sum())
        if n:
            warnings.warn(f'{n} state(s) satisfy I0 < J^2/2h under the {name} normalization '
                          'without I\'\' > 0', DiscrepancyWarning)
    return df

def random_turnaround_states(sys, n, level=None, seed=None, spin=1.0, U_factors=(1.0, 4.0)):
    """Random CoM-normalized states with dI/dt = 0 at energy -h.

    Configurations are Gaussian, scaled to U = f h with f uniform in
    U_factors; velocities are a rigid spin plus noise, projected off q and
    scaled to K = U - h.

    Args:
        sys (masssystem): system
        n (int): number of states
        level (energylevel|None): energy level, default h = 1
        seed (int|None): random seed
        spin (float): weight of the rigid rotation against the noise
        U_factors (tuple): range of U/h

    Returns:
        list: of state
    """
    level = energylevel(1.0) if level is None else level
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        q = sys.com_normalize(rng.normal(size=sys.shape))
        r = sys.pair_distances(q)
        if np.min(r) < 0.05*np.mean(r):
            continue
        f = rng.uniform(*U_factors)
        q = scale_to_level(q, sys, f*level.h)

        v = spin*_spin(q) + sys.com_normalize(rng.normal(size=sys.shape))
        v = sys.com_normalize(v)
        v -= sys.mass_inner(q, v)/moment_I(q, sys)*q
        K = kinetic_K(v, sys)
        target = potential_U(q, sys) - level.h
        if K == 0 or target <= 0:
            continue
        out.append(state(0.0, q, v*np.sqrt(target/K)))
    return out

def _escape_worker(args):
    i, s, sys, T, kwargs = args
    row = {'member': i, 'I0': moment_I(s.q, sys), 'I_ddot': lagrange_jacobi_rhs(s, sys)}
    monotone = True
    quadratic = True
    for side, s0 in (('fwd', s), ('bwd', s.reversed())):
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', ConvergenceWarning)
            warnings.simplefilter('ignore', EnergyDriftWarning)
            try:
                traj = propagate(s0, sys, s0.t + T, events=(), **kwargs)
            except (IntegrationError, SingularityError) as err:
                row[f'status_{side}'] = f'failed: {err}'
                monotone = quadratic = False
                continue
            g = pollard_classify(traj, t_origin=s0.t)
        row[f'status_{side}'] = traj.status
        row[f'growth_{side}'] = g.classification
        row[f'exponent_{side}'] = g.exponent
        row[f'C_{side}'] = g.C
        monotone &= bool(np.all(traj.Idot[1:] > 0)) and traj.status == 'completed'
        quadratic &= g.classification == 'quadratic'
    row['monotone_both'] = monotone
    row['escape_both'] = monotone and quadratic
    return row

def escape_scan(states, sys, T, jobs=1, **kwargs):
    """Integrate each state T forward and T backward and classify the growth of I.

    Args:
        states (list): initial states, typically turn-around points
        sys (masssystem): system
        T (float): horizon in each time direction
        jobs (int): worker processes
        **kwargs: passed to `propagate`

    Returns:
        pd.DataFrame: one row per state with growth class, exponent and C of
            I ~ C t^2 on each side; `attrs['monotone_fraction']` holds the
            fraction with I increasing away from t = 0 in both directions
    """
    args = [(i, s, sys, T, kwargs) for i, s in enumerate(states)]
    rows = parallel_map(_escape_worker, args, jobs=jobs, desc='escape scan')
    df = pd.DataFrame(list(rows)).set_index('member')
    df.attrs['monotone_fraction'] = float(df['monotone_both'].mean()) if len(df) else np.nan
    return df

# ---------------------------------------------------------------------------
# spatial isosceles subsystem
# ---------------------------------------------------------------------------

class isoscelesstate(object):
    """Reduced state of the spatial isosceles three-body problem.

    Bodies 0 and 1 (mass m) sit at (rho cos theta, rho sin theta, z0) and its
    mirror image through the z axis; body 2 sits on the z axis at height z
    above the pair.

    Attributes:
        c (float): angular momentum of the pair about the z axis, 2 m rho^2 theta'
        rho, z, rho_dot, z_dot, theta, t (float): coordinates, velocities, phase and time
    """

    def __init__(self, t, rho, z, rho_dot, z_dot, theta, c):
        self.t = float(t)
        self.rho = float(rho)
        self.z = float(z)
        self.rho_dot = float(rho_dot)
        self.z_dot = float(z_dot)
        self.theta = float(theta)
        self.c = float(c)

    def __repr__(self):
        return (f'isoscelesstate(t={self.t:.6g}, rho={self.rho:.6g}, z={self.z:.6g}, '
                f'rho_dot={self.rho_dot:.6g}, z_dot={self.z_dot:.6g}, c={self.c:.6g})')

    def to_vector(self):
        return np.array([self.rho, self.z, self.rho_dot, self.z_dot, self.theta])

def _check_isosceles(sys):
    if sys.n_bodies != 3 or sys.dim != 3:
        raise SymmetryError('The isosceles subsystem needs three bodies in three dimensions')
    m = sys.masses
    if abs(m[0] - m[1]) > 1e-12*m[0]:
        raise SymmetryError(f'The isosceles subsystem needs m_0 = m_1, got {m[0]} and {m[1]}')
    return (m[0], m[2])

def isosceles_reduce(s, sys, tol=1e-8):
    """Reduce a symmetric spatial state to (rho, z, rho', z', theta; c).

    Raises:
        SymmetryError: masses or state break the mirror symmetry beyond tol
    """
    m, m3 = _check_isosceles(sys)
    q, v = sys.com_normalize(s.q, s.v)
    scale = max(np.max(np.abs(q)), 1.0)
    vscale = max(np.max(np.abs(v)), 1.0)

    if (np.max(np.abs(q[0, :2] + q[1, :2])) > tol*scale or abs(q[0, 2] - q[1, 2]) > tol*scale
            or np.max(np.abs(q[2, :2])) > tol*scale):
        raise SymmetryError('Configuration is not mirror-symmetric about the z axis')
    if (np.max(np.abs(v[0, :2] + v[1, :2])) > tol*vscale or abs(v[0, 2] - v[1, 2]) > tol*vscale
            or np.max(np.abs(v[2, :2])) > tol*vscale):
        raise SymmetryError('Velocities are not mirror-symmetric about the z axis')

    x, y = q[0, :2]
    vx, vy = v[0, :2]
    rho = np.hypot(x, y)
    if rho == 0:
        raise SingularityError('Binary collision in the isosceles pair')
    return isoscelesstate(s.t, rho, q[2, 2] - q[0, 2], (x*vx + y*vy)/rho, v[2, 2] - v[0, 2],
                          np.arctan2(y, x), 2*m*(x*vy - y*vx))

def isosceles_embed(r, sys):
    """Full CoM-normalized state of a reduced isosceles state"""
    m, m3 = _check_isosceles(sys)
    M = 2*m + m3
    z0, z3 = -m3*r.z/M, 2*m*r.z/M
    zd0, zd3 = -m3*r.z_dot/M, 2*m*r.z_dot/M
    w = r.c/(2*m*r.rho**2)
    ct, st = np.cos(r.theta), np.sin(r.theta)

    q = np.array([[r.rho*ct, r.rho*st, z0],
                  [-r.rho*ct, -r.rho*st, z0],
                  [0.0, 0.0, z3]])
    v1 = [r.rho_dot*ct - r.rho*w*st, r.rho_dot*st + r.rho*w*ct]
    v = np.array([[v1[0], v1[1], zd0],
                  [-v1[0], -v1[1], zd0],
                  [0.0, 0.0, zd3]])
    return state(r.t, q, v)

def _isosceles_potential(rho, z, sys):
    # U and its partials in (rho, z)
    m, m3 = _check_isosceles(sys)
    G, al = sys.G, sys.alpha
    d2 = rho**2 + z**2
    U = G*m**2*(2*rho)**(-al) + 2*G*m*m3*d2**(-al/2)
    dU_drho = -2*al*G*m**2*(2*rho)**(-al - 1) - 2*al*G*m*m3*rho*d2**(-al/2 - 1)
    dU_dz = -2*al*G*m*m3*z*d2**(-al/2 - 1)
    return (U, dU_drho, dU_dz)

def isosceles_energy(r, sys):
    """Energy K - U of a reduced state"""
    m, m3 = _check_isosceles(sys)
    mu3 = 2*m*m3/(2*m + m3)
    K = m*r.rho_dot**2 + r.c**2/(4*m*r.rho**2) + 0.5*mu3*r.z_dot**2
    return K - _isosceles_potential(r.rho, r.z, sys)[0]

class isoscelesorbit(object):
    """Reduced isosceles solution with dense output.

    Attributes:
        c (float): conserved pair angular momentum
        status (str): `completed` or `collision-proximity`
        sys (masssystem): system
        t (np.ndarray): sample times
        y (np.ndarray): samples of (rho, z, rho', z', theta), shape (len(t), 5)
    """

    def __init__(self, sys, t, y, sol, c, status):
        self.sys = sys
        self.t = t
        self.y = y
        self._sol = sol
        self.c = c
        self.status = status

    def __repr__(self):
        return f'isoscelesorbit(t=[{self.t[0]:.6g}, {self.t[-1]:.6g}], status={self.status})'

    def __call__(self, t):
        y = self._sol(t)
        return isoscelesstate(t, *y, self.c)

    def embed(self, t):
        """Full states at times t"""
        return [isosceles_embed(self(tt), self.sys) for tt in np.atleast_1d(t)]

    @property
    def U(self):
        """np.ndarray: U at the samples"""
        return _isosceles_potential(self.y[:, 0], self.y[:, 1], self.sys)[0]

def isosceles_propagate(r0, sys, t_final, rtol=None, atol=None, r_min=None):
    """Integrate the reduced two-degree-of-freedom isosceles equations.

    Args:
        r0 (isoscelesstate): initial reduced state
        sys (masssystem): three bodies in 3D with m_0 = m_1
        t_final (float): final time, either direction
        rtol, atol, r_min: default `PROPAGATE_DEFAULTS`

    Returns:
        isoscelesorbit
    """
    opts = virialab.PROPAGATE_DEFAULTS
    rtol = opts['rtol'] if rtol is None else rtol
    atol = opts['atol'] if atol is None else atol
    r_min = opts['r_min'] if r_min is None else r_min

    m, m3 = _check_isosceles(sys)
    mu3 = 2*m*m3/(2*m + m3)
    c = r0.c

    def fun(t, y):
        rho, z, rd, zd, th = y
        _, Ur, Uz = _isosceles_potential(rho, z, sys)
        return [rd, zd, c**2/(4*m**2*rho**3) + Ur/(2*m), Uz/mu3, c/(2*m*rho**2)]

    def close(t, y):
        return min(2*y[0], np.hypot(y[0], y[1])) - r_min
    close.terminal = True
    close.direction = -1

    res = solve_ivp(fun, (r0.t, t_final), r0.to_vector(), method='DOP853', rtol=rtol, atol=atol,
                    dense_output=True, events=close)
    if res.status < 0:
        raise IntegrationError(f'Isosceles integration failed: {res.message}')
    status = 'collision-proximity' if res.status == 1 else 'completed'
    return isoscelesorbit(sys, res.t, res.y.T, res.sol, c, status)

def isosceles_seed(sys, level, a, z, rng=None, jitter=0.0):
    """Reduced state with the pair on a circle of radius a and body 2 at height z, energy -h.

    The pair spins at its own circular rate; z' is set by the energy and
    points away from the pair. With jitter > 0 the spin and rho' are perturbed.

    Returns:
        isoscelesstate|None: None if the energy cannot be met at this height
    """
    m, m3 = _check_isosceles(sys)
    mu3 = 2*m*m3/(2*m + m3)
    G, al = sys.G, sys.alpha
    # circular pair: m rho w^2 = pair force at separation 2a
    w = np.sqrt(al*G*m*(2*a)**(-al - 1)/a)
    rd = 0.0
    if jitter > 0:
        rng = np.random.default_rng() if rng is None else rng
        w *= 1 + jitter*rng.normal()
        rd = jitter*a*w*rng.normal()
    c = 2*m*a**2*w
    U = _isosceles_potential(a, z, sys)[0]
    zd2 = 2*(U - level.h - m*rd**2 - m*a**2*w**2)/mu3
    if zd2 < 0:
        return None
    return isoscelesstate(0.0, a, z, rd, np.sign(z)*np.sqrt(zd2), 0.0, c)

def _isosceles_worker(args):
    i, r0, sys, T, a, U_floor, kwargs = args
    fwd = isosceles_propagate(r0, sys, T, **kwargs)
    bwd = isosceles_propagate(r0, sys, -T, **kwargs)
    t = np.concatenate((bwd.t[::-1], fwd.t[1:]))
    y = np.concatenate((bwd.y[::-1], fwd.y[1:]))
    U = _isosceles_potential(y[:, 0], y[:, 1], sys)[0]

    # contiguous stretch about t = 0 with U above the floor
    k0 = len(bwd.t) - 1
    above = U >= U_floor
    lo = k0
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = k0
    while hi < len(t) - 1 and above[hi + 1]:
        hi += 1
    confined = float(t[hi] - t[lo]) if above[k0] else 0.0

    sep = virialab.ESCAPE_DEFAULTS['separation_factor']
    def leaves(orbit, sign):
        z, zd = orbit.y[-1, 1], orbit.y[-1, 3]
        return orbit.status == 'completed' and abs(z) > sep*a and sign*z*zd > 0

    return {'member': i, 'z0': r0.z, 'z_dot0': r0.z_dot, 'c': r0.c,
            'U_min': float(U.min()), 'U_floor': U_floor,
            'confined_time': confined, 'U_above_floor': bool(np.all(above)),
            'escape_fwd': leaves(fwd, 1), 'escape_bwd': leaves(bwd, -1),
            'collision': 'collision-proximity' in (fwd.status, bwd.status),
            'label': 'candidate evidence'}

def isosceles_escape_scan(sys, level, a, n, T, U_floor=None, z_range=(2.0, 20.0), jitter=0.05,
                          seed=None, jobs=1, **kwargs):
    """Scan isosceles seeds for two-sided escape with U bounded below along the way.

    Each seed has the pair on a circle of radius a and body 2 at a random
    height in z_range (in units of a). Runs go T forward and backward. Rows
    are sorted by the time spent with U >= U_floor around t = 0; no claim
    of all-time confinement is made.

    Args:
        sys (masssystem): three bodies in 3D, m_0 = m_1 = m
        level (energylevel): energy level
        a (float): pair radius
        n (int): number of seeds
        T (float): horizon in each direction
        U_floor (float|None): threshold on U, default 2 m / a
        z_range (tuple): heights in units of a
        jitter (float): relative perturbation of the pair spin and rho'
        seed (int|None): random seed
        jobs (int): worker processes
        **kwargs: passed to `isosceles_propagate`

    Returns:
        pd.DataFrame
    """
    m, m3 = _check_isosceles(sys)
    U_floor = 2*m/a if U_floor is None else float(U_floor)
    if not U_floor > level.h:
        warnings.warn(f'U floor {U_floor:.6g} is not above h = {level.h:.6g}', DiscrepancyWarning)

    rng = np.random.default_rng(seed)
    seeds = []
    tries = 0
    while len(seeds) < n:
        tries += 1
        if tries > 100*n:
            raise FamilyError(f'Energy -{level.h} unreachable for pair radius {a} in the height range')
        z = a*rng.uniform(*z_range)*rng.choice((-1, 1))
        r0 = isosceles_seed(sys, level, a, z, rng, jitter)
        if r0 is not None:
            seeds.append(r0)

    args = [(i, r0, sys, T, a, U_floor, kwargs) for i, r0 in enumerate(seeds)]
    rows = parallel_map(_isosceles_worker, args, jobs=jobs, desc='isosceles scan')
    df = pd.DataFrame(list(rows)).set_index('member')
    return df.sort_values('confined_time', ascending=False)

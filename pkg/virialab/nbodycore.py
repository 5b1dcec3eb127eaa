# Configuration space, mass metric, potential and pointwise dynamical quantities
# Oct 2026

from .exceptions import *
import virialab.constants as const
import numpy as np

class masssystem(object):
    """Masses, gravitational constant, spatial dimension and homogeneity degree.

    Defines the potential U, the kinetic energy K and the mass metric
    <a, b> = sum_a m_a a_a . b_a on configuration space. Immutable after
    construction; every function in this module takes one as argument.

    Args:
        masses (array-like): positive body masses, at least two
        G (float): gravitational constant, default 1
        dim (int): spatial dimension, 2 or 3
        alpha (float): homogeneity degree of the pair potential
            G m_a m_b / r_ab^alpha. Default 1 (Newtonian)

    Attributes:
        alpha (float): pair potential degree
        dim (int): spatial dimension
        G (float): gravitational constant
        masses (np.ndarray): body masses
        n_bodies (int): number of bodies
        total_mass (float): sum of masses

    Notes:
        Only alpha = 1 and alpha = 2 are fully supported by the identities
        downstream (virial surface, relative equilibria). Other values are
        accepted for the pointwise quantities.

    Example:
        >>> sys = masssystem([1, 1, 1])
        >>> sys.n_bodies
        3
    """

    def __init__(self, masses, G=1.0, dim=2, alpha=1.0):

        masses = np.asarray(masses, dtype=float).ravel()

        # check input
        if len(masses) < 2:
            raise InputError(f'Need at least two bodies, got {len(masses)}')
        if not np.all(np.isfinite(masses)) or np.any(masses <= 0):
            raise InputError(f'Masses must be finite and strictly positive: {masses}')
        if not G > 0:
            raise InputError(f'G must be positive, got {G}')
        if dim not in (2, 3):
            raise InputError(f'dim must be 2 or 3, got {dim}')
        if not alpha > 0:
            raise InputError(f'alpha must be positive, got {alpha}')

        self.masses = masses
        self.masses.setflags(write=False)
        self.G = float(G)
        self.dim = int(dim)
        self.alpha = float(alpha)
        self.n_bodies = len(masses)
        self.total_mass = float(masses.sum())

        # pair bookkeeping
        self._i, self._j = np.triu_indices(self.n_bodies, 1)
        self._mm = masses[self._i]*masses[self._j]

        # pair -> body incidence for accelerations: acc_a = sum_p B[p, a] * f_p
        incidence = np.zeros((len(self._i), self.n_bodies))
        for p, (i, j) in enumerate(zip(self._i, self._j)):
            incidence[p, i] = masses[j]
            incidence[p, j] = -masses[i]
        self._incidence = incidence

    def __repr__(self):
        return (f'masssystem(masses={self.masses.tolist()}, G={self.G}, '
                f'dim={self.dim}, alpha={self.alpha})')

    def __eq__(self, other):
        if not isinstance(other, masssystem):
            return NotImplemented
        return (np.array_equal(self.masses, other.masses) and self.G == other.G
                and self.dim == other.dim and self.alpha == other.alpha)

    @property
    def shape(self):
        """tuple: shape of a single configuration, (n_bodies, dim)"""
        return (self.n_bodies, self.dim)

    def check(self, q):
        """Return q as a float array of configuration shape, raising on bad input.

        Args:
            q (array-like): configuration(s) of shape (..., n_bodies, dim)

        Returns:
            np.ndarray: float copy of q

        Raises:
            InputError: wrong trailing shape or non-finite entries
        """
        q = np.asarray(q, dtype=float)
        if q.shape[-2:] != self.shape:
            raise InputError(f'Configuration shape {q.shape} does not end in {self.shape}')
        if not np.all(np.isfinite(q)):
            raise InputError('Configuration has non-finite entries')
        return q

    def pair_distances(self, q):
        """Mutual distances r_ab for a < b.

        Args:
            q (np.ndarray): configuration(s), shape (..., n_bodies, dim)

        Returns:
            np.ndarray: shape (..., n_pairs), ordered as `np.triu_indices`
        """
        q = np.asarray(q, dtype=float)
        return np.linalg.norm(q[..., self._i, :] - q[..., self._j, :], axis=-1)

    def center_of_mass(self, q):
        """Mass-weighted mean position, shape (..., dim)"""
        return np.einsum('a,...ad->...d', self.masses, q)/self.total_mass

    def com_normalize(self, q, v=None):
        """Shift positions (and velocities) to zero center of mass and momentum.

        Args:
            q (np.ndarray): configuration(s)
            v (np.ndarray|None): velocities, optional

        Returns:
            np.ndarray|tuple: normalized q, or (q, v) when v is given
        """
        q = np.asarray(q, dtype=float)
        q = q - self.center_of_mass(q)[..., None, :]
        if v is None:
            return q
        v = np.asarray(v, dtype=float)
        v = v - self.center_of_mass(v)[..., None, :]
        return q, v

    def mass_inner(self, a, b):
        """Mass-metric inner product sum_a m_a a_a . b_a, over leading axes"""
        return np.einsum('a,...ad,...ad->...', self.masses, a, b)

    def mass_norm(self, a):
        """Mass-metric norm of configuration-shaped vectors"""
        return np.sqrt(self.mass_inner(a, a))

class state(object):
    """Phase point (t, q, v).

    Args:
        t (float): time
        q (array-like): positions, shape (n_bodies, dim)
        v (array-like): velocities, same shape as q

    Example:
        >>> s = state(0, [[-1, 0], [1, 0]], [[0, -0.5], [0, 0.5]])
        >>> s.q.shape
        (2, 2)
    """

    def __init__(self, t, q, v):
        self.t = float(t)
        self.q = np.array(q, dtype=float)
        self.v = np.array(v, dtype=float)

        if self.q.shape != self.v.shape or self.q.ndim != 2:
            raise InputError(f'q {self.q.shape} and v {self.v.shape} must share a (n_bodies, dim) shape')
        if not (np.isfinite(self.t) and np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.v))):
            raise InputError('State has non-finite entries')

    def __repr__(self):
        return f'state(t={self.t}, q={self.q.tolist()}, v={self.v.tolist()})'

    def copy(self):
        return state(self.t, self.q.copy(), self.v.copy())

    def to_vector(self):
        """Flat (q, v) vector as used by the integrator"""
        return np.concatenate((self.q.ravel(), self.v.ravel()))

    @classmethod
    def from_vector(cls, t, y, shape):
        """Rebuild a state from a flat (q, v) vector.

        Args:
            t (float): time
            y (np.ndarray): flat vector of length 2 * n_bodies * dim (extra
                trailing entries are ignored)
            shape (tuple): (n_bodies, dim)
        """
        n = shape[0]*shape[1]
        return cls(t, np.reshape(y[:n], shape), np.reshape(y[n:2*n], shape))

    def reversed(self):
        """Same configuration with velocities negated"""
        return state(self.t, self.q.copy(), -self.v)

    def is_com_normalized(self, sys, tol=1e-10):
        """True if center of mass and total momentum vanish within tol"""
        scale = max(1.0, np.max(np.abs(self.q)))
        vscale = max(1.0, np.max(np.abs(self.v)))
        return (np.all(np.abs(sys.center_of_mass(self.q)) <= tol*scale) and
                np.all(np.abs(sys.center_of_mass(self.v)) <= tol*vscale))

class energylevel(object):
    """Negative energy level E = -h.

    Args:
        h (float): positive level parameter

    Attributes:
        h (float): level parameter
        E (float): energy, equal to -h

    Example:
        >>> level = energylevel(0.5)
        >>> level.U_virial
        1.0
    """

    def __init__(self, h):
        h = float(h)
        if not (np.isfinite(h) and h > 0):
            raise InputError(f'Energy level h must be positive and finite, got {h}')
        self.h = h
        self.E = -h

    def __repr__(self):
        return f'energylevel(h={self.h})'

    @classmethod
    def from_energy(cls, E):
        """Level for a negative energy value"""
        if not E < 0:
            raise InputError(f'Energy must be negative for a Hill region, got {E}')
        return cls(-E)

    @property
    def U_hill(self):
        """float: U on the Hill boundary"""
        return self.h

    @property
    def U_virial(self):
        """float: U on the virial surface"""
        return 2*self.h

    def U_at_k(self, k):
        """Value of U at k-ruler coordinate k, U = 2h / (1 + k)"""
        k = np.asarray(k, dtype=float)
        with np.errstate(divide='ignore'):
            return 2*self.h/(1 + k)

# ---------------------------------------------------------------------------
# pointwise quantities
# ---------------------------------------------------------------------------

def potential_U(q, sys):
    """Potential U = G sum_{a<b} m_a m_b / r_ab^alpha (positive; negative of the potential energy).

    Args:
        q (array-like): configuration(s), shape (..., n_bodies, dim)
        sys (masssystem): system

    Returns:
        float|np.ndarray: U, with `constants.U_COLLISION` (+inf) wherever some
            r_ab == 0 exactly

    Raises:
        InputError: non-finite input or wrong shape

    Example:
        >>> potential_U([[0, 0], [2, 0]], masssystem([1, 1]))
        0.5
    """
    q = sys.check(q)
    r = sys.pair_distances(q)
    collide = np.any(r == 0, axis=-1)
    with np.errstate(divide='ignore'):
        U = sys.G*np.sum(sys._mm*r**(-sys.alpha), axis=-1)
    U = np.where(collide, const.U_COLLISION, U)
    if np.ndim(U) == 0:
        return float(U)
    return U

def grad_U(q, sys):
    """Mass-metric gradient of U, which is the acceleration field: q'' = grad_U(q).

    Component a is (1/m_a) dU/dq_a.

    Args:
        q (array-like): configuration(s), shape (..., n_bodies, dim)
        sys (masssystem): system

    Returns:
        np.ndarray: same shape as q

    Raises:
        SingularityError: some r_ab == 0
    """
    q = sys.check(q)
    d = q[..., sys._i, :] - q[..., sys._j, :]
    r = np.linalg.norm(d, axis=-1)
    if np.any(r == 0):
        raise SingularityError('grad_U evaluated at a collision')

    # pair force factor, toward the partner
    coef = -sys.alpha*sys.G*r**(-sys.alpha - 2)
    return np.einsum('pa,...pd->...ad', sys._incidence, coef[..., None]*d)

def kinetic_K(v, sys):
    """Kinetic energy K = 1/2 sum m_a |v_a|^2.

    Example:
        >>> kinetic_K([[2.0, 0.0], [0.0, 0.0]], masssystem([1, 1]))
        2.0
    """
    v = np.asarray(v, dtype=float)
    K = 0.5*sys.mass_inner(v, v)
    if np.ndim(K) == 0:
        return float(K)
    return K

def _split(s):
    # accept a state or a (q, v) pair of arrays
    if isinstance(s, state):
        return s.q, s.v
    return s

def energy_E(s, sys):
    """Total energy E = K(v) - U(q).

    Args:
        s (state|tuple): state or (q, v) arrays with matching leading axes
        sys (masssystem): system

    Raises:
        SingularityError: collision configuration
    """
    q, v = _split(s)
    U = potential_U(q, sys)
    if np.any(np.isinf(U)):
        raise SingularityError('Energy undefined at a collision')
    return kinetic_K(v, sys) - U

def moment_I(q, sys):
    """Moment of inertia I = sum m_a |q_a|^2 (mass-metric squared norm).

    Example:
        >>> moment_I([[1, 0, 0], [-1, 0, 0]], masssystem([1, 1], dim=3))
        2.0
    """
    q = sys.check(q)
    I = sys.mass_inner(q, q)
    if np.ndim(I) == 0:
        return float(I)
    return I

def moment_I_dot(s, sys):
    """Time derivative of I, 2 <q, v>"""
    q, v = _split(s)
    Idot = 2*sys.mass_inner(np.asarray(q, dtype=float), np.asarray(v, dtype=float))
    if np.ndim(Idot) == 0:
        return float(Idot)
    return Idot

def potential_dU_dt(s, sys):
    """Rate of change of U along the motion, <grad_U, v> in the mass metric.

    On an energy shell this equals dK/dt.
    """
    q, v = _split(s)
    out = sys.mass_inner(grad_U(q, sys), np.asarray(v, dtype=float))
    if np.ndim(out) == 0:
        return float(out)
    return out

def lagrange_jacobi_rhs(s, sys):
    """Second derivative of I from the Lagrange-Jacobi identity, 4K + 2<q, grad_U> = 4K - 2 alpha U.

    For alpha = 1 this is 4K - 2U; for alpha = 2 it equals 4E.

    Raises:
        SingularityError: collision configuration
    """
    q, v = _split(s)
    U = potential_U(q, sys)
    if np.any(np.isinf(U)):
        raise SingularityError('Lagrange-Jacobi identity undefined at a collision')
    return 4*kinetic_K(v, sys) - 2*sys.alpha*U

def angular_momentum_J(s, sys):
    """Total angular momentum sum m_a q_a x v_a.

    Returns:
        float|np.ndarray: scalar z-component when dim = 2, 3-vector when dim = 3
    """
    q, v = _split(s)
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    if sys.dim == 2:
        J = np.einsum('a,...a->...', sys.masses, q[..., 0]*v[..., 1] - q[..., 1]*v[..., 0])
        if np.ndim(J) == 0:
            return float(J)
        return J
    return np.einsum('a,...ad->...d', sys.masses, np.cross(q, v))

def linear_momentum_P(v, sys):
    """Total linear momentum sum m_a v_a, shape (..., dim)"""
    return np.einsum('a,...ad->...d', sys.masses, np.asarray(v, dtype=float))

def hill_membership(q, sys, level, band=None):
    """Classify a configuration against the Hill region at energy -h.

    Args:
        q (array-like): configuration
        sys (masssystem): system
        level (energylevel): energy level
        band (float|None): relative band tolerance; |U - h| <= band * h is the
            boundary band. Default `virialab.HILL_DEFAULTS['band']`

    Returns:
        tuple: (region, virial_side) where region is one of `exterior`,
            `interior`, `boundary-band`, `collision-band` and virial_side is
            sign(U - 2h) (0 within the band tolerance of the virial surface)

    Example:
        >>> level = energylevel(1.5)
        >>> hill_membership([[0, 0], [1, 0], [0.5, np.sqrt(3)/2]], masssystem([1, 1, 1]), level)
        ('interior', 0)
    """
    import virialab
    if band is None:
        band = virialab.HILL_DEFAULTS['band']
    r_min = virialab.HILL_DEFAULTS['r_min']

    q = sys.check(q)
    U = potential_U(q, sys)
    h = level.h

    # virial side
    if np.isinf(U):       virial_side = 1
    elif abs(U - 2*h) <= band*h: virial_side = 0
    else:                 virial_side = int(np.sign(U - 2*h))

    # region
    if np.isinf(U) or np.min(sys.pair_distances(q)) < r_min:
        region = 'collision-band'
    elif abs(U - h) <= band*h:
        region = 'boundary-band'
    elif U < h:
        region = 'exterior'
    else:
        region = 'interior'

    return (region, virial_side)

def scale_to_level(q, sys, U_target):
    """Apply the scaling map q -> lambda q so that U(lambda q) = U_target exactly.

    Uses U(lambda q) = lambda^(-alpha) U(q).

    Args:
        q (array-like): non-collision configuration
        sys (masssystem): system
        U_target (float): desired potential value

    Returns:
        np.ndarray: scaled configuration

    Example:
        >>> sys = masssystem([1, 1])
        >>> potential_U(scale_to_level([[0, 0], [1, 0]], sys, 0.25), sys)
        0.25
    """
    U = potential_U(q, sys)
    if np.isinf(U):
        raise SingularityError('Cannot scale a collision configuration')
    lam = (U/U_target)**(1/sys.alpha)
    return lam*np.asarray(q, dtype=float)

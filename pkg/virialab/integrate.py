# Adaptive propagation of Newton's equations with dense output and an event engine
# Oct 2026

from .exceptions import *
from .nbodycore import (state, energylevel, potential_U, grad_U, kinetic_K, energy_E,
                        moment_I, moment_I_dot, angular_momentum_J, potential_dU_dt,
                        scale_to_level)
from .ensemble import ensemble, parallel_map
import virialab
import virialab.constants as const
import warnings, os, json

import numpy as np
import pandas as pd
from scipy.integrate import DOP853, OdeSolution, DenseOutput
from scipy.interpolate import BPoly
from scipy.optimize import brentq, minimize_scalar

EVENT_KINDS = ('brake-instant', 'virial-crossing', 'turn-around',
               'collision-proximity', 'hill-band-exit')

# ---------------------------------------------------------------------------
# dense output helpers
# ---------------------------------------------------------------------------

class _physicalstep(DenseOutput):
    # one Sundman step: inner interpolant is in tau, last component of y is t;
    # s_hi ends the step at a terminal root inside the tau step
    def __init__(self, inner, t_lo, t_hi, s_hi=None):
        super().__init__(t_lo, t_hi)
        self.inner = inner
        self.s_hi = inner.t if s_hi is None else s_hi

    def _call_impl(self, t):
        s_a, s_b = self.inner.t_old, self.s_hi
        lo, hi = min(self.t_old, self.t), max(self.t_old, self.t)

        def invert(tt):
            tt = min(max(tt, lo), hi)
            if tt == self.t_old: return s_a
            if tt == self.t:     return s_b
            return brentq(lambda s: self.inner(s)[-1] - tt, min(s_a, s_b), max(s_a, s_b),
                          xtol=1e-15, rtol=4*np.finfo(float).eps)

        if np.ndim(t) == 0:
            return self.inner(invert(float(t)))
        return self.inner(np.array([invert(tt) for tt in t]))

class _hermite(object):
    # piecewise quintic Hermite rebuild of q from (q, v, a) samples; v is its derivative
    def __init__(self, t, q, v, a):
        yi = np.stack((q, v, a), axis=1)
        self.qpoly = BPoly.from_derivatives(t, yi)
        self.vpoly = self.qpoly.derivative()

    def __call__(self, t):
        return np.vstack((np.atleast_2d(self.qpoly(t)).T, np.atleast_2d(self.vpoly(t)).T))

class _piecewise(object):
    # dispatch dense evaluation to the backward or forward half of a joined run
    def __init__(self, pieces, nqv):
        self.pieces = pieces    # list of (t_lo, t_hi, sol)
        self.nqv = nqv

    def __call__(self, t):
        t = np.atleast_1d(t)
        out = np.empty((self.nqv, len(t)))
        done = np.zeros(len(t), dtype=bool)
        for t_lo, t_hi, sol in self.pieces:
            idx = (~done) & (t <= t_hi)
            if np.any(idx):
                out[:, idx] = np.asarray(sol(t[idx]))[:self.nqv]
                done |= idx
        if not np.all(done):
            t_lo, t_hi, sol = self.pieces[-1]
            out[:, ~done] = np.asarray(sol(t[~done]))[:self.nqv]
        return out

# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

class event(object):
    """A located zero of an event function.

    Args:
        kind (str): one of `brake-instant`, `virial-crossing`, `turn-around`,
            `collision-proximity`, `hill-band-exit`
        t (float): event time
        state (state): phase point at t
        direction (int): sign of the event function's derivative (0 if tangential)
        degenerate (bool): tangential zero or an interval on which the event
            function vanishes to within the degeneracy floor
        value (float): event function at t after polishing
    """

    def __init__(self, kind, t, state, direction, degenerate=False, value=0.0):
        self.kind = kind
        self.t = float(t)
        self.state = state
        self.direction = int(direction)
        self.degenerate = bool(degenerate)
        self.value = float(value)

    def __repr__(self):
        flag = ', degenerate' if self.degenerate else ''
        return f'event({self.kind}, t={self.t:.10g}, direction={self.direction:+d}{flag})'

    def to_dict(self):
        return {'kind': self.kind,
                't': self.t,
                'direction': self.direction,
                'degenerate': self.degenerate,
                'value': self.value,
                'q': self.state.q.tolist(),
                'v': self.state.v.tolist()}

class trajectory(object):
    """Time-ordered solution of Newton's equations with dense output and an event log.

    Built by `propagate`; immutable thereafter. Calling the object evaluates
    the dense output; slicing with times returns a window.

    Args:
        sys (masssystem): system integrated
        t (np.ndarray): strictly increasing sample (step) times
        y (np.ndarray): flat (q, v) samples, shape (len(t), 2 * n_bodies * dim)
        sol (callable): dense output, maps a 1-d time array to shape (>= 2 n dim, m)
        events (list): `event` records
        **meta: run bookkeeping stored as attributes (rtol, atol, status, ...)

    Attributes:
        atol (float): absolute tolerance
        closest_approach (float): smallest sampled mutual distance
        drift_budget (float): allowed energy drift for this run
        E0 (float): energy of the initial state
        energy_drift (float): max |E(t) - E0| over samples
        angmom_drift (float): max |J(t) - J0| over samples
        events (list): located events, time ordered
        nsteps (int): accepted integrator steps
        rtol (float): relative tolerance
        status (str): `completed`, `collision-proximity`, `max-steps`,
            `step-underflow` or `hill-band-exit`
        stops (list): terminal events that ended the run
        sundman (bool): integrated in Sundman time
        sys (masssystem): system
        t (np.ndarray): sample times

    Example:
        >>> traj = propagate(s0, sys, 10)
        >>> traj(2.5).q          # dense output
        >>> traj[2:4].t[0]       # window
        2.0
        >>> traj.integrate(lambda q, v: kinetic_K(v, sys))
    """

    def __init__(self, sys, t, y, sol, events=None, **meta):
        t = np.asarray(t, dtype=float)
        if np.any(np.diff(t) <= 0):
            raise SpanError('Trajectory sample times must be strictly increasing')

        self.sys = sys
        self.t = t
        self._ys = np.asarray(y, dtype=float)
        self._sol = sol
        self._nqv = 2*sys.n_bodies*sys.dim
        self.events = list(events) if events is not None else []
        self.stops = []

        self.rtol = meta.pop('rtol', None)
        self.atol = meta.pop('atol', None)
        self.status = meta.pop('status', 'completed')
        self.nsteps = meta.pop('nsteps', len(t) - 1)
        self.sundman = meta.pop('sundman', False)
        for key, value in meta.items():
            setattr(self, key, value)

        E = self.E
        self.E0 = meta.get('E0', float(E[0]))
        self.energy_drift = float(np.max(np.abs(E - self.E0)))
        J = np.asarray(angular_momentum_J((self.q, self.v), sys))
        self.angmom_drift = float(np.max(np.abs(J - J[0])))
        self.closest_approach = min(meta.get('closest_approach', np.inf),
                                    float(np.min(sys.pair_distances(self.q))))

    def __repr__(self):
        klist = [d for d in self.__dict__.keys() if d[0] != '_']
        klist.sort(key=lambda x: x.lower())

        # columns fit to terminal
        maxsize = max((len(k) for k in klist)) + 2
        terminal_width = os.get_terminal_size().columns
        ncolumns = max(1, min(int(np.floor(terminal_width / maxsize)), len(klist)))

        needed_len = int(np.ceil(len(klist) / ncolumns)*ncolumns) - len(klist)
        klist = np.concatenate((klist, np.full(needed_len, '')))
        klist = np.array_split(klist, ncolumns)

        s = f'trajectory [{self.t[0]:.6g}, {self.t[-1]:.6g}], {self.status}:\n'
        for key in zip(*klist):
            s += '  '
            s += ''.join(['{0: <{1}}'.format(k, maxsize) for k in key])
            s += '\n'
        return s

    def __len__(self):
        return len(self.t)

    def __call__(self, t):
        """State at time t from the dense output"""
        q, v = self.qv(t)
        return state(t, q[0], v[0])

    def __getitem__(self, key):
        """Sample state for an integer, window trajectory for a slice of times.

        Example:
            >>> traj[0]            # first sample as a state
            >>> traj[-1.0:1.0]     # window [-1, 1]
        """
        if isinstance(key, slice):
            if key.step is not None:
                raise SpanError('Trajectory windows take no step')
            t0 = self.t[0] if key.start is None else float(key.start)
            t1 = self.t[-1] if key.stop is None else float(key.stop)
            return self.window(t0, t1)

        n = self.sys.n_bodies*self.sys.dim
        y = self._ys[key]
        return state(self.t[key], y[:n].reshape(self.sys.shape), y[n:].reshape(self.sys.shape))

    # span ------------------------------------------------------------------

    @property
    def t0(self):
        return float(self.t[0])

    @property
    def t1(self):
        return float(self.t[-1])

    @property
    def span(self):
        """float: duration covered"""
        return float(self.t[-1] - self.t[0])

    def _check_span(self, t0, t1):
        tol = 1e-12*max(1.0, abs(self.t[0]), abs(self.t[-1]))
        if t0 < self.t[0] - tol or t1 > self.t[-1] + tol:
            raise SpanError(f'Window [{t0}, {t1}] exceeds trajectory span [{self.t[0]}, {self.t[-1]}]')

    def window(self, t0, t1):
        """Sub-trajectory on [t0, t1] sharing this trajectory's dense output.

        Raises:
            SpanError: window outside the span or empty
        """
        if not t1 > t0:
            raise SpanError(f'Empty window [{t0}, {t1}]')
        self._check_span(t0, t1)
        t0 = max(t0, self.t[0])
        t1 = min(t1, self.t[-1])

        inner = (self.t > t0) & (self.t < t1)
        t = np.concatenate(([t0], self.t[inner], [t1]))
        y = np.concatenate((self._y(t0), self._ys[inner], self._y(t1)))

        new = trajectory(self.sys, t, y, self._sol,
                         events=[e for e in self.events if t0 <= e.t <= t1],
                         rtol=self.rtol, atol=self.atol, status=self.status,
                         nsteps=int(np.sum(inner)) + 1, sundman=self.sundman,
                         E0=self.E0)
        new.stops = [e for e in self.stops if t0 <= e.t <= t1]
        return new

    # dense evaluation ------------------------------------------------------

    def _y(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        self._check_span(t.min(), t.max())
        y = np.asarray(self._sol(t))
        return y[:self._nqv].T

    def qv(self, t):
        """Positions and velocities at times t.

        Args:
            t (float|np.ndarray): times within the span

        Returns:
            tuple: (q, v) each of shape (len(t), n_bodies, dim)
        """
        y = self._y(t)
        m = len(y)
        n = self._nqv//2
        return (y[:, :n].reshape(m, *self.sys.shape), y[:, n:].reshape(m, *self.sys.shape))

    # samples ---------------------------------------------------------------

    @property
    def q(self):
        """np.ndarray: sampled positions, shape (len(t), n_bodies, dim)"""
        n = self._nqv//2
        return self._ys[:, :n].reshape(len(self.t), *self.sys.shape)

    @property
    def v(self):
        """np.ndarray: sampled velocities"""
        n = self._nqv//2
        return self._ys[:, n:].reshape(len(self.t), *self.sys.shape)

    @property
    def K(self):
        return kinetic_K(self.v, self.sys)

    @property
    def U(self):
        return potential_U(self.q, self.sys)

    @property
    def E(self):
        return self.K - self.U

    @property
    def I(self):
        return moment_I(self.q, self.sys)

    @property
    def Idot(self):
        return moment_I_dot((self.q, self.v), self.sys)

    @property
    def J(self):
        return angular_momentum_J((self.q, self.v), self.sys)

    @property
    def level(self):
        """energylevel: level of the initial energy (negative energies only)"""
        return energylevel.from_energy(self.E0)

    # quadrature ------------------------------------------------------------

    def integrate(self, fn, t0=None, t1=None):
        """Integrate fn(q, v) over [t0, t1] against the dense output.

        Gauss-Legendre quadrature of order `constants.quad_order` on every
        integrator step inside the window.

        Args:
            fn (callable): maps batched (q, v) of shape (m, n_bodies, dim) to
                values of shape (m,) or (m, k)
            t0 (float|None): lower limit, default start of span
            t1 (float|None): upper limit, default end of span

        Returns:
            float|np.ndarray: integral

        Example:
            >>> traj.integrate(lambda q, v: potential_U(q, sys), 0, period)
        """
        t0 = self.t[0] if t0 is None else float(t0)
        t1 = self.t[-1] if t1 is None else float(t1)
        if t0 == t1:
            return 0.0
        sign = 1.0
        if t1 < t0:
            t0, t1, sign = t1, t0, -1.0
        self._check_span(t0, t1)

        inner = self.t[(self.t > t0) & (self.t < t1)]
        bps = np.concatenate(([t0], inner, [t1]))
        x, w = np.polynomial.legendre.leggauss(const.quad_order)

        half = 0.5*np.diff(bps)
        mid = 0.5*(bps[1:] + bps[:-1])
        tn = (mid[:, None] + half[:, None]*x).ravel()

        q, v = self.qv(tn)
        vals = np.asarray(fn(q, v), dtype=float)
        vals = vals.reshape(len(mid), len(x), *vals.shape[1:])
        weights = (half[:, None]*w)
        weights = weights.reshape(weights.shape + (1,)*(vals.ndim - 2))
        out = sign*np.sum(weights*vals, axis=(0, 1))
        if np.ndim(out) == 0:
            return float(out)
        return out

    def average(self, fn, t0=None, t1=None):
        """Time average of fn(q, v) over [t0, t1]"""
        t0 = self.t[0] if t0 is None else float(t0)
        t1 = self.t[-1] if t1 is None else float(t1)
        return self.integrate(fn, t0, t1)/(t1 - t0)

    # construction ----------------------------------------------------------

    @classmethod
    def join(cls, backward, forward):
        """Concatenate a backward run ending at t0 with a forward run starting at t0.

        Returns:
            trajectory: on [backward.t0, forward.t1]
        """
        if backward.sys != forward.sys:
            raise InputError('Cannot join trajectories of different systems')
        if abs(backward.t[-1] - forward.t[0]) > 1e-12*max(1.0, abs(forward.t[0])):
            raise SpanError(f'Backward run ends at {backward.t[-1]}, forward starts at {forward.t[0]}')

        t = np.concatenate((backward.t[:-1], forward.t))
        y = np.concatenate((backward._ys[:-1], forward._ys))
        sol = _piecewise([(backward.t[0], backward.t[-1], backward._sol),
                          (forward.t[0], forward.t[-1], forward._sol)], forward._nqv)

        status = [s for s in (backward.status, forward.status) if s != 'completed']
        traj = cls(forward.sys, t, y, sol, events=[],
                   rtol=forward.rtol, atol=forward.atol,
                   status=','.join(dict.fromkeys(status)) if status else 'completed',
                   nsteps=backward.nsteps + forward.nsteps,
                   sundman=forward.sundman, E0=forward.E0,
                   closest_approach=min(backward.closest_approach, forward.closest_approach),
                   drift_budget=getattr(backward, 'drift_budget', 0) + getattr(forward, 'drift_budget', 0))
        traj.stops = backward.stops + forward.stops
        return traj

    @classmethod
    def from_samples(cls, sys, t, q, v, **meta):
        """Rebuild dense output from exported samples by quintic Hermite interpolation.

        The accelerations come from grad_U, so the interpolant matches
        position, velocity and acceleration at every sample.

        Args:
            sys (masssystem): system
            t (array-like): strictly increasing times
            q (array-like): positions, shape (len(t), n_bodies, dim)
            v (array-like): velocities, same shape

        Returns:
            trajectory
        """
        t = np.asarray(t, dtype=float)
        q = sys.check(q)
        v = np.asarray(v, dtype=float)
        m = len(t)
        if len(q) != m or v.shape != q.shape:
            raise InputError(f'Sample arrays disagree: t {t.shape}, q {q.shape}, v {v.shape}')
        a = grad_U(q, sys)
        sol = _hermite(t, q.reshape(m, -1), v.reshape(m, -1), a.reshape(m, -1))
        y = np.concatenate((q.reshape(m, -1), v.reshape(m, -1)), axis=1)
        return cls(sys, t, y, sol, **meta)

    @classmethod
    def from_csv(cls, path, sys):
        """Read a trajectory written by `to_csv`"""
        try:
            df = pd.read_csv(path, comment='#')
        except OSError as err:
            raise err
        except Exception as err:
            raise InputError(f'Could not parse trajectory file {path}: {err}') from None

        shape = sys.shape
        qcols = [f'q{a}_{x}' for a in range(shape[0]) for x in 'xyz'[:shape[1]]]
        vcols = [f'v{a}_{x}' for a in range(shape[0]) for x in 'xyz'[:shape[1]]]
        missing = [c for c in ['t'] + qcols + vcols if c not in df.columns]
        if missing:
            raise InputError(f'Trajectory file {path} is missing columns {missing}')

        m = len(df)
        q = df[qcols].to_numpy().reshape(m, *shape)
        v = df[vcols].to_numpy().reshape(m, *shape)
        return cls.from_samples(sys, df['t'].to_numpy(), q, v)

    # export ----------------------------------------------------------------

    def to_dataframe(self):
        """Samples with derived quantities.

        Columns: t, q{a}_{x,y,z}, v{a}_{x,y,z}, E, K, U, I, Idot and J (dim 2)
        or J_x, J_y, J_z (dim 3).
        """
        n, d = self.sys.shape
        axes = 'xyz'[:d]
        data = {'t': self.t}
        q = self.q
        v = self.v
        for a in range(n):
            for i, x in enumerate(axes):
                data[f'q{a}_{x}'] = q[:, a, i]
        for a in range(n):
            for i, x in enumerate(axes):
                data[f'v{a}_{x}'] = v[:, a, i]

        K = self.K
        U = self.U
        data['E'] = K - U
        data['K'] = K
        data['U'] = U
        data['I'] = self.I
        data['Idot'] = self.Idot
        J = self.J
        if d == 2:
            data['J'] = J
        else:
            for i, x in enumerate('xyz'):
                data[f'J_{x}'] = J[:, i]
        return pd.DataFrame(data)

    def to_csv(self, path, header=None):
        """Write samples as CSV, preceded by `# key: value` provenance lines.

        Args:
            path (str): output file
            header (dict|None): provenance entries
        """
        header = dict(header or {})
        header.setdefault('schema_version', const.SCHEMA_VERSION)
        header.setdefault('status', self.status)
        with open(path, 'w') as fid:
            for key in sorted(header):
                fid.write(f'# {key}: {json.dumps(header[key], sort_keys=True)}\n')
            self.to_dataframe().to_csv(fid, index=False, lineterminator='\n')

    def events_to_json(self, path=None, header=None):
        """Event log as a JSON document; written to path if given.

        Returns:
            dict: `{"provenance": ..., "events": [...]}`
        """
        doc = {'provenance': dict(header or {}),
               'status': self.status,
               'events': [e.to_dict() for e in self.events]}
        doc['provenance'].setdefault('schema_version', const.SCHEMA_VERSION)
        if path is not None:
            with open(path, 'w') as fid:
                json.dump(doc, fid, sort_keys=True, indent=1)
                fid.write('\n')
        return doc

    def events_of(self, kind, transverse=False):
        """Events of one kind, optionally excluding degenerate ones"""
        return [e for e in self.events if e.kind == kind and not (transverse and e.degenerate)]

# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

def _usable(kinds, E0, level):
    # level-dependent kinds are skipped for non-negative energies unless a level is given
    if level is not None or E0 < 0:
        return kinds
    return tuple(k for k in kinds if k not in ('virial-crossing', 'hill-band-exit', 'brake-instant'))

def _rhs(sys, sundman):
    n = sys.n_bodies*sys.dim
    shape = sys.shape

    def fun(s, y):
        q = y[:n].reshape(shape)
        a = grad_U(q, sys)
        g = float(np.min(sys.pair_distances(q))) if sundman else 1.0
        return np.concatenate((g*y[n:2*n], g*a.ravel(), [g]))
    return fun

def _split_aug(Y, sys):
    # augmented samples (m, 2nd+1) -> q, v, t
    m = len(Y)
    n = sys.n_bodies*sys.dim
    return (Y[:, :n].reshape(m, *sys.shape), Y[:, n:2*n].reshape(m, *sys.shape), Y[:, -1])

def propagate(s0, sys, t_final, rtol=None, atol=None, events=None, r_min=None,
              max_steps=None, sundman=None, strict=None, level=None, stop=None):
    """Integrate Newton's equations q'' = grad_U(q) from s0 to t_final.

    Uses the order-8 Dormand-Prince pair with dense output, stepped one step
    at a time so that proximity stops and step caps are exact. Both time
    directions are supported.

    Args:
        s0 (state): initial state, non-collision
        sys (masssystem): system
        t_final (float): final time, different from s0.t
        rtol (float|None): relative tolerance
        atol (float|None): absolute tolerance
        events (iterable|None): event kinds to detect after integration
        r_min (float|None): stop when a mutual distance falls to r_min
        max_steps (int|None): step cap
        sundman (bool|None): integrate in Sundman time dtau = dt / min r_ab
        strict (bool|None): raise DriftError when the drift budget is exceeded
        level (energylevel|None): level for virial and band events, default from E(s0)
        stop (list|None): extra terminal conditions as (kind, fn, direction)
            tuples; fn(q, v, t) maps batched arrays to values and the run
            stops at the first zero crossed in `direction`

    Defaults of `None` are read from `virialab.PROPAGATE_DEFAULTS`.

    Returns:
        trajectory: with `status` giving the halting reason

    Raises:
        IntegrationError: initial configuration within r_min of collision
        DriftError: drift budget exceeded with strict=True
        InputError: t_final equal to s0.t

    Example:
        >>> sys = masssystem([1, 1])
        >>> s0 = state(0, [[-0.5, 0], [0.5, 0]], [[0, -np.sqrt(0.5)], [0, np.sqrt(0.5)]])
        >>> traj = propagate(s0, sys, 10)
        >>> traj.status
        'completed'
    """
    defaults = virialab.PROPAGATE_DEFAULTS
    rtol = defaults['rtol'] if rtol is None else rtol
    atol = defaults['atol'] if atol is None else atol
    events = defaults['events'] if events is None else tuple(events)
    r_min = defaults['r_min'] if r_min is None else r_min
    max_steps = defaults['max_steps'] if max_steps is None else max_steps
    sundman = defaults['sundman'] if sundman is None else sundman
    strict = defaults['strict'] if strict is None else strict

    # check input
    if s0.q.shape != sys.shape:
        raise InputError(f'State shape {s0.q.shape} does not match system {sys.shape}')
    t_final = float(t_final)
    if not np.isfinite(t_final) or t_final == s0.t:
        raise InputError(f'Need a finite t_final different from t0 = {s0.t}, got {t_final}')
    r0 = float(np.min(sys.pair_distances(s0.q)))
    if r0 <= r_min:
        raise IntegrationError(f'Initial configuration is within r_min={r_min} of collision (min r = {r0})')

    direction = 1.0 if t_final > s0.t else -1.0
    E0 = energy_E(s0, sys)
    J0 = angular_momentum_J(s0, sys)

    # terminal conditions
    stops = [('collision-proximity',
              lambda q, v, t: np.min(sys.pair_distances(q), axis=-1) - r_min, -1)]
    if stop is not None:
        stops.extend(stop)
    if sundman:
        stops.append((None, lambda q, v, t: direction*(t - t_final), 1))
        s_bound = s0.t + direction*1e12
    else:
        s_bound = t_final

    y0 = np.concatenate((s0.to_vector(), [s0.t]))
    solver = DOP853(_rhs(sys, sundman), s0.t, y0, s_bound, rtol=rtol, atol=atol)

    sub = virialab.EVENT_DEFAULTS['subdivisions']
    ts = [s0.t]
    ys = [y0]
    interps = []
    closest = r0
    status = 'completed'
    halt = None
    nsteps = 0

    while solver.status == 'running':

        if nsteps >= max_steps:
            status = 'max-steps'
            break

        message = solver.step()
        if solver.status == 'failed':
            status = 'step-underflow'
            warnings.warn(f'Integration stopped at t={ts[-1]}: {message}', CollisionWarning)
            break
        nsteps += 1

        interp = solver.dense_output()
        s_grid = np.linspace(solver.t_old, solver.t, sub + 1)
        Y = interp(s_grid).T
        Y[-1] = solver.y
        q, v, t = _split_aug(Y, sys)

        # earliest terminal crossing in this step
        first = None
        for kind, fn, sgn in stops:
            f = sgn*np.asarray(fn(q, v, t), dtype=float)
            hit = np.nonzero((f[:-1] < 0) & (f[1:] >= 0))[0]
            if len(hit) == 0:
                continue
            k = hit[0]

            def g(s, fn=fn):
                qq, vv, tt = _split_aug(interp(s)[None, :], sys)
                return float(fn(qq, vv, tt)[0])

            s_root = brentq(g, s_grid[k], s_grid[k + 1], xtol=1e-15, rtol=4*np.finfo(float).eps)
            if first is None or direction*(s_root - first[1]) < 0:
                first = (kind, s_root)

        if first is not None:
            kind, s_root = first
            y_end = interp(s_root)
            keep = direction*(s_grid - s_root) < 0
            r_end = sys.pair_distances(_split_aug(y_end[None, :], sys)[0])
            closest = min(closest, float(np.min(sys.pair_distances(q[keep]))), float(np.min(r_end)))
            t_end = y_end[-1] if sundman else s_root
            if t_end != ts[-1]:
                interps.append(_physicalstep(interp, ts[-1], t_end, s_root) if sundman else interp)
                ts.append(t_end)
                ys.append(y_end)
            if kind is not None:
                status = kind
                halt = kind
            break

        closest = min(closest, float(np.min(sys.pair_distances(q))))
        t_new = solver.y[-1] if sundman else solver.t
        interps.append(_physicalstep(interp, ts[-1], t_new) if sundman else interp)
        ts.append(t_new)
        ys.append(solver.y.copy())

    if len(interps) == 0:
        raise IntegrationError(f'No integration step accepted from t={s0.t} ({status})')

    if status == 'max-steps':
        warnings.warn(f'Reached max_steps={max_steps} at t={ts[-1]}', ConvergenceWarning)
    elif status == 'collision-proximity':
        warnings.warn(f'Collision proximity (r <= {r_min}) at t={ts[-1]}', CollisionWarning)

    # time ordering
    ts = np.array(ts)
    ys = np.array(ys)
    if direction < 0:
        ts = ts[::-1]
        ys = ys[::-1]
        interps = interps[::-1]

    sol = OdeSolution(ts, interps)
    nqv = 2*sys.n_bodies*sys.dim
    traj = trajectory(sys, ts, ys[:, :nqv], sol, rtol=rtol, atol=atol, status=status,
                      nsteps=nsteps, sundman=sundman, E0=E0, closest_approach=closest)

    # drift monitor
    factor = virialab.PROPAGATE_DEFAULTS['drift_factor']
    traj.drift_budget = factor*max(rtol, atol)*max(nsteps, 1)*max(1.0, abs(E0))
    J_budget = factor*max(rtol, atol)*max(nsteps, 1)*max(1.0, float(np.max(np.abs(J0))))
    if traj.energy_drift > traj.drift_budget or traj.angmom_drift > J_budget:
        msg = (f'Drift exceeds budget: |dE| = {traj.energy_drift:.3g} (budget {traj.drift_budget:.3g}), '
               f'|dJ| = {traj.angmom_drift:.3g} (budget {J_budget:.3g})')
        if strict:
            raise DriftError(msg)
        warnings.warn(msg, EnergyDriftWarning)

    # terminal event record
    if halt is not None:
        end = 0 if direction < 0 else -1
        traj.stops = [event(halt, traj.t[end], traj[end], direction=-1 if halt == 'collision-proximity' else 1)]

    traj.events = sorted(traj.stops + detect_events(traj, _usable(events, traj.E0, level), level=level),
                         key=lambda e: e.t)
    return traj

def propagate_two_sided(s0, sys, T, events=None, level=None, **kwargs):
    """Integrate backward to s0.t - T and forward to s0.t + T and join the runs.

    Args:
        s0 (state): state at the center of the window
        sys (masssystem): system
        T (float): half-width, positive
        events (iterable|None): event kinds to detect on the joined run
        level (energylevel|None): level for virial and band events
        **kwargs: passed to `propagate`

    Returns:
        trajectory: on [s0.t - T, s0.t + T] (shorter if a run stopped early)
    """
    if not T > 0:
        raise InputError(f'Half-width T must be positive, got {T}')
    events = virialab.PROPAGATE_DEFAULTS['events'] if events is None else tuple(events)

    back = propagate(s0, sys, s0.t - T, events=(), level=level, **kwargs)
    fwd = propagate(s0, sys, s0.t + T, events=(), level=level, **kwargs)
    traj = trajectory.join(back, fwd)
    traj.events = sorted(traj.stops + detect_events(traj, _usable(events, traj.E0, level), level=level),
                         key=lambda e: e.t)
    return traj

# ---------------------------------------------------------------------------
# events
# ---------------------------------------------------------------------------

def _event_function(kind, sys, h, U_exit, r_prox):
    # returns fn(q, v) batched, and a natural scale fn(q, v) -> float
    if kind == 'virial-crossing':
        return (lambda q, v: potential_U(q, sys) - 2*h, lambda q, v: h)
    if kind == 'hill-band-exit':
        return (lambda q, v: potential_U(q, sys) - U_exit, lambda q, v: h)
    if kind == 'turn-around':
        return (lambda q, v: moment_I_dot((q, v), sys),
                lambda q, v: float(np.max(2*np.sqrt(moment_I(q, sys)*2*kinetic_K(v, sys)))))
    if kind == 'brake-instant':
        return (lambda q, v: potential_dU_dt((q, v), sys),
                lambda q, v: float(np.max(sys.mass_norm(grad_U(q, sys))*sys.mass_norm(v))))
    if kind == 'collision-proximity':
        return (lambda q, v: np.min(sys.pair_distances(q), axis=-1) - r_prox,
                lambda q, v: float(np.max(sys.pair_distances(q))))
    raise EventError(f'Unknown event kind {kind}; expected one of {EVENT_KINDS}')

def _event_grid(traj):
    # every integrator step subdivided into EVENT_DEFAULTS['subdivisions'] samples
    sub = virialab.EVENT_DEFAULTS['subdivisions']
    a = traj.t[:-1]
    frac = np.linspace(0, 1, sub + 1)[:-1]
    return np.concatenate(((a[:, None] + np.diff(traj.t)[:, None]*frac).ravel(), traj.t[-1:]))

def _zeros(fn_t, grid, f, floor, graze):
    # locate zeros of a sampled function: list of (t, direction, degenerate)
    out = []
    eps = 4*np.finfo(float).eps
    n = len(grid)
    flat = np.abs(f) < floor

    # runs of flat samples: one tangential record each
    in_run = np.zeros(n, dtype=bool)
    k = 0
    while k < n:
        if flat[k]:
            j = k
            while j + 1 < n and flat[j + 1]:
                j += 1
            if j > k:
                in_run[k:j + 1] = True
                i = k + int(np.argmin(np.abs(f[k:j + 1])))
                out.append((grid[i], 0, True))
            k = j + 1
        else:
            k += 1

    for k in range(n):
        if in_run[k]:
            continue

        # exact zero on a sample
        if f[k] == 0:
            lo, hi = max(k - 1, 0), min(k + 1, n - 1)
            out.append((grid[k], int(np.sign(f[hi] - f[lo])), False))
            continue

        if k == n - 1 or in_run[k + 1]:
            continue

        a, b = f[k], f[k + 1]

        # transverse crossing
        if a*b < 0:
            root = brentq(fn_t, grid[k], grid[k + 1], xtol=1e-15, rtol=eps)
            out.append((root, int(np.sign(b - a)), False))

        # tangential candidate: interior local minimum of |f| without sign change
        elif (0 < k and abs(a) < graze and f[k - 1]*a > 0 and a*b > 0
              and abs(a) <= abs(f[k - 1]) and abs(a) <= abs(b)):
            res = minimize_scalar(lambda t: abs(fn_t(t)), bounds=(grid[k - 1], grid[k + 1]),
                                  method='bounded', options={'xatol': 1e-14})
            fmin = fn_t(res.x)
            if fmin*a < 0:
                out.append((brentq(fn_t, grid[k - 1], res.x, xtol=1e-15, rtol=eps), int(np.sign(fmin - a)), False))
                out.append((brentq(fn_t, res.x, grid[k + 1], xtol=1e-15, rtol=eps), int(np.sign(b - fmin)), False))
            elif abs(fmin) < floor:
                out.append((res.x, 0, True))

    return out

def detect_events(traj, kinds=None, level=None, U_exit=None, r_prox=None, brake_threshold=None):
    """Locate all zeros of the selected event functions within the span.

    Event functions:

    * `virial-crossing`: U - 2h
    * `brake-instant`: dK/dt (= dU/dt on shell) crossing upward with K < brake_threshold * h
    * `turn-around`: dI/dt
    * `collision-proximity`: min r_ab - r_prox
    * `hill-band-exit`: U - U_exit, default U_exit = h (1 + band)

    Each step is sampled at `EVENT_DEFAULTS['subdivisions']` points; sign
    changes are bracketed and polished with Brent's method. Stretches where
    the function stays below the degeneracy floor, and tangential minima
    that touch zero without a sign change, are reported with
    `degenerate=True` rather than counted as crossings.

    Args:
        traj (trajectory): trajectory with dense output
        kinds (iterable|None): event kinds, default `PROPAGATE_DEFAULTS['events']`
        level (energylevel|None): energy level, default from the initial energy
        U_exit (float|None): level for `hill-band-exit`
        r_prox (float|None): distance for `collision-proximity`
        brake_threshold (float|None): relative K threshold for `brake-instant`;
            `np.inf` reports every local minimum of K

    Returns:
        list: `event` records ordered by time

    Raises:
        EventError: unknown kind, or a level is needed but the energy is not negative
    """
    kinds = virialab.PROPAGATE_DEFAULTS['events'] if kinds is None else tuple(kinds)
    if len(kinds) == 0:
        return []

    opts = virialab.EVENT_DEFAULTS
    sys = traj.sys

    if level is None and traj.E0 < 0:
        level = energylevel.from_energy(traj.E0)
    h = level.h if level is not None else None
    if h is None and any(k in ('virial-crossing', 'hill-band-exit', 'brake-instant') for k in kinds):
        raise EventError(f'Event kinds {kinds} need a negative energy level, E0 = {traj.E0}')

    if U_exit is None and h is not None:
        U_exit = h*(1 + virialab.HILL_DEFAULTS['band'])
    r_prox = opts['r_prox'] if r_prox is None else r_prox
    brake_threshold = opts['brake_threshold'] if brake_threshold is None else brake_threshold

    grid = _event_grid(traj)
    q, v = traj.qv(grid)

    found = []
    for kind in kinds:
        fn, scale = _event_function(kind, sys, h, U_exit, r_prox)
        f = np.asarray(fn(q, v), dtype=float)
        nat = max(scale(q, v), np.finfo(float).tiny)
        floor = opts['degeneracy_floor']*nat

        def fn_t(t, fn=fn):
            qq, vv = traj.qv(t)
            return float(fn(qq, vv)[0])

        for t, direction, degenerate in _zeros(fn_t, grid, f, floor, 1e-3*nat):
            s = traj(t)
            value = fn_t(t)

            if kind == 'brake-instant':
                if direction < 0:
                    continue
                if not kinetic_K(s.v, sys) < brake_threshold*h:
                    continue

            found.append(event(kind, t, s, direction, degenerate=degenerate, value=value))

    # drop duplicates from step boundaries
    found.sort(key=lambda e: (e.kind, e.t))
    unique = []
    for e in found:
        if unique and unique[-1].kind == e.kind and abs(unique[-1].t - e.t) <= 1e-12*max(1.0, abs(e.t)):
            continue
        unique.append(e)

    degenerate = [e for e in unique if e.degenerate]
    if degenerate:
        warnings.warn(f'{len(degenerate)} tangential event(s) flagged degenerate: '
                      f'{sorted(set(e.kind for e in degenerate))}', DegeneracyWarning)

    return sorted(unique, key=lambda e: e.t)

# ---------------------------------------------------------------------------
# Hill collar
# ---------------------------------------------------------------------------

class collarexit(object):
    """Outcome of one Hill collar exit measurement.

    Attributes:
        dU_dt (float): rate of change of U at the exit (transversality)
        eps (float): collar depth
        exited (bool): left {U <= h + K eps} before t_max
        state (state): phase point at exit, or at the end of the run
        status (str): trajectory status
        t_exit (float): exit time measured from the start, nan if no exit
        U0 (float): potential at the start
    """

    def __init__(self, eps, t_exit, state, dU_dt, exited, status, U0):
        self.eps = float(eps)
        self.t_exit = float(t_exit)
        self.state = state
        self.dU_dt = float(dU_dt)
        self.exited = bool(exited)
        self.status = status
        self.U0 = float(U0)

    def __repr__(self):
        return f'collarexit(eps={self.eps:g}, t_exit={self.t_exit:.6g}, exited={self.exited})'

    def to_dict(self):
        return {'eps': self.eps, 't_exit': self.t_exit, 'dU_dt': self.dU_dt,
                'exited': self.exited, 'status': self.status, 'U0': self.U0}

def hill_collar_exit_time(s0, sys, level, eps, K=None, t_max=None, **kwargs):
    """First exit time from the collar {U <= h + K eps} for a start near the Hill boundary.

    Args:
        s0 (state): energy -h, with h <= U(q0) <= h + eps (within band tolerance)
        sys (masssystem): system
        level (energylevel): energy level
        eps (float): collar depth
        K (float|None): collar multiplier, default `COLLAR_DEFAULTS['K']`
        t_max (float|None): integration horizon, default `COLLAR_DEFAULTS['t_max']`
        **kwargs: passed to `propagate`

    Returns:
        collarexit: a run that never exits is returned with `exited=False`
            and reported with a `DiscrepancyWarning` as a counterexample candidate

    Raises:
        InconsistentEnergyError: E(s0) differs from -h
        InputError: U(q0) outside the collar start band
    """
    K = virialab.COLLAR_DEFAULTS['K'] if K is None else K
    t_max = virialab.COLLAR_DEFAULTS['t_max'] if t_max is None else t_max
    band = virialab.HILL_DEFAULTS['band']
    h = level.h

    E = energy_E(s0, sys)
    if abs(E + h) > 1e-9*max(1.0, h):
        raise InconsistentEnergyError(f'Collar start has energy {E}, expected {-h}')
    U0 = potential_U(s0.q, sys)
    if not (h*(1 - band) <= U0 <= (h + eps)*(1 + band)):
        raise InputError(f'Collar start needs h <= U <= h + eps, got U = {U0} (h = {h}, eps = {eps})')

    U_exit = h + K*eps
    stop = [('hill-band-exit', lambda q, v, t: potential_U(q, sys) - U_exit, 1)]
    traj = propagate(s0, sys, s0.t + t_max, events=(), stop=stop, level=level, **kwargs)

    end = traj[-1]
    if traj.status == 'hill-band-exit':
        return collarexit(eps, end.t - s0.t, end, potential_dU_dt(end, sys), True, traj.status, U0)

    warnings.warn(f'No collar exit within t_max={t_max} (eps={eps}, status {traj.status}): '
                  'counterexample candidate', DiscrepancyWarning)
    return collarexit(eps, np.nan, end, potential_dU_dt(end, sys), False, traj.status, U0)

def _collar_worker(args):
    s0, sys, level, eps, K, t_max = args
    return hill_collar_exit_time(s0, sys, level, eps, K=K, t_max=t_max)

def collar_starts(sys, level, eps, n, seed=None):
    """Random states of energy -h with h < U <= h (1 + eps).

    Configurations are Gaussian (CoM-normalized, rejecting near collisions),
    scaled onto U = h (1 + u eps) with u uniform in (0, 1]; velocities have a
    random direction and K = U - h. A fixed seed gives the same directions
    and u for every eps.

    Returns:
        list: `state` objects
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        q = sys.com_normalize(rng.normal(size=sys.shape))
        r = sys.pair_distances(q)
        u = 1 - rng.random()
        v = sys.com_normalize(rng.normal(size=sys.shape))
        if np.min(r) < 0.1*np.mean(r):
            continue
        delta = u*eps*level.h
        q = scale_to_level(q, sys, level.h + delta)
        v = v*np.sqrt(delta/kinetic_K(v, sys))
        out.append(state(0.0, q, v))
    return out

def collar_ensemble(sys, level, eps, n, seed=None, K=None, t_max=None, jobs=1):
    """Collar exit times for an ensemble of random starts at depth eps.

    Note that eps here is relative to h: starts satisfy h < U <= h (1 + eps).

    Returns:
        ensemble: `collarexit` records, in sampling order
    """
    starts = collar_starts(sys, level, eps, n, seed)
    args = [(s, sys, level, eps*level.h, K, t_max) for s in starts]
    return parallel_map(_collar_worker, args, jobs=jobs, desc=f'collar eps={eps:g}')

def collar_scaling(sys, level, eps_values, n, seed=None, K=None, t_max=None, jobs=1):
    """Exit-time table over several collar depths with the fitted law t = C eps^p.

    Args:
        sys (masssystem): system
        level (energylevel): energy level
        eps_values (iterable): relative collar depths
        n (int): ensemble size per depth
        seed (int|None): shared seed, so every depth sees the same starts up to scale

    Returns:
        tuple: (pd.DataFrame, dict) with one row per eps (median, mean, exits,
            failures, ratio of consecutive medians, expected sqrt ratio) and
            the fit `{'exponent': p, 'C': C}`
    """
    rows = []
    for eps in eps_values:
        ens = collar_ensemble(sys, level, eps, n, seed=seed, K=K, t_max=t_max, jobs=jobs)
        t_exit = np.array(ens.t_exit, dtype=float)
        exited = np.array(ens.exited, dtype=bool)
        rows.append({'eps': float(eps),
                     'n': int(n),
                     'n_exit': int(exited.sum()),
                     'n_fail': int((~exited).sum()),
                     'median_t': float(np.median(t_exit[exited])) if exited.any() else np.nan,
                     'mean_t': float(np.mean(t_exit[exited])) if exited.any() else np.nan,
                     'min_abs_dU_dt': float(np.min(np.abs(np.array(ens.dU_dt))[exited])) if exited.any() else np.nan,
                     })

    df = pd.DataFrame(rows)
    df['ratio'] = df['median_t'].shift(1)/df['median_t']
    df['sqrt_ratio'] = np.sqrt(df['eps'].shift(1)/df['eps'])

    good = np.isfinite(df['median_t'].to_numpy())
    if good.sum() >= 2:
        p, logC = np.polyfit(np.log(df['eps'][good]), np.log(df['median_t'][good]), 1)
        fit = {'exponent': float(p), 'C': float(np.exp(logC))}
    else:
        fit = {'exponent': np.nan, 'C': np.nan}
    return (df, fit)

# Virial diagnostics: averages, crossings, thickness, growth of I and escape energetics
# Oct 2026

from .exceptions import *
from .nbodycore import energylevel, potential_U, kinetic_K, moment_I
from .integrate import detect_events
import virialab
import virialab.constants as const
import warnings, json

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar

# ---------------------------------------------------------------------------
# pointwise
# ---------------------------------------------------------------------------

def k_ruler(U_value, level):
    """Keplerian ruler coordinate k = 2h/U - 1.

    Maps the collision locus to -1, the virial surface to 0 and the Hill
    boundary to 1; U = 2h / (1 + k).

    Args:
        U_value (float|np.ndarray): potential values, U >= h
        level (energylevel): energy level

    Raises:
        InputError: some U < h

    Example:
        >>> k_ruler(2.0, energylevel(1.0))
        0.0
        >>> k_ruler(np.inf, energylevel(1.0))
        -1.0
    """
    U = np.asarray(U_value, dtype=float)
    band = virialab.HILL_DEFAULTS['band']
    if np.any(U < level.h*(1 - band)):
        raise InputError(f'k-ruler is defined on the Hill region U >= h = {level.h}')
    k = 2*level.h/U - 1
    if np.ndim(k) == 0:
        return float(k)
    return k

def annulus_membership(q, sys, level, k):
    """Classify a configuration against the virial annulus 2h/(1+k) <= U <= 2h/(1-k).

    Args:
        q (array-like): configuration in the Hill region
        sys (masssystem): system
        level (energylevel): energy level
        k (float): annulus thickness in [0, 1]

    Returns:
        str: `inside`, `boundary-side` (h <= U < 2h/(1+k)) or
            `collision-side` (U > 2h/(1-k))

    Example:
        >>> level = energylevel(1.0)
        >>> annulus_membership(scale_to_level(q, sys, 10.0), sys, level, 0.5)
        'collision-side'
    """
    if not 0 <= k <= 1:
        raise InputError(f'Annulus thickness must be in [0, 1], got {k}')
    U = potential_U(q, sys)
    lower = 2*level.h/(1 + k)
    upper = np.inf if k == 1 else 2*level.h/(1 - k)

    if U < lower:   return 'boundary-side'
    if U > upper:   return 'collision-side'
    return 'inside'

# ---------------------------------------------------------------------------
# averages and thickness
# ---------------------------------------------------------------------------

def _window(traj, T=None, one_sided=False, t_center=None, window=None):
    # resolve the averaging window to (t0, t1)
    if window is not None:
        t0, t1 = float(window[0]), float(window[1])
    elif T is None:
        t0, t1 = traj.t0, traj.t1
    else:
        if t_center is None:
            t_center = 0.0 if traj.t0 <= 0 <= traj.t1 else traj.t0
        t0 = t_center if one_sided else t_center - T
        t1 = t_center + T
    if not t1 > t0:
        raise SpanError(f'Empty window [{t0}, {t1}]')
    traj._check_span(t0, t1)
    return (max(t0, traj.t0), min(t1, traj.t1))

def windowed_averages(traj, T=None, one_sided=False, t_center=None, window=None):
    """Time averages of K and U and the virial residual 2<K> - <U>.

    Args:
        traj (trajectory): solution with dense output
        T (float|None): half-width of the window [t_c - T, t_c + T], or the
            length of [t_c, t_c + T] when one_sided. None uses the full span
        one_sided (bool): average over the positive-time half only
        t_center (float|None): window center t_c, default 0 if inside the span
        window (tuple|None): explicit (t0, t1), overrides T

    Returns:
        tuple: (avg_K, avg_U, residual)

    Raises:
        SpanError: window exceeds the trajectory span

    Example:
        >>> avg_K, avg_U, residual = windowed_averages(traj, window=(0, period))
    """
    t0, t1 = _window(traj, T, one_sided, t_center, window)
    sys = traj.sys
    avg = traj.average(lambda q, v: np.stack((kinetic_K(v, sys), potential_U(q, sys)), axis=-1), t0, t1)
    avg_K, avg_U = float(avg[0]), float(avg[1])
    return (avg_K, avg_U, 2*avg_K - avg_U)

def _U_extremes(traj, t0, t1):
    # min and max of U on [t0, t1], polished about the sampled extremes
    sys = traj.sys
    sub = virialab.EVENT_DEFAULTS['subdivisions']
    inner = traj.t[(traj.t > t0) & (traj.t < t1)]
    bps = np.concatenate(([t0], inner, [t1]))
    frac = np.linspace(0, 1, sub + 1)[:-1]
    grid = np.concatenate(((bps[:-1, None] + np.diff(bps)[:, None]*frac).ravel(), [t1]))
    U = potential_U(traj.qv(grid)[0], sys)

    def Ut(t):
        return float(potential_U(traj.qv(t)[0], sys)[0])

    out = []
    for sign, k in ((1, int(np.argmin(U))), (-1, int(np.argmax(U)))):
        best = U[k]
        if 0 < k < len(grid) - 1:
            res = minimize_scalar(lambda t: sign*Ut(t), bounds=(grid[k - 1], grid[k + 1]),
                                  method='bounded', options={'xatol': 1e-13})
            best = min(sign*U[k], res.fun)*sign
        out.append(best)
    return tuple(out)

def thickness(traj, level=None, window=None):
    """Windowed thickness: smallest k with 2h/(1+k) <= U <= 2h/(1-k) on the window.

    k = max |2h/U - 1| over the window, from the sampled and polished
    extremes of U. A finite window gives a lower bound on the orbit's
    thickness.

    Args:
        traj (trajectory): solution of energy -h
        level (energylevel|None): energy level, default from the initial energy
        window (tuple|None): (t0, t1), default the full span

    Returns:
        float: k in [0, 1]

    Raises:
        InconsistentEnergyError: energy differs from -h, or U < h encountered
    """
    if level is None:
        if not traj.E0 < 0:
            raise InconsistentEnergyError(f'Thickness needs negative energy, E0 = {traj.E0}')
        level = energylevel.from_energy(traj.E0)
    h = level.h
    if abs(traj.E0 + h) > max(1e-6*h, 10*traj.energy_drift):
        raise InconsistentEnergyError(f'Trajectory energy {traj.E0} is not -h = {-h}')

    t0, t1 = _window(traj, window=window)
    U_min, U_max = _U_extremes(traj, t0, t1)
    if U_min < h*(1 - 1e-8):
        raise InconsistentEnergyError(f'U = {U_min} < h = {h} encountered: trajectory leaves the Hill region')

    k = max(2*h/U_min - 1, 1 - 2*h/U_max)
    return float(np.clip(k, 0, 1))

# ---------------------------------------------------------------------------
# growth of I
# ---------------------------------------------------------------------------

class growthrecord(object):
    """Classification of the growth of I(t) on the tail of a window.

    Attributes:
        C (float): leading coefficient of I ~ C t^2 (quadratic growth only)
        classification (str): `bounded`, `subquadratic` or `quadratic`
        exponent (float): fitted exponent of I ~ t^p
        low_confidence (bool): window shorter than `POLLARD_DEFAULTS['T_min']`
        span (float): window length
    """

    def __init__(self, classification, exponent, C, low_confidence, span):
        self.classification = classification
        self.exponent = float(exponent)
        self.C = float(C)
        self.low_confidence = bool(low_confidence)
        self.span = float(span)

    def __repr__(self):
        c = f'({self.C:.6g})' if self.classification == 'quadratic' else ''
        low = ', low confidence' if self.low_confidence else ''
        return f'growth {self.classification}{c}, exponent {self.exponent:.4f}{low}'

    def to_dict(self):
        return {'classification': self.classification, 'exponent': self.exponent,
                'C': self.C, 'low_confidence': self.low_confidence, 'span': self.span}

def pollard_classify(traj, t_origin=None, window=None, tail_fraction=None, margin=None,
                     T_min=None, blocks=None):
    """Classify I(t) growth as bounded, subquadratic or quadratic.

    Block means of I on the tail of the window are fit to log I = p log t + c,
    with t measured from t_origin. Exponents within `margin` of 0 are bounded,
    within `margin` of 2 quadratic (with C from a quadratic fit of I on the
    tail); the rest subquadratic. Parabolic escape gives p = 4/3.

    Args:
        traj (trajectory): solution
        t_origin (float|None): time origin, default the window start
        window (tuple|None): (t0, t1), default the forward part of the span
            from t_origin
        tail_fraction, margin, T_min, blocks: default `POLLARD_DEFAULTS`

    Returns:
        growthrecord
    """
    opts = virialab.POLLARD_DEFAULTS
    tail_fraction = opts['tail_fraction'] if tail_fraction is None else tail_fraction
    margin = opts['margin'] if margin is None else margin
    T_min = opts['T_min'] if T_min is None else T_min
    blocks = opts['blocks'] if blocks is None else blocks

    t0, t1 = _window(traj, window=window)
    if t_origin is None:
        t_origin = t0
    span = t1 - t0
    low = span < T_min
    if low:
        warnings.warn(f'Growth classification on a window of {span:.4g} < T_min = {T_min}: '
                      'low confidence', ConvergenceWarning)

    ta = t1 - tail_fraction*span
    t = np.linspace(ta, t1, blocks*32 + 1)
    I = moment_I(traj.qv(t)[0], traj.sys)

    # block means
    tb = t[:-1].reshape(blocks, 32).mean(axis=1)
    Ib = I[:-1].reshape(blocks, 32).mean(axis=1)
    s = np.abs(tb - t_origin)
    good = s > 0
    p, _ = np.polyfit(np.log(s[good]), np.log(Ib[good]), 1)

    if abs(p) < margin:
        klass, C = 'bounded', np.nan
    elif p > 2 - margin:
        klass = 'quadratic'
        C = np.polyfit(np.abs(t - t_origin), I, 2)[0]
    else:
        klass, C = 'subquadratic', np.nan

    return growthrecord(klass, p, C, low, span)

# ---------------------------------------------------------------------------
# escape
# ---------------------------------------------------------------------------

def jacobi_split(q, v, sys, escaper):
    """Jacobi vector of one body against the center of mass of the others.

    Args:
        q (np.ndarray): positions, shape (..., n_bodies, dim)
        v (np.ndarray): velocities, same shape
        sys (masssystem): system
        escaper (int): index of the separated body

    Returns:
        dict: `R`, `V` (relative position and velocity, shape (..., dim)),
            `mu` (reduced mass m_e M_rest / M), and for three bodies the bound
            pair elements `pair_energy` and `pair_a` (semi-major axis, inf if
            the pair is unbound)
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    m = sys.masses
    rest = [a for a in range(sys.n_bodies) if a != escaper]
    M_rest = m[rest].sum()
    me = m[escaper]

    com = np.einsum('a,...ad->...d', m[rest], q[..., rest, :])/M_rest
    vcom = np.einsum('a,...ad->...d', m[rest], v[..., rest, :])/M_rest
    out = {'R': q[..., escaper, :] - com,
           'V': v[..., escaper, :] - vcom,
           'mu': me*M_rest/sys.total_mass}

    if len(rest) == 2:
        a, b = rest
        r = np.linalg.norm(q[..., b, :] - q[..., a, :], axis=-1)
        w2 = np.sum((v[..., b, :] - v[..., a, :])**2, axis=-1)
        mu_p = m[a]*m[b]/(m[a] + m[b])
        Ep = 0.5*mu_p*w2 - sys.G*m[a]*m[b]/r**sys.alpha
        with np.errstate(divide='ignore'):
            pair_a = np.where(Ep < 0, sys.G*m[a]*m[b]/(2*np.abs(Ep)), np.inf)
        out['pair_energy'] = Ep
        out['pair_a'] = pair_a
    return out

class escaperecord(object):
    """Hyperbolic-elliptic escape energetics.

    Attributes:
        escaper (int): escaping body
        K_hyper_minus (float): 1/2 mu v_inf_minus^2 (nan if one-sided)
        K_hyper_plus (float): 1/2 mu v_inf_plus^2
        mu (float): reduced mass of the escaper against the pair
        one_sided (bool): averages over the positive-time half only
        pair_a (float): semi-major axis of the bound pair at the end
        rel_error (float): |residual - target| / target
        residual (float): 2<K> - <U> over the window
        separation_ratio (float): |R| / pair_a at the end
        target (float): 2 K_hyper (one-sided) or K_hyper_plus + K_hyper_minus
        v_inf_minus (float): asymptotic speed in negative time (nan if one-sided)
        v_inf_plus (float): asymptotic speed in positive time
    """

    def __init__(self, **kwargs):
        for key, value in kwargs.items():
            setattr(self, key, value)

    def __repr__(self):
        return (f'escaperecord(escaper={self.escaper}, v_inf+={self.v_inf_plus:.6g}, '
                f'residual={self.residual:.6g}, target={self.target:.6g})')

    def to_dict(self):
        out = {}
        for key, value in self.__dict__.items():
            if isinstance(value, (bool, np.bool_)):
                out[key] = bool(value)
            elif isinstance(value, (int, np.integer)):
                out[key] = int(value)
            else:
                out[key] = float(value)
        return out

def _escape_side(traj, escaper, t_lo, t_hi, sign):
    # check escape on one side and fit v_inf^2 from |V|^2 = a + b / |R|
    opts = virialab.ESCAPE_DEFAULTS
    sys = traj.sys
    span = t_hi - t_lo

    # sustained recession over the last part of this side
    if sign > 0:
        ts = np.linspace(t_hi - opts['sustain_fraction']*span, t_hi, 64)
        tf = np.linspace(t_hi - opts['fit_fraction']*span, t_hi, 256)
        t_end = t_hi
    else:
        ts = np.linspace(t_lo, t_lo + opts['sustain_fraction']*span, 64)
        tf = np.linspace(t_lo, t_lo + opts['fit_fraction']*span, 256)
        t_end = t_lo

    q, v = traj.qv(ts)
    split = jacobi_split(q, v, sys, escaper)
    radial = sign*np.sum(split['R']*split['V'], axis=-1)

    qe, ve = traj.qv(t_end)
    end = jacobi_split(qe[0], ve[0], sys, escaper)
    Rn = float(np.linalg.norm(end['R']))
    pair_a = float(end.get('pair_a', np.nan))
    ratio = Rn/pair_a

    if not (np.isfinite(pair_a) and ratio > opts['separation_factor'] and np.all(radial > 0)):
        raise ClassificationError(f'No hyperbolic-elliptic escape of body {escaper} '
                                  f'(|R|/a = {ratio:.3g}, receding = {bool(np.all(radial > 0))})')

    q, v = traj.qv(tf)
    split = jacobi_split(q, v, sys, escaper)
    V2 = np.sum(split['V']**2, axis=-1)
    invR = 1/np.linalg.norm(split['R'], axis=-1)
    A = np.stack((np.ones_like(invR), invR), axis=-1)
    (vinf2, _), *_ = np.linalg.lstsq(A, V2, rcond=None)
    if not vinf2 > 0:
        raise ClassificationError(f'Fitted v_inf^2 = {vinf2:.3g} is not positive')
    return (float(np.sqrt(vinf2)), float(split['mu']), pair_a, ratio)

def hyperbolic_virial(traj, escaper=None, one_sided=True, t_center=None):
    """Check 2<K> - <U> = 2 K_hyper (one-sided) or K_hyper+ + K_hyper- (two-sided).

    The escaping body is separated from the bound pair by its Jacobi
    vector; v_inf comes from fitting |V|^2 = v_inf^2 + b/|R| on the tail.
    Escape requires |R| above `ESCAPE_DEFAULTS['separation_factor']` pair
    semi-major axes with outward radial speed over the sustain fraction.

    Args:
        traj (trajectory): three-body solution
        escaper (int|None): escaping body, default the one farthest from the
            others at the end of the run
        one_sided (bool): use [t_c, t1] only; otherwise [t0, t1] with escape
            required at both ends
        t_center (float|None): start of the one-sided window, default 0 if
            inside the span

    Returns:
        escaperecord

    Raises:
        ClassificationError: trajectory is not hyperbolic-elliptic
    """
    sys = traj.sys
    if sys.n_bodies != 3:
        raise ClassificationError('Hyperbolic-elliptic splitting needs three bodies')

    if t_center is None:
        t_center = 0.0 if traj.t0 <= 0 < traj.t1 else traj.t0

    if escaper is None:
        qe = traj.q[-1]
        escaper = int(np.argmax([np.linalg.norm(jacobi_split(qe, traj.v[-1], sys, e)['R'])
                                 for e in range(3)]))

    if one_sided:
        v_p, mu, pair_a, ratio = _escape_side(traj, escaper, t_center, traj.t1, +1)
        v_m = np.nan
        K_p = 0.5*mu*v_p**2
        K_m = np.nan
        target = 2*K_p
        window = (t_center, traj.t1)
    else:
        v_p, mu, pair_a, ratio = _escape_side(traj, escaper, t_center, traj.t1, +1)
        v_m, _, _, _ = _escape_side(traj, escaper, traj.t0, t_center, -1)
        K_p = 0.5*mu*v_p**2
        K_m = 0.5*mu*v_m**2
        target = K_p + K_m
        window = (traj.t0, traj.t1)

    _, _, residual = windowed_averages(traj, window=window)
    return escaperecord(escaper=escaper, v_inf_plus=v_p, v_inf_minus=v_m,
                        K_hyper_plus=K_p, K_hyper_minus=K_m, mu=mu,
                        one_sided=one_sided, residual=residual, target=target,
                        rel_error=abs(residual - target)/target,
                        pair_a=pair_a, separation_ratio=ratio,
                        separation_factor=virialab.ESCAPE_DEFAULTS['separation_factor'])

# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def is_periodic(traj, period, t_start=None, tol=1e-6):
    """Phase-space closure test q(t + P) = q(t), v(t + P) = v(t).

    A periodic solution must have negative energy; a closed orbit with
    E >= 0 raises.

    Returns:
        tuple: (bool, closure distance in the mass metric)

    Raises:
        InconsistentEnergyError: closure verified with E >= 0
    """
    t_start = traj.t0 if t_start is None else t_start
    a = traj(t_start)
    b = traj(t_start + period)
    sys = traj.sys
    dq = b.q - a.q
    dv = b.v - a.v
    closure = float(np.sqrt(sys.mass_inner(dq, dq) + sys.mass_inner(dv, dv)))
    closed = closure < tol
    if closed and not traj.E0 < 0:
        raise InconsistentEnergyError(f'Closed orbit with non-negative energy {traj.E0}')
    return (closed, closure)

class virialreport(object):
    """Virial diagnostics of one trajectory window.

    Attributes:
        avg_K (float): time average of K
        avg_U (float): time average of U
        crossings (int): transverse virial crossings in the window
        degenerate_crossings (int): tangential contacts with U = 2h
        E (float): energy
        escape (escaperecord|None): escape energetics, if requested and found
        growth (growthrecord): growth of I
        h (float): level parameter
        residual (float): 2 avg_K - avg_U
        thickness_k (float): windowed thickness
        U_min_ratio (float): min U / 2h on the window; above 1 means the
            window never reaches the virial surface
        window (tuple): (t0, t1)
    """

    def __init__(self, **kwargs):
        self.escape = None
        for key, value in kwargs.items():
            setattr(self, key, value)

    def __repr__(self):
        return (f'virialreport(window={self.window}, residual={self.residual:.6g}, '
                f'crossings={self.crossings}, k={self.thickness_k:.6g}, {self.growth.classification})')

    def to_dict(self):
        d = {'window': [float(self.window[0]), float(self.window[1])],
             'avg_K': float(self.avg_K),
             'avg_U': float(self.avg_U),
             'residual': float(self.residual),
             'crossings': int(self.crossings),
             'degenerate_crossings': int(self.degenerate_crossings),
             'thickness_k': float(self.thickness_k),
             'thickness_label': 'windowed thickness',
             'U_min_ratio': float(self.U_min_ratio),
             'E': float(self.E),
             'h': float(self.h),
             'growth': self.growth.to_dict(),
             'escape': None if self.escape is None else self.escape.to_dict()}
        return d

    def to_json(self, path=None, header=None):
        """JSON document with a provenance block; written to path if given"""
        doc = {'provenance': dict(header or {}), 'report': self.to_dict()}
        doc['provenance'].setdefault('schema_version', const.SCHEMA_VERSION)
        text = json.dumps(doc, sort_keys=True, indent=1) + '\n'
        if path is not None:
            with open(path, 'w') as fid:
                fid.write(text)
        return text

def virial_report(traj, level=None, window=None, escape=False, one_sided=True, t_origin=None):
    """Assemble averages, crossings, thickness, growth and optional escape data.

    Args:
        traj (trajectory): solution of negative energy
        level (energylevel|None): energy level, default from the initial energy
        window (tuple|None): (t0, t1), default full span
        escape (bool): attempt the hyperbolic-elliptic analysis; a
            non-escaping run leaves `escape` as None
        one_sided (bool): one-sided escape averages
        t_origin (float|None): time origin for the growth fit

    Returns:
        virialreport
    """
    if level is None:
        if not traj.E0 < 0:
            raise InconsistentEnergyError(f'Virial report needs negative energy, E0 = {traj.E0}')
        level = energylevel.from_energy(traj.E0)
    t0, t1 = _window(traj, window=window)

    avg_K, avg_U, residual = windowed_averages(traj, window=(t0, t1))

    events = detect_events(traj.window(t0, t1), ('virial-crossing',), level=level)
    crossings = sum(not e.degenerate for e in events)
    degenerate = sum(e.degenerate for e in events)

    U_min, _ = _U_extremes(traj, t0, t1)
    report = virialreport(window=(t0, t1), avg_K=avg_K, avg_U=avg_U, residual=residual,
                          crossings=crossings, degenerate_crossings=degenerate,
                          thickness_k=thickness(traj, level, window=(t0, t1)),
                          U_min_ratio=U_min/(2*level.h), E=traj.E0, h=level.h,
                          growth=pollard_classify(traj, t_origin=t_origin, window=(t0, t1)))

    if escape:
        try:
            report.escape = hyperbolic_virial(traj, one_sided=one_sided)
        except ClassificationError as err:
            warnings.warn(f'Escape analysis skipped: {err}', DiscrepancyWarning)
    return report

def reports_to_dataframe(reports):
    """Flatten virial reports into one row each (growth and escape columns prefixed)"""
    rows = []
    for r in reports:
        d = r.to_dict()
        row = {k: v for k, v in d.items() if k not in ('growth', 'escape', 'window')}
        row['t0'], row['t1'] = d['window']
        row.update({f'growth_{k}': v for k, v in d['growth'].items()})
        if d['escape'] is not None:
            row.update({f'escape_{k}': v for k, v in d['escape'].items()})
        rows.append(row)
    df = pd.DataFrame(rows)
    df.index.name = 'member'
    return df

# Scenario files: parsing, validation, defaults and the resolved run description
# Oct 2026

from .exceptions import *
from .nbodycore import masssystem, state, energylevel, energy_E, potential_U
from .integrate import EVENT_KINDS, collar_starts
from .brake import boundary_seeds
from . import families
import virialab
import virialab.constants as const
import tomllib, hashlib, json, os, copy

import numpy as np

INITIAL_KINDS = ('explicit', 'brake', 'family', 'ensemble')
FAMILY_KINDS = ('lagrange', 'euler', 'kepler', 'homographic', 'polygon')
SAMPLER_KINDS = ('turnaround', 'collar', 'boundary')
ANALYSIS_KINDS = ('virial-report', 'thickness', 'pollard', 'syzygy', 'jm-length',
                  'brake-symmetry', 'shape-curve')
OUTPUT_FORMATS = ('csv', 'json', 'svg')

# allowed keys and their defaults; None marks an optional key without default
_SYSTEM = {'masses': None, 'G': 1.0, 'dim': 2, 'alpha': 1.0}
_INITIAL = {'kind': None, 'q': None, 'v': None, 't': 0.0,
            'family': None, 'h': None, 'e': 0.0, 'ordering': [0, 1, 2],
            'J': None, 'J_fraction': None, 'cc': 'lagrange',
            'sampler': None, 'n': 16, 'eps': 1e-3, 'U_factors': [1.0, 4.0]}
_RUN = {'t_final': None, 'periods': None, 'two_sided': False, 'rtol': None,
        'atol': None, 'events': None, 'sundman': None, 'max_steps': None, 'r_min': None}
_ANALYSIS = {'kind': None, 'window': 'full', 'escape': False, 'one_sided': True, 'n': 2001}
_OUTPUT = {'directory': None, 'formats': ['csv', 'json']}
_TOP = {'name', 'seed', 'system', 'initial', 'run', 'analyses', 'output'}

# ---------------------------------------------------------------------------
# field checks
# ---------------------------------------------------------------------------

def _unknown(section, allowed, prefix):
    for key in section:
        if key not in allowed:
            raise ScenarioError(f'unknown key, expected one of {sorted(allowed)}', f'{prefix}.{key}')

def _table(doc, key, required=True):
    if key not in doc:
        if required:
            raise ScenarioError('missing section', key)
        return {}
    if not isinstance(doc[key], dict):
        raise ScenarioError('must be a table', key)
    return doc[key]

def _number(value, field, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f'expected a number, got {value!r}', field)
    if integer and not isinstance(value, int):
        raise ScenarioError(f'expected an integer, got {value!r}', field)
    if not np.isfinite(value):
        raise ScenarioError(f'must be finite, got {value!r}', field)
    if positive and not value > 0:
        raise ScenarioError(f'must be positive, got {value!r}', field)
    return value

def _flag(value, field):
    if not isinstance(value, bool):
        raise ScenarioError(f'expected true or false, got {value!r}', field)
    return value

def _choice(value, choices, field):
    if value not in choices:
        raise ScenarioError(f'expected one of {list(choices)}, got {value!r}', field)
    return value

def _array(value, shape, field):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError('expected a numeric array', field) from None
    if arr.shape != shape:
        raise ScenarioError(f'expected shape {shape}, got {arr.shape}', field)
    if not np.all(np.isfinite(arr)):
        raise ScenarioError('entries must be finite', field)
    return arr.tolist()

# ---------------------------------------------------------------------------
# section resolution
# ---------------------------------------------------------------------------

def _resolve_system(doc):
    sec = _table(doc, 'system')
    _unknown(sec, _SYSTEM, 'system')
    out = {**_SYSTEM, **sec}

    masses = out['masses']
    if masses is None:
        raise ScenarioError('required', 'system.masses')
    if not isinstance(masses, list) or len(masses) < 2:
        raise ScenarioError('expected a list of at least two masses', 'system.masses')
    out['masses'] = [float(_number(m, f'system.masses[{i}]', positive=True))
                     for i, m in enumerate(masses)]
    out['G'] = float(_number(out['G'], 'system.G', positive=True))
    out['dim'] = _choice(_number(out['dim'], 'system.dim', integer=True), (2, 3), 'system.dim')
    out['alpha'] = float(_number(out['alpha'], 'system.alpha', positive=True))
    return out

def _resolve_initial(doc, system):
    sec = _table(doc, 'initial')
    _unknown(sec, _INITIAL, 'initial')
    kind = _choice(sec.get('kind'), INITIAL_KINDS, 'initial.kind')
    shape = (len(system['masses']), system['dim'])
    out = {'kind': kind}

    # keys meaningful for each kind; anything else given is an error
    used = {'explicit': ('q', 'v', 't'),
            'brake': ('q',),
            'family': ('family', 'h', 'e', 'ordering', 'J', 'J_fraction', 'cc'),
            'ensemble': ('sampler', 'h', 'n', 'eps', 'U_factors')}[kind]
    for key in sec:
        if key != 'kind' and key not in used:
            raise ScenarioError(f'not used by initial.kind = {kind!r}', f'initial.{key}')

    if kind in ('explicit', 'brake'):
        if 'q' not in sec:
            raise ScenarioError('required', 'initial.q')
        out['q'] = _array(sec['q'], shape, 'initial.q')
    if kind == 'explicit':
        v = sec.get('v', np.zeros(shape).tolist())
        out['v'] = _array(v, shape, 'initial.v')
        out['t'] = float(_number(sec.get('t', 0.0), 'initial.t'))

    if kind in ('family', 'ensemble'):
        if 'h' not in sec:
            raise ScenarioError('required', 'initial.h')
        out['h'] = float(_number(sec['h'], 'initial.h', positive=True))

    if kind == 'family':
        fam = _choice(sec.get('family'), FAMILY_KINDS, 'initial.family')
        out['family'] = fam
        n = len(system['masses'])
        if fam == 'kepler':
            if n != 2:
                raise ScenarioError(f'kepler needs two bodies, got {n}', 'system.masses')
            e = float(_number(sec.get('e', 0.0), 'initial.e'))
            if not 0 <= e < 1:
                raise ScenarioError(f'eccentricity must lie in [0, 1), got {e}', 'initial.e')
            out['e'] = e
        elif fam in ('lagrange', 'euler') and n != 3:
            raise ScenarioError(f'{fam} needs three bodies, got {n}', 'system.masses')
        elif fam == 'polygon' and len(set(system['masses'])) != 1:
            raise ScenarioError('polygon needs equal masses', 'system.masses')

        if fam == 'euler':
            ordering = sec.get('ordering', _INITIAL['ordering'])
            if sorted(ordering) != [0, 1, 2]:
                raise ScenarioError(f'expected a permutation of [0, 1, 2], got {ordering!r}',
                                    'initial.ordering')
            out['ordering'] = list(ordering)

        if fam == 'homographic':
            out['cc'] = _choice(sec.get('cc', 'lagrange'), ('lagrange', 'euler', 'polygon'), 'initial.cc')
            if 'J' in sec and 'J_fraction' in sec:
                raise ScenarioError('give J or J_fraction, not both', 'initial.J')
            if 'J' in sec:
                out['J'] = float(_number(sec['J'], 'initial.J'))
            else:
                frac = float(_number(sec.get('J_fraction', 1.0), 'initial.J_fraction'))
                if not 0 < abs(frac) <= 1:
                    raise ScenarioError(f'must satisfy 0 < |J_fraction| <= 1, got {frac}',
                                        'initial.J_fraction')
                out['J_fraction'] = frac
        if system['alpha'] != 1:
            raise ScenarioError('families need alpha = 1', 'system.alpha')

    if kind == 'ensemble':
        out['sampler'] = _choice(sec.get('sampler'), SAMPLER_KINDS, 'initial.sampler')
        out['n'] = _number(sec.get('n', 16), 'initial.n', positive=True, integer=True)
        if out['sampler'] == 'collar':
            out['eps'] = float(_number(sec.get('eps', 1e-3), 'initial.eps', positive=True))
        if out['sampler'] == 'turnaround':
            U_factors = sec.get('U_factors', _INITIAL['U_factors'])
            if not (isinstance(U_factors, list) and len(U_factors) == 2):
                raise ScenarioError('expected [low, high]', 'initial.U_factors')
            lo, hi = (float(_number(u, 'initial.U_factors', positive=True)) for u in U_factors)
            if not 1 <= lo <= hi:
                raise ScenarioError(f'need 1 <= low <= high, got {U_factors}', 'initial.U_factors')
            out['U_factors'] = [lo, hi]
    return out

def _resolve_run(doc, initial):
    sec = _table(doc, 'run')
    _unknown(sec, _RUN, 'run')
    out = {}
    defaults = virialab.PROPAGATE_DEFAULTS

    if 't_final' in sec and 'periods' in sec:
        raise ScenarioError('give t_final or periods, not both', 'run.periods')
    if 'periods' in sec:
        if initial['kind'] != 'family':
            raise ScenarioError('periods needs initial.kind = "family"', 'run.periods')
        out['periods'] = float(_number(sec['periods'], 'run.periods', positive=True))
    elif 't_final' in sec:
        out['t_final'] = float(_number(sec['t_final'], 'run.t_final', positive=True))
    elif initial['kind'] != 'brake':
        raise ScenarioError('required (or run.periods for families)', 'run.t_final')

    out['two_sided'] = _flag(sec.get('two_sided', initial['kind'] == 'brake'), 'run.two_sided')
    for key in ('rtol', 'atol', 'r_min'):
        out[key] = float(_number(sec.get(key, defaults[key]), f'run.{key}', positive=True))
    out['max_steps'] = _number(sec.get('max_steps', defaults['max_steps']), 'run.max_steps',
                               positive=True, integer=True)
    out['sundman'] = _flag(sec.get('sundman', defaults['sundman']), 'run.sundman')

    events = sec.get('events', list(defaults['events']))
    if not isinstance(events, list):
        raise ScenarioError('expected a list of event kinds', 'run.events')
    for i, e in enumerate(events):
        _choice(e, EVENT_KINDS, f'run.events[{i}]')
    out['events'] = list(events)
    return out

def _resolve_analyses(doc, system, initial):
    secs = doc.get('analyses', [])
    if not isinstance(secs, list):
        raise ScenarioError('expected an array of tables [[analyses]]', 'analyses')
    out = []
    planar3 = len(system['masses']) == 3 and system['dim'] == 2
    for i, sec in enumerate(secs):
        prefix = f'analyses[{i}]'
        if not isinstance(sec, dict):
            raise ScenarioError('expected a table', prefix)
        _unknown(sec, _ANALYSIS, prefix)
        item = {**_ANALYSIS, **sec}
        kind = _choice(item['kind'], ANALYSIS_KINDS, f'{prefix}.kind')

        window = item['window']
        if window != 'full':
            if not (isinstance(window, list) and len(window) == 2):
                raise ScenarioError('expected "full" or [t0, t1]', f'{prefix}.window')
            window = [float(_number(w, f'{prefix}.window')) for w in window]
            if not window[1] > window[0]:
                raise ScenarioError(f'empty window {window}', f'{prefix}.window')
        item['window'] = window
        _flag(item['escape'], f'{prefix}.escape')
        _flag(item['one_sided'], f'{prefix}.one_sided')
        _number(item['n'], f'{prefix}.n', positive=True, integer=True)

        if kind in ('syzygy', 'shape-curve') and not planar3:
            raise ScenarioError(f'{kind} needs three bodies in the plane', f'{prefix}.kind')
        if kind == 'brake-symmetry' and initial['kind'] != 'brake':
            raise ScenarioError('brake-symmetry needs initial.kind = "brake"', f'{prefix}.kind')
        out.append(item)
    return out

def _resolve_output(doc, name):
    sec = _table(doc, 'output', required=False)
    _unknown(sec, _OUTPUT, 'output')
    directory = sec.get('directory')
    if directory is None:
        directory = os.path.join(os.environ.get('VIRIALAB_OUT', 'virialab-out'), name)
    elif not isinstance(directory, str):
        raise ScenarioError('expected a path', 'output.directory')

    formats = sec.get('formats', _OUTPUT['formats'])
    if not isinstance(formats, list):
        raise ScenarioError(f'expected a list drawn from {list(OUTPUT_FORMATS)}', 'output.formats')
    for i, f in enumerate(formats):
        _choice(f, OUTPUT_FORMATS, f'output.formats[{i}]')
    return {'directory': directory, 'formats': sorted(set(formats))}

# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------

class scenario(object):
    """A validated, fully resolved experiment description.

    Scenarios are TOML documents with the tables `[system]`, `[initial]`,
    `[run]`, optional `[[analyses]]` and `[output]`, and the top-level keys
    `name` and `seed`. Every default is filled in at load time so the
    resolved document, and its hash, describe the run completely.

    Args:
        doc (dict): parsed TOML document
        name (str|None): fallback name when the document has none

    Attributes:
        config (dict): resolved document
        name (str): scenario name
        seed (int): random seed for ensemble samplers

    Raises:
        ScenarioError: with the dotted path of the offending field

    Example:
        >>> sc = scenario.from_file('scenarios/kepler-e05.toml')
        >>> sc.system()
        masssystem(masses=[1.0, 1.0], G=1.0, dim=2, alpha=1.0)
        >>> sc.hash[:10]
    """

    def __init__(self, doc, name=None):
        if not isinstance(doc, dict):
            raise ScenarioError('scenario must be a table')
        for key in doc:
            if key not in _TOP:
                raise ScenarioError(f'unknown key, expected one of {sorted(_TOP)}', key)

        name = doc.get('name', name or 'scenario')
        if not isinstance(name, str) or not name:
            raise ScenarioError('expected a non-empty string', 'name')
        seed = doc.get('seed', 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ScenarioError(f'expected a non-negative integer, got {seed!r}', 'seed')

        system = _resolve_system(doc)
        initial = _resolve_initial(doc, system)
        self.config = {'name': name,
                       'seed': seed,
                       'system': system,
                       'initial': initial,
                       'run': _resolve_run(doc, initial),
                       'analyses': _resolve_analyses(doc, system, initial),
                       'output': _resolve_output(doc, name)}
        self.name = name
        self.seed = seed

    def __repr__(self):
        return f'scenario({self.name!r}, initial={self.config["initial"]["kind"]}, seed={self.seed})'

    @classmethod
    def from_text(cls, text, name=None):
        """Parse a TOML string"""
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as err:
            raise ScenarioError(str(err), field='<parse>') from None
        return cls(doc, name=name)

    @classmethod
    def from_file(cls, path):
        """Parse a TOML file; the file stem is the default name"""
        with open(path, 'rb') as fid:
            data = fid.read()
        try:
            text = data.decode('utf-8')
        except UnicodeDecodeError as err:
            raise ScenarioError(f'not UTF-8 text: {err}', field='<parse>') from None
        return cls.from_text(text, name=os.path.splitext(os.path.basename(path))[0])

    # -----------------------------------------------------------------------

    def resolved(self):
        """Deep copy of the resolved document"""
        return copy.deepcopy(self.config)

    @property
    def hash(self):
        """str: sha1 of the resolved document, output directory excluded"""
        doc = self.resolved()
        doc['output'].pop('directory')
        return hashlib.sha1(json.dumps(doc, sort_keys=True).encode()).hexdigest()

    @property
    def output_dir(self):
        return self.config['output']['directory']

    @property
    def formats(self):
        return tuple(self.config['output']['formats'])

    def override(self, seed=None, tol=None, out=None):
        """Copy with command-line overrides applied.

        Args:
            seed (int|None): random seed
            tol (float|None): relative tolerance; atol becomes tol / 100
            out (str|None): output directory
        """
        new = copy.copy(self)
        new.config = self.resolved()
        if seed is not None:
            new.config['seed'] = new.seed = int(seed)
        if tol is not None:
            if not tol > 0:
                raise ScenarioError(f'must be positive, got {tol}', 'run.rtol')
            new.config['run']['rtol'] = float(tol)
            new.config['run']['atol'] = float(tol)/100
        if out is not None:
            new.config['output']['directory'] = str(out)
        return new

    def provenance(self, **extra):
        """Header block carried by every output file"""
        run = self.config['run']
        head = {'virialab_version': virialab.__version__,
                'schema_version': const.SCHEMA_VERSION,
                'scenario': self.name,
                'scenario_hash': self.hash,
                'seed': self.seed,
                'rtol': run['rtol'],
                'atol': run['atol'],
                'masses': self.config['system']['masses'],
                'G': self.config['system']['G'],
                'dim': self.config['system']['dim'],
                'alpha': self.config['system']['alpha']}
        head.update(extra)
        return head

    # -----------------------------------------------------------------------

    def system(self):
        """masssystem described by [system]"""
        s = self.config['system']
        return masssystem(s['masses'], G=s['G'], dim=s['dim'], alpha=s['alpha'])

    def _cc(self, sys, which):
        ini = self.config['initial']
        if which == 'lagrange':
            if sys.n_bodies != 3:
                raise ScenarioError('lagrange needs three bodies', 'system.masses')
            return families.lagrange_cc(sys.masses, G=sys.G, dim=sys.dim)
        if which == 'euler':
            if sys.n_bodies != 3:
                raise ScenarioError('euler needs three bodies', 'system.masses')
            return families.euler_cc(sys.masses, tuple(ini['ordering']), G=sys.G, dim=sys.dim)
        if len(set(sys.masses.tolist())) != 1:
            raise ScenarioError('polygon needs equal masses', 'system.masses')
        return families.polygon_cc(sys.n_bodies, sys.masses[0], G=sys.G, dim=sys.dim)

    def family_member(self):
        """(centralconfiguration, J) of a family scenario; J is None for relative equilibria"""
        ini = self.config['initial']
        if ini['kind'] != 'family':
            raise ScenarioError('not a family scenario', 'initial.kind')
        sys = self.system()
        level = energylevel(ini['h'])
        fam = ini['family']
        if fam == 'kepler':
            q = np.zeros(sys.shape)
            q[1, 0] = 1.0
            cc = families.centralconfiguration(q, sys)
            return (cc, families.j_max(cc, level)*np.sqrt(1 - ini['e']**2))
        if fam == 'homographic':
            cc = self._cc(sys, ini['cc'])
            J = ini.get('J')
            if J is None:
                J = ini['J_fraction']*families.j_max(cc, level)
            return (cc, J)
        return (self._cc(sys, fam), None)

    def period(self):
        """Family period, or None for other scenarios"""
        if self.config['initial']['kind'] != 'family':
            return None
        cc, _ = self.family_member()
        return families.kepler_period(cc, self.level())

    def t_final(self):
        """Run duration (half-width for two-sided runs), None for the brake default"""
        run = self.config['run']
        if 'periods' in run:
            return run['periods']*self.period()
        return run.get('t_final')

    def level(self):
        """Energy level of the scenario's initial data.

        Explicit states give h = -E, brake starts h = U(q); both must be bound.
        """
        ini = self.config['initial']
        sys = self.system()
        if ini['kind'] in ('family', 'ensemble'):
            return energylevel(ini['h'])
        if ini['kind'] == 'brake':
            return energylevel(potential_U(np.asarray(ini['q']), sys))
        E = energy_E((np.asarray(ini['q']), np.asarray(ini['v'])), sys)
        if not E < 0:
            raise ScenarioError(f'explicit state has E = {E:.6g}, needs E < 0', 'initial.v')
        return energylevel.from_energy(E)

    def initial_states(self):
        """Initial states, one per ensemble member (a single state otherwise)"""
        ini = self.config['initial']
        sys = self.system()
        kind = ini['kind']

        if kind == 'explicit':
            return [state(ini['t'], ini['q'], ini['v'])]
        if kind == 'brake':
            q = sys.com_normalize(sys.check(ini['q']))
            return [state(0.0, q, np.zeros(sys.shape))]

        level = self.level()
        if kind == 'family':
            cc, J = self.family_member()
            if J is None:
                return [families.relative_equilibrium(cc, level)]
            return [families.homographicorbit(cc, J, level).state]

        sampler = ini['sampler']
        if sampler == 'turnaround':
            return families.random_turnaround_states(sys, ini['n'], level, seed=self.seed,
                                                     U_factors=tuple(ini['U_factors']))
        if sampler == 'collar':
            return collar_starts(sys, level, ini['eps'], ini['n'], seed=self.seed)
        return [state(0.0, q, np.zeros(sys.shape))
                for q in boundary_seeds(sys, level, ini['n'], seed=self.seed)]

    def run_options(self):
        """Keyword arguments for `propagate`"""
        run = self.config['run']
        return {'rtol': run['rtol'], 'atol': run['atol'], 'r_min': run['r_min'],
                'max_steps': run['max_steps'], 'sundman': run['sundman'],
                'events': tuple(run['events'])}

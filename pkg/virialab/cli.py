# Command line runner: scenarios, module subcommands, provenance-stamped outputs
# Oct 2026

from .exceptions import *
from .nbodycore import masssystem, energylevel, kinetic_K, potential_U
from .integrate import (trajectory, propagate, propagate_two_sided, collar_scaling)
from .ensemble import parallel_map
from .brake import (brake_start, verify_brake_symmetry, boundary_angle, boundary_seeds,
                    periodic_brake_search, write_catalog)
from .virial import virial_report, thickness, pollard_classify
from .jmgeom import path_from_trajectory, jm_length, geodesic_to_brake
from .shape import syzygy_sequence, shape_curve, hill_mesh, write_obj, mesh_to_dataframe
from .scenario import scenario
from . import families
import virialab
import virialab.constants as const
import argparse, hashlib, json, os, sys, warnings

import numpy as np
import pandas as pd
import matplotlib.pyplot as plt

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3

# errors that mean the input was wrong, as opposed to the file system
VALIDATION_ERRORS = (ScenarioError, InputError, FamilyError, SymmetryError, SingularityError,
                     IntegrationError, InconsistentEnergyError, SpanError)

# an analysis that fails on valid input is recorded in its output with a status
ANALYSIS_ERRORS = (InputError, OptimizationError, IntegrationError, SingularityError, SpanError,
                   SymmetryError, EventError, ClassificationError, InconsistentEnergyError)

def _failure(err, stage):
    warnings.warn(f'{stage} failed: {type(err).__name__}: {err}', ConvergenceWarning)
    return {'status': 'failed', 'error': type(err).__name__, 'message': str(err)}

def new_format(message, category, filename, lineno, line):
    filename = os.path.basename(filename)
    return f'\n{filename}:{lineno}: {category.__name__}: {message}\n'

# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def read_provenance(path):
    """Leading `# key: value` lines of a CSV or OBJ file as a dict (values are JSON)"""
    head = {}
    with open(path) as fid:
        for line in fid:
            if not line.startswith('# '):
                break
            key, _, value = line[2:].partition(': ')
            try:
                head[key] = json.loads(value)
            except json.JSONDecodeError:
                head[key] = value.strip()
    return head

def write_json(doc, path):
    """Deterministic JSON: sorted keys, one-space indent, trailing newline"""
    with open(path, 'w') as fid:
        json.dump(doc, fid, sort_keys=True, indent=1)
        fid.write('\n')

def write_csv(df, path, header, index=False):
    """CSV preceded by `# key: value` provenance lines"""
    with open(path, 'w') as fid:
        for key in sorted(header):
            fid.write(f'# {key}: {json.dumps(header[key], sort_keys=True)}\n')
        df.to_csv(fid, index=index, lineterminator='\n')

def write_jsonl(lines, path, header):
    """JSON lines, the first holding the provenance"""
    with open(path, 'w') as fid:
        fid.write(json.dumps({'provenance': header}, sort_keys=True) + '\n')
        for line in lines:
            fid.write(json.dumps(line, sort_keys=True) + '\n')

def save_svg(fig, path, salt):
    """Save a figure as byte-stable SVG: no date stamp, ids salted by the run hash"""
    with plt.rc_context({'svg.hashsalt': salt}):
        fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)

def _outdir(args, default):
    out = args.out if args.out is not None else os.path.join(os.environ.get('VIRIALAB_OUT', 'virialab-out'), default)
    os.makedirs(out, exist_ok=True)
    return out

def _provenance(args, **extra):
    # header for subcommands driven by flags: the hash covers every flag except paths and workers
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ('out', 'jobs', 'func')}
    head = {'virialab_version': virialab.__version__,
            'schema_version': const.SCHEMA_VERSION,
            'command': args.command,
            'arguments_hash': hashlib.sha1(json.dumps(cfg, sort_keys=True).encode()).hexdigest(),
            'seed': args.seed,
            'rtol': _tolerances(args)['rtol'],
            'atol': _tolerances(args)['atol']}
    head.update(extra)
    return head

def _tolerances(args):
    if args.tol is None:
        return {'rtol': virialab.PROPAGATE_DEFAULTS['rtol'], 'atol': virialab.PROPAGATE_DEFAULTS['atol']}
    return {'rtol': args.tol, 'atol': args.tol/100}

def _system(args):
    return masssystem(args.masses, G=args.G, dim=args.dim)

def _system_header(system):
    return {'masses': system.masses.tolist(), 'G': system.G, 'dim': system.dim, 'alpha': system.alpha}

def _window(text):
    # "full" or "t0,t1"
    if text == 'full':
        return 'full'
    try:
        t0, t1 = (float(x) for x in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected "full" or "t0,t1", got {text!r}') from None
    return [t0, t1]

def plot_energies(t, K, U, I, level=None):
    """K, U and I against time with the Hill and virial levels marked

    Example:
        >>> fig = plot_energies(traj.t, traj.K, traj.U, traj.I, traj.level)
    """
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6, 5))
    ax1.plot(t, U, label='U')
    ax1.plot(t, K, label='K')
    if level is not None:
        ax1.axhline(level.U_hill, color='k', ls=':', lw=0.8, label='h')
        ax1.axhline(level.U_virial, color='k', ls='--', lw=0.8, label='2h')
    ax1.set_ylabel('energy')
    ax1.legend(fontsize='small')
    ax2.plot(t, I, color='C2')
    ax2.set_ylabel('I')
    ax2.set_xlabel('t')
    fig.tight_layout()
    return fig

# ---------------------------------------------------------------------------
# scenario execution
# ---------------------------------------------------------------------------

def analyze(item, traj, level, orbit=None):
    """Run one resolved `[[analyses]]` entry on a trajectory.

    Args:
        item (dict): resolved analysis table
        traj (trajectory): solution
        level (energylevel): energy level
        orbit (brakeorbit|None): needed by `brake-symmetry`

    Returns:
        tuple: (result dict, pd.DataFrame or None for tabular results)
    """
    kind = item['kind']
    window = None if item['window'] == 'full' else tuple(item['window'])
    t0, t1 = window if window is not None else (traj.t0, traj.t1)

    if kind == 'virial-report':
        rep = virial_report(traj, level, window=window, escape=item['escape'],
                            one_sided=item['one_sided'])
        return (rep.to_dict(), None)
    if kind == 'thickness':
        return ({'k': thickness(traj, level, window=window), 'label': 'windowed thickness'}, None)
    if kind == 'pollard':
        return (pollard_classify(traj, window=window).to_dict(), None)
    if kind == 'syzygy':
        return (syzygy_sequence(traj, t0, t1).to_dict(), None)
    if kind == 'jm-length':
        path = path_from_trajectory(traj, t0, t1, n=item['n'], level=level)
        L = float(jm_length(path))
        action = float(np.squeeze(traj.integrate(lambda q, v: 2*kinetic_K(v, traj.sys), t0, t1)))
        return ({'length': L, 'integral_2K': action,
                 'relative_difference': abs(L - action)/action}, None)
    if kind == 'brake-symmetry':
        if orbit is None:
            raise ScenarioError('brake-symmetry needs a brake start', 'analyses')
        return ({'asymmetry': verify_brake_symmetry(orbit),
                 'boundary_angle': boundary_angle(orbit),
                 'collision': orbit.collision,
                 'closest_approach': orbit.closest_approach}, None)
    if kind == 'shape-curve':
        win = traj if window is None else traj.window(t0, t1)
        return ({'n': item['n']}, shape_curve(win, n=item['n']))
    raise ScenarioError(f'unknown analysis {kind!r}', 'analyses')

def integrate_scenario(sc, s0, system=None, level=None):
    """Integrate one initial state as the scenario's [run] table says.

    Returns:
        tuple: (trajectory, brakeorbit or None)
    """
    system = sc.system() if system is None else system
    level = sc.level() if level is None else level
    opts = sc.run_options()
    T = sc.t_final()

    if sc.config['initial']['kind'] == 'brake' or (sc.config['initial'].get('sampler') == 'boundary'
                                                  and sc.config['run']['two_sided']):
        orbit = brake_start(s0.q, system, T=T, **opts)
        return (orbit.traj, orbit)
    if sc.config['run']['two_sided']:
        return (propagate_two_sided(s0, system, T, level=level, **opts), None)
    return (propagate(s0, system, s0.t + T, level=level, **opts), None)

def _member_worker(args):
    # one ensemble member: integrate, analyze, return plain data for the writer
    i, sc, s0 = args
    system = sc.system()
    level = sc.level()
    traj, orbit = integrate_scenario(sc, s0, system, level)
    results = []
    frames = {}
    for j, item in enumerate(sc.config['analyses']):
        try:
            res, df = analyze(item, traj, level, orbit)
        except ANALYSIS_ERRORS as err:
            res, df = (_failure(err, item['kind']), None)
        if df is not None:
            frames[f'{item["kind"]}-{j}'] = df
        results.append({'kind': item['kind'], 'window': item['window'], 'result': res})
    return {'member': i,
            'status': traj.status,
            'energy_drift': traj.energy_drift,
            'frame': traj.to_dataframe() if 'csv' in sc.formats else None,
            'events': [e.to_dict() for e in traj.events],
            'analyses': results,
            'frames': frames,
            'series': (traj.t, traj.K, traj.U, traj.I) if 'svg' in sc.formats else None}

def run_scenario(sc, jobs=1):
    """Execute a scenario and write its output bundle.

    Files, each with a provenance header:

    - `trajectory.csv` (`trajectory-NNN.csv` per ensemble member)
    - `events.json`
    - `analyses.json`
    - `summary.csv` when virial reports are requested for an ensemble
    - `<analysis>-<j>.csv` for tabular analyses (shape curves)
    - `trajectory.svg` when `svg` is among the formats

    Returns:
        dict: the analyses document
    """
    outdir = sc.output_dir
    os.makedirs(outdir, exist_ok=True)
    head = sc.provenance()
    level = sc.level()

    states = sc.initial_states()
    ensemble_run = sc.config['initial']['kind'] == 'ensemble'
    members = parallel_map(_member_worker, [(i, sc, s) for i, s in enumerate(states)],
                           jobs=jobs, desc=sc.name)

    def name(stem, i, ext):
        return os.path.join(outdir, f'{stem}-{i:03d}.{ext}' if ensemble_run else f'{stem}.{ext}')

    for m in members:
        i = m['member']
        if 'csv' in sc.formats:
            write_csv(m['frame'], name('trajectory', i, 'csv'),
                      {**head, 'status': m['status'], 'member': i, 'h': level.h})
            for key, df in m['frames'].items():
                write_csv(df, name(key, i, 'csv'), {**head, 'member': i})
        if 'svg' in sc.formats:
            t, K, U, I = m['series']
            save_svg(plot_energies(t, K, U, I, level), name('trajectory', i, 'svg'), sc.hash)

    doc = {'provenance': head,
           'scenario': sc.resolved(),
           'members': [{'member': m['member'], 'status': m['status'],
                        'energy_drift': m['energy_drift'], 'analyses': m['analyses']}
                       for m in members]}
    if 'json' in sc.formats:
        write_json(doc, os.path.join(outdir, 'analyses.json'))
        write_json({'provenance': head,
                    'members': [{'member': m['member'], 'events': m['events']} for m in members]},
                   os.path.join(outdir, 'events.json'))

    if ensemble_run and 'csv' in sc.formats:
        rows = [{'member': m['member'], 'status': m['status'],
                 **{f'{a["kind"]}_{k}': v for a in m['analyses'] if a['kind'] == 'virial-report'
                    for k, v in a['result'].items() if not isinstance(v, (dict, list))}}
                for m in members]
        write_csv(pd.DataFrame(rows), os.path.join(outdir, 'summary.csv'), head)
    return doc

# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_run(args):
    sc = scenario.from_file(args.scenario).override(seed=args.seed, tol=args.tol, out=args.out)
    run_scenario(sc, jobs=args.jobs)

def cmd_simulate(args):
    sc = scenario.from_file(args.scenario).override(seed=args.seed, tol=args.tol, out=args.out)
    if args.t_final is not None:
        sc.config['run'].pop('periods', None)
        sc.config['run']['t_final'] = args.t_final
    sc.config['analyses'] = []
    run_scenario(sc, jobs=args.jobs)

def cmd_brake_search(args):
    system = _system(args)
    level = energylevel(args.h)
    out = _outdir(args, 'brake-search')
    seeds = boundary_seeds(system, level, args.seeds, seed=args.seed)
    results = periodic_brake_search(seeds, system, level, jobs=args.jobs, maxiter=args.maxiter,
                                    t_max=args.t_max, **_tolerances(args))
    write_catalog(results, os.path.join(out, 'catalog.jsonl'), system,
                  header=_provenance(args, h=level.h, **_system_header(system)))

def cmd_virial_report(args):
    head = read_provenance(args.traj)
    try:
        system = masssystem(head['masses'], G=head.get('G', 1.0), dim=head.get('dim', 2),
                            alpha=head.get('alpha', 1.0))
    except KeyError:
        raise InputError(f'{args.traj} has no masses in its header') from None
    traj = trajectory.from_csv(args.traj, system)
    level = energylevel(head['h']) if 'h' in head else None
    out = _outdir(args, 'virial-report')

    window = None if args.window == 'full' else tuple(args.window)
    report = virial_report(traj, level, window=window, escape=args.escape,
                           one_sided=not args.two_sided)
    report.to_json(os.path.join(out, 'report.json'),
                   header=_provenance(args, source=head.get('scenario_hash'), **_system_header(system)))

def cmd_jm_minimize(args):
    with open(args.point) as fid:
        point = json.load(fid)
    for key in ('q', 'masses'):
        if key not in point:
            raise InputError(f'{args.point} needs the key {key!r}')
    system = masssystem(point['masses'], G=point.get('G', 1.0), dim=point.get('dim', 2),
                        alpha=point.get('alpha', 1.0))
    h = args.h if args.h is not None else point.get('h')
    if h is None:
        raise InputError('energy level missing: pass --h or put "h" in the point file')
    level = energylevel(h)
    q0 = system.check(point['q'])
    U0 = potential_U(q0, system)
    if np.isinf(U0):
        raise SingularityError(f'{args.point} is a collision configuration')
    if U0 < h*(1 - virialab.HILL_DEFAULTS['band']):
        raise InputError(f'{args.point} lies outside the Hill region: U = {U0} < h = {h}')

    out = _outdir(args, 'jm-minimize')
    head = _provenance(args, h=level.h, **_system_header(system))
    try:
        res = geodesic_to_brake(q0, level, system, n_nodes=args.nodes,
                                restarts=args.restarts, seed=args.seed, **_tolerances(args))
    except ANALYSIS_ERRORS as err:
        write_json({'provenance': head, 'geodesic': {**_failure(err, 'geodesic'), 'q0': q0.tolist()}},
                   os.path.join(out, 'geodesic.json'))
        return
    res.to_json(os.path.join(out, 'geodesic.json'), header=head)
    if res.orbit is not None:
        write_csv(res.orbit.to_dataframe(), os.path.join(out, 'brake-orbit.csv'),
                  _provenance(args, h=level.h, status=res.orbit.status, **_system_header(system)))

def _family_cc(args, system):
    if args.family == 'lagrange':
        return families.lagrange_cc(system.masses, G=system.G, dim=system.dim)
    if args.family == 'euler':
        return families.euler_cc(system.masses, tuple(args.ordering), G=system.G, dim=system.dim)
    if args.family == 'polygon':
        if len(set(system.masses.tolist())) != 1:
            raise InputError('polygon needs equal masses')
        return families.polygon_cc(system.n_bodies, system.masses[0], G=system.G, dim=system.dim)
    if system.n_bodies != 2:
        raise InputError(f'kepler needs two bodies, got {system.n_bodies}')
    q = np.zeros(system.shape)
    q[1, 0] = 1.0
    return families.centralconfiguration(q, system)

def cmd_family(args):
    system = _system(args)
    level = energylevel(args.h)
    cc = _family_cc(args, system)
    J_max = families.j_max(cc, level)
    fractions = args.J_fraction or [1.0, 0.75, 0.5, 0.25, 0.0]
    opts = _tolerances(args)

    lines = []
    for frac in fractions:
        orbit = families.homographicorbit(cc, frac*J_max, level)
        line = {'J_fraction': frac, **orbit.to_dict()}
        # collision members (k = 1) are listed but not integrated
        if args.periods > 0 and orbit.k < 1 - 1e-9:
            traj = propagate(orbit.state, system, args.periods*orbit.period, level=level,
                             events=('virial-crossing',), **opts)
            line['thickness_measured'] = thickness(traj, level)
            line['status'] = traj.status
            line['crossings'] = len(traj.events_of('virial-crossing', transverse=True))
        lines.append(line)

    out = _outdir(args, 'family')
    write_jsonl(lines, os.path.join(out, f'{args.family}.jsonl'),
                _provenance(args, h=level.h, **_system_header(system)))

def cmd_escape_scan(args):
    out = _outdir(args, 'escape-scan')
    opts = _tolerances(args)

    if args.isosceles:
        system = masssystem(args.masses, G=args.G, dim=3)
        level = energylevel(args.h)
        df = families.isosceles_escape_scan(system, level, args.a, args.n, args.T,
                                            U_floor=args.U_floor, seed=args.seed, jobs=args.jobs, **opts)
        write_csv(df, os.path.join(out, 'isosceles.csv'),
                  _provenance(args, h=level.h, **_system_header(system)), index=True)
        return

    system = _system(args)
    level = energylevel(args.h)
    head = _provenance(args, h=level.h, **_system_header(system))
    states = families.random_turnaround_states(system, args.n, level, seed=args.seed,
                                               U_factors=tuple(args.U_factors))
    bm = families.birkhoff_moeckel_table(states, system)
    write_csv(bm, os.path.join(out, 'birkhoff-moeckel.csv'), head, index=True)

    summary = {'n': len(states),
               **{f'discrepancies_{name}': int(bm[f'discrepancy_{name}'].sum())
                  for name in families.NORMALIZATIONS},
               **{f'conditions_{name}': int(bm[f'condition_{name}'].sum())
                  for name in families.NORMALIZATIONS}}
    if args.T > 0:
        df = families.escape_scan(states, system, args.T, jobs=args.jobs, **opts)
        write_csv(df, os.path.join(out, 'escape.csv'), head, index=True)
        summary['monotone_fraction'] = df.attrs['monotone_fraction']
    write_json({'provenance': head, 'summary': summary}, os.path.join(out, 'summary.json'))

def cmd_shape_export(args):
    system = _system(args)
    level = energylevel(args.h)
    out = _outdir(args, 'shape-export')
    head = _provenance(args, h=level.h, **_system_header(system))

    meshes = hill_mesh(level, system, resolution=args.resolution, values=args.value, r_max=args.r_max)
    frames = []
    for i, mesh in enumerate(meshes):
        write_obj(mesh, os.path.join(out, f'mesh-{i}-{mesh.label}.obj'), header=head)
        frames.append(mesh_to_dataframe(mesh).assign(mesh=i))
    if 'csv' in args.formats:
        write_csv(pd.concat(frames, ignore_index=True), os.path.join(out, 'mesh.csv'), head)

    if args.traj is not None:
        traj = trajectory.from_csv(args.traj, system)
        write_csv(shape_curve(traj, n=args.n), os.path.join(out, 'shape-curve.csv'), head)
        syzygy_sequence(traj).to_json(os.path.join(out, 'syzygy.json'), header=head)

def cmd_collar_test(args):
    system = _system(args)
    level = energylevel(args.h)
    eps = args.eps or [1e-2, 1e-3, 1e-4]
    out = _outdir(args, 'collar-test')
    head = _provenance(args, h=level.h, **_system_header(system))

    df, fit = collar_scaling(system, level, eps, args.ensemble, seed=args.seed, K=args.K,
                             t_max=args.t_max, jobs=args.jobs)
    write_csv(df, os.path.join(out, 'collar.csv'), head)
    write_json({'provenance': head, 'fit': fit, 'expected_exponent': 0.5},
               os.path.join(out, 'collar.json'))

    if 'svg' in args.formats:
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.loglog(df['eps'], df['median_t'], 'o-', label='median exit time')
        if np.isfinite(fit['C']):
            ax.loglog(df['eps'], fit['C']*df['eps']**fit['exponent'], 'k--', lw=0.8,
                      label=f'fit, p = {fit["exponent"]:.3f}')
        ax.set_xlabel('eps')
        ax.set_ylabel('t_exit')
        ax.legend(fontsize='small')
        fig.tight_layout()
        save_svg(fig, os.path.join(out, 'collar.svg'), head['arguments_hash'])

# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    """Argument parser with one subparser per command"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=None, help='random seed (recorded in every header)')
    common.add_argument('--tol', type=float, default=None, help='relative tolerance; atol is tol/100')
    common.add_argument('--out', default=None, help='output directory (default $VIRIALAB_OUT/<command>)')
    common.add_argument('--jobs', type=int, default=1, help='worker processes')

    system = argparse.ArgumentParser(add_help=False)
    system.add_argument('--masses', type=float, nargs='+', default=[1.0, 1.0, 1.0])
    system.add_argument('--G', type=float, default=1.0)
    system.add_argument('--dim', type=int, choices=(2, 3), default=2)
    system.add_argument('--h', type=float, default=1.0, help='energy level, E = -h')

    formats = argparse.ArgumentParser(add_help=False)
    formats.add_argument('--formats', nargs='+', choices=('csv', 'json', 'svg'), default=['csv', 'json'])

    parser = argparse.ArgumentParser(prog='virialab', description='N-body virial, brake orbit and Jacobi-Maupertuis laboratory')
    parser.add_argument('--version', action='version', version=f'virialab {virialab.__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('run', parents=[common], help='execute a scenario file')
    p.add_argument('scenario')
    p.set_defaults(func=cmd_run)

    p = sub.add_parser('simulate', parents=[common], help='integrate a scenario without analyses')
    p.add_argument('scenario')
    p.add_argument('--t-final', type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('brake-search', parents=[common, system], help='periodic brake orbit shooting')
    p.add_argument('--seeds', type=int, default=8, help='boundary seeds')
    p.add_argument('--maxiter', type=int, default=200)
    p.add_argument('--t-max', type=float, default=None)
    p.set_defaults(func=cmd_brake_search)

    p = sub.add_parser('virial-report', parents=[common], help='virial report of a trajectory CSV')
    p.add_argument('--traj', required=True)
    p.add_argument('--window', type=_window, default='full', help='"full" or "t0,t1"')
    p.add_argument('--escape', action='store_true', help='hyperbolic-elliptic escape analysis')
    p.add_argument('--two-sided', action='store_true', help='two-sided escape averages')
    p.set_defaults(func=cmd_virial_report)

    p = sub.add_parser('jm-minimize', parents=[common], help='JM geodesic to the brake point')
    p.add_argument('--point', required=True, help='JSON file with q, masses and optionally h, G, dim')
    p.add_argument('--h', type=float, default=None)
    p.add_argument('--nodes', type=int, default=None)
    p.add_argument('--restarts', type=int, default=None)
    p.set_defaults(func=cmd_jm_minimize)

    p = sub.add_parser('family', parents=[common, system], help='homographic Kepler family members')
    p.add_argument('--family', choices=('lagrange', 'euler', 'polygon', 'kepler'), default='lagrange')
    p.add_argument('--ordering', type=int, nargs=3, default=[0, 1, 2])
    p.add_argument('--J-fraction', type=float, action='append', default=None, dest='J_fraction')
    p.add_argument('--periods', type=float, default=1.0, help='0 skips integration')
    p.set_defaults(func=cmd_family)

    p = sub.add_parser('escape-scan', parents=[common, system], help='Birkhoff-Moeckel and escape scans')
    p.add_argument('--n', type=int, default=1000)
    p.add_argument('--T', type=float, default=0.0, help='escape horizon per direction; 0 skips integration')
    p.add_argument('--U-factors', type=float, nargs=2, default=[1.0, 4.0], dest='U_factors')
    p.add_argument('--isosceles', action='store_true', help='spatial isosceles candidate scan')
    p.add_argument('--a', type=float, default=1.0, help='isosceles binary radius')
    p.add_argument('--U-floor', type=float, default=None, dest='U_floor')
    p.set_defaults(func=cmd_escape_scan)

    p = sub.add_parser('shape-export', parents=[common, system, formats], help='shape-space meshes')
    p.add_argument('--resolution', type=int, default=48)
    p.add_argument('--value', type=float, action='append', default=None, help='level value of U')
    p.add_argument('--r-max', type=float, default=None)
    p.add_argument('--traj', default=None, help='trajectory CSV to project')
    p.add_argument('--n', type=int, default=2001, help='shape curve samples')
    p.set_defaults(func=cmd_shape_export)

    p = sub.add_parser('collar-test', parents=[common, system, formats], help='Hill collar exit times')
    p.add_argument('--eps', type=float, action='append', default=None)
    p.add_argument('--ensemble', type=int, default=64)
    p.add_argument('--K', type=float, default=None)
    p.add_argument('--t-max', type=float, default=None)
    p.set_defaults(func=cmd_collar_test)
    return parser

def main(argv=None):
    """Entry point; returns the exit code (0 ok, 2 validation, 3 file system)"""
    parser = build_parser()
    args = parser.parse_args(argv)
    warnings.formatwarning = new_format

    try:
        args.func(args)
    except VALIDATION_ERRORS as err:
        print(f'virialab {args.command}: error: {err}', file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as err:
        print(f'virialab {args.command}: I/O error: {err}', file=sys.stderr)
        return EXIT_IO
    return EXIT_OK

if __name__ == '__main__':
    sys.exit(main())

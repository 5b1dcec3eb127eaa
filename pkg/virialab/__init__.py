# init
# Oct 2026

from .nbodycore import masssystem, state, energylevel
from .integrate import trajectory, event, propagate, propagate_two_sided, detect_events
from .ensemble import ensemble, parallel_map
from .exceptions import *
from .version import __version__

# integrator settings: tolerances, collision proximity stop, step cap
PROPAGATE_DEFAULTS = {'rtol': 1e-10,
                      'atol': 1e-12,
                      'r_min': 1e-8,            # hard proximity stop, simulation length units
                      'max_steps': 200000,
                      'events': ('brake-instant', 'virial-crossing', 'turn-around'),
                      'sundman': False,         # dtau = dt / min r_ab
                      'strict': False,          # raise DriftError instead of warning
                      'drift_factor': 100,      # budget = factor * tol * steps * max(1, |E0|)
                     }

# event engine
EVENT_DEFAULTS = {'root_tol': 1e-10,
                  'subdivisions': 16,           # samples per integrator step
                  'degeneracy_floor': 1e-7,     # relative; |f| below this over a step is tangential
                  'brake_threshold': 1e-12,     # K < threshold * h at a brake instant
                  'r_prox': 1e-3,               # collision-proximity event distance
                 }

# Hill region classification
HILL_DEFAULTS = {'band': 1e-8,                  # relative band about U = h and U = 2h
                 'r_min': 1e-8,
                }

# Jacobi-Maupertuis path optimizer
JM_DEFAULTS = {'nodes': 48,
               'r_pen': 1e-3,                   # barrier activation distance, shell relative
               'penalty': 1e-6,                 # barrier weight
               'restarts': 3,
               'gtol': 1e-10,
               'maxiter': 5000,
               'refine_decade': True,           # double node density in the last decade of U - h
               'verify_tol': 1e-3,              # brake orbit must pass this close to q0
              }

# periodic brake shooting
SHOOT_DEFAULTS = {'maxiter': 200,              # Nelder-Mead iterations
                  'step': 0.05,                # simplex and restart size, unit mass-weighted direction
                  'restarts': 8,               # random starts about the seed
                  'polish': True,              # least-squares on the velocity at the approach
                  'seed_rng': 0,
                 }

# Hill collar exit test
COLLAR_DEFAULTS = {'K': 2.0,                    # collar is {U <= h + K eps}
                   't_max': 10.0,
                  }

# escape detection
ESCAPE_DEFAULTS = {'separation_factor': 50,     # |R| > factor * pair semi-major axis
                   'sustain_fraction': 0.1,     # positive radial speed over this tail fraction
                   'fit_fraction': 0.5,         # tail fraction used to fit v_inf
                  }

# growth classification of I(t)
POLLARD_DEFAULTS = {'tail_fraction': 0.5,
                    'margin': 0.25,             # exponent margins about 0 and 2
                    'T_min': 100.0,             # shorter windows are low confidence
                    'blocks': 64,               # block means smooth out oscillation
                   }

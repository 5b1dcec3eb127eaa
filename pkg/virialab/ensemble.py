# List of runs or records with fan-out attribute access and a worker pool
# Oct 2026

from .exceptions import *
from multiprocessing import Pool
import numpy as np
import pandas as pd
from tqdm import tqdm

class ensemble(list):
    """A list of trajectories, reports or other records, with the following enhancements:

    * An `apply` function: like in pandas, `apply` takes a function handle and applies it to every element in the list, recursively for nested ensembles
    * Element access: attributes and methods not found on the `ensemble` are fetched from the contained objects, returning a new `ensemble`
    * Numpy-like selection: slicing with a boolean or integer array selects members, so `ens[ens.exited]` keeps only the runs that exited
    * `to_dataframe`: one row per member, one column per requested attribute

    Examples:

        >>> ens = ensemble([propagate(s, sys, 10) for s in states])
        >>> ens.status
        ['completed', 'completed', 'collision-proximity']
        >>> ens[np.array(ens.status) == 'completed'].nsteps
        [412, 398]
    """

    def __call__(self, *args, **kwargs):
        return ensemble([x.__call__(*args, **kwargs) for x in self])

    def __getattr__(self, name):

        # dunder and private lookups keep list behaviour (pickling, numpy probing)
        if name.startswith('_'):
            raise AttributeError(name)

        if len(self) == 0:
            raise AttributeError(f"Empty ensemble has no attribute '{name}'")

        # scalar members carry no attributes worth fanning out
        if isinstance(self[0], (int, float, str, np.integer, np.floating)):
            raise AttributeError(f"'{type(self[0]).__name__}' members have no attribute '{name}'")

        return ensemble([getattr(x, name) for x in self])

    def __getitem__(self, key):

        # numpy-like selection
        if isinstance(key, (np.ndarray, tuple, list)):
            key = np.asarray(key)

            if key.dtype == bool:
                if len(key) != len(self):
                    raise IndexError(f'Boolean mask of length {len(key)} for ensemble of length {len(self)}')
                return ensemble([i for i, k in zip(self, key) if k])

            elif np.issubdtype(key.dtype, np.integer):
                return ensemble([super(ensemble, self).__getitem__(int(k)) for k in key])

            raise IndexError(f'Cannot index ensemble with array of dtype {key.dtype}')

        x = super().__getitem__(key)
        if isinstance(x, list):
            return ensemble(x)
        return x

    def apply(self, fn, inplace=False):
        """Apply function to each element contained, similar to pandas functionality

        Args:
            fn (function handle): function to apply to each element
            inplace (bool): if `False` return a copy, else act in-place

        Returns:
            ensemble|None: new `ensemble` with results if `inplace` is `False`, else `None`

        Example:

            >>> x = ensemble([1, 2, 3])
            >>> x.apply(lambda a: a**2)
            [1, 4, 9]
        """
        copy = self if inplace else self.copy()

        for i in range(len(copy)):
            if isinstance(copy[i], ensemble):
                copy[i] = copy[i].apply(fn)
            else:
                copy[i] = fn(copy[i])

        if not inplace:
            return copy

    def copy(self):
        """Shallow copy, still an ensemble"""
        return ensemble(super().copy())

    def to_array(self):
        """Members stacked into a numpy array"""
        return np.asarray(list(self))

    def to_dataframe(self, columns=None):
        """Tabulate members, one row each.

        Args:
            columns (list|None): attribute names to collect. If None, members
                must provide `to_dict()` (as the report records do) and every
                key is used

        Returns:
            pd.DataFrame: index is the member position

        Example:

            >>> ens.to_dataframe(['t_exit', 'exited'])
               t_exit  exited
            0   0.031    True
            1   0.027    True
        """
        if columns is None:
            rows = [x.to_dict() for x in self]
        else:
            rows = [{c: getattr(x, c) for c in columns} for x in self]
        df = pd.DataFrame(rows)
        df.index.name = 'member'
        return df

def parallel_map(fn, items, jobs=1, desc=None, leave=False):
    """Apply fn to every item on a bounded worker pool, keeping input order.

    Args:
        fn (callable): picklable (module-level) function of one argument
        items (iterable): arguments
        jobs (int): number of worker processes. 1 runs in this process
        desc (str|None): progress bar label. None hides the bar
        leave (bool): keep the progress bar after completion

    Returns:
        ensemble: results in the order of items

    Notes:
        Results are ordered, so a fixed seed per item gives identical output
        for any number of jobs.
    """
    items = list(items)
    if jobs is None or jobs < 1:
        raise InputError(f'jobs must be a positive integer, got {jobs}')

    if jobs == 1 or len(items) < 2:
        iterator = map(fn, items)
        return ensemble(tqdm(iterator, total=len(items), desc=desc, leave=leave,
                             disable=desc is None))

    with Pool(processes=min(jobs, len(items))) as pool:
        iterator = pool.imap(fn, items)
        return ensemble(tqdm(iterator, total=len(items), desc=desc, leave=leave,
                             disable=desc is None))

"""Boolean-matrix kernels behind topology generation.

Set ``ETALE_LAB_NUMBA=0`` to force the pure-numpy path.  The numba path is
compiled lazily on first use.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("ETALE_LAB_NUMBA", "1") not in ("0", "false", "no")


def _neighborhoods_numpy(sub):
    # row x of the result marks the points lying in every generator that contains x;
    # float64 keeps the product on BLAS and is exact for counts below 2**53
    s = sub.astype(np.float64)
    bad = s.T @ (1.0 - s)
    return bad == 0


def _neighborhoods_loop(sub):
    k, n = sub.shape
    out = np.ones((n, n), dtype=np.bool_)
    for r in range(k):
        for x in range(n):
            if sub[r, x]:
                for y in range(n):
                    if not sub[r, y]:
                        out[x, y] = False
    return out


_compiled = None


def _numba_kernel():
    global _compiled
    if _compiled is None:
        from numba import njit

        _compiled = njit(cache=False)(_neighborhoods_loop)
    return _compiled


def minimal_neighborhoods(sub):
    """Return ``out[x, y]``: y lies in every generator containing x.

    ``sub`` is a ``(k, n)`` boolean matrix of generating sets.  The rows of
    the result are the minimal open neighbourhoods of the generated topology.
    """
    sub = np.ascontiguousarray(sub, dtype=np.bool_)
    if sub.shape[0] == 0:
        return np.ones((sub.shape[1], sub.shape[1]), dtype=np.bool_)
    if USE_NUMBA:
        return _numba_kernel()(sub)
    return _neighborhoods_numpy(sub)

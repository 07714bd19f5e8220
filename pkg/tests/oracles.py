"""Brute-force reference implementations used only by the tests."""

import itertools

import numpy as np


def brute_force_assignment(mat, maximize=True):
    """Best permutation by exhaustive search; the first optimum in lexicographic order wins."""
    mat = np.asarray(mat, dtype=float)
    n = mat.shape[0]
    best_val, best_perm = None, None
    for perm in itertools.permutations(range(n)):
        val = sum(mat[i, perm[i]] for i in range(n))
        better = best_val is None or (val > best_val if maximize else val < best_val)
        if better:
            best_val, best_perm = val, perm
    return np.array(best_perm), best_val

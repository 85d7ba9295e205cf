"""Small dense linear-algebra helpers: null spaces, ranges and ranks via SVD."""

import numpy as np

RANK_RTOL = 1e-10


def _normalize_signs(basis):
    # make the largest-magnitude entry of every column positive
    if basis.size == 0:
        return basis
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def _rank_from_singular(s, rtol, atol=0.0):
    if s.size == 0 or s[0] <= atol:
        return 0
    return int(np.sum(s > max(rtol * s[0], atol)))


def null_space(a, rtol=RANK_RTOL):
    """Orthonormal basis (as columns) of the null space of ``a``.

    Singular values below ``rtol`` times the largest one count as zero.
    A zero matrix has the whole space as null space.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = a.shape[1]
    _, s, vh = np.linalg.svd(a, full_matrices=True)
    r = _rank_from_singular(s, rtol)
    return _normalize_signs(vh[r:].T.copy()) if r < n else np.zeros((n, 0))


def orth(a, rtol=RANK_RTOL, atol=0.0):
    """Orthonormal basis (as columns) of the column space of ``a``."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.size == 0:
        return np.zeros((a.shape[0], 0))
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    r = _rank_from_singular(s, rtol, atol)
    return _normalize_signs(u[:, :r].copy())


def rank(a, rtol=RANK_RTOL, atol=0.0):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0
    s = np.linalg.svd(np.atleast_2d(a), compute_uv=False)
    return _rank_from_singular(s, rtol, atol)


def complement(basis, dim):
    """Orthonormal basis of the orthogonal complement of span(basis) in R^dim."""
    if basis.size == 0:
        return np.eye(dim)
    return null_space(basis.T)

import logging

import numpy as np
from scipy import linalg as la
from sklearn.utils.extmath import svd_flip

from src.core.errors import NumericalFailureError

logger = logging.getLogger(__name__)

# normal equations whose Gram matrix is worse conditioned than this get a Tikhonov shift
ILL_CONDITIONED = 1e12
TIKHONOV = 1e-12


def spawn_rngs(seed, count):
    """Independent, reproducible generators for restarts / multi-starts."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def random_factor(rows, cols, rng):
    """Gaussian matrix with unit-norm columns."""
    f = rng.standard_normal((rows, cols))
    return f / np.linalg.norm(f, axis=0)


def random_orthonormal(rows, cols, rng):
    q, _ = la.qr(rng.standard_normal((rows, cols)), mode='economic')
    return q


def solve_normal_equations(gram, rhs):
    """
    Solve X @ gram = rhs for X, gram symmetric positive semidefinite.
    Ill-conditioned Grams are shifted by 1e-12 * trace(gram) before the Cholesky solve.
    """
    if not (np.all(np.isfinite(gram)) and np.all(np.isfinite(rhs))):
        raise NumericalFailureError("non-finite values in the normal equations")
    gram = 0.5 * (gram + gram.T)
    if np.linalg.cond(gram) > ILL_CONDITIONED:
        shift = TIKHONOV * max(np.trace(gram), np.finfo(float).tiny)
        logger.debug('Regularizing Gram matrix with shift {:.3e}'.format(shift))
        gram = gram + shift * np.eye(gram.shape[0])
    try:
        factor = la.cho_factor(gram)
        return la.cho_solve(factor, rhs.T, check_finite=False).T
    except la.LinAlgError:
        return rhs @ la.pinv(gram)


def leading_left_singular(matrix, rank):
    """
    Leading `rank` left singular vectors, each with its largest-magnitude entry positive,
    and all singular values.
    """
    if not np.all(np.isfinite(matrix)):
        raise NumericalFailureError("non-finite values in an unfolding passed to the SVD")
    # ranks beyond the column count need the orthogonal complement of the full basis
    k = min(matrix.shape)
    u, s, vt = la.svd(matrix, full_matrices=rank > k)
    u[:, :k], vt[:k] = svd_flip(u[:, :k].copy(), vt[:k].copy())
    return u[:, :rank], s


def orthonormalize(f):
    """QR split f = Q R with a deterministic sign (diag(R) >= 0)."""
    q, r = la.qr(f, mode='economic')
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs, r * signs[:, np.newaxis]

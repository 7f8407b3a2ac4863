"""
Dense N-way tensors and the multilinear primitives the decomposers are built on.

Tensors are plain float64 numpy arrays. Modes and indices are 0-based in this API.
The unfolding convention linearizes the remaining indices first-index-fastest:
entry (i_1..i_N) of a mode-n unfolding sits at row i_n and column
sum_{k != n} i_k * prod_{m < k, m != n} I_m, which makes the Khatri-Rao chain
B(N) (.) ... (.) B(n+1) (.) B(n-1) (.) ... (.) B(1) line up with the columns.
"""
from functools import reduce

import numpy as np
from scipy import linalg as la

from src.core.errors import DimensionError, InvalidIndexError, InvalidModeError


def as_tensor(data):
    """Widen to float64 and check that every extent is at least 1."""
    t = np.asarray(data, dtype=np.float64)
    if t.ndim < 1:
        raise DimensionError("a tensor needs at least one mode")
    if min(t.shape) < 1:
        raise DimensionError(f"all extents must be >= 1, got {t.shape}")
    return t


def _check_mode(ndim, mode):
    if not 0 <= mode < ndim:
        raise InvalidModeError(f"mode {mode} out of range for an order-{ndim} tensor (modes are 0-based)")


def unfold(t, mode):
    """Mode-n matricization: an I_mode x prod_{k != mode} I_k matrix."""
    t = np.asarray(t)
    _check_mode(t.ndim, mode)
    return np.reshape(np.moveaxis(t, mode, 0), (t.shape[mode], -1), order='F')


def fold(m, mode, dims):
    """Inverse of unfold for a tensor of shape dims."""
    dims = tuple(int(d) for d in dims)
    _check_mode(len(dims), mode)
    m = np.asarray(m)
    rest = [d for k, d in enumerate(dims) if k != mode]
    expected = (dims[mode], int(np.prod(rest, dtype=np.int64)))
    if m.ndim != 2 or m.shape != expected:
        raise DimensionError(f"cannot fold a {m.shape} matrix along mode {mode} into {dims}; expected {expected}")
    return np.moveaxis(np.reshape(m, [dims[mode]] + rest, order='F'), 0, mode)


def mode_n_product(t, b, mode):
    """t x_mode b, i.e. every mode-`mode` fiber multiplied by the J x I_mode matrix b."""
    t = np.asarray(t)
    b = np.atleast_2d(np.asarray(b))
    _check_mode(t.ndim, mode)
    if b.ndim != 2 or b.shape[1] != t.shape[mode]:
        raise DimensionError(f"matrix with {b.shape[1]} columns cannot multiply mode {mode} of extent {t.shape[mode]}")

    dims = list(t.shape)
    dims[mode] = b.shape[0]
    return fold(b @ unfold(t, mode), mode, dims)


def multi_mode_product(t, matrices, skip=None, transpose=False):
    """
    Multiply t by one matrix per mode.
    Args:
        matrices: one matrix per mode, in mode order
        skip: a mode left untouched
        transpose: use the transposes (projection onto factor bases)
    """
    result = np.asarray(t)
    for mode, b in enumerate(matrices):
        if mode == skip:
            continue
        result = mode_n_product(result, b.T if transpose else b, mode)
    return result


def khatri_rao(a, b):
    """Columnwise Kronecker product; column r is kron(a[:, r], b[:, r])."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"khatri-rao needs matrices with equal column counts, got {a.shape} and {b.shape}")
    return la.khatri_rao(a, b)


def khatri_rao_chain(factors, skip=None):
    """B(N) (.) ... (.) B(1), leaving out factor `skip`."""
    mats = [f for n, f in enumerate(factors) if n != skip]
    if not mats:
        raise DimensionError("khatri-rao chain over an empty set of factors")
    return reduce(khatri_rao, reversed(mats))


def kronecker(a, b):
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def kronecker_chain(matrices):
    """A(N) kron ... kron A(1)."""
    return reduce(kronecker, reversed(list(matrices)))


def outer_rank1(vectors, weight=1.0):
    """weight * v_1 o v_2 o ... o v_N."""
    if len(vectors) < 1:
        raise DimensionError("outer product needs at least one vector")
    vectors = [np.ravel(np.asarray(v, dtype=np.float64)) for v in vectors]
    return weight * reduce(np.multiply.outer, vectors)


def fiber(t, mode, fixed):
    """
    The mode-`mode` fiber obtained by fixing every other index.
    Args:
        fixed: indices of the remaining modes, in mode order
    """
    t = np.asarray(t)
    _check_mode(t.ndim, mode)
    return t[_index(t.shape, [mode], fixed)]


def tensor_slice(t, modes, fixed):
    """
    Two-dimensional section keeping `modes` free (rows follow the smaller mode).
    """
    t = np.asarray(t)
    modes = sorted(modes)
    if len(modes) != 2 or modes[0] == modes[1]:
        raise InvalidModeError(f"a slice keeps exactly two distinct modes, got {modes}")
    for mode in modes:
        _check_mode(t.ndim, mode)
    return t[_index(t.shape, modes, fixed)]


def _index(shape, free, fixed):
    fixed = list(fixed)
    if len(fixed) != len(shape) - len(free):
        raise InvalidIndexError(f"expected {len(shape) - len(free)} fixed indices, got {len(fixed)}")

    index = []
    for mode, extent in enumerate(shape):
        if mode in free:
            index.append(slice(None))
            continue
        i = fixed.pop(0)
        if not 0 <= i < extent:
            raise InvalidIndexError(f"index {i} out of range for mode {mode} of extent {extent}")
        index.append(i)
    return tuple(index)


def diag_tensor(weights, order):
    """R x ... x R tensor with the weights on its superdiagonal."""
    weights = np.ravel(np.asarray(weights, dtype=np.float64))
    if weights.size < 1 or order < 1:
        raise DimensionError("diagonal tensor needs at least one weight and order >= 1")

    t = np.zeros((weights.size,) * order)
    idx = np.arange(weights.size)
    t[(idx,) * order] = weights
    return t

import numpy as np

from src.core.errors import DimensionError, UndefinedReferenceError


def frobenius_norm(t):
    """Square root of the sum of squared entries."""
    return float(np.linalg.norm(np.ravel(t)))


def relative_error(t, approx):
    """
    ||t - approx||_F / ||t||_F, the comparison metric used throughout the benchmark.
    """
    t = np.asarray(t, dtype=np.float64)
    approx = np.asarray(approx, dtype=np.float64)
    if t.shape != approx.shape:
        raise DimensionError(f"shape mismatch: reference {t.shape} vs approximation {approx.shape}")

    reference = frobenius_norm(t)
    if reference == 0.0:
        raise UndefinedReferenceError("relative error is undefined for an all-zero reference tensor")
    return frobenius_norm(t - approx) / reference


def column_congruence(a, b):
    """
    Absolute cosine between every column of a and every column of b.
    Zero columns score 0 against everything.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise DimensionError(f"cannot compare columns of {a.shape} and {b.shape}")

    norm_a = np.linalg.norm(a, axis=0)
    norm_b = np.linalg.norm(b, axis=0)
    norm_a[norm_a == 0] = np.inf
    norm_b[norm_b == 0] = np.inf
    return np.abs(a.T @ b) / np.outer(norm_a, norm_b)


def greedy_match(scores):
    """
    Greedily pair rows with columns of a score matrix, best pair first.
    Returns a list of (row, col, score) sorted by row.
    """
    scores = np.array(scores, dtype=np.float64)
    pairs = []
    for _ in range(min(scores.shape)):
        row, col = np.unravel_index(np.argmax(scores), scores.shape)
        pairs.append((int(row), int(col), float(scores[row, col])))
        scores[row, :] = -np.inf
        scores[:, col] = -np.inf
    return sorted(pairs)

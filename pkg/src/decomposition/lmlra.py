"""
Low multilinear rank approximation: truncated HOSVD and HOOI refinement.
"""
import logging
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.core.errors import (ConfigurationError, InvalidModeError, NumericalFailureError,
                             UndefinedReferenceError, UnsupportedOrderError)
from src.core.metrics import frobenius_norm, relative_error
from src.decomposition.trace import ConvergenceMonitor, DecompositionTrace, all_finite, guarded_sweep
from src.decomposition.utils import leading_left_singular, random_orthonormal
from src.tensor.base import as_tensor, kronecker_chain, multi_mode_product, unfold
from src.tensor.models import TuckerTensor, reconstruct

logger = logging.getLogger(__name__)


@dataclass
class LmlraOptions:
    multilinear_ranks: Sequence[int]
    max_iterations: int = 100
    tolerance: float = 1e-10
    seed: Optional[int] = None  # None: start from the HOSVD, otherwise from random orthonormal bases

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ConfigurationError(f"tolerance must be > 0, got {self.tolerance}")


def _check_ranks(shape, ranks):
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(shape):
        raise ConfigurationError(f"need one multilinear rank per mode ({len(shape)}), got {ranks}")
    for n, (r, d) in enumerate(zip(ranks, shape)):
        if not 1 <= r <= d:
            raise ConfigurationError(f"mode-{n} rank {r} must lie in [1, {d}]")
    return ranks


def hosvd(t, ranks):
    """
    Truncated HOSVD: factor n holds the leading R_n left singular vectors of the mode-n
    unfolding, the core is t projected onto those bases.
    """
    t = as_tensor(t)
    ranks = _check_ranks(t.shape, ranks)
    factors = [leading_left_singular(unfold(t, n), r)[0] for n, r in enumerate(ranks)]
    core = multi_mode_product(t, factors, transpose=True)
    return TuckerTensor(core, tuple(factors))


def mode_singular_values(t):
    """Singular values of every mode-n unfolding."""
    t = as_tensor(t)
    if not all_finite(t):
        raise NumericalFailureError("non-finite entries have no mode-wise singular values")
    return [np.linalg.svd(unfold(t, n), compute_uv=False) for n in range(t.ndim)]


def energy_ranks(t, energy=0.95):
    """
    Smallest per-mode ranks whose leading singular values hold `energy` of the squared norm.
    """
    if not 0 < energy <= 1:
        raise ConfigurationError(f"energy must lie in (0, 1], got {energy}")
    ranks = []
    for s in mode_singular_values(t):
        cumulative = np.cumsum(s ** 2) / max(np.sum(s ** 2), np.finfo(float).tiny)
        ranks.append(min(int(np.searchsorted(cumulative, energy - 1e-12)) + 1, len(s)))
    return tuple(ranks)


def hooi(t, opts):
    """
    Higher-order orthogonal iteration. Each sweep replaces factor n with the leading left
    singular vectors of t projected on all other factors; the core is recomputed at the end.
    Returns (TuckerTensor, DecompositionTrace) with stages initialization and refinement.
    """
    t = as_tensor(t)
    ranks = _check_ranks(t.shape, opts.multilinear_ranks)
    norm = frobenius_norm(t)
    if norm == 0.0:
        raise UndefinedReferenceError("cannot decompose an all-zero tensor")

    trace = DecompositionTrace()
    tic = time.perf_counter()
    with guarded_sweep('LMLRA-init', 0, None, trace):
        if opts.seed is None:
            start = hosvd(t, ranks)
        else:
            rng = np.random.default_rng(opts.seed)
            factors = tuple(random_orthonormal(d, r, rng) for d, r in zip(t.shape, ranks))
            start = TuckerTensor(multi_mode_product(t, factors, transpose=True), factors)
    if not all_finite(start.core, *start.factors):
        raise NumericalFailureError("[LMLRA-init] non-finite starting core", trace=trace)
    trace.relative_errors_by_stage['initialization'] = relative_error(t, reconstruct(start))
    trace.stage_times['initialization'] = time.perf_counter() - tic

    tic = time.perf_counter()
    model = start
    monitor = ConvergenceMonitor(trace, norm, opts.tolerance, opts.max_iterations,
                                 frobenius_norm(t - reconstruct(start)), 'LMLRA-HOOI')
    while True:
        factors = list(model.factors)
        with guarded_sweep('LMLRA-HOOI', monitor.sweeps + 1, model, trace):
            for n, r in enumerate(ranks):
                projected = multi_mode_product(t, factors, skip=n, transpose=True)
                factors[n] = leading_left_singular(unfold(projected, n), r)[0]
        core = multi_mode_product(t, factors, transpose=True)
        if not all_finite(core, *factors):
            raise NumericalFailureError(f"[LMLRA-HOOI] non-finite values after sweep {monitor.sweeps + 1}",
                                        last_iterate=model, trace=trace)

        candidate = TuckerTensor(core, tuple(factors))
        accepted, stop = monitor.update(frobenius_norm(t - reconstruct(candidate)))
        if accepted:
            model = candidate
        if stop:
            break

    trace.relative_errors_by_stage['refinement'] = relative_error(t, reconstruct(model))
    trace.stage_times['refinement'] = time.perf_counter() - tic
    logger.info('[LMLRA-HOOI] ranks {} relative error {:.6e} after {} iterations'.format(
        ranks, trace.final_relative_error, trace.iterations))
    return model, trace


def matricized_tucker(model, mode):
    """
    Mode-n matricization of a third-order Tucker model in factored form,
    e.g. A G_(1) (C kron B)^T for mode 0.
    """
    if model.core.ndim != 3:
        raise UnsupportedOrderError(f"matricized form is implemented for third-order models, got order {model.core.ndim}")
    if mode not in (0, 1, 2):
        raise InvalidModeError(f"mode {mode} out of range for a third-order model (modes are 0-based)")
    others = [f for n, f in enumerate(model.factors) if n != mode]
    return model.factors[mode] @ unfold(model.core, mode) @ kronecker_chain(others).T

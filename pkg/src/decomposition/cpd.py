"""
Canonical Polyadic Decomposition: compression, random initialization and ALS refinement,
plus the Kruskal uniqueness bound and the CORCONDIA rank diagnostic.
"""
import itertools
import logging
import time
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import linalg as la

from src.core.errors import (ConfigurationError, DimensionError, NumericalFailureError,
                             UndefinedReferenceError, UnsupportedOrderError)
from src.core.metrics import column_congruence, frobenius_norm, greedy_match, relative_error
from src.decomposition.lmlra import hosvd
from src.decomposition.trace import ConvergenceMonitor, DecompositionTrace, all_finite, guarded_sweep
from src.decomposition.utils import (ILL_CONDITIONED, random_factor, solve_normal_equations,
                                     spawn_rngs)
from src.tensor.base import as_tensor, diag_tensor, khatri_rao_chain, mode_n_product, unfold
from src.tensor.models import KruskalTensor, reconstruct

logger = logging.getLogger(__name__)

COMPRESSION_MARGIN = 2
CPD_STAGES = ('compression', 'random_init', 'core_als', 'refinement')


@dataclass
class CpdOptions:
    rank: int
    max_iterations: int = 500
    tolerance: float = 1e-8
    seed: int = 0
    use_compression: bool = False
    compression_ranks: Optional[Sequence[int]] = None
    num_starts: int = 1
    refine: bool = True
    refine_max_iterations: int = 100

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigurationError(f"CPD rank must be >= 1, got {self.rank}")
        if self.max_iterations < 1 or self.refine_max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ConfigurationError(f"tolerance must be > 0, got {self.tolerance}")
        if self.num_starts < 1:
            raise ConfigurationError("num_starts must be >= 1")


def _check_well_posed(shape, rank):
    for n in range(len(shape)):
        bound = int(np.prod([d for k, d in enumerate(shape) if k != n]))
        if rank > bound:
            raise ConfigurationError(
                f"rank {rank} exceeds {bound}, the column count of the mode-{n} ALS subproblem for shape {shape}")


def _als(t, weights, factors, norm, opts, max_iterations, label, offset=0.0):
    """
    ALS sweeps from the given model. Each mode update is the exact least-squares
    minimizer with the other (unit-norm) factors fixed; column norms go into the weights.
    `offset` is a residual component orthogonal to t's span (used on compressed cores)
    so that recorded residuals refer to the full tensor.
    """
    trace = DecompositionTrace()
    factors = [f.copy() for f in factors]
    weights = weights.copy()

    def full_residual(w, fs):
        return float(np.hypot(frobenius_norm(t - reconstruct(KruskalTensor(w, tuple(fs)))), offset))

    monitor = ConvergenceMonitor(trace, norm, opts.tolerance, max_iterations,
                                 full_residual(weights, factors), label)
    while True:
        new_factors = list(factors)
        new_weights = weights
        with guarded_sweep(label, monitor.sweeps + 1, KruskalTensor(weights, tuple(factors)), trace):
            for n in range(t.ndim):
                gram = np.ones((opts.rank, opts.rank))
                for k, f in enumerate(new_factors):
                    if k != n:
                        gram *= f.T @ f
                mttkrp = unfold(t, n) @ khatri_rao_chain(new_factors, skip=n)
                update = solve_normal_equations(gram, mttkrp)
                new_weights = np.linalg.norm(update, axis=0)
                new_factors[n] = update / np.where(new_weights > 0, new_weights, 1.0)

        if not all_finite(new_weights, *new_factors):
            raise NumericalFailureError(f"[{label}] non-finite values after sweep {monitor.sweeps + 1}",
                                        last_iterate=KruskalTensor(weights, tuple(factors)), trace=trace)

        accepted, stop = monitor.update(full_residual(new_weights, new_factors))
        if accepted:
            factors, weights = new_factors, new_weights
        if stop:
            return KruskalTensor(weights, tuple(factors)), trace


def _random_start(shape, rank, rng):
    return np.ones(rank), [random_factor(d, rank, rng) for d in shape]


def _best_of(runs, errors):
    """Smallest final error wins; earlier starts win ties."""
    best = min(range(len(runs)), key=lambda i: (errors[i], i))
    return runs[best]


def cpd_als(t, opts):
    """
    CPD of t by alternating least squares from a seeded Gaussian start.
    Returns (KruskalTensor, DecompositionTrace) with stages random_init and refinement;
    opts.use_compression hands over to the cpd_compressed pipeline.
    """
    if opts.use_compression:
        return cpd_compressed(t, opts)
    t = as_tensor(t)
    _check_well_posed(t.shape, opts.rank)
    norm = frobenius_norm(t)
    if norm == 0.0:
        raise UndefinedReferenceError("cannot decompose an all-zero tensor")

    runs = []
    for start, rng in enumerate(spawn_rngs(opts.seed, opts.num_starts)):
        tic = time.perf_counter()
        weights, factors = _random_start(t.shape, opts.rank, rng)
        init_error = relative_error(t, reconstruct(KruskalTensor(weights, tuple(factors))))
        model, trace = _als(t, weights, factors, norm, opts, opts.max_iterations, f'CPD-ALS start {start}')
        trace.relative_errors_by_stage['random_init'] = init_error
        trace.relative_errors_by_stage['refinement'] = relative_error(t, reconstruct(model))
        trace.stage_times['refinement'] = time.perf_counter() - tic
        runs.append((model, trace))

    model, trace = _best_of(runs, [run[1].final_relative_error for run in runs])
    logger.info('[CPD-ALS] rank {} relative error {:.6e} after {} iterations'.format(
        opts.rank, trace.final_relative_error, trace.iterations))
    return model.normalize().arrange(), trace


def default_compression_ranks(shape, rank):
    return tuple(min(d, rank + COMPRESSION_MARGIN) for d in shape)


def cpd_compressed(t, opts):
    """
    CPD pipeline: HOSVD compression, random initialization on the core, ALS on the core,
    expansion through the compression bases and optional ALS refinement on the full tensor.
    The trace carries the four stage errors in CPD_STAGES order.
    """
    t = as_tensor(t)
    _check_well_posed(t.shape, opts.rank)
    norm = frobenius_norm(t)
    if norm == 0.0:
        raise UndefinedReferenceError("cannot decompose an all-zero tensor")

    ranks = tuple(opts.compression_ranks) if opts.compression_ranks else default_compression_ranks(t.shape, opts.rank)
    if len(ranks) != t.ndim:
        raise ConfigurationError(f"need {t.ndim} compression ranks, got {ranks}")
    for n, (r, d) in enumerate(zip(ranks, t.shape)):
        if not min(opts.rank, d) <= r <= d:
            raise ConfigurationError(f"compression rank {r} in mode {n} must lie in [{min(opts.rank, d)}, {d}]")
    _check_well_posed(ranks, opts.rank)

    trace = DecompositionTrace()
    stages = trace.relative_errors_by_stage

    # ==== compression
    tic = time.perf_counter()
    with guarded_sweep('CPD-compression', 0, None, trace):
        tucker = hosvd(t, ranks)
    core = tucker.core
    stages['compression'] = relative_error(t, reconstruct(tucker))
    offset = stages['compression'] * norm
    trace.stage_times['compression'] = time.perf_counter() - tic

    # ==== random initialization and ALS on the core
    tic = time.perf_counter()
    runs, errors = [], []
    for start, rng in enumerate(spawn_rngs(opts.seed, opts.num_starts)):
        weights, factors = _random_start(core.shape, opts.rank, rng)
        init = KruskalTensor(weights, tuple(factors))
        core_model, core_trace = _als(core, weights, factors, norm, opts, opts.max_iterations,
                                      f'CPD-core start {start}', offset=offset)
        runs.append((init, core_model, core_trace))
        errors.append(relative_error(core, reconstruct(core_model)))
    init, core_model, core_trace = _best_of(runs, errors)
    stages['random_init'] = relative_error(core, reconstruct(init))
    trace.extend(core_trace)

    expanded = KruskalTensor(core_model.weights,
                             tuple(u @ f for u, f in zip(tucker.factors, core_model.factors)))
    stages['core_als'] = relative_error(t, reconstruct(expanded))
    trace.stage_times['core_als'] = time.perf_counter() - tic

    # ==== refinement on the full tensor
    tic = time.perf_counter()
    model = expanded
    if opts.refine:
        model, refine_trace = _als(t, expanded.weights, list(expanded.factors), norm, opts,
                                   opts.refine_max_iterations, 'CPD-refine')
        trace.extend(refine_trace)
    stages['refinement'] = relative_error(t, reconstruct(model))
    trace.stage_times['refinement'] = time.perf_counter() - tic

    logger.info('[CPD-compressed] stage errors: ' + ', '.join(f'{k}={v:.6e}' for k, v in stages.items()))
    return model.normalize().arrange(), trace


def k_rank(m, tol=None):
    """
    Kruskal rank: the largest k such that every subset of k columns is linearly independent.
    Exhaustive over column subsets, so meant for small matrices.
    """
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    cols = m.shape[1]
    for k in range(1, cols + 1):
        for subset in itertools.combinations(range(cols), k):
            if np.linalg.matrix_rank(m[:, subset], tol=tol) < k:
                return k - 1
    return cols


class UniquenessCheck(NamedTuple):
    unique: bool
    margin: int
    k_ranks: tuple


def kruskal_uniqueness(factors, rank):
    """
    Kruskal's sufficient condition k_A + k_B + k_C >= 2R + 2 for a third-order CPD to be
    unique up to scaling and permutation. Returns the verdict and the margin sum - (2R + 2).
    """
    if len(factors) != 3:
        raise UnsupportedOrderError(f"the uniqueness bound is stated for three factors, got {len(factors)}")
    for n, f in enumerate(factors):
        if np.asarray(f).shape[1] != rank:
            raise ConfigurationError(f"factor {n} has {np.asarray(f).shape[1]} columns, expected {rank}")

    k_ranks = tuple(k_rank(f) for f in factors)
    margin = sum(k_ranks) - (2 * rank + 2)
    return UniquenessCheck(margin >= 0, margin, k_ranks)


class CorcondiaResult(NamedTuple):
    score: float
    regularized: bool
    core: np.ndarray


def corcondia(t, model):
    """
    Core consistency: fit an unconstrained core to t with the model's factors fixed and
    score 100 * (1 - ||G - diag(lambda)||^2 / ||diag(lambda)||^2).
    """
    t = as_tensor(t)
    if model.shape != t.shape:
        raise DimensionError(f"model shape {model.shape} does not match tensor shape {t.shape}")

    regularized = False
    core = t
    for n, f in enumerate(model.factors):
        if np.linalg.cond(f.T @ f) > ILL_CONDITIONED:
            regularized = True
            pinv = la.pinv(f, rtol=1e-10)
        else:
            pinv = la.pinv(f)
        core = mode_n_product(core, pinv, n)
    if regularized:
        logger.warning('[CORCONDIA] rank-deficient factor Gram, core fitted with a truncated pseudo-inverse')

    if model.rank == 1:
        return CorcondiaResult(100.0, regularized, core)

    target = diag_tensor(model.weights, model.ndim)
    denominator = frobenius_norm(target) ** 2
    if denominator == 0.0:
        raise UndefinedReferenceError("core consistency is undefined for all-zero weights")
    score = 100.0 * (1.0 - frobenius_norm(core - target) ** 2 / denominator)
    return CorcondiaResult(float(score), regularized, core)


def factor_match_score(model, reference):
    """
    Mean congruence of greedily matched components: for components r, s the product over
    modes of |cos(a_n[:, r], b_n[:, s])|, which ignores sign and scaling.
    """
    if model.shape != reference.shape:
        raise DimensionError(f"cannot match models of shapes {model.shape} and {reference.shape}")
    scores = np.ones((model.rank, reference.rank))
    for a, b in zip(model.factors, reference.factors):
        scores *= column_congruence(a, b)
    matches = greedy_match(scores)
    return float(np.mean([score for _, _, score in matches]))

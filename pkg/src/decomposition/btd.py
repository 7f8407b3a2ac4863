"""
Block Term Decomposition by alternating least squares, in rank-(L,L,1) form
sum_s (A_s B_s^T) o c_s and in general form sum_s G_s x1 A_s x2 B_s x3 C_s.
"""
import logging
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.core.errors import (ConfigurationError, NumericalFailureError, UndefinedReferenceError,
                             UnsupportedOrderError)
from src.core.metrics import column_congruence, frobenius_norm, relative_error
from src.decomposition.trace import ConvergenceMonitor, DecompositionTrace, all_finite, guarded_sweep
from src.decomposition.utils import (orthonormalize, random_factor, random_orthonormal,
                                     solve_normal_equations, spawn_rngs)
from src.tensor.base import as_tensor, kronecker_chain, mode_n_product, unfold
from src.tensor.models import BlockTerm, BlockTermTensor, reconstruct

logger = logging.getLogger(__name__)

COLLINEAR = 1 - 1e-8


@dataclass
class BtdOptions:
    """
    block_ranks: S integers L_s for rank-(L_s, L_s, 1) terms, or S triples (L_s, M_s, N_s).
    """
    block_ranks: Sequence
    max_iterations: int = 500
    tolerance: float = 1e-8
    seed: int = 0
    num_restarts: int = 3

    def __post_init__(self):
        if len(self.block_ranks) < 1:
            raise ConfigurationError("a block term decomposition needs at least one block")
        for ranks in self.triples():
            if min(ranks) < 1:
                raise ConfigurationError(f"block ranks must be >= 1, got {ranks}")
        if self.max_iterations < 1 or self.num_restarts < 1:
            raise ConfigurationError("max_iterations and num_restarts must be >= 1")
        if not self.tolerance > 0:
            raise ConfigurationError(f"tolerance must be > 0, got {self.tolerance}")

    def triples(self):
        out = []
        for ranks in self.block_ranks:
            if np.isscalar(ranks):
                out.append((int(ranks), int(ranks), 1))
            elif len(ranks) == 3:
                out.append(tuple(int(r) for r in ranks))
            else:
                raise ConfigurationError(f"block ranks must be an integer L or a triple (L, M, N), got {ranks}")
        return out

    def ll1_ranks(self):
        ranks = []
        for L, M, N in self.triples():
            if L != M or N != 1:
                raise ConfigurationError(f"block ({L}, {M}, {N}) is not of rank-(L, L, 1) type")
            ranks.append(L)
        return ranks


def _prepare(t):
    t = as_tensor(t)
    if t.ndim != 3:
        raise UnsupportedOrderError(f"block term decompositions are third-order, got order {t.ndim}")
    norm = frobenius_norm(t)
    if norm == 0.0:
        raise UndefinedReferenceError("cannot decompose an all-zero tensor")
    return t, norm


def _check_feasible(shape, triples):
    I, J, K = shape
    for s, (L, M, N) in enumerate(triples):
        if L > I or M > J or N > K:
            raise ConfigurationError(f"block {s} ranks {(L, M, N)} exceed the tensor extents {shape}")
    totals = np.sum(triples, axis=0)
    if totals[0] > J * K or totals[1] > I * K or totals[2] > I * J:
        raise ConfigurationError(f"stacked block ranks {tuple(totals)} overdetermine the ALS subproblems for shape {shape}")
    if sum(L * M * N for L, M, N in triples) > I * J * K:
        raise ConfigurationError("block cores hold more entries than the tensor")


def _select(runs):
    """Best final relative error wins, earlier seeds win ties."""
    best = min(range(len(runs)), key=lambda i: (runs[i][1].final_relative_error, i))
    logger.info('[BTD] restart {} selected out of {}'.format(best, len(runs)))
    return runs[best]


# ---------------------------------------------------------------------------
# rank-(L, L, 1)
# ---------------------------------------------------------------------------

def _ll1_model(A, B, C):
    terms = [BlockTerm(np.eye(a.shape[1])[:, :, np.newaxis], (a, b, C[:, [s]]))
             for s, (a, b) in enumerate(zip(A, B))]
    return BlockTermTensor(tuple(terms), structure='ll1')


def _ll1_canonical(A, B, C):
    """Unit-norm c_s; A_s orthonormal with B_s absorbing the mixing and the magnitude."""
    norms = np.linalg.norm(C, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    C = C / norms
    new_A, new_B = [], []
    for s, (a, b) in enumerate(zip(A, B)):
        q, r = orthonormalize(a)
        new_A.append(q)
        new_B.append(norms[s] * b @ r.T)
    return new_A, new_B, C


def _ll1_als(t, A, B, C, norm, opts, label):
    trace = DecompositionTrace()
    T1, T2, T3 = (unfold(t, n) for n in range(3))
    split = np.cumsum([a.shape[1] for a in A])[:-1]

    model = _ll1_model(A, B, C)
    monitor = ConvergenceMonitor(trace, norm, opts.tolerance, opts.max_iterations,
                                 frobenius_norm(t - reconstruct(model)), label)
    while True:
        with guarded_sweep(label, monitor.sweeps + 1, model, trace):
            # mode 1: T_(1) = [A_1 .. A_S] [c_s kron B_s]_s^T
            P = np.hstack([np.kron(C[:, [s]], b) for s, b in enumerate(B)])
            new_A = np.split(solve_normal_equations(P.T @ P, T1 @ P), split, axis=1)
            # mode 2: T_(2) = [B_1 .. B_S] [c_s kron A_s]_s^T
            Q = np.hstack([np.kron(C[:, [s]], a) for s, a in enumerate(new_A)])
            new_B = np.split(solve_normal_equations(Q.T @ Q, T2 @ Q), split, axis=1)
            # mode 3: T_(3) = C [vec(A_s B_s^T)]_s^T
            M = np.column_stack([(a @ b.T).ravel(order='F') for a, b in zip(new_A, new_B)])
            new_C = solve_normal_equations(M.T @ M, T3 @ M)

        if not all_finite(new_C, *new_A, *new_B):
            raise NumericalFailureError(f"[{label}] non-finite values after sweep {monitor.sweeps + 1}",
                                        last_iterate=model, trace=trace)

        new_A, new_B, new_C = _ll1_canonical(new_A, new_B, new_C)
        candidate = _ll1_model(new_A, new_B, new_C)
        accepted, stop = monitor.update(frobenius_norm(t - reconstruct(candidate)))
        if accepted:
            A, B, C, model = new_A, new_B, new_C, candidate
        if stop:
            return model, trace


def btd_ll1(t, opts):
    """
    Rank-(L,L,1) BTD fitted by ALS over the stacked factor blocks [A_1..A_S], [B_1..B_S]
    and [c_1..c_S], keeping the best of opts.num_restarts seeded starts.
    """
    t, norm = _prepare(t)
    ranks = opts.ll1_ranks()
    _check_feasible(t.shape, [(L, L, 1) for L in ranks])
    I, J, K = t.shape

    runs = []
    for restart, rng in enumerate(spawn_rngs(opts.seed, opts.num_restarts)):
        tic = time.perf_counter()
        A = [random_factor(I, L, rng) for L in ranks]
        B = [random_factor(J, L, rng) for L in ranks]
        C = random_factor(K, len(ranks), rng)
        init_error = relative_error(t, reconstruct(_ll1_model(A, B, C)))
        model, trace = _ll1_als(t, A, B, C, norm, opts, f'BTD-LL1 restart {restart}')
        trace.relative_errors_by_stage['random_init'] = init_error
        trace.relative_errors_by_stage['refinement'] = relative_error(t, reconstruct(model))
        trace.stage_times['refinement'] = time.perf_counter() - tic
        runs.append((model, trace))

    model, trace = _select(runs)
    C = model.stacked_factor(2)
    congruence = column_congruence(C, C) - np.eye(C.shape[1])
    if np.any(congruence > COLLINEAR):
        trace.warn('[BTD-LL1] degenerate solution: two blocks have collinear c vectors')
    logger.info('[BTD-LL1] blocks {} relative error {:.6e} after {} iterations'.format(
        ranks, trace.final_relative_error, trace.iterations))
    return model, trace


# ---------------------------------------------------------------------------
# general (L, M, N)
# ---------------------------------------------------------------------------

def _general_model(factors, cores):
    return BlockTermTensor(tuple(BlockTerm(g, tuple(f)) for f, g in zip(factors, cores)), structure='general')


def _solve_cores(t, factors, triples):
    """Joint least-squares fit of every core with all factors fixed: vec(T) = sum_s (C_s kron B_s kron A_s) vec(G_s)."""
    K = np.hstack([kronecker_chain(f) for f in factors])
    vec = t.ravel(order='F')[np.newaxis, :]
    g = solve_normal_equations(K.T @ K, vec @ K)[0]
    split = np.cumsum([L * M * N for L, M, N in triples])[:-1]
    return [np.reshape(part, dims, order='F') for part, dims in zip(np.split(g, split), triples)]


def _general_canonical(factors, cores):
    """Orthonormal factors per block; the triangular parts move into the core."""
    new_factors, new_cores = [], []
    for f, g in zip(factors, cores):
        block = []
        for mode, a in enumerate(f):
            q, r = orthonormalize(a)
            block.append(q)
            g = mode_n_product(g, r, mode)
        new_factors.append(block)
        new_cores.append(g)
    return new_factors, new_cores


def _general_als(t, factors, cores, triples, norm, opts, label):
    trace = DecompositionTrace()
    unfolded = [unfold(t, n) for n in range(3)]

    model = _general_model(factors, cores)
    monitor = ConvergenceMonitor(trace, norm, opts.tolerance, opts.max_iterations,
                                 frobenius_norm(t - reconstruct(model)), label)
    while True:
        new_factors = [list(f) for f in factors]
        with guarded_sweep(label, monitor.sweeps + 1, model, trace):
            for mode in range(3):
                # T_(n) = sum_s F_s G_s(n) (kron chain of the other factors)^T
                W = np.hstack([kronecker_chain([a for k, a in enumerate(f) if k != mode]) @ unfold(g, mode).T
                               for f, g in zip(new_factors, cores)])
                stacked = solve_normal_equations(W.T @ W, unfolded[mode] @ W)
                split = np.cumsum([r[mode] for r in triples])[:-1]
                for s, block in enumerate(np.split(stacked, split, axis=1)):
                    new_factors[s][mode] = block
            new_cores = _solve_cores(t, new_factors, triples)

        if not all_finite(*new_cores, *[a for f in new_factors for a in f]):
            raise NumericalFailureError(f"[{label}] non-finite values after sweep {monitor.sweeps + 1}",
                                        last_iterate=model, trace=trace)

        new_factors, new_cores = _general_canonical(new_factors, new_cores)
        candidate = _general_model(new_factors, new_cores)
        accepted, stop = monitor.update(frobenius_norm(t - reconstruct(candidate)))
        if accepted:
            factors, cores, model = new_factors, new_cores, candidate
        if stop:
            return model, trace


def btd_general(t, opts):
    """
    General BTD: ALS cycling over each mode's stacked factor block, then all cores jointly.
    """
    t, norm = _prepare(t)
    triples = opts.triples()
    _check_feasible(t.shape, triples)

    runs = []
    for restart, rng in enumerate(spawn_rngs(opts.seed, opts.num_restarts)):
        tic = time.perf_counter()
        factors = [[random_orthonormal(d, r, rng) for d, r in zip(t.shape, ranks)] for ranks in triples]
        label = f'BTD restart {restart}'
        with guarded_sweep(label, 0, None, DecompositionTrace()):
            cores = _solve_cores(t, factors, triples)
        init_error = relative_error(t, reconstruct(_general_model(factors, cores)))
        model, trace = _general_als(t, factors, cores, triples, norm, opts, label)
        trace.relative_errors_by_stage['random_init'] = init_error
        trace.relative_errors_by_stage['refinement'] = relative_error(t, reconstruct(model))
        trace.stage_times['refinement'] = time.perf_counter() - tic
        runs.append((model, trace))

    model, trace = _select(runs)
    logger.info('[BTD] blocks {} relative error {:.6e} after {} iterations'.format(
        triples, trace.final_relative_error, trace.iterations))
    return model, trace

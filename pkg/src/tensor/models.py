"""
Structured tensor models: Kruskal (CPD), Tucker (LMLRA) and block-term (BTD) formats.
"""
from dataclasses import dataclass
from functools import singledispatch

import numpy as np

from src.core.errors import ModelError
from src.tensor.base import fold, khatri_rao_chain, multi_mode_product, outer_rank1

ORTHONORMAL_TOL = 1e-8


def _as_factor(f):
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2 or min(f.shape) < 1:
        raise ModelError(f"factor matrices must be 2-D with at least one row and column, got shape {f.shape}")
    return f


@dataclass(frozen=True, eq=False)
class KruskalTensor:
    """
    Weights lambda_1..lambda_R and one I_n x R factor per mode.
    Columns are unit-norm after normalize.
    """
    weights: np.ndarray
    factors: tuple

    def __post_init__(self):
        weights = np.ravel(np.asarray(self.weights, dtype=np.float64))
        factors = tuple(_as_factor(f) for f in self.factors)
        if not factors:
            raise ModelError("a Kruskal tensor needs at least one factor")
        for n, f in enumerate(factors):
            if f.shape[1] != weights.size:
                raise ModelError(f"factor {n} has {f.shape[1]} columns, expected rank {weights.size}")
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'factors', factors)

    @property
    def shape(self):
        return tuple(f.shape[0] for f in self.factors)

    @property
    def rank(self):
        return self.weights.size

    @property
    def ndim(self):
        return len(self.factors)

    def normalize(self):
        """Push column norms into the weights."""
        weights = self.weights.copy()
        factors = []
        for f in self.factors:
            norms = np.linalg.norm(f, axis=0)
            safe = np.where(norms > 0, norms, 1.0)
            weights = weights * norms
            factors.append(f / safe)
        return KruskalTensor(weights, tuple(factors))

    def arrange(self):
        """
        Canonical ordering: first nonzero entry of every column positive (signs moved
        into the weights), terms sorted by descending |lambda|, ties broken by the
        first factor's columns in lexicographic order.
        """
        weights = self.weights.copy()
        factors = [f.copy() for f in self.factors]
        for f in factors:
            for r in range(self.rank):
                column = np.abs(f[:, r])
                nonzero = np.flatnonzero(column > 1e-12 * column.max())
                if nonzero.size and f[nonzero[0], r] < 0:
                    f[:, r] *= -1
                    weights[r] *= -1

        order = sorted(range(self.rank), key=lambda r: (-abs(weights[r]), tuple(factors[0][:, r])))
        return KruskalTensor(weights[order], tuple(f[:, order] for f in factors))


@dataclass(frozen=True, eq=False)
class TuckerTensor:
    """Core tensor of dims R_1..R_N and an orthonormal I_n x R_n factor per mode."""
    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        core = np.asarray(self.core, dtype=np.float64)
        factors = tuple(_as_factor(f) for f in self.factors)
        if core.ndim != len(factors):
            raise ModelError(f"order-{core.ndim} core needs {core.ndim} factors, got {len(factors)}")
        for n, f in enumerate(factors):
            if f.shape[1] != core.shape[n]:
                raise ModelError(f"factor {n} has {f.shape[1]} columns but core extent is {core.shape[n]}")
            if f.shape[1] > f.shape[0]:
                raise ModelError(f"mode-{n} rank {f.shape[1]} exceeds extent {f.shape[0]}")
            if np.max(np.abs(f.T @ f - np.eye(f.shape[1]))) > ORTHONORMAL_TOL:
                raise ModelError(f"factor {n} does not have orthonormal columns")
        object.__setattr__(self, 'core', core)
        object.__setattr__(self, 'factors', factors)

    @property
    def shape(self):
        return tuple(f.shape[0] for f in self.factors)

    @property
    def ranks(self):
        return self.core.shape


@dataclass(frozen=True, eq=False)
class BlockTerm:
    """One term G_s x1 A_s x2 B_s x3 C_s."""
    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        core = np.asarray(self.core, dtype=np.float64)
        if core.ndim == 2:
            core = core[:, :, np.newaxis]
        factors = tuple(_as_factor(f) for f in self.factors)
        if core.ndim != 3 or len(factors) != 3:
            raise ModelError("block terms are third-order: one 3-way core and three factors")
        for n, f in enumerate(factors):
            if f.shape[1] != core.shape[n]:
                raise ModelError(f"block factor {n} has {f.shape[1]} columns but core extent is {core.shape[n]}")
            if f.shape[1] > f.shape[0]:
                raise ModelError(f"block rank {f.shape[1]} exceeds extent {f.shape[0]} in mode {n}")
        object.__setattr__(self, 'core', core)
        object.__setattr__(self, 'factors', factors)

    @property
    def ranks(self):
        return self.core.shape


@dataclass(frozen=True, eq=False)
class BlockTermTensor:
    """
    Sum of S block terms. structure is 'll1' for rank-(L,L,1) terms
    (identity L x L x 1 cores, vector c_s), 'general' otherwise.
    """
    terms: tuple
    structure: str = 'general'

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ModelError("a block term decomposition needs at least one term")
        shape = tuple(f.shape[0] for f in terms[0].factors)
        for s, term in enumerate(terms):
            if tuple(f.shape[0] for f in term.factors) != shape:
                raise ModelError(f"term {s} does not match the tensor shape {shape}")
        if self.structure not in ('ll1', 'general'):
            raise ModelError(f"unknown block structure '{self.structure}'")
        if self.structure == 'll1':
            for s, term in enumerate(terms):
                L, M, N = term.ranks
                if N != 1 or L != M:
                    raise ModelError(f"term {s} with ranks {term.ranks} is not a rank-(L,L,1) term")
        object.__setattr__(self, 'terms', terms)

    @property
    def shape(self):
        return tuple(f.shape[0] for f in self.terms[0].factors)

    @property
    def block_ranks(self):
        return [term.ranks for term in self.terms]

    def stacked_factor(self, mode):
        """[F_1 ... F_S] for the given mode."""
        return np.hstack([term.factors[mode] for term in self.terms])


@singledispatch
def reconstruct(model):
    """Full dense tensor represented by a structured model."""
    raise ModelError(f"cannot reconstruct a {type(model).__name__}")


@reconstruct.register
def _(model: KruskalTensor):
    full = np.zeros(model.shape)
    for r in range(model.rank):
        full += outer_rank1([f[:, r] for f in model.factors], model.weights[r])
    return full


@reconstruct.register
def _(model: TuckerTensor):
    return multi_mode_product(model.core, model.factors)


@reconstruct.register
def _(model: BlockTermTensor):
    full = np.zeros(model.shape)
    for term in model.terms:
        full += multi_mode_product(term.core, term.factors)
    return full


def matricized_kruskal(model, mode):
    """B(n) diag(lambda) (khatri-rao chain of the other factors)^T."""
    chain = khatri_rao_chain(model.factors, skip=mode)
    return model.factors[mode] @ np.diag(model.weights) @ chain.T


def kruskal_from_matricized(model, mode):
    return fold(matricized_kruskal(model, mode), mode, model.shape)


@singledispatch
def parameter_count(model):
    raise ModelError(f"no parameter count for a {type(model).__name__}")


@parameter_count.register
def _(model: KruskalTensor):
    return int(model.rank + sum(f.size for f in model.factors))


@parameter_count.register
def _(model: TuckerTensor):
    return int(model.core.size + sum(f.size for f in model.factors))


@parameter_count.register
def _(model: BlockTermTensor):
    if model.structure == 'll1':
        # identity cores carry no parameters
        return int(sum(sum(f.size for f in term.factors) for term in model.terms))
    return int(sum(term.core.size + sum(f.size for f in term.factors) for term in model.terms))

"""
Synthetic hyperspectral cubes following the linear mixing model, and random structured
tensors with known ground truth.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import softmax
from skimage.filters import gaussian

from src.core.errors import ConfigurationError
from src.decomposition.utils import random_factor, random_orthonormal
from src.tensor.models import BlockTerm, BlockTermTensor, KruskalTensor, TuckerTensor, reconstruct

logger = logging.getLogger(__name__)

WAVELENGTH_RANGE_UM = (0.35, 2.5)
# spread of the standardized abundance fields before the softmax; larger is purer pixels
ABUNDANCE_CONTRAST = 2.0
NUM_ABSORPTION_BANDS = 3


@dataclass(frozen=True)
class SyntheticCubeSpec:
    dims: Sequence[int]  # (width, height, bands)
    num_endmembers: int
    noise_sigma: float = 0.0
    seed: int = 0
    abundance_smoothness: float = 2.0

    def __post_init__(self):
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ConfigurationError(f"dims must be three positive extents (width, height, bands), got {self.dims}")
        if self.num_endmembers < 1:
            raise ConfigurationError(f"need at least one endmember, got {self.num_endmembers}")
        if self.noise_sigma < 0:
            raise ConfigurationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.abundance_smoothness < 0:
            raise ConfigurationError(f"abundance_smoothness must be >= 0, got {self.abundance_smoothness}")
        object.__setattr__(self, 'dims', tuple(int(d) for d in self.dims))

    @property
    def width(self):
        return self.dims[0]

    @property
    def height(self):
        return self.dims[1]

    @property
    def bands(self):
        return self.dims[2]


class SyntheticCube(NamedTuple):
    cube: np.ndarray           # height x width x bands
    endmembers: np.ndarray     # bands x P
    abundances: np.ndarray     # height x width x P
    wavelengths_um: np.ndarray


def band_centers(bands, low=WAVELENGTH_RANGE_UM[0], high=WAVELENGTH_RANGE_UM[1]):
    return np.linspace(low, high, bands) if bands > 1 else np.array([low])


def endmember_spectra(wavelengths, count, rng):
    """
    Smooth positive reflectance-like curves: a sloped baseline minus a few
    Gaussian absorption features, clipped away from zero.
    """
    span = wavelengths[-1] - wavelengths[0] if wavelengths.size > 1 else 1.0
    x = (wavelengths - wavelengths[0]) / span
    spectra = np.empty((wavelengths.size, count))
    for p in range(count):
        curve = rng.uniform(0.3, 0.7) + rng.uniform(-0.2, 0.2) * x
        for _ in range(NUM_ABSORPTION_BANDS):
            center = rng.uniform(0.0, 1.0)
            width = rng.uniform(0.03, 0.15)
            curve -= rng.uniform(0.05, 0.25) * np.exp(-0.5 * ((x - center) / width) ** 2)
        spectra[:, p] = np.maximum(curve, 0.02)
    return spectra


def abundance_maps(height, width, count, smoothness, rng):
    """Spatially smoothed random fields pushed through a per-pixel softmax."""
    fields = rng.standard_normal((height, width, count))
    if smoothness > 0:
        fields = gaussian(fields, sigma=smoothness, channel_axis=-1, mode='reflect')
    std = fields.std(axis=(0, 1), keepdims=True)
    fields = (fields - fields.mean(axis=(0, 1), keepdims=True)) / np.where(std > 0, std, 1.0)
    abundances = softmax(ABUNDANCE_CONTRAST * fields, axis=-1)
    # softmax sums to one up to rounding; renormalize so the simplex constraint is tight
    return abundances / abundances.sum(axis=-1, keepdims=True)


def synth_cube(spec):
    """
    cube(y, x, :) = sum_p abundance(y, x, p) * endmember(:, p) + N(0, noise_sigma^2).
    Noiseless cubes have a mode-3 unfolding of rank at most P.
    """
    rng = np.random.default_rng(spec.seed)
    wavelengths = band_centers(spec.bands)
    endmembers = endmember_spectra(wavelengths, spec.num_endmembers, rng)
    abundances = abundance_maps(spec.height, spec.width, spec.num_endmembers, spec.abundance_smoothness, rng)

    cube = np.einsum('hwp,bp->hwb', abundances, endmembers)
    if spec.noise_sigma > 0:
        cube = cube + spec.noise_sigma * rng.standard_normal(cube.shape)
    logger.info(f'Synthesized {cube.shape} cube with {spec.num_endmembers} endmembers, noise {spec.noise_sigma}')
    return SyntheticCube(cube, endmembers, abundances, wavelengths)


def random_kruskal(shape, rank, rng, weights=None):
    """Gaussian factors with unit columns; weights default to one."""
    factors = [random_factor(d, rank, rng) for d in shape]
    return KruskalTensor(np.ones(rank) if weights is None else weights, tuple(factors))


def random_tucker(shape, ranks, rng):
    factors = tuple(random_orthonormal(d, r, rng) for d, r in zip(shape, ranks))
    return TuckerTensor(rng.standard_normal(tuple(ranks)), factors)


def random_ll1(shape, block_ranks, rng):
    I, J, K = shape
    terms = []
    for L in block_ranks:
        a = random_factor(I, L, rng)
        b = random_factor(J, L, rng)
        c = random_factor(K, 1, rng)
        terms.append(BlockTerm(np.eye(L), (a, b, c)))
    return BlockTermTensor(tuple(terms), structure='ll1')


def random_block_terms(shape, block_ranks, rng):
    """General BTD with Gaussian cores and orthonormal factors."""
    terms = []
    for ranks in block_ranks:
        factors = tuple(random_orthonormal(d, r, rng) for d, r in zip(shape, ranks))
        terms.append(BlockTerm(rng.standard_normal(tuple(ranks)), factors))
    return BlockTermTensor(tuple(terms), structure='general')


def synth_kruskal_cube(spec, rank: Optional[int] = None, scale=1.0):
    """
    Exact low-rank cube for oracle checks: a height x width x bands Kruskal tensor
    (rank defaults to the number of endmembers) plus optional noise.
    """
    rng = np.random.default_rng(spec.seed)
    rank = spec.num_endmembers if rank is None else rank
    truth = random_kruskal((spec.height, spec.width, spec.bands), rank, rng, weights=scale * np.ones(rank))
    cube = reconstruct(truth)
    if spec.noise_sigma > 0:
        cube = cube + spec.noise_sigma * rng.standard_normal(cube.shape)
    return cube, truth

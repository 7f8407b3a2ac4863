"""
Benchmark operations behind bench.py: decompose, compare, rank-estimate and synth.
Each takes a frozen yacs config and an optional output directory and returns the
dict it wrote as JSON.
"""
import itertools
import logging
import time
from os import path as osp
from typing import NamedTuple, Optional

import numpy as np
from tqdm import tqdm

from src.core.errors import ConfigurationError, NumericalFailureError
from src.core.metrics import column_congruence
from src.core.utils import create_logger, prepare_output_dir, save_dict_to_json, save_to_file
from src.dataset.cube_io import (load_cube, save_cube, write_matrix_csv, write_tensor_csv,
                                 write_trace_csv)
from src.dataset.synthetic import SyntheticCubeSpec, synth_cube, synth_kruskal_cube
from src.decomposition.btd import BtdOptions, btd_general, btd_ll1
from src.decomposition.cpd import CpdOptions, corcondia, cpd_als, cpd_compressed, factor_match_score
from src.decomposition.lmlra import LmlraOptions, energy_ranks, hooi
from src.tensor.models import BlockTermTensor, KruskalTensor, TuckerTensor, parameter_count
from src.bench.report import ComparisonReport, MethodRecord, format_table

logger = logging.getLogger(__name__)

METHODS = ('cpd', 'cpd-compressed', 'lmlra', 'btd-ll1', 'btd')
SYNTH_KINDS = ('mixing', 'kruskal')
# overfactored CPD fits show up as a vanishing component or as two components
# that coincide in all but at most one mode
DEGENERATE_WEIGHT_RATIO = 1e-6
DEGENERATE_CONGRUENCE = 0.99


class CubeSource(NamedTuple):
    cube: np.ndarray
    description: dict
    truth: Optional[KruskalTensor] = None


def synth_spec(cfg):
    return SyntheticCubeSpec(dims=(cfg.SYNTH.WIDTH, cfg.SYNTH.HEIGHT, cfg.SYNTH.BANDS),
                             num_endmembers=cfg.SYNTH.NUM_ENDMEMBERS,
                             noise_sigma=cfg.SYNTH.NOISE_SIGMA,
                             seed=cfg.SEED,
                             abundance_smoothness=cfg.SYNTH.SMOOTHNESS)


def load_source(cfg):
    """The cube named by INPUT.HEADER / INPUT.DATA, or a synthetic one built from SYNTH."""
    if cfg.INPUT.HEADER:
        if not cfg.INPUT.DATA:
            raise ConfigurationError("a cube header needs a data file (--data)")
        cube, _ = load_cube(cfg.INPUT.HEADER, cfg.INPUT.DATA)
        return CubeSource(cube, {'kind': 'file', 'header': cfg.INPUT.HEADER, 'shape': list(cube.shape)})

    if cfg.SYNTH.KIND not in SYNTH_KINDS:
        raise ConfigurationError(f"[CONFIG] synthetic kind '{cfg.SYNTH.KIND}' not valid, expected one of {SYNTH_KINDS}")
    spec = synth_spec(cfg)
    description = {'kind': cfg.SYNTH.KIND, 'shape': [spec.height, spec.width, spec.bands],
                   'num_endmembers': spec.num_endmembers, 'noise_sigma': spec.noise_sigma, 'seed': spec.seed}
    if cfg.SYNTH.KIND == 'kruskal':
        cube, truth = synth_kruskal_cube(spec)
        return CubeSource(cube, description, truth)
    return CubeSource(synth_cube(spec).cube, description)


# ---------------------------------------------------------------------------
# method options
# ---------------------------------------------------------------------------

def cpd_rank(cfg):
    return cfg.CPD.RANK if cfg.CPD.RANK > 0 else cfg.SYNTH.NUM_ENDMEMBERS


def cpd_options(cfg, compressed=False, rank=None):
    return CpdOptions(rank=cpd_rank(cfg) if rank is None else rank,
                      max_iterations=cfg.CPD.MAX_ITERS,
                      tolerance=cfg.CPD.TOL,
                      seed=cfg.SEED,
                      use_compression=compressed,
                      compression_ranks=list(cfg.CPD.COMPRESSION_RANKS) or None,
                      num_starts=cfg.CPD.NUM_STARTS,
                      refine=cfg.CPD.REFINE,
                      refine_max_iterations=cfg.CPD.REFINE_MAX_ITERS)


def lmlra_options(cfg, cube, ranks=None):
    if ranks is None:
        ranks = list(cfg.LMLRA.MLRANKS) or energy_ranks(cube, cfg.LMLRA.ENERGY)
    return LmlraOptions(multilinear_ranks=tuple(ranks), max_iterations=cfg.LMLRA.MAX_ITERS,
                        tolerance=cfg.LMLRA.TOL)


def btd_options(cfg, general, blocks=None):
    if blocks is None:
        blocks = list(cfg.BTD.BLOCKS)
    if not blocks:
        L = cfg.BTD.BLOCK_RANK
        blocks = [(L, L, L) if general else L] * cpd_rank(cfg)
    return BtdOptions(block_ranks=blocks, max_iterations=cfg.BTD.MAX_ITERS, tolerance=cfg.BTD.TOL,
                      seed=cfg.SEED, num_restarts=cfg.BTD.RESTARTS)


def method_options(method, cfg, cube, budget=None):
    """Options object for one method; `budget` holds ranks picked by match_budget."""
    budget = budget or {}
    if method == 'cpd':
        return cpd_options(cfg)
    if method == 'cpd-compressed':
        return cpd_options(cfg, compressed=True)
    if method == 'lmlra':
        return lmlra_options(cfg, cube, budget.get('lmlra'))
    if method == 'btd-ll1':
        return btd_options(cfg, general=False, blocks=budget.get('btd-ll1'))
    if method == 'btd':
        return btd_options(cfg, general=True, blocks=budget.get('btd'))
    raise ConfigurationError(f"[CONFIG] method '{method}' not valid, expected one of {METHODS}")


SOLVERS = {
    'cpd': cpd_als,
    'cpd-compressed': cpd_compressed,
    'lmlra': hooi,
    'btd-ll1': btd_ll1,
    'btd': btd_general,
}


def match_budget(shape, rank):
    """
    LMLRA ranks and BTD block ranks whose parameter count is nearest that of a rank-R CPD.
    Ties go to the smaller ranks.
    """
    target = rank * (1 + sum(shape))
    I, J, K = shape

    mlranks = min(itertools.product(*[range(1, min(d, 4 * rank) + 1) for d in shape]),
                  key=lambda r: (abs(int(np.prod(r)) + sum(d * x for d, x in zip(shape, r)) - target), sum(r), r))

    # rank blocks of (L, L, 1), identity cores are free
    ll1 = min((L for L in range(1, min(I, J) + 1)
               if rank * L <= min(J * K, I * K) and rank * L * L <= I * J * K),
              key=lambda L: (abs(rank * (L * (I + J) + K) - target), L), default=1)
    # rank blocks of (L, L, L)
    general = min((L for L in range(1, min(shape) + 1)
                   if rank * L <= min(J * K, I * K, I * J) and rank * L ** 3 <= I * J * K),
                  key=lambda L: (abs(rank * (L ** 3 + L * (I + J + K)) - target), L), default=1)
    budget = {'lmlra': list(mlranks), 'btd-ll1': [ll1] * rank, 'btd': [[general] * 3] * rank}
    logger.info(f'[BUDGET] CPD rank {rank} has {target} parameters; matched {budget}')
    return budget


# ---------------------------------------------------------------------------
# model output
# ---------------------------------------------------------------------------

def write_model(model, method, out_dir):
    """Factors as <method>_factor<mode>.csv (1-based modes), cores in the CSV tensor format."""
    if isinstance(model, BlockTermTensor):
        factors = [model.stacked_factor(n) for n in range(3)]
    else:
        factors = model.factors
    for n, f in enumerate(factors):
        write_matrix_csv(f, osp.join(out_dir, f'{method}_factor{n + 1}.csv'))

    if isinstance(model, KruskalTensor):
        write_matrix_csv(model.weights[np.newaxis, :], osp.join(out_dir, f'{method}_weights.csv'))
    elif isinstance(model, TuckerTensor):
        write_tensor_csv(model.core, osp.join(out_dir, f'{method}_core.csv'))
    else:
        for s, term in enumerate(model.terms):
            write_tensor_csv(term.core, osp.join(out_dir, f'{method}_core{s + 1}.csv'))


def run_method(method, cube, cfg, budget=None):
    """Fit one method. Returns (model, trace, MethodRecord)."""
    opts = method_options(method, cfg, cube, budget)
    tic = time.perf_counter()
    model, trace = SOLVERS[method](cube, opts)
    record = MethodRecord.from_trace(method, trace, parameter_count(model), time.perf_counter() - tic)
    return model, trace, record


def _setup(cfg, out_dir, phase):
    logdir = prepare_output_dir(cfg, out_dir)
    create_logger(logdir, phase=phase, level=getattr(logging, cfg.LOG_LEVEL.upper(), logging.INFO))
    return logdir


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def run_decompose(cfg, out_dir=None):
    """
    Fit cfg.METHOD to the cube and write the model, trace_<method>.csv and summary.json.
    """
    if cfg.METHOD not in METHODS:
        raise ConfigurationError(f"[CONFIG] method '{cfg.METHOD}' not valid, expected one of {METHODS}")
    logdir = _setup(cfg, out_dir, 'decompose')
    source = load_source(cfg)

    model, trace, record = run_method(cfg.METHOD, source.cube, cfg)
    if cfg.DETERMINISTIC:
        record.wall_time = 0.0
        record.stage_times = {k: 0.0 for k in record.stage_times}

    write_model(model, cfg.METHOD, logdir)
    write_trace_csv(trace.residuals, osp.join(logdir, f'trace_{cfg.METHOD}.csv'))

    summary = record.to_dict()
    summary['source'] = source.description
    if source.truth is not None and isinstance(model, KruskalTensor) and model.rank == source.truth.rank:
        summary['factor_match_score'] = factor_match_score(model, source.truth)
    save_dict_to_json(summary, osp.join(logdir, 'summary.json'))

    logger.info('[{}] Relative error : {:.6e} ({} iterations, {})'.format(
        cfg.METHOD, record.relative_error, record.iterations, record.stop_reason))
    return summary


def run_compare(cfg, out_dir=None):
    """
    Run every method in COMPARE.METHODS on one cube and write report.json, table.txt and
    one trace CSV per method. A method that fails numerically is reported as failed;
    if all fail, NumericalFailureError is raised after the report is written.
    """
    methods = list(cfg.COMPARE.METHODS)
    if len(methods) < 2 or len(set(methods)) != len(methods):
        raise ConfigurationError(f"[CONFIG] compare needs at least two distinct methods, got {methods}")
    for method in methods:
        if method not in METHODS:
            raise ConfigurationError(f"[CONFIG] method '{method}' not valid, expected one of {METHODS}")

    logdir = _setup(cfg, out_dir, 'compare')
    source = load_source(cfg)
    budget = None
    if cfg.COMPARE.MATCH_BUDGET:
        if source.cube.ndim != 3:
            raise ConfigurationError("budget matching is defined for third-order cubes")
        budget = match_budget(source.cube.shape, cpd_rank(cfg))

    records, traces = [], {}
    for method in tqdm(methods, desc='methods'):
        try:
            model, trace, record = run_method(method, source.cube, cfg, budget)
        except NumericalFailureError as exc:
            logger.error(f'[{method}] failed: {exc}')
            records.append(MethodRecord.failure(method, exc))
            traces[method] = list(exc.trace.residuals) if exc.trace is not None else []
            continue
        write_model(model, method, logdir)
        write_trace_csv(trace.residuals, osp.join(logdir, f'trace_{method}.csv'))
        records.append(record)
        traces[method] = list(trace.residuals)

    report = ComparisonReport(records, traces)
    if cfg.DETERMINISTIC:
        report.strip_timings()
    save_to_file(report.to_json(), osp.join(logdir, 'report.json'))
    table = format_table(report)
    save_to_file(table, osp.join(logdir, 'table.txt'))
    logger.info('\n' + table)
    logger.info(f'[COMPARE] Best method : {report.best_method} (by upper residual bound: {report.best_by_upper_bound})')

    if report.all_failed:
        raise NumericalFailureError(f"all methods failed: {methods}")
    return report.to_dict()


def is_degenerate(model):
    magnitudes = np.abs(model.weights)
    if magnitudes.min() < DEGENERATE_WEIGHT_RATIO * magnitudes.max():
        return True
    if model.rank == 1:
        return False
    coincide = sum((column_congruence(f, f) > DEGENERATE_CONGRUENCE).astype(int) for f in model.factors)
    np.fill_diagonal(coincide, 0)
    return bool(np.any(coincide >= model.ndim - 1))


def run_rank_estimate(cfg, out_dir=None):
    """
    CPD fits for every R in [RANK.MIN, RANK.MAX] scored by CORCONDIA. The suggested R is the
    largest one scoring at least RANK.THRESHOLD whose fit is neither degenerate nor regularized.
    """
    if not 1 <= cfg.RANK.MIN <= cfg.RANK.MAX:
        raise ConfigurationError(f"[CONFIG] rank range [{cfg.RANK.MIN}, {cfg.RANK.MAX}] is empty or below 1")
    logdir = _setup(cfg, out_dir, 'rank_estimate')
    source = load_source(cfg)

    entries = []
    for rank in tqdm(range(cfg.RANK.MIN, cfg.RANK.MAX + 1), desc='ranks'):
        model, trace = cpd_als(source.cube, cpd_options(cfg, rank=rank))
        result = corcondia(source.cube, model)
        degenerate = is_degenerate(model)
        entries.append({'rank': rank, 'score': result.score, 'regularized': result.regularized,
                        'degenerate': degenerate, 'relative_error': float(trace.final_relative_error),
                        'iterations': trace.iterations})
        logger.info('[CORCONDIA R={}] Score : {:.3f}{}'.format(rank, result.score, ' (degenerate)' if degenerate else ''))

    eligible = [e['rank'] for e in entries
                if e['score'] >= cfg.RANK.THRESHOLD and not e['degenerate'] and not e['regularized']]
    output = {'scores': entries, 'threshold': float(cfg.RANK.THRESHOLD),
              'suggested_rank': max(eligible) if eligible else None, 'source': source.description}
    if not eligible:
        logger.warning(f'[CORCONDIA] no rank reached the threshold {cfg.RANK.THRESHOLD}')
    save_dict_to_json(output, osp.join(logdir, 'rank_estimate.json'))
    return output


def run_synth(cfg, out_dir=None):
    """
    Write a synthetic cube (cube.json + cube.bsq) and its ground truth: endmembers.csv and
    abundances.csv for mixing cubes, truth_factor<mode>.csv and truth_weights.csv for Kruskal cubes.
    """
    logdir = _setup(cfg, out_dir, 'synth')
    if cfg.SYNTH.KIND not in SYNTH_KINDS:
        raise ConfigurationError(f"[CONFIG] synthetic kind '{cfg.SYNTH.KIND}' not valid, expected one of {SYNTH_KINDS}")
    spec = synth_spec(cfg)
    files = {'header': osp.join(logdir, 'cube.json'), 'data': osp.join(logdir, 'cube.bsq')}

    if cfg.SYNTH.KIND == 'mixing':
        generated = synth_cube(spec)
        save_cube(generated.cube, files['header'], files['data'], wavelengths_um=generated.wavelengths_um)
        files['endmembers'] = osp.join(logdir, 'endmembers.csv')
        files['abundances'] = osp.join(logdir, 'abundances.csv')
        write_matrix_csv(generated.endmembers, files['endmembers'])
        write_tensor_csv(generated.abundances, files['abundances'])
    else:
        cube, truth = synth_kruskal_cube(spec)
        save_cube(cube, files['header'], files['data'])
        write_model(truth, 'truth', logdir)
        files['truth'] = [osp.join(logdir, f'truth_factor{n + 1}.csv') for n in range(3)]

    save_dict_to_json(files, osp.join(logdir, 'synth.json'))
    logger.info(f'[SYNTH] Wrote {spec.height}x{spec.width}x{spec.bands} cube to {files["data"]}')
    return files


COMMANDS = {
    'decompose': run_decompose,
    'compare': run_compare,
    'rank-estimate': run_rank_estimate,
    'synth': run_synth,
}

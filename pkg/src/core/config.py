import json
import logging

import yaml
from yacs.config import CfgNode as CN

from src.core.errors import ConfigurationError

logger = logging.getLogger(__name__)

# High-level
cfg = CN()
cfg.OUTPUT_DIR = 'results'
cfg.EXP_NAME = 'default'
cfg.SEED = 0
cfg.DETERMINISTIC = False
cfg.LOG_LEVEL = 'INFO'
cfg.METHOD = 'cpd'

# Input cube (file source); SYNTH is used when HEADER is empty
cfg.INPUT = CN()
cfg.INPUT.HEADER = ''
cfg.INPUT.DATA = ''

# Synthetic cube
cfg.SYNTH = CN()
cfg.SYNTH.KIND = 'mixing'  # 'mixing' (linear mixing model) or 'kruskal' (exact CP rank P)
cfg.SYNTH.WIDTH = 16
cfg.SYNTH.HEIGHT = 16
cfg.SYNTH.BANDS = 32
cfg.SYNTH.NUM_ENDMEMBERS = 3
cfg.SYNTH.NOISE_SIGMA = 0.0
cfg.SYNTH.SMOOTHNESS = 2.0

# Canonical polyadic decomposition
cfg.CPD = CN()
cfg.CPD.RANK = 0  # 0: number of synthetic endmembers
cfg.CPD.MAX_ITERS = 500
cfg.CPD.TOL = 1e-8
cfg.CPD.NUM_STARTS = 1
cfg.CPD.COMPRESSION_RANKS = []
cfg.CPD.REFINE = True
cfg.CPD.REFINE_MAX_ITERS = 100

# Low multilinear rank approximation
cfg.LMLRA = CN()
cfg.LMLRA.MLRANKS = []  # empty: energy rule
cfg.LMLRA.ENERGY = 0.95
cfg.LMLRA.MAX_ITERS = 100
cfg.LMLRA.TOL = 1e-10

# Block term decomposition
cfg.BTD = CN()
cfg.BTD.BLOCKS = []  # integers L_s or triples (L_s, M_s, N_s); empty: CPD rank blocks of BLOCK_RANK
cfg.BTD.BLOCK_RANK = 2
cfg.BTD.MAX_ITERS = 500
cfg.BTD.TOL = 1e-8
cfg.BTD.RESTARTS = 3

# Comparison
cfg.COMPARE = CN()
cfg.COMPARE.METHODS = ['cpd', 'lmlra', 'btd-ll1']
cfg.COMPARE.MATCH_BUDGET = False

# Rank estimation
cfg.RANK = CN()
cfg.RANK.MIN = 1
cfg.RANK.MAX = 5
cfg.RANK.THRESHOLD = 90.0


def get_cfg_defaults():
    """Get a yacs CfgNode object with default values for the benchmark."""
    # Return a clone so that the defaults will not be altered
    return cfg.clone()


def update_cfg(cfg_file, cfg=None):
    """
    Update configs with new values from a .yaml or .json file.
    JSON is read with the json module since YAML 1.1 reads exponent floats like 1e-08 as strings.
    """
    cfg = get_cfg_defaults() if cfg is None else cfg.clone()
    try:
        if cfg_file.endswith('.json'):
            with open(cfg_file, 'r') as f:
                cfg.merge_from_other_cfg(CN(json.load(f)))
        else:
            cfg.merge_from_file(cfg_file)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {cfg_file}: {exc}") from exc
    except (KeyError, ValueError, AssertionError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"invalid config {cfg_file}: {exc}") from exc
    return cfg.clone()


def apply_overrides(cfg, overrides):
    """
    Merge a flat [KEY, value, KEY, value, ...] list, values already typed.
    """
    cfg = cfg.clone()
    try:
        cfg.merge_from_list(overrides)
    except (KeyError, ValueError, AssertionError) as exc:
        raise ConfigurationError(f"invalid override: {exc}") from exc
    cfg.freeze()
    return cfg
